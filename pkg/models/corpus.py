import hashlib
import re
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

CRITERION_ID_PATTERN = re.compile(r'^[A-Z0-9][A-Z0-9-]*$')

UNKNOWN_DATE = 'Unknown'


class EligibilityLabel(str, Enum):
    MET = 'met'
    NOT_MET = 'not met'

    @classmethod
    def from_attribute(cls, value: str) -> Optional['EligibilityLabel']:
        """Map an exact n2c2 `met` attribute value, or None when it is not one"""
        for label in cls:
            if label.value == value:
                return label
        return None

    def display(self) -> str:
        return 'MET' if self is EligibilityLabel.MET else 'NOT MET'


class CriterionVariant(str, Enum):
    ORIGINAL = 'original'
    REDEFINED = 'redefined'
    AUGMENTED = 'augmented'


@dataclass(frozen=True)
class ClinicalNote:
    sequence_index: int
    record_date: Optional[date]
    text: str

    def to_dict(self):
        return {
            'sequence_index': self.sequence_index,
            'record_date': self.record_date.isoformat() if self.record_date else UNKNOWN_DATE,
            'text': self.text
        }

    def token_count(self) -> int:
        return len(self.text.split())


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    notes: Tuple[ClinicalNote, ...]
    raw_text: str

    def __post_init__(self):
        if not self.notes:
            raise ValueError(f'Patient {self.patient_id} has no notes')
        if '/' in self.patient_id or '\\' in self.patient_id:
            raise ValueError(f'Patient id {self.patient_id!r} contains a path separator')

    def token_count(self) -> int:
        return len(self.raw_text.split())

    def to_dict(self):
        return {
            'patient_id': self.patient_id,
            'notes': [note.to_dict() for note in self.notes]
        }


@dataclass(frozen=True)
class GoldLabels:
    labels: Mapping[str, EligibilityLabel]

    def __getitem__(self, criterion_id: str) -> EligibilityLabel:
        return self.labels[criterion_id]

    def __contains__(self, criterion_id: str) -> bool:
        return criterion_id in self.labels

    def to_dict(self) -> Dict[str, str]:
        return {criterion_id: label.value for criterion_id, label in self.labels.items()}


@dataclass(frozen=True)
class Criterion:
    id: str
    definition: str
    variant: CriterionVariant

    def __post_init__(self):
        if not CRITERION_ID_PATTERN.match(self.id):
            raise ValueError(f'Criterion id {self.id!r} must be upper-case alphanumerics and hyphens')
        if not self.definition.strip():
            raise ValueError(f'Criterion {self.id} has an empty definition')

    def to_dict(self):
        return {'id': self.id, 'definition': self.definition}


@dataclass(frozen=True)
class CriteriaCatalog:
    criteria: Tuple[Criterion, ...]
    variant: CriterionVariant

    def __len__(self) -> int:
        return len(self.criteria)

    def __iter__(self) -> Iterator[Criterion]:
        return iter(self.criteria)

    @property
    def ids(self) -> List[str]:
        return [criterion.id for criterion in self.criteria]

    def get(self, criterion_id: str) -> Criterion:
        for criterion in self.criteria:
            if criterion.id == criterion_id:
                return criterion
        raise KeyError(criterion_id)


@dataclass(frozen=True)
class CorpusEntry:
    patient: PatientRecord
    gold: GoldLabels


@dataclass(frozen=True)
class Corpus:
    """Parsed patients with their gold labels, in file-name order"""
    entries: Tuple[CorpusEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[CorpusEntry]:
        return iter(self.entries)

    @property
    def patients(self) -> List[PatientRecord]:
        return [entry.patient for entry in self.entries]

    @property
    def gold(self) -> Dict[str, GoldLabels]:
        return {entry.patient.patient_id: entry.gold for entry in self.entries}

    def digest(self) -> str:
        """SHA-256 over patient ids, raw text and gold labels in corpus order"""
        sha = hashlib.sha256()
        for entry in self.entries:
            for part in (entry.patient.patient_id, entry.patient.raw_text):
                encoded = part.encode('utf-8')
                sha.update(f'{len(encoded)}:'.encode('ascii'))
                sha.update(encoded)
            for criterion_id in sorted(entry.gold.labels):
                sha.update(f'{criterion_id}={entry.gold.labels[criterion_id].value};'.encode('utf-8'))
        return sha.hexdigest()


@dataclass(frozen=True)
class CorpusStats:
    patient_count: int
    pair_count: int
    total_tokens: int
    mean_tokens_per_patient: float
    notes_per_patient: Dict[int, int] = field(default_factory=dict)

    def to_dict(self):
        return {
            'patient_count': self.patient_count,
            'pair_count': self.pair_count,
            'total_tokens': self.total_tokens,
            'mean_tokens_per_patient': self.mean_tokens_per_patient,
            'notes_per_patient': {str(k): v for k, v in sorted(self.notes_per_patient.items())}
        }
