from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterator, List, Optional, Tuple

from models.agents import MatchDecision
from models.corpus import EligibilityLabel


class Provenance(str, Enum):
    ORIGINAL_PASS_THROUGH = 'original_pass_through'
    AUGMENTED_APPROVED = 'augmented_approved'
    FALLBACK_AFTER_REJECTION = 'fallback_after_rejection'


class Stage(str, Enum):
    PROBE = 'probe'
    NAVIGATE = 'navigate'
    AUGMENT = 'augment'
    SUPERVISE = 'supervise'
    MATCH = 'match'


@dataclass(frozen=True)
class StageOutcome:
    stage: Stage
    outcome: str
    detail: str = ''
    revision: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        data = {'stage': self.stage.value, 'outcome': self.outcome, 'detail': self.detail}
        if self.revision is not None:
            data['revision'] = self.revision
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'StageOutcome':
        return cls(Stage(data['stage']), data['outcome'], data.get('detail', ''), data.get('revision'))


@dataclass(frozen=True)
class FinalCriterion:
    """The criterion text the matcher sees, with how it was produced"""
    criterion_id: str
    text: str
    provenance: Provenance
    chain: Tuple[StageOutcome, ...] = ()

    def __post_init__(self):
        if self.provenance is Provenance.AUGMENTED_APPROVED:
            if not self.chain or self.chain[-1].stage is not Stage.SUPERVISE or self.chain[-1].outcome != 'approved':
                raise ValueError(f'{self.criterion_id}: approved augmentation must end in an approved supervision')

    def to_dict(self) -> Dict[str, Any]:
        return {
            'criterion_id': self.criterion_id,
            'text': self.text,
            'provenance': self.provenance.value,
            'chain': [outcome.to_dict() for outcome in self.chain]
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'FinalCriterion':
        return cls(
            criterion_id=data['criterion_id'],
            text=data['text'],
            provenance=Provenance(data['provenance']),
            chain=tuple(StageOutcome.from_dict(item) for item in data.get('chain', []))
        )


@dataclass(frozen=True)
class AuditEvent:
    timestamp: int
    stage: Stage
    criterion_id: str
    request_digest: str
    outcome: str
    patient_id: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'timestamp': self.timestamp,
            'stage': self.stage.value,
            'criterion_id': self.criterion_id,
            'patient_id': self.patient_id,
            'request_digest': self.request_digest,
            'outcome': self.outcome
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'AuditEvent':
        return cls(
            timestamp=int(data['timestamp']),
            stage=Stage(data['stage']),
            criterion_id=data['criterion_id'],
            request_digest=data['request_digest'],
            outcome=data['outcome'],
            patient_id=data.get('patient_id')
        )


@dataclass(frozen=True)
class PendingEvent:
    """An audit event before the log assigns its counter"""
    stage: Stage
    criterion_id: str
    request_digest: str
    outcome: str
    patient_id: Optional[str] = None


@dataclass(frozen=True)
class RunManifest:
    config: Dict[str, Any]
    catalog_variant: str
    corpus_digest: str
    strategy: str
    model_id: str
    backend: str
    started_at: str
    artifacts: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'config': self.config,
            'catalog_variant': self.catalog_variant,
            'corpus_digest': self.corpus_digest,
            'strategy': self.strategy,
            'model_id': self.model_id,
            'backend': self.backend,
            'started_at': self.started_at,
            'artifacts': dict(self.artifacts)
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunManifest':
        return cls(
            config=data.get('config', {}),
            catalog_variant=data['catalog_variant'],
            corpus_digest=data['corpus_digest'],
            strategy=data['strategy'],
            model_id=data['model_id'],
            backend=data['backend'],
            started_at=data.get('started_at', ''),
            artifacts=data.get('artifacts', {})
        )


@dataclass(frozen=True)
class DecisionSet:
    """MatchDecisions sorted by (patient_id, criterion_id)"""
    decisions: Tuple[MatchDecision, ...]

    @classmethod
    def from_unordered(cls, decisions) -> 'DecisionSet':
        return cls(tuple(sorted(decisions, key=MatchDecision.sort_key)))

    def __len__(self) -> int:
        return len(self.decisions)

    def __iter__(self) -> Iterator[MatchDecision]:
        return iter(self.decisions)

    def label_table(self) -> Dict[str, Dict[str, EligibilityLabel]]:
        """patient_id -> criterion_id -> predicted label"""
        table: Dict[str, Dict[str, EligibilityLabel]] = {}
        for decision in self.decisions:
            table.setdefault(decision.patient_id, {})[decision.criterion_id] = decision.label
        return table

    def digests(self) -> List[str]:
        return [decision.transcript_digest for decision in self.decisions]
