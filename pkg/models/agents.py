from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, FrozenSet, Tuple

from models.corpus import CriterionVariant, EligibilityLabel


class ProbeDecision(str, Enum):
    SUFFICIENT = 'sufficient'
    NEEDS_AUGMENTATION = 'needs_augmentation'


class AugmentationRoute(str, Enum):
    SELF_AUGMENT = 'self'
    RETRIEVAL = 'retrieval'
    ONLINE_SEARCH = 'search'


class SupervisionDecision(str, Enum):
    APPROVED = 'approved'
    REJECTED = 'rejected'


class PromptStrategy(str, Enum):
    ZERO_SHOT = 'zeroshot'
    COT = 'cot'
    MAKA = 'maka'

    @property
    def display_name(self) -> str:
        return {'zeroshot': 'Zero-shot', 'cot': 'CoT', 'maka': 'MAKA'}[self.value]

    @property
    def allowed_variants(self) -> FrozenSet[CriterionVariant]:
        """Catalog variants a strategy may be run against"""
        if self is PromptStrategy.ZERO_SHOT:
            return frozenset({CriterionVariant.REDEFINED})
        if self is PromptStrategy.COT:
            return frozenset({CriterionVariant.ORIGINAL})
        return frozenset({CriterionVariant.ORIGINAL, CriterionVariant.REDEFINED})


@dataclass(frozen=True)
class ProbeVerdict:
    decision: ProbeDecision
    rationale: str = ''
    parse_ok: bool = True
    transcript: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.decision is ProbeDecision.NEEDS_AUGMENTATION and not self.rationale.strip():
            raise ValueError('NeedsAugmentation verdicts carry a rationale')


@dataclass(frozen=True)
class RouteDecision:
    route: AugmentationRoute
    parse_ok: bool = True
    transcript: Tuple[str, ...] = ()


@dataclass(frozen=True)
class AugmentedCriterion:
    criterion_id: str
    criteria_line: str
    explanation: str
    route: AugmentationRoute
    revision: int = 0
    evidence: Tuple[str, ...] = ()
    transcript: Tuple[str, ...] = ()

    def __post_init__(self):
        if not self.criteria_line.strip() or not self.explanation.strip():
            raise ValueError('Augmented criteria carry both a criteria line and an explanation')
        if self.revision < 0:
            raise ValueError('revision must be non-negative')

    def render(self) -> str:
        return f'Criteria: {self.criteria_line}\nExplanation: {self.explanation}'

    def to_dict(self) -> Dict[str, Any]:
        return {
            'criterion_id': self.criterion_id,
            'criteria_line': self.criteria_line,
            'explanation': self.explanation,
            'route': self.route.value,
            'revision': self.revision,
            'evidence': list(self.evidence)
        }


@dataclass(frozen=True)
class SupervisionVerdict:
    decision: SupervisionDecision
    reasons: Tuple[str, ...] = ()
    parse_ok: bool = True
    transcript: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.decision is SupervisionDecision.REJECTED and not self.reasons:
            raise ValueError('Rejected verdicts carry at least one reason')

    @property
    def approved(self) -> bool:
        return self.decision is SupervisionDecision.APPROVED


@dataclass(frozen=True)
class MatchDecision:
    patient_id: str
    criterion_id: str
    label: EligibilityLabel
    rationale: str
    parse_ok: bool
    transcript_digest: str
    transcript: Tuple[str, ...] = field(default=(), compare=False)

    def sort_key(self) -> Tuple[str, str]:
        return (self.patient_id, self.criterion_id)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'patient_id': self.patient_id,
            'criterion_id': self.criterion_id,
            'label': self.label.value,
            'rationale': self.rationale,
            'parse_ok': self.parse_ok,
            'transcript_digest': self.transcript_digest
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MatchDecision':
        label = EligibilityLabel.from_attribute(data['label'])
        if label is None:
            raise ValueError(f"unknown label {data['label']!r}")
        return cls(
            patient_id=data['patient_id'],
            criterion_id=data['criterion_id'],
            label=label,
            rationale=data.get('rationale', ''),
            parse_ok=bool(data.get('parse_ok', True)),
            transcript_digest=data.get('transcript_digest', '')
        )
