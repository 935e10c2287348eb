from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

METRIC_NAMES = ('accuracy', 'precision', 'recall', 'f1')


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with Met as the positive class"""
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError('confusion counts must be non-negative')

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> Dict[str, int]:
        return {'tp': self.tp, 'fp': self.fp, 'fn': self.fn, 'tn': self.tn}


@dataclass(frozen=True)
class MetricSet:
    """None marks an undefined metric (rendered '-')"""
    accuracy: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]

    def get(self, name: str) -> Optional[float]:
        return getattr(self, name)

    def to_dict(self) -> Dict[str, Optional[float]]:
        return {name: self.get(name) for name in METRIC_NAMES}


@dataclass(frozen=True)
class TrialSpec:
    selected: Tuple[str, ...]
    threshold: int

    def __post_init__(self):
        if not self.selected:
            raise ValueError('a trial selects at least one criterion')
        if self.threshold < 1:
            raise ValueError('threshold must be positive')

    def to_dict(self) -> Dict[str, Any]:
        return {'selected': list(self.selected), 'threshold': self.threshold}


@dataclass(frozen=True)
class EvaluationReport:
    per_criterion: Dict[str, MetricSet]
    macro: MetricSet
    confusions: Dict[str, ConfusionMatrix]
    counts: Dict[str, Tuple[int, int]]
    trial: Optional[MetricSet] = None
    trial_spec: Optional[TrialSpec] = None
    trial_confusion: Optional[ConfusionMatrix] = None
    label: str = ''

    def to_dict(self) -> Dict[str, Any]:
        return {
            'label': self.label,
            'per_criterion': {cid: metrics.to_dict() for cid, metrics in self.per_criterion.items()},
            'confusions': {cid: cm.to_dict() for cid, cm in self.confusions.items()},
            'macro': self.macro.to_dict(),
            'counts': {cid: {'met': met, 'not_met': not_met} for cid, (met, not_met) in self.counts.items()},
            'trial': self.trial.to_dict() if self.trial else None,
            'trial_spec': self.trial_spec.to_dict() if self.trial_spec else None,
            'trial_confusion': self.trial_confusion.to_dict() if self.trial_confusion else None
        }
