"""
Criterion-level and trial-level scoring
"""
import logging
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from models import (
    ConfusionMatrix,
    CriteriaCatalog,
    DecisionSet,
    EligibilityLabel,
    EvaluationReport,
    GoldLabels,
    MetricSet,
    TrialSpec
)
from models.evaluation import METRIC_NAMES
from utils.error_handling import EmptyMatrixError, EmptyReportError, EmptyTrialError, IncompleteDecisionsError

logger = logging.getLogger(__name__)

MET = EligibilityLabel.MET

GoldTable = Mapping[str, GoldLabels]
LabelMap = Mapping[str, EligibilityLabel]


def _gold_label(gold: GoldTable, patient_id: str, criterion_id: str) -> EligibilityLabel:
    labels = gold[patient_id]
    if criterion_id not in labels:
        raise IncompleteDecisionsError(patient_id, criterion_id)
    return labels[criterion_id]


def confusion(decisions: DecisionSet, gold: GoldTable, criterion_id: str) -> ConfusionMatrix:
    """
    Count one criterion's predictions against gold, Met as the positive class

    Raises:
        IncompleteDecisionsError: a patient in gold has no decision for the criterion
    """
    predicted = decisions.label_table()
    tp = fp = fn = tn = 0
    for patient_id in sorted(gold):
        prediction = predicted.get(patient_id, {}).get(criterion_id)
        if prediction is None:
            raise IncompleteDecisionsError(patient_id, criterion_id)
        truth = _gold_label(gold, patient_id, criterion_id)
        if prediction is MET:
            if truth is MET:
                tp += 1
            else:
                fp += 1
        elif truth is MET:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, fn, tn)


def _ratio(numerator: int, denominator: int) -> Optional[float]:
    return numerator / denominator if denominator else None


def metric_set(cm: ConfusionMatrix) -> MetricSet:
    """
    Accuracy, precision, recall and F1; None where a metric is undefined

    F1 is undefined when precision or recall is undefined or both are zero.
    """
    if cm.total == 0:
        raise EmptyMatrixError()
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    f1 = None
    if precision is not None and recall is not None and precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    return MetricSet(accuracy=(cm.tp + cm.tn) / cm.total, precision=precision, recall=recall, f1=f1)


def macro_average(sets: Sequence[MetricSet]) -> MetricSet:
    """Per-metric mean over the entries where the metric is defined"""
    if not sets:
        raise EmptyReportError()
    averaged: Dict[str, Optional[float]] = {}
    for name in METRIC_NAMES:
        values = [value for value in (s.get(name) for s in sets) if value is not None]
        averaged[name] = sum(values) / len(values) if values else None
    return MetricSet(**averaged)


def met_counts(gold: GoldTable, catalog: CriteriaCatalog) -> Dict[str, Tuple[int, int]]:
    """criterion_id -> (met, not met) gold counts, in catalog order"""
    counts = {}
    for criterion_id in catalog.ids:
        met = sum(1 for patient_id in gold if _gold_label(gold, patient_id, criterion_id) is MET)
        counts[criterion_id] = (met, len(gold) - met)
    return counts


def synthesize_trial(gold: GoldTable, threshold: int, catalog: CriteriaCatalog) -> TrialSpec:
    """
    Select the criteria with at least threshold gold-met patients

    Args:
        gold: patient_id -> GoldLabels
        threshold: Minimum met count
        catalog: Catalog giving the criterion order

    Returns:
        TrialSpec
    """
    if threshold < 1:
        raise ValueError('threshold must be positive')
    counts = met_counts(gold, catalog)
    selected = tuple(cid for cid in catalog.ids if counts[cid][0] >= threshold)
    if not selected:
        raise EmptyTrialError(threshold)
    logger.info(f"Trial at threshold {threshold} selects {len(selected)} criteria: {', '.join(selected)}")
    return TrialSpec(selected, threshold)


def trial_eligibility(labels: LabelMap, spec: TrialSpec, patient_id: str = '') -> bool:
    """True iff every selected criterion is Met"""
    for criterion_id in spec.selected:
        if criterion_id not in labels:
            raise IncompleteDecisionsError(patient_id or 'unknown', criterion_id)
    return all(labels[criterion_id] is MET for criterion_id in spec.selected)


def trial_confusion(decisions: DecisionSet, gold: GoldTable, spec: TrialSpec) -> ConfusionMatrix:
    """Patient-level confusion of predicted against gold trial eligibility"""
    predicted = decisions.label_table()
    tp = fp = fn = tn = 0
    for patient_id in sorted(gold):
        guess = trial_eligibility(predicted.get(patient_id, {}), spec, patient_id)
        truth = trial_eligibility(gold[patient_id].labels, spec, patient_id)
        tp += guess and truth
        fp += guess and not truth
        fn += truth and not guess
        tn += not guess and not truth
    return ConfusionMatrix(int(tp), int(fp), int(fn), int(tn))


def evaluate(decisions: DecisionSet, gold: GoldTable, catalog: CriteriaCatalog,
             trial_threshold: Optional[int] = None, label: str = '') -> EvaluationReport:
    """
    Score a decision set

    Args:
        decisions: Predicted labels
        gold: patient_id -> GoldLabels
        catalog: Criteria to score, in report order
        trial_threshold: Build and score the synthetic trial at this threshold
        label: Name shown for this run in comparison reports

    Returns:
        EvaluationReport
    """
    confusions = {cid: confusion(decisions, gold, cid) for cid in catalog.ids}
    per_criterion = {cid: metric_set(cm) for cid, cm in confusions.items()}
    report_kwargs = {}

    if trial_threshold is not None:
        spec = synthesize_trial(gold, trial_threshold, catalog)
        cm = trial_confusion(decisions, gold, spec)
        report_kwargs = {'trial': metric_set(cm), 'trial_spec': spec, 'trial_confusion': cm}

    return EvaluationReport(
        per_criterion=per_criterion,
        macro=macro_average(list(per_criterion.values())),
        confusions=confusions,
        counts=met_counts(gold, catalog),
        label=label,
        **report_kwargs
    )


def label_runs(labels: List[str]) -> List[str]:
    """Make report column labels unique by suffixing repeats (#2, #3, ...)"""
    seen: Dict[str, int] = {}
    unique = []
    for label in labels:
        seen[label] = seen.get(label, 0) + 1
        unique.append(label if seen[label] == 1 else f'{label} #{seen[label]}')
    return unique
