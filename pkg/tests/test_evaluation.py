import csv
import io
import json
import random

import pytest

from models import (
    ConfusionMatrix,
    CriteriaCatalog,
    Criterion,
    CriterionVariant,
    DecisionSet,
    EligibilityLabel,
    GoldLabels,
    MatchDecision,
    MetricSet,
    TrialSpec
)
from services.evaluation import (
    confusion,
    evaluate,
    label_runs,
    macro_average,
    met_counts,
    metric_set,
    synthesize_trial,
    trial_confusion,
    trial_eligibility
)
from utils.corpus_parser import load_corpus
from utils.error_handling import EmptyMatrixError, EmptyReportError, EmptyTrialError, IncompleteDecisionsError
from utils.report_rendering import format_metric, render_comparison, render_csv, render_json, render_markdown

MET = EligibilityLabel.MET
NOT_MET = EligibilityLabel.NOT_MET
THRESHOLD_100 = ('ABDOMINAL', 'ADVANCED-CAD', 'ASP-FOR-MI', 'CREATININE', 'DIETSUPP-2MOS', 'ENGLISH', 'HBA1C',
                 'MAJOR-DIABETES', 'MAKES-DECISIONS')


def catalog_of(*criterion_ids):
    return CriteriaCatalog(tuple(Criterion(cid, f'{cid} definition.', CriterionVariant.ORIGINAL)
                                 for cid in criterion_ids), CriterionVariant.ORIGINAL)


def decision_set(table):
    """table: patient_id -> criterion_id -> label"""
    return DecisionSet.from_unordered(
        MatchDecision(pid, cid, label, '', True, f'{pid}-{cid}')
        for pid, labels in table.items() for cid, label in labels.items()
    )


def gold_of(table):
    return {pid: GoldLabels(dict(labels)) for pid, labels in table.items()}


def ten_patients():
    """4 Met, 6 Not met on ENGLISH"""
    return {f'{n:02d}': {'ENGLISH': MET if n < 4 else NOT_MET} for n in range(10)}


def invert(label):
    return NOT_MET if label is MET else MET


def brute_force_metrics(pairs):
    """Independent per-pair counting: pairs of (predicted, truth)"""
    tp = sum(1 for p, t in pairs if p is MET and t is MET)
    fp = sum(1 for p, t in pairs if p is MET and t is NOT_MET)
    fn = sum(1 for p, t in pairs if p is NOT_MET and t is MET)
    tn = len(pairs) - tp - fp - fn
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    f1 = None
    if precision is not None and recall is not None and precision + recall:
        f1 = 2 * precision * recall / (precision + recall)
    return (tp + tn) / len(pairs), precision, recall, f1


def random_fixture(rng, patients, criterion_ids):
    gold = {f'p{n:03d}': {cid: rng.choice([MET, NOT_MET]) for cid in criterion_ids} for n in range(patients)}
    predicted = {pid: {cid: rng.choice([MET, NOT_MET]) for cid in criterion_ids} for pid in gold}
    return gold, predicted


def gold_trial_count(gold, spec):
    return sum(1 for patient_id, labels in gold.items() if trial_eligibility(labels.labels, spec, patient_id))


def close(a, b, tolerance=1e-12):
    if a is None or b is None:
        return a is None and b is None
    return abs(a - b) <= tolerance


class TestConfusion:

    def test_perfect_predictions(self):
        table = ten_patients()

        cm = confusion(decision_set(table), gold_of(table), 'ENGLISH')

        assert cm == ConfusionMatrix(tp=4, fp=0, fn=0, tn=6)

    def test_inverted_predictions(self):
        table = ten_patients()
        inverted = {pid: {cid: invert(label) for cid, label in labels.items()} for pid, labels in table.items()}

        cm = confusion(decision_set(inverted), gold_of(table), 'ENGLISH')

        assert cm == ConfusionMatrix(tp=0, fp=6, fn=4, tn=0)

    def test_hand_built_pairs(self):
        gold = {str(n): {'HBA1C': label} for n, label in enumerate([MET, MET, MET, NOT_MET, NOT_MET,
                                                                    NOT_MET, NOT_MET, MET, NOT_MET, MET])}
        predicted = {str(n): {'HBA1C': label} for n, label in enumerate([MET, NOT_MET, MET, MET, NOT_MET,
                                                                         NOT_MET, MET, MET, NOT_MET, NOT_MET])}

        cm = confusion(decision_set(predicted), gold_of(gold), 'HBA1C')

        assert cm == ConfusionMatrix(tp=3, fp=2, fn=2, tn=3)

    def test_missing_decision(self):
        table = ten_patients()
        partial = {pid: labels for pid, labels in table.items() if pid != '03'}

        with pytest.raises(IncompleteDecisionsError):
            confusion(decision_set(partial), gold_of(table), 'ENGLISH')


class TestMetricSet:

    def test_formula(self):
        metrics = metric_set(ConfusionMatrix(tp=3, fp=1, fn=2, tn=4))

        assert metrics.accuracy == pytest.approx(0.7, abs=1e-9)
        assert metrics.precision == pytest.approx(0.75, abs=1e-9)
        assert metrics.recall == pytest.approx(0.6, abs=1e-9)
        assert metrics.f1 == pytest.approx(2 / 3, abs=1e-9)

    def test_rare_criterion_has_undefined_cells(self):
        metrics = metric_set(ConfusionMatrix(tp=0, fp=0, fn=1, tn=287))

        assert metrics.precision is None
        assert metrics.recall == 0.0
        assert metrics.f1 is None
        assert metrics.accuracy == pytest.approx(287 / 288)

    def test_all_correct(self):
        metrics = metric_set(ConfusionMatrix(tp=5, fp=0, fn=0, tn=5))
        assert metrics.to_dict() == {'accuracy': 1.0, 'precision': 1.0, 'recall': 1.0, 'f1': 1.0}

    def test_zero_precision_and_recall_leave_f1_undefined(self):
        metrics = metric_set(ConfusionMatrix(tp=0, fp=2, fn=3, tn=5))

        assert metrics.precision == 0.0
        assert metrics.recall == 0.0
        assert metrics.f1 is None

    def test_empty_matrix(self):
        with pytest.raises(EmptyMatrixError):
            metric_set(ConfusionMatrix())

    def test_matches_brute_force_oracle(self):
        rng = random.Random(7)
        for _ in range(200):
            gold, predicted = random_fixture(rng, rng.randint(1, 30), ['ENGLISH'])

            metrics = metric_set(confusion(decision_set(predicted), gold_of(gold), 'ENGLISH'))
            expected = brute_force_metrics([(predicted[pid]['ENGLISH'], gold[pid]['ENGLISH']) for pid in gold])

            for name, value in zip(('accuracy', 'precision', 'recall', 'f1'), expected):
                assert close(metrics.get(name), value)


class TestMacroAverage:

    def test_mean(self):
        result = macro_average([MetricSet(0.8, None, None, None), MetricSet(1.0, None, None, None)])
        assert result.accuracy == pytest.approx(0.9)

    def test_undefined_entries_are_skipped(self):
        result = macro_average([MetricSet(1.0, 0.5, 1.0, None), MetricSet(1.0, None, 1.0, None),
                                MetricSet(1.0, 1.0, 1.0, None)])

        assert result.precision == pytest.approx(0.75)
        assert result.f1 is None

    def test_empty(self):
        with pytest.raises(EmptyReportError):
            macro_average([])


class TestSyntheticTrial:

    def test_threshold_100(self, synthetic_gold, original_catalog):
        assert synthesize_trial(synthetic_gold, 100, original_catalog).selected == THRESHOLD_100

    def test_threshold_200(self, synthetic_gold, original_catalog):
        spec = synthesize_trial(synthetic_gold, 200, original_catalog)
        assert spec.selected == ('ASP-FOR-MI', 'ENGLISH', 'MAKES-DECISIONS')

    def test_threshold_300_is_empty(self, synthetic_gold, original_catalog):
        with pytest.raises(EmptyTrialError):
            synthesize_trial(synthetic_gold, 300, original_catalog)

    def test_counts_match_the_published_counts(self, synthetic_gold, original_catalog, met_count_table):
        counts = met_counts(synthetic_gold, original_catalog)
        assert {cid: list(pair) for cid, pair in counts.items()} == met_count_table

    def test_raising_the_threshold_never_adds_criteria(self, synthetic_gold, original_catalog):
        previous = set(original_catalog.ids)
        for threshold in range(1, 278, 7):
            selected = set(synthesize_trial(synthetic_gold, threshold, original_catalog).selected)
            assert selected <= previous
            previous = selected

    def test_real_corpus_has_28_eligible_patients(self, real_corpus_dir, original_catalog):
        corpus = load_corpus(real_corpus_dir, original_catalog)

        spec = synthesize_trial(corpus.gold, 100, original_catalog)

        assert spec.selected == THRESHOLD_100
        assert gold_trial_count(corpus.gold, spec) == 28


class TestTrialEligibility:

    def test_all_met(self):
        spec = TrialSpec(('ENGLISH', 'HBA1C'), 100)
        assert trial_eligibility({'ENGLISH': MET, 'HBA1C': MET, 'KETO-1YR': NOT_MET}, spec)

    def test_one_not_met(self):
        spec = TrialSpec(('ENGLISH', 'HBA1C'), 100)
        assert not trial_eligibility({'ENGLISH': NOT_MET, 'HBA1C': MET}, spec)

    def test_missing_label(self):
        with pytest.raises(IncompleteDecisionsError):
            trial_eligibility({'ENGLISH': MET}, TrialSpec(('ENGLISH', 'HBA1C'), 100), '200')

    def test_flipping_one_selected_criterion_flips_eligibility(self):
        spec = TrialSpec(THRESHOLD_100, 100)
        eligible = {cid: MET for cid in THRESHOLD_100}
        for criterion_id in THRESHOLD_100:
            flipped = dict(eligible, **{criterion_id: NOT_MET})
            assert trial_eligibility(eligible, spec)
            assert not trial_eligibility(flipped, spec)

    def test_trial_confusion_matches_brute_force(self):
        rng = random.Random(11)
        criterion_ids = ['ENGLISH', 'HBA1C', 'CREATININE']
        spec = TrialSpec(('ENGLISH', 'HBA1C'), 1)
        for _ in range(25):
            gold, predicted = random_fixture(rng, 20, criterion_ids)

            cm = trial_confusion(decision_set(predicted), gold_of(gold), spec)

            expected = {'tp': 0, 'fp': 0, 'fn': 0, 'tn': 0}
            for pid in gold:
                guess = all(predicted[pid][cid] is MET for cid in spec.selected)
                truth = all(gold[pid][cid] is MET for cid in spec.selected)
                key = ('t' if guess == truth else 'f') + ('p' if guess else 'n')
                expected[key] += 1
            assert cm.to_dict() == expected


class TestEvaluate:

    def test_perfect_predictor(self, synthetic_gold, original_catalog):
        predicted = {pid: dict(gold.labels) for pid, gold in synthetic_gold.items()}

        report = evaluate(decision_set(predicted), synthetic_gold, original_catalog, trial_threshold=100)

        for metrics in report.per_criterion.values():
            assert all(value in (None, 1.0) for value in metrics.to_dict().values())
        assert report.trial.to_dict() == {'accuracy': 1.0, 'precision': 1.0, 'recall': 1.0, 'f1': 1.0}
        assert report.trial_confusion.tp == gold_trial_count(synthetic_gold, report.trial_spec) == 102

    def test_single_criterion_is_the_composition(self):
        table = ten_patients()
        decisions, gold = decision_set(table), gold_of(table)

        report = evaluate(decisions, gold, catalog_of('ENGLISH'))

        expected = metric_set(confusion(decisions, gold, 'ENGLISH'))
        assert report.per_criterion == {'ENGLISH': expected}
        assert report.macro == expected
        assert report.trial is None

    def test_shuffled_decisions_score_the_same(self):
        rng = random.Random(3)
        criterion_ids = ['ENGLISH', 'HBA1C']
        gold, predicted = random_fixture(rng, 40, criterion_ids)
        decisions = list(decision_set(predicted))
        shuffled = list(decisions)
        rng.shuffle(shuffled)

        first = evaluate(DecisionSet(tuple(decisions)), gold_of(gold), catalog_of(*criterion_ids), 1)
        second = evaluate(DecisionSet(tuple(shuffled)), gold_of(gold), catalog_of(*criterion_ids), 1)

        assert first.to_dict() == second.to_dict()

    def test_rare_criterion_renders_dashes(self):
        gold = {f'p{n:03d}': {'KETO-1YR': MET if n == 0 else NOT_MET} for n in range(288)}
        predicted = {pid: {'KETO-1YR': NOT_MET} for pid in gold}

        report = evaluate(decision_set(predicted), gold_of(gold), catalog_of('KETO-1YR'))
        markdown = render_markdown(report)

        assert '| KETO-1YR | 1 | 287 | 0.997 | - | 0.000 | - |' in markdown


class TestReportRendering:

    def report(self, label=''):
        table = ten_patients()
        return evaluate(decision_set(table), gold_of(table), catalog_of('ENGLISH'), trial_threshold=1, label=label)

    def test_format_metric(self):
        assert format_metric(None) == '-'
        assert format_metric(0.930556, 4) == '0.9306'

    def test_markdown_has_average_and_trial_sections(self):
        markdown = render_markdown(self.report('MAKA'))

        assert markdown.startswith('# Evaluation report: MAKA')
        assert '| Average |  |  | 1.000 | 1.000 | 1.000 | 1.000 |' in markdown
        assert '## Trial level' in markdown
        assert 'Trial confusion: tp=4 fp=0 fn=0 tn=6' in markdown

    def test_csv_rows(self):
        rows = list(csv.reader(io.StringIO(render_csv(self.report()))))

        assert rows[0] == ['scope', 'criterion', 'metric', 'value']
        assert ['criterion', 'ENGLISH', 'accuracy', '1.000000'] in rows
        assert ['macro', 'Average', 'f1', '1.000000'] in rows
        assert ['trial', '', 'precision', '1.000000'] in rows

    def test_csv_leaves_undefined_empty(self):
        gold = {str(n): {'KETO-1YR': NOT_MET} for n in range(4)}
        report = evaluate(decision_set(gold), gold_of(gold), catalog_of('KETO-1YR'))

        rows = list(csv.reader(io.StringIO(render_csv(report))))

        assert ['criterion', 'KETO-1YR', 'precision', ''] in rows

    def test_json_round_trips_the_report(self):
        data = json.loads(render_json(self.report('CoT')))

        assert data['label'] == 'CoT'
        assert data['trial_spec'] == {'selected': ['ENGLISH'], 'threshold': 1}
        assert data['counts'] == {'ENGLISH': {'met': 4, 'not_met': 6}}

    def test_comparison_has_a_column_per_run(self):
        text = render_comparison([self.report('Zero-shot'), self.report('MAKA')])

        assert 'Accuracy (Zero-shot) | Accuracy (MAKA)' in text
        assert '# Trial-level comparison' in text
        assert '| Metric | Zero-shot | MAKA |' in text

    def test_repeated_labels_are_numbered(self):
        assert label_runs(['MAKA', 'CoT', 'MAKA']) == ['MAKA', 'CoT', 'MAKA #2']
