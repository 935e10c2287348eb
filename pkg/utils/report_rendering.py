"""
Markdown, CSV and JSON renderings of evaluation reports
"""
import csv
import io
import json
from typing import List, Optional, Sequence

from models import EvaluationReport, MetricSet
from models.evaluation import METRIC_NAMES

UNDEFINED = '-'
METRIC_TITLES = {'accuracy': 'Accuracy', 'precision': 'Precision', 'recall': 'Recall', 'f1': 'F1'}


def format_metric(value: Optional[float], digits: int = 3) -> str:
    return UNDEFINED if value is None else f'{value:.{digits}f}'


def _row(cells: Sequence[str]) -> str:
    return '| ' + ' | '.join(cells) + ' |'


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> List[str]:
    lines = [_row(header), _row(['---'] * len(header))]
    lines.extend(_row(row) for row in rows)
    return lines


def _metric_cells(metrics: MetricSet, digits: int = 3) -> List[str]:
    return [format_metric(metrics.get(name), digits) for name in METRIC_NAMES]


def render_markdown(report: EvaluationReport) -> str:
    """Per-criterion table with an Average row, then the trial section if scored"""
    title = f'# Evaluation report: {report.label}' if report.label else '# Evaluation report'
    header = ['Criterion', 'Met', 'Not met'] + [METRIC_TITLES[name] for name in METRIC_NAMES]
    rows = []
    for criterion_id, metrics in report.per_criterion.items():
        met, not_met = report.counts.get(criterion_id, (0, 0))
        rows.append([criterion_id, str(met), str(not_met)] + _metric_cells(metrics))
    rows.append(['Average', '', ''] + _metric_cells(report.macro))

    lines = [title, '', '## Criterion level', ''] + _table(header, rows)

    if report.trial is not None and report.trial_spec is not None:
        cm = report.trial_confusion
        lines += [
            '',
            '## Trial level',
            '',
            f'Criteria with at least {report.trial_spec.threshold} met patients: '
            f"{', '.join(report.trial_spec.selected)}",
            ''
        ]
        lines += _table(['Metric', 'Value'],
                        [[METRIC_TITLES[name], format_metric(report.trial.get(name), 4)] for name in METRIC_NAMES])
        if cm is not None:
            lines += ['', f'Trial confusion: tp={cm.tp} fp={cm.fp} fn={cm.fn} tn={cm.tn}']
    return '\n'.join(lines) + '\n'


def render_comparison(reports: Sequence[EvaluationReport]) -> str:
    """
    Side-by-side comparison of several runs: one column group per metric
    with one column per run, then a trial table with one column per run
    """
    labels = [report.label or f'run {position + 1}' for position, report in enumerate(reports)]
    criterion_ids = list(reports[0].per_criterion) if reports else []

    header = ['Criterion'] + [f'{METRIC_TITLES[name]} ({label})' for name in METRIC_NAMES for label in labels]
    rows = []
    for criterion_id in criterion_ids:
        row = [criterion_id]
        for name in METRIC_NAMES:
            for report in reports:
                metrics = report.per_criterion.get(criterion_id)
                row.append(format_metric(metrics.get(name) if metrics else None))
        rows.append(row)
    rows.append(['Average'] + [format_metric(report.macro.get(name)) for name in METRIC_NAMES for report in reports])

    lines = ['# Criterion-level comparison', ''] + _table(header, rows)

    if any(report.trial is not None for report in reports):
        trial_rows = [
            [METRIC_TITLES[name]] + [format_metric(report.trial.get(name) if report.trial else None, 4)
                                     for report in reports]
            for name in METRIC_NAMES
        ]
        lines += ['', '# Trial-level comparison', ''] + _table(['Metric'] + labels, trial_rows)
    return '\n'.join(lines) + '\n'


def render_csv(report: EvaluationReport) -> str:
    """Rows of scope, criterion, metric, value; undefined metrics leave value empty"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(['scope', 'criterion', 'metric', 'value'])

    def emit(scope: str, criterion_id: str, metrics: MetricSet):
        for name in METRIC_NAMES:
            value = metrics.get(name)
            writer.writerow([scope, criterion_id, name, '' if value is None else f'{value:.6f}'])

    for criterion_id, metrics in report.per_criterion.items():
        emit('criterion', criterion_id, metrics)
    emit('macro', 'Average', report.macro)
    if report.trial is not None:
        emit('trial', '', report.trial)
    return buffer.getvalue()


def render_json(report: EvaluationReport) -> str:
    return json.dumps(report.to_dict(), ensure_ascii=False, indent=2) + '\n'
