"""
Readers and writers for the files a run leaves in its output directory
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Union

from models import AuditEvent, DecisionSet, FinalCriterion, MatchDecision, RunManifest
from utils.error_handling import ArtifactError

logger = logging.getLogger(__name__)

MANIFEST_FILE = 'manifest.json'
DECISIONS_FILE = 'decisions.jsonl'
AUDIT_FILE = 'audit.jsonl'
PREPARED_FILE = 'prepared_criteria.json'
COMPLETION_FILE = 'run_complete.json'
REPORT_FILES = {'markdown': 'report.md', 'csv': 'report.csv', 'json': 'report.json'}

PathLike = Union[str, Path]


def _dump(data: Any) -> str:
    return json.dumps(data, ensure_ascii=False, indent=2) + '\n'


def _dump_line(data: Dict[str, Any]) -> str:
    return json.dumps(data, ensure_ascii=False, separators=(',', ':'))


def write_json(path: PathLike, data: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_dump(data), encoding='utf-8')
    return path


def read_json(path: PathLike) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding='utf-8'))
    except OSError as e:
        raise ArtifactError(f'Cannot read {path}: {e}', {'path': str(path)})
    except json.JSONDecodeError as e:
        raise ArtifactError(f'{path} is not valid JSON: {e}', {'path': str(path)})


def _read_lines(path: PathLike) -> List[Dict[str, Any]]:
    try:
        lines = Path(path).read_text(encoding='utf-8').splitlines()
    except OSError as e:
        raise ArtifactError(f'Cannot read {path}: {e}', {'path': str(path)})
    records = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise ArtifactError(f'{path}:{number}: invalid JSON line ({e})', {'path': str(path), 'line': number})
    return records


def write_manifest(out_dir: PathLike, manifest: RunManifest) -> Path:
    path = write_json(Path(out_dir) / MANIFEST_FILE, manifest.to_dict())
    logger.info(f"Wrote run manifest {path}")
    return path


def read_manifest(run_dir: PathLike) -> RunManifest:
    data = read_json(Path(run_dir) / MANIFEST_FILE)
    try:
        return RunManifest.from_dict(data)
    except (KeyError, TypeError, AttributeError) as e:
        raise ArtifactError(f'Manifest in {run_dir} is incomplete: {e}', {'run_dir': str(run_dir)})


def manifest_artifact(run_dir: PathLike, manifest: RunManifest, name: str) -> Path:
    """
    Resolve a file the manifest names, relative to its run directory

    Raises:
        ArtifactError: the manifest does not name the artifact
    """
    relative = manifest.artifacts.get(name)
    if not relative:
        raise ArtifactError(f'Manifest in {run_dir} names no {name} file', {'run_dir': str(run_dir)})
    return Path(run_dir) / relative


def write_decisions(path: PathLike, decisions: DecisionSet) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = ''.join(_dump_line(decision.to_dict()) + '\n' for decision in decisions)
    path.write_text(text, encoding='utf-8')
    logger.info(f"Wrote {len(decisions)} decisions to {path}")
    return path


def read_decisions(path: PathLike) -> DecisionSet:
    decisions = []
    seen = set()
    for record in _read_lines(path):
        try:
            decision = MatchDecision.from_dict(record)
        except (KeyError, TypeError, ValueError) as e:
            raise ArtifactError(f'{path}: invalid decision record ({e})', {'path': str(path)})
        if decision.sort_key() in seen:
            raise ArtifactError(
                f'{path}: patient {decision.patient_id} has more than one decision for {decision.criterion_id}',
                {'path': str(path), 'patient_id': decision.patient_id, 'criterion_id': decision.criterion_id}
            )
        seen.add(decision.sort_key())
        decisions.append(decision)
    return DecisionSet.from_unordered(decisions)


def audit_line(event: AuditEvent) -> str:
    return _dump_line(event.to_dict()) + '\n'


def read_audit(path: PathLike) -> List[AuditEvent]:
    try:
        return [AuditEvent.from_dict(record) for record in _read_lines(path)]
    except (KeyError, TypeError, ValueError) as e:
        raise ArtifactError(f'{path}: invalid audit record ({e})', {'path': str(path)})


def write_prepared(path: PathLike, finals: Iterable[FinalCriterion]) -> Path:
    path = write_json(path, [final.to_dict() for final in finals])
    logger.info(f"Wrote prepared criteria to {path}")
    return path


def read_prepared(path: PathLike) -> List[FinalCriterion]:
    data = read_json(path)
    if not isinstance(data, list):
        raise ArtifactError(f'{path} must hold a JSON array of prepared criteria', {'path': str(path)})
    try:
        return [FinalCriterion.from_dict(item) for item in data]
    except (KeyError, TypeError, ValueError) as e:
        raise ArtifactError(f'{path}: invalid prepared criterion ({e})', {'path': str(path)})


def write_text(path: PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding='utf-8')
    return path
