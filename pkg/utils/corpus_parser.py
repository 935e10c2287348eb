"""
Readers for n2c2-shaped patient documents and criteria catalogs
"""
import json
import logging
import re
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from datetime import date
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from models import (
    ClinicalNote,
    Corpus,
    CorpusEntry,
    CorpusStats,
    CriteriaCatalog,
    Criterion,
    CriterionVariant,
    EligibilityLabel,
    GoldLabels,
    PatientRecord
)
from utils.error_handling import (
    CatalogError,
    DocumentParseError,
    EmptyCorpusError,
    LabelError,
    MakaError,
    SchemaError
)

logger = logging.getLogger(__name__)

ROOT_ELEMENT = 'PatientMatching'
RECORD_HEADER = re.compile(r'^[ \t]*Record date:[ \t]*(?P<value>[^\r\n]*)$', re.MULTILINE)
ISO_DATE = re.compile(r'^(\d{4})-(\d{2})-(\d{2})$')

# Observed range in the n2c2 release; outside it we only warn.
EXPECTED_NOTES_RANGE = (2, 5)


def _parse_record_date(value: str) -> Optional[date]:
    match = ISO_DATE.match(value.strip())
    if not match:
        return None
    try:
        return date(int(match.group(1)), int(match.group(2)), int(match.group(3)))
    except ValueError:
        return None


def split_notes(raw_text: str) -> List[ClinicalNote]:
    """
    Split a TEXT payload into notes at `Record date:` header lines

    Notes are contiguous slices of raw_text, so joining their texts gives
    back raw_text. A preamble before the first header becomes its own
    Unknown-dated note unless it is only whitespace, in which case it is
    folded into the first note.

    Args:
        raw_text: TEXT element content

    Returns:
        list of ClinicalNote in document order
    """
    headers = list(RECORD_HEADER.finditer(raw_text))
    if not headers:
        return [ClinicalNote(0, None, raw_text)]

    starts = [header.start() for header in headers]
    dates = [_parse_record_date(header.group('value')) for header in headers]

    preamble = raw_text[:starts[0]]
    if preamble.strip():
        starts.insert(0, 0)
        dates.insert(0, None)
    else:
        starts[0] = 0

    notes = []
    bounds = starts + [len(raw_text)]
    for index, record_date in enumerate(dates):
        notes.append(ClinicalNote(index, record_date, raw_text[bounds[index]:bounds[index + 1]]))
    return notes


def parse_patient_document(data: bytes, catalog: CriteriaCatalog,
                           patient_id: str = 'unknown') -> Tuple[PatientRecord, GoldLabels]:
    """
    Parse one patient document into a record and its gold labels

    Args:
        data: UTF-8 XML bytes with root element PatientMatching
        catalog: Active criteria catalog; every id must be labeled
        patient_id: Identifier for the record (file stem when loading a corpus)

    Returns:
        tuple: (PatientRecord, GoldLabels)
    """
    try:
        root = ET.fromstring(data)
    except ET.ParseError as e:
        raise DocumentParseError(str(e), getattr(e, 'position', None))

    if root.tag != ROOT_ELEMENT:
        raise SchemaError([ROOT_ELEMENT], f"Root element is <{root.tag}>, expected <{ROOT_ELEMENT}>")

    missing = [name for name in ('TEXT', 'TAGS') if root.find(name) is None]
    if missing:
        raise SchemaError(missing)

    raw_text = root.find('TEXT').text or ''
    if not raw_text.strip():
        raise SchemaError(['TEXT'], 'TEXT element is empty')

    wanted = set(catalog.ids)
    labels: Dict[str, EligibilityLabel] = {}
    for tag in root.find('TAGS'):
        if tag.tag not in wanted:
            logger.warning(f"Patient {patient_id}: ignoring tag <{tag.tag}> not in the {catalog.variant.value} catalog")
            continue
        if tag.tag in labels:
            raise SchemaError([tag.tag], f"TAGS labels criterion {tag.tag} more than once")
        value = tag.get('met')
        label = EligibilityLabel.from_attribute(value) if value is not None else None
        if label is None:
            raise LabelError(tag.tag, value)
        labels[tag.tag] = label

    unlabeled = [criterion_id for criterion_id in catalog.ids if criterion_id not in labels]
    if unlabeled:
        raise SchemaError(unlabeled, f"TAGS is missing criteria: {', '.join(unlabeled)}")

    notes = split_notes(raw_text)
    low, high = EXPECTED_NOTES_RANGE
    if not low <= len(notes) <= high:
        logger.warning(f"Patient {patient_id} has {len(notes)} notes; n2c2 records have {low}-{high}")

    ordered = {criterion_id: labels[criterion_id] for criterion_id in catalog.ids}
    return PatientRecord(patient_id, tuple(notes), raw_text), GoldLabels(ordered)


def _parse_file(path: Path, catalog: CriteriaCatalog) -> CorpusEntry:
    try:
        patient, gold = parse_patient_document(path.read_bytes(), catalog, patient_id=path.stem)
    except MakaError as e:
        raise e.attach_file(path.name)
    except OSError as e:
        raise DocumentParseError(f'cannot read file: {e}').attach_file(path.name)
    return CorpusEntry(patient, gold)


def load_corpus(directory: Union[str, Path], catalog: CriteriaCatalog, max_workers: int = 4) -> Corpus:
    """
    Parse every *.xml file of a directory, ordered by file name

    Args:
        directory: Corpus directory
        catalog: Catalog the gold labels are validated against
        max_workers: Files parsed concurrently

    Returns:
        Corpus
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise EmptyCorpusError(str(directory))

    paths = sorted(directory.glob('*.xml'), key=lambda p: p.name)
    if not paths:
        raise EmptyCorpusError(str(directory))

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as executor:
        entries = list(executor.map(lambda p: _parse_file(p, catalog), paths))

    logger.info(f"Loaded {len(entries)} patients from {directory}")
    return Corpus(tuple(entries))


def infer_variant(path: Union[str, Path]) -> CriterionVariant:
    """Guess the catalog variant from a file name such as criteria_redefined.json"""
    stem = Path(path).stem.lower()
    for variant in (CriterionVariant.AUGMENTED, CriterionVariant.REDEFINED):
        if variant.value in stem:
            return variant
    return CriterionVariant.ORIGINAL


def load_criteria_catalog(path: Union[str, Path], variant: Optional[CriterionVariant] = None) -> CriteriaCatalog:
    """
    Load a criteria catalog JSON array of {id, definition} objects

    Args:
        path: Catalog file
        variant: Catalog variant; inferred from the file name when omitted

    Returns:
        CriteriaCatalog preserving file order
    """
    path = Path(path)
    variant = variant or infer_variant(path)
    try:
        items = json.loads(path.read_text(encoding='utf-8'))
    except OSError as e:
        raise CatalogError(f'Cannot read catalog {path}: {e}', {'path': str(path)})
    except json.JSONDecodeError as e:
        raise CatalogError(f'Catalog {path} is not valid JSON: {e}', {'path': str(path)})

    if not isinstance(items, list):
        raise CatalogError(f'Catalog {path} must be a JSON array', {'path': str(path)})
    if not items:
        raise CatalogError(f'Catalog {path} is empty', {'path': str(path)})

    criteria = []
    seen = set()
    for position, item in enumerate(items):
        if not isinstance(item, dict) or 'id' not in item or 'definition' not in item:
            raise CatalogError(f'Catalog entry {position} needs "id" and "definition"', {'position': position})
        criterion_id = item['id']
        if criterion_id in seen:
            raise CatalogError(f'Duplicate criterion id {criterion_id}', {'criterion_id': criterion_id})
        seen.add(criterion_id)
        try:
            criteria.append(Criterion(criterion_id, item['definition'], variant))
        except (TypeError, ValueError) as e:
            raise CatalogError(f'Catalog entry {position}: {e}', {'position': position})

    return CriteriaCatalog(tuple(criteria), variant)


def corpus_stats(corpus: Corpus, catalog: CriteriaCatalog) -> CorpusStats:
    """
    Compute corpus size figures with the whitespace tokenizer

    Args:
        corpus: Parsed corpus
        catalog: Active catalog (pairs = patients x criteria)

    Returns:
        CorpusStats
    """
    if not len(corpus):
        raise EmptyCorpusError('corpus')

    total_tokens = 0
    notes_per_patient: Dict[int, int] = {}
    for patient in corpus.patients:
        total_tokens += patient.token_count()
        notes_per_patient[len(patient.notes)] = notes_per_patient.get(len(patient.notes), 0) + 1

    return CorpusStats(
        patient_count=len(corpus),
        pair_count=len(corpus) * len(catalog),
        total_tokens=total_tokens,
        mean_tokens_per_patient=total_tokens / len(corpus),
        notes_per_patient=notes_per_patient
    )
