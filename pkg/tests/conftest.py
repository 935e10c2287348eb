import json
from pathlib import Path

import pytest

from models import EligibilityLabel, GoldLabels
from utils.corpus_parser import load_corpus, load_criteria_catalog
from utils.scripted_backend import ScriptedBackend

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / 'fixtures'
MINI_CORPUS = FIXTURES / 'mini'
SCRIPTS = FIXTURES / 'scripts'


def pytest_addoption(parser):
    parser.addoption('--with-real-corpus', action='store', default=None, metavar='DIR',
                     help='Directory holding the n2c2 2018 track 1 XML files')


@pytest.fixture
def real_corpus_dir(request):
    directory = request.config.getoption('--with-real-corpus')
    if not directory:
        pytest.skip('needs --with-real-corpus DIR')
    return Path(directory)


@pytest.fixture
def original_catalog():
    return load_criteria_catalog(ROOT / 'data' / 'criteria_original.json')


@pytest.fixture
def redefined_catalog():
    return load_criteria_catalog(ROOT / 'data' / 'criteria_redefined.json')


@pytest.fixture
def augmented_catalog():
    return load_criteria_catalog(ROOT / 'data' / 'criteria_augmented.json')


@pytest.fixture
def mini_corpus(original_catalog):
    return load_corpus(MINI_CORPUS, original_catalog)


@pytest.fixture
def met_count_table():
    return json.loads((FIXTURES / 'met_counts.json').read_text(encoding='utf-8'))


@pytest.fixture
def synthetic_gold(met_count_table):
    """288 synthetic patients whose met counts equal the published per-criterion counts"""
    patient_ids = [f'p{index:03d}' for index in range(288)]
    gold = {}
    for position, patient_id in enumerate(patient_ids):
        gold[patient_id] = GoldLabels({
            criterion_id: EligibilityLabel.MET if position < met else EligibilityLabel.NOT_MET
            for criterion_id, (met, _) in met_count_table.items()
        })
    return gold


@pytest.fixture
def passthrough_backend():
    return ScriptedBackend.from_file(SCRIPTS / 'mini_passthrough.json')


@pytest.fixture
def maka_backend():
    return ScriptedBackend.from_file(SCRIPTS / 'mini_maka.json')
