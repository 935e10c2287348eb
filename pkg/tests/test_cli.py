import json

from app import EXIT_DATA, EXIT_GATEWAY, EXIT_OK, EXIT_USAGE, run_cli
from models import DecisionSet, MatchDecision
from utils.corpus_parser import load_corpus, load_criteria_catalog
from utils.run_artifacts import DECISIONS_FILE, MANIFEST_FILE, REPORT_FILES, write_decisions
from tests.conftest import MINI_CORPUS, ROOT, SCRIPTS

ORIGINAL = str(ROOT / 'data' / 'criteria_original.json')
REDEFINED = str(ROOT / 'data' / 'criteria_redefined.json')


def output_values(text):
    return dict(line.split('=', 1) for line in text.splitlines() if '=' in line)


def error_payload_from(err):
    return json.loads(next(line for line in err.splitlines() if line.startswith('{')))


def scripted_run(out_dir, script=SCRIPTS / 'mini_maka.json', *extra, criteria=ORIGINAL):
    return run_cli(['run', '--backend', 'scripted', '--script', str(script), '--corpus', str(MINI_CORPUS),
                    '--criteria', criteria, '--out', str(out_dir), *extra])


class TestIngest:

    def test_prints_corpus_statistics(self, capsys):
        assert run_cli(['ingest', '--corpus', str(MINI_CORPUS), '--criteria', ORIGINAL]) == EXIT_OK

        values = output_values(capsys.readouterr().out)
        assert values['patient_count'] == '3'
        assert values['pair_count'] == '39'
        assert len(values['corpus_digest']) == 64

    def test_empty_corpus_is_a_data_error(self, tmp_path):
        assert run_cli(['ingest', '--corpus', str(tmp_path), '--criteria', ORIGINAL]) == EXIT_DATA


class TestUsageErrors:

    def test_scripted_backend_without_script(self, capsys):
        assert run_cli(['run', '--backend', 'scripted', '--corpus', str(MINI_CORPUS)]) == EXIT_USAGE
        assert '--script' in capsys.readouterr().err

    def test_unknown_flag(self):
        assert run_cli(['run', '--no-such-flag']) == EXIT_USAGE

    def test_bad_pairing_is_a_usage_error(self, tmp_path, capsys):
        exit_code = run_cli(['run', '--backend', 'scripted', '--script', str(SCRIPTS / 'mini_maka.json'),
                             '--corpus', str(MINI_CORPUS), '--criteria', ORIGINAL,
                             '--strategy', 'zeroshot', '--out', str(tmp_path)])

        assert exit_code == EXIT_USAGE
        assert not (tmp_path / DECISIONS_FILE).exists()
        payload = error_payload_from(capsys.readouterr().err)
        assert payload['code'] == 'CONFIGURATION_ERROR'
        assert payload['success'] is False


class TestRun:

    def test_scripted_maka_run_writes_artifacts(self, tmp_path, capsys):
        assert scripted_run(tmp_path / 'run') == EXIT_OK

        values = output_values(capsys.readouterr().out)
        assert values['decisions'] == '39'
        assert values['parse_failures'] == '0'
        assert (tmp_path / 'run' / DECISIONS_FILE).exists()
        manifest = json.loads((tmp_path / 'run' / MANIFEST_FILE).read_text(encoding='utf-8'))
        assert manifest['strategy'] == 'maka'

    def test_exhausted_script_is_a_gateway_error(self, tmp_path):
        script = tmp_path / 'probe_only.json'
        script.write_text(json.dumps({'rules': [
            {'expect': 'Knowledge Probing Agent', 'response': 'VERDICT: SUFFICIENT', 'times': None}
        ]}))

        assert scripted_run(tmp_path / 'run', script) == EXIT_GATEWAY

    def test_augment_then_run_with_prepared_criteria(self, tmp_path, capsys):
        exit_code = run_cli(['augment', '--backend', 'scripted', '--script', str(SCRIPTS / 'mini_maka.json'),
                             '--criteria', ORIGINAL, '--out', str(tmp_path / 'prep')])
        assert exit_code == EXIT_OK
        values = output_values(capsys.readouterr().out)

        assert scripted_run(tmp_path / 'run', SCRIPTS / 'mini_maka.json', '--prepared', values['prepared']) == EXIT_OK
        assert output_values(capsys.readouterr().out)['decisions'] == '39'


class TestEvaluate:

    def perfect_decisions(self, tmp_path):
        corpus = load_corpus(MINI_CORPUS, load_criteria_catalog(ORIGINAL))
        decisions = DecisionSet.from_unordered(
            MatchDecision(patient_id, criterion_id, label, '', True, f'{patient_id}-{criterion_id}')
            for patient_id, gold in corpus.gold.items() for criterion_id, label in gold.labels.items()
        )
        return write_decisions(tmp_path / DECISIONS_FILE, decisions)

    def test_perfect_predictor(self, tmp_path, capsys):
        path = self.perfect_decisions(tmp_path)

        exit_code = run_cli(['evaluate', '--decisions', str(path), '--corpus', str(MINI_CORPUS),
                             '--criteria', ORIGINAL])

        assert exit_code == EXIT_OK
        out = capsys.readouterr().out
        assert '| Average |' in out
        assert '1.000' in out
        for name in REPORT_FILES.values():
            assert (tmp_path / name).exists()

    def test_missing_decisions_file(self, tmp_path):
        exit_code = run_cli(['evaluate', '--decisions', str(tmp_path / 'absent.jsonl'),
                             '--corpus', str(MINI_CORPUS), '--criteria', ORIGINAL])
        assert exit_code == EXIT_DATA


class TestReport:

    def test_compares_runs_from_their_manifests(self, tmp_path, capsys):
        assert scripted_run(tmp_path / 'maka') == EXIT_OK
        assert scripted_run(tmp_path / 'zeroshot', SCRIPTS / 'mini_passthrough.json', '--strategy', 'zeroshot',
                            criteria=REDEFINED) == EXIT_OK
        capsys.readouterr()

        out_path = tmp_path / 'comparison.md'
        exit_code = run_cli(['report', '--run', str(tmp_path / 'maka'), '--run', str(tmp_path / 'zeroshot'),
                             '--out', str(out_path)])

        assert exit_code == EXIT_OK
        text = capsys.readouterr().out
        assert out_path.read_text(encoding='utf-8') == text

    def test_threshold_must_be_positive(self, tmp_path):
        assert run_cli(['report', '--run', str(tmp_path), '--trial-threshold', '0']) == EXIT_USAGE
