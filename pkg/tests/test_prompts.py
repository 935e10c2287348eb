import pytest

from config.settings import Config
from utils.error_handling import ConfigurationError
from utils.prompt_templates import TEMPLATE_NAMES, PromptLibrary, parse_template
from tests.conftest import ROOT

GOLDEN = ROOT / 'tests' / 'golden' / 'prompts'

VALUES = {
    'criterion_id': 'HBA1C',
    'criterion_definition': 'Any hemoglobin A1c (HbA1c) value between 6.5% and 9.5%.',
    'rationale': 'the target range is not explained',
    'snippets': '[hba1c-001] HbA1c reflects average glucose over three months.',
    'notes': 'Record date: 2090-01-01\nHbA1c 7.1% on admission.',
    'feedback': '',
    'expected_format': 'DECISION: MET or DECISION: NOT MET'
}


def write_templates(directory, names=TEMPLATE_NAMES):
    for name in names:
        (directory / f'{name}.txt').write_text(f'System {name}\n---\nUser {{criterion_id}}\n', encoding='utf-8')


class TestShippedTemplates:

    @pytest.mark.parametrize('name', TEMPLATE_NAMES)
    def test_renders_golden_text(self, name):
        rendered = PromptLibrary.load(Config.PROMPTS_DIR)[name].render(**VALUES)

        expected = (GOLDEN / f'{name}.txt').read_text(encoding='utf-8')
        assert f"{rendered['system']}\n---\n{rendered['user']}\n" == expected

    @pytest.mark.parametrize('name', [n for n in TEMPLATE_NAMES if n != 'reask'])
    def test_agent_templates_have_a_system_part(self, name):
        template = PromptLibrary.load()[name]

        assert template.system.startswith('You are the ')
        assert template.user.startswith('Criterion: {criterion_id}')


class TestParseTemplate:

    def test_splits_at_separator_line(self):
        template = parse_template('t', 'You are a tester.\n---  \nCriterion: {criterion_id}\n')

        assert template.system == 'You are a tester.'
        assert template.user == 'Criterion: {criterion_id}'

    def test_dashes_inside_a_line_do_not_split(self):
        template = parse_template('t', 'Use --- as a rule\n---\nbody')

        assert template.system == 'Use --- as a rule'
        assert template.user == 'body'

    def test_without_separator_everything_is_user_text(self):
        template = parse_template('t', 'Reply again.\n')

        assert template.system == ''
        assert template.user == 'Reply again.'

    def test_empty_user_part(self):
        with pytest.raises(ConfigurationError):
            parse_template('t', 'System only\n---\n   \n')


class TestRender:

    def test_unknown_braces_survive(self):
        template = parse_template('t', 'sys\n---\n{criterion_id}: {unknown} {"threshold": 6.5}')

        rendered = template.render(criterion_id='HBA1C')

        assert rendered['user'] == 'HBA1C: {unknown} {"threshold": 6.5}'

    def test_missing_values_render_empty(self):
        template = parse_template('t', 'sys\n---\nGap: {rationale}|')

        assert template.render()['user'] == 'Gap: |'

    def test_values_are_not_expanded_twice(self):
        template = parse_template('t', 'sys\n---\n{criterion_definition} / {criterion_id}')

        rendered = template.render(criterion_definition='contains {criterion_id}', criterion_id='X')

        assert rendered['user'] == 'contains {criterion_id} / X'


class TestPromptLibrary:

    def test_loads_a_directory(self, tmp_path):
        write_templates(tmp_path)

        library = PromptLibrary.load(tmp_path)

        assert library['probe'].render(criterion_id='ENGLISH') == {'system': 'System probe', 'user': 'User ENGLISH'}

    def test_missing_template_file(self, tmp_path):
        write_templates(tmp_path, [name for name in TEMPLATE_NAMES if name != 'supervise'])

        with pytest.raises(ConfigurationError) as excinfo:
            PromptLibrary.load(tmp_path)
        assert 'supervise' in excinfo.value.message

    def test_missing_template_in_mapping(self):
        with pytest.raises(ConfigurationError):
            PromptLibrary({'probe': parse_template('probe', 'sys\n---\nuser')})
