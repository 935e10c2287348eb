"""
Prompt templates stored as text files under prompts/
"""
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Union

from config.settings import Config
from utils.error_handling import ConfigurationError

logger = logging.getLogger(__name__)

TEMPLATE_NAMES = (
    'probe', 'navigate', 'self_augment', 'retrieval_augment', 'search_augment',
    'supervise', 'match_zeroshot', 'match_cot', 'reask'
)
PLACEHOLDERS = (
    'criterion_id', 'criterion_definition', 'rationale', 'snippets', 'notes',
    'feedback', 'expected_format'
)
PLACEHOLDER_PATTERN = re.compile(r'\{(' + '|'.join(PLACEHOLDERS) + r')\}')
SEPARATOR = re.compile(r'^---[ \t]*$', re.MULTILINE)


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    system: str
    user: str

    def render(self, **values: str) -> Dict[str, str]:
        """
        Fill the known placeholders; other braces are left as written

        Returns:
            dict with 'system' and 'user' text
        """
        def fill(text: str) -> str:
            return PLACEHOLDER_PATTERN.sub(lambda m: str(values.get(m.group(1), '')), text).strip()

        return {'system': fill(self.system), 'user': fill(self.user)}


def parse_template(name: str, text: str) -> PromptTemplate:
    """
    Split template text at its "---" line; a template without one has only
    a user part
    """
    parts = SEPARATOR.split(text, maxsplit=1)
    system, user = (parts[0], parts[1]) if len(parts) == 2 else ('', parts[0])
    if not user.strip():
        raise ConfigurationError(f'Prompt template {name} has an empty user part')
    return PromptTemplate(name, system.strip(), user.strip())


class PromptLibrary:
    def __init__(self, templates: Dict[str, PromptTemplate]):
        missing = [name for name in TEMPLATE_NAMES if name not in templates]
        if missing:
            raise ConfigurationError(f"Missing prompt templates: {', '.join(missing)}")
        self.templates = templates

    @classmethod
    def load(cls, directory: Optional[Union[str, Path]] = None) -> 'PromptLibrary':
        directory = Path(directory or Config.PROMPTS_DIR)
        templates = {}
        for name in TEMPLATE_NAMES:
            path = directory / f'{name}.txt'
            try:
                templates[name] = parse_template(name, path.read_text(encoding='utf-8'))
            except OSError as e:
                raise ConfigurationError(f'Cannot read prompt template {path}: {e}')
        logger.debug(f"Loaded {len(templates)} prompt templates from {directory}")
        return cls(templates)

    def __getitem__(self, name: str) -> PromptTemplate:
        return self.templates[name]
