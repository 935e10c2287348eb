import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from dotenv import load_dotenv

from models import BackendTag, CriterionVariant, PromptStrategy
from utils.error_handling import ConfigurationError

load_dotenv()

PROJECT_ROOT = Path(__file__).resolve().parent.parent


class Config:
    # Chat-completions provider
    API_KEY = os.getenv('MAKA_API_KEY', '')
    API_BASE_URL = os.getenv('MAKA_API_BASE_URL', 'https://api.openai.com/v1')
    MODEL_ID = os.getenv('MAKA_MODEL_ID', 'gpt-4')
    REQUEST_TIMEOUT = float(os.getenv('MAKA_REQUEST_TIMEOUT', 60))

    # Online search augmentation
    SEARCH_URL = os.getenv('MAKA_SEARCH_URL', '')
    SEARCH_API_KEY = os.getenv('MAKA_SEARCH_API_KEY', '')
    SEARCH_TIMEOUT = float(os.getenv('MAKA_SEARCH_TIMEOUT', 10))

    LOG_LEVEL = os.getenv('MAKA_LOG_LEVEL', 'INFO')

    # Shipped data
    DATA_DIR = PROJECT_ROOT / 'data'
    PROMPTS_DIR = PROJECT_ROOT / 'prompts'
    SNIPPETS_PATH = DATA_DIR / 'snippets.jsonl'
    CATALOG_PATHS = {
        CriterionVariant.ORIGINAL: DATA_DIR / 'criteria_original.json',
        CriterionVariant.REDEFINED: DATA_DIR / 'criteria_redefined.json',
        CriterionVariant.AUGMENTED: DATA_DIR / 'criteria_augmented.json'
    }


# RunConfig fields settable from MAKA_* environment variables
ENV_FIELDS = {
    'corpus_dir': 'MAKA_CORPUS_DIR',
    'criteria_path': 'MAKA_CRITERIA_PATH',
    'strategy': 'MAKA_STRATEGY',
    'model_id': 'MAKA_MODEL_ID',
    'backend': 'MAKA_BACKEND',
    'cache_dir': 'MAKA_CACHE_DIR',
    'out_dir': 'MAKA_OUT_DIR',
    'max_concurrency': 'MAKA_MAX_CONCURRENCY',
    'token_budget': 'MAKA_TOKEN_BUDGET',
    'trial_threshold': 'MAKA_TRIAL_THRESHOLD',
    'seed': 'MAKA_SEED',
    'api_base_url': 'MAKA_API_BASE_URL',
    'search_url': 'MAKA_SEARCH_URL'
}

INT_FIELDS = {'max_concurrency', 'token_budget', 'trial_threshold', 'seed', 'max_tokens',
              'revision_limit', 'reask_limit', 'top_k'}
POSITIVE_FIELDS = {'max_concurrency', 'token_budget', 'trial_threshold', 'max_tokens', 'top_k'}
PATH_FIELDS = {'corpus_dir', 'criteria_path', 'cache_dir', 'out_dir', 'script_path',
               'snippets_path', 'prepared_path'}


@dataclass(frozen=True)
class RunConfig:
    corpus_dir: Optional[str] = None
    criteria_path: Optional[str] = None
    strategy: PromptStrategy = PromptStrategy.MAKA
    model_id: str = Config.MODEL_ID
    backend: BackendTag = BackendTag.HTTP
    cache_dir: Optional[str] = None
    out_dir: str = 'runs/latest'
    max_concurrency: int = 8
    token_budget: int = 12000
    trial_threshold: int = 100
    seed: Optional[int] = None
    script_path: Optional[str] = None
    replay_mode: str = 'strict'
    snippets_path: Optional[str] = str(Config.SNIPPETS_PATH)
    prepared_path: Optional[str] = None
    api_base_url: str = Config.API_BASE_URL
    search_url: str = Config.SEARCH_URL
    temperature: float = 0.0
    max_tokens: int = 1024
    revision_limit: int = 2
    reask_limit: int = 2
    top_k: int = 3
    variant: Optional[CriterionVariant] = None

    def validate(self) -> 'RunConfig':
        """Check the cross-field invariants; raises ConfigurationError"""
        if self.backend is BackendTag.SCRIPTED and not self.script_path:
            raise ConfigurationError('The scripted backend requires --script')
        if self.backend is BackendTag.REPLAY and not self.cache_dir:
            raise ConfigurationError('The replay backend requires --cache-dir')
        if self.replay_mode not in ('strict', 'record'):
            raise ConfigurationError(f'replay_mode must be strict or record, got {self.replay_mode!r}')
        for name in POSITIVE_FIELDS:
            if getattr(self, name) < 1:
                raise ConfigurationError(f'{name} must be positive', {'field': name})
        for name in ('revision_limit', 'reask_limit'):
            if getattr(self, name) < 0:
                raise ConfigurationError(f'{name} must be non-negative', {'field': name})
        if self.temperature < 0:
            raise ConfigurationError('temperature must be >= 0')
        return self

    def snapshot(self, relative_to: Optional[Path] = None) -> Dict[str, Any]:
        """
        JSON-ready copy of the config for the run manifest

        Args:
            relative_to: Directory path fields are made relative to

        Returns:
            dict of field values
        """
        data = asdict(self)
        for key, value in data.items():
            if hasattr(value, 'value'):
                data[key] = value.value
            if key in PATH_FIELDS and value and relative_to is not None:
                data[key] = os.path.relpath(Path(value).resolve(), Path(relative_to).resolve())
        return data


def _coerce(name: str, value: Any) -> Any:
    if value is None:
        return None
    try:
        if name in INT_FIELDS:
            return int(value)
        if name == 'temperature':
            return float(value)
        if name == 'strategy':
            return value if isinstance(value, PromptStrategy) else PromptStrategy(str(value).lower())
        if name == 'backend':
            return value if isinstance(value, BackendTag) else BackendTag(str(value).lower())
        if name == 'variant':
            return value if isinstance(value, CriterionVariant) else CriterionVariant(str(value).lower())
    except ValueError:
        raise ConfigurationError(f'Invalid value {value!r} for {name}', {'field': name})
    if name in PATH_FIELDS:
        return str(value)
    return value


def read_config_file(path: str) -> Dict[str, Any]:
    """Read a JSON config file whose keys mirror RunConfig field names"""
    try:
        with open(path, encoding='utf-8') as handle:
            data = json.load(handle)
    except OSError as e:
        raise ConfigurationError(f'Cannot read config file {path}: {e}')
    except json.JSONDecodeError as e:
        raise ConfigurationError(f'Config file {path} is not valid JSON: {e}')
    if not isinstance(data, dict):
        raise ConfigurationError(f'Config file {path} must hold a JSON object')

    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"Unknown config keys: {', '.join(unknown)}", {'keys': unknown})
    return data


def load_run_config(flags: Optional[Mapping[str, Any]] = None, config_path: Optional[str] = None,
                    environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """
    Build a RunConfig with precedence flags > config file > environment > defaults

    Args:
        flags: Values given on the command line (None means not given)
        config_path: Optional JSON config file
        environ: Environment mapping (defaults to os.environ)

    Returns:
        validated RunConfig
    """
    environ = os.environ if environ is None else environ
    values: Dict[str, Any] = {}

    for name, variable in ENV_FIELDS.items():
        if environ.get(variable):
            values[name] = environ[variable]

    if config_path:
        values.update(read_config_file(config_path))

    for name, value in (flags or {}).items():
        if value is not None:
            values[name] = value

    coerced = {name: _coerce(name, value) for name, value in values.items()}
    return RunConfig(**coerced).validate()
