"""
Content-addressed store of chat exchanges, and the backend that replays it
"""
import hashlib
import json
import logging
import os
import tempfile
import threading
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from models import BackendTag, ChatRequest, ChatResponse
from utils.chat_api import parse_completion_payload
from utils.error_handling import ArtifactError, ConfigurationError, ReplayMiss

logger = logging.getLogger(__name__)

REPLAY_MODES = ('strict', 'record')


def _field(name: str, value: str) -> str:
    encoded = value.encode('utf-8')
    return f"{name}:{len(encoded)}:{value};"


def canonical_serialization(request: ChatRequest) -> str:
    """
    Field-ordered, length-prefixed rendering of the parts of a request that
    determine its response
    """
    parts = [
        _field('model_id', request.model_id),
        _field('message_count', str(len(request.messages)))
    ]
    for message in request.messages:
        parts.append(_field('role', message.role.value))
        parts.append(_field('content', message.content))
    parts.append(_field('temperature', repr(float(request.temperature))))
    parts.append(_field('max_tokens', str(request.max_tokens)))
    parts.append(_field('seed', 'none' if request.seed is None else str(request.seed)))
    return ''.join(parts)


def cache_key(request: ChatRequest) -> str:
    """SHA-256 hex digest of the canonical serialization"""
    return hashlib.sha256(canonical_serialization(request).encode('utf-8')).hexdigest()


class ReplayCache:
    """
    One JSON file per request digest; writes go through a single lock
    """

    def __init__(self, cache_dir: Union[str, Path]):
        self.cache_dir = Path(cache_dir)
        self._write_lock = threading.Lock()

    def path_for(self, digest: str) -> Path:
        return self.cache_dir / f"{digest}.json"

    def lookup(self, request: ChatRequest) -> Optional[Dict[str, Any]]:
        path = self.path_for(cache_key(request))
        if not path.exists():
            return None
        try:
            with open(path, encoding='utf-8') as handle:
                entry = json.load(handle)
        except (OSError, json.JSONDecodeError) as e:
            raise ArtifactError(f'Corrupt cache entry {path.name}: {e}', {'path': str(path)})
        return entry['response']

    def store(self, request: ChatRequest, raw_response: Dict[str, Any]) -> Path:
        """
        Persist a request with the provider's raw response body

        Args:
            request: Chat request that produced the response
            raw_response: Raw JSON body as returned on the wire

        Returns:
            Path of the cache entry
        """
        digest = cache_key(request)
        entry = {
            'digest': digest,
            'canonical_request': canonical_serialization(request),
            'request': request.to_wire(),
            'response': raw_response
        }
        path = self.path_for(digest)
        with self._write_lock:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            fd, tmp_name = tempfile.mkstemp(dir=self.cache_dir, suffix='.tmp')
            with os.fdopen(fd, 'w', encoding='utf-8') as handle:
                json.dump(entry, handle, ensure_ascii=False, indent=2, sort_keys=True)
            os.replace(tmp_name, path)
        logger.debug(f"Recorded exchange {digest[:12]}")
        return path


class ReplayBackend:
    """
    Answers from the cache; on a miss either fails (strict) or calls the
    live backend and records the exchange (record)
    """

    tag = BackendTag.REPLAY

    def __init__(self, cache: ReplayCache, mode: str = 'strict', live=None):
        if mode not in REPLAY_MODES:
            raise ConfigurationError(f'Unknown replay mode {mode!r}')
        if mode == 'record' and live is None:
            raise ConfigurationError('Record mode needs a live backend')
        self.cache = cache
        self.mode = mode
        self.live = live

    def complete(self, request: ChatRequest) -> ChatResponse:
        response, _ = self.complete_raw(request)
        return response

    def complete_raw(self, request: ChatRequest) -> Tuple[ChatResponse, Dict[str, Any]]:
        stored = self.cache.lookup(request)
        if stored is not None:
            return parse_completion_payload(stored, BackendTag.REPLAY), stored

        if self.mode == 'strict':
            raise ReplayMiss(cache_key(request))

        response, raw = self.live.complete_raw(request)
        self.cache.store(request, raw)
        return response, raw
