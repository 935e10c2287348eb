import logging
import threading
import time
from typing import Optional

from config.settings import Config, RunConfig
from models import BackendTag, ChatRequest, ChatResponse, RetryPolicy
from utils.chat_api import HttpChatBackend
from utils.error_handling import ConfigurationError, GatewayError, log_gateway_exchange
from utils.replay_cache import ReplayBackend, ReplayCache, cache_key
from utils.scripted_backend import ScriptedBackend

logger = logging.getLogger(__name__)


class ChatGateway:
    """
    Blocking chat-completion entry point shared by every agent; bounds the
    number of requests in flight across threads
    """

    def __init__(self, backend, max_in_flight: int = 8):
        if max_in_flight < 1:
            raise ConfigurationError('max_in_flight must be positive')
        self.backend = backend
        self.max_in_flight = max_in_flight
        self._slots = threading.BoundedSemaphore(max_in_flight)

    @property
    def backend_tag(self) -> BackendTag:
        return self.backend.tag

    def complete(self, request: ChatRequest) -> ChatResponse:
        """
        Send one request to the configured backend

        Args:
            request: Chat request (never modified)

        Returns:
            ChatResponse
        """
        digest = cache_key(request)
        started = time.monotonic()
        with self._slots:
            try:
                response = self.backend.complete(request)
            except GatewayError as e:
                log_gateway_exchange(self.backend_tag.value, digest, success=False, error=e.message)
                raise
        log_gateway_exchange(self.backend_tag.value, digest,
                             duration_ms=(time.monotonic() - started) * 1000)
        return response


def build_backend(run_config: RunConfig, api_key: Optional[str] = None, sleep=time.sleep):
    """
    Create the backend a run config asks for

    Args:
        run_config: Validated run configuration
        api_key: Provider key (defaults to MAKA_API_KEY)
        sleep: Sleep function used between retries

    Returns:
        HttpChatBackend, ReplayBackend or ScriptedBackend
    """
    api_key = Config.API_KEY if api_key is None else api_key

    def http_backend():
        if not api_key:
            raise ConfigurationError('MAKA_API_KEY must be set for live chat completions')
        return HttpChatBackend(api_key, run_config.api_base_url, RetryPolicy(), sleep=sleep)

    if run_config.backend is BackendTag.SCRIPTED:
        return ScriptedBackend.from_file(run_config.script_path)

    if run_config.backend is BackendTag.REPLAY:
        live = http_backend() if run_config.replay_mode == 'record' else None
        return ReplayBackend(ReplayCache(run_config.cache_dir), run_config.replay_mode, live)

    live = http_backend()
    if run_config.cache_dir:
        # Live runs with a cache dir record every exchange for later replay.
        return _RecordingHttpBackend(live, ReplayCache(run_config.cache_dir))
    return live


class _RecordingHttpBackend:
    tag = BackendTag.HTTP

    def __init__(self, live: HttpChatBackend, cache: ReplayCache):
        self.live = live
        self.cache = cache

    def complete(self, request: ChatRequest) -> ChatResponse:
        response, raw = self.live.complete_raw(request)
        self.cache.store(request, raw)
        return response


def build_gateway(run_config: RunConfig, backend=None) -> ChatGateway:
    backend = backend if backend is not None else build_backend(run_config)
    return ChatGateway(backend, max_in_flight=run_config.max_concurrency)
