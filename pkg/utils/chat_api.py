import logging
import time
from typing import Any, Callable, Dict, Optional, Tuple

import requests

from config.settings import Config
from models import BackendTag, ChatRequest, ChatResponse, RetryPolicy
from models.chat import RETRY_CONNECTION, RETRY_RATE_LIMIT, RETRY_SERVER_ERROR, RETRY_TIMEOUT
from utils.error_handling import PermanentFailure, TransientFailure

logger = logging.getLogger(__name__)


def parse_completion_payload(payload: Dict[str, Any], backend_tag: BackendTag) -> ChatResponse:
    """
    Read content and usage from a /v1/chat/completions response body

    Args:
        payload: Decoded JSON body
        backend_tag: Tag to stamp on the response

    Returns:
        ChatResponse
    """
    try:
        content = payload['choices'][0]['message']['content']
    except (KeyError, IndexError, TypeError):
        raise PermanentFailure('response has no choices[0].message.content')
    if not isinstance(content, str):
        raise PermanentFailure('response content is not a string')

    usage = payload.get('usage') or {}
    return ChatResponse(
        content=content,
        prompt_tokens=int(usage.get('prompt_tokens', 0) or 0),
        completion_tokens=int(usage.get('completion_tokens', 0) or 0),
        backend_tag=backend_tag
    )


def _classify_status(status_code: int) -> Optional[str]:
    if status_code == 429:
        return RETRY_RATE_LIMIT
    if 500 <= status_code < 600:
        return RETRY_SERVER_ERROR
    return None


class HttpChatBackend:
    """
    Client for an OpenAI-compatible chat-completions endpoint
    """

    tag = BackendTag.HTTP

    def __init__(self, api_key: str, base_url: Optional[str] = None,
                 retry_policy: Optional[RetryPolicy] = None, timeout: Optional[float] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.api_key = api_key
        self.base_url = (base_url or Config.API_BASE_URL).rstrip('/')
        self.retry_policy = retry_policy or RetryPolicy()
        self.timeout = timeout if timeout is not None else Config.REQUEST_TIMEOUT
        self.sleep = sleep
        self.headers = {
            'Content-Type': 'application/json',
            'Authorization': f'Bearer {api_key}'
        }

    @property
    def endpoint(self) -> str:
        return f"{self.base_url}/chat/completions"

    def complete(self, request: ChatRequest) -> ChatResponse:
        response, _ = self.complete_raw(request)
        return response

    def complete_raw(self, request: ChatRequest) -> Tuple[ChatResponse, Dict[str, Any]]:
        """
        POST a request, retrying transient failures per the retry policy

        Args:
            request: Chat request

        Returns:
            tuple: (ChatResponse, raw JSON body)
        """
        policy = self.retry_policy
        body = request.to_wire()
        last_error = 'no attempt made'

        for attempt in range(1, policy.max_attempts + 1):
            error_class = None
            try:
                response = requests.post(self.endpoint, json=body, headers=self.headers, timeout=self.timeout)

                if response.ok:
                    try:
                        payload = response.json()
                    except ValueError:
                        raise PermanentFailure('response body is not JSON', response.status_code)
                    return parse_completion_payload(payload, self.tag), payload

                error_class = _classify_status(response.status_code)
                last_error = f'HTTP {response.status_code}: {response.text[:200]}'
                if error_class is None:
                    raise PermanentFailure(last_error, response.status_code)

            except requests.Timeout:
                error_class = RETRY_TIMEOUT
                last_error = 'Chat completion request timeout'
            except requests.ConnectionError as e:
                error_class = RETRY_CONNECTION
                last_error = f'Network error: {str(e)}'
            except requests.RequestException as e:
                raise PermanentFailure(f'Request error: {str(e)}')

            if not policy.should_retry(error_class):
                break

            if attempt < policy.max_attempts:
                delay = policy.delay_seconds(attempt)
                logger.warning(f"Chat completion attempt {attempt}/{policy.max_attempts} failed ({last_error}); retrying in {delay:.2f}s")
                self.sleep(delay)

        raise TransientFailure(attempt, last_error)
