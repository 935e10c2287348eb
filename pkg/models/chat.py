from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, FrozenSet, Optional, Tuple

from utils.error_handling import InvalidRequestError


class ChatRole(str, Enum):
    SYSTEM = 'system'
    USER = 'user'
    ASSISTANT = 'assistant'


class BackendTag(str, Enum):
    HTTP = 'http'
    REPLAY = 'replay'
    SCRIPTED = 'scripted'


@dataclass(frozen=True)
class ChatMessage:
    role: ChatRole
    content: str

    def __post_init__(self):
        if not self.content:
            raise InvalidRequestError(f'{self.role.value} message has empty content')

    def to_dict(self):
        return {'role': self.role.value, 'content': self.content}


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: Tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int = 1024
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.messages:
            raise InvalidRequestError('messages must not be empty')
        if self.messages[0].role is not ChatRole.SYSTEM:
            raise InvalidRequestError('first message must have the system role')
        if self.temperature < 0:
            raise InvalidRequestError(f'temperature must be >= 0, got {self.temperature}')
        if self.max_tokens < 1:
            raise InvalidRequestError(f'max_tokens must be positive, got {self.max_tokens}')

    def with_messages(self, messages: Tuple[ChatMessage, ...]) -> 'ChatRequest':
        return ChatRequest(self.model_id, tuple(messages), self.temperature, self.max_tokens, self.seed)

    def transcript_text(self) -> str:
        return '\n'.join(message.content for message in self.messages)

    def to_wire(self) -> Dict[str, Any]:
        """Body of a /v1/chat/completions POST"""
        body = {
            'model': self.model_id,
            'messages': [message.to_dict() for message in self.messages],
            'temperature': self.temperature,
            'max_tokens': self.max_tokens
        }
        if self.seed is not None:
            body['seed'] = self.seed
        return body


@dataclass(frozen=True)
class ChatResponse:
    content: str
    prompt_tokens: int
    completion_tokens: int
    backend_tag: BackendTag

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError('token counts must be non-negative')


RETRY_TIMEOUT = 'timeout'
RETRY_CONNECTION = 'connection'
RETRY_RATE_LIMIT = 'rate_limit'
RETRY_SERVER_ERROR = 'server_error'


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff for transient chat-completion failures"""
    max_attempts: int = 4
    base_delay_ms: int = 500
    backoff_factor: float = 2.0
    retry_on: FrozenSet[str] = field(default_factory=lambda: frozenset({
        RETRY_TIMEOUT, RETRY_CONNECTION, RETRY_RATE_LIMIT, RETRY_SERVER_ERROR
    }))

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError('max_attempts must be at least 1')
        if self.base_delay_ms < 1:
            raise ValueError('base_delay_ms must be positive')
        if self.backoff_factor <= 1:
            raise ValueError('backoff_factor must be greater than 1')

    def delay_seconds(self, attempt: int) -> float:
        """
        Delay before the next attempt

        Args:
            attempt: Number of the attempt that just failed (1-based)

        Returns:
            Delay in seconds
        """
        return self.base_delay_ms * (self.backoff_factor ** (attempt - 1)) / 1000

    def should_retry(self, error_class: str) -> bool:
        return error_class in self.retry_on
