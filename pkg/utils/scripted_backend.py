"""
Deterministic backend that answers from a script of expectation rules
"""
import json
import logging
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Pattern, Union

from models import BackendTag, ChatRequest, ChatResponse
from utils.error_handling import ConfigurationError, FixtureExhausted

logger = logging.getLogger(__name__)


@dataclass
class ScriptRule:
    response: str
    expect: Optional[Pattern] = None
    remaining: Optional[int] = 1

    def matches(self, text: str) -> bool:
        if self.remaining is not None and self.remaining <= 0:
            return False
        return self.expect is None or self.expect.search(text) is not None


def _rule_from_dict(item: Dict[str, Any], position: int) -> ScriptRule:
    if not isinstance(item, dict) or not isinstance(item.get('response'), str):
        raise ConfigurationError(f'Script rule {position} needs a string "response"')
    try:
        expect = re.compile(item['expect'], re.MULTILINE) if item.get('expect') else None
    except re.error as e:
        raise ConfigurationError(f'Script rule {position} has an invalid pattern: {e}')
    times = item.get('times', 1)
    if times is not None and (not isinstance(times, int) or times < 1):
        raise ConfigurationError(f'Script rule {position}: times must be a positive integer or null')
    return ScriptRule(response=item['response'], expect=expect, remaining=times)


class ScriptedBackend:
    """
    Each request consumes the first rule whose pattern matches the request
    text (all message contents joined by newlines). A rule with times=None
    never runs out.
    """

    tag = BackendTag.SCRIPTED

    def __init__(self, rules: Iterable[Union[ScriptRule, Dict[str, Any], str]] = ()):
        self.rules: List[ScriptRule] = []
        self.calls: List[ChatRequest] = []
        self._lock = threading.Lock()
        for rule in rules:
            self.add(rule)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> 'ScriptedBackend':
        """
        Load a script: a JSON list of rules or an object with a "rules" list

        Args:
            path: Script file

        Returns:
            ScriptedBackend
        """
        try:
            data = json.loads(Path(path).read_text(encoding='utf-8'))
        except OSError as e:
            raise ConfigurationError(f'Cannot read script {path}: {e}')
        except json.JSONDecodeError as e:
            raise ConfigurationError(f'Script {path} is not valid JSON: {e}')
        rules = data.get('rules') if isinstance(data, dict) else data
        if not isinstance(rules, list):
            raise ConfigurationError(f'Script {path} must hold a list of rules')
        return cls(_rule_from_dict(item, position) for position, item in enumerate(rules))

    def add(self, rule: Union[ScriptRule, Dict[str, Any], str]) -> 'ScriptedBackend':
        if isinstance(rule, str):
            rule = ScriptRule(response=rule)
        elif isinstance(rule, dict):
            rule = _rule_from_dict(rule, len(self.rules))
        with self._lock:
            self.rules.append(rule)
        return self

    def complete(self, request: ChatRequest) -> ChatResponse:
        text = request.transcript_text()
        with self._lock:
            self.calls.append(request)
            for rule in self.rules:
                if rule.matches(text):
                    if rule.remaining is not None:
                        rule.remaining -= 1
                    content = rule.response
                    break
            else:
                raise FixtureExhausted(text[-200:])

        return ChatResponse(
            content=content,
            prompt_tokens=len(text.split()),
            completion_tokens=len(content.split()),
            backend_tag=BackendTag.SCRIPTED
        )

    def count_calls(self, pattern: str) -> int:
        """Number of recorded requests whose text matches a pattern"""
        compiled = re.compile(pattern, re.MULTILINE)
        with self._lock:
            return sum(1 for request in self.calls if compiled.search(request.transcript_text()))
