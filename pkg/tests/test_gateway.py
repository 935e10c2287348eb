import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from unittest.mock import Mock, patch

import pytest
import requests
from flask import Flask, jsonify, request as flask_request
from werkzeug.serving import make_server

from config.settings import RunConfig
from models import BackendTag, ChatMessage, ChatRequest, ChatRole, RetryPolicy
from services.gateway import ChatGateway, build_backend
from utils.chat_api import HttpChatBackend
from utils.error_handling import (
    ConfigurationError,
    FixtureExhausted,
    InvalidRequestError,
    PermanentFailure,
    ReplayMiss,
    TransientFailure
)
from utils.replay_cache import ReplayBackend, ReplayCache, cache_key, canonical_serialization
from utils.scripted_backend import ScriptedBackend


def make_request(user='Criterion: ENGLISH', system='You are the Matching Agent.', seed=None):
    return ChatRequest(
        model_id='gpt-4',
        messages=(ChatMessage(ChatRole.SYSTEM, system), ChatMessage(ChatRole.USER, user)),
        seed=seed
    )


def completion_body(content, prompt_tokens=12, completion_tokens=3):
    return {
        'id': 'chatcmpl-1',
        'choices': [{'index': 0, 'message': {'role': 'assistant', 'content': content}, 'finish_reason': 'stop'}],
        'usage': {'prompt_tokens': prompt_tokens, 'completion_tokens': completion_tokens}
    }


def http_response(status_code, body=None):
    response = Mock()
    response.ok = 200 <= status_code < 300
    response.status_code = status_code
    response.text = json.dumps(body) if body is not None else 'error'
    response.json.return_value = body
    return response


class TestChatRequest:

    def test_first_message_must_be_system(self):
        with pytest.raises(InvalidRequestError):
            ChatRequest('gpt-4', (ChatMessage(ChatRole.USER, 'hi'),))

    def test_empty_messages_rejected(self):
        with pytest.raises(InvalidRequestError):
            ChatRequest('gpt-4', ())

    def test_negative_temperature_rejected(self):
        with pytest.raises(InvalidRequestError):
            ChatRequest('gpt-4', (ChatMessage(ChatRole.SYSTEM, 's'),), temperature=-0.1)

    def test_wire_body(self):
        body = make_request(seed=7).to_wire()

        assert body['model'] == 'gpt-4'
        assert body['messages'][0] == {'role': 'system', 'content': 'You are the Matching Agent.'}
        assert body['temperature'] == 0.0
        assert body['seed'] == 7


class TestCacheKey:

    def test_equal_requests_share_a_key(self):
        assert cache_key(make_request()) == cache_key(make_request())

    def test_content_changes_the_key(self):
        assert cache_key(make_request(user='Criterion: HBA1C')) != cache_key(make_request())

    def test_seed_changes_the_key(self):
        assert cache_key(make_request(seed=0)) != cache_key(make_request())

    def test_message_boundaries_are_unambiguous(self):
        first = ChatRequest('gpt-4', (ChatMessage(ChatRole.SYSTEM, 'ab'), ChatMessage(ChatRole.USER, 'c')))
        second = ChatRequest('gpt-4', (ChatMessage(ChatRole.SYSTEM, 'a'), ChatMessage(ChatRole.USER, 'bc')))

        assert canonical_serialization(first) != canonical_serialization(second)
        assert cache_key(first) != cache_key(second)

    def test_key_is_sha256_hex(self):
        key = cache_key(make_request())
        assert len(key) == 64
        int(key, 16)


class TestHttpChatBackend:

    @patch('requests.post')
    def test_success(self, mock_post):
        mock_post.return_value = http_response(200, completion_body('DECISION: MET'))
        backend = HttpChatBackend('sk-test', 'https://llm.example/v1')

        response = backend.complete(make_request())

        assert response.content == 'DECISION: MET'
        assert response.prompt_tokens == 12
        assert response.backend_tag is BackendTag.HTTP
        args, kwargs = mock_post.call_args
        assert args[0] == 'https://llm.example/v1/chat/completions'
        assert kwargs['headers']['Authorization'] == 'Bearer sk-test'

    @patch('requests.post')
    def test_retries_rate_limit_then_succeeds(self, mock_post):
        mock_post.side_effect = [
            http_response(429),
            http_response(429),
            http_response(200, completion_body('DECISION: NOT MET'))
        ]
        sleeps = []
        backend = HttpChatBackend('sk-test', 'https://llm.example/v1', sleep=sleeps.append)

        response = backend.complete(make_request())

        assert response.content == 'DECISION: NOT MET'
        assert mock_post.call_count == 3
        assert sleeps == [0.5, 1.0]

    @patch('requests.post')
    def test_exhausted_retries_raise_transient_failure(self, mock_post):
        mock_post.return_value = http_response(503)
        backend = HttpChatBackend('sk-test', 'https://llm.example/v1', sleep=lambda _: None)

        with pytest.raises(TransientFailure) as excinfo:
            backend.complete(make_request())

        assert mock_post.call_count == 4
        assert excinfo.value.details['attempts'] == 4

    @patch('requests.post')
    def test_timeouts_are_retried(self, mock_post):
        mock_post.side_effect = [requests.Timeout(), http_response(200, completion_body('ok'))]
        backend = HttpChatBackend('sk-test', 'https://llm.example/v1', sleep=lambda _: None)

        assert backend.complete(make_request()).content == 'ok'

    @patch('requests.post')
    def test_client_error_is_permanent(self, mock_post):
        mock_post.return_value = http_response(401, {'error': 'bad key'})
        backend = HttpChatBackend('sk-test', 'https://llm.example/v1', sleep=lambda _: None)

        with pytest.raises(PermanentFailure):
            backend.complete(make_request())
        assert mock_post.call_count == 1

    @patch('requests.post')
    def test_malformed_body_is_permanent(self, mock_post):
        mock_post.return_value = http_response(200, {'choices': []})
        backend = HttpChatBackend('sk-test', 'https://llm.example/v1')

        with pytest.raises(PermanentFailure):
            backend.complete(make_request())

    def test_retry_policy_delays(self):
        policy = RetryPolicy()
        assert [policy.delay_seconds(attempt) for attempt in (1, 2, 3)] == [0.5, 1.0, 2.0]


class TestScriptedBackend:

    def test_first_matching_rule_answers(self):
        backend = ScriptedBackend([
            {'expect': 'HBA1C', 'response': 'DECISION: MET'},
            {'response': 'DECISION: NOT MET', 'times': None}
        ])

        assert backend.complete(make_request(user='Criterion: HBA1C')).content == 'DECISION: MET'
        assert backend.complete(make_request(user='Criterion: HBA1C')).content == 'DECISION: NOT MET'
        assert backend.complete(make_request()).content == 'DECISION: NOT MET'
        assert backend.count_calls('HBA1C') == 2

    def test_exhausted_script_raises(self):
        backend = ScriptedBackend(['only once'])
        backend.complete(make_request())

        with pytest.raises(FixtureExhausted):
            backend.complete(make_request())

    def test_invalid_rule_is_configuration_error(self):
        with pytest.raises(ConfigurationError):
            ScriptedBackend([{'expect': '(', 'response': 'x'}])

    def test_loads_script_file(self, tmp_path):
        path = tmp_path / 'script.json'
        path.write_text(json.dumps({'rules': [{'expect': 'ENGLISH', 'response': 'DECISION: MET', 'times': None}]}))

        backend = ScriptedBackend.from_file(path)

        assert backend.complete(make_request()).backend_tag is BackendTag.SCRIPTED


class TestChatGateway:

    def test_bounds_requests_in_flight(self):
        state = {'active': 0, 'peak': 0}
        lock = threading.Lock()

        class SlowBackend:
            tag = BackendTag.SCRIPTED

            def complete(self, request):
                with lock:
                    state['active'] += 1
                    state['peak'] = max(state['peak'], state['active'])
                time.sleep(0.02)
                with lock:
                    state['active'] -= 1
                return ScriptedBackend([{'response': 'ok', 'times': None}]).complete(request)

        gateway = ChatGateway(SlowBackend(), max_in_flight=2)
        with ThreadPoolExecutor(max_workers=8) as executor:
            list(executor.map(lambda _: gateway.complete(make_request()), range(16)))

        assert state['peak'] <= 2

    def test_scripted_backend_needs_script(self):
        with pytest.raises(ConfigurationError):
            RunConfig(backend=BackendTag.SCRIPTED).validate()

    def test_http_backend_needs_api_key(self):
        with pytest.raises(ConfigurationError):
            build_backend(RunConfig(), api_key='')

    def test_strict_replay_miss(self, tmp_path):
        backend = build_backend(RunConfig(backend=BackendTag.REPLAY, cache_dir=str(tmp_path)).validate())

        with pytest.raises(ReplayMiss):
            backend.complete(make_request())


class StubCompletionServer:
    """OpenAI-compatible stub that answers from the last message and counts hits"""

    def __init__(self):
        self.hits = 0
        app = Flask('stub-completions')

        @app.route('/v1/chat/completions', methods=['POST'])
        def completions():
            self.hits += 1
            body = flask_request.get_json()
            last = body['messages'][-1]['content']
            return jsonify(completion_body(f'echo: {last}', prompt_tokens=len(last.split())))

        self.server = make_server('127.0.0.1', 0, app)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def base_url(self):
        return f'http://127.0.0.1:{self.server.server_port}/v1'

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()


class TestReplayFidelity:

    def test_recorded_exchanges_replay_without_network(self, tmp_path):
        requests_to_record = [make_request(user=f'Criterion: C{index}') for index in range(5)]
        cache = ReplayCache(tmp_path / 'cache')

        with StubCompletionServer() as stub:
            live = HttpChatBackend('sk-test', stub.base_url)
            recorder = ReplayBackend(cache, mode='record', live=live)
            recorded = [recorder.complete_raw(req) for req in requests_to_record]
            assert stub.hits == 5
            files = {path.name: path.read_bytes() for path in (tmp_path / 'cache').glob('*.json')}

            stub.hits = 0
            replayer = ReplayBackend(ReplayCache(tmp_path / 'cache'), mode='strict')
            replayed = [replayer.complete_raw(req) for req in requests_to_record]

            assert stub.hits == 0

        assert len(files) == 5
        for (live_response, live_raw), (replay_response, replay_raw) in zip(recorded, replayed):
            assert replay_raw == live_raw
            assert replay_response.content == live_response.content
            assert replay_response.backend_tag is BackendTag.REPLAY
        assert {p.name: p.read_bytes() for p in (tmp_path / 'cache').glob('*.json')} == files

    def test_record_mode_only_calls_live_on_miss(self, tmp_path):
        live = Mock()
        live.complete_raw.return_value = (Mock(content='first'), completion_body('first'))
        backend = ReplayBackend(ReplayCache(tmp_path), mode='record', live=live)

        backend.complete(make_request())
        second = backend.complete(make_request())

        assert live.complete_raw.call_count == 1
        assert second.content == 'first'
