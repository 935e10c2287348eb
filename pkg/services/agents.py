"""
The five agents: prompt builders over the template library plus strict
response parsers. Agents hold no state; every model call goes through the
completion capability passed in (anything with complete(ChatRequest)).
"""
import logging
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, List, Optional, Sequence, Tuple

from config.settings import Config, RunConfig
from models import (
    AugmentationRoute,
    AugmentedCriterion,
    ChatMessage,
    ChatRequest,
    ChatRole,
    Criterion,
    EligibilityLabel,
    MatchDecision,
    PatientRecord,
    ProbeDecision,
    ProbeVerdict,
    PromptStrategy,
    RouteDecision,
    SupervisionDecision,
    SupervisionVerdict
)
from models.pipeline import FinalCriterion
from utils.bm25 import TOKEN_PATTERN, query_top_k
from utils.error_handling import AugmentFormatError, ConfigurationError, DecisionParseError, ParseError
from utils.prompt_templates import PromptLibrary
from utils.replay_cache import cache_key

logger = logging.getLogger(__name__)

DEFAULT_AUGMENT_RATIONALE = 'The criterion lacks detail needed to screen patients reliably.'
VERBATIM_FAILURE = 'verbatim retention failed'
UNPARSEABLE_SUPERVISION = 'unparseable supervision response'
UNSTATED_REJECTION = 'supervisor rejected the augmentation without a reason'

PROBE_FORMAT = 'VERDICT: SUFFICIENT\nor\nVERDICT: AUGMENT\nREASON: <the gap you found>'
ROUTE_FORMAT = 'ROUTE: SELF\nor\nROUTE: RETRIEVAL\nor\nROUTE: SEARCH'
AUGMENT_FORMAT = 'CRITERIA: <restated criterion>\nEXPLANATION: <explanation>'
JUDGMENT_FORMAT = 'JUDGMENT: PASS\nor\nJUDGMENT: FAIL\nREASON: <problem>'
DECISION_FORMAT = 'DECISION: MET\nor\nDECISION: NOT MET'

VERDICT_LINE = re.compile(r'^\s*VERDICT:\s*(SUFFICIENT|AUGMENT)\s*\.?\s*$', re.IGNORECASE | re.MULTILINE)
REASON_LINE = re.compile(r'^\s*REASON:\s*(.+?)\s*$', re.IGNORECASE | re.MULTILINE)
ROUTE_LINE = re.compile(r'^\s*ROUTE:\s*(SELF|RETRIEVAL|SEARCH)\s*\.?\s*$', re.IGNORECASE | re.MULTILINE)
JUDGMENT_LINE = re.compile(r'^\s*JUDGMENT:\s*(PASS|FAIL)\s*\.?\s*$', re.IGNORECASE | re.MULTILINE)
DECISION_LINE = re.compile(r'DECISION:\s*(MET|NOT\s+MET)\s*\.?', re.IGNORECASE)
AUGMENT_SECTIONS = re.compile(
    r'^\s*CRITERIA:\s*(?P<criteria>.*?)\s*^\s*EXPLANATION:\s*(?P<explanation>.*?)\s*\Z',
    re.IGNORECASE | re.MULTILINE | re.DOTALL
)
SENTENCE_END = re.compile(r'(?<=[.!?])\s+')

ROUTES = {
    'SELF': AugmentationRoute.SELF_AUGMENT,
    'RETRIEVAL': AugmentationRoute.RETRIEVAL,
    'SEARCH': AugmentationRoute.ONLINE_SEARCH
}
AUGMENT_TEMPLATES = {
    AugmentationRoute.SELF_AUGMENT: 'self_augment',
    AugmentationRoute.RETRIEVAL: 'retrieval_augment',
    AugmentationRoute.ONLINE_SEARCH: 'search_augment'
}

# Function words ignored by the verbatim rule
STOPWORDS = frozenset({
    'a', 'an', 'the', 'of', 'to', 'in', 'on', 'at', 'for', 'with', 'and', 'or', 'by',
    'as', 'is', 'are', 'be', 'been', 'was', 'were', 'that', 'this', 'which', 'who'
})

# Comparison operators count as content tokens alongside words and numbers
CONTENT_TOKEN = re.compile(r'[<>]=?|[≤≥]|' + TOKEN_PATTERN.pattern)
OPERATOR_SPELLINGS = {'<=': '≤', '>=': '≥'}


@lru_cache(maxsize=1)
def default_prompts() -> PromptLibrary:
    return PromptLibrary.load(Config.PROMPTS_DIR)


@dataclass(frozen=True)
class AgentSettings:
    model_id: str = Config.MODEL_ID
    temperature: float = 0.0
    max_tokens: int = 1024
    seed: Optional[int] = None
    reask_limit: int = 2
    token_budget: int = 12000
    fallback_label: EligibilityLabel = EligibilityLabel.NOT_MET
    top_k: int = 3
    prompts: Optional[PromptLibrary] = field(default=None, compare=False)

    @classmethod
    def from_run_config(cls, run_config: RunConfig, prompts: Optional[PromptLibrary] = None) -> 'AgentSettings':
        return cls(
            model_id=run_config.model_id,
            temperature=run_config.temperature,
            max_tokens=run_config.max_tokens,
            seed=run_config.seed,
            reask_limit=run_config.reask_limit,
            token_budget=run_config.token_budget,
            top_k=run_config.top_k,
            prompts=prompts
        )

    @property
    def library(self) -> PromptLibrary:
        return self.prompts or default_prompts()


@dataclass(frozen=True)
class Exchange:
    """Outcome of one prompt plus its re-asks"""
    value: Any
    parse_ok: bool
    digests: Tuple[str, ...]
    content: str
    last_request: ChatRequest


def build_request(settings: AgentSettings, template: str, **values: Any) -> ChatRequest:
    rendered = settings.library[template].render(**values)
    return ChatRequest(
        model_id=settings.model_id,
        messages=(ChatMessage(ChatRole.SYSTEM, rendered['system']),
                  ChatMessage(ChatRole.USER, rendered['user'])),
        temperature=settings.temperature,
        max_tokens=settings.max_tokens,
        seed=settings.seed
    )


def converse(llm, settings: AgentSettings, request: ChatRequest,
             parser: Callable[[str], Any], expected_format: str) -> Exchange:
    """
    Send a request and re-ask up to settings.reask_limit times while the
    parser raises ParseError

    Args:
        llm: Completion capability
        settings: Agent settings
        request: First request of the conversation
        parser: Maps reply text to a value or raises ParseError
        expected_format: Format reminder for the re-ask prompt

    Returns:
        Exchange; value is None when every reply failed to parse
    """
    digests: List[str] = []
    content = ''
    for attempt in range(settings.reask_limit + 1):
        digests.append(cache_key(request))
        content = llm.complete(request).content
        try:
            return Exchange(parser(content), True, tuple(digests), content, request)
        except ParseError as e:
            logger.debug(f"Unparseable reply (attempt {attempt + 1}): {e.message}")
            if attempt == settings.reask_limit:
                break
            reask = settings.library['reask'].render(expected_format=expected_format)
            request = request.with_messages(request.messages + (
                ChatMessage(ChatRole.ASSISTANT, content or '(empty reply)'),
                ChatMessage(ChatRole.USER, reask['user'])
            ))
    return Exchange(None, False, tuple(digests), content, request)


def _last(pattern: re.Pattern, text: str) -> Optional[str]:
    matches = pattern.findall(text)
    return matches[-1] if matches else None


def _parse_probe(text: str) -> Tuple[ProbeDecision, str]:
    verdict = _last(VERDICT_LINE, text)
    if verdict is None:
        raise ParseError('Reply has no VERDICT line', 'PROBE_PARSE_ERROR')
    if verdict.upper() == 'SUFFICIENT':
        return ProbeDecision.SUFFICIENT, ''
    reason = REASON_LINE.search(text)
    return ProbeDecision.NEEDS_AUGMENTATION, reason.group(1) if reason else DEFAULT_AUGMENT_RATIONALE


def probe(criterion: Criterion, llm, settings: Optional[AgentSettings] = None) -> ProbeVerdict:
    """
    Ask whether a criterion is detailed enough to match against as written

    Returns:
        ProbeVerdict; Sufficient with parse_ok=False when no reply parses
    """
    settings = settings or AgentSettings()
    request = build_request(settings, 'probe', criterion_id=criterion.id,
                            criterion_definition=criterion.definition)
    exchange = converse(llm, settings, request, _parse_probe, PROBE_FORMAT)
    if not exchange.parse_ok:
        logger.warning(f"Probe for {criterion.id} unparseable; treating the criterion as sufficient")
        return ProbeVerdict(ProbeDecision.SUFFICIENT, '', False, exchange.digests)
    decision, rationale = exchange.value
    return ProbeVerdict(decision, rationale, True, exchange.digests)


def _parse_route(text: str) -> AugmentationRoute:
    route = _last(ROUTE_LINE, text)
    if route is None:
        raise ParseError('Reply has no valid ROUTE line', 'ROUTE_PARSE_ERROR')
    return ROUTES[route.upper()]


def navigate(criterion: Criterion, rationale: str, llm, settings: Optional[AgentSettings] = None) -> RouteDecision:
    settings = settings or AgentSettings()
    request = build_request(settings, 'navigate', criterion_id=criterion.id,
                            criterion_definition=criterion.definition, rationale=rationale)
    exchange = converse(llm, settings, request, _parse_route, ROUTE_FORMAT)
    if not exchange.parse_ok:
        logger.warning(f"Route for {criterion.id} unparseable; using self-augmentation")
        return RouteDecision(AugmentationRoute.SELF_AUGMENT, False, exchange.digests)
    return RouteDecision(exchange.value, True, exchange.digests)


def _parse_sections(text: str) -> Tuple[str, str]:
    match = AUGMENT_SECTIONS.search(text)
    if not match:
        raise ParseError('Reply lacks a CRITERIA or EXPLANATION section', 'AUGMENT_PARSE_ERROR')
    criteria_line = ' '.join(match.group('criteria').split())
    explanation = match.group('explanation').strip()
    if not criteria_line or not explanation:
        raise ParseError('Reply has an empty CRITERIA or EXPLANATION section', 'AUGMENT_PARSE_ERROR')
    return criteria_line, explanation


def _feedback_text(feedback: Sequence[str]) -> str:
    if not feedback:
        return ''
    lines = '\n'.join(f'- {reason}' for reason in feedback)
    return f'\nYour previous version was rejected for these reasons:\n{lines}\nRevise it to address them.\n'


def augment(criterion: Criterion, route: AugmentationRoute, llm, index=None, search_client=None,
            rationale: str = '', revision: int = 0, feedback: Sequence[str] = (),
            settings: Optional[AgentSettings] = None) -> AugmentedCriterion:
    """
    Enrich a criterion through one augmentation route

    Args:
        criterion: Criterion to enrich
        route: Augmentation route
        llm: Completion capability
        index: SnippetIndex (required by the retrieval route)
        search_client: Object with search(query, k) (required by the search route)
        rationale: Gap reported by the probe
        revision: Revision number of this attempt
        feedback: Supervision reasons from the rejected previous revision

    Returns:
        AugmentedCriterion
    """
    settings = settings or AgentSettings()
    evidence: Tuple[str, ...] = ()
    context = ''

    if route is AugmentationRoute.RETRIEVAL:
        if index is None:
            raise ConfigurationError('The retrieval route requires a snippet index')
        hits = query_top_k(index, criterion.definition, k=settings.top_k)
        evidence = tuple(hit.snippet.id for hit in hits)
        context = '\n'.join(f'[{hit.snippet.id}] {hit.snippet.text}' for hit in hits) \
            or 'No relevant snippets were found.'
    elif route is AugmentationRoute.ONLINE_SEARCH:
        if search_client is None:
            raise ConfigurationError('The online search route requires a search client')
        results = search_client.search(criterion.definition, settings.top_k)
        evidence = tuple(result.url for result in results if result.url)
        context = '\n'.join(f'- {result.title}: {result.summary}' for result in results) \
            or 'No search results were found.'

    request = build_request(
        settings, AUGMENT_TEMPLATES[route],
        criterion_id=criterion.id,
        criterion_definition=criterion.definition,
        rationale=rationale or DEFAULT_AUGMENT_RATIONALE,
        snippets=context,
        feedback=_feedback_text(feedback)
    )
    exchange = converse(llm, settings, request, _parse_sections, AUGMENT_FORMAT)
    if not exchange.parse_ok:
        raise AugmentFormatError(criterion.id, exchange.digests)

    criteria_line, explanation = exchange.value
    return AugmentedCriterion(criterion.id, criteria_line, explanation, route, revision,
                              evidence, exchange.digests)


def _content_tokens(text: str) -> List[str]:
    normalized = ' '.join(text.casefold().split()).rstrip('.,;:!? ')
    tokens = (OPERATOR_SPELLINGS.get(token, token) for token in CONTENT_TOKEN.findall(normalized))
    return [token for token in tokens if token not in STOPWORDS]


def first_sentence(text: str) -> str:
    return SENTENCE_END.split(text.strip(), maxsplit=1)[0]


def verbatim_retained(original: Criterion, augmented: AugmentedCriterion) -> bool:
    """
    True iff the content tokens of the original definition's first sentence
    occur in the augmented criteria line in the same relative order
    """
    required = _content_tokens(first_sentence(original.definition))
    remaining = iter(_content_tokens(augmented.criteria_line))
    return all(token in remaining for token in required)


def _parse_judgment(text: str) -> Tuple[SupervisionDecision, Tuple[str, ...]]:
    judgment = _last(JUDGMENT_LINE, text)
    if judgment is None:
        raise ParseError('Reply has no JUDGMENT line', 'SUPERVISION_PARSE_ERROR')
    if judgment.upper() == 'PASS':
        return SupervisionDecision.APPROVED, ()
    reasons = tuple(REASON_LINE.findall(text)) or (UNSTATED_REJECTION,)
    return SupervisionDecision.REJECTED, reasons


def supervise(original: Criterion, augmented: AugmentedCriterion, llm,
              settings: Optional[AgentSettings] = None) -> SupervisionVerdict:
    """
    Approve an augmentation only when it keeps the original wording and the
    model judges it faithful

    Returns:
        SupervisionVerdict
    """
    if not verbatim_retained(original, augmented):
        logger.info(f"Augmentation of {original.id} (revision {augmented.revision}) dropped original wording")
        return SupervisionVerdict(SupervisionDecision.REJECTED, (VERBATIM_FAILURE,))

    settings = settings or AgentSettings()
    request = build_request(settings, 'supervise', criterion_id=original.id,
                            criterion_definition=original.definition, notes=augmented.render())
    exchange = converse(llm, settings, request, _parse_judgment, JUDGMENT_FORMAT)
    if not exchange.parse_ok:
        return SupervisionVerdict(SupervisionDecision.REJECTED, (UNPARSEABLE_SUPERVISION,), False, exchange.digests)
    decision, reasons = exchange.value
    return SupervisionVerdict(decision, reasons, True, exchange.digests)


def parse_decision(text: str) -> EligibilityLabel:
    """
    Read the last DECISION line of a matching reply

    Raises:
        DecisionParseError: no line holds a decision
    """
    for line in reversed(text.splitlines()):
        match = DECISION_LINE.fullmatch(line.strip())
        if match:
            return EligibilityLabel.MET if match.group(1).upper() == 'MET' else EligibilityLabel.NOT_MET
    raise DecisionParseError(text)


def fit_notes(patient: PatientRecord, base_tokens: int, budget: int) -> str:
    """
    Drop the oldest notes until the prompt fits the token budget; the newest
    note is always kept
    """
    notes = list(patient.notes)
    while len(notes) > 1 and base_tokens + sum(note.token_count() for note in notes) > budget:
        notes.pop(0)
    if len(notes) < len(patient.notes):
        logger.info(f"Patient {patient.patient_id}: kept {len(notes)} of {len(patient.notes)} notes within "
                    f"{budget} tokens")
    return ''.join(note.text for note in notes).strip()


def match_request(final: FinalCriterion, patient: PatientRecord, strategy: PromptStrategy,
                  settings: AgentSettings) -> ChatRequest:
    """First matching request for a pair, with notes fitted to the token budget"""
    template = 'match_cot' if strategy is PromptStrategy.COT else 'match_zeroshot'
    values = {'criterion_id': final.criterion_id, 'criterion_definition': final.text}

    skeleton = build_request(settings, template, notes='', **values)
    notes = fit_notes(patient, len(skeleton.transcript_text().split()), settings.token_budget)
    return build_request(settings, template, notes=notes, **values)


def match_patient(final: FinalCriterion, patient: PatientRecord, strategy: PromptStrategy, llm,
                  settings: Optional[AgentSettings] = None) -> MatchDecision:
    """
    Decide whether one patient meets one criterion

    Args:
        final: Criterion text the matcher sees
        patient: Patient record
        strategy: Prompt strategy (zero-shot and MAKA share a template)
        llm: Completion capability

    Returns:
        MatchDecision; the fallback label with parse_ok=False when no reply parses
    """
    settings = settings or AgentSettings()
    request = match_request(final, patient, strategy, settings)
    exchange = converse(llm, settings, request, parse_decision, DECISION_FORMAT)
    label = exchange.value if exchange.parse_ok else settings.fallback_label
    if not exchange.parse_ok:
        logger.warning(f"No decision for {patient.patient_id}/{final.criterion_id}; "
                       f"using {settings.fallback_label.display()}")

    return MatchDecision(
        patient_id=patient.patient_id,
        criterion_id=final.criterion_id,
        label=label,
        rationale=exchange.content.strip(),
        parse_ok=exchange.parse_ok,
        transcript_digest=exchange.digests[-1],
        transcript=exchange.digests
    )
