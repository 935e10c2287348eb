import logging
import threading
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

from config.settings import RunConfig
from models import (
    AugmentationRoute,
    AuditEvent,
    ChatRequest,
    ChatResponse,
    Corpus,
    CriteriaCatalog,
    Criterion,
    DecisionSet,
    FinalCriterion,
    MatchDecision,
    PatientRecord,
    PendingEvent,
    ProbeDecision,
    PromptStrategy,
    Provenance,
    RunManifest,
    Stage,
    StageOutcome
)
from services.agents import AgentSettings, augment, match_patient, match_request, navigate, probe, supervise
from tasks.matching_pool import MatchingPool
from utils.error_handling import (
    AugmentFormatError,
    ConfigurationError,
    PermanentFailure,
    TransientFailure,
    log_stage_event
)
from utils.replay_cache import cache_key
from utils.run_artifacts import (
    AUDIT_FILE,
    COMPLETION_FILE,
    DECISIONS_FILE,
    PREPARED_FILE,
    audit_line,
    write_decisions,
    write_json,
    write_manifest,
    write_prepared
)

logger = logging.getLogger(__name__)

REASK = 'reask'
FORMAT_FEEDBACK = 'the previous reply lacked a CRITERIA or EXPLANATION section'


class AuditLog:
    """
    Append-only event sink; the counter gives every event its position in
    the run. Events are mirrored to a JSON Lines file once one is attached.
    """

    def __init__(self):
        self.events: List[AuditEvent] = []
        self.path: Optional[Path] = None
        self._lock = threading.Lock()

    def attach(self, path: Union[str, Path]):
        with self._lock:
            self.path = Path(path)
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(''.join(audit_line(event) for event in self.events), encoding='utf-8')

    def extend(self, pending: Iterable[PendingEvent]) -> List[AuditEvent]:
        with self._lock:
            added = [
                AuditEvent(len(self.events) + offset, item.stage, item.criterion_id,
                           item.request_digest, item.outcome, item.patient_id)
                for offset, item in enumerate(pending)
            ]
            self.events.extend(added)
            if self.path is not None and added:
                with self.path.open('a', encoding='utf-8') as handle:
                    handle.write(''.join(audit_line(event) for event in added))
        for event in added:
            log_stage_event(event.stage.value, event.criterion_id, event.outcome,
                            event.patient_id, event.request_digest)
        return added

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[AuditEvent]:
        return iter(list(self.events))

    def digests(self) -> set:
        return {event.request_digest for event in self.events if event.request_digest}

    def count(self, stage: Stage) -> int:
        return sum(1 for event in self.events if event.stage is stage)


class UsageMeter:
    """Prompt and completion token totals per stage"""

    def __init__(self):
        self.totals: Dict[str, Dict[str, int]] = {}
        self._lock = threading.Lock()

    def record(self, stage: Stage, response: ChatResponse):
        with self._lock:
            entry = self.totals.setdefault(stage.value, {'calls': 0, 'prompt_tokens': 0, 'completion_tokens': 0})
            entry['calls'] += 1
            entry['prompt_tokens'] += response.prompt_tokens
            entry['completion_tokens'] += response.completion_tokens

    def to_dict(self) -> Dict[str, Dict[str, int]]:
        with self._lock:
            return {stage: dict(entry) for stage, entry in sorted(self.totals.items())}


class MeteredCompletion:
    """Completion capability that books token usage under one stage"""

    def __init__(self, llm, stage: Stage, meter: UsageMeter):
        self.llm = llm
        self.stage = stage
        self.meter = meter

    def complete(self, request: ChatRequest) -> ChatResponse:
        response = self.llm.complete(request)
        self.meter.record(self.stage, response)
        return response


def exchange_events(stage: Stage, criterion_id: str, digests: Sequence[str], outcome: str,
                    patient_id: Optional[str] = None) -> List[PendingEvent]:
    """One event per exchange; every exchange before the last was re-asked"""
    return [
        PendingEvent(stage, criterion_id, digest, outcome if position == len(digests) - 1 else REASK, patient_id)
        for position, digest in enumerate(digests)
    ]


def _flag(outcome: str, parse_ok: bool) -> str:
    return outcome if parse_ok else f'{outcome} (fallback)'


def pass_through(catalog: CriteriaCatalog) -> List[FinalCriterion]:
    return [FinalCriterion(c.id, c.definition, Provenance.ORIGINAL_PASS_THROUGH) for c in catalog]


def check_pairing(strategy: PromptStrategy, catalog: CriteriaCatalog,
                  prepared: Optional[Sequence[FinalCriterion]] = None):
    """
    Raises:
        ConfigurationError: the catalog variant (or prepared file) does not fit the strategy
    """
    if catalog.variant not in strategy.allowed_variants:
        allowed = ', '.join(sorted(v.value for v in strategy.allowed_variants))
        raise ConfigurationError(
            f'{strategy.display_name} runs against the {allowed} catalog, not {catalog.variant.value}',
            {'strategy': strategy.value, 'variant': catalog.variant.value}
        )
    if prepared is not None:
        if strategy is not PromptStrategy.MAKA:
            raise ConfigurationError('Prepared criteria are only used by the MAKA strategy')
        ids = sorted(final.criterion_id for final in prepared)
        if ids != sorted(catalog.ids):
            raise ConfigurationError('Prepared criteria do not cover the catalog',
                                     {'prepared': ids, 'catalog': sorted(catalog.ids)})


class PipelineService:
    """
    Prepares each criterion once, then matches every patient against the
    prepared criteria
    """

    def __init__(self, llm, settings: Optional[AgentSettings] = None, index=None, search_client=None,
                 revision_limit: int = 2, max_concurrency: int = 8):
        """
        Initialize the pipeline

        Args:
            llm: Completion capability (normally a ChatGateway)
            settings: Agent settings
            index: SnippetIndex for the retrieval route
            search_client: Search client for the online search route
            revision_limit: Re-augmentations allowed after a rejection
            max_concurrency: Matching worker threads
        """
        if revision_limit < 0:
            raise ConfigurationError('revision_limit must be non-negative')
        self.llm = llm
        self.settings = settings or AgentSettings()
        self.index = index
        self.search_client = search_client
        self.revision_limit = revision_limit
        self.pool = MatchingPool(max_workers=max_concurrency)
        self.audit = AuditLog()
        self.usage = UsageMeter()
        self._prepared: Dict[str, FinalCriterion] = {}
        self._prepare_lock = threading.Lock()

    @classmethod
    def from_run_config(cls, run_config: RunConfig, llm, index=None, search_client=None,
                        prompts=None) -> 'PipelineService':
        return cls(
            llm,
            settings=AgentSettings.from_run_config(run_config, prompts),
            index=index,
            search_client=search_client,
            revision_limit=run_config.revision_limit,
            max_concurrency=run_config.max_concurrency
        )

    def _stage_llm(self, stage: Stage) -> MeteredCompletion:
        return MeteredCompletion(self.llm, stage, self.usage)

    def prepare_criterion(self, criterion: Criterion) -> FinalCriterion:
        """
        Probe, route, augment and supervise one criterion; cached per run

        Args:
            criterion: Catalog criterion

        Returns:
            FinalCriterion
        """
        with self._prepare_lock:
            if criterion.id in self._prepared:
                return self._prepared[criterion.id]
            final, pending = self._prepare(criterion)
            self.audit.extend(pending)
            self._prepared[criterion.id] = final

        logger.info(f"Prepared {criterion.id}: {final.provenance.value}")
        return final

    def _available_route(self, route: AugmentationRoute) -> Tuple[AugmentationRoute, str]:
        """Route to run and the missing knowledge source, if the chosen one cannot run"""
        if route is AugmentationRoute.RETRIEVAL and self.index is None:
            return AugmentationRoute.SELF_AUGMENT, 'snippet index'
        if route is AugmentationRoute.ONLINE_SEARCH and self.search_client is None:
            return AugmentationRoute.SELF_AUGMENT, 'search client'
        return route, ''

    def _prepare(self, criterion: Criterion) -> Tuple[FinalCriterion, List[PendingEvent]]:
        pending: List[PendingEvent] = []
        chain: List[StageOutcome] = []

        verdict = probe(criterion, self._stage_llm(Stage.PROBE), self.settings)
        pending += exchange_events(Stage.PROBE, criterion.id, verdict.transcript,
                                   _flag(verdict.decision.value, verdict.parse_ok))
        chain.append(StageOutcome(Stage.PROBE, verdict.decision.value, verdict.rationale))
        if verdict.decision is ProbeDecision.SUFFICIENT:
            return FinalCriterion(criterion.id, criterion.definition, Provenance.ORIGINAL_PASS_THROUGH,
                                  tuple(chain)), pending

        route = navigate(criterion, verdict.rationale, self._stage_llm(Stage.NAVIGATE), self.settings)
        pending += exchange_events(Stage.NAVIGATE, criterion.id, route.transcript,
                                   _flag(route.route.value, route.parse_ok))
        chain.append(StageOutcome(Stage.NAVIGATE, route.route.value))
        chosen, missing = self._available_route(route.route)
        if missing:
            logger.warning(f"{criterion.id}: {route.route.value} route has no {missing}; using self-augmentation")
            chain.append(StageOutcome(Stage.NAVIGATE, chosen.value, f'no {missing} configured'))

        feedback: Tuple[str, ...] = ()
        for revision in range(self.revision_limit + 1):
            try:
                augmented = augment(criterion, chosen, self._stage_llm(Stage.AUGMENT),
                                    index=self.index, search_client=self.search_client,
                                    rationale=verdict.rationale, revision=revision,
                                    feedback=feedback, settings=self.settings)
            except AugmentFormatError as e:
                logger.warning(f"Augmentation of {criterion.id} revision {revision} unreadable")
                pending += exchange_events(Stage.AUGMENT, criterion.id, e.transcript, 'format_error')
                chain.append(StageOutcome(Stage.AUGMENT, 'format_error', '', revision))
                feedback = (FORMAT_FEEDBACK,)
                continue

            pending += exchange_events(Stage.AUGMENT, criterion.id, augmented.transcript, 'augmented')
            chain.append(StageOutcome(Stage.AUGMENT, 'augmented', ','.join(augmented.evidence), revision))

            judgment = supervise(criterion, augmented, self._stage_llm(Stage.SUPERVISE), self.settings)
            detail = '; '.join(judgment.reasons)
            if judgment.transcript:
                pending += exchange_events(Stage.SUPERVISE, criterion.id, judgment.transcript,
                                           _flag(judgment.decision.value, judgment.parse_ok))
            else:
                # Rejected without a model call
                pending.append(PendingEvent(Stage.SUPERVISE, criterion.id, '', f'{judgment.decision.value}: {detail}'))
            chain.append(StageOutcome(Stage.SUPERVISE, judgment.decision.value, detail, revision))

            if judgment.approved:
                return FinalCriterion(criterion.id, augmented.render(), Provenance.AUGMENTED_APPROVED,
                                      tuple(chain)), pending
            feedback = judgment.reasons

        logger.warning(f"{criterion.id} not approved after {self.revision_limit} revisions; using the original")
        return FinalCriterion(criterion.id, criterion.definition, Provenance.FALLBACK_AFTER_REJECTION,
                              tuple(chain)), pending

    def prepare_all(self, catalog: CriteriaCatalog) -> List[FinalCriterion]:
        """Prepare every criterion sequentially in catalog order"""
        return [self.prepare_criterion(criterion) for criterion in catalog]

    def _match_unit(self, unit: Tuple[PatientRecord, FinalCriterion, PromptStrategy]
                    ) -> Tuple[MatchDecision, List[PendingEvent]]:
        patient, final, strategy = unit
        try:
            decision = match_patient(final, patient, strategy, self._stage_llm(Stage.MATCH), self.settings)
        except (TransientFailure, PermanentFailure) as e:
            logger.error(f"Matching {patient.patient_id}/{final.criterion_id} failed: {e.message}")
            digest = cache_key(match_request(final, patient, strategy, self.settings))
            decision = MatchDecision(patient.patient_id, final.criterion_id, self.settings.fallback_label,
                                     f'gateway failure: {e.message}', False, digest, (digest,))
            return decision, [PendingEvent(Stage.MATCH, final.criterion_id, digest, f'gateway_failure ({e.code})',
                                           patient.patient_id)]

        outcome = _flag(decision.label.value, decision.parse_ok)
        return decision, exchange_events(Stage.MATCH, final.criterion_id, decision.transcript, outcome,
                                         patient.patient_id)

    def match_all(self, patients: Sequence[PatientRecord], finals: Sequence[FinalCriterion],
                  strategy: PromptStrategy) -> DecisionSet:
        """
        Match every patient against every criterion

        Audit events are appended in (patient_id, criterion_id) order once
        all pairs are done, whatever order the workers finished in.
        """
        units = [(patient, final, strategy) for patient in patients for final in finals]
        results = self.pool.run(units, self._match_unit)
        results.sort(key=lambda item: item[0].sort_key())
        for _, pending in results:
            self.audit.extend(pending)
        return DecisionSet(tuple(decision for decision, _ in results))

    def run(self, corpus: Corpus, catalog: CriteriaCatalog, strategy: PromptStrategy,
            prepared: Optional[Sequence[FinalCriterion]] = None,
            out_dir: Optional[Union[str, Path]] = None,
            run_config: Optional[RunConfig] = None,
            backend_tag: str = '') -> Tuple[DecisionSet, AuditLog]:
        """
        Run one strategy over a corpus

        Args:
            corpus: Parsed corpus
            catalog: Criteria catalog paired with the strategy
            strategy: Prompt strategy
            prepared: Prepared criteria to reuse instead of preparing (MAKA only)
            out_dir: Directory for the manifest, decisions, audit log and prepared criteria
            run_config: Configuration recorded in the manifest
            backend_tag: Backend recorded in the manifest

        Returns:
            (DecisionSet, AuditLog)
        """
        check_pairing(strategy, catalog, prepared)

        if out_dir is not None:
            out_dir = Path(out_dir)
            self._write_manifest(out_dir, corpus, catalog, strategy, run_config, backend_tag)
            self.audit.attach(out_dir / AUDIT_FILE)

        if strategy is PromptStrategy.MAKA:
            if prepared is not None:
                by_id = {final.criterion_id: final for final in prepared}
                finals = [by_id[criterion_id] for criterion_id in catalog.ids]
            else:
                finals = self.prepare_all(catalog)
            if out_dir is not None:
                write_prepared(out_dir / PREPARED_FILE, finals)
        else:
            finals = pass_through(catalog)

        decisions = self.match_all(corpus.patients, finals, strategy)

        if out_dir is not None:
            write_decisions(out_dir / DECISIONS_FILE, decisions)
            write_json(out_dir / COMPLETION_FILE, {
                'finished_at': datetime.now(timezone.utc).isoformat(timespec='seconds'),
                'decision_count': len(decisions),
                'parse_failures': sum(1 for decision in decisions if not decision.parse_ok),
                'audit_events': len(self.audit),
                'usage': self.usage.to_dict()
            })

        logger.info(f"Run finished: {len(decisions)} decisions, {len(self.audit)} audit events")
        return decisions, self.audit

    def _write_manifest(self, out_dir: Path, corpus: Corpus, catalog: CriteriaCatalog,
                        strategy: PromptStrategy, run_config: Optional[RunConfig], backend_tag: str):
        artifacts = {'decisions': DECISIONS_FILE, 'audit': AUDIT_FILE, 'completion': COMPLETION_FILE}
        if strategy is PromptStrategy.MAKA:
            artifacts['prepared'] = PREPARED_FILE
        manifest = RunManifest(
            config=run_config.snapshot(relative_to=out_dir) if run_config else {},
            catalog_variant=catalog.variant.value,
            corpus_digest=corpus.digest(),
            strategy=strategy.value,
            model_id=self.settings.model_id,
            backend=backend_tag,
            started_at=datetime.now(timezone.utc).isoformat(timespec='seconds'),
            artifacts=artifacts
        )
        write_manifest(out_dir, manifest)
