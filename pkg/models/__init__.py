from .corpus import (
    ClinicalNote,
    PatientRecord,
    EligibilityLabel,
    GoldLabels,
    Criterion,
    CriterionVariant,
    CriteriaCatalog,
    CorpusEntry,
    Corpus,
    CorpusStats
)
from .chat import BackendTag, ChatMessage, ChatRequest, ChatResponse, ChatRole, RetryPolicy
from .knowledge import Snippet, SnippetIndex, ScoredSnippet
from .agents import (
    AugmentationRoute,
    AugmentedCriterion,
    MatchDecision,
    ProbeDecision,
    ProbeVerdict,
    PromptStrategy,
    RouteDecision,
    SupervisionDecision,
    SupervisionVerdict
)
from .pipeline import (
    AuditEvent,
    DecisionSet,
    FinalCriterion,
    PendingEvent,
    Provenance,
    RunManifest,
    Stage,
    StageOutcome
)
from .evaluation import ConfusionMatrix, EvaluationReport, MetricSet, TrialSpec

__all__ = [
    'ClinicalNote', 'PatientRecord', 'EligibilityLabel', 'GoldLabels', 'Criterion',
    'CriterionVariant', 'CriteriaCatalog', 'CorpusEntry', 'Corpus', 'CorpusStats',
    'BackendTag', 'ChatMessage', 'ChatRequest', 'ChatResponse', 'ChatRole', 'RetryPolicy',
    'Snippet', 'SnippetIndex', 'ScoredSnippet',
    'AugmentationRoute', 'AugmentedCriterion', 'MatchDecision', 'ProbeDecision', 'ProbeVerdict',
    'PromptStrategy', 'RouteDecision', 'SupervisionDecision', 'SupervisionVerdict',
    'AuditEvent', 'DecisionSet', 'FinalCriterion', 'PendingEvent', 'Provenance', 'RunManifest',
    'Stage', 'StageOutcome',
    'ConfusionMatrix', 'EvaluationReport', 'MetricSet', 'TrialSpec'
]
