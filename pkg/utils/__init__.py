from .error_handling import (
    MakaError,
    ParseError,
    DocumentParseError,
    DecisionParseError,
    SchemaError,
    LabelError,
    EmptyCorpusError,
    CatalogError,
    GatewayError,
    InvalidRequestError,
    TransientFailure,
    PermanentFailure,
    ReplayMiss,
    FixtureExhausted,
    SnippetIndexError,
    SnippetStoreError,
    AugmentFormatError,
    ConfigurationError,
    ArtifactError,
    IncompleteDecisionsError,
    EmptyMatrixError,
    EmptyReportError,
    EmptyTrialError,
    error_payload,
    log_stage_event,
    log_gateway_exchange
)

__all__ = [
    'MakaError', 'ParseError', 'DocumentParseError', 'DecisionParseError', 'SchemaError',
    'LabelError', 'EmptyCorpusError', 'CatalogError', 'GatewayError', 'InvalidRequestError',
    'TransientFailure', 'PermanentFailure', 'ReplayMiss', 'FixtureExhausted',
    'SnippetIndexError', 'SnippetStoreError', 'AugmentFormatError', 'ConfigurationError',
    'ArtifactError', 'IncompleteDecisionsError', 'EmptyMatrixError', 'EmptyReportError',
    'EmptyTrialError', 'error_payload', 'log_stage_event', 'log_gateway_exchange'
]
