"""
Error hierarchy and structured logging helpers for the MAKA pipeline
"""
import logging
from typing import Dict, Any, Optional, Sequence, Tuple

logger = logging.getLogger(__name__)


class MakaError(Exception):
    """Base exception for pipeline errors"""
    def __init__(self, message: str, code: str, details: Optional[Dict[str, Any]] = None):
        self.message = message
        self.code = code
        self.details = details or {}
        super().__init__(self.message)

    def attach_file(self, file_name: str) -> 'MakaError':
        """Prefix the message with the file that caused the error"""
        self.details['file'] = file_name
        self.message = f"{file_name}: {self.message}"
        self.args = (self.message,)
        return self


# --- corpus -----------------------------------------------------------------

class ParseError(MakaError):
    """Base class for text that could not be parsed"""


class DocumentParseError(ParseError):
    """Raised when a patient document is not well-formed XML"""
    def __init__(self, reason: str, position: Optional[Tuple[int, int]] = None):
        where = f" at line {position[0]}, column {position[1]}" if position else ""
        super().__init__(
            f"Malformed patient document{where}: {reason}",
            "DOCUMENT_PARSE_ERROR",
            {"position": list(position) if position else None, "reason": reason}
        )
        self.position = position


class SchemaError(MakaError):
    """Raised when a patient document lacks a required element"""
    def __init__(self, missing: Sequence[str], reason: Optional[str] = None):
        missing = list(missing)
        message = reason or f"Patient document is missing required element(s): {', '.join(missing)}"
        super().__init__(message, "SCHEMA_ERROR", {"missing": missing})
        self.missing = missing


class LabelError(MakaError):
    """Raised when a criterion tag carries an unknown met value"""
    def __init__(self, criterion_id: str, value: Optional[str]):
        super().__init__(
            f"Criterion {criterion_id} has met={value!r}; expected 'met' or 'not met'",
            "LABEL_ERROR",
            {"criterion_id": criterion_id, "value": value}
        )
        self.criterion_id = criterion_id


class EmptyCorpusError(MakaError):
    """Raised when no patient documents are available"""
    def __init__(self, location: str):
        super().__init__(f"No patient documents found in {location}", "EMPTY_CORPUS", {"location": location})


class CatalogError(MakaError):
    """Raised when a criteria catalog file is invalid"""
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "CATALOG_ERROR", details)


# --- gateway ----------------------------------------------------------------

class GatewayError(MakaError):
    """Base class for chat-completion failures"""


class InvalidRequestError(GatewayError):
    """Raised when a chat request violates its invariants"""
    def __init__(self, reason: str):
        super().__init__(f"Invalid chat request: {reason}", "INVALID_REQUEST", {"reason": reason})


class TransientFailure(GatewayError):
    """Raised when retries are exhausted on timeouts, 429s or 5xx responses"""
    def __init__(self, attempts: int, last_error: str):
        super().__init__(
            f"Chat completion failed after {attempts} attempt(s): {last_error}",
            "TRANSIENT_FAILURE",
            {"attempts": attempts, "last_error": last_error}
        )


class PermanentFailure(GatewayError):
    """Raised on non-retryable provider responses"""
    def __init__(self, reason: str, status_code: Optional[int] = None):
        super().__init__(
            f"Chat completion rejected: {reason}",
            "PERMANENT_FAILURE",
            {"status_code": status_code, "reason": reason}
        )
        self.status_code = status_code


class ReplayMiss(GatewayError):
    """Raised when strict replay has no recording for a request"""
    def __init__(self, digest: str):
        super().__init__(f"No recorded response for request {digest}", "REPLAY_MISS", {"digest": digest})
        self.digest = digest


class FixtureExhausted(GatewayError):
    """Raised when the scripted backend has no rule left for a request"""
    def __init__(self, excerpt: str):
        super().__init__(
            "Scripted backend has no remaining response for this request",
            "FIXTURE_EXHAUSTED",
            {"request_excerpt": excerpt}
        )


# --- knowledge --------------------------------------------------------------

class SnippetIndexError(MakaError):
    """Raised when snippets cannot be indexed"""
    def __init__(self, snippet_id: str):
        super().__init__(f"Duplicate snippet id {snippet_id!r}", "SNIPPET_INDEX_ERROR", {"snippet_id": snippet_id})


class SnippetStoreError(MakaError):
    """Raised when a snippet store file is malformed"""
    def __init__(self, message: str, line_number: Optional[int] = None):
        super().__init__(message, "SNIPPET_STORE_ERROR", {"line": line_number})


# --- agents and pipeline ----------------------------------------------------

class DecisionParseError(ParseError):
    """Raised when a matching response carries no decision line"""
    def __init__(self, excerpt: str):
        super().__init__("Response contains no 'DECISION: MET' or 'DECISION: NOT MET' line",
                         "DECISION_PARSE_ERROR", {"excerpt": excerpt[-200:]})


class AugmentFormatError(MakaError):
    """Raised when an augmentation response lacks its CRITERIA or EXPLANATION section"""
    def __init__(self, criterion_id: str, transcript: Sequence[str] = ()):
        super().__init__(
            f"Augmentation for {criterion_id} lacks a CRITERIA or EXPLANATION section",
            "AUGMENT_FORMAT_ERROR",
            {"criterion_id": criterion_id}
        )
        self.criterion_id = criterion_id
        self.transcript = tuple(transcript)


class ConfigurationError(MakaError):
    """Raised when the run configuration or agent dependencies are invalid"""
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "CONFIGURATION_ERROR", details)


class ArtifactError(MakaError):
    """Raised when a run artifact is missing or malformed"""
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "ARTIFACT_ERROR", details)


# --- evaluation -------------------------------------------------------------

class IncompleteDecisionsError(MakaError):
    """Raised when a patient lacks a decision or label that scoring needs"""
    def __init__(self, patient_id: str, criterion_id: str):
        super().__init__(
            f"No label for patient {patient_id} on criterion {criterion_id}",
            "INCOMPLETE_DECISIONS",
            {"patient_id": patient_id, "criterion_id": criterion_id}
        )


class EmptyMatrixError(MakaError):
    def __init__(self):
        super().__init__("Confusion matrix has no scored pairs", "EMPTY_MATRIX")


class EmptyReportError(MakaError):
    def __init__(self):
        super().__init__("Cannot average an empty list of metric sets", "EMPTY_REPORT")


class EmptyTrialError(MakaError):
    def __init__(self, threshold: int):
        super().__init__(
            f"No criterion has at least {threshold} met patients; synthetic trial is empty",
            "EMPTY_TRIAL",
            {"threshold": threshold}
        )
        self.threshold = threshold


def error_payload(error: MakaError) -> Dict[str, Any]:
    """
    Create a standardized error payload and log the error

    Args:
        error: MakaError instance

    Returns:
        dict: JSON-serializable payload
    """
    payload = {
        "success": False,
        "error": error.message,
        "code": error.code
    }

    if error.details:
        payload["details"] = error.details

    logger.error(f"Error {error.code}: {error.message}", extra={
        "error_code": error.code,
        "error_details": error.details
    })

    return payload


def log_stage_event(stage: str, criterion_id: str, outcome: str,
                    patient_id: Optional[str] = None, digest: Optional[str] = None):
    """
    Log one pipeline stage outcome for monitoring

    Args:
        stage: Stage name (probe, navigate, augment, supervise, match)
        criterion_id: Criterion being processed
        outcome: Short outcome summary
        patient_id: Patient id for matching events
        digest: Request digest of the exchange
    """
    log_data = {
        "stage": stage,
        "criterion_id": criterion_id,
        "outcome": outcome
    }

    if patient_id:
        log_data["patient_id"] = patient_id

    if digest:
        log_data["digest"] = digest

    subject = f"{criterion_id}/{patient_id}" if patient_id else criterion_id
    logger.debug(f"Stage {stage} for {subject}: {outcome}", extra=log_data)


def log_gateway_exchange(backend: str, digest: str, success: bool = True,
                         duration_ms: Optional[float] = None, error: Optional[str] = None):
    """
    Log a chat-completion exchange

    Args:
        backend: Backend tag (http, replay, scripted)
        digest: Request digest
        success: Whether the exchange produced a response
        duration_ms: Exchange duration in milliseconds
        error: Error message (if failed)
    """
    log_data = {
        "backend": backend,
        "digest": digest,
        "success": success
    }

    if duration_ms is not None:
        log_data["duration_ms"] = duration_ms

    if error:
        log_data["error"] = error

    if success:
        logger.debug(f"Exchange {digest[:12]} via {backend} completed", extra=log_data)
    else:
        logger.warning(f"Exchange {digest[:12]} via {backend} failed: {error}", extra=log_data)
