"""Exception types shared across the pipeline stages."""

from __future__ import annotations


class KitError(Exception):
    """Base class for all rationalekit errors."""


# --- backend gateway ---


class GatewayError(KitError):
    """Base class for backend gateway failures."""


class TransportError(GatewayError):
    """Connection failure or timeout while talking to a backend."""


class BackendRefusal(GatewayError):
    """Backend answered with a non-2xx status or an unserviceable request."""

    def __init__(self, message: str, status: int | None = None) -> None:
        super().__init__(message)
        self.status = status


class EmptyCompletion(GatewayError):
    """Backend returned fewer usable completions than requested."""


class CapabilityMissing(GatewayError):
    """Backend cannot serve the requested capability (e.g. echo logprobs)."""


class DimensionMismatch(KitError):
    """Vector dimensions disagree."""


class TruncationWarning(UserWarning):
    """Backend truncated the input before embedding it."""


# --- corpus prefilter ---


class EmptyReference(KitError):
    """No reference texts supplied for centroid computation."""


class ZeroVector(KitError):
    """Cosine similarity is undefined for an all-zero vector."""


# --- rationale extraction ---


class TemplateError(KitError):
    """Prompt template has unbound or unknown placeholders."""


# --- rationale filtering ---


class NonFiniteLoss(KitError):
    """A future-token loss came out NaN or infinite; the candidate is invalid."""


class InsufficientLabels(KitError):
    """Threshold calibration needs labeled examples it did not get."""


# --- supervision engine ---


class EmptyRationale(KitError):
    """Rationale generator returned an empty completion."""


class NoCandidates(KitError):
    """No usable next-step candidate survived generation and scoring."""


class NonFiniteScore(KitError):
    """A step heuristic came out NaN or infinite; the candidate is dropped."""


# --- evaluation ---


class NoAnswerFound(KitError):
    """Trajectory has no stop-pattern answer to extract."""


# --- configuration / IO ---


class ConfigInvalid(KitError):
    """Run configuration failed validation; message names the offending key."""


class JsonlError(KitError):
    """A JSON-lines record is malformed; message names the line number."""
