"""Exception types shared across the package.

Every external failure mode maps to one of these so callers can always
fall back instead of crashing.
"""


class PortalError(Exception):
    """Base class for all errors raised by this package."""


# --- encoding -----------------------------------------------------------

class EmptyInput(PortalError):
    """Query text is empty after trimming."""


class DimensionMismatch(PortalError):
    """Vector dimensions do not line up with the configuration."""


# --- memory / retrieval -------------------------------------------------

class ZeroVector(PortalError):
    """Cosine similarity is undefined for an all-zero vector."""


class InvalidLabel(PortalError):
    """Label vector violates its invariants (sum, sign, or argmax)."""


class EmptyFunctionSet(PortalError):
    """Bootstrap requires at least one function."""


class CorruptSnapshot(PortalError):
    """Persisted store failed its checksum or structural validation."""


class VersionMismatch(PortalError):
    """Persisted store was written by an incompatible format version."""


# --- integration / routing ----------------------------------------------

class NoNeighbors(PortalError):
    """Integration or confidence scoring was asked to run on zero neighbors."""


class AllZeroSimilarity(PortalError):
    """Every retrieved neighbor has zero similarity after clamping."""


# --- LLM bridge ----------------------------------------------------------

class LlmError(PortalError):
    """Base class for LLM transport and parsing failures."""


class NoCandidates(LlmError):
    """A function prompt needs a non-empty candidate list."""


class NoContacts(LlmError):
    """A contact prompt needs at least one contact."""


class Unparseable(LlmError):
    """No known candidate could be recovered from the model output."""


class LlmTimeout(LlmError):
    """The endpoint did not answer within the configured timeout."""


class TransportError(LlmError):
    """Connection failure or non-retryable HTTP error."""


class RateLimited(LlmError):
    """The endpoint returned HTTP 429."""


# --- training -------------------------------------------------------------

class EmptyTrainingSet(PortalError):
    """Training was requested with zero records."""


# --- portal ----------------------------------------------------------------

class InvalidRequest(PortalError):
    """Request text is empty and the override filter does not identify a
    unique function."""


class UnknownUser(PortalError):
    """User does not exist and auto-provisioning is disabled."""


class UnknownRequest(PortalError):
    """Selection refers to a request id that was never served."""


class UnknownFunction(PortalError):
    """Function id is not part of the relevant collection or universe."""


class DuplicateSelection(PortalError):
    """A selection was already recorded for this request id."""


class DuplicateFunction(PortalError):
    """The function id is already in the user's collection."""


class LastFunction(PortalError):
    """The final function of a collection cannot be removed."""


# --- evalkit ----------------------------------------------------------------

class EmptyTrials(PortalError):
    """Metrics require at least one trial."""


class InvalidTrial(PortalError):
    """A trial's true function is missing from its served ranking."""


class UnknownVariant(PortalError):
    """Ablation variant name is not recognized."""
