"""Exception hierarchy for the metagente pipeline."""


class MetagenteError(Exception):
    """Base class for all pipeline errors."""


# --- transport / cassette ---------------------------------------------------


class TransportError(MetagenteError):
    """Network failure that persisted after all retry attempts."""


class ReplayMissError(MetagenteError):
    """Replay mode was asked for a request fingerprint not in the cassette."""

    def __init__(self, fingerprint: str):
        super().__init__(f"no cassette entry for request fingerprint {fingerprint}")
        self.fingerprint = fingerprint


class CassetteError(MetagenteError):
    """Malformed cassette file or duplicate fingerprints on load."""


class SchemaViolationError(MetagenteError):
    """Structured output failed to validate after all re-ask attempts."""


# --- agents -------------------------------------------------------------------


class AgentError(MetagenteError):
    """Base class for agent-level failures during an optimization run."""


class EmptyOutputError(AgentError):
    """The model returned a blank response where text was required."""


class NoProgressError(AgentError):
    """Teacher returned a prompt textually identical to the current one."""


class EmptySeedSetError(MetagenteError):
    """Prompt synthesis was requested but no training sample converged."""


class BudgetExceededError(AgentError):
    """Per-sample LLM call budget exhausted (live-mode safety stop)."""


# --- dataset ------------------------------------------------------------------


class DatasetError(MetagenteError):
    """Invalid dataset content (parse errors, duplicates, empty fields)."""


class GitHubAuthError(DatasetError):
    """GitHub API rejected the configured token."""


class GitHubRateLimitError(DatasetError):
    """GitHub API rate limit exhausted and not recoverable within the run."""


# --- evaluation ---------------------------------------------------------------


class KeyMismatchError(MetagenteError):
    """Paired scoring was requested over unequal sample id sets."""

    def __init__(self, message: str, missing: list[str], extra: list[str]):
        super().__init__(message)
        self.missing = missing
        self.extra = extra


class ZeroBaselineError(MetagenteError):
    """Percentage gain against a zero-mean baseline is undefined."""


class DegenerateInputError(MetagenteError):
    """Wilcoxon input has no usable pairs (all zero diffs or fewer than 5)."""
