"""Exception types shared across the package."""

from __future__ import annotations


class CbfDecodeError(Exception):
    """Base class for all package errors."""


class InvalidTokenError(CbfDecodeError):
    """A token id or token string is not valid for the vocabulary in use."""


class NumericInputError(CbfDecodeError):
    """A numeric input (logits, probabilities) is non-finite or malformed."""


class InvalidScoresError(CbfDecodeError):
    """Three-class classifier scores violate the simplex invariant."""


class TrainingInputError(CbfDecodeError):
    """Model training was given unusable input (e.g. an empty corpus)."""


class InfeasibleConstraintError(CbfDecodeError):
    """No token satisfies the barrier inequality at the current step.

    Carries the hyperparameter and base constraint value so callers can
    diagnose why the constraint could not be met.
    """

    def __init__(self, gamma: float, base_h: float, scans: int):
        self.gamma = gamma
        self.base_h = base_h
        self.scans = scans
        super().__init__(
            f"no admissible token found (gamma={gamma}, base_h={base_h}, "
            f"scans={scans})"
        )


class InfeasibleHorizonError(CbfDecodeError):
    """Block rejection sampling exhausted its attempt budget.

    ``candidates`` holds the blocks accepted before the budget ran out.
    """

    def __init__(self, attempts: int, required: int, candidates: list):
        self.attempts = attempts
        self.required = required
        self.candidates = candidates
        super().__init__(
            f"collected {len(candidates)}/{required} admissible blocks "
            f"in {attempts} attempts"
        )


class UnsafeStartError(CbfDecodeError):
    """Constrained generation was started from text outside the safe set."""

    def __init__(self, h0: float):
        self.h0 = h0
        super().__init__(f"initial text has constraint value {h0} < 0")


class BackendUnavailableError(CbfDecodeError):
    """A remote backend could not be reached or refused the connection.

    ``retryable`` distinguishes transient transport failures from protocol
    level refusals (e.g. a handshake mismatch), which retrying cannot fix.
    """

    def __init__(self, endpoint: str, reason: str, retryable: bool = True, attempts: int = 1):
        self.endpoint = endpoint
        self.reason = reason
        self.retryable = retryable
        self.attempts = attempts
        super().__init__(f"backend {endpoint} unavailable after {attempts} attempt(s): {reason}")


class ProtocolError(CbfDecodeError):
    """A remote peer sent a message that violates the wire protocol."""

    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")


class SpecFormatError(CbfDecodeError):
    """An experiment spec, lexicon, model, or trace file failed to parse."""


class TraceFormatError(SpecFormatError):
    """A trace file line is malformed; names the file and line number."""

    def __init__(self, path: str, line_no: int, message: str):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")
