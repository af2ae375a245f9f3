"""Exception hierarchy shared across the package."""


class DivproveError(Exception):
    """Base class for all package errors."""


class InvalidInputError(DivproveError, ValueError):
    """Arguments violate an operation's preconditions."""


class InvalidDataError(DivproveError, ValueError):
    """Loaded or served data is inconsistent (bad norms, wrong dimension)."""


class NumericalError(DivproveError, ArithmeticError):
    """A linear-algebra routine failed or produced unusable values."""

    def __init__(self, message, order=None):
        super().__init__(message)
        self.order = order


class RankDeficientError(DivproveError):
    """More items requested from a k-DPP than the kernel rank allows."""

    def __init__(self, k, rank):
        super().__init__(f"k={k} exceeds kernel rank {rank}")
        self.k = k
        self.rank = rank


class MissingEmbeddingError(DivproveError, KeyError):
    def __init__(self, goal_id, tactic):
        super().__init__(f"no embedding for goal_id={goal_id!r} tactic={tactic!r}")
        self.goal_id = goal_id
        self.tactic = tactic

    def __str__(self):
        return self.args[0]


class TransportError(DivproveError):
    """Remote service unreachable or returned an unusable response."""

    def __init__(self, message, retries=0):
        super().__init__(f"{message} (after {retries} retries)")
        self.retries = retries


class ParseError(DivproveError, ValueError):
    def __init__(self, line_no, fragment, reason):
        super().__init__(f"line {line_no}: {reason}: {fragment[:80]!r}")
        self.line_no = line_no
        self.fragment = fragment
        self.reason = reason
