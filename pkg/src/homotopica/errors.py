"""Exception types raised across the package.

Every error carries a stable ``name`` so the command line can report it
verbatim (``exit 1: RankDeficient: ...``).
"""


class HomotopicaError(Exception):
    """Base class for all package errors."""

    @property
    def name(self):
        return type(self).__name__


class RankDeficient(HomotopicaError):
    pass


class NotCentered(HomotopicaError):
    pass


class ConvergenceFailure(HomotopicaError):
    pass


class NotWhitened(HomotopicaError):
    pass


class Singular(HomotopicaError):
    pass


class ShapeMismatch(HomotopicaError):
    pass


class OddExtent(HomotopicaError):
    pass


class DegenerateLoading(HomotopicaError):
    pass


class BlockOverflow(HomotopicaError):
    pass


class UnreadableImage(HomotopicaError):
    pass


class PreconditionViolated(HomotopicaError):
    pass


class InvalidSpec(HomotopicaError):
    pass
