"""Exception taxonomy shared by all pipelines."""


class HenonLabError(Exception):
    """Base class for all package-specific failures."""


class IndeterminacyError(HenonLabError):
    """Inverse of a birational factor hit a fiber where a + b(z) vanishes."""


class UnresolvedError(HenonLabError):
    """Iteration budget exhausted before the orbit could be classified."""


class BranchError(HenonLabError):
    """A multiplicative correction left the principal-branch disk."""


class ContourThroughZeroError(HenonLabError):
    """Argument-principle integrand passed within tolerance of a zero."""


class NonHorizontalError(HenonLabError):
    """Boundary of the transversal has not escaped by the requested iterate."""


class ZeroClusterError(HenonLabError):
    """Zeros could not be separated or counted at working precision."""


class ResonanceError(HenonLabError):
    """A multiplier power collides with an eigenvalue of the linearization."""


class NotASaddleError(HenonLabError):
    """Operation requires a saddle orbit."""


class LevelNotFoundError(HenonLabError):
    """No crossing of the requested potential level on the probed chart."""


class EmptySetError(HenonLabError):
    """A nonempty collection was required (orbits, measure points)."""


class UsageError(HenonLabError):
    """Command line invoked with invalid arguments."""
