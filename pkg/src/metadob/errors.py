"""Exception types shared across the package."""


class MetadobError(Exception):
    """Base class for all package errors."""


class InsufficientHistory(MetadobError):
    """Not enough past states to build an embedding window (warm-up)."""


class DimensionMismatch(MetadobError):
    """Array shape incompatible with the declared dimensions."""


class TooShort(MetadobError):
    """Trajectory too short to yield a single training segment."""


class NumericalFailure(MetadobError):
    """A factorization failed; usually means NaN/Inf crept into the inputs."""


class DivergenceDetected(MetadobError):
    """Training validation loss blew up past the divergence guard."""


class NonFiniteState(MetadobError):
    """Simulation or estimator state contains NaN/Inf."""


class EmptyData(MetadobError):
    """Statistics requested on an empty sequence."""


class BadParams(MetadobError):
    """Invalid parameters for a reference trajectory or scenario."""


class SingularActuation(MetadobError):
    """g(x) not invertible on the actuated rows (unreachable for the
    point-mass plant; kept for the generic control-law interface)."""


class MissingWeights(MetadobError):
    """A benchmark asked for a meta method but no representation weights
    were provided."""


class IoFailure(MetadobError):
    """Failed to write a report or config artifact."""
