"""Exception hierarchy shared by every trafficast module.

Data-shaped failures (bad input, degenerate series, unsatisfiable
preconditions) derive from :class:`DataError`; configuration problems from
:class:`ConfigError`; a diverging optimizer from :class:`TrainingDiverged`.
The CLI maps these onto distinct exit codes.
"""


class TrafficastError(Exception):
    """Base class for all trafficast errors."""


class ConfigError(TrafficastError):
    """Invalid or contradictory configuration."""


class DataError(TrafficastError):
    """Input data violates an operation's precondition."""


class EmptyInput(DataError):
    """Operation requires more records than were supplied."""


class MalformedInput(DataError):
    """Input is structurally invalid (non-monotone timestamps, bad CSV)."""


class LeadingGap(DataError):
    """Series starts with a missing value, so forward-fill has no donor."""


class InsufficientData(DataError):
    """Series too short for the requested operation."""


class ZeroVariance(DataError):
    """Constant series: autocorrelation is undefined."""


class ZeroRange(DataError):
    """Constant series: min-max normalization is undefined."""


class NotDecomposable(DataError):
    """Signal has no extractable oscillatory component."""


class InsufficientExtrema(DataError):
    """Too few maxima/minima to build interpolation envelopes."""


class ZeroPower(DataError):
    """Reference signal has zero power; SNR is undefined."""


class InsufficientDonors(DataError):
    """Fewer eligible donor points than the requested neighbor count."""


class DegenerateFit(DataError):
    """Model fit collapsed (zero innovation variance)."""


class NoViableModel(DataError):
    """Every candidate model in the grid failed to converge."""


class ShapeError(TrafficastError):
    """Tensor or vector shapes are incompatible."""


class ZeroActual(DataError):
    """An actual value is zero; percentage error is undefined."""


class ZeroBaseline(DataError):
    """Baseline error is zero; relative reduction is undefined."""


class TrainingDiverged(TrafficastError):
    """Training loss became non-finite."""
