"""Exception types raised across the package."""


class OtfsNomaError(Exception):
    """Base class for all package errors."""


class DimensionError(OtfsNomaError, ValueError):
    pass


class NearSingularEqualizer(OtfsNomaError):
    """A combined TF eigenvalue is too small to invert."""


class InvalidTapIndex(OtfsNomaError, ValueError):
    pass


class InfeasibleTarget(OtfsNomaError, ValueError):
    """Target rate cannot be met by any beamformer (R0 >= 1 BPCU)."""


class ZeroBeamformer(OtfsNomaError, ValueError):
    pass


class DegenerateDirection(OtfsNomaError):
    """Gradient requested where |w^H h| vanishes."""


class NulledRegion(OtfsNomaError):
    """Robust gradient requested where |w^H g_hat| <= sigma ||w||."""


class AllStartsFailed(OtfsNomaError):
    """No SCA start produced a beamformer meeting the worst-case constraints."""


class SdpInfeasible(OtfsNomaError):
    pass


class NoFeasibleRandomization(OtfsNomaError):
    pass


class ConfigError(OtfsNomaError, ValueError):
    pass
