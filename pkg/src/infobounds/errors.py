"""Exception hierarchy shared by every module of the package."""


class InfoBoundsError(Exception):
    """Base class for all library errors."""


class ModelError(InfoBoundsError):
    """A model could not be constructed from the given parameters."""


class NotPositiveDefiniteError(ModelError):
    pass


class NormalizationError(ModelError):
    pass


class RankDeficientError(ModelError):
    pass


class ShapeError(ModelError):
    pass


class DomainError(InfoBoundsError):
    """A parameter value lies outside the model support."""


class DataImpossibleError(InfoBoundsError):
    """The marginal data density underflowed; the observation cannot occur."""


class UnsupportedError(InfoBoundsError):
    """The requested route is not available for this model or family."""


class EstimationError(InfoBoundsError):
    """Too many Monte Carlo samples had to be discarded."""


class UndefinedHypothesesError(InfoBoundsError):
    pass


class StratificationError(InfoBoundsError):
    pass


class NegativeInformationError(InfoBoundsError):
    """AUC below one half; the caller must swap the hypothesis labels."""


class SaturationError(InfoBoundsError):
    """AUC too close to one for the detectability to be resolved."""


class NonUnimodalError(InfoBoundsError):
    pass


class ConfigError(InfoBoundsError):
    pass
