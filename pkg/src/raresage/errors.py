"""Exception types shared across the package."""


class RareSaGeError(Exception):
    """Base class for every error raised by raresage."""


class FormatError(RareSaGeError, ValueError):
    """Malformed input file (wrong column count, non-numeric field...)."""


class ValidationError(RareSaGeError, ValueError):
    """Input violates a precondition or a type invariant."""


class DegenerateClassError(ValidationError):
    """A class has too few members for the requested computation."""


class StratificationError(ValidationError):
    """A fold split cannot keep every class represented."""


class ConfigError(RareSaGeError, ValueError):
    """Bad configuration value or config file."""


class TrainingError(RareSaGeError, RuntimeError):
    """A machine could not be fitted."""


class NotTrainedError(RareSaGeError, RuntimeError):
    """Prediction requested from an untrained machine."""


class NoRareClassError(RareSaGeError):
    """No class passes the rarity test; iteration should stop."""


class UndefinedSparsityError(RareSaGeError, ValueError):
    """Gini index requested for a vector with no positive mass."""
