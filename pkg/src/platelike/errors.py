"""Shared exception types."""


class ConfigError(ValueError):
    """A configuration value violates a documented precondition."""


class InvalidDirectionError(ConfigError):
    """The direction vector is zero or no orthogonal basis was found."""


class PreconditionError(ValueError):
    """An operation was called outside its stated domain."""


class SingularityError(PreconditionError):
    """Kernel evaluated on the diagonal x == y."""


class GridMismatchError(PreconditionError):
    """Two fields that must share a grid do not."""


class SeedError(PreconditionError):
    """A minimization seed has non-finite energy or is otherwise unusable."""
