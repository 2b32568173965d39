"""Exception types shared across the package."""


class PairlearnError(Exception):
    pass


class ContractError(PairlearnError, ValueError):
    """A caller violated a documented precondition (shapes, ranges, ordering)."""


class DomainError(ContractError):
    """Numerical input outside the domain of an operation (non-finite, log of <= 0)."""


class ConfigError(PairlearnError, ValueError):
    """Invalid or inconsistent configuration."""


class FormatError(PairlearnError, ValueError):
    """Malformed file contents (datasets, checkpoints)."""
