"""Exception types shared across modules; the CLI maps them to exit codes."""


class GpsError(Exception):
    """Base class for library errors."""


class ConfigError(GpsError, ValueError):
    """Invalid experiment configuration (exit code 2)."""


class BudgetError(GpsError, ValueError):
    """Requested grid exceeds the compute budget (exit code 3)."""


class InconclusiveError(GpsError):
    """A bracket is too wide to support a conclusion (exit code 4)."""


class RangeError(GpsError, OverflowError):
    """A result falls outside the representable range."""


DEFAULT_BUDGET = 4.0e10


def check_budget(N: int, M: int, budget: float | None = None) -> None:
    """Raise :class:`BudgetError` if ``N * M * (N + M)`` exceeds ``budget``."""
    budget = DEFAULT_BUDGET if budget is None else budget
    if N < 0 or M < 0:
        raise ValueError("grid sizes must be nonnegative")
    cost = float(N) * float(M) * float(N + M)
    if cost > budget:
        raise BudgetError(
            f"grid {N}x{M} needs ~{cost:.3g} operations, budget is {budget:.3g}"
        )
