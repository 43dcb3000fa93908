"""Exception hierarchy shared by all modules."""


class LorenzCocycleError(Exception):
    """Base class for every error raised by the package."""


class DomainError(LorenzCocycleError, ValueError):
    """A point lies outside the domain of a map (e.g. on the singular leaf x = 0)."""


class ParameterError(LorenzCocycleError, ValueError):
    """Invalid model or algorithm parameters."""


class EigenvalueError(ParameterError):
    """The linearization at the origin has complex eigenvalues."""

    def __init__(self, discriminant: float):
        self.discriminant = discriminant
        super().__init__(
            f"complex eigenvalues at the origin: discriminant (a+1)^2 + 4a(b-1) = {discriminant:.6g} < 0"
        )


class IntegrationError(LorenzCocycleError, ArithmeticError):
    def __init__(self, step: int, state):
        self.step = step
        self.state = state
        super().__init__(f"non-finite state at step {step}: {state!r}")


class SchemeError(LorenzCocycleError):
    """Inducing-scheme construction or validation failed."""


class NotCoveredError(LorenzCocycleError, ValueError):
    """A point falls in the gap set of an inducing scheme."""

    def __init__(self, x: float, nearest_branch: int | None):
        self.x = x
        self.nearest_branch = nearest_branch
        super().__init__(f"point {x!r} is not covered by any branch (nearest branch: {nearest_branch})")


class PartialItineraryError(LorenzCocycleError):
    """Encoding hit the gap set after ``len(symbols)`` steps."""

    def __init__(self, symbols, x):
        self.symbols = tuple(symbols)
        self.x = x
        super().__init__(f"gap hit after {len(self.symbols)} symbols at x={x!r}")


class InconsistentItineraryError(LorenzCocycleError):
    """Nested preimages became empty: the scheme and itinerary disagree."""


class TruncationError(LorenzCocycleError):
    """An itinerary references symbols outside the truncated alphabet."""


class ConvergenceError(LorenzCocycleError):
    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (residual {residual:.3e})")


class InvalidGeneratorError(LorenzCocycleError, ValueError):
    """A cocycle generator has a singular or non-finite entry."""


class LengthError(LorenzCocycleError, ValueError):
    """An itinerary is too short for the requested product."""


class UnderflowError(LorenzCocycleError, ArithmeticError):
    def __init__(self, step: int, value: float):
        self.step = step
        self.value = value
        super().__init__(
            f"R diagonal entry {value:.3e} below 1e-300 at step {step}; use a smaller n or rescale the generator"
        )
