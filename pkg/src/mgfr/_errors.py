"""Exception hierarchy shared across the package."""


class FrechetError(Exception):
    """Base class for all errors raised by :mod:`mgfr`."""


class InvalidInput(FrechetError, ValueError):
    """Input data violates an operation precondition."""


class IncompatibleSpaces(FrechetError, ValueError):
    """Two objects do not live in the same metric space (grid or dimension mismatch)."""


class DegenerateWeights(FrechetError, ValueError):
    """The weighted Frechet objective is ill-posed because the weights sum to <= 0."""

    def __init__(self, message, weight_sum=None):
        super().__init__(message)
        self.weight_sum = weight_sum


class IllConditioned(FrechetError, ArithmeticError):
    """A covariance matrix is too ill-conditioned to invert reliably."""

    def __init__(self, message, condition_number):
        super().__init__(message)
        self.condition_number = condition_number


class InvalidConfiguration(FrechetError, ValueError):
    """A configuration object is missing a required piece or holds an invalid value."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class DegenerateRate(FrechetError, ArithmeticError):
    """A convergence rate cannot be fitted (e.g. a zero median loss)."""
