"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid partition, kernel, discretization or run configuration."""


class AssemblyError(ValueError):
    """Raised when a finite element form cannot be assembled."""


class NotSPDError(ArithmeticError):
    """Cholesky factorization met a non-positive pivot.

    ``pivot`` is the 1-based order of the first leading minor that is not
    positive definite.
    """

    def __init__(self, pivot: int):
        self.pivot = int(pivot)
        super().__init__(f"matrix not SPD: non-positive pivot {self.pivot}")
