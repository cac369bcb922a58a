"""Exception types shared across the package."""


class InvalidSpecError(ValueError):
    """A model ingredient (rates, measure, family) violates its contract."""


class HypothesisViolation(ValueError):
    """One of the structural hypotheses (balance, equivalence, continuity) fails."""


class CapacityError(RuntimeError):
    """The configuration space would exceed the configured state cap."""

    def __init__(self, count, cap):
        super().__init__(f"configuration space has {count} states, cap is {cap}")
        self.count = count
        self.cap = cap


class ConvergenceError(RuntimeError):
    """A numerical eigen solve or fit failed."""


class SymmetryError(ValueError):
    """A flux matrix is not symmetric within tolerance."""
