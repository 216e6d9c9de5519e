"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called with arguments violating its contract."""


class RangeTagError(ContractViolation):
    """An image carried the wrong value-range tag for the operation."""


class DegenerateHullError(ValueError):
    """All input points are collinear; no 2-D convex hull exists."""


class SamplingFailureError(RuntimeError):
    """Ratio-constrained mask sampling exhausted its attempt budget."""


class RenderError(ValueError):
    """Text rendering failed, e.g. an unsupported character."""


class ManifestError(IOError):
    """A dataset manifest is missing files or violates the schema."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""
