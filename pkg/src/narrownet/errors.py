"""Exception hierarchy shared by every stage of the pipeline."""


class NarrowNetError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(NarrowNetError, ValueError):
    """Input vector or matrix has the wrong shape."""


class DegenerateConfigurationError(NarrowNetError):
    """A point configuration admits no strict separating functional."""


class GeometryError(NarrowNetError):
    """A geometric invariant of an extension step failed."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class UnusableModulusError(NarrowNetError):
    """An empirical modulus has no sample below the requested tolerance."""


class TargetEvaluationError(NarrowNetError):
    """The target function returned a non-finite value."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class NumericError(NarrowNetError, ArithmeticError):
    """A forward pass produced a non-finite intermediate value."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class OutOfScopeNetError(NarrowNetError):
    """The analyzer was handed a net it does not cover."""


class SchemaError(NarrowNetError, ValueError):
    """Serialized data does not match the expected schema."""


class CompilationError(NarrowNetError):
    """Internal consistency check of the compiler failed."""
