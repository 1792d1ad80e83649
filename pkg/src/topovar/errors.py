"""Exception types raised across the package."""


class TopovarError(Exception):
    """Base class for all package errors."""


class ConfigurationError(TopovarError, ValueError):
    """Invalid grid bounds, counts or other construction parameters."""


class StencilError(ConfigurationError):
    """Too few nodes along an axis for the finite-difference stencils."""


class DegeneracyError(TopovarError):
    """A metric determinant fell below the configured floor."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class SignatureError(TopovarError):
    """A metric has the wrong eigenvalue sign counts somewhere."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class SignatureViolationError(SignatureError):
    """Surgery interpolation produced a degenerate or re-signed metric."""


class SupportError(TopovarError):
    """A compactly supported field reaches into the forbidden margin."""


class GeometryError(TopovarError):
    """A pulled-back ball leaves the coordinate chart."""


class DomainError(TopovarError, ValueError):
    """A deformation parameter outside its admissible range."""


class FitError(TopovarError):
    """Asymptotic fit impossible: too few points, rank deficiency, sign mix."""


class ConsistencyError(TopovarError):
    """Two routes that must agree do not; signals a broken kernel."""


class ScenarioError(TopovarError):
    """Scenario file failed validation; carries every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class AmplitudeError(DomainError):
    """Deformation amplitude large enough to degenerate the metric."""
