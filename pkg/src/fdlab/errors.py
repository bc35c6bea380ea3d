"""Exception types shared across the package."""


class FdlabError(Exception):
    """Base class for package errors."""


class ExprError(FdlabError):
    """Malformed expression construction."""


class FootprintError(ExprError):
    """A stencil shift pushed a reference offset outside the halo range."""


class NotDiscretizedError(ExprError):
    """An operation that requires a discretized expression met a derivative node."""


class UnsupportedDerivativeError(ExprError):
    """Derivative order or axis set outside what the stencils support."""


class UnboundReferenceError(FdlabError):
    """Point evaluation met a reference with no value in the bindings."""


class PlanError(FdlabError):
    """Inconsistent kernel plan construction."""


class GridError(FdlabError):
    """Invalid grid geometry or field store usage."""


class NumericalBlowupError(FdlabError):
    """A residual evaluation produced non-finite values."""


class StateError(FdlabError):
    """Solution state violated a positivity requirement."""


class PowerError(FdlabError):
    """Invalid power source configuration or sample series."""


class ReportError(FdlabError):
    """Benchmark report assembly failed."""
