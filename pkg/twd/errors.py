class TWDError(Exception):
    """Base class for every error raised by the twd package"""


class InfeasibleParametersError(TWDError):
    """Parameters admit no valid construction (net, perturbation, precision)"""


class SparsityUndefinedError(TWDError):
    """Sparsity ratio requested for a set with fewer than two points"""


class LiftError(TWDError):
    """A simplex spans half the torus or more, so it has no canonical lift"""


class UnknownVertexError(TWDError, KeyError):
    """Vertex is not part of the complex"""


class UnsupportedDimensionError(TWDError):
    """Operation is only defined for another ambient dimension"""


class FileFormatError(TWDError, ValueError):
    """Point or complex file does not follow the text format"""


class IngestError(TWDError, ValueError):
    """Euclidean input cannot be mapped into the unit box"""


class InternalError(TWDError, RuntimeError):
    """An internal safety cap was hit"""
