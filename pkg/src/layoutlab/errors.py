"""Exception types shared across the package."""


class LayoutLabError(Exception):
    """Base class for all package errors."""


class DocumentParseError(LayoutLabError):
    """Raised for malformed input documents; carries a byte offset when known."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class EmptyDocumentError(LayoutLabError):
    pass


class BoundsValidationError(LayoutLabError):
    """A node's geometry violates the canvas or box invariants."""

    def __init__(self, message: str, nodes: list[int] | None = None):
        super().__init__(message)
        self.nodes = nodes or []


class UnknownCategoryError(LayoutLabError):
    pass


class ContractError(LayoutLabError):
    """Caller violated a precondition (dimension mismatch, bad arguments)."""


class UnknownNodeError(LayoutLabError):
    pass


class ContainForestError(LayoutLabError):
    """CONTAIN channel does not encode a forest (cycle or multiple containers)."""

    def __init__(self, message: str, nodes: list[int] | None = None):
        super().__init__(message)
        self.nodes = nodes or []


class ConflictedMatrixError(LayoutLabError):
    """Generation was requested on a matrix that fails validation."""

    def __init__(self, conflicts):
        super().__init__(f"relation matrix has {len(conflicts)} conflicts")
        self.conflicts = list(conflicts)


class InfeasibleLayoutError(LayoutLabError):
    """The relation constraints admit no geometric realization."""

    def __init__(self, message: str, nodes: list[int] | None = None):
        super().__init__(message)
        self.nodes = nodes or []


class UnknownBackendError(LayoutLabError):
    pass


class BackendContractError(LayoutLabError):
    """A generation backend returned output violating the request's relations."""


class DegenerateEmbeddingError(LayoutLabError):
    """Cosine similarity is undefined for a zero-norm embedding."""


class TrainingFailureError(LayoutLabError):
    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace
