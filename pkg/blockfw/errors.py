"""Exception hierarchy for the blocked Floyd-Warshall package."""


class BlockFWError(Exception):
    """Base class for every error raised by this package."""


class BlockSizeError(BlockFWError):
    """The tile size does not divide the vertex count."""

    def __init__(self, n: int, bs: int):
        self.n = n
        self.bs = bs
        super().__init__(f"block size {bs} does not divide n={n} (no implicit padding)")


class MatrixFormatError(BlockFWError):
    """A matrix file could not be decoded."""


class MalformedInput(MatrixFormatError):
    """Empty file, bad magic, unknown version or unreadable header."""


class TruncatedInput(MatrixFormatError):
    """The header promises more elements than the file holds."""


class DimensionMismatch(MatrixFormatError):
    """Matrix dimensions disagree with what the caller expected."""


class ElementKindMismatch(MatrixFormatError):
    """Element kind in the file disagrees with what the caller expected."""


class CorruptPathMatrix(BlockFWError):
    """Expanding an intermediate matrix did not terminate."""


class InvalidPath(BlockFWError):
    """A path contains a hop that is not an edge of the graph."""


class ThreadPoolError(BlockFWError):
    """The worker pool could not be started."""


class ProtocolViolation(BlockFWError):
    """A dependency counter left its legal range, or round accounting failed."""


class BenchError(BlockFWError):
    """A benchmark configuration failed; carries the config echo."""

    def __init__(self, config: dict, cause: BaseException):
        self.config = config
        self.cause = cause
        super().__init__(f"benchmark config {config} failed: {cause}")
