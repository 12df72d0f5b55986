class DyngraphError(Exception):
    """Base class for all errors raised by the package."""


class StructuralError(DyngraphError):
    """An operation would break a structural invariant (CBT shape, queue bounds)."""


class InsufficientCapacity(DyngraphError):
    """The simulated arena cannot satisfy a reservation."""


class PoolUnderflow(DyngraphError):
    """The edge queue cannot supply the blocks a batch needs, even after growth."""


class RangeExceedsQueue(StructuralError):
    pass


class MalformedBatch(DyngraphError, ValueError):
    """A CSR batch failed validation (bad offsets, out-of-range ids, dead source)."""


class ParseError(DyngraphError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)
