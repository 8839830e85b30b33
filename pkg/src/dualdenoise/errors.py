"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible dimensions."""


class DegenerateInputError(ValueError):
    """Input is mathematically unusable (e.g. zero-norm vector for cosine)."""


class ContractError(ValueError):
    """A documented precondition was violated by the caller."""


class DecodeError(ValueError):
    """A target index stream cannot be parsed into aspect tuples."""


class DatasetFormatError(ValueError):
    """A dataset file is malformed; message carries the offending line number."""
