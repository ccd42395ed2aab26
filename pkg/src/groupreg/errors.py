"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible; message names the offending axes."""


class DataError(ValueError):
    """On-disk data is missing, malformed, or inconsistent with its manifest."""


class FormatError(ValueError):
    """A serialized model file has a bad magic, version, or checksum."""


class NumericError(ArithmeticError):
    """A computation produced NaN/Inf where finite values are required."""
