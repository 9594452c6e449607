"""Shared exception types; the CLI maps these onto exit codes."""


class ShapeError(ValueError):
    """Operands have incompatible extents; message names both shapes."""


class FormatError(ValueError):
    """A file does not follow its declared format; message carries a byte offset."""


class MissingArtifactError(FileNotFoundError):
    """A referenced artifact (file, checkpoint, manifest entry) does not exist."""


class NumericalError(RuntimeError):
    """A computation produced non-finite values and was aborted."""
