"""Exception types shared across the package."""


class RoiAugError(Exception):
    """Base class for all package-specific errors."""


class ImageFormatError(RoiAugError):
    """Raster file exists but has an unsupported container, mode, or bit depth."""


class DegenerateImageError(RoiAugError):
    """Intensity histogram occupies a single bin; no threshold exists."""


class EmptyMaskError(RoiAugError):
    """Operation requires at least one foreground pixel."""


class BankParseError(RoiAugError):
    """Bank file violates the JSON-lines schema.

    Carries the 1-based line number and offending field when known.
    """

    def __init__(self, message, line=None, field=None):
        if line is not None:
            message = f"line {line}: {message}"
        if field is not None:
            message = f"{message} (field '{field}')"
        super().__init__(message)
        self.line = line
        self.field = field


class ManifestError(RoiAugError):
    """Manifest file or directory cannot be turned into usable records."""


class UndefinedMetricError(RoiAugError):
    """Metric is undefined for the given label composition."""


class DegenerateTestError(RoiAugError):
    """Statistical test has no information (e.g. all paired differences zero)."""
