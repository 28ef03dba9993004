class BenchError(Exception):
    """Base class for every domain error raised by the toolkit"""
    pass


class ImageIOError(BenchError):
    """Exception raised when an image, mask or semantic PNG cannot be read or written"""

    def __init__(self, path, cause):
        self.path = str(path)
        self.cause = cause
        super().__init__(f"{self.path}: {cause}")


class NonBinaryMaskError(ImageIOError):
    """Exception raised when a mask PNG holds values other than 0 and 255"""

    def __init__(self, path, count):
        self.count = int(count)
        super().__init__(path, f"non-binary mask ({self.count} pixels outside {{0, 255}})")


class DimensionMismatchError(BenchError):
    """Exception raised when paired grids or images disagree in shape"""
    pass


class MaskParamsError(BenchError):
    """Exception raised when generator parameters are invalid or the image is too small"""
    pass


class ManifestError(BenchError):
    """Exception raised when a run manifest or record file is inconsistent"""
    pass


class EmptyInputError(BenchError):
    """Exception raised when an aggregation receives nothing to aggregate"""
    pass


class MetricError(BenchError):
    """Exception raised when a metric cannot be computed"""
    pass


class PluginError(BenchError):
    """Exception raised when an external metric plug-in fails"""

    def __init__(self, name, reason, excerpt=""):
        self.name = name
        self.reason = reason
        self.excerpt = excerpt
        message = f"plugin '{name}': {reason}"
        if excerpt:
            message += f"\n--- output excerpt ---\n{excerpt}"
        super().__init__(message)

    def to_dict(self):
        return {"name": self.name, "reason": self.reason, "excerpt": self.excerpt}


class MisPairedError(BenchError):
    """Exception raised when a degraded input is nonzero inside its mask"""
    pass
