"""Exception types raised by the pipeline."""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class AudioFormatError(PipelineError):
    """The audio file exists but is not 16-bit PCM mono RIFF/WAVE."""


class ArchiveFormatError(PipelineError):
    """A feature/representation archive or model file is malformed."""


class ManifestError(PipelineError):
    """A dataset manifest row is malformed or inconsistent."""


class LeakError(PipelineError):
    """A test speaker's data reached a training stage of its fold."""
