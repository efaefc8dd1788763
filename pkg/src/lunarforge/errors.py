"""Exception hierarchy.

The CLI maps the three top-level families onto exit codes: configuration
problems exit 2, pipeline failures exit 3 and file/format problems exit 4.
"""


class LunarForgeError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(LunarForgeError, ValueError):
    """A configuration file failed to parse or validate."""


class PipelineError(LunarForgeError):
    """A generation stage could not complete with the given inputs."""


class DemError(PipelineError, ValueError):
    """Invalid elevation grid or invalid query against one."""


class BudgetExceededError(PipelineError):
    """An operation would allocate more cells than the configured budget."""


class ProfileError(PipelineError, ValueError):
    """A crater profile failed validation."""


class CraterError(PipelineError, ValueError):
    """Invalid crater specification or stamp operation."""


class SamplingError(PipelineError, ValueError):
    """A point process could not be sampled with the given parameters."""


class MeshError(PipelineError, ValueError):
    """Invalid mesh buffers for the requested operation."""


class AnnotationError(PipelineError, ValueError):
    """Missing or inconsistent inputs to the annotation stage."""


class FormatError(LunarForgeError):
    """A file on disk does not match its declared format."""


class HeaderError(FormatError):
    """A sidecar header is missing, malformed or incomplete."""


class DimensionMismatchError(FormatError):
    """Payload size disagrees with the dimensions declared in the header."""


class UnreadableFileError(FormatError):
    """The file could not be opened or decoded."""
