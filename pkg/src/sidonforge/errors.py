"""Exception taxonomy shared by every module in the package.

Each class names one failure mode; CLI error reporting and the TypeScript
bindings key off the class name, so renaming any of these is a breaking
change.
"""


class SidonForgeError(Exception):
    """Base class for all package errors."""


class MalformedWav(SidonForgeError):
    """RIFF structure is inconsistent: bad magic, truncated data, missing chunks."""


class UnsupportedEncoding(SidonForgeError):
    """WAV encoding outside 16/24-bit integer PCM and 32-bit IEEE float."""


class IoError(SidonForgeError):
    """File could not be opened, read, or written."""


class UnsupportedRate(SidonForgeError):
    """Sample rate outside the supported set."""


class RateMismatch(SidonForgeError):
    """Two operands carry different sample rates."""


class SilentSignal(SidonForgeError):
    """Zero-RMS input where a level ratio is required."""


class SilentResidual(SidonForgeError):
    """Degraded minus clean is identically zero; no noise level to measure."""


class AbsorptionInfeasible(SidonForgeError):
    """Sabine absorption exceeds 1: the room cannot decay that fast."""


class InvalidGeometry(SidonForgeError):
    """Source/microphone placement violates room constraints."""


class DecayRangeUnavailable(SidonForgeError):
    """Energy decay curve never spans the fit range."""


class EmptyPool(SidonForgeError):
    """Noise pool has no usable entries."""


class BackendUnavailable(SidonForgeError):
    """Codec executable cannot be resolved."""


class BackendFailure(SidonForgeError):
    """Codec subprocess failed or produced undecodable output."""


class AlignmentFailure(SidonForgeError):
    """Codec output does not correlate with its input."""


class FatalConfig(SidonForgeError):
    """Configuration is invalid; nothing was processed."""
