"""Exception types raised by splatinit operations."""


class SplatinitError(Exception):
    """Base class for all errors raised by this package."""


class GeometryError(SplatinitError, ValueError):
    """Invalid geometric input or configuration."""


class NonOrthonormalMatrix(GeometryError):
    """Rotation matrix fails the orthonormality check."""


class NonUnitQuaternion(GeometryError):
    """Quaternion norm differs from 1 beyond tolerance."""


class ZeroNormQuaternion(GeometryError):
    """Quaternion with (near) zero norm cannot be normalized."""


class PointBehindCamera(GeometryError):
    """Projection requested for a point with non-positive camera depth."""


class NonPositiveDepth(GeometryError):
    """Unprojection or scale estimation requested with depth <= 0."""


class DegenerateBaseline(GeometryError):
    """Camera centers coincide; no epipolar geometry exists."""


class FormatError(SplatinitError, ValueError):
    """Invalid on-disk payload or container metadata."""


class MalformedHeader(FormatError):
    """Container header does not match the expected layout."""


class TruncatedPayload(FormatError):
    """Payload shorter or longer than the header promises."""


class BadMagic(FormatError):
    """Magic bytes of a binary container do not match."""


class DuplicateObservation(FormatError):
    """Track table contains two records for one (track, frame) pair."""


class OutOfBoundsPixel(FormatError):
    """Visible track observation lies outside the image raster."""


class ConfidenceMissingForID(FormatError):
    """Instance id present in a mask raster without a confidence entry."""


class DimensionMismatch(SplatinitError, ValueError):
    """Operands disagree on raster or vector dimensions."""


class EstimationError(SplatinitError, RuntimeError):
    """Robust estimation could not produce a model."""


class TooFewPoints(EstimationError):
    """Fewer correspondences than the minimal sample size."""


class DegenerateConfiguration(EstimationError):
    """All candidate minimal samples were degenerate."""


class EmptyTrajectory(SplatinitError, ValueError):
    """Trajectory has no visible observation to anchor on."""


class EncodingError(SplatinitError, ValueError):
    """Trajectory encoding could not be fitted or evaluated."""


class UnderdeterminedSystem(EncodingError):
    """Fewer samples than basis functions and no ridge term."""


class IllConditioned(EncodingError):
    """Normal system condition number exceeds the safe bound."""


class DegenerateRotation(EncodingError):
    """Rotation increment too close to zero norm to normalize."""


class ProviderFailure(SplatinitError, RuntimeError):
    """Mask provider raised while segmenting or propagating."""


class EmptyMask(SplatinitError, ValueError):
    """Loss evaluation mask excludes every pixel."""


class ImageTooSmall(SplatinitError, ValueError):
    """Raster smaller than the filtering window."""


class DegenerateVariance(SplatinitError, ValueError):
    """Correlation undefined: fewer than two samples or zero variance."""


class MissingInput(SplatinitError, ValueError):
    """A pipeline stage input file or directory is absent."""


class ConfigError(SplatinitError, ValueError):
    """Pipeline configuration file is invalid."""


class StageFailure(SplatinitError, RuntimeError):
    """A pipeline stage aborted; the message names the stage."""
