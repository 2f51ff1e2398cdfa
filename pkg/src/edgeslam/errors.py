"""Exception types raised across the pipeline.

Every failure mode that callers are expected to branch on gets its own
class; everything inherits from EdgeSlamError so the CLI can map families
of failures to exit codes.
"""


class EdgeSlamError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(EdgeSlamError):
    """Invalid or missing configuration (CLI exit code 1)."""


class DatasetError(EdgeSlamError):
    """Malformed or missing dataset files (CLI exit code 2)."""


# --- geometry ---------------------------------------------------------------

class NonPositiveDepthError(EdgeSlamError):
    """A point was at or behind the camera plane where positive depth is required."""


class BehindCameraError(EdgeSlamError):
    """A triangulated or observed point ended up behind a camera."""


# --- frontend ---------------------------------------------------------------

class EmptyImageError(EdgeSlamError):
    """An empty image was passed to a detector."""


# --- epipolar ---------------------------------------------------------------

class InsufficientMatchesError(EdgeSlamError):
    """Fewer correspondences than the minimal sample size."""


class DegenerateConfigurationError(EdgeSlamError):
    """Correspondence geometry does not determine a unique model
    (near-zero translation, planar degeneracy, or too few inliers)."""


class CheiralityError(EdgeSlamError):
    """No essential-matrix factorization places a majority of points
    in front of both cameras."""


class LowParallaxError(EdgeSlamError):
    """Viewing rays are too close to parallel for stable triangulation."""


# --- depth ------------------------------------------------------------------

class DepthFormatError(DatasetError):
    """Depth file is not a 16-bit single-channel PNG."""


class OutOfBoundsError(EdgeSlamError):
    """A pixel query fell outside the image/depth grid."""


class InvalidDepthError(EdgeSlamError):
    """All neighbors at a sampled location carry no valid depth."""


# --- EKF --------------------------------------------------------------------

class InnovationGateError(EdgeSlamError):
    """A measurement innovation exceeded its gate; the update was rejected
    and the state left unchanged."""

    def __init__(self, message, innovation=None):
        super().__init__(message)
        self.innovation = innovation


# --- losses / solver --------------------------------------------------------

class DegenerateDirectionError(EdgeSlamError):
    """A junction segment collapsed to (near) zero length in 3D."""


class InsufficientPointsError(EdgeSlamError):
    """Too few points to fit a 3D line segment."""


class SingularSystemError(EdgeSlamError):
    """The damped normal equations stayed unsolvable at maximum damping."""


class NonFiniteResidualError(EdgeSlamError):
    """A residual or Jacobian evaluated to NaN/inf at an accepted state."""


# --- evaluation -------------------------------------------------------------

class NoOverlapError(EdgeSlamError):
    """Trajectory association produced zero timestamp pairs."""


class EmptyPairsError(EdgeSlamError):
    """A metric was requested over an empty pair list."""
