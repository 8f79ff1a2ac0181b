"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: input/config problems exit 2,
empty results (no surface, no grasp) exit 3, numerical failures exit 4.
"""


class GraspPlanningError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(GraspPlanningError, ValueError):
    """A value violates a documented precondition."""


class InvalidIntrinsicsError(InvalidInputError):
    """Camera intrinsics are degenerate (resolution, field of view)."""


class GrazingRayError(GraspPlanningError):
    """Incidence angle at or beyond the grazing clamp; ray excluded from fusion."""


class InvalidFrameError(InvalidInputError):
    """Depth frame rejected: bad pose, mismatched mask, or invalid depth."""


class EmptySurfaceError(GraspPlanningError):
    """The fused volume contains no zero crossing to triangulate."""


class DegenerateGeometryError(GraspPlanningError):
    """Triangulation geometry is singular (parallel rays, coincident cameras)."""


class FrameUndefinedError(GraspPlanningError):
    """No keypoint frame can be built (collinear keypoints and no cloud)."""


class UndefinedDirectionError(InvalidInputError):
    """Zero-length direction vector where a direction is required."""


class InvalidContactError(InvalidInputError):
    """Contact set carries zero-length or non-unit vectors."""


class InvalidScoreError(InvalidInputError):
    """A probabilistic score fell outside [0, 1]."""


class InvalidConfigError(InvalidInputError):
    """Run configuration violates its invariants (weights, paths, ranges)."""


class InvalidPoseError(InvalidInputError):
    """Gripper pose inconsistent with the sampled surface point."""


class UnsupportedShapeError(GraspPlanningError):
    """Synthetic shape has no skeleton definition or unknown type."""


class DegenerateViewError(GraspPlanningError):
    """Virtual camera placed inside the rendered object."""


class NoGraspFoundError(GraspPlanningError):
    """Planning produced zero scoreable candidates.

    Carries per-stage rejection counts for diagnosis.
    """

    def __init__(self, message, rejections=None):
        super().__init__(message)
        self.rejections = dict(rejections or {})
