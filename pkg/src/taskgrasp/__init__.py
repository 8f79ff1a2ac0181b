"""Task-oriented grasp planning toolkit.

Pipeline: fuse masked depth frames into a probabilistic signed-distance
volume, extract an uncertainty-annotated surface cloud, triangulate a
semantic keypoint skeleton, learn per-task grasp-location mixtures from
one annotated exemplar, and generate parallel-jaw grasps that balance
stability and task constraints.
"""

from . import errors
from .cloud import SurfaceCloud, read_ply, write_ply
from .fusion import (DepthFrame, FusedVolume, IntegrationStats,
                     bounds_from_frames, extract_surface, gaussian_update,
                     incidence_angles, integrate, surface_variation)
from .grasp_eval import (Contact, GraspScore, ScoreConfig, combined_score,
                         contact_angle_score, surface_quality_score)
from .grasp_gen import (GraspCandidate, GripperModel, PlanConfig, PlanResult,
                        check_collision, close_gripper, plan, pose_gripper,
                        sample_start_points)
from .mixtures import EMResult, GaussianMixture2D, fit_best_bic, fit_em
from .sensor import (CameraIntrinsics, NoiseEstimate, depth_rms_error,
                     focal_length, incidence_error, measurement_variance,
                     noise_estimate)
from .skeleton import (FrameRule, Skeleton, SkeletonSpec, KeypointObservation,
                       build_frames, nearest_link, nearest_links, to_spherical,
                       to_spherical_many, triangulate_keypoints)
from .synth import SceneSpec, ShapeModel, ground_truth_skeleton, make_shape, render_depth
from .task_model import (ExemplarAnnotation, KeypointGMM, TaskModel,
                         combine_constraints, score_point, score_surface, train)

__version__ = "0.1.0"
