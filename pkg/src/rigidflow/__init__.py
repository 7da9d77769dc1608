"""rigidflow: rigid-flow geometry, PnP ego-motion, per-pixel rigidity
segmentation and unsupervised scene-flow losses, with a synthetic scene
generator providing exact ground truth for verification."""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND
from .geometry import (CameraPose, DepthMap, Intrinsics, back_project,
                       pose_compose, pose_inverse, project, rigid_flow,
                       se3_exp, se3_log)

__all__ = [
    "KERNEL_BACKEND", "CameraPose", "DepthMap", "Intrinsics",
    "back_project", "pose_compose", "pose_inverse", "project",
    "rigid_flow", "se3_exp", "se3_log",
]
