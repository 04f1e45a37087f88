"""Rigid-body types, pinhole projection and reprojection residuals.

Everything here is a pure function of immutable value types: a ground-plane
robot pose (x, y, theta), calibrated pinhole cameras with fixed extrinsics,
and a rigid set of 3D keypoints on the robot body.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AllZeroWeights, BehindCamera, UnknownCamera, UnknownKeypoint

_TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Normalize an angle into (-pi, pi]."""
    a = math.fmod(a, _TWO_PI)
    if a > math.pi:
        a -= _TWO_PI
    elif a <= -math.pi:
        a += _TWO_PI
    return a


def angle_diff(a: float, b: float) -> float:
    """Wrapped difference a - b in (-pi, pi]."""
    return wrap_angle(a - b)


@dataclass(frozen=True)
class PoseSE2:
    """Ground-plane robot pose; theta is always normalized into (-pi, pi]."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def compose(self, other: "PoseSE2") -> "PoseSE2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return PoseSE2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    def inverse(self) -> "PoseSE2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return PoseSE2(-c * self.x - s * self.y, s * self.x - c * self.y, -self.theta)

    def apply(self, pt_xy) -> np.ndarray:
        """Transform a ground-plane point (or array of points) by this pose."""
        pt = np.asarray(pt_xy, dtype=float)
        c, s = math.cos(self.theta), math.sin(self.theta)
        rot = np.array([[c, -s], [s, c]])
        return pt @ rot.T + np.array([self.x, self.y])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


@dataclass(frozen=True)
class RigidTransform3:
    """Rotation + translation in 3D; rotation must be orthonormal, det +1."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        tr = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tr)
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-9):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise ValueError("rotation determinant is not +1")

    @classmethod
    def identity(cls) -> "RigidTransform3":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform3") -> "RigidTransform3":
        return RigidTransform3(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform3":
        rt = self.rotation.T
        return RigidTransform3(rt, -rt @ self.translation)

    def as_matrix(self) -> np.ndarray:
        mat = np.eye(4)
        mat[:3, :3] = self.rotation
        mat[:3, 3] = self.translation
        return mat


@dataclass(frozen=True)
class CameraModel:
    """Calibrated pinhole camera with a fixed world-to-camera extrinsic."""

    camera_id: int
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_camera: RigidTransform3

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width) or not (0 < self.cy < self.height):
            raise ValueError("principal point outside the image")

    def center_world(self) -> np.ndarray:
        """Camera optical center in world coordinates."""
        return self.world_to_camera.inverse().translation

    def ground_position(self) -> np.ndarray:
        """Camera center projected to the ground plane."""
        return self.center_world()[:2]


@dataclass(frozen=True)
class RobotModel:
    """M rigid 3D keypoints in the robot body frame."""

    keypoints: np.ndarray
    body_width: float

    def __post_init__(self):
        kps = np.asarray(self.keypoints, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "keypoints", kps)
        if kps.shape[0] < 4:
            raise ValueError("robot model needs at least 4 keypoints")
        if np.abs(kps).max() > 1.0:
            raise ValueError("keypoints exceed the 1 m body bounding box")
        if self.body_width <= 0:
            raise ValueError("body_width must be positive")

    @property
    def n_keypoints(self) -> int:
        return self.keypoints.shape[0]


def se2_embed(pose: PoseSE2) -> RigidTransform3:
    """Lift a ground-plane pose to a 3D rigid transform (rotation about z)."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return RigidTransform3(rot, np.array([pose.x, pose.y, 0.0]))


def project(camera: CameraModel, point_world) -> np.ndarray:
    """Pinhole projection of a world point to pixel coordinates."""
    pc = camera.world_to_camera.apply(np.asarray(point_world, dtype=float))
    if pc[2] <= 1e-9:
        raise BehindCamera(f"depth {pc[2]:.3g} in camera {camera.camera_id}")
    return np.array(
        [camera.fx * pc[0] / pc[2] + camera.cx, camera.fy * pc[1] / pc[2] + camera.cy]
    )


def project_points(camera: CameraModel, pts_world: np.ndarray):
    """Vectorized projection. Returns (pixels (N,2), valid depth mask (N,))."""
    pc = camera.world_to_camera.apply(pts_world)
    valid = pc[:, 2] > 1e-9
    z = np.where(valid, pc[:, 2], 1.0)
    pix = np.stack(
        [camera.fx * pc[:, 0] / z + camera.cx, camera.fy * pc[:, 1] / z + camera.cy],
        axis=1,
    )
    return pix, valid


def keypoint_world(pose: PoseSE2, model: RobotModel, j: int) -> np.ndarray:
    """World position of keypoint j with the robot at the given pose."""
    if not 0 <= j < model.n_keypoints:
        raise IndexError(f"keypoint index {j} out of range")
    return se2_embed(pose).apply(model.keypoints[j])


def keypoints_world(pose: PoseSE2, model: RobotModel) -> np.ndarray:
    """World positions of all keypoints, shape (M, 3)."""
    return se2_embed(pose).apply(model.keypoints)


def reprojection_residuals(pose: PoseSE2, cameras, frameset, model: RobotModel):
    """Stacked reprojection residuals over a frame-set.

    Returns (residuals (K, 2), weights (K,)) with one row per detected
    keypoint: observed pixel minus projected model keypoint. The weighted
    squared norm of the stack is the multi-view least-squares objective.
    """
    cams = {c.camera_id: c for c in cameras}
    pts = keypoints_world(pose, model)
    residuals = []
    weights = []
    for cam_id in sorted(frameset.per_camera):
        msg = frameset.per_camera[cam_id]
        if cam_id not in cams:
            raise UnknownCamera(f"camera {cam_id} not in rig")
        cam = cams[cam_id]
        for obs in msg.keypoints:
            if not 0 <= obs.index < model.n_keypoints:
                raise UnknownKeypoint(f"keypoint index {obs.index}")
            residuals.append(obs.pixel - project(cam, pts[obs.index]))
            weights.append(obs.confidence)
    if not residuals:
        return np.zeros((0, 2)), np.zeros(0)
    return np.array(residuals), np.array(weights)


def residual_jacobian(
    pose: PoseSE2, camera: CameraModel, model: RobotModel, j: int
) -> np.ndarray:
    """2x3 derivative of the reprojection residual w.r.t. (x, y, theta).

    Chain rule through the ground-plane embedding, the camera extrinsic and
    the pinhole division. The residual is observation minus projection, so
    the result is the negated projection derivative.
    """
    kp = model.keypoints[j]
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    pw = np.array(
        [
            c * kp[0] - s * kp[1] + pose.x,
            s * kp[0] + c * kp[1] + pose.y,
            kp[2],
        ]
    )
    rot = camera.world_to_camera.rotation
    pc = rot @ pw + camera.world_to_camera.translation
    if pc[2] <= 1e-9:
        raise BehindCamera(f"depth {pc[2]:.3g} in camera {camera.camera_id}")
    x_, y_, z_ = pc
    dpi = np.array(
        [
            [camera.fx / z_, 0.0, -camera.fx * x_ / z_**2],
            [0.0, camera.fy / z_, -camera.fy * y_ / z_**2],
        ]
    )
    # world-point derivative w.r.t. (x, y, theta)
    dpw = np.array(
        [
            [1.0, 0.0, -s * kp[0] - c * kp[1]],
            [0.0, 1.0, c * kp[0] - s * kp[1]],
            [0.0, 0.0, 0.0],
        ]
    )
    return -dpi @ rot @ dpw


def circular_weighted_mean(angles, weights) -> float:
    """Weighted mean of angles on the unit circle, result in (-pi, pi]."""
    angles = np.asarray(angles, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    if not np.any(weights > 0):
        raise AllZeroWeights("all weights are zero")
    s = float(np.sum(weights * np.sin(angles)))
    c = float(np.sum(weights * np.cos(angles)))
    return wrap_angle(math.atan2(s, c))
