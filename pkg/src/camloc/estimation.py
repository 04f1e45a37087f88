"""Multi-view pose estimation from synchronized keypoint detections.

Implements the weighted nonlinear least-squares pose solve (Levenberg-
Marquardt with a Huber-robustified pixel residual), per-camera candidate
generation with ground-plane multi-start for prior-free initialization,
the single-camera bearing-only outlier gate, residual-based covariance,
and information-weighted averaging of consecutive estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    InsufficientKeypoints,
    InsufficientObservations,
    NoEligibleCamera,
    SolverDiverged,
)
from .geometry import (
    CameraModel,
    PoseSE2,
    RobotModel,
    angle_diff,
    circular_weighted_mean,
    wrap_angle,
)
from .sync import DetectionMessage, FrameSet

_MIN_DEPTH = 0.05  # m; depth clamp keeping gradients finite off-manifold


@dataclass
class SolverConfig:
    max_iterations: int = 50
    convergence_tol: float = 1e-10  # relative objective change
    lm_lambda_init: float = 1e-3
    lm_lambda_scale: float = 10.0
    huber_delta: float = 5.0  # px

    def __post_init__(self):
        if min(
            self.max_iterations,
            self.convergence_tol,
            self.lm_lambda_init,
            self.lm_lambda_scale,
            self.huber_delta,
        ) <= 0:
            raise ValueError("all solver constants must be positive")


@dataclass
class GateThresholds:
    d_theta: float = math.radians(15.0)
    d_depth: float = 0.30  # m

    def __post_init__(self):
        if self.d_theta <= 0 or self.d_depth <= 0:
            raise ValueError("gate thresholds must be positive")


@dataclass
class PoseEstimate:
    pose: PoseSE2
    covariance: np.ndarray
    rms_residual: float
    n_cameras: int
    n_keypoints: int
    stamp: float
    gated: bool = False
    n_iterations: int = 0

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=float).reshape(3, 3)
        object.__setattr__(self, "covariance", cov)
        if self.n_cameras < 1:
            raise ValueError("estimate needs at least one camera")
        np.linalg.cholesky(cov)  # raises if not positive-definite


@dataclass
class Candidate:
    """Single-camera ground-plane pose candidate."""

    pose: PoseSE2
    rms_residual: float
    mean_confidence: float
    camera_id: int


class _Observations:
    """Per-camera detection arrays prepared for vectorized LM evaluation."""

    def __init__(self):
        self.blocks = []  # (camera, kp_indices (K,), pixels (K,2), weights (K,))
        self.total = 0

    def add_message(self, camera: CameraModel, message: DetectionMessage):
        idx = np.array([k.index for k in message.keypoints], dtype=int)
        pix = np.array([k.pixel for k in message.keypoints])
        w = np.array([k.confidence for k in message.keypoints])
        self.blocks.append((camera, idx, pix, w))
        self.total += len(idx)

    @property
    def n_cameras(self) -> int:
        return len(self.blocks)


def _gather(frameset: FrameSet, cameras, model: RobotModel) -> _Observations:
    cams = {c.camera_id: c for c in cameras}
    obs = _Observations()
    for cam_id in sorted(frameset.per_camera):
        msg = frameset.per_camera[cam_id]
        obs.add_message(cams[cam_id], msg)
    return obs


def _residuals_jacobian(params, obs: _Observations, model: RobotModel, need_jac=True):
    """Stacked residuals (K,2), per-row weights (K,) and Jacobian (K,2,3)."""
    x, y, theta = params
    c, s = math.cos(theta), math.sin(theta)
    res = []
    wts = []
    jac = []
    for camera, idx, pix, w in obs.blocks:
        kp = model.keypoints[idx]
        wx = c * kp[:, 0] - s * kp[:, 1] + x
        wy = s * kp[:, 0] + c * kp[:, 1] + y
        pw = np.stack([wx, wy, kp[:, 2]], axis=1)
        rot = camera.world_to_camera.rotation
        pc = pw @ rot.T + camera.world_to_camera.translation
        z = np.maximum(pc[:, 2], _MIN_DEPTH)
        u = camera.fx * pc[:, 0] / z + camera.cx
        v = camera.fy * pc[:, 1] / z + camera.cy
        res.append(pix - np.stack([u, v], axis=1))
        wts.append(w)
        if need_jac:
            k = len(idx)
            dpi = np.zeros((k, 2, 3))
            dpi[:, 0, 0] = camera.fx / z
            dpi[:, 0, 2] = -camera.fx * pc[:, 0] / z**2
            dpi[:, 1, 1] = camera.fy / z
            dpi[:, 1, 2] = -camera.fy * pc[:, 1] / z**2
            dpw = np.zeros((k, 3, 3))
            dpw[:, 0, 0] = 1.0
            dpw[:, 1, 1] = 1.0
            dpw[:, 0, 2] = -s * kp[:, 0] - c * kp[:, 1]
            dpw[:, 1, 2] = c * kp[:, 0] - s * kp[:, 1]
            jac.append(-np.einsum("kij,jl,klm->kim", dpi, rot, dpw))
    res = np.concatenate(res) if res else np.zeros((0, 2))
    wts = np.concatenate(wts) if wts else np.zeros(0)
    if need_jac:
        jac = np.concatenate(jac) if jac else np.zeros((0, 2, 3))
        return res, wts, jac
    return res, wts, None


def _huber_objective(res, wts, delta) -> float:
    """Sum of per-detection weighted Huber costs on the residual norm."""
    s = np.linalg.norm(res, axis=1)
    quad = s <= delta
    cost = np.where(quad, s**2, 2.0 * delta * s - delta**2)
    return float(np.sum(wts * cost))


def _huber_weights(res, delta):
    s = np.linalg.norm(res, axis=1)
    return np.where(s <= delta, 1.0, delta / np.maximum(s, 1e-12))


def _levenberg_marquardt(init: PoseSE2, obs: _Observations, model, config: SolverConfig):
    """Minimize the Huber objective from init; returns (pose, objective, iters)."""
    params = init.as_array()
    res, wts, _ = _residuals_jacobian(params, obs, model, need_jac=False)
    obj = _huber_objective(res, wts, config.huber_delta)
    lam = config.lm_lambda_init
    iters = 0
    for _ in range(config.max_iterations):
        iters += 1
        res, wts, jac = _residuals_jacobian(params, obs, model)
        eff = wts * _huber_weights(res, config.huber_delta)
        sw = np.sqrt(eff)[:, None, None]
        jw = (jac * sw).reshape(-1, 3)
        rw = (res * np.sqrt(eff)[:, None]).reshape(-1)
        hess = jw.T @ jw
        grad = jw.T @ rw
        if np.linalg.norm(grad) < 1e-14:
            break
        improved = False
        while True:
            damp = hess + lam * np.diag(np.maximum(np.diag(hess), 1e-12))
            try:
                step = -np.linalg.solve(damp, grad)
            except np.linalg.LinAlgError:
                step = None
            if step is not None:
                trial = params + step
                trial[2] = wrap_angle(trial[2])
                t_res, t_wts, _ = _residuals_jacobian(trial, obs, model, need_jac=False)
                t_obj = _huber_objective(t_res, t_wts, config.huber_delta)
                if t_obj < obj:
                    rel = (obj - t_obj) / max(obj, 1e-300)
                    params, obj = trial, t_obj
                    lam = max(lam / config.lm_lambda_scale, 1e-12)
                    improved = True
                    if rel < config.convergence_tol:
                        return PoseSE2(*params), obj, iters
                    break
            lam *= config.lm_lambda_scale
            if lam > 1e12:
                # Infinite damping shrinks the step to nothing: no descent
                # direction improves the objective within machine precision,
                # so this is a stationary point, not divergence.
                if not np.isfinite(obj) or not np.all(np.isfinite(params)):
                    raise SolverDiverged(f"non-finite state at objective {obj:.3g}")
                return PoseSE2(*params), obj, iters
        if not improved:
            break
    return PoseSE2(*params), obj, iters


def estimate_covariance(rms_residual: float, n_cameras: int, n_keypoints: int) -> np.ndarray:
    """Diagonal covariance scaled by residual and shrunk by camera count."""
    if n_cameras < 1:
        raise ValueError("n_cameras must be >= 1")
    k_t = 0.01  # m per px of residual
    k_theta = math.radians(0.6)  # rad per px of residual
    r_min = 0.5  # px floor keeping the covariance positive-definite
    r = max(rms_residual, r_min)
    sigma_xy = k_t * r / n_cameras
    sigma_theta = k_theta * r / n_cameras
    return np.diag([sigma_xy**2, sigma_xy**2, sigma_theta**2])


def solve_multiview(
    frameset: FrameSet,
    init: PoseSE2,
    cameras,
    model: RobotModel,
    config: SolverConfig | None = None,
) -> PoseEstimate:
    """Refine the robot pose on a frame-set via robust LM from the given init."""
    config = config or SolverConfig()
    obs = _gather(frameset, cameras, model)
    if obs.total < 3:
        raise InsufficientObservations(f"{obs.total} keypoint observations (need 3)")
    pose, obj, iters = _levenberg_marquardt(init, obs, model, config)
    rms = math.sqrt(obj / obs.total)
    return PoseEstimate(
        pose=pose,
        covariance=estimate_covariance(rms, obs.n_cameras, obs.total),
        rms_residual=rms,
        n_cameras=obs.n_cameras,
        n_keypoints=obs.total,
        stamp=frameset.anchor_stamp,
        n_iterations=iters,
    )


def _backproject_centroid(message, camera: CameraModel, model: RobotModel) -> np.ndarray:
    """Ground-plane position whose keypoint-centroid projects near the
    observed centroid pixel; used only to seed the multi-start solve."""
    w = np.array([k.confidence for k in message.keypoints])
    pix = np.array([k.pixel for k in message.keypoints])
    w = np.maximum(w, 1e-6)
    centroid = (pix * w[:, None]).sum(axis=0) / w.sum()
    xn = (centroid[0] - camera.cx) / camera.fx
    yn = (centroid[1] - camera.cy) / camera.fy
    d_world = camera.world_to_camera.rotation.T @ np.array([xn, yn, 1.0])
    origin = camera.center_world()
    height = float(model.keypoints[:, 2].mean())
    if abs(d_world[2]) > 1e-9:
        t = (height - origin[2]) / d_world[2]
        if t > 0.1:
            hit = origin + t * d_world
            return hit[:2]
    # ray nearly horizontal or pointing up: fall back to 4 m along the axis
    fallback = origin + 4.0 * camera.world_to_camera.rotation.T @ np.array([0.0, 0.0, 1.0])
    return fallback[:2]


def single_view_candidate(
    message: DetectionMessage,
    camera: CameraModel,
    model: RobotModel,
    config: SolverConfig | None = None,
) -> Candidate:
    """Ground-plane pose candidate from one camera's detections.

    Runs the 3-DoF solve from 8 equally spaced heading initializations at
    the back-projected keypoint centroid and keeps the lowest-residual
    solution; the narrow robot body makes the heading multi-modal from a
    single view, which the multi-start resolves.
    """
    config = config or SolverConfig()
    if len(message.keypoints) < 4:
        raise InsufficientKeypoints(
            f"{len(message.keypoints)} keypoints from camera {message.camera_id} (need 4)"
        )
    obs = _Observations()
    obs.add_message(camera, message)
    seed_xy = _backproject_centroid(message, camera, model)
    best = None
    for k in range(8):
        theta0 = -math.pi + (2.0 * math.pi * k) / 8.0
        init = PoseSE2(seed_xy[0], seed_xy[1], theta0)
        try:
            pose, obj, _ = _levenberg_marquardt(init, obs, model, config)
        except SolverDiverged:
            continue
        if best is None or obj < best[1]:
            best = (pose, obj)
    if best is None:
        raise SolverDiverged("all candidate starts diverged")
    pose, obj = best
    rms = math.sqrt(obj / obs.total)
    mean_conf = float(np.mean([k.confidence for k in message.keypoints]))
    return Candidate(pose=pose, rms_residual=rms, mean_confidence=mean_conf,
                     camera_id=message.camera_id)


def interpolate_candidates(candidates) -> PoseSE2:
    """Blend per-camera candidates: weighted position mean, circular heading
    mean, with weights confidence / residual so poor fits cannot dominate."""
    if not candidates:
        raise ValueError("no candidates to interpolate")
    weights = np.array(
        [max(c.mean_confidence / max(c.rms_residual, 1e-6), 1e-6) for c in candidates]
    )
    xs = np.array([c.pose.x for c in candidates])
    ys = np.array([c.pose.y for c in candidates])
    thetas = [c.pose.theta for c in candidates]
    wsum = weights.sum()
    return PoseSE2(
        float(np.dot(weights, xs) / wsum),
        float(np.dot(weights, ys) / wsum),
        circular_weighted_mean(thetas, weights),
    )


def initialize_global(
    frameset: FrameSet,
    cameras,
    model: RobotModel,
    config: SolverConfig | None = None,
) -> PoseEstimate:
    """Prior-free (kidnapped robot) initialization from a frame-set."""
    config = config or SolverConfig()
    cams = {c.camera_id: c for c in cameras}
    candidates = []
    for cam_id in sorted(frameset.per_camera):
        msg = frameset.per_camera[cam_id]
        if len(msg.keypoints) < 4:
            continue
        try:
            candidates.append(single_view_candidate(msg, cams[cam_id], model, config))
        except SolverDiverged:
            continue
    if not candidates:
        raise NoEligibleCamera("no camera message with >= 4 keypoints")
    init = interpolate_candidates(candidates)
    return solve_multiview(frameset, init, cameras, model, config)


def gate_single_view(
    prev: PoseSE2,
    raw: PoseEstimate,
    camera: CameraModel,
    thresholds: GateThresholds | None = None,
) -> PoseEstimate:
    """Bearing-only outlier gate for single-camera estimates.

    Implausible jumps in heading or camera distance are rejected by keeping
    the prior heading and applying only the translation component orthogonal
    to the camera's viewing direction; the covariance is inflated along the
    viewing direction to reflect the unobserved depth.
    """
    thresholds = thresholds or GateThresholds()
    if raw.n_cameras != 1:
        raise ValueError("gate applies to single-camera estimates only")
    cam_xy = camera.ground_position()
    d_theta = abs(angle_diff(raw.pose.theta, prev.theta))
    dist_raw = float(np.linalg.norm(raw.pose.xy - cam_xy))
    dist_prev = float(np.linalg.norm(prev.xy - cam_xy))
    if d_theta <= thresholds.d_theta and abs(dist_raw - dist_prev) <= thresholds.d_depth:
        return replace(raw, gated=False)
    view = prev.xy - cam_xy
    norm = np.linalg.norm(view)
    view = view / norm if norm > 1e-9 else np.array([1.0, 0.0])
    lateral = np.array([-view[1], view[0]])
    shift = raw.pose.xy - prev.xy
    new_xy = prev.xy + lateral * float(np.dot(shift, lateral))
    cov = raw.covariance.copy()
    c2 = cov[:2, :2]
    cov[:2, :2] = c2 + 3.0 * float(view @ c2 @ view) * np.outer(view, view)
    return replace(
        raw,
        pose=PoseSE2(new_xy[0], new_xy[1], prev.theta),
        covariance=cov,
        gated=True,
    )


def average_estimates(estimates) -> PoseEstimate:
    """Information-weighted mean of estimates taken at a static robot."""
    from .errors import EmptyInput

    if not estimates:
        raise EmptyInput("no estimates to average")
    stamps = [e.stamp for e in estimates]
    if max(stamps) - min(stamps) > 2.0:
        raise ValueError("estimates span more than 2 s")
    info_pos = np.zeros((2, 2))
    weighted_pos = np.zeros(2)
    theta_info = []
    for e in estimates:
        lam = np.linalg.inv(e.covariance[:2, :2])
        info_pos += lam
        weighted_pos += lam @ e.pose.xy
        theta_info.append(1.0 / e.covariance[2, 2])
    cov_pos = np.linalg.inv(info_pos)
    pos = cov_pos @ weighted_pos
    theta = circular_weighted_mean([e.pose.theta for e in estimates], theta_info)
    var_theta = 1.0 / sum(theta_info)
    cov = np.zeros((3, 3))
    cov[:2, :2] = cov_pos
    cov[2, 2] = var_theta
    return PoseEstimate(
        pose=PoseSE2(pos[0], pos[1], theta),
        covariance=cov,
        rms_residual=float(np.mean([e.rms_residual for e in estimates])),
        n_cameras=max(e.n_cameras for e in estimates),
        n_keypoints=max(e.n_keypoints for e in estimates),
        stamp=float(np.mean(stamps)),
        gated=any(e.gated for e in estimates),
    )
