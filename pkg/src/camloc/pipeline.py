"""End-to-end scenario runner: simulation, synchronization, per-mode
estimation, pose-graph fusion, feedback, and metric export.

Two independent random streams are derived from the scenario seed, one for
detections and one for odometry, so that a recorded detection stream can be
replayed against regenerated odometry with bit-identical results.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InsufficientObservations, InsufficientOverlap, NoEligibleCamera
from .estimation import (
    PoseEstimate,
    average_estimates,
    gate_single_view,
    initialize_global,
    solve_multiview,
)
from .evaluation import (
    Trajectory,
    error_over_distance,
    procrustes_align,
    translation_rmse,
    waypoint_errors,
)
from .geometry import PoseSE2
from .posegraph import PoseGraph, RobotLocalizationSim, apply_feedback
from .scenario import ScenarioConfig, camera_visibility_count
from .simulation import script_trajectory, simulate_frame, simulate_odometry_step
from .sync import Synchronizer, message_to_json

# Pose-graph node creation thresholds.
NODE_TRANS_STEP = 0.05  # m
NODE_ROT_STEP = math.radians(2.0)
# Covariance floor for (near-)static odometry edges.
STATIC_VAR_T = 1e-6  # m^2
STATIC_VAR_R = 1e-8  # rad^2


@dataclass
class RunResult:
    ground_truth: Trajectory
    mode_trajectories: dict
    waypoint_windows: list  # (waypoint_id, t_start, t_end)
    camera_visibility: dict  # waypoint_id -> n_cameras
    counters: dict = field(default_factory=dict)
    messages: list = field(default_factory=list)


def _detection_rng(seed):
    return np.random.default_rng([int(seed), 0])


def _odometry_rng(seed):
    return np.random.default_rng([int(seed), 1])


def simulate_detections(config: ScenarioConfig, samples=None):
    """Generate the detection message stream for a scenario, stamp-ordered."""
    samples = samples or script_trajectory(config.trajectory)
    rng = _detection_rng(config.seed)
    messages = []
    for i, sample in enumerate(samples):
        if i % config.frame_stride:
            continue
        messages.extend(
            simulate_frame(sample, config.cameras, config.robot_model, config.noise, rng)
        )
    messages.sort(key=lambda m: (m.stamp, m.camera_id))
    return samples, messages


def _odometry_covariance(noise, length, turn):
    var_t = (noise.trans_sigma_per_meter**2) * length + STATIC_VAR_T
    sig_r = noise.rot_sigma_per_meter * math.sqrt(length) + noise.rot_sigma_per_rad * math.sqrt(turn)
    var_r = sig_r**2 + STATIC_VAR_R
    return np.diag([var_t, var_t, var_r])


def _waypoint_labels(config: ScenarioConfig):
    labels = []
    for i, w in enumerate(config.raw.get("trajectory", {}).get("waypoints", [])):
        labels.append(int(w.get("waypoint_id", i)))
    if not labels:
        labels = list(range(len(config.trajectory.waypoints)))
    return labels


def run_pipeline(config: ScenarioConfig, messages=None) -> RunResult:
    """Run the full estimation pipeline on a scenario.

    If messages is None they are simulated; otherwise the given recorded
    stream is used and only odometry is regenerated from the seed.
    """
    samples = script_trajectory(config.trajectory)
    if messages is None:
        _, messages = simulate_detections(config, samples)

    rng_odo = _odometry_rng(config.seed)
    odometry = [None]
    for i in range(1, len(samples)):
        true_delta = samples[i - 1].pose.inverse().compose(samples[i].pose)
        odometry.append(simulate_odometry_step(true_delta, config.odometry_noise, rng_odo))

    sync = Synchronizer([c.camera_id for c in config.cameras], config.sync)
    framesets = []
    for msg in messages:
        framesets.extend(sync.ingest(msg))
    framesets.extend(sync.flush())

    # Associate each frame-set with the nearest ground-truth sample.
    stamps = np.array([s.stamp for s in samples])
    fs_by_sample = {}
    for fs in framesets:
        idx = int(np.argmin(np.abs(stamps - fs.anchor_stamp)))
        fs_by_sample.setdefault(idx, []).append(fs)

    labels = _waypoint_labels(config)
    counters = {
        "stale_messages": 0,
        "gated_estimates": 0,
        "solver_iterations": 0,
        "skipped_framesets": 0,
        "feedback_applications": 0,
        "stamp_mismatch_warnings": 0,
    }

    initial_pose = samples[0].pose
    belief = RobotLocalizationSim(initial_pose)
    graph = PoseGraph(initial_pose=initial_pose, initial_stamp=samples[0].stamp)
    camera_by_id = {c.camera_id: c for c in config.cameras}

    need_fused = "fused" in config.modes or config.feedback
    need_estimates = any(
        m in config.modes for m in ("raw", "gated_1frame", "averaged_5frames")
    )
    prior = None  # last accepted estimate pose
    odo_since_prior = PoseSE2()
    pending = PoseSE2()
    pending_len = 0.0
    pending_turn = 0.0
    current_node = None  # node id of the most recent graph node
    static_buffer = []
    static_key = None

    robot_traj = []
    raw_traj = []
    gated_traj = []
    averaged_traj = []

    for i, sample in enumerate(samples):
        if i > 0:
            delta = odometry[i]
            belief.integrate(delta)
            odo_since_prior = odo_since_prior.compose(delta)
            pending = pending.compose(delta)
            pending_len += math.hypot(delta.x, delta.y)
            pending_turn += abs(delta.theta)
            if need_fused and (
                sample.is_static
                or pending_len >= NODE_TRANS_STEP
                or pending_turn >= NODE_ROT_STEP
            ):
                cov = _odometry_covariance(config.odometry_noise, pending_len, pending_turn)
                current_node = graph.add_odometry(pending, cov, stamp=sample.stamp)
                pending = PoseSE2()
                pending_len = 0.0
                pending_turn = 0.0
        elif need_fused:
            # anchor node so the first dwell's estimates have a home
            cov = _odometry_covariance(config.odometry_noise, 0.0, 0.0)
            current_node = graph.add_odometry(PoseSE2(), cov, stamp=sample.stamp + 1e-6)

        robot_traj.append((sample.stamp, belief.internal_pose))

        if not sample.is_static or sample.waypoint_id is None:
            static_key = None
            static_buffer = []

        for fs in fs_by_sample.get(i, []):
            # solve only when some requested output needs this frame-set
            if not need_estimates and not (need_fused and sample.is_static):
                continue
            est = None
            if prior is None:
                try:
                    est = initialize_global(fs, config.cameras, config.robot_model, config.solver)
                except (NoEligibleCamera, InsufficientObservations):
                    counters["skipped_framesets"] += 1
                    continue
            else:
                init = prior.compose(odo_since_prior)
                try:
                    est = solve_multiview(fs, init, config.cameras, config.robot_model, config.solver)
                except InsufficientObservations:
                    counters["skipped_framesets"] += 1
                    continue
            counters["solver_iterations"] += est.n_iterations

            gated = est
            if est.n_cameras == 1 and prior is not None:
                cam_id = next(iter(fs.per_camera))
                gated = gate_single_view(
                    prior.compose(odo_since_prior), est, camera_by_id[cam_id], config.gate
                )
                if gated.gated:
                    counters["gated_estimates"] += 1

            raw_traj.append((fs.anchor_stamp, est.pose))
            gated_traj.append((fs.anchor_stamp, gated.pose))
            prior = gated.pose
            odo_since_prior = PoseSE2()

            if sample.is_static and sample.waypoint_id is not None:
                if static_key != sample.waypoint_id:
                    static_buffer = []
                    static_key = sample.waypoint_id
                static_buffer.append(gated)
                if len(static_buffer) == 5:
                    avg = average_estimates(static_buffer)
                    averaged_traj.append((avg.stamp, avg.pose))
                    static_buffer = []

                if need_fused and current_node is not None:
                    node_id = graph.nearest_node(fs.anchor_stamp)
                    graph.add_camera_estimate(node_id, gated)
                    graph.optimize(config.solver)
                    if config.feedback:
                        fused_here = PoseEstimate(
                            pose=graph.nodes[node_id].pose,
                            covariance=gated.covariance,
                            rms_residual=gated.rms_residual,
                            n_cameras=gated.n_cameras,
                            n_keypoints=gated.n_keypoints,
                            stamp=fs.anchor_stamp,
                        )
                        if apply_feedback(belief, fused_here, sample.is_static):
                            counters["feedback_applications"] += 1

    counters["stale_messages"] = sync.stale_count
    counters["stamp_mismatch_warnings"] = graph.stamp_mismatch_warnings

    mode_trajectories = {}
    gt = Trajectory.from_samples([(s.stamp, s.pose) for s in samples])
    if "robot" in config.modes:
        mode_trajectories["robot"] = Trajectory.from_samples(robot_traj)
    if "raw" in config.modes:
        mode_trajectories["raw"] = Trajectory.from_samples(raw_traj)
    if "gated_1frame" in config.modes:
        mode_trajectories["gated_1frame"] = Trajectory.from_samples(gated_traj)
    if "averaged_5frames" in config.modes:
        mode_trajectories["averaged_5frames"] = Trajectory.from_samples(averaged_traj)
    if "fused" in config.modes:
        if graph.unary_edges:
            graph.optimize(config.solver)
            mode_trajectories["fused"] = Trajectory.from_samples(graph.trajectory())
        else:
            # no absolute constraint ever arrived; fused output would be
            # gauge-free, so omit it and leave a trace in the counters
            counters["fused_gauge_free"] = 1

    windows = []
    visibility = {}
    run_start = None
    for i, sample in enumerate(samples):
        if sample.is_static and sample.waypoint_id is not None:
            if run_start is None:
                run_start = i
            end = i
        else:
            if run_start is not None:
                wp = samples[run_start].waypoint_id
                label = labels[wp] if wp < len(labels) else wp
                windows.append((label, samples[run_start].stamp, samples[end].stamp))
                run_start = None
    if run_start is not None:
        wp = samples[run_start].waypoint_id
        label = labels[wp] if wp < len(labels) else wp
        windows.append((label, samples[run_start].stamp, samples[-1].stamp))
    for wp_idx, waypoint in enumerate(config.trajectory.waypoints):
        label = labels[wp_idx] if wp_idx < len(labels) else wp_idx
        if label not in visibility:
            visibility[label] = camera_visibility_count(
                waypoint.pose, config.cameras, config.robot_model
            )

    return RunResult(
        ground_truth=gt,
        mode_trajectories=mode_trajectories,
        waypoint_windows=windows,
        camera_visibility=visibility,
        counters=counters,
        messages=messages,
    )


# -- metric export --------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_outputs(result: RunResult, config: ScenarioConfig, output_dir, write_stream=True):
    """Write waypoint_stats.csv, trajectory_error.csv, run_meta.json and,
    for simulated runs, the detections JSONL stream."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)

    stats = waypoint_errors(
        result.mode_trajectories,
        result.ground_truth,
        result.waypoint_windows,
        result.camera_visibility,
    )
    lines = ["waypoint_id,n_cameras,mode,trans_mean_m,trans_std_m,rot_mean_rad,rot_std_rad"]
    for s in stats:
        lines.append(
            f"{s.waypoint_id},{s.n_cameras},{s.mode},{_fmt(s.translation_mean)},"
            f"{_fmt(s.translation_std)},{_fmt(s.orientation_mean)},{_fmt(s.orientation_std)}"
        )
    (out / "waypoint_stats.csv").write_text("\n".join(lines) + "\n")

    err_lines = ["stamp_ns,distance_m,error_m,mode"]
    rmse = {}
    for mode in sorted(result.mode_trajectories):
        traj = result.mode_trajectories[mode]
        if len(traj) < 2:
            continue
        try:
            aligned, _ = procrustes_align(traj, result.ground_truth)
            rmse[mode] = translation_rmse(aligned, result.ground_truth)
            series = error_over_distance(aligned, result.ground_truth)
        except InsufficientOverlap:
            continue
        for stamp, dist, err in series:
            err_lines.append(f"{int(round(stamp * 1e9))},{_fmt(dist)},{_fmt(err)},{mode}")
    (out / "trajectory_error.csv").write_text("\n".join(err_lines) + "\n")

    if write_stream and result.messages:
        stream = "\n".join(message_to_json(m) for m in result.messages) + "\n"
        (out / "detections.jsonl").write_text(stream)

    canonical = json.dumps(config.raw, sort_keys=True, separators=(",", ":"))
    meta = {
        "config": config.raw,
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "seed": config.seed,
        "counters": result.counters,
        "rmse_m": rmse,
        "camera_visibility": {str(k): v for k, v in sorted(result.camera_visibility.items())},
    }
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return rmse
