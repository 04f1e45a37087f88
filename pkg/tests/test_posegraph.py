import math

import numpy as np
import pytest

from camloc.errors import GaugeFree, UnknownNode
from camloc.estimation import PoseEstimate
from camloc.geometry import PoseSE2, angle_diff
from camloc.posegraph import PoseGraph, RobotLocalizationSim, apply_feedback

from oracles import two_node_unary_optimum

SMALL_COV = np.diag([1e-4, 1e-4, 1e-4])


def unary(pose, sigma=0.01, stamp=0.0):
    return PoseEstimate(pose=pose, covariance=np.diag([sigma**2] * 3),
                        rms_residual=1.0, n_cameras=2, n_keypoints=8, stamp=stamp)


class TestGraphConstruction:
    def test_anchor_node_created_lazily(self):
        g = PoseGraph(PoseSE2(1.0, 2.0, 0.5), initial_stamp=10.0)
        assert g.nodes == []
        nid = g.add_odometry(PoseSE2(0.1, 0, 0), SMALL_COV, stamp=10.1)
        assert nid == 1
        assert g.nodes[0].pose == PoseSE2(1.0, 2.0, 0.5)
        assert g.nodes[0].stamp == 10.0

    def test_hundred_deltas(self):
        g = PoseGraph()
        for i in range(100):
            g.add_odometry(PoseSE2(0.05, 0, 0), SMALL_COV, stamp=0.1 * (i + 1))
        assert len(g.nodes) == 101
        assert len(g.odometry_edges) == 100
        assert g.nodes[-1].pose.x == pytest.approx(5.0)

    def test_unknown_node_rejected(self):
        g = PoseGraph()
        g.add_odometry(PoseSE2(0.1, 0, 0), SMALL_COV, stamp=1.0)
        with pytest.raises(UnknownNode):
            g.add_camera_estimate(7, unary(PoseSE2()))

    def test_non_increasing_stamp_rejected(self):
        g = PoseGraph()
        g.add_odometry(PoseSE2(0.1, 0, 0), SMALL_COV, stamp=1.0)
        with pytest.raises(ValueError):
            g.add_odometry(PoseSE2(0.1, 0, 0), SMALL_COV, stamp=1.0)

    def test_nearest_node_and_mismatch_warning(self):
        g = PoseGraph()
        for i in range(5):
            g.add_odometry(PoseSE2(0.1, 0, 0), SMALL_COV, stamp=1.0 * (i + 1))
        assert g.nearest_node(3.04) == 3
        assert g.stamp_mismatch_warnings == 0
        g.nearest_node(9.0)
        assert g.stamp_mismatch_warnings == 1


class TestOptimize:
    def test_gauge_free_without_unary(self):
        g = PoseGraph()
        g.add_odometry(PoseSE2(0.1, 0, 0), SMALL_COV, stamp=1.0)
        with pytest.raises(GaugeFree):
            g.optimize()

    def test_perfect_chain_unchanged(self):
        truth = [PoseSE2(0.5 * i, 0.1 * i, 0.05 * i) for i in range(8)]
        g = PoseGraph(truth[0])
        for a, b in zip(truth, truth[1:]):
            g.add_odometry(a.inverse().compose(b), SMALL_COV,
                           stamp=truth.index(b) * 1.0)
        g.add_camera_estimate(0, unary(truth[0]))
        g.add_camera_estimate(7, unary(truth[7]))
        g.optimize()
        for node, t in zip(g.nodes, truth):
            assert math.hypot(node.pose.x - t.x, node.pose.y - t.y) < 1e-8
            assert abs(angle_diff(node.pose.theta, t.theta)) < 1e-8
        assert g.objective() < 1e-10

    def test_matches_closed_form_two_node_optimum(self):
        # one odometry edge along x plus unaries on both nodes; y/theta stay
        # zero, so the x components must match the scalar weighted optimum
        info_odo, info_a, info_b = 1.0, 1.0, 1.0
        delta, a_meas, b_meas = 1.0, 0.0, 2.0
        g = PoseGraph(PoseSE2(0.0, 0.0, 0.0))
        g.add_odometry(PoseSE2(delta, 0, 0), np.diag([1.0, 1e-9, 1e-9]), stamp=1.0)
        g.add_camera_estimate(0, unary(PoseSE2(a_meas, 0, 0), sigma=1.0))
        g.add_camera_estimate(1, unary(PoseSE2(b_meas, 0, 0), sigma=1.0))
        g.optimize()
        xa, xb = two_node_unary_optimum(delta, info_odo, a_meas, b_meas, info_a, info_b)
        assert g.nodes[0].pose.x == pytest.approx(xa, abs=1e-6)
        assert g.nodes[1].pose.x == pytest.approx(xb, abs=1e-6)
        assert abs(g.nodes[0].pose.y) < 1e-6 and abs(g.nodes[1].pose.theta) < 1e-6

    def test_information_scaling_leaves_argmin_unchanged(self):
        rng = np.random.default_rng(4)

        def build(scale):
            g = PoseGraph()
            pose = PoseSE2()
            rng2 = np.random.default_rng(4)
            for i in range(10):
                d = PoseSE2(0.3 + rng2.normal(0, 0.02), rng2.normal(0, 0.02),
                            rng2.normal(0, 0.02))
                g.add_odometry(d, np.diag([1e-3] * 3) / scale, stamp=i + 1.0)
            g.add_camera_estimate(0, unary(PoseSE2(0, 0, 0), sigma=0.05 / math.sqrt(scale)))
            g.add_camera_estimate(10, unary(PoseSE2(3.0, 0, 0), sigma=0.05 / math.sqrt(scale)))
            g.optimize()
            return np.array([n.pose.as_array() for n in g.nodes])

        a, b = build(1.0), build(7.0)
        assert np.abs(a - b).max() < 1e-6

    def test_objective_non_increasing(self):
        rng = np.random.default_rng(8)
        g = PoseGraph()
        for i in range(30):
            d = PoseSE2(0.3 + rng.normal(0, 0.05), rng.normal(0, 0.05),
                        rng.normal(0, 0.05))
            g.add_odometry(d, np.diag([2.5e-3, 2.5e-3, 2.5e-3]), stamp=i + 1.0)
        for nid in (0, 10, 20, 30):
            g.add_camera_estimate(nid, unary(PoseSE2(0.3 * nid, 0, 0), sigma=0.02))
        before = g.objective()
        g.optimize()
        assert g.objective() <= before + 1e-12

    def test_fusion_beats_raw_odometry(self):
        # drifting chain with periodic absolute fixes: optimized trajectory
        # must have lower RMSE than dead reckoning, on average over seeds
        odo_rmse, fused_rmse = [], []
        for seed in range(50):
            rng = np.random.default_rng(seed)
            truth, pose = [PoseSE2()], PoseSE2()
            g = PoseGraph()
            odo_pose, odo_traj = PoseSE2(), [PoseSE2()]
            for i in range(60):
                d = PoseSE2(0.1, 0, 0)
                truth.append(truth[-1].compose(d))
                noisy = PoseSE2(d.x + rng.normal(0, 0.01), rng.normal(0, 0.01),
                                rng.normal(0, 0.005))
                odo_pose = odo_pose.compose(noisy)
                odo_traj.append(odo_pose)
                nid = g.add_odometry(noisy, np.diag([1e-4, 1e-4, 2.5e-5]),
                                     stamp=i + 1.0)
                if nid % 10 == 0:
                    t = truth[-1]
                    g.add_camera_estimate(nid, unary(
                        PoseSE2(t.x + rng.normal(0, 0.01), t.y + rng.normal(0, 0.01),
                                t.theta + rng.normal(0, 0.005)), sigma=0.01))
            g.optimize()
            fused = [n.pose for n in g.nodes]
            odo_rmse.append(math.sqrt(np.mean(
                [(a.x - b.x) ** 2 + (a.y - b.y) ** 2 for a, b in zip(odo_traj, truth)])))
            fused_rmse.append(math.sqrt(np.mean(
                [(a.x - b.x) ** 2 + (a.y - b.y) ** 2 for a, b in zip(fused, truth)])))
        assert np.mean(fused_rmse) < np.mean(odo_rmse)


class TestFeedback:
    def test_feedback_only_while_static(self):
        sim = RobotLocalizationSim(PoseSE2())
        sim.integrate(PoseSE2(1.0, 0, 0))
        fused = unary(PoseSE2(0.9, 0.05, 0.01))
        assert not apply_feedback(sim, fused, is_static=False)
        assert sim.internal_pose.x == pytest.approx(1.0)
        assert apply_feedback(sim, fused, is_static=True)
        assert sim.internal_pose == fused.pose
        assert sim.feedback_count == 1
