"""Pose graph fusing drifting odometry with absolute camera estimates.

Trajectory nodes are chained by binary odometry constraints; sparse
camera-network estimates attach as unary absolute constraints. The graph
is solved by damped Gauss-Newton on the ground-plane manifold; residual
and normal-equation assembly is vectorized across edges since the graph
is re-optimized every time a new absolute estimate arrives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .errors import GaugeFree, SolverDiverged, UnknownNode
from .estimation import PoseEstimate, SolverConfig
from .geometry import PoseSE2, wrap_angle


@dataclass
class Node:
    id: int
    stamp: float
    pose: PoseSE2


@dataclass
class OdometryEdge:
    from_id: int
    to_id: int
    delta: PoseSE2
    information: np.ndarray


@dataclass
class UnaryEdge:
    node_id: int
    measurement: PoseSE2
    information: np.ndarray


def _information(covariance) -> np.ndarray:
    cov = np.asarray(covariance, dtype=float).reshape(3, 3)
    np.linalg.cholesky(cov)  # positive-definite check
    return np.linalg.inv(cov)


def _wrap(arr):
    return (arr + np.pi) % (2.0 * np.pi) - np.pi


class PoseGraph:
    def __init__(self, initial_pose: PoseSE2 | None = None, initial_stamp: float = 0.0):
        self._anchor_pose = initial_pose or PoseSE2()
        self._anchor_stamp = initial_stamp
        self.nodes: list[Node] = []
        self.odometry_edges: list[OdometryEdge] = []
        self.unary_edges: list[UnaryEdge] = []
        self.stamp_mismatch_warnings = 0

    def add_odometry(self, delta: PoseSE2, covariance, stamp: float | None = None) -> int:
        """Append a node at previous ∘ delta with a binary odometry edge."""
        info = _information(covariance)
        if not self.nodes:
            self.nodes.append(Node(0, self._anchor_stamp, self._anchor_pose))
        prev = self.nodes[-1]
        if stamp is None:
            stamp = prev.stamp + 1.0
        if stamp <= prev.stamp:
            raise ValueError("node stamps must be strictly increasing")
        node = Node(prev.id + 1, stamp, prev.pose.compose(delta))
        self.nodes.append(node)
        self.odometry_edges.append(OdometryEdge(prev.id, node.id, delta, info))
        return node.id

    def add_camera_estimate(self, node_id: int, estimate: PoseEstimate) -> None:
        """Attach an absolute unary constraint to an existing node."""
        if not 0 <= node_id < len(self.nodes) or self.nodes[node_id].id != node_id:
            raise UnknownNode(f"node {node_id} does not exist")
        self.unary_edges.append(
            UnaryEdge(node_id, estimate.pose, _information(estimate.covariance))
        )

    def nearest_node(self, stamp: float, warn_beyond: float = 0.1) -> int:
        """Node id with stamp closest to the given stamp."""
        if not self.nodes:
            raise UnknownNode("graph is empty")
        best = min(self.nodes, key=lambda n: abs(n.stamp - stamp))
        if abs(best.stamp - stamp) > warn_beyond:
            self.stamp_mismatch_warnings += 1
        return best.id

    def trajectory(self):
        return [(n.stamp, n.pose) for n in self.nodes]

    # -- optimization -----------------------------------------------------

    def _edge_arrays(self):
        """Flatten edge data into numpy arrays for vectorized evaluation."""
        oi = np.array([e.from_id for e in self.odometry_edges], dtype=int)
        oj = np.array([e.to_id for e in self.odometry_edges], dtype=int)
        od = np.array([e.delta.as_array() for e in self.odometry_edges])
        o_info = np.array([e.information for e in self.odometry_edges])
        ui = np.array([e.node_id for e in self.unary_edges], dtype=int)
        um = np.array([e.measurement.as_array() for e in self.unary_edges])
        u_info = np.array([e.information for e in self.unary_edges])
        return oi, oj, od, o_info, ui, um, u_info

    @staticmethod
    def _residuals(params, oi, oj, od, ui, um):
        p = params.reshape(-1, 3)
        xi, xj = p[oi], p[oj]
        ct, st = np.cos(xi[:, 2]), np.sin(xi[:, 2])
        d = xj[:, :2] - xi[:, :2]
        # rel = R(-theta_i) d
        rel = np.stack([ct * d[:, 0] + st * d[:, 1], -st * d[:, 0] + ct * d[:, 1]], axis=1)
        ca, sa = np.cos(od[:, 2]), np.sin(od[:, 2])
        diff = rel - od[:, :2]
        et = np.stack(
            [ca * diff[:, 0] + sa * diff[:, 1], -sa * diff[:, 0] + ca * diff[:, 1]],
            axis=1,
        )
        eth = _wrap(xj[:, 2] - xi[:, 2] - od[:, 2])
        r_odo = np.concatenate([et, eth[:, None]], axis=1) if len(oi) else np.zeros((0, 3))

        xu = p[ui] if len(ui) else np.zeros((0, 3))
        cm, sm = np.cos(um[:, 2]), np.sin(um[:, 2])
        du = xu[:, :2] - um[:, :2] if len(ui) else np.zeros((0, 2))
        etu = np.stack([cm * du[:, 0] + sm * du[:, 1], -sm * du[:, 0] + cm * du[:, 1]], axis=1) \
            if len(ui) else np.zeros((0, 2))
        ethu = _wrap(xu[:, 2] - um[:, 2]) if len(ui) else np.zeros(0)
        r_un = np.concatenate([etu, ethu[:, None]], axis=1) if len(ui) else np.zeros((0, 3))
        return r_odo, r_un

    def _objective_from(self, params, arrays) -> float:
        oi, oj, od, o_info, ui, um, u_info = arrays
        r_odo, r_un = self._residuals(params, oi, oj, od, ui, um)
        total = 0.0
        if len(r_odo):
            total += float(np.einsum("ei,eij,ej->", r_odo, o_info, r_odo))
        if len(r_un):
            total += float(np.einsum("ei,eij,ej->", r_un, u_info, r_un))
        return total

    def objective(self) -> float:
        params = np.concatenate([n.pose.as_array() for n in self.nodes])
        return self._objective_from(params, self._edge_arrays())

    def optimize(self, config: SolverConfig | None = None):
        """Minimize the sum of Mahalanobis residuals; returns node poses.

        Node poses are updated in place so that repeated calls warm-start
        from the previous solution.
        """
        config = config or SolverConfig()
        if not self.unary_edges:
            raise GaugeFree("graph has no absolute constraint")
        arrays = self._edge_arrays()
        params = np.concatenate([node.pose.as_array() for node in self.nodes])
        obj = self._objective_from(params, arrays)
        # warm starts leave the problem near-quadratic, so begin with
        # almost-undamped Gauss-Newton and let LM raise damping on demand
        lam = min(config.lm_lambda_init, 1e-8)
        for _ in range(config.max_iterations):
            hess, grad = self._normal_equations(params, arrays)
            if np.linalg.norm(grad) < 1e-12:
                break
            improved = False
            rel = 0.0
            while True:
                diag = hess.diagonal()
                damp = hess + scipy.sparse.diags(lam * np.maximum(diag, 1e-12))
                try:
                    step = scipy.sparse.linalg.spsolve(damp.tocsc(), -grad)
                except RuntimeError:
                    step = None
                if step is not None and np.all(np.isfinite(step)):
                    trial = params + step
                    trial[2::3] = _wrap(trial[2::3])
                    t_obj = self._objective_from(trial, arrays)
                    if t_obj < obj:
                        rel = (obj - t_obj) / max(obj, 1e-300)
                        params, obj = trial, t_obj
                        lam = max(lam / config.lm_lambda_scale, 1e-12)
                        improved = True
                        break
                lam *= config.lm_lambda_scale
                if lam > 1e12:
                    # step shrunk to nothing: stationary within precision
                    if not np.isfinite(obj) or not np.all(np.isfinite(params)):
                        raise SolverDiverged(f"non-finite state at objective {obj:.3g}")
                    break
            if not improved:
                break
            if rel < config.convergence_tol:
                break
        for i, node in enumerate(self.nodes):
            node.pose = PoseSE2(*params[3 * i : 3 * i + 3])
        return [node.pose for node in self.nodes]

    def _normal_equations(self, params, arrays):
        oi, oj, od, o_info, ui, um, u_info = arrays
        n = len(self.nodes)
        p = params.reshape(-1, 3)
        grad = np.zeros(3 * n)
        rows_all, cols_all, vals_all = [], [], []

        r_odo, r_un = self._residuals(params, oi, oj, od, ui, um)

        if len(oi):
            e = len(oi)
            xi, xj = p[oi], p[oj]
            d = xj[:, :2] - xi[:, :2]
            ca, sa = np.cos(od[:, 2]), np.sin(od[:, 2])
            ct, st = np.cos(xi[:, 2]), np.sin(xi[:, 2])
            a = np.zeros((e, 2, 2))
            a[:, 0, 0] = ca
            a[:, 0, 1] = sa
            a[:, 1, 0] = -sa
            a[:, 1, 1] = ca
            b = np.zeros((e, 2, 2))
            b[:, 0, 0] = ct
            b[:, 0, 1] = st
            b[:, 1, 0] = -st
            b[:, 1, 1] = ct
            # derivative of R(-theta_i) w.r.t. theta_i
            db = np.zeros((e, 2, 2))
            db[:, 0, 0] = -st
            db[:, 0, 1] = ct
            db[:, 1, 0] = -ct
            db[:, 1, 1] = -st
            ab = np.einsum("eij,ejk->eik", a, b)
            ji = np.zeros((e, 3, 3))
            jj = np.zeros((e, 3, 3))
            ji[:, :2, :2] = -ab
            ji[:, :2, 2] = np.einsum("eij,ejk,ek->ei", a, db, d)
            ji[:, 2, 2] = -1.0
            jj[:, :2, :2] = ab
            jj[:, 2, 2] = 1.0

            ji_t = ji.transpose(0, 2, 1)
            jj_t = jj.transpose(0, 2, 1)
            w_ji = o_info @ ji
            w_jj = o_info @ jj
            wr = (o_info @ r_odo[:, :, None])
            np.add.at(grad, (3 * oi[:, None] + np.arange(3)).ravel(), (ji_t @ wr)[:, :, 0].ravel())
            np.add.at(grad, (3 * oj[:, None] + np.arange(3)).ravel(), (jj_t @ wr)[:, :, 0].ravel())
            blk_ii = ji_t @ w_ji
            blk_ij = ji_t @ w_jj
            blk_jj = jj_t @ w_jj
            for idx_a, idx_b, block in (
                (oi, oi, blk_ii),
                (oi, oj, blk_ij),
                (oj, oi, blk_ij.transpose(0, 2, 1)),
                (oj, oj, blk_jj),
            ):
                rr = (3 * idx_a[:, None, None] + np.arange(3)[None, :, None])
                cc = (3 * idx_b[:, None, None] + np.arange(3)[None, None, :])
                rows_all.append(np.broadcast_to(rr, block.shape).ravel())
                cols_all.append(np.broadcast_to(cc, block.shape).ravel())
                vals_all.append(block.ravel())

        if len(ui):
            e = len(ui)
            cm, sm = np.cos(um[:, 2]), np.sin(um[:, 2])
            ju = np.zeros((e, 3, 3))
            ju[:, 0, 0] = cm
            ju[:, 0, 1] = sm
            ju[:, 1, 0] = -sm
            ju[:, 1, 1] = cm
            ju[:, 2, 2] = 1.0
            ju_t = ju.transpose(0, 2, 1)
            contrib = (ju_t @ (u_info @ r_un[:, :, None]))[:, :, 0]
            np.add.at(grad, (3 * ui[:, None] + np.arange(3)).ravel(), contrib.ravel())
            block = ju_t @ (u_info @ ju)
            rr = (3 * ui[:, None, None] + np.arange(3)[None, :, None])
            cc = (3 * ui[:, None, None] + np.arange(3)[None, None, :])
            rows_all.append(np.broadcast_to(rr, block.shape).ravel())
            cols_all.append(np.broadcast_to(cc, block.shape).ravel())
            vals_all.append(block.ravel())

        hess = scipy.sparse.coo_matrix(
            (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
            shape=(3 * n, 3 * n),
        ).tocsr()
        return hess, grad


class RobotLocalizationSim:
    """Drifting dead-reckoning belief standing in for the robot's internal
    localization; updated only by odometry integration or feedback resets."""

    def __init__(self, initial_pose: PoseSE2):
        self.internal_pose = initial_pose
        self.feedback_count = 0

    def integrate(self, delta: PoseSE2) -> None:
        self.internal_pose = self.internal_pose.compose(delta)


def apply_feedback(sim: RobotLocalizationSim, fused: PoseEstimate, is_static: bool) -> bool:
    """Reset the internal belief to the fused pose, but only while static."""
    if not is_static:
        return False
    sim.internal_pose = fused.pose
    sim.feedback_count += 1
    return True
