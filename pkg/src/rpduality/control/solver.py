"""Primal-dual solver for the discrete singular control problem.

The primal is written as ``min_x H(x) + F(K x)`` with ``x = (u, s)``,
``K`` the control-to-rate map, ``H`` the density/atom costs and ``F`` the
running/terminal costs shifted by the uncontrolled rate.  Every term is a
weighted sum of univariate PLQ functions, so both proximal maps are exact.

Two phases:

1. diagonally preconditioned primal-dual hybrid gradient iterations from
   zero, whose dual variable is ``(P m w*, P eta*)``;
2. periodically, an active-set polish: each optimality inclusion is a point
   on the graph of a PLQ subdifferential, which is a polyline.  Fixing the
   nearest edge of every graph turns the optimality system into a square
   linear system; its closest-point solution is accepted only if every
   inclusion and the duality gap check out.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import ConvergenceWarning

from .. import plq
from ..separable import PLQBatch
from .problem import (
    ControlProblem,
    KKTReport,
    adjoint_dynamics,
    dual_objective,
    forward_dynamics,
    kkt_check,
    primal_objective,
    response_matrix,
    warn_if_degenerate,
    zero_control_trajectory,
)


@dataclass
class PrimalSolution:
    u: np.ndarray
    s: np.ndarray
    z: np.ndarray
    zdot: np.ndarray
    c: np.ndarray
    dc: np.ndarray
    value: float


@dataclass
class DualSolution:
    w_star: np.ndarray
    eta_star: np.ndarray
    p: np.ndarray
    op: np.ndarray
    q: np.ndarray
    value: float


@dataclass
class SolveResult:
    primal: PrimalSolution
    dual: DualSolution
    gap: float
    kkt: KKTReport
    n_iter: int
    converged: bool
    polished: bool
    wall_ms: float
    message: str

    @property
    def relative_gap(self) -> float:
        return abs(self.gap) / (1.0 + abs(self.primal.value))


def make_primal(prob: ControlProblem, u: np.ndarray, s: np.ndarray) -> PrimalSolution:
    traj = forward_dynamics(prob, u, s)
    return PrimalSolution(u, s, traj.z, traj.zdot, traj.c, traj.dc, primal_objective(prob, u, s))


def make_dual(prob: ControlProblem, w_star: np.ndarray, eta_star: np.ndarray) -> DualSolution:
    adj = adjoint_dynamics(prob, w_star, eta_star)
    return DualSolution(w_star, eta_star, adj.p, adj.op, adj.q, dual_objective(prob, w_star, eta_star))


class _Layout:
    """Index bookkeeping shared by the iterations and the polish."""

    def __init__(self, prob: ControlProblem):
        tree = prob.tree
        n, d, L = tree.n_nodes, prob.d, tree.n_leaves
        self.n, self.d, self.L = n, d, L
        self.nx = 2 * n * d
        self.ny = n * d + L * d
        self.K = response_matrix(prob)
        pm = np.repeat(tree.prob * tree.mu, d)
        pn = np.repeat(tree.prob, d)
        pl = np.repeat(tree.leaf_prob, d)
        self.wx = np.concatenate([pm, pn])
        self.wy = np.concatenate([pm, pl])
        self.pn = pn
        _, adot = zero_control_trajectory(prob)
        self.adot = np.concatenate([adot.ravel(), adot[tree.leaves].ravel()])
        flat = lambda fam: [c for f in fam for c in f.coords]  # noqa: E731
        self.H_fs = flat(prob.h_star) + flat(prob.sigma_D)
        self.F_fs = flat(prob.g) + flat(prob.e)
        self.H = PLQBatch(self.H_fs)
        self.F = PLQBatch([plq.shift(f, float(a)) for f, a in zip(self.F_fs, self.adot)])
        absK = np.abs(self.K)
        self.tau = 1.0 / np.maximum(absK.sum(axis=0), 1e-12)
        self.sigma = 1.0 / np.maximum(absK.sum(axis=1), 1e-12)
        # q = -(K^T Y)_s / P with Y = wy * (w, eta)
        self.Q = -(self.K[:, n * d :].T * self.wy[None, :]) / pn[:, None]

    def split_x(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        nd = self.n * self.d
        return x[:nd].reshape(self.n, self.d), x[nd:].reshape(self.n, self.d)

    def split_y(self, dual_vars: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        nd = self.n * self.d
        return dual_vars[:nd].reshape(self.n, self.d), dual_vars[nd:].reshape(self.L, self.d)


def _pdhg_steps(lay: _Layout, x: np.ndarray, Y: np.ndarray, count: int) -> tuple[np.ndarray, np.ndarray]:
    K, tau, sigma = lay.K, lay.tau, lay.sigma
    gx = tau * lay.wx
    gy = lay.wy / sigma
    for _ in range(count):
        x_new = lay.H.prox(x - tau * (K.T @ Y), gx)
        v = Y + sigma * (K @ (2.0 * x_new - x))
        Y = v - sigma * lay.F.prox(v / sigma, gy)
        x = x_new
    return x, Y


class _Polisher:
    """Active-set refinement on the polylines of the subdifferential graphs."""

    def __init__(self, lay: _Layout):
        self.lay = lay
        nd, nx, ny = lay.n * lay.d, lay.nx, lay.ny
        self.nz = nx + ny
        eye_x = np.eye(self.nz)[:nx]
        Qfull = np.hstack([np.zeros((nd, nx)), lay.Q])
        Kfull = np.hstack([lay.K, np.zeros((ny, ny))])
        yfull = np.eye(self.nz)[nx:]
        # each pair: (X row, X const, Y row, Y const, function, X free?, Y free?)
        self.RX = np.vstack([eye_x[:nd], eye_x[nd:], Kfull])
        self.cX = np.concatenate([np.zeros(nx), lay.adot])
        self.RY = np.vstack([Qfull, Qfull, yfull])
        self.cY = np.zeros(nx + ny)
        self.funcs = lay.H_fs + lay.F_fs
        self.x_free = np.r_[np.ones(nx, bool), np.zeros(ny, bool)]
        self.y_free = np.r_[np.zeros(nx, bool), np.ones(ny, bool)]
        self.edges = [plq.graph_edges(f) for f in self.funcs]

    def pairs(self, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.RX @ Z + self.cX, self.RY @ Z + self.cY

    def assign(self, Z: np.ndarray) -> list[plq.GraphEdge]:
        X, Yv = self.pairs(Z)
        return [min(es, key=lambda e: e.distance(x, y)) for es, x, y in zip(self.edges, X, Yv)]

    def clamp_free(self, Z: np.ndarray, edges: list[plq.GraphEdge]) -> np.ndarray:
        # pair i owns unknown i: its X for control pairs, its Y for cost pairs
        Z = Z.copy()
        for i, e in enumerate(edges):
            lo, hi = (e.x_lo, e.x_hi) if self.x_free[i] else (e.y_lo, e.y_hi)
            Z[i] = min(max(Z[i], lo), hi)
        return Z

    def solve(self, Z0: np.ndarray, edges: list[plq.GraphEdge]) -> np.ndarray:
        ax = np.array([e.ax for e in edges])
        ay = np.array([e.ay for e in edges])
        rhs = np.array([e.rhs for e in edges])
        M = ax[:, None] * self.RX + ay[:, None] * self.RY
        r = rhs - ax * self.cX - ay * self.cY
        delta = np.linalg.lstsq(M, r - M @ Z0, rcond=None)[0]
        Z = Z0 + delta
        # pin free variables that sit on axis-parallel edges exactly
        for i, e in enumerate(edges):
            if self.x_free[i] and e.ay == 0.0:
                Z[i] = e.rhs / e.ax
            elif self.y_free[i] and e.ax == 0.0:
                Z[i] = e.rhs / e.ay
        return Z

    def violation(self, Z: np.ndarray, edges: list[plq.GraphEdge]) -> float:
        X, Yv = self.pairs(Z)
        worst = 0.0
        for e, x, y in zip(edges, X, Yv):
            scale = 1.0 + abs(x) + abs(y)
            worst = max(worst, e.violation(x, y) / scale, abs(e.ax * x + e.ay * y - e.rhs) / scale)
        return worst

    def run(self, Z0: np.ndarray, rounds: int = 6, tol: float = 1e-10) -> np.ndarray | None:
        Z = Z0
        for _ in range(rounds):
            edges = self.assign(Z)
            Z = self.solve(self.clamp_free(Z, edges), edges)
            if self.violation(Z, edges) <= tol:
                return Z
        return None


class SingularControlSolver(BaseEstimator):
    """Solve the singular control problem and its dual together.

    Parameters
    ----------
    max_iter : int
        Budget of primal-dual iterations.
    tol_gap : float
        Accepted relative duality gap ``|P + D| / (1 + |P|)``.
    tol_kkt : float
        Accepted worst optimality residual.
    check_every : int
        Iterations between polish attempts.
    polish : bool
        Whether to attempt the active-set polish.
    """

    def __init__(self, max_iter: int = 50_000, tol_gap: float = 1e-5, tol_kkt: float = 1e-5,
                 check_every: int = 100, polish: bool = True):
        self.max_iter = max_iter
        self.tol_gap = tol_gap
        self.tol_kkt = tol_kkt
        self.check_every = check_every
        self.polish = polish

    def _validate_params(self) -> None:
        if int(self.max_iter) < 0 or int(self.check_every) <= 0:
            raise ValueError("max_iter must be nonnegative and check_every positive")
        if not (self.tol_gap > 0 and self.tol_kkt > 0):
            raise ValueError("tolerances must be positive")

    def _evaluate(self, prob: ControlProblem, lay: _Layout, x: np.ndarray, wy: np.ndarray):
        u, s = lay.split_x(x)
        w, eta = lay.split_y(wy)
        primal, dual = make_primal(prob, u, s), make_dual(prob, w, eta)
        kkt = kkt_check(prob, primal, dual)
        gap = primal.value + dual.value if math.isfinite(primal.value) and math.isfinite(dual.value) else math.inf
        return primal, dual, kkt, gap

    def _accept(self, primal, kkt, gap) -> bool:
        return (
            math.isfinite(gap)
            and abs(gap) <= self.tol_gap * (1.0 + abs(primal.value))
            and kkt.worst() <= self.tol_kkt
        )

    def fit(self, problem: ControlProblem, y=None) -> "SingularControlSolver":
        self._validate_params()
        if not isinstance(problem, ControlProblem):
            raise TypeError("fit expects a ControlProblem")
        warn_if_degenerate(problem)
        start = time.perf_counter()
        lay = _Layout(problem)
        polisher = _Polisher(lay) if self.polish else None
        x = np.zeros(lay.nx)
        Y = np.zeros(lay.ny)
        it, polished, best = 0, False, None
        while True:
            wy = Y / lay.wy
            if polisher is not None:
                Z = polisher.run(np.concatenate([x, wy]))
                if Z is not None:
                    cand = self._evaluate(problem, lay, Z[: lay.nx], Z[lay.nx :])
                    if self._accept(cand[0], cand[2], cand[3]):
                        best, polished = cand, True
                        break
            if it >= self.max_iter:
                break
            step = min(int(self.check_every), int(self.max_iter) - it)
            x, Y = _pdhg_steps(lay, x, Y, step)
            it += step
        if best is None:
            best = self._evaluate(problem, lay, x, Y / lay.wy)
        primal, dual, kkt, gap = best
        converged = self._accept(primal, kkt, gap)
        msg = "converged" + (" (polished)" if polished else "")
        if not converged:
            msg = (
                f"not converged after {it} iterations: gap={gap:.3e}, "
                f"worst KKT residual={kkt.worst():.3e}"
            )
            warnings.warn(msg, ConvergenceWarning, stacklevel=2)
        wall = 1000.0 * (time.perf_counter() - start)
        self.result_ = SolveResult(primal, dual, gap, kkt, it, converged, polished, wall, msg)
        self.primal_, self.dual_ = primal, dual
        self.n_iter_ = it
        self.converged_ = converged
        return self


def solve(problem: ControlProblem, **opts) -> SolveResult:
    return SingularControlSolver(**opts).fit(problem).result_


def solve_primal(problem: ControlProblem, **opts) -> PrimalSolution:
    return solve(problem, **opts).primal


def solve_dual(problem: ControlProblem, **opts) -> DualSolution:
    return solve(problem, **opts).dual
