"""Discrete singular control problem on a scenario tree.

Conventions (fixed everywhere in the package):

* the control increment at node ``n`` is ``dc_n = u_n * m_n + s_n`` where
  ``u`` is the density with respect to the node weight ``m`` and ``s`` the
  singular atom; the cumulative control ``c_n = c_parent + dc_n`` already
  contains the node's own increment;
* the state rate is ``zdot_n = A z_n + B c_n + W_n`` and the state moves to a
  child ``k`` by ``z_k = z_n + m_n * zdot_n`` with ``z_root = 0``;
* the running cost charges ``g_n(zdot_n) * m_n`` at every node and the
  terminal cost charges ``e_l(zdot_l)`` at every leaf.

The dual recursion is the exact transpose of this linear map, so the pairing
identity between the control increments and the dual pair ``(w*, eta*)``
holds to round-off on any tree.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .. import plq
from .._validation import check_adapted, check_leafwise, check_square
from ..plq import PLQFunction
from ..separable import PLQBatch, SeparableIntegrand, as_integrand
from ..tree import ScenarioTree, optional_projection


def _per_node(obj, count: int, what: str) -> list[SeparableIntegrand]:
    if isinstance(obj, (SeparableIntegrand, PLQFunction)):
        return [as_integrand(obj)] * count
    out = [as_integrand(x) for x in obj]
    if len(out) != count:
        raise ValueError(f"need {count} {what} integrands, got {len(out)}")
    return out


@dataclass
class ControlProblem:
    """Data of the discrete singular control problem.

    ``g`` and ``h`` hold one separable integrand per node (or one shared
    integrand), ``e`` one per leaf in depth-first leaf order.
    """

    tree: ScenarioTree
    A: np.ndarray
    B: np.ndarray
    W: np.ndarray
    g: list
    e: list
    h: list
    name: str = "instance"
    h_star: list = field(init=False, repr=False)
    sigma_D: list = field(init=False, repr=False)

    def __post_init__(self):
        tree = self.tree
        self.g = _per_node(self.g, tree.n_nodes, "g")
        self.h = _per_node(self.h, tree.n_nodes, "h")
        self.e = _per_node(self.e, tree.n_leaves, "e")
        d = self.g[0].d
        for fam, label in ((self.g, "g"), (self.h, "h"), (self.e, "e")):
            for i, f in enumerate(fam):
                if f.d != d:
                    raise ValueError(f"{label}[{i}] has dimension {f.d}, expected {d}")
                if not f.is_proper:
                    raise plq.ImproperFunctionError(f"{label}[{i}] is improper")
        self.A = check_square(self.A, d, "A")
        self.B = check_square(self.B, d, "B")
        self.W = check_adapted(tree, self.W, d, "W")
        self.h_star = [hn.conjugate() for hn in self.h]
        # J_{h*}(0) = E sum m h*(0) must be finite, i.e. every h bounded below
        for n, hs in enumerate(self.h_star):
            if not all(math.isfinite(f.value(0.0)) for f in hs.coords):
                raise ValueError(f"h at node {n} is unbounded below, so J_h*(0) is infinite")
        self.sigma_D = [
            SeparableIntegrand([plq.support_function(f.domain_lo, f.domain_hi) for f in hn.coords])
            for hn in self.h
        ]

    @property
    def d(self) -> int:
        return self.g[0].d

    @property
    def box(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([hn.box[0] for hn in self.h])
        hi = np.array([hn.box[1] for hn in self.h])
        return lo, hi


# ----------------------------------------------------------------- dynamics
@dataclass
class Trajectory:
    z: np.ndarray
    zdot: np.ndarray
    c: np.ndarray
    dc: np.ndarray


def control_increments(prob: ControlProblem, u: np.ndarray, s: np.ndarray) -> np.ndarray:
    tree = prob.tree
    u = check_adapted(tree, u, prob.d, "u")
    s = check_adapted(tree, s, prob.d, "s")
    return u * tree.mu[:, None] + s


def _run(prob: ControlProblem, dc: np.ndarray, W: np.ndarray) -> Trajectory:
    tree = prob.tree
    n, d = tree.n_nodes, prob.d
    z, zdot, c = np.zeros((n, d)), np.zeros((n, d)), np.zeros((n, d))
    for node in range(n):
        par = tree.parent[node]
        if par >= 0:
            c[node] = c[par] + dc[node]
            z[node] = z[par] + tree.mu[par] * zdot[par]
        else:
            c[node] = dc[node]
        zdot[node] = prob.A @ z[node] + prob.B @ c[node] + W[node]
    return Trajectory(z, zdot, c, dc)


def forward_dynamics(prob: ControlProblem, u: np.ndarray, s: np.ndarray) -> Trajectory:
    """State ``z``, rate ``zdot`` and cumulative control for ``(u, s)``."""
    return _run(prob, control_increments(prob, u, s), prob.W)


def zero_control_trajectory(prob: ControlProblem) -> tuple[np.ndarray, np.ndarray]:
    """``(a, adot)``: state and rate of the uncontrolled system."""
    traj = _run(prob, np.zeros((prob.tree.n_nodes, prob.d)), prob.W)
    return traj.z, traj.zdot


def linear_response(prob: ControlProblem, u: np.ndarray, s: np.ndarray) -> np.ndarray:
    """The control-driven part of ``zdot`` (the disturbance switched off)."""
    dc = control_increments(prob, u, s)
    return _run(prob, dc, np.zeros_like(dc)).zdot


# ------------------------------------------------------------------ adjoint
@dataclass
class AdjointState:
    """Backward adjoint.

    ``p`` is pathwise with shape ``(n_leaves, N+1, d)`` and ``p_terminal`` is
    ``-eta*`` per leaf.  ``op`` is the nodewise conditional expectation of
    ``p`` and ``q = B^T op``.
    """

    p: np.ndarray
    p_terminal: np.ndarray
    op: np.ndarray
    q: np.ndarray


def adjoint_dynamics(prob: ControlProblem, w_star: np.ndarray, eta_star: np.ndarray) -> AdjointState:
    """Transpose of the forward one-step scheme.

    Pathwise, ``p_N = -eta* - m_N w*_N`` and
    ``p_i = (I + m_i A^T) p_{i+1} - m_i w*_i``.
    """
    tree = prob.tree
    d = prob.d
    w_star = check_adapted(tree, w_star, d, "w*")
    eta_star = check_leafwise(tree, eta_star, d, "eta*")
    N = tree.horizon
    p = np.zeros((tree.n_leaves, N + 1, d))
    m_path = tree.mu[tree.paths]
    w_path = w_star[tree.paths]
    p[:, N] = -eta_star - m_path[:, N, None] * w_path[:, N]
    for i in range(N - 1, -1, -1):
        p[:, i] = p[:, i + 1] + m_path[:, i, None] * (p[:, i + 1] @ prob.A) - m_path[:, i, None] * w_path[:, i]
    op = optional_projection(tree, p)
    return AdjointState(p, -eta_star, op, op @ prob.B)


def projected_adjoint(prob: ControlProblem, w_star: np.ndarray, eta_star: np.ndarray) -> np.ndarray:
    """``op`` directly on the tree, without forming pathwise ``p``.

    With ``S_n = P(n) op_n``:
    ``S_n = (I + m_n A^T) sum_children S_k - P(n) (m_n w*_n + [leaf] eta*_n)``.
    """
    tree = prob.tree
    w_star = check_adapted(tree, w_star, prob.d, "w*")
    eta_star = check_leafwise(tree, eta_star, prob.d, "eta*")
    y = tree.prob[:, None] * tree.mu[:, None] * w_star
    y[tree.leaves] += tree.leaf_prob[:, None] * eta_star
    S = np.zeros_like(y)
    for node in range(tree.n_nodes - 1, -1, -1):
        acc = np.zeros(prob.d)
        for ch in tree.children[node]:
            acc += S[ch]
        S[node] = acc + tree.mu[node] * (prob.A.T @ acc) - y[node]
    return S / tree.prob[:, None]


def pairing_identity_check(
    prob: ControlProblem, u: np.ndarray, s: np.ndarray, w_star: np.ndarray, eta_star: np.ndarray
) -> float:
    """``|<controlled zdot, (w*, eta*)> + E sum_n (B^T op_n) . dc_n|``."""
    tree = prob.tree
    zl = linear_response(prob, u, s)
    w_star = check_adapted(tree, w_star, prob.d, "w*")
    eta_star = check_leafwise(tree, eta_star, prob.d, "eta*")
    lhs = float(tree.prob @ (tree.mu * np.sum(w_star * zl, axis=1)))
    lhs += float(tree.leaf_prob @ np.sum(eta_star * zl[tree.leaves], axis=1))
    q = adjoint_dynamics(prob, w_star, eta_star).q
    rhs = -float(tree.prob @ np.sum(q * control_increments(prob, u, s), axis=1))
    return abs(lhs - rhs)


# --------------------------------------------------------------- objectives
def _sum_weighted(weights: np.ndarray, fam: list, points: np.ndarray) -> float:
    total = 0.0
    for w, f, x in zip(weights, fam, points):
        val = f(x)
        if val == math.inf:
            return math.inf
        total += w * val
    return float(total)


def primal_objective(prob: ControlProblem, u: np.ndarray, s: np.ndarray) -> float:
    """Expected running, terminal, density and atom costs of ``(u, s)``."""
    tree = prob.tree
    traj = forward_dynamics(prob, u, s)
    pm = tree.prob * tree.mu
    parts = (
        _sum_weighted(pm, prob.g, traj.zdot),
        _sum_weighted(tree.leaf_prob, prob.e, traj.zdot[tree.leaves]),
        _sum_weighted(pm, prob.h_star, np.asarray(u, dtype=float).reshape(tree.n_nodes, -1)),
        _sum_weighted(tree.prob, prob.sigma_D, np.asarray(s, dtype=float).reshape(tree.n_nodes, -1)),
    )
    return math.inf if math.inf in parts else float(sum(parts))


def snap_to_box(prob: ControlProblem, q: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Move points within round-off of a box face onto the face."""
    lo, hi = prob.box
    slack_lo = rtol * (1.0 + np.abs(np.where(np.isfinite(lo), lo, 0.0)))
    slack_hi = rtol * (1.0 + np.abs(np.where(np.isfinite(hi), hi, 0.0)))
    out = np.where((q < lo) & (q >= lo - slack_lo), lo, q)
    return np.where((out > hi) & (out <= hi + slack_hi), hi, out)


def dual_objective(prob: ControlProblem, w_star: np.ndarray, eta_star: np.ndarray) -> float:
    """``E[sum g~*(w*) m + e~*(eta*) + sum h(B^T op) m]`` (``+inf`` off the box).

    ``g~`` and ``e~`` are the costs shifted by the uncontrolled rate, so by
    the shift law ``g~*(w) = g*(w) - adot . w``.
    """
    tree = prob.tree
    w_star = check_adapted(tree, w_star, prob.d, "w*")
    eta_star = check_leafwise(tree, eta_star, prob.d, "eta*")
    _, adot = zero_control_trajectory(prob)
    q = snap_to_box(prob, adjoint_dynamics(prob, w_star, eta_star).q)
    pm = tree.prob * tree.mu
    g_star = [f.conjugate() for f in prob.g]
    e_star = [f.conjugate() for f in prob.e]
    parts = (
        _sum_weighted(pm, g_star, w_star),
        _sum_weighted(tree.leaf_prob, e_star, eta_star),
        _sum_weighted(pm, prob.h, q),
    )
    if math.inf in parts:
        return math.inf
    shift = float(pm @ np.sum(adot * w_star, axis=1))
    shift += float(tree.leaf_prob @ np.sum(adot[tree.leaves] * eta_star, axis=1))
    return float(sum(parts)) - shift


# -------------------------------------------------------------- Hamiltonian
@dataclass
class HamiltonianEval:
    value: float
    argmin_density: np.ndarray
    argmin_directions: list
    feasible: bool


def hamiltonian_argmin(prob: ControlProblem, node: int, q: np.ndarray) -> tuple[np.ndarray, bool]:
    """Minimum-norm minimizer of ``c -> h*(c) - q.c`` at ``node``.

    ``c`` minimizes iff ``q`` is a subgradient of ``h*`` at ``c``, i.e.
    ``c`` lies in the subdifferential of ``h`` at ``q``.  When ``q`` leaves
    the closed domain of ``h`` the objective is unbounded below and the
    result is flagged infeasible.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    c = np.full(prob.d, np.nan)
    for j, f in enumerate(prob.h[node].coords):
        sub = plq.subdifferential(f, float(q[j]))
        if sub.empty:
            return c, False
        c[j] = sub.min_norm()
    return c, True


def recession_argmin(prob: ControlProblem, node: int, q: np.ndarray) -> list[tuple[float, ...]]:
    """Per coordinate, the unit directions minimizing ``sigma_D(c) - q.c``."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    out = []
    for j, sig in enumerate(prob.sigma_D[node].coords):
        vals = {sgn: sig.value(sgn) - sgn * q[j] for sgn in (-1.0, 1.0)}
        best = min(vals.values())
        out.append(tuple(sgn for sgn, v in vals.items() if v <= best + 1e-12 * (1 + abs(best))))
    return out


def hamiltonian(prob: ControlProblem, node: int, z, c, p) -> HamiltonianEval:
    """``g(z) + h*(c) - p.(A z + B c + W)`` at ``node`` plus its minimizers in ``c``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    value = prob.g[node](z) + prob.h_star[node](c) - p @ (prob.A @ z + prob.B @ c + prob.W[node])
    q = prob.B.T @ p
    cstar, feasible = hamiltonian_argmin(prob, node, q)
    return HamiltonianEval(float(value), cstar, recession_argmin(prob, node, q), feasible)


# --------------------------------------------------------------------- KKT
@dataclass
class KKTReport:
    """Fenchel residuals of the four optimality inclusions.

    Each array holds nonnegative per-node (or per-leaf) residuals:
    ``density`` is ``h(q) + h*(u) - u.q``, ``atom`` is ``sigma_D(s) - s.q``,
    ``running`` is ``g(zdot) + g*(w*) - zdot.w*`` and ``terminal`` is
    ``e(zdot) + e*(eta*) - zdot.eta*``.  ``box`` is how far ``q`` sits
    outside the domain of ``h``.
    """

    density: np.ndarray
    atom: np.ndarray
    running: np.ndarray
    terminal: np.ndarray
    box: float

    def maxima(self) -> tuple[float, float, float, float]:
        return tuple(float(np.max(x)) if x.size else 0.0 for x in (self.density, self.atom, self.running, self.terminal))

    def worst(self) -> float:
        return max(max(self.maxima()), self.box)

    def weighted_sum(self, tree: ScenarioTree) -> float:
        """The duality gap implied by the residuals."""
        pm = tree.prob * tree.mu
        return float(pm @ self.density + tree.prob @ self.atom + pm @ self.running + tree.leaf_prob @ self.terminal)


def _fenchel(fam: list, conj: list, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-row ``f(x) + f*(y) - x.y`` summed over coordinates."""
    out = np.zeros(len(fam))
    for i, (f, fc) in enumerate(zip(fam, conj)):
        for j, (fj, fcj) in enumerate(zip(f.coords, fc.coords)):
            a, b = float(x[i, j]), float(y[i, j])
            fa, fb = fj.value(a), fcj.value(b)
            out[i] += math.inf if math.inf in (fa, fb) else max(0.0, fa + fb - a * b)
    return out


def kkt_check(prob: ControlProblem, primal, dual) -> KKTReport:
    """Residuals of the optimality system for a primal/dual pair."""
    tree = prob.tree
    u = check_adapted(tree, primal.u, prob.d, "u")
    s = check_adapted(tree, primal.s, prob.d, "s")
    traj = forward_dynamics(prob, u, s)
    adj = adjoint_dynamics(prob, dual.w_star, dual.eta_star)
    lo, hi = prob.box
    box = float(max(0.0, np.max(lo - adj.q), np.max(adj.q - hi)))
    q = snap_to_box(prob, adj.q)
    # sigma_D(s) - s.q equals the Fenchel residual of sigma_D paired with the
    # indicator of D, which vanishes at q once q is in the box
    indicators = [
        SeparableIntegrand([PLQFunction.indicator(f.domain_lo, f.domain_hi) for f in hn.coords]) for hn in prob.h
    ]
    density = _fenchel(prob.h_star, prob.h, u, q)
    atom = _fenchel(prob.sigma_D, indicators, s, q)
    running = _fenchel(prob.g, [f.conjugate() for f in prob.g], traj.zdot, np.asarray(dual.w_star, float).reshape(tree.n_nodes, -1))
    terminal = _fenchel(prob.e, [f.conjugate() for f in prob.e], traj.zdot[tree.leaves], np.asarray(dual.eta_star, float).reshape(tree.n_leaves, -1))
    return KKTReport(density, atom, running, terminal, box)


# ------------------------------------------------------------ linear map K
def response_matrix(prob: ControlProblem) -> np.ndarray:
    """Dense matrix of ``(u, s) -> (zdot at all nodes, zdot at the leaves)``.

    Columns are ordered ``u`` then ``s``, node-major; rows are node-major
    rates followed by leaf-major rates.
    """
    tree = prob.tree
    n, d = tree.n_nodes, prob.d
    cols = []
    for kind in (0, 1):
        for node in range(n):
            for j in range(d):
                u = np.zeros((n, d))
                s = np.zeros((n, d))
                (u if kind == 0 else s)[node, j] = 1.0
                zl = linear_response(prob, u, s)
                cols.append(np.concatenate([zl.ravel(), zl[tree.leaves].ravel()]))
    return np.array(cols).T


def batches(prob: ControlProblem) -> dict[str, PLQBatch]:
    """Flattened node-major PLQ families used by the solver."""
    tree = prob.tree
    _, adot = zero_control_trajectory(prob)
    g_shift = [f.shift(adot[n]) for n, f in enumerate(prob.g)]
    e_shift = [f.shift(adot[l]) for f, l in zip(prob.e, tree.leaves)]
    flat = lambda fam: [c for f in fam for c in f.coords]  # noqa: E731
    return {
        "h_star": PLQBatch(flat(prob.h_star)),
        "sigma": PLQBatch(flat(prob.sigma_D)),
        "g": PLQBatch(flat(g_shift)),
        "e": PLQBatch(flat(e_shift)),
    }


def warn_if_degenerate(prob: ControlProblem) -> None:
    for n, hn in enumerate(prob.h):
        for f in hn.coords:
            if f.domain_lo == f.domain_hi:
                warnings.warn(
                    f"h at node {n} has a one-point domain; control is priced out entirely",
                    UserWarning,
                    stacklevel=3,
                )
                return
