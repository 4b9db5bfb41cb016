"""Builders for the two worked examples and random test instances."""

from __future__ import annotations

import math
import warnings

import numpy as np

from .. import plq
from .._validation import check_adapted, check_scalar
from ..plq import PLQFunction
from ..separable import SeparableIntegrand, as_integrand
from ..tree import ScenarioTree
from .problem import ControlProblem, forward_dynamics


def random_walk(tree: ScenarioTree, step: float = 1.0, start: float = 0.0, rng=None) -> np.ndarray:
    """Adapted scalar walk: children of a node fan out symmetrically.

    With ``k`` children the moves are ``step * linspace(1, -1, k)``; if
    ``rng`` is given the moves are i.i.d. standard normal times ``step``.
    """
    W = np.zeros((tree.n_nodes, 1))
    W[0] = start
    for node in range(tree.n_nodes):
        kids = tree.children[node]
        if not kids:
            continue
        if rng is None:
            moves = step * (np.linspace(1.0, -1.0, len(kids)) if len(kids) > 1 else np.zeros(1))
        else:
            moves = step * rng.normal(size=len(kids))
        for ch, mv in zip(kids, moves):
            W[ch] = W[node] + mv
    return W


def default_tree(periods: int = 3, horizon: float = 1.0) -> ScenarioTree:
    """Binary tree with equal branch probabilities and weights ``T / (N+1)``."""
    return ScenarioTree.from_branching([2] * periods, mu=horizon / (periods + 1))


def ls_cost(k: float) -> PLQFunction:
    """Control cost ``c**2`` for ``|c| <= k/2`` and ``k|c| - k**2/4`` beyond."""
    if k == 0.0:
        return PLQFunction.zero()
    return PLQFunction(
        -math.inf, math.inf, [-k / 2, k / 2],
        [(0.0, -k, -k * k / 4), (1.0, 0.0, 0.0), (0.0, k, -k * k / 4)],
    )


def build_ls_instance(r: float, k: float, tree: ScenarioTree | None = None, W=None, A=0.0) -> ControlProblem:
    """One-dimensional quadratic tracking with linear-growth control cost.

    ``g(z) = r z**2 / 2``, ``e = 0``, ``B = 1`` and ``h`` is the conjugate
    of :func:`ls_cost`, i.e. ``y**2/4`` on ``[-k, k]``.  ``k = 0`` leaves
    ``h`` the indicator of ``{0}`` (no control at all) and is flagged.
    """
    r = check_scalar(r, "r", nonnegative=True)
    k = check_scalar(k, "k", nonnegative=True)
    if k == 0.0:
        warnings.warn("k = 0 makes the control set degenerate: only c = 0 is admissible", UserWarning, stacklevel=2)
    tree = default_tree() if tree is None else tree
    W = random_walk(tree, step=3.0) if W is None else W
    h = plq.conjugate(ls_cost(k))
    g = PLQFunction.quadratic(0.5 * r) if r > 0 else PLQFunction.zero()
    return ControlProblem(tree, [[A]], [[1.0]], W, g, PLQFunction.zero(), h, name=f"ls_r{r:g}_k{k:g}")


def capped_quadratic_utility(level: float = 1.0, scale: float = 1.0) -> PLQFunction:
    """``-U`` for ``U(c) = scale*(c - c**2/(2 level))`` up to ``level``, flat beyond."""
    cap = scale * level / 2.0
    return PLQFunction(
        -math.inf, math.inf, [level],
        [(scale / (2.0 * level), -scale, 0.0), (0.0, 0.0, -cap)],
    )


def build_bk_instance(neg_U, neg_U_T, D, tree: ScenarioTree) -> ControlProblem:
    """Monotone consumption with price process ``D``.

    ``neg_U`` (per node or shared) and ``neg_U_T`` (per leaf or shared) are the
    convex negatives of the utilities.  ``h`` is the indicator of
    ``(-inf, D_n]`` so that ``h*(c) = D_n c`` on ``c >= 0``.
    """
    D = check_adapted(tree, D, 1, "D")
    if np.any(D < 0):
        raise ValueError("the price process D must be nonnegative")
    h = [PLQFunction.indicator(-math.inf, float(Dn)) for Dn in D[:, 0]]
    W = np.zeros((tree.n_nodes, 1))
    return ControlProblem(tree, [[0.0]], [[1.0]], W, neg_U, neg_U_T, h, name="bk")


def default_bk_instance(tree: ScenarioTree | None = None) -> ControlProblem:
    """The demo: capped quadratic utilities and a decreasing random price."""
    tree = default_tree() if tree is None else tree
    D = np.zeros((tree.n_nodes, 1))
    D[0] = 0.9
    for node in range(1, tree.n_nodes):
        par = tree.parent[node]
        first = tree.children[par][0] == node
        D[node] = D[par] * (0.9 if first else 0.6)
    return build_bk_instance(capped_quadratic_utility(1.0), capped_quadratic_utility(1.0, 0.5), D, tree)


def bk_conditions_check(prob: ControlProblem, primal, dual) -> dict[str, float]:
    """Residuals of the monotone-consumption optimality conditions.

    ``feasibility``: worst ``op - D``; ``monotonicity``: most negative
    increment; ``complementarity``: ``|E sum (D - op) dc|``;
    ``representation``: worst distance of the pathwise adjoint to the
    interval ``-de(c_T) - sum_{j >= i} m_j dg_j(c_j)`` (marginal utilities).
    """
    tree = prob.tree
    lo, D = prob.box
    D = D[:, 0]
    op = np.asarray(dual.op)[:, 0]
    dc = np.asarray(primal.dc)[:, 0]
    traj = forward_dynamics(prob, primal.u, primal.s)
    x = traj.zdot[:, 0]
    feas = float(max(0.0, np.max(op - D)))
    mono = float(max(0.0, -np.min(dc)))
    compl = abs(float(tree.prob @ ((D - op) * dc)))
    g_lo = np.empty(tree.n_nodes)
    g_hi = np.empty(tree.n_nodes)
    for n in range(tree.n_nodes):
        sub = plq.subdifferential(prob.g[n].coords[0], float(x[n]))
        g_lo[n], g_hi[n] = sub.lo, sub.hi
    rep = 0.0
    N = tree.horizon
    for l, leaf in enumerate(tree.leaves):
        sub_e = plq.subdifferential(prob.e[l].coords[0], float(x[leaf]))
        lo_acc, hi_acc = -sub_e.hi, -sub_e.lo
        for i in range(N, -1, -1):
            node = tree.paths[l, i]
            m = tree.mu[node]
            lo_acc -= m * g_hi[node]
            hi_acc -= m * g_lo[node]
            pv = float(dual.p[l, i, 0])
            rep = max(rep, max(0.0, lo_acc - pv, pv - hi_acc))
    return {"feasibility": feas, "monotonicity": mono, "complementarity": compl, "representation": rep}


# ------------------------------------------------------------ random data
def random_finite_plq(rng: np.random.Generator, n_pieces: int | None = None, curvature: float = 0.05) -> PLQFunction:
    """Random convex PLQ, finite on R, with quadratic outer pieces (coercive)."""
    k = int(rng.integers(1, 4)) if n_pieces is None else n_pieces
    bks = np.sort(rng.uniform(-2.0, 2.0, size=k - 1))
    slopes = np.sort(rng.uniform(-1.5, 1.5, size=k))
    a = rng.uniform(0.0, 1.0, size=k) * (rng.random(k) < 0.5)
    a[0] = max(a[0], curvature)
    a[-1] = max(a[-1], curvature)
    return _assemble(bks, a, slopes, float(rng.uniform(-1, 1)))


def _assemble(bks: np.ndarray, a: np.ndarray, base_slopes: np.ndarray, c0: float) -> PLQFunction:
    """Glue quadratic pieces into a continuous convex PLQ.

    Piece ``j`` has curvature ``a[j]``; its slope at its left end is pushed up
    to at least the previous piece's right-end slope, which keeps the
    derivative nondecreasing.
    """
    pieces = []
    left_val, prev_slope = c0, -math.inf
    for j in range(len(a)):
        x0 = bks[j - 1] if j > 0 else 0.0
        s0 = max(base_slopes[j], prev_slope)
        # a (x - x0)**2 + s0 (x - x0) + v0 in monomial form
        aj = float(a[j])
        b = s0 - 2 * aj * x0
        c = aj * x0 * x0 - s0 * x0 + left_val
        pieces.append((aj, b, c))
        if j < len(bks):
            x1 = bks[j]
            left_val = (aj * x1 + b) * x1 + c
            prev_slope = 2 * aj * x1 + b
    return PLQFunction(-math.inf, math.inf, list(bks), pieces)


def random_box_plq(rng: np.random.Generator) -> PLQFunction:
    """Random convex PLQ on a bounded interval strictly containing 0."""
    lo, hi = -float(rng.uniform(0.3, 2.0)), float(rng.uniform(0.3, 2.0))
    k = int(rng.integers(1, 3))
    bks = np.sort(rng.uniform(lo, hi, size=k - 1))
    slopes = np.sort(rng.uniform(-1.0, 1.0, size=k))
    a = rng.uniform(0.0, 1.0, size=k) * (rng.random(k) < 0.6)
    f = _assemble(bks, a, slopes, float(rng.uniform(-0.5, 0.5)))
    return plq.add(f, PLQFunction.indicator(lo, hi))


def random_instance(rng: np.random.Generator, d: int | None = None, max_periods: int = 3, max_leaves: int = 8) -> ControlProblem:
    """Random coercive instance: finite ``g``/``e``, bounded-box ``h``."""
    d = int(rng.integers(1, 3)) if d is None else d
    tree = ScenarioTree.random(rng, max_periods=max_periods, max_leaves=max_leaves)
    A = 0.3 * rng.normal(size=(d, d))
    B = np.eye(d) + 0.3 * rng.normal(size=(d, d))
    W = rng.normal(size=(tree.n_nodes, d))
    sep = lambda make: SeparableIntegrand([make(rng) for _ in range(d)])  # noqa: E731
    g = [sep(random_finite_plq) for _ in range(tree.n_nodes)]
    e = [sep(random_finite_plq) for _ in range(tree.n_leaves)]
    h = [sep(random_box_plq) for _ in range(tree.n_nodes)]
    return ControlProblem(tree, A, B, W, g, e, h, name="random")


__all__ = [
    "as_integrand",
    "bk_conditions_check",
    "build_bk_instance",
    "build_ls_instance",
    "capped_quadratic_utility",
    "default_bk_instance",
    "default_tree",
    "ls_cost",
    "random_box_plq",
    "random_finite_plq",
    "random_instance",
    "random_walk",
]
