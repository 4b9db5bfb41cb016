"""Expected integral functionals ``EI_h`` and ``EJ_{h*}`` on a scenario tree."""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import plq
from ._validation import check_adapted
from .measures import J_functional, RandomMeasure, pairing
from .plq import PLQFunction
from .separable import SeparableIntegrand, as_integrand
from .tree import ScenarioTree


@dataclass
class FunctionalInstance:
    """Node integrands ``h`` with their conjugates and closed domain boxes."""

    tree: ScenarioTree
    h: list
    h_star: list = field(init=False)
    box_lo: np.ndarray = field(init=False)
    box_hi: np.ndarray = field(init=False)

    def __post_init__(self):
        if isinstance(self.h, (SeparableIntegrand, PLQFunction)):
            self.h = [self.h] * self.tree.n_nodes
        self.h = [as_integrand(x) for x in self.h]
        if len(self.h) != self.tree.n_nodes:
            raise ValueError("need one integrand per node")
        d = self.h[0].d
        for n, hn in enumerate(self.h):
            if hn.d != d:
                raise ValueError("all node integrands must share the dimension")
            if not hn.is_proper:
                raise plq.ImproperFunctionError(f"integrand at node {n} is improper")
        self.h_star = [hn.conjugate() for hn in self.h]
        self.box_lo = np.array([hn.box[0] for hn in self.h])
        self.box_hi = np.array([hn.box[1] for hn in self.h])

    @property
    def d(self) -> int:
        return self.h[0].d


def EI(inst: FunctionalInstance, v: np.ndarray) -> float:
    """``E sum_n h_n(v_n) mu_n``; ``+inf`` as soon as ``v`` leaves a box."""
    tree = inst.tree
    v = check_adapted(tree, v, inst.d)
    total = 0.0
    for n, hn in enumerate(inst.h):
        val = hn(v[n])
        if val == math.inf:
            return math.inf
        total += tree.prob[n] * tree.mu[n] * val
    return float(total)


def EJ(inst: FunctionalInstance, theta: RandomMeasure) -> float:
    return J_functional(inst.tree, inst.h_star, theta)


@dataclass
class GapReport:
    """Fenchel gap split into nodewise inclusion residuals.

    ``fenchel_ac[n]`` is ``sum_j h(v) + h*(density) - v*density`` and
    ``fenchel_sing[n]`` is ``sum_j sigma_D(atom) - v*atom``; both are
    nonnegative and the gap is their weighted sum.  ``dist_ac``/``dist_sing``
    are distances of the density to ``dh(v)`` and of the atom to the normal
    cone of the box at ``v``.
    """

    gap: float
    fenchel_ac: np.ndarray
    fenchel_sing: np.ndarray
    dist_ac: np.ndarray
    dist_sing: np.ndarray

    @property
    def worst_ac(self) -> float:
        return float(self.dist_ac.max())

    @property
    def worst_sing(self) -> float:
        return float(self.dist_sing.max())

    def inclusions_hold(self, tol: float) -> bool:
        return self.worst_ac <= tol and self.worst_sing <= tol


def fenchel_gap(inst: FunctionalInstance, v: np.ndarray, theta: RandomMeasure) -> GapReport:
    """``EI_h(v) + EJ_{h*}(theta) - <v, theta>`` with nodewise residuals."""
    tree = inst.tree
    v = check_adapted(tree, v, inst.d)
    ei, ej = EI(inst, v), EJ(inst, theta)
    if not (math.isfinite(ei) and math.isfinite(ej)):
        raise ValueError("fenchel_gap needs finite EI(v) and EJ(theta)")
    gap = ei + ej - pairing(tree, v, theta)
    n, d = tree.n_nodes, inst.d
    f_ac, f_sg = np.zeros(n), np.zeros(n)
    d_ac, d_sg = np.zeros(n), np.zeros(n)
    for node in range(n):
        for j in range(d):
            h = inst.h[node].coords[j]
            hs = inst.h_star[node].coords[j]
            x, rho, a = v[node, j], theta.density[node, j], theta.atoms[node, j]
            f_ac[node] += h.value(x) + hs.value(rho) - x * rho
            sig = plq.support_function(h.domain_lo, h.domain_hi).value(a)
            f_sg[node] += sig - x * a
            d_ac[node] = max(d_ac[node], plq.subdifferential(h, x).distance(rho))
            d_sg[node] = max(d_sg[node], plq.normal_cone(h.domain_lo, h.domain_hi, x).distance(a))
    return GapReport(float(gap), f_ac, f_sg, d_ac, d_sg)


def truncation_radius(inst: FunctionalInstance) -> float:
    """Radius used to truncate unbounded boxes inside grid oracles."""
    biggest = 0.0
    for hn in inst.h:
        for f in hn.coords:
            for x in f.vertices():
                biggest = max(biggest, abs(x))
    return 10.0 * (1.0 + biggest)


@dataclass
class BruteForceResult:
    value: float
    bound: float
    radius: float
    n_intervals: int


def conjugate_bruteforce(
    inst: FunctionalInstance, theta: RandomMeasure, n_intervals: int = 200
) -> BruteForceResult:
    """Grid maximum of ``<v, theta> - EI_h(v)`` over adapted ``v``.

    Each node coordinate ranges over ``n_intervals + 1`` equispaced points of
    its (truncated) box.  Because the objective is a sum of node terms, the
    maximum over the product grid is the sum of nodewise grid maxima.  The
    returned ``bound`` is a guaranteed upper bound on the gap between the
    grid maximum and the supremum over the truncated boxes: for a concave
    node term ``phi`` with spacing ``delta``, the best grid point is within
    ``delta/2 * max(|phi'|)`` of the maximum, and the derivative extremes sit
    at the box ends.
    """
    tree = inst.tree
    if tree.horizon > 3 or tree.n_leaves > 8:
        raise ValueError("brute-force conjugate is capped at 3 periods and 8 leaves")
    radius = truncation_radius(inst)
    mass = theta.node_mass(tree)
    total, bound = 0.0, 0.0
    for node, hn in enumerate(inst.h):
        w_mu = tree.mu[node]
        for j, h in enumerate(hn.coords):
            lo = max(h.domain_lo, -radius)
            hi = min(h.domain_hi, radius)
            grid = np.linspace(lo, hi, n_intervals + 1)
            t = mass[node, j]
            phi = t * grid - w_mu * h(grid)
            total += tree.prob[node] * float(phi.max())
            if hi > lo:
                delta = (hi - lo) / n_intervals
                lip = max(
                    abs(t - w_mu * _inner_slope(h, lo, True)),
                    abs(t - w_mu * _inner_slope(h, hi, False)),
                )
                bound += tree.prob[node] * 0.5 * delta * lip
    return BruteForceResult(total, bound, radius, n_intervals)


def _inner_slope(h: PLQFunction, x: float, from_right: bool) -> float:
    """Slope at ``x`` of the piece on the interior side of ``x``."""
    k = bisect_right(h.breakpoints, x) if from_right else bisect_left(h.breakpoints, x)
    return h._piece_slope(k, x)


@dataclass
class InterchangeResult:
    residual: float
    value: float
    selection: np.ndarray


def interchange_check(fs: Sequence[PLQFunction], weights: Sequence[float]) -> InterchangeResult:
    """Compare a joint minimization against the sum of pointwise minima.

    The left side minimizes ``u -> sum_i w_i f_i(u_i)`` over all selections by
    scanning each function's per-piece stationary points and vertices, then
    evaluates the assembled selection.  The right side sums ``w_i inf f_i``
    obtained through the conjugates (``inf f = -f*(0)``).
    """
    w = np.asarray(weights, dtype=float)
    if len(w) != len(fs) or np.any(w < 0):
        raise ValueError("need one nonnegative weight per function")
    selection = np.empty(len(fs))
    rhs = 0.0
    for i, f in enumerate(fs):
        inf_f = -plq.conjugate(f).value(0.0)
        if inf_f == -math.inf:
            raise ValueError(f"function {i} is unbounded below")
        rhs += w[i] * inf_f
        selection[i] = _scan_minimizer(f)
    lhs = float(sum(wi * f.value(u) for wi, f, u in zip(w, fs, selection)))
    return InterchangeResult(abs(lhs - rhs), lhs, selection)


def _scan_minimizer(f: PLQFunction) -> float:
    cands = list(f.vertices())
    for k, (a, b, _) in enumerate(f.pieces):
        lo, hi = f.interval(k)
        if a > 0:
            cands.append(min(max(-b / (2 * a), lo), hi))
        elif b == 0.0:
            cands.append(min(max(0.0, lo), hi))
    vals = [f.value(x) for x in cands]
    return cands[int(np.argmin(vals))]


def properness_witness(inst: FunctionalInstance) -> np.ndarray:
    """An adapted process where ``EI_h`` is finite (nodewise minimizers)."""
    v = np.zeros((inst.tree.n_nodes, inst.d))
    for n, hn in enumerate(inst.h):
        for j, f in enumerate(hn.coords):
            val, argmin = plq.minimize(f)
            if argmin.empty:
                lo = f.domain_lo if math.isfinite(f.domain_lo) else min(f.domain_hi, 0.0)
                v[n, j] = lo if math.isfinite(lo) else 0.0
            else:
                v[n, j] = argmin.min_norm()
    return v


def check_regularity_certificate(
    inst: FunctionalInstance, v_bar: np.ndarray, x_bar: np.ndarray, alpha: np.ndarray, tol: float = 1e-9
) -> tuple[bool, np.ndarray]:
    """Nodewise lower-bound certificate for ``h`` and ``h*``.

    ``h(v) >= v.x_bar - alpha`` for all ``v`` is the same as
    ``h*(x_bar) <= alpha``, and ``h*(x) >= v_bar.x - alpha`` for all ``x`` is
    ``h(v_bar) <= alpha``.  Returns the verdict and the per-node excess
    ``max(h*(x_bar), h(v_bar)) - alpha``.
    """
    tree = inst.tree
    v_bar = check_adapted(tree, v_bar, inst.d)
    x_bar = check_adapted(tree, x_bar, inst.d)
    alpha = np.asarray(alpha, dtype=float).reshape(tree.n_nodes)
    excess = np.array([
        max(inst.h_star[n](x_bar[n]), inst.h[n](v_bar[n])) - alpha[n] for n in range(tree.n_nodes)
    ])
    return bool(np.all(excess <= tol)), excess
