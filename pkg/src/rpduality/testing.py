"""Random generators for property tests and the ``verify`` command."""

from __future__ import annotations

import math

import numpy as np

from . import plq
from .control.instances import _assemble
from .functionals import FunctionalInstance
from .measures import RandomMeasure
from .plq import PLQFunction
from .separable import SeparableIntegrand
from .tree import ScenarioTree


def random_plq(rng: np.random.Generator, max_pieces: int = 4) -> PLQFunction:
    """A random valid PLQ covering every domain shape.

    Domains are drawn among the line, both half-lines, bounded intervals and
    single points; pieces mix affine and quadratic ones.
    """
    kind = rng.choice(["line", "left", "right", "interval", "point"], p=[0.3, 0.15, 0.15, 0.3, 0.1])
    if kind == "point":
        x = float(rng.uniform(-2, 2))
        return PLQFunction(x, x, [], [(0.0, 0.0, float(rng.uniform(-1, 1)))])
    lo = -math.inf if kind in ("line", "left") else float(rng.uniform(-3, 0))
    hi = math.inf if kind in ("line", "right") else float(rng.uniform(0.1, 3))
    k = int(rng.integers(1, max_pieces + 1))
    span_lo = lo if math.isfinite(lo) else -3.0
    span_hi = hi if math.isfinite(hi) else 3.0
    bks = np.sort(rng.uniform(span_lo, span_hi, size=k - 1))
    if k > 1 and np.min(np.diff(np.r_[span_lo, bks, span_hi])) < 1e-3:
        return random_plq(rng, max_pieces)
    a = rng.uniform(0.0, 1.0, size=k) * (rng.random(k) < 0.5)
    slopes = np.sort(rng.uniform(-2, 2, size=k))
    f = _assemble(bks, a, slopes, float(rng.uniform(-1, 1)))
    if math.isfinite(lo) or math.isfinite(hi):
        f = plq.add(f, PLQFunction.indicator(lo, hi))
    return f


def random_tree(rng: np.random.Generator, max_periods: int = 3, max_leaves: int = 8) -> ScenarioTree:
    return ScenarioTree.random(rng, max_periods=max_periods, max_leaves=max_leaves)


def random_box_integrand(rng: np.random.Generator) -> PLQFunction:
    """Random node integrand without one-point domains (used for functionals)."""
    while True:
        f = random_plq(rng)
        if f.domain_lo < f.domain_hi:
            return f


def random_functional_instance(rng: np.random.Generator, d: int | None = None, **tree_kw) -> FunctionalInstance:
    d = int(rng.integers(1, 3)) if d is None else d
    tree = random_tree(rng, **tree_kw)
    h = [SeparableIntegrand([random_box_integrand(rng) for _ in range(d)]) for _ in range(tree.n_nodes)]
    return FunctionalInstance(tree, h)


def _sample_in(f: PLQFunction, rng: np.random.Generator, radius: float, boundary_prob: float) -> float:
    lo, hi = f.domain_lo, f.domain_hi
    ends = [x for x in (lo, hi) if math.isfinite(x) and abs(x) <= radius]
    if ends and rng.random() < boundary_prob:
        return float(rng.choice(ends))
    if rng.random() < 0.3 and f.breakpoints:
        inside = [b for b in f.breakpoints if abs(b) <= radius]
        if inside:
            return float(rng.choice(inside))
    return float(rng.uniform(max(lo, -radius), min(hi, radius)))


def _pick(sub: plq.SubdiffInterval, rng: np.random.Generator, spread: float = 2.0) -> float:
    lo = sub.lo if math.isfinite(sub.lo) else sub.hi - spread
    hi = sub.hi if math.isfinite(sub.hi) else sub.lo + spread
    return float(rng.uniform(lo, hi)) if hi > lo else float(lo)


def zero_gap_pair(inst: FunctionalInstance, rng: np.random.Generator, radius: float | None = None,
                  boundary_prob: float = 0.3) -> tuple[np.ndarray, RandomMeasure]:
    """An adapted ``v`` and a measure satisfying both inclusions at every node.

    ``v`` stays within half the brute-force truncation radius so grid
    oracles see the maximizer.
    """
    from .functionals import truncation_radius

    radius = 0.5 * truncation_radius(inst) if radius is None else radius
    tree, d = inst.tree, inst.d
    v = np.zeros((tree.n_nodes, d))
    den = np.zeros_like(v)
    atom = np.zeros_like(v)
    for n in range(tree.n_nodes):
        for j, f in enumerate(inst.h[n].coords):
            x = _sample_in(f, rng, radius, boundary_prob)
            v[n, j] = x
            den[n, j] = _pick(plq.subdifferential(f, x), rng)
            cone = plq.normal_cone(f.domain_lo, f.domain_hi, x)
            if not (cone.lo == 0.0 and cone.hi == 0.0):
                atom[n, j] = _pick(cone, rng)
    return v, RandomMeasure(den, atom)


def break_inclusion(inst: FunctionalInstance, v: np.ndarray, theta: RandomMeasure,
                    rng: np.random.Generator) -> tuple[np.ndarray, RandomMeasure]:
    """Perturb a zero-gap pair so that one nodewise inclusion fails.

    The perturbation keeps ``EI(v)`` and ``J(theta)`` finite: it moves a
    density out of ``dh(v)`` inside ``dom h*``, or an atom out of the
    normal cone while ``sigma_D`` stays finite.
    """
    tree, d = inst.tree, inst.d
    order = [(n, j) for n in range(tree.n_nodes) for j in range(d)]
    rng.shuffle(order)
    step = float(rng.uniform(0.05, 1.0))
    for n, j in order:
        f = inst.h[n].coords[j]
        fs = inst.h_star[n].coords[j]
        x = v[n, j]
        sub = plq.subdifferential(f, x)
        for direction in rng.permutation([-1.0, 1.0]):
            edge = sub.hi if direction > 0 else sub.lo
            limit = fs.domain_hi if direction > 0 else fs.domain_lo
            if math.isfinite(edge) and direction * (limit - edge) > 0:
                room = abs(limit - edge)
                new = edge + direction * min(step, 0.5 * room)
                den = theta.density.copy()
                den[n, j] = new
                return v, RandomMeasure(den, theta.atoms.copy())
        cone = plq.normal_cone(f.domain_lo, f.domain_hi, x)
        for direction in rng.permutation([-1.0, 1.0]):
            end = f.domain_hi if direction > 0 else f.domain_lo
            if math.isfinite(end) and direction * (end - x) > 0:
                atoms = theta.atoms.copy()
                # an atom pointing into the box leaves the normal cone
                atoms[n, j] = (cone.hi if direction > 0 else cone.lo) + direction * step
                if not cone.contains(atoms[n, j]):
                    return v, RandomMeasure(theta.density.copy(), atoms)
    raise ValueError("no finite inclusion-breaking perturbation exists for this instance")
