"""Optional random measures on a scenario tree.

A :class:`RandomMeasure` splits into a part absolutely continuous with respect
to the node weights ``mu`` (a *density* per node) and a singular part carried
by explicit *atoms* per node.  Both are adapted arrays of shape
``(n_nodes, d)``.  The net mass the measure puts on node ``n`` is
``density[n] * mu[n] + atoms[n]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_adapted
from .tree import ScenarioTree, is_adapted, to_adapted


@dataclass(frozen=True)
class RandomMeasure:
    density: np.ndarray
    atoms: np.ndarray

    def __post_init__(self):
        density = np.atleast_2d(np.asarray(self.density, dtype=float))
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        if density.shape != atoms.shape:
            raise ValueError("density and atoms must have the same shape")
        object.__setattr__(self, "density", density)
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def zeros(cls, tree: ScenarioTree, d: int = 1) -> "RandomMeasure":
        z = np.zeros((tree.n_nodes, d))
        return cls(z, z.copy())

    @property
    def d(self) -> int:
        return self.density.shape[1]

    def node_mass(self, tree: ScenarioTree) -> np.ndarray:
        return self.density * tree.mu[:, None] + self.atoms

    def __add__(self, other: "RandomMeasure") -> "RandomMeasure":
        return RandomMeasure(self.density + other.density, self.atoms + other.atoms)

    def __mul__(self, alpha: float) -> "RandomMeasure":
        return RandomMeasure(alpha * self.density, alpha * self.atoms)

    __rmul__ = __mul__


def _check_measure(tree: ScenarioTree, theta: RandomMeasure) -> RandomMeasure:
    check_adapted(tree, theta.density, name="density")
    check_adapted(tree, theta.atoms, name="atoms")
    return theta


def pairing(tree: ScenarioTree, v: np.ndarray, theta: RandomMeasure) -> float:
    """``E sum_n v_n . (density_n mu_n + atom_n)``."""
    theta = _check_measure(tree, theta)
    v = check_adapted(tree, v, theta.d)
    return float(tree.prob @ np.sum(v * theta.node_mass(tree), axis=1))


def m_inf_norm(tree: ScenarioTree, theta: RandomMeasure) -> float:
    """Essential supremum over leaf-paths of the path total variation.

    A node carries the point mass ``density*mu + atom``; its variation is the
    l1 norm of that vector.
    """
    theta = _check_measure(tree, theta)
    tv = np.abs(theta.node_mass(tree)).sum(axis=1)
    return float(tv[tree.paths].sum(axis=1).max())


def path_total_variation(tree: ScenarioTree, theta: RandomMeasure) -> np.ndarray:
    tv = np.abs(theta.node_mass(tree)).sum(axis=1)
    return tv[tree.paths].sum(axis=1)


def J_functional(tree: ScenarioTree, h_star, theta: RandomMeasure) -> float:
    """``E sum_n [h*_n(density_n) mu_n + (h*_n)^inf(atom_n)]``.

    ``h_star`` is a sequence of node :class:`~rpduality.separable.SeparableIntegrand`.
    The recession term is evaluated at the atom itself, which equals the
    magnitude-times-direction form by positive homogeneity.  Any infinite
    term makes the whole value ``+inf``.
    """
    theta = _check_measure(tree, theta)
    if len(h_star) != tree.n_nodes:
        raise ValueError("need one integrand per node")
    total = 0.0
    for n, hs in enumerate(h_star):
        if not hs.is_proper:
            raise ValueError(f"integrand at node {n} is improper")
        ac = hs(theta.density[n])
        sing = 0.0
        if np.any(theta.atoms[n] != 0.0):
            sing = sum(
                _recession_value(f, a) for f, a in zip(hs.coords, theta.atoms[n])
            )
        term = ac * tree.mu[n] + sing
        if term == np.inf:
            return np.inf
        total += tree.prob[n] * term
    return float(total)


def _recession_value(f, a: float) -> float:
    """Recession function of a PLQ at ``a`` from its asymptotic slopes."""
    if a == 0.0:
        return 0.0
    if a > 0:
        last = f.pieces[-1]
        if f.domain_hi < np.inf or last[0] > 0.0:
            return np.inf
        return last[1] * a
    first = f.pieces[0]
    if f.domain_lo > -np.inf or first[0] > 0.0:
        return np.inf
    return first[1] * a


def bv_to_measure(tree: ScenarioTree, c_ac: np.ndarray, c_sing: np.ndarray) -> RandomMeasure:
    """Measure ``Dc`` of a cumulative control ``c = c_ac + c_sing``.

    ``c_ac`` is the cumulative absolutely continuous part and ``c_sing`` the
    cumulative jumps.  The value at a node already includes that node's
    increment.  Raw ``(n_leaves, N+1, d)`` inputs are accepted if adapted.
    """
    c_ac = _node_form(tree, c_ac)
    c_sing = _node_form(tree, c_sing)
    return RandomMeasure(_increments(tree, c_ac) / tree.mu[:, None], _increments(tree, c_sing))


def measure_to_path(tree: ScenarioTree, theta: RandomMeasure) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`bv_to_measure`: cumulative ``(c_ac, c_sing)``."""
    theta = _check_measure(tree, theta)
    return _cumulate(tree, theta.density * tree.mu[:, None]), _cumulate(tree, theta.atoms)


def _node_form(tree: ScenarioTree, c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.ndim == 3:
        if not is_adapted(tree, c):
            raise ValueError("control path is not adapted")
        return to_adapted(tree, c)
    return check_adapted(tree, c, name="control path")


def _increments(tree: ScenarioTree, c: np.ndarray) -> np.ndarray:
    out = c.copy()
    out[1:] -= c[tree.parent[1:]]
    return out


def _cumulate(tree: ScenarioTree, inc: np.ndarray) -> np.ndarray:
    out = inc.copy()
    for n in range(1, tree.n_nodes):
        out[n] += out[tree.parent[n]]
    return out


def norm_attaining_process(tree: ScenarioTree, theta: RandomMeasure) -> np.ndarray:
    """Candidate extreme point of the R1 unit ball that attains the dual norm.

    Picks the leaf-path of largest total variation and puts
    ``sign(mass) / P(node)`` on its nodes, zero elsewhere.
    """
    theta = _check_measure(tree, theta)
    leaf = int(np.argmax(path_total_variation(tree, theta)))
    v = np.zeros((tree.n_nodes, theta.d))
    mass = theta.node_mass(tree)
    for node in tree.paths[leaf]:
        v[node] = np.sign(mass[node]) / tree.prob[node]
    return v


def unit_ball_extreme_points(tree: ScenarioTree, d: int = 1):
    """Yield the signed path processes ``s / P(node)`` along each leaf-path.

    Every leaf-path and sign pattern gives one candidate; all of them lie on
    the unit sphere of the R1 norm.
    """
    from itertools import product

    for leaf in range(tree.n_leaves):
        nodes = tree.paths[leaf]
        for signs in product((-1.0, 1.0), repeat=len(nodes) * d):
            v = np.zeros((tree.n_nodes, d))
            s = np.asarray(signs).reshape(len(nodes), d)
            v[nodes] = s / tree.prob[nodes][:, None]
            yield v


def dual_norm_lp(tree: ScenarioTree, theta: RandomMeasure) -> float:
    """``max {<v, theta> : r1_norm(v) <= 1}`` as a linear program (d = 1).

    Variables are ``v`` and ``t >= |v|`` per node; each stopping time gives
    one constraint ``E t_tau <= 1``.  Needs a tree within the enumeration cap.
    """
    from scipy.optimize import linprog

    from .tree import NEVER, enumerate_stopping_times

    if theta.d != 1:
        raise ValueError("the LP cross-check is implemented for d = 1")
    n = tree.n_nodes
    mass = theta.node_mass(tree)[:, 0]
    cost = np.concatenate([-tree.prob * mass, np.zeros(n)])
    taus = enumerate_stopping_times(tree)
    rows = np.zeros((len(taus), 2 * n))
    for r, tau in enumerate(taus):
        for l, t in enumerate(tau):
            if t != NEVER:
                rows[r, n + tree.paths[l, t]] += tree.leaf_prob[l]
    eye = np.eye(n)
    abs_rows = np.vstack([np.hstack([eye, -eye]), np.hstack([-eye, -eye])])
    A = np.vstack([rows, abs_rows])
    b = np.concatenate([np.ones(len(taus)), np.zeros(2 * n)])
    res = linprog(cost, A_ub=A, b_ub=b, bounds=[(None, None)] * (2 * n), method="highs")
    if not res.success:
        raise RuntimeError(res.message)
    return float(-res.fun)
