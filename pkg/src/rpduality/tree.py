"""Finite filtered probability spaces as explicit scenario trees.

Conventions
-----------
* Nodes are numbered ``0 .. n_nodes-1`` with the root at 0 and parents before
  children.  Every leaf sits at the final time index ``N``.
* An *adapted* process is an array of shape ``(n_nodes, d)``; a *raw* process
  (path dependent, not necessarily adapted) has shape ``(n_leaves, N+1, d)``.
* Leaves are ordered depth first, so the leaves below any node form a
  contiguous block.  ``paths[l, i]`` is the time-``i`` node on leaf-path ``l``.
* A stopping time is an integer array over leaf-paths holding a time index,
  or :data:`NEVER` for ``tau = +inf``.
"""

from __future__ import annotations

from itertools import product
from typing import Sequence

import numpy as np

from ._validation import check_adapted, check_raw

NEVER = -1

# enumeration cap for the exhaustive stopping-time oracle
MAX_ENUM_PERIODS = 4
MAX_ENUM_LEAVES = 16


class ScenarioTree:
    """Scenario tree with conditional branch probabilities and node mu-weights.

    Parameters
    ----------
    parent : sequence of int
        Parent id per node, ``-1`` for the root (node 0).
    cond_prob : sequence of float
        Probability of moving from the parent to the node (1 for the root).
    mu : sequence of float
        Strictly positive reference-measure weight carried by each node.
    """

    def __init__(self, parent: Sequence[int], cond_prob: Sequence[float], mu: Sequence[float]):
        parent = np.asarray(parent, dtype=int)
        cond_prob = np.asarray(cond_prob, dtype=float)
        mu = np.asarray(mu, dtype=float)
        n = len(parent)
        if n == 0 or cond_prob.shape != (n,) or mu.shape != (n,):
            raise ValueError("parent, cond_prob and mu must have one entry per node")
        if parent[0] != -1 or np.any(parent[1:] < 0):
            raise ValueError("node 0 must be the only root")
        if np.any(parent[1:] >= np.arange(1, n)):
            raise ValueError("parents must be numbered before their children")
        if np.any(mu <= 0) or not np.all(np.isfinite(mu)):
            raise ValueError("mu weights must be strictly positive")
        if np.any(cond_prob[1:] <= 0):
            raise ValueError("branch probabilities must be positive")

        children: list[list[int]] = [[] for _ in range(n)]
        for i in range(1, n):
            children[parent[i]].append(i)
        for i in range(n):
            if children[i] and abs(cond_prob[children[i]].sum() - 1.0) > 1e-12:
                raise ValueError(f"branch probabilities out of node {i} do not sum to 1")

        time = np.zeros(n, dtype=int)
        prob = np.ones(n)
        for i in range(1, n):
            time[i] = time[parent[i]] + 1
            prob[i] = prob[parent[i]] * cond_prob[i]
        leaves_any = [i for i in range(n) if not children[i]]
        horizon = int(time[leaves_any[0]])
        if any(time[i] != horizon for i in leaves_any):
            raise ValueError("all leaves must sit at the final time index")

        self.parent = parent
        self.cond_prob = cond_prob.copy()
        self.cond_prob[0] = 1.0
        self.mu = mu
        self.children = [tuple(c) for c in children]
        self.time = time
        self.prob = prob
        self.horizon = horizon

        # depth-first leaf order and per-node contiguous leaf ranges
        order: list[int] = []
        span = np.zeros((n, 2), dtype=int)

        def visit(node: int) -> None:
            span[node, 0] = len(order)
            if not self.children[node]:
                order.append(node)
            for ch in self.children[node]:
                visit(ch)
            span[node, 1] = len(order)

        visit(0)
        self.leaves = np.array(order, dtype=int)
        self.leaf_span = span
        paths = np.zeros((len(order), horizon + 1), dtype=int)
        for l, leaf in enumerate(order):
            node = leaf
            for i in range(horizon, -1, -1):
                paths[l, i] = node
                node = parent[node]
        self.paths = paths
        self.leaf_prob = prob[self.leaves]
        self.levels = [np.flatnonzero(time == i) for i in range(horizon + 1)]

    # ----------------------------------------------------------- constructors
    @classmethod
    def from_branching(
        cls,
        branching: Sequence[int],
        probs: Sequence[Sequence[float]] | None = None,
        mu: float | Sequence[float] = 1.0,
    ) -> "ScenarioTree":
        """Uniform tree; ``branching[i]`` children per time-``i`` node.

        ``mu`` is either one weight for every node or one weight per time index.
        """
        parent, cond = [-1], [1.0]
        frontier = [0]
        for i, k in enumerate(branching):
            p = np.full(k, 1.0 / k) if probs is None else np.asarray(probs[i], dtype=float)
            nxt = []
            for node in frontier:
                for j in range(k):
                    parent.append(node)
                    cond.append(float(p[j]))
                    nxt.append(len(parent) - 1)
            frontier = nxt
        times = np.zeros(len(parent), dtype=int)
        for i in range(1, len(parent)):
            times[i] = times[parent[i]] + 1
        mu_arr = np.asarray(mu, dtype=float)
        weights = np.full(len(parent), float(mu_arr)) if mu_arr.ndim == 0 else mu_arr[times]
        return cls(parent, cond, weights)

    @classmethod
    def random(
        cls,
        rng: np.random.Generator,
        max_periods: int = 3,
        max_leaves: int = 8,
        max_branch: int = 3,
    ) -> "ScenarioTree":
        """Random tree with irregular branching, probabilities and weights."""
        while True:
            horizon = int(rng.integers(1, max_periods + 1))
            parent, cond = [-1], [1.0]
            frontier = [0]
            for _ in range(horizon):
                nxt = []
                for node in frontier:
                    k = int(rng.integers(1, max_branch + 1))
                    p = rng.dirichlet(np.ones(k)) if k > 1 else np.ones(1)
                    p = np.maximum(p, 0.05)
                    p /= p.sum()
                    for j in range(k):
                        parent.append(node)
                        cond.append(float(p[j]))
                        nxt.append(len(parent) - 1)
                frontier = nxt
            if len(frontier) <= max_leaves:
                break
        mu = rng.uniform(0.1, 1.0, size=len(parent))
        return cls(parent, cond, mu)

    # ------------------------------------------------------------- properties
    @property
    def n_nodes(self) -> int:
        return len(self.parent)

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    def is_leaf(self) -> np.ndarray:
        out = np.zeros(self.n_nodes, dtype=bool)
        out[self.leaves] = True
        return out

    def leaves_below(self, node: int) -> np.ndarray:
        lo, hi = self.leaf_span[node]
        return np.arange(lo, hi)

    def __repr__(self) -> str:
        return f"ScenarioTree(n_nodes={self.n_nodes}, n_leaves={self.n_leaves}, horizon={self.horizon})"

    # --------------------------------------------------------- process tools
    def expand(self, v: np.ndarray) -> np.ndarray:
        """Adapted ``(n_nodes, d)`` process as a raw ``(n_leaves, N+1, d)`` one."""
        v = check_adapted(self, v)
        return v[self.paths]

    def conditional_expectation(self, values: np.ndarray) -> np.ndarray:
        """Per node, the probability-weighted average of child values.

        ``values`` has shape ``(n_nodes, ...)``; leaves get zeros.
        """
        out = np.zeros_like(values, dtype=float)
        weights = self.cond_prob.reshape((-1,) + (1,) * (values.ndim - 1))
        np.add.at(out, self.parent[1:], weights[1:] * values[1:])
        return out


def optional_projection(tree: ScenarioTree, v: np.ndarray) -> np.ndarray:
    """Nodewise conditional expectation of a raw process.

    The value at a time-``i`` node is the probability-weighted average of
    ``v[path, i]`` over the leaf-paths through that node.
    """
    v = check_raw(tree, v)
    out = np.zeros((tree.n_nodes, v.shape[2]))
    w = tree.leaf_prob[:, None]
    for i in range(tree.horizon + 1):
        np.add.at(out, tree.paths[:, i], w * v[:, i])
    return out / tree.prob[:, None]


def is_adapted(tree: ScenarioTree, v: np.ndarray, tol: float = 0.0) -> bool:
    """True when ``v[path, i]`` depends on the path only through its node."""
    v = check_raw(tree, v)
    for i in range(tree.horizon + 1):
        nodes = tree.paths[:, i]
        first = np.zeros((tree.n_nodes, v.shape[2]))
        first[nodes[::-1]] = v[::-1, i]  # value of the first path through each node
        if np.any(np.abs(v[:, i] - first[nodes]) > tol):
            return False
    return True


def to_adapted(tree: ScenarioTree, v: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Collapse an adapted raw process to node form; raises if not adapted."""
    v = check_raw(tree, v)
    if not is_adapted(tree, v, tol):
        raise ValueError("process is not adapted to the tree filtration")
    out = np.zeros((tree.n_nodes, v.shape[2]))
    for i in range(tree.horizon + 1):
        out[tree.paths[:, i]] = v[:, i]
    return out


def _abs_norm(v: np.ndarray) -> np.ndarray:
    # max-abs aggregation keeps r1_norm dual to the l1 total variation
    return np.abs(v).max(axis=-1)


def r1_norm(tree: ScenarioTree, v: np.ndarray) -> float:
    """``sup_tau E|v_tau|`` through the Snell envelope of ``|v|``."""
    v = check_adapted(tree, v)
    absv = _abs_norm(v)
    snell = absv.copy()
    for i in range(tree.horizon - 1, -1, -1):
        cont = tree.conditional_expectation(snell)
        nodes = tree.levels[i]
        snell[nodes] = np.maximum(absv[nodes], cont[nodes])
    return float(snell[0])


def snell_envelope(tree: ScenarioTree, v: np.ndarray) -> np.ndarray:
    """Snell envelope (per node) of the scalar adapted reward ``v >= 0``."""
    v = np.asarray(v, dtype=float).reshape(tree.n_nodes)
    snell = v.copy()
    for i in range(tree.horizon - 1, -1, -1):
        cont = tree.conditional_expectation(snell)
        nodes = tree.levels[i]
        snell[nodes] = np.maximum(v[nodes], cont[nodes])
    return snell


def check_stopping_time(tree: ScenarioTree, tau: np.ndarray) -> np.ndarray:
    """Validate adaptedness: ``{tau <= i}`` must be a union of time-i nodes."""
    tau = np.asarray(tau, dtype=int)
    if tau.shape != (tree.n_leaves,):
        raise ValueError("stopping time needs one entry per leaf-path")
    if np.any((tau != NEVER) & ((tau < 0) | (tau > tree.horizon))):
        raise ValueError("stopping time values must be time indices or NEVER")
    stopped = np.where(tau == NEVER, tree.horizon + 1, tau)
    for i in range(tree.horizon + 1):
        for node in tree.levels[i]:
            block = stopped[tree.leaves_below(node)] <= i
            if block.any() and not block.all():
                raise ValueError(f"stopping time is not adapted at node {node}")
    return tau


def stopped_value(tree: ScenarioTree, v: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """``v_tau`` per leaf-path (zero where ``tau`` is NEVER); ``v`` raw."""
    v = check_raw(tree, v)
    tau = np.asarray(tau, dtype=int)
    out = v[np.arange(tree.n_leaves), np.maximum(tau, 0)]
    out[tau == NEVER] = 0.0
    return out


def verify_projection_identity(tree: ScenarioTree, v: np.ndarray, tau: np.ndarray) -> float:
    """``|E[v_tau] - E[(o v)_tau]|`` for a raw process and a stopping time."""
    v = check_raw(tree, v)
    tau = check_stopping_time(tree, tau)
    ov = tree.expand(optional_projection(tree, v))
    lhs = tree.leaf_prob @ stopped_value(tree, v, tau)
    rhs = tree.leaf_prob @ stopped_value(tree, ov, tau)
    return float(np.abs(lhs - rhs).max())


def enumerate_stopping_times(tree: ScenarioTree) -> np.ndarray:
    """Every stopping time (including ``NEVER``) as rows of a leaf array.

    At each node either everyone below stops now or the decision passes to
    the children independently; a leaf may stop or never stop.  Refused above
    :data:`MAX_ENUM_PERIODS` periods or :data:`MAX_ENUM_LEAVES` leaves.
    """
    if tree.horizon > MAX_ENUM_PERIODS or tree.n_leaves > MAX_ENUM_LEAVES:
        raise ValueError(
            f"enumeration capped at {MAX_ENUM_PERIODS} periods and {MAX_ENUM_LEAVES} leaves"
        )

    def rules(node: int) -> np.ndarray:
        width = tree.leaf_span[node, 1] - tree.leaf_span[node, 0]
        stop_now = np.full((1, width), tree.time[node], dtype=np.int8)
        if not tree.children[node]:
            return np.vstack([stop_now, np.full((1, 1), NEVER, dtype=np.int8)])
        combined = None
        for ch in tree.children[node]:
            sub = rules(ch)
            if combined is None:
                combined = sub
            else:
                n1, n2 = len(combined), len(sub)
                combined = np.hstack([np.repeat(combined, n2, axis=0), np.tile(sub, (n1, 1))])
        return np.vstack([stop_now, combined])

    return rules(0).astype(int)


def count_stopping_times(tree: ScenarioTree) -> int:
    """Closed-form count of stopping times, an independent check on enumeration."""
    counts = np.zeros(tree.n_nodes, dtype=object)
    for node in range(tree.n_nodes - 1, -1, -1):
        if not tree.children[node]:
            counts[node] = 2
        else:
            prod_ = 1
            for ch in tree.children[node]:
                prod_ *= counts[ch]
            counts[node] = 1 + prod_
    return int(counts[0])


def r1_norm_enumerated(tree: ScenarioTree, v: np.ndarray) -> float:
    """``max_tau E|v_tau|`` by brute force over :func:`enumerate_stopping_times`."""
    v = check_adapted(tree, v)
    absv = _abs_norm(tree.expand(v))
    table = np.hstack([absv, np.zeros((tree.n_leaves, 1))])  # last column: NEVER
    taus = enumerate_stopping_times(tree)
    cols = np.where(taus == NEVER, tree.horizon + 1, taus)
    vals = table[np.arange(tree.n_leaves)[None, :], cols] @ tree.leaf_prob
    return float(vals.max())


def adapted_indicator_rules(tree: ScenarioTree) -> int:
    """Count adapted ``{0,1}`` stop/continue rules by brute force over nodes.

    A rule assigns stop (1) or continue (0) to every node; it is admissible when
    no node below a stopping node is reached.  Counting distinct induced
    stopping times gives another cross-check for tiny trees.
    """
    seen = set()
    for bits in product((0, 1), repeat=tree.n_nodes):
        tau = []
        for l in range(tree.n_leaves):
            t = NEVER
            for i, node in enumerate(tree.paths[l]):
                if bits[node]:
                    t = i
                    break
            tau.append(t)
        seen.add(tuple(tau))
    return len(seen)


def project_integrand(tree: ScenarioTree, h_raw) -> list:
    """Optional projection of a path-dependent separable integrand.

    ``h_raw[l][i]`` is the integrand on leaf-path ``l`` at time ``i``.  The
    node integrand is the conditional mixture of the integrands of the paths
    through the node; an empty-domain mixture raises
    :class:`~rpduality.plq.ImproperFunctionError`.
    """
    from .plq import ImproperFunctionError, expectation
    from .separable import SeparableIntegrand, as_integrand

    if len(h_raw) != tree.n_leaves or any(len(row) != tree.horizon + 1 for row in h_raw):
        raise ValueError("need one integrand per (leaf-path, time index)")
    out = []
    for node in range(tree.n_nodes):
        i = tree.time[node]
        leaves = tree.leaves_below(node)
        w = tree.leaf_prob[leaves] / tree.prob[node]
        w = w / w.sum()
        members = [as_integrand(h_raw[l][i]) for l in leaves]
        d = members[0].d
        coords = []
        for j in range(d):
            f = expectation(w, [m.coords[j] for m in members])
            if not f.is_proper:
                raise ImproperFunctionError(f"projected integrand is improper at node {node}")
            coords.append(f)
        out.append(SeparableIntegrand(coords))
    return out
