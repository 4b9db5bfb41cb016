"""Separable integrands on R^d and vectorized PLQ kernels."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import plq
from .plq import PLQFunction, SubdiffInterval


class SeparableIntegrand:
    """``x -> sum_j f_j(x_j)`` with one :class:`PLQFunction` per coordinate.

    The closed domain is the box ``prod_j [f_j.domain_lo, f_j.domain_hi]``.
    """

    __slots__ = ("coords",)

    def __init__(self, coords: Sequence[PLQFunction] | PLQFunction):
        if isinstance(coords, PLQFunction):
            coords = (coords,)
        self.coords = tuple(coords)
        if not self.coords:
            raise ValueError("need at least one coordinate")

    @property
    def d(self) -> int:
        return len(self.coords)

    @property
    def is_proper(self) -> bool:
        return all(f.is_proper for f in self.coords)

    @property
    def box(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.array([f.domain_lo for f in self.coords]),
            np.array([f.domain_hi for f in self.coords]),
        )

    def __call__(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.d,):
            raise ValueError(f"expected a vector of length {self.d}")
        total = 0.0
        for f, xi in zip(self.coords, x):
            total += f.value(float(xi))
        return total

    def __repr__(self) -> str:
        return f"SeparableIntegrand({list(self.coords)!r})"

    def _map(self, fn) -> "SeparableIntegrand":
        return SeparableIntegrand([fn(f) for f in self.coords])

    def conjugate(self) -> "SeparableIntegrand":
        return self._map(plq.conjugate)

    def recession(self) -> "SeparableIntegrand":
        return self._map(plq.recession)

    def shift(self, b) -> "SeparableIntegrand":
        b = np.broadcast_to(np.asarray(b, dtype=float), (self.d,))
        return SeparableIntegrand([plq.shift(f, float(bi)) for f, bi in zip(self.coords, b)])

    def subdifferential(self, x) -> list[SubdiffInterval]:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return [plq.subdifferential(f, float(xi)) for f, xi in zip(self.coords, x)]

    def prox(self, x, gamma: float) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.array([plq.prox(f, gamma, float(xi)) for f, xi in zip(self.coords, x)])

    def contains(self, x, tol: float = 0.0) -> bool:
        lo, hi = self.box
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return bool(np.all(x >= lo - tol) and np.all(x <= hi + tol))


def as_integrand(obj) -> SeparableIntegrand:
    if isinstance(obj, SeparableIntegrand):
        return obj
    if isinstance(obj, PLQFunction):
        return SeparableIntegrand(obj)
    return SeparableIntegrand(list(obj))


class PLQBatch:
    """A stack of PLQ functions evaluated and prox-ed in one numpy pass.

    Shorter functions are padded with inactive pieces.  Used by the solvers,
    where the same family (one function per node and coordinate) is hit
    thousands of times.
    """

    def __init__(self, fs: Sequence[PLQFunction]):
        fs = list(fs)
        if any(not f.is_proper for f in fs):
            raise plq.ImproperFunctionError("batch members must be proper")
        n = len(fs)
        k = max((f.n_pieces for f in fs), default=1)
        self.n = n
        self.lo = np.full((n, k), np.inf)
        self.hi = np.full((n, k), -np.inf)
        self.coef = np.zeros((n, k, 3))
        self.active = np.zeros((n, k), dtype=bool)
        for i, f in enumerate(fs):
            for j in range(f.n_pieces):
                self.lo[i, j], self.hi[i, j] = f.interval(j)
                self.coef[i, j] = f.pieces[j]
                self.active[i, j] = True
        self.domain_lo = np.array([f.domain_lo for f in fs])
        self.domain_hi = np.array([f.domain_hi for f in fs])

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        xb = x[:, None]
        inside = self.active & (xb >= self.lo) & (xb <= self.hi)
        a, b, c = self.coef[..., 0], self.coef[..., 1], self.coef[..., 2]
        vals = np.where(inside, (a * xb + b) * xb + c, np.inf)
        return vals.min(axis=1)

    def prox(self, x: np.ndarray, gamma) -> np.ndarray:
        """Row-wise ``argmin_u f_i(u) + (u - x_i)**2 / (2 gamma_i)``."""
        x = np.asarray(x, dtype=float)[:, None]
        g = np.broadcast_to(np.asarray(gamma, dtype=float), (self.n,))[:, None]
        a, b, c = self.coef[..., 0], self.coef[..., 1], self.coef[..., 2]
        with np.errstate(invalid="ignore"):
            u = np.clip((x - g * b) / (1.0 + 2.0 * g * a), self.lo, self.hi)
            u = np.where(self.active, u, 0.0)
            obj = (a * u + b) * u + c + (u - x) ** 2 / (2.0 * g)
        obj = np.where(self.active, obj, np.inf)
        k = np.argmin(obj, axis=1)
        return u[np.arange(self.n), k]
