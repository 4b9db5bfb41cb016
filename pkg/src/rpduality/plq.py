"""Exact calculus for univariate piecewise linear-quadratic convex functions.

A :class:`PLQFunction` is a closed proper convex function ``f: R -> R u {+inf}``
whose effective domain is a closed interval ``[domain_lo, domain_hi]`` (ends may
be infinite) partitioned by finitely many breakpoints.  On each piece the
function is ``a*x**2 + b*x + c`` with ``a >= 0``.

Every operation here returns another PLQ function (or an interval), computed
piece by piece without sampling, so identities such as ``f** == f`` hold up to
floating point round-off.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

inf = math.inf

# slack used when validating user supplied or computed representations
_REP_RTOL = 1e-8


class ImproperFunctionError(ValueError):
    """Raised when an operation needs a proper function and got an empty one."""


class PLQParseError(ValueError):
    """Malformed PLQ text block; ``lineno`` is 1-based within the parsed text."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        self.reason = message
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class SubdiffInterval:
    """A closed interval ``[lo, hi]`` of slopes, possibly unbounded or empty."""

    lo: float
    hi: float
    empty: bool = False

    @classmethod
    def empty_set(cls) -> "SubdiffInterval":
        return cls(inf, -inf, True)

    def contains(self, y: float, tol: float = 0.0) -> bool:
        return (not self.empty) and self.lo - tol <= y <= self.hi + tol

    def distance(self, y: float) -> float:
        if self.empty:
            return inf
        if y < self.lo:
            return self.lo - y
        if y > self.hi:
            return y - self.hi
        return 0.0

    def min_norm(self) -> float:
        """Element of smallest absolute value (``nan`` for the empty set)."""
        if self.empty:
            return math.nan
        if self.lo <= 0.0 <= self.hi:
            return 0.0
        return self.lo if self.lo > 0.0 else self.hi

    def __iter__(self):
        yield self.lo
        yield self.hi


def _fmt(x: float) -> str:
    if x == inf:
        return "inf"
    if x == -inf:
        return "-inf"
    return format(float(x), ".17g")


def _parse_float(tok: str, lineno: int | None) -> float:
    try:
        return float(tok)
    except ValueError:
        raise PLQParseError(f"not a number: {tok!r}", lineno) from None


class PLQFunction:
    """Closed proper convex piecewise linear-quadratic function of one variable.

    Parameters
    ----------
    domain_lo, domain_hi : float
        Ends of the closed effective domain; ``-inf``/``inf`` allowed.
    breakpoints : sequence of float
        Strictly increasing interior breakpoints.
    pieces : sequence of (a, b, c)
        ``len(breakpoints) + 1`` coefficient triples, left to right.
    check : bool
        Validate continuity and convexity (on by default).

    An empty domain (``domain_lo > domain_hi``) encodes the improper function
    that is ``+inf`` everywhere; build it with :meth:`improper`.
    """

    __slots__ = ("domain_lo", "domain_hi", "breakpoints", "pieces", "_arrays")

    def __init__(
        self,
        domain_lo: float,
        domain_hi: float,
        breakpoints: Iterable[float] = (),
        pieces: Iterable[Sequence[float]] = ((0.0, 0.0, 0.0),),
        *,
        check: bool = True,
    ):
        self.domain_lo = float(domain_lo)
        self.domain_hi = float(domain_hi)
        self.breakpoints = tuple(float(x) + 0.0 for x in breakpoints)
        self.pieces = tuple(tuple(float(v) + 0.0 for v in p) for p in pieces)
        self._arrays = None
        if self.domain_lo > self.domain_hi:
            self.breakpoints = ()
            self.pieces = ()
            return
        if self.domain_lo == inf or self.domain_hi == -inf:
            raise ValueError("domain must contain a finite point")
        if check:
            self._check()

    # ------------------------------------------------------------------ build
    @classmethod
    def improper(cls) -> "PLQFunction":
        return cls(inf, -inf, (), ())

    @classmethod
    def quadratic(cls, a: float = 0.5, b: float = 0.0, c: float = 0.0) -> "PLQFunction":
        return cls(-inf, inf, (), ((a, b, c),))

    @classmethod
    def linear(cls, b: float, c: float = 0.0) -> "PLQFunction":
        return cls(-inf, inf, (), ((0.0, b, c),))

    @classmethod
    def zero(cls) -> "PLQFunction":
        return cls.linear(0.0)

    @classmethod
    def indicator(cls, lo: float, hi: float) -> "PLQFunction":
        if lo > hi:
            raise ValueError("indicator of an empty interval")
        return cls(lo, hi, (), ((0.0, 0.0, 0.0),))

    @classmethod
    def abs(cls, scale: float = 1.0) -> "PLQFunction":
        return cls(-inf, inf, (0.0,), ((0.0, -scale, 0.0), (0.0, scale, 0.0)))

    @classmethod
    def from_values(
        cls, domain_lo: float, domain_hi: float, breakpoints: Sequence[float],
        pieces: Sequence[Sequence[float]],
    ) -> "PLQFunction":
        return cls(domain_lo, domain_hi, breakpoints, pieces)

    # ------------------------------------------------------------- properties
    @property
    def is_proper(self) -> bool:
        return self.domain_lo <= self.domain_hi

    @property
    def n_pieces(self) -> int:
        return len(self.pieces)

    def interval(self, k: int) -> tuple[float, float]:
        lo = self.domain_lo if k == 0 else self.breakpoints[k - 1]
        hi = self.domain_hi if k == len(self.breakpoints) else self.breakpoints[k]
        return lo, hi

    def intervals(self) -> list[tuple[float, float]]:
        return [self.interval(k) for k in range(self.n_pieces)]

    @property
    def is_finite(self) -> bool:
        """True when the function is real-valued on the whole line."""
        return self.domain_lo == -inf and self.domain_hi == inf

    def __repr__(self) -> str:
        if not self.is_proper:
            return "PLQFunction.improper()"
        return (
            f"PLQFunction({self.domain_lo!r}, {self.domain_hi!r}, "
            f"{list(self.breakpoints)!r}, {[list(p) for p in self.pieces]!r})"
        )

    # -------------------------------------------------------------- checking
    def _scale(self) -> float:
        s = 1.0
        for x in (self.domain_lo, self.domain_hi, *self.breakpoints):
            if math.isfinite(x):
                s = max(s, abs(x))
        return s

    def _check(self) -> None:
        bks = self.breakpoints
        if len(self.pieces) != len(bks) + 1:
            raise ValueError("need exactly len(breakpoints) + 1 pieces")
        if any(len(p) != 3 for p in self.pieces):
            raise ValueError("each piece is a triple (a, b, c)")
        if any(not math.isfinite(v) for p in self.pieces for v in p):
            raise ValueError("piece coefficients must be finite")
        if any(not math.isfinite(x) for x in bks):
            raise ValueError("breakpoints must be finite")
        if any(bks[i] >= bks[i + 1] for i in range(len(bks) - 1)):
            raise ValueError("breakpoints must be strictly increasing")
        if bks and (bks[0] <= self.domain_lo or bks[-1] >= self.domain_hi):
            raise ValueError("breakpoints must lie inside the domain")
        scale = self._scale()
        for k, (a, _, _) in enumerate(self.pieces):
            if a < -_REP_RTOL:
                raise ValueError(f"piece {k} is concave (a = {a})")
        for k, x in enumerate(bks):
            left = self._piece_value(k, x)
            right = self._piece_value(k + 1, x)
            if abs(left - right) > _REP_RTOL * max(1.0, abs(left), abs(right), scale * scale):
                raise ValueError(f"discontinuous at breakpoint {x}: {left} vs {right}")
            sl = self._piece_slope(k, x)
            sr = self._piece_slope(k + 1, x)
            if sr < sl - _REP_RTOL * max(1.0, abs(sl), abs(sr), scale):
                raise ValueError(f"not convex at breakpoint {x}: slope {sl} -> {sr}")

    # ------------------------------------------------------------ evaluation
    def _piece_value(self, k: int, x: float) -> float:
        a, b, c = self.pieces[k]
        return (a * x + b) * x + c

    def _piece_slope(self, k: int, x: float) -> float:
        a, b, _ = self.pieces[k]
        return 2.0 * a * x + b

    def _piece_index(self, x: float) -> int:
        return bisect_right(self.breakpoints, x)

    def value(self, x: float) -> float:
        if not (self.domain_lo <= x <= self.domain_hi):
            return inf
        return self._piece_value(self._piece_index(x), x)

    def _as_arrays(self):
        if self._arrays is None:
            self._arrays = (
                np.asarray(self.breakpoints, dtype=float),
                np.asarray(self.pieces, dtype=float).reshape(-1, 3),
            )
        return self._arrays

    def __call__(self, x):
        if np.isscalar(x):
            return self.value(float(x))
        x = np.asarray(x, dtype=float)
        if not self.is_proper:
            return np.full(x.shape, inf)
        bks, coef = self._as_arrays()
        idx = np.searchsorted(bks, x, side="right")
        a, b, c = coef[idx, 0], coef[idx, 1], coef[idx, 2]
        out = (a * x + b) * x + c
        out = np.where((x >= self.domain_lo) & (x <= self.domain_hi), out, inf)
        return out

    def left_derivative(self, x: float) -> float:
        if not (self.domain_lo <= x <= self.domain_hi) or not self.is_proper:
            return math.nan
        if x == self.domain_lo:
            return -inf
        return self._piece_slope(bisect_left(self.breakpoints, x), x)

    def right_derivative(self, x: float) -> float:
        if not (self.domain_lo <= x <= self.domain_hi) or not self.is_proper:
            return math.nan
        if x == self.domain_hi:
            return inf
        return self._piece_slope(bisect_right(self.breakpoints, x), x)

    # ------------------------------------------------------------ structure
    def vertices(self) -> list[float]:
        """Finite domain ends and breakpoints, left to right."""
        out = []
        if math.isfinite(self.domain_lo):
            out.append(self.domain_lo)
        out.extend(self.breakpoints)
        if math.isfinite(self.domain_hi) and self.domain_hi != self.domain_lo:
            out.append(self.domain_hi)
        return out

    def normalize(self, rtol: float = 1e-12) -> "PLQFunction":
        """Merge neighbouring pieces whose coefficients coincide and drop
        pieces narrower than round-off (``rtol`` relative to the scale)."""
        if not self.is_proper:
            return self
        if self.domain_lo == self.domain_hi:
            return PLQFunction(self.domain_lo, self.domain_hi, (), ((0.0, 0.0, self.value(self.domain_lo)),))
        width_tol = rtol * self._scale()
        entries = [(lo, hi, p) for (lo, hi), p in zip(self.intervals(), self.pieces)]
        wide = [e for e in entries if e[1] - e[0] > width_tol]
        if wide and len(wide) < len(entries):
            entries = wide
        pieces = [entries[0][2]]
        keep = []
        for lo, _, q in entries[1:]:
            p = pieces[-1]
            if all(abs(u - v) <= rtol * max(1.0, abs(u), abs(v)) for u, v in zip(p, q)):
                continue
            keep.append(lo)
            pieces.append(q)
        return PLQFunction(self.domain_lo, self.domain_hi, keep, pieces, check=False)

    def probe_points(self, other: "PLQFunction | None" = None) -> np.ndarray:
        """Breakpoints of ``self`` (and ``other``), midpoints and far points."""
        pts = set(self.vertices())
        if other is not None and other.is_proper:
            pts.update(other.vertices())
        pts = sorted(pts)
        extra = []
        for x, y in zip(pts, pts[1:]):
            extra.append(0.5 * (x + y))
        span = max([1.0] + [abs(x) for x in pts])
        if pts:
            extra += [pts[0] - 1.0, pts[-1] + 1.0, pts[0] - 10.0 * span, pts[-1] + 10.0 * span]
        else:
            extra += [-10.0, -1.0, 0.0, 1.0, 10.0]
        return np.array(sorted(set(pts) | set(extra)), dtype=float)

    # ---------------------------------------------------------------- text io
    def to_text(self) -> str:
        lines = [f"plq {_fmt(self.domain_lo)} {_fmt(self.domain_hi)}"]
        for k, (a, b, c) in enumerate(self.pieces):
            left = self.interval(k)[0]
            lines.append(f"{_fmt(left)} {_fmt(a)} {_fmt(b)} {_fmt(c)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str | Sequence[str], first_lineno: int = 1) -> "PLQFunction":
        lines = text.splitlines() if isinstance(text, str) else list(text)
        rows = [(first_lineno + i, ln.split()) for i, ln in enumerate(lines)]
        rows = [(n, toks) for n, toks in rows if toks and not toks[0].startswith("#")]
        if not rows:
            raise PLQParseError("empty PLQ block", first_lineno)
        n0, head = rows[0]
        if head[0] != "plq" or len(head) != 3:
            raise PLQParseError("expected header 'plq <domain_lo> <domain_hi>'", n0)
        lo, hi = _parse_float(head[1], n0), _parse_float(head[2], n0)
        if lo > hi:
            if len(rows) > 1:
                raise PLQParseError("improper (empty-domain) block cannot have pieces", rows[1][0])
            return cls.improper()
        lefts, pieces = [], []
        for n, toks in rows[1:]:
            if len(toks) != 4:
                raise PLQParseError("piece line needs '<left_end> <a> <b> <c>'", n)
            left, a, b, c = (_parse_float(t, n) for t in toks)
            if lefts and left <= lefts[-1]:
                raise PLQParseError("piece left ends must increase", n)
            lefts.append(left)
            pieces.append((a, b, c))
        if not pieces:
            raise PLQParseError("PLQ block has no pieces", n0)
        if lefts[0] != lo:
            raise PLQParseError("first piece must start at domain_lo", rows[1][0])
        try:
            return cls(lo, hi, lefts[1:], pieces)
        except ValueError as exc:
            raise PLQParseError(str(exc), n0) from None


# ---------------------------------------------------------------------------
# operations


def _require_proper(f: PLQFunction) -> None:
    if not f.is_proper:
        raise ImproperFunctionError("operation needs a proper function")


def evaluate(f: PLQFunction, x: float) -> float:
    return f.value(float(x))


def subdifferential(f: PLQFunction, x: float) -> SubdiffInterval:
    """``[left derivative, right derivative]`` of ``f`` at ``x``."""
    x = float(x)
    if not f.is_proper or not (f.domain_lo <= x <= f.domain_hi):
        return SubdiffInterval.empty_set()
    return SubdiffInterval(f.left_derivative(x), f.right_derivative(x))


def normal_cone(lo: float, hi: float, x: float) -> SubdiffInterval:
    """Normal cone of the interval ``[lo, hi]`` at ``x``."""
    if lo > hi:
        raise ValueError("empty interval")
    if not (lo <= x <= hi):
        return SubdiffInterval.empty_set()
    return SubdiffInterval(-inf if x == lo else 0.0, inf if x == hi else 0.0)


def support_function(lo: float, hi: float) -> PLQFunction:
    """``y -> sup {x*y : lo <= x <= hi}``."""
    if lo > hi:
        raise ValueError("empty interval")
    # an infinite end of [lo, hi] cuts the domain down to a half-line
    dlo = 0.0 if lo == -inf else -inf
    dhi = 0.0 if hi == inf else inf
    if dlo == dhi:
        return PLQFunction(0.0, 0.0, (), ((0.0, 0.0, 0.0),))
    if dlo == 0.0:
        return PLQFunction(0.0, dhi, (), ((0.0, hi, 0.0),))
    if dhi == 0.0:
        return PLQFunction(dlo, 0.0, (), ((0.0, lo, 0.0),))
    if lo == hi:
        return PLQFunction.linear(lo)
    return PLQFunction(-inf, inf, (0.0,), ((0.0, lo, 0.0), (0.0, hi, 0.0)))


def _end_slopes(f: PLQFunction, k: int) -> tuple[float, float]:
    """Slopes of piece ``k`` at its two ends, with infinite ends resolved."""
    lo, hi = f.interval(k)
    a, b, _ = f.pieces[k]
    if lo == -inf:
        sl = -inf if a > 0.0 else b
    else:
        sl = 2.0 * a * lo + b
    if hi == inf:
        sr = inf if a > 0.0 else b
    else:
        sr = 2.0 * a * hi + b
    return sl, sr


def conjugate(f: PLQFunction) -> PLQFunction:
    """Legendre-Fenchel conjugate ``y -> sup_x {x*y - f(x)}``.

    Sweeps the slope axis left to right.  A quadratic piece with ``a > 0``
    turns into a quadratic dual piece over its slope range; every vertex
    (breakpoint or finite domain end) where the slope jumps turns into an
    affine dual piece ``y -> x*y - f(x)`` over the jump.
    """
    _require_proper(f)
    segs: list[tuple[float, float, tuple[float, float, float]]] = []

    def push(ylo: float, yhi: float, coef: tuple[float, float, float]) -> None:
        if segs:
            ylo = max(ylo, segs[-1][1])
        if yhi > ylo:
            segs.append((ylo, yhi, coef))

    n = f.n_pieces
    if math.isfinite(f.domain_lo):
        x = f.domain_lo
        push(-inf, _end_slopes(f, 0)[0], (0.0, x, -f.value(x)))
    for k in range(n):
        lo, hi = f.interval(k)
        sl, sr = _end_slopes(f, k)
        a, b, c = f.pieces[k]
        if a > 0.0 and hi > lo:
            push(sl, sr, (0.25 / a, -b / (2.0 * a), b * b / (4.0 * a) - c))
        if k < n - 1:
            x = hi
            push(sr, _end_slopes(f, k + 1)[0], (0.0, x, -f.value(x)))
    if math.isfinite(f.domain_hi):
        x = f.domain_hi
        push(_end_slopes(f, n - 1)[1], inf, (0.0, x, -f.value(x)))

    if not segs:
        # affine on the whole line: the conjugate lives on a single slope
        a, b, c = f.pieces[0]
        return PLQFunction(b, b, (), ((0.0, 0.0, -c),))
    bks = [s[0] for s in segs[1:]]
    pieces = [s[2] for s in segs]
    return PLQFunction(segs[0][0], segs[-1][1], bks, pieces, check=False).normalize()


def recession(f: PLQFunction) -> PLQFunction:
    """Recession (asymptotic) function; positively homogeneous."""
    _require_proper(f)
    a0, b0, _ = f.pieces[0]
    an, bn, _ = f.pieces[-1]
    left = None if (f.domain_lo > -inf or a0 > 0.0) else b0
    right = None if (f.domain_hi < inf or an > 0.0) else bn
    if left is None and right is None:
        return PLQFunction(0.0, 0.0, (), ((0.0, 0.0, 0.0),))
    if left is None:
        return PLQFunction(0.0, inf, (), ((0.0, right, 0.0),))
    if right is None:
        return PLQFunction(-inf, 0.0, (), ((0.0, left, 0.0),))
    if left == right:
        return PLQFunction.linear(left)
    return PLQFunction(-inf, inf, (0.0,), ((0.0, left, 0.0), (0.0, right, 0.0)))


def scale(alpha: float, f: PLQFunction) -> PLQFunction:
    """``alpha * f``; for ``alpha == 0`` the indicator of the closed domain."""
    if alpha < 0:
        raise ValueError("scale factor must be nonnegative")
    _require_proper(f)
    if alpha == 0:
        return PLQFunction.indicator(f.domain_lo, f.domain_hi)
    return PLQFunction(
        f.domain_lo, f.domain_hi, f.breakpoints,
        [(alpha * a, alpha * b, alpha * c) for a, b, c in f.pieces], check=False,
    )


def add(f: PLQFunction, g: PLQFunction) -> PLQFunction:
    """Pointwise sum; disjoint domains give :meth:`PLQFunction.improper`."""
    if not (f.is_proper and g.is_proper):
        return PLQFunction.improper()
    lo = max(f.domain_lo, g.domain_lo)
    hi = min(f.domain_hi, g.domain_hi)
    if lo > hi:
        return PLQFunction.improper()
    if lo == hi:
        return PLQFunction(lo, hi, (), ((0.0, 0.0, f.value(lo) + g.value(lo)),))
    bks = sorted({x for x in f.breakpoints + g.breakpoints if lo < x < hi})
    edges = [lo, *bks, hi]
    pieces = []
    for left, right in zip(edges, edges[1:]):
        if math.isinf(left) and math.isinf(right):
            mid = 0.0
        elif math.isinf(left):
            mid = right - 1.0
        elif math.isinf(right):
            mid = left + 1.0
        else:
            mid = 0.5 * (left + right)
        p = f.pieces[f._piece_index(mid)]
        q = g.pieces[g._piece_index(mid)]
        pieces.append((p[0] + q[0], p[1] + q[1], p[2] + q[2]))
    return PLQFunction(lo, hi, bks, pieces, check=False).normalize()


def shift(f: PLQFunction, b: float) -> PLQFunction:
    """``x -> f(x + b)``."""
    _require_proper(f)
    pieces = [(a, 2.0 * a * b + bb, (a * b + bb) * b + c) for a, bb, c in f.pieces]
    return PLQFunction(f.domain_lo - b, f.domain_hi - b, [x - b for x in f.breakpoints], pieces, check=False)


def tilt(f: PLQFunction, y: float) -> PLQFunction:
    """``x -> f(x) - y*x``."""
    _require_proper(f)
    return PLQFunction(
        f.domain_lo, f.domain_hi, f.breakpoints,
        [(a, b - y, c) for a, b, c in f.pieces], check=False,
    )


def reflect(f: PLQFunction) -> PLQFunction:
    """``x -> f(-x)``."""
    _require_proper(f)
    pieces = [(a, -b, c) for a, b, c in reversed(f.pieces)]
    return PLQFunction(-f.domain_hi, -f.domain_lo, [-x for x in reversed(f.breakpoints)], pieces, check=False)


def prox(f: PLQFunction, gamma: float, x: float) -> float:
    """Unique minimizer of ``f(u) + (u - x)**2 / (2*gamma)``.

    The objective is strictly convex, so its minimum over the whole domain is
    the best of the per-piece constrained minima, each available in closed
    form by clamping the stationary point to the piece.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    _require_proper(f)
    best_u, best_val = math.nan, inf
    for k, (a, b, c) in enumerate(f.pieces):
        lo, hi = f.interval(k)
        u = min(max((x - gamma * b) / (1.0 + 2.0 * gamma * a), lo), hi)
        val = (a * u + b) * u + c + (u - x) ** 2 / (2.0 * gamma)
        if val < best_val:
            best_u, best_val = u, val
    return best_u


def minimize(f: PLQFunction) -> tuple[float, SubdiffInterval]:
    """Infimum of ``f`` and the (interval) set of minimizers.

    Goes through the conjugate: ``inf f = -f*(0)`` and ``argmin f`` is the
    subdifferential of ``f*`` at 0.  An unbounded-below function returns
    ``-inf`` with an empty argmin.
    """
    fc = conjugate(f)
    v = fc.value(0.0)
    if v == inf:
        return -inf, SubdiffInterval.empty_set()
    return -v, subdifferential(fc, 0.0)


def lipschitz_envelope(f: PLQFunction, lam: float) -> PLQFunction:
    """``u -> inf_v { f(v) + |u - v| / lam }``.

    Infimal convolution with ``|.|/lam`` is conjugate to adding the indicator
    of ``[-1/lam, 1/lam]`` to ``f*``, which keeps the result exactly PLQ.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    fc = conjugate(f)
    if fc.value(0.0) == inf:
        raise ValueError("function is unbounded below")
    return conjugate(add(fc, PLQFunction.indicator(-1.0 / lam, 1.0 / lam)))


def expectation(weights: Sequence[float], fs: Sequence[PLQFunction]) -> PLQFunction:
    """Convex combination ``sum_i w_i f_i`` (zero weights keep the domain)."""
    w = np.asarray(weights, dtype=float)
    if len(w) != len(fs) or len(fs) == 0:
        raise ValueError("need one weight per function")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ValueError("weights must be a probability vector")
    out = None
    for wi, fi in zip(w, fs):
        if not fi.is_proper:
            return PLQFunction.improper()
        term = scale(float(wi), fi)
        out = term if out is None else add(out, term)
        if not out.is_proper:
            return out
    return out


def equal_on_probes(f: PLQFunction, g: PLQFunction, atol: float = 1e-9, rtol: float = 0.0) -> bool:
    """Compare two functions by evaluation (structure may differ)."""
    return max_probe_difference(f, g, rtol=rtol) <= atol


def max_probe_difference(f: PLQFunction, g: PLQFunction, rtol: float = 0.0, dom_rtol: float = 1e-12) -> float:
    """Largest evaluation mismatch over the joint probe set.

    Domain ends that differ by round-off (``dom_rtol`` relative to the
    scale) are matched by evaluating at the nearer end; any other domain
    disagreement on a probe gives ``inf``.
    """
    if not f.is_proper or not g.is_proper:
        return 0.0 if (f.is_proper == g.is_proper) else inf
    xs = f.probe_points(g)
    slack = dom_rtol * max(f._scale(), g._scale())
    fv = f(xs)
    gv = g(xs)
    for h, hv in ((f, fv), (g, gv)):
        near = np.isinf(hv) & (xs >= h.domain_lo - slack) & (xs <= h.domain_hi + slack)
        if np.any(near):
            hv[near] = h(np.clip(xs[near], h.domain_lo, h.domain_hi))
    both_inf = np.isinf(fv) & np.isinf(gv)
    if np.any(np.isinf(fv) != np.isinf(gv)):
        return inf
    fv, gv = np.where(both_inf, 0.0, fv), np.where(both_inf, 0.0, gv)
    d = np.abs(fv - gv)
    if rtol:
        d = d / np.maximum(1.0, rtol * np.maximum(np.abs(fv), 1.0))
    return float(d.max()) if d.size else 0.0


@dataclass(frozen=True)
class GraphEdge:
    """One straight edge of the graph ``{(x, y) : y in df(x)}``.

    The edge is the set of ``(x, y)`` with ``ax*x + ay*y == rhs`` inside the
    box ``[x_lo, x_hi] x [y_lo, y_hi]``.
    """

    ax: float
    ay: float
    rhs: float
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    def distance(self, x: float, y: float) -> float:
        cx = min(max(x, self.x_lo), self.x_hi)
        cy = min(max(y, self.y_lo), self.y_hi)
        if self.ay == 0.0:  # vertical edge
            return math.hypot(x - cx, y - cy)
        # point on the line y = (rhs - ax x)/ay, closest within the x-range
        slope = -self.ax / self.ay
        icpt = self.rhs / self.ay
        t = (x + slope * (y - icpt)) / (1.0 + slope * slope)
        t = min(max(t, self.x_lo), self.x_hi)
        return math.hypot(x - t, y - (slope * t + icpt))

    def violation(self, x: float, y: float) -> float:
        """How far ``(x, y)`` is outside the edge's box (0 if inside)."""
        v = 0.0
        v = max(v, self.x_lo - x, x - self.x_hi, self.y_lo - y, y - self.y_hi)
        return v


def graph_edges(f: PLQFunction) -> list[GraphEdge]:
    """Straight pieces of the subdifferential graph of ``f``, left to right."""
    _require_proper(f)
    edges = []
    n = f.n_pieces
    if f.domain_lo == f.domain_hi:
        return [GraphEdge(1.0, 0.0, f.domain_lo, f.domain_lo, f.domain_lo, -inf, inf)]
    if math.isfinite(f.domain_lo):
        x = f.domain_lo
        edges.append(GraphEdge(1.0, 0.0, x, x, x, -inf, _end_slopes(f, 0)[0]))
    for k in range(n):
        lo, hi = f.interval(k)
        a, b, _ = f.pieces[k]
        sl, sr = _end_slopes(f, k)
        edges.append(GraphEdge(-2.0 * a, 1.0, b, lo, hi, sl, sr))
        if k < n - 1:
            nxt = _end_slopes(f, k + 1)[0]
            if nxt > sr:
                edges.append(GraphEdge(1.0, 0.0, hi, hi, hi, sr, nxt))
    if math.isfinite(f.domain_hi):
        x = f.domain_hi
        edges.append(GraphEdge(1.0, 0.0, x, x, x, _end_slopes(f, n - 1)[1], inf))
    return edges
