"""Hyperbolic toral automorphisms and their stable/unstable leaf geometry.

Torus points are stored in 64-bit fixed point: a coordinate ``c`` in [0, 1) is
the integer ``round(c * 2**64)``.  An integer matrix acts on these integers
exactly modulo ``2**64`` (numpy ``uint64`` arithmetic wraps), so orbits are
computed without rounding and ``step(step(x, a), b) == step(x, a + b)`` holds
bit for bit, in both time directions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import mpmath
import numpy as np

from .errors import LeafMismatch, LeafRadiusExceeded, NotHyperbolic, NotUnimodular

SCALE = 2.0**64
_ISCALE = 1 << 64
_HALF = 1 << 63

DEFAULT_LEAF_RADIUS = 0.4
# digits for eigen-directions; leaf points must be placed to 2^-64, not 1e-16,
# or the error along the unstable direction swamps stable contraction
_DPS = 40


def _to_raw(coords) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    out = np.empty(coords.shape, dtype=np.uint64)
    flat_in = coords.reshape(-1)
    flat_out = out.reshape(-1)
    for i, c in enumerate(flat_in):
        flat_out[i] = int(round((c % 1.0) * SCALE)) % _ISCALE
    return out


def raw_to_coords(raw: np.ndarray) -> np.ndarray:
    """Float coordinates in [0, 1) of fixed-point points (any leading shape)."""
    c = np.asarray(raw, dtype=np.uint64).astype(np.float64) / SCALE
    return c % 1.0


def signed_difference(raw_y: np.ndarray, raw_x: np.ndarray) -> np.ndarray:
    """Shortest displacement y - x on the torus, each coordinate in [-1/2, 1/2)."""
    d = (np.asarray(raw_y, dtype=np.uint64) - np.asarray(raw_x, dtype=np.uint64)).view(np.int64)
    return d.astype(np.float64) / SCALE


def add_displacement(raw: np.ndarray, disp: np.ndarray) -> np.ndarray:
    """Translate fixed-point points by real displacements (mod 1)."""
    disp = np.asarray(disp, dtype=float)
    wrapped = disp - np.floor(disp + 0.5)
    steps = np.round(wrapped * SCALE)
    steps = np.clip(steps, -(2.0**63), 2.0**63 - 1024).astype(np.int64)
    return np.asarray(raw, dtype=np.uint64) + steps.view(np.uint64)


@dataclass(frozen=True)
class TorusPoint:
    """A point of T^m held in exact 64-bit fixed point."""

    raw: tuple

    @classmethod
    def from_coords(cls, coords: Sequence[float]) -> "TorusPoint":
        return cls(tuple(int(v) for v in _to_raw(coords)))

    @classmethod
    def from_raw(cls, raw) -> "TorusPoint":
        return cls(tuple(int(v) for v in np.asarray(raw, dtype=np.uint64)))

    @property
    def raw_array(self) -> np.ndarray:
        return np.array(self.raw, dtype=np.uint64)

    @property
    def coords(self) -> np.ndarray:
        return raw_to_coords(self.raw_array)

    @property
    def dim(self) -> int:
        return len(self.raw)

    def __repr__(self) -> str:
        return f"TorusPoint({np.array2string(self.coords, precision=6)})"


def as_point(x) -> TorusPoint:
    if isinstance(x, TorusPoint):
        return x
    return TorusPoint.from_coords(x)


@dataclass(frozen=True)
class LeafSelector:
    kind: str = "stable"
    direction_index: int = 0

    def __post_init__(self):
        if self.kind not in ("stable", "unstable"):
            raise ValueError(f"leaf kind must be 'stable' or 'unstable', got {self.kind!r}")


STABLE = LeafSelector("stable")
UNSTABLE = LeafSelector("unstable")


def _directions(L: np.ndarray, contracting: bool):
    """Unit real eigen-directions, in high precision, for |eigenvalue| < 1 or > 1.

    Ordered by decreasing modulus; a complex pair contributes an orthonormal
    pair spanning its real invariant plane.
    """
    with mpmath.workdps(_DPS):
        vals, vecs = mpmath.eig(mpmath.matrix(L.tolist()))
        m = L.shape[0]
        idx = [i for i in range(m)
               if (abs(vals[i]) < 1) == contracting and mpmath.im(vals[i]) >= 0]
        idx.sort(key=lambda i: (-abs(vals[i]), float(mpmath.im(vals[i]))))
        dirs, rates = [], []
        for i in idx:
            v = [vecs[r, i] for r in range(m)]
            if abs(mpmath.im(vals[i])) < mpmath.mpf(10) ** (-_DPS // 2):
                u = [mpmath.re(c) for c in v]
                dirs.append(_hp_unit(u))
                rates.append(float(abs(vals[i])))
            else:
                a = _hp_unit([mpmath.re(c) for c in v])
                b = [mpmath.im(c) for c in v]
                proj = mpmath.fsum(ai * bi for ai, bi in zip(a, b))
                b = _hp_unit([bi - proj * ai for ai, bi in zip(a, b)])
                dirs.extend([a, b])
                rates.extend([float(abs(vals[i]))] * 2)
    return dirs, np.array(rates)


def _hp_unit(v):
    n = mpmath.sqrt(mpmath.fsum(c * c for c in v))
    v = [c / n for c in v]
    for c in v:
        if abs(c) > mpmath.mpf(10) ** -30:
            return [-e for e in v] if c < 0 else v
    return v


def _hp_to_float(dirs) -> np.ndarray:
    return np.array([[float(c) for c in d] for d in dirs]).T


def _orthonormal(cols: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(cols)
    return q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))


@dataclass(frozen=True, eq=False)
class HyperbolicAutomorphism:
    """Integer toral automorphism with no eigenvalues on the unit circle."""

    matrix: np.ndarray
    inverse_matrix: np.ndarray
    stable_directions: np.ndarray
    unstable_directions: np.ndarray
    stable_basis: np.ndarray
    unstable_basis: np.ndarray
    nu: float
    nu_hat: float
    leaf_radius: float = DEFAULT_LEAF_RADIUS
    stable_block: np.ndarray = field(default=None, repr=False)
    unstable_block: np.ndarray = field(default=None, repr=False)
    hp_directions: dict = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def matrix_u64(self) -> np.ndarray:
        return self.matrix.astype(np.int64).view(np.uint64)

    @property
    def inverse_u64(self) -> np.ndarray:
        return self.inverse_matrix.astype(np.int64).view(np.uint64)

    def inverse(self) -> "HyperbolicAutomorphism":
        """The automorphism f^{-1}; its stable leaves are the unstable leaves of f."""
        return make_automorphism(self.inverse_matrix, leaf_radius=self.leaf_radius)

    def basis(self, kind: str) -> np.ndarray:
        return self.stable_basis if kind == "stable" else self.unstable_basis

    def rate(self, kind: str) -> float:
        """Per-step contraction of the leaf in its own time direction."""
        return self.nu if kind == "stable" else 1.0 / self.nu_hat


def make_automorphism(entries, leaf_radius: float = DEFAULT_LEAF_RADIUS) -> HyperbolicAutomorphism:
    L = np.asarray(entries)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValueError("automorphism matrix must be square")
    if not np.all(np.equal(np.round(L), L)):
        raise ValueError("automorphism matrix must have integer entries")
    L = np.round(L).astype(np.int64)
    det = int(round(np.linalg.det(L.astype(float))))
    if abs(det) != 1:
        raise NotUnimodular(f"|det| = {abs(det)} != 1")
    moduli = np.abs(np.linalg.eigvals(L.astype(float)))
    if np.any(np.abs(moduli - 1.0) < 1e-9):
        raise NotHyperbolic(f"eigenvalue moduli {moduli} include 1")
    inv = np.round(np.linalg.inv(L.astype(float))).astype(np.int64)
    if not np.array_equal(L @ inv, np.eye(len(L), dtype=np.int64)):
        raise NotUnimodular("integer inverse does not exist")

    s_hp, s_rates = _directions(L, contracting=True)
    u_hp, u_rates = _directions(L, contracting=False)
    s_dirs, u_dirs = _hp_to_float(s_hp), _hp_to_float(u_hp)
    S = _orthonormal(s_dirs)
    U = _orthonormal(u_dirs)
    Lf = L.astype(float)
    return HyperbolicAutomorphism(
        matrix=L,
        inverse_matrix=inv,
        stable_directions=s_dirs,
        unstable_directions=u_dirs,
        stable_basis=S,
        unstable_basis=U,
        nu=float(s_rates.max()),
        nu_hat=float(u_rates.min()),
        leaf_radius=float(leaf_radius),
        stable_block=S.T @ Lf @ S,
        unstable_block=U.T @ Lf @ U,
        hp_directions={"stable": tuple(map(tuple, s_hp)), "unstable": tuple(map(tuple, u_hp))},
    )


def cat_map(leaf_radius: float = DEFAULT_LEAF_RADIUS) -> HyperbolicAutomorphism:
    return make_automorphism([[2, 1], [1, 1]], leaf_radius=leaf_radius)


def _matpow_u64(M: np.ndarray, n: int) -> np.ndarray:
    result = np.eye(M.shape[0], dtype=np.uint64)
    base = M.copy()
    while n:
        if n & 1:
            result = base @ result
        base = base @ base
        n >>= 1
    return result


def step(sys: HyperbolicAutomorphism, x, n: int) -> TorusPoint:
    """f^n x, exact in fixed point."""
    x = as_point(x)
    M = sys.matrix_u64 if n >= 0 else sys.inverse_u64
    return TorusPoint.from_raw(_matpow_u64(M, abs(int(n))) @ x.raw_array)


def orbit(sys: HyperbolicAutomorphism, x, n: int, direction: int = 1) -> np.ndarray:
    """Fixed-point orbit ``x, f^{±1}x, ..., f^{±n}x`` as a ``(n+1, m)`` uint64 array."""
    raw = as_point(x).raw_array if not isinstance(x, np.ndarray) else x.astype(np.uint64)
    M = sys.matrix_u64 if direction > 0 else sys.inverse_u64
    out = np.empty((n + 1, raw.shape[0]), dtype=np.uint64)
    out[0] = raw
    for k in range(n):
        out[k + 1] = M @ out[k]
    return out


def torus_distance(x, y) -> float:
    x, y = as_point(x), as_point(y)
    return float(np.linalg.norm(signed_difference(y.raw_array, x.raw_array)))


def leaf_point(sys: HyperbolicAutomorphism, x, leaf: LeafSelector, t: float,
               radius: float | None = None) -> TorusPoint:
    """The point at signed leaf distance ``t`` from ``x`` along an eigen-direction."""
    radius = sys.leaf_radius if radius is None else radius
    if abs(t) > radius:
        raise LeafRadiusExceeded(f"|t| = {abs(t)} exceeds leaf radius {radius}")
    dirs = sys.hp_directions[leaf.kind]
    if not 0 <= leaf.direction_index < len(dirs):
        raise ValueError(f"direction_index {leaf.direction_index} out of range")
    v = dirs[leaf.direction_index]
    x = as_point(x)
    with mpmath.workdps(_DPS):
        raw = tuple((r + int(mpmath.nint(mpmath.mpf(t) * c * _ISCALE))) % _ISCALE
                    for r, c in zip(x.raw, v))
    return TorusPoint(raw)


def leaf_coordinate(sys: HyperbolicAutomorphism, x, y, kind: str,
                    radius: float | None = None) -> np.ndarray:
    """Coordinates of ``y - x`` in the orthonormal basis of the ``kind`` subspace.

    Raises LeafMismatch unless y lies on the local ``kind`` leaf through x.
    """
    radius = sys.leaf_radius if radius is None else radius
    d = signed_difference(as_point(y).raw_array, as_point(x).raw_array)
    B = sys.basis(kind)
    w = B.T @ d
    off = np.linalg.norm(d - B @ w)
    if off > 1e-9:
        raise LeafMismatch(f"displacement is {off:.3g} off the local {kind} leaf")
    if np.linalg.norm(w) > radius + 1e-12:
        raise LeafMismatch(f"leaf distance {np.linalg.norm(w):.3g} exceeds local radius {radius}")
    return w


def leaf_displacements(sys: HyperbolicAutomorphism, w: np.ndarray, kind: str, n: int) -> np.ndarray:
    """Displacements ``f^{±k}(x + Bw) - f^{±k}x`` for k = 0..n, exact on linear leaves.

    Forward time for stable leaves, backward time for unstable leaves, so the
    displacements always shrink.
    """
    if kind == "stable":
        B, M = sys.stable_basis, sys.stable_block
    else:
        B, M = sys.unstable_basis, np.linalg.inv(sys.unstable_block)
    out = np.empty((n + 1, sys.dim))
    v = np.asarray(w, dtype=float)
    for k in range(n + 1):
        out[k] = B @ v
        v = M @ v
    return out


def sample_points(sys: HyperbolicAutomorphism, count: int, seed: int, stream: int = 0) -> list:
    """Reproducible uniform samples; ``stream`` separates independent sample sets."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(stream),)))
    return [TorusPoint.from_coords(c) for c in rng.random((count, sys.dim))]


def lattice_points(sys: HyperbolicAutomorphism, denominator_bits: int, count: int,
                   seed: int) -> list:
    """Distinct random points of the dyadic lattice (2^-bits Z)^m / Z^m.

    Such points are periodic under f, and exactly so in fixed point.
    """
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(1 << 20,)))
    N = 1 << denominator_bits
    total = N**sys.dim
    idx = rng.choice(total, size=min(count, total), replace=False)
    pts = []
    for i in idx:
        digits = []
        for _ in range(sys.dim):
            digits.append(int(i % N))
            i //= N
        pts.append(TorusPoint(tuple((dg << (64 - denominator_bits)) % _ISCALE for dg in digits)))
    return pts


def fixed_point(sys: HyperbolicAutomorphism) -> TorusPoint:
    return TorusPoint((0,) * sys.dim)


def stable_unstable_path(sys: HyperbolicAutomorphism, start, end, max_leg: float = 0.3):
    """su-path from ``start`` to ``end``: a stable leg then an unstable leg.

    Each leg is split into pieces no longer than ``max_leg`` so every piece
    lies in a local leaf.  Returns a list of ``(kind, point_from, point_to)``.
    """
    start, end = as_point(start), as_point(end)
    d = signed_difference(end.raw_array, start.raw_array)
    S, U = sys.stable_basis, sys.unstable_basis
    frame = np.column_stack([S, U])
    m = sys.dim
    best = None
    shifts = np.array(np.meshgrid(*[np.arange(-2, 3)] * m)).reshape(m, -1).T
    for shift in shifts:
        coef = np.linalg.solve(frame, d + shift)
        size = np.linalg.norm(coef[: S.shape[1]]) + np.linalg.norm(coef[S.shape[1]:])
        if best is None or size < best[0] - 1e-15:
            best = (size, coef)
    coef = best[1]
    a, b = coef[: S.shape[1]], coef[S.shape[1]:]
    legs = []
    cur = start
    for kind, B, c in (("stable", S, a), ("unstable", U, b)):
        length = np.linalg.norm(c)
        pieces = max(1, int(np.ceil(length / max_leg))) if length > 0 else 0
        base = cur
        for j in range(1, pieces + 1):
            if kind == "unstable" and j == pieces:
                nxt = end
            else:
                nxt = TorusPoint.from_raw(add_displacement(base.raw_array, B @ (c * j / pieces)))
            legs.append((kind, cur, nxt))
            cur = nxt
    if cur != end:
        legs.append(("unstable", cur, end))
    return legs
