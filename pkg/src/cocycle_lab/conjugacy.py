"""Flags, block decompositions, the inductive conjugacy solve and its diagnostics.

Blocks are indexed from 1 as (j, i), j the row block and i the column block.
Operator-valued unknowns are flattened column-major: vec(X)[a + b*rows] = X[a, b],
so that vec(P X Q) = (Q^T kron P) vec(X).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import subspace_angles

from .base import (
    LeafSelector,
    TorusPoint,
    as_point,
    leaf_point,
    orbit,
    raw_to_coords,
    sample_points,
    step,
)
from .cocycle import Cocycle, growth_report, iterate
from .errors import (
    GapTooSmall,
    InsufficientSignal,
    NoConvergence,
    MultipleModuli,
    NotBounded,
    NotInvariant,
    SingularC,
    TwistNotBounded,
)
from .fields import FunctionField, point_coords
from .holonomy import (
    DEFAULT_N_MAX,
    DEFAULT_TOL,
    holonomy,
    _holonomy_solve,
)
from .reports import CheckRow, Report, loglog_slope
from .spd import SpdPoint, affine_distance, circumcenter


def _sign_fix(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    return -v if nz.size and v[nz[0]] < 0 else v


@dataclass(frozen=True, eq=False)
class Flag:
    """Nested subspaces V^1 < ... < V^k = R^d.

    ``frame`` is an invertible matrix whose first ``dimensions[i-1]`` columns
    span V^i.  ``metric`` (an SPD matrix, default Euclidean) defines the
    complements U^i of V^{i-1} in V^i.
    """

    dimensions: tuple
    frame: np.ndarray
    metric: np.ndarray | None = None

    def __post_init__(self):
        dims = tuple(int(v) for v in self.dimensions)
        d = self.frame.shape[0]
        if list(dims) != sorted(set(dims)) or dims[-1] != d or dims[0] <= 0:
            raise ValueError(f"flag dimensions must increase strictly to {d}, got {dims}")
        object.__setattr__(self, "dimensions", dims)

    @property
    def k(self) -> int:
        return len(self.dimensions)

    @property
    def dim(self) -> int:
        return self.frame.shape[0]

    @property
    def block_sizes(self) -> tuple:
        return tuple(np.diff((0,) + self.dimensions).tolist())

    def subspace(self, i: int) -> np.ndarray:
        """Euclidean-orthonormal basis of V^i (1-indexed)."""
        q, _ = np.linalg.qr(self.frame[:, : self.dimensions[i - 1]])
        return q

    def to_dict(self) -> dict:
        return {
            "dimensions": list(self.dimensions),
            "frame": self.frame.reshape(-1).tolist(),
            "metric": None if self.metric is None else self.metric.reshape(-1).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Flag":
        dims = tuple(data["dimensions"])
        d = dims[-1]
        metric = data.get("metric")
        return cls(dims, np.asarray(data["frame"], float).reshape(d, d),
                   None if metric is None else np.asarray(metric, float).reshape(d, d))


@dataclass(frozen=True, eq=False)
class FlagField:
    """A point-dependent flag: ``frames(coords)`` returns (N, d, d) adapted frames."""

    dimensions: tuple
    frames: object
    metric: np.ndarray | None = None

    @property
    def block_sizes(self) -> tuple:
        return tuple(np.diff((0,) + tuple(self.dimensions)).tolist())


def as_flag_field(flag) -> FlagField:
    if isinstance(flag, FlagField):
        return flag
    frame = flag.frame
    return FlagField(flag.dimensions,
                     lambda c: np.broadcast_to(frame, (len(c),) + frame.shape).copy(),
                     flag.metric)


def principal_angles(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Principal angles (radians, ascending) between the column spans of A and B."""
    return np.sort(subspace_angles(np.atleast_2d(A), np.atleast_2d(B)))


def jordan_flag(A, tol: float = 1e-8):
    """Flag on whose quotients (1/rho) A acts by isometries, and rho.

    Requires all eigenvalues of A to share one modulus rho.  The flag is
    built one irreducible piece at a time: an eigenvector (real eigenvalue)
    or the real plane of a complex eigenvector of the action induced on the
    quotient by the subspace built so far.  Real pieces come first, then
    complex ones by increasing argument.  The returned metric makes the
    adapted frame orthonormal, so the diagonal blocks are orthogonal.
    """
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    moduli = np.abs(np.linalg.eigvals(A))
    rho = float(np.exp(np.mean(np.log(moduli))))
    if np.max(np.abs(moduli - rho)) > tol * rho:
        raise MultipleModuli(f"eigenvalue moduli {np.sort(moduli)} are not all equal")
    N = A / rho
    cols, dims = [], []
    while len(cols) < d:
        if cols:
            q, _ = np.linalg.qr(np.column_stack(cols), mode="complete")
            Qc = q[:, len(cols):]
        else:
            Qc = np.eye(d)
        vals, vecs = np.linalg.eig(Qc.T @ N @ Qc)
        real = [i for i in range(len(vals)) if abs(vals[i].imag) < 1e-9]
        if real:
            i = min(real, key=lambda i: (-vals[i].real, i))
            cols.append(_sign_fix(Qc @ np.real(vecs[:, i]) / np.linalg.norm(vecs[:, i])))
        else:
            i = min((i for i in range(len(vals)) if vals[i].imag > 0),
                    key=lambda i: np.angle(vals[i]))
            u, v = Qc @ vecs[:, i].real, Qc @ vecs[:, i].imag
            # rescale so the rotation in the (u, v) plane is exactly isometric
            scale = np.sqrt(2.0 / (u @ u + v @ v))
            cols.extend([u * scale, v * scale])
        dims.append(len(cols))
    T = np.column_stack(cols)
    Tinv = np.linalg.inv(T)
    G = Tinv.T @ Tinv
    return Flag(tuple(dims), T, 0.5 * (G + G.T)), rho


def _orthonormal_frames(T: np.ndarray, G: np.ndarray | None) -> np.ndarray:
    """G-orthonormal Gram-Schmidt of stacked frames, positive diagonal (continuous)."""
    if G is None:
        Y = T
        Lt = None
    else:
        Lt = np.linalg.cholesky(G).T
        Y = Lt @ T
    q, r = np.linalg.qr(Y)
    sgn = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    sgn[sgn == 0] = 1.0
    r = r * sgn[..., :, None]
    return np.linalg.solve(np.swapaxes(r, -1, -2), np.swapaxes(T, -1, -2)).swapaxes(-1, -2)


@dataclass(frozen=True, eq=False)
class BlockDecomposition:
    """Coordinates of a cocycle in frames adapted to an invariant flag.

    W_x has G-orthonormal columns, the first block spanning U^1 = V^1, the
    next U^2 (the complement of V^1 in V^2), and so on.  In these
    coordinates A_x becomes Ahat_x = W_{fx}^{-1} A_x W_x, whose (j, i)
    block is A^{j,i} = P^j A|_{U^i}.
    """

    cocycle: Cocycle
    flag: FlagField
    triangularity_residual: float = 0.0
    offsets: tuple = field(default=())

    @property
    def sizes(self) -> tuple:
        return self.flag.block_sizes

    @property
    def k(self) -> int:
        return len(self.sizes)

    def slice(self, i: int) -> slice:
        return slice(self.offsets[i - 1], self.offsets[i])

    def frames(self, coords: np.ndarray) -> np.ndarray:
        coords = np.atleast_2d(coords)
        return _orthonormal_frames(self.flag.frames(coords), self.flag.metric)

    def image(self, coords: np.ndarray) -> np.ndarray:
        return np.atleast_2d(coords) @ self.cocycle.base.matrix.T.astype(float)

    def coordinates(self, coords: np.ndarray) -> np.ndarray:
        """Ahat_x for each row of coords, shape (N, d, d)."""
        coords = np.atleast_2d(coords)
        W = self.frames(coords)
        Wf = self.frames(self.image(coords))
        return np.linalg.solve(Wf, self.cocycle.at(coords) @ W)

    def block_many(self, j: int, i: int, coords: np.ndarray) -> np.ndarray:
        return self.coordinates(coords)[:, self.slice(j), self.slice(i)]

    def block_field(self, j: int, i: int) -> FunctionField:
        return FunctionField(self.sizes[j - 1], lambda c: self.block_many(j, i, c))

    def complements(self, x) -> list:
        W = self.frames(point_coords(x))[0]
        return [W[:, self.slice(i)] for i in range(1, self.k + 1)]

    def projections(self, x) -> list:
        """P^j = W E_j W^{-1}: projection onto U^j along the other complements."""
        W = self.frames(point_coords(x))[0]
        Winv = np.linalg.inv(W)
        return [W[:, self.slice(j)] @ Winv[self.slice(j), :] for j in range(1, self.k + 1)]

    def reassemble(self, x) -> np.ndarray:
        """sum over j <= i of the embedded blocks, mapped back to ambient coordinates."""
        c = point_coords(x)
        Ahat = self.coordinates(c)[0]
        tri = np.zeros_like(Ahat)
        for i in range(1, self.k + 1):
            for j in range(1, i + 1):
                tri[self.slice(j), self.slice(i)] = Ahat[self.slice(j), self.slice(i)]
        return self.frames(self.image(c))[0] @ tri @ np.linalg.inv(self.frames(c)[0])

    def lower_residual(self, coords: np.ndarray) -> np.ndarray:
        Ahat = self.coordinates(coords)
        out = np.zeros(len(Ahat))
        for i in range(1, self.k + 1):
            for j in range(i + 1, self.k + 1):
                out = np.maximum(out, np.linalg.norm(Ahat[:, self.slice(j), self.slice(i)],
                                                     ord=2, axis=(1, 2)))
        return out


def block_decompose(coc: Cocycle, flag, metric=None, check_samples: int = 32, seed: int = 0,
                    invariance_tol: float = 1e-8) -> BlockDecomposition:
    """Split ``coc`` along ``flag`` (a Flag or FlagField).

    Raises NotInvariant, naming a sampled point and flag index, when
    A_x V^i_x is not contained in V^i_{fx}.
    """
    ff = as_flag_field(flag)
    if metric is not None:
        ff = FlagField(ff.dimensions, ff.frames, np.asarray(metric, dtype=float))
    offsets = (0,) + tuple(ff.dimensions)
    dec = BlockDecomposition(coc, ff, 0.0, offsets)
    pts = sample_points(coc.base, check_samples, seed, stream=17)
    coords = np.array([p.coords for p in pts])
    Ahat = dec.coordinates(coords)
    worst = 0.0
    for n in range(len(pts)):
        scale = np.linalg.norm(Ahat[n], 2)
        for i in range(1, dec.k):
            below = Ahat[n, offsets[i]:, : offsets[i]]
            r = np.linalg.norm(below, 2) / scale
            worst = max(worst, r)
            if r > invariance_tol:
                raise NotInvariant(f"A_x V^{i} leaves V^{i} at x={pts[n]} (residual {r:.3g})",
                                   point=pts[n], index=i)
    return BlockDecomposition(coc, ff, float(worst), offsets)


def invariant_metric(coc: Cocycle, x, n_range: int = 10, iterations: int = 100,
                     bound: float = 1e6) -> SpdPoint:
    """Approximately invariant inner product at x for a uniformly bounded cocycle.

    Circumcentre of the pulled-back metrics (A^n_x)^T A^n_x, |n| <= n_range.
    ``residual`` is the affine-invariant distance between A_x^T P(fx) A_x and P(x).
    """
    def orbit_metric(p):
        Gs = []
        for n in range(-n_range, n_range + 1):
            An = iterate(coc, p, n)
            G = An.T @ An
            if np.linalg.norm(G, 2) > bound or np.linalg.norm(np.linalg.inv(G), 2) > bound:
                raise NotBounded(f"|(A^{n})^T A^{n}| exceeds {bound:g}; cocycle is not bounded")
            Gs.append(G)
        return circumcenter(Gs, iterations)

    x = as_point(x)
    P = orbit_metric(x)
    Pf = orbit_metric(step(coc.base, x, 1))
    A = coc.generator.evaluate(x)
    return SpdPoint(P, affine_distance(A.T @ Pf @ A, P))


def _vec(X: np.ndarray) -> np.ndarray:
    return np.swapaxes(X, -1, -2).reshape(X.shape[:-2] + (-1,))


def _unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    return np.swapaxes(v.reshape(v.shape[:-1] + (cols, rows)), -1, -2)


def _batched_kron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    n, a, b = A.shape
    _, c, d = B.shape
    return np.einsum("nij,nkl->nikjl", A, B).reshape(n, a * c, b * d)


class _Pair:
    """Everything the block equations need at once: both decompositions, the diagonal."""

    def __init__(self, DA, DB, diagonal):
        self.DA, self.DB, self.diagonal = DA, DB, diagonal
        self.L = DA.cocycle.base.matrix.T.astype(float)
        self.solved = {}

    def Ahat(self, c):
        return self.DA.coordinates(c)

    def Bhat(self, c):
        return self.DB.coordinates(c)

    def sl(self, i):
        return self.DA.slice(i)


class _DSection:
    """D_x of the (j, i) block equation, built from diagonal and already-solved blocks."""

    def __init__(self, pair: _Pair, j: int, i: int):
        self.pair, self.j, self.i = pair, j, i
        self.rows, self.cols = pair.DB.sizes[j - 1], pair.DA.sizes[i - 1]
        self.dimension = self.rows * self.cols

    def _value(self, c, block_at_x, block_at_fx):
        p, j, i = self.pair, self.j, self.i
        Ah, Bh = p.Ahat(c), p.Bhat(c)
        S = np.zeros((len(c), self.rows, self.cols))
        for m in range(j, i):
            S += block_at_fx(j, m) @ Ah[:, p.sl(m), p.sl(i)]
        for m in range(j + 1, i + 1):
            S -= Bh[:, p.DB.slice(j), p.DB.slice(m)] @ block_at_x(m, i)
        Bjj = Bh[:, p.DB.slice(j), p.DB.slice(j)]
        return _vec(np.linalg.solve(Bjj, S))

    def _needed(self) -> list:
        j, i = self.j, self.i
        return [(j, m) for m in range(j + 1, i)] + [(m, i) for m in range(j + 1, i)]

    def _lookup(self, c, cf, vx, vf):
        p = self.pair

        def at_x(jj, ii):
            if jj == ii:
                return p.diagonal[jj - 1](c)
            return _unvec(vx[(jj, ii)], *p.solved[(jj, ii)].shape)

        def at_fx(jj, ii):
            if jj == ii:
                return p.diagonal[jj - 1](cf)
            return _unvec(vf[(jj, ii)], *p.solved[(jj, ii)].shape)

        return at_x, at_fx

    def evaluate_many(self, coords):
        p = self.pair
        c = np.atleast_2d(coords)
        cf = c @ p.L.T
        vx = {key: p.solved[key].evaluate_many(c) for key in self._needed()}
        vf = {key: p.solved[key].evaluate_many(cf) for key in self._needed()}
        return self._value(c, *self._lookup(c, cf, vx, vf))

    def stream(self, direction: int):
        p = self.pair
        needed = self._needed()
        if not needed:
            return self.evaluate_many
        streams_x = {key: p.solved[key].stream(direction) for key in needed}
        streams_fx = {key: p.solved[key].stream(direction) for key in needed}

        def run(coords):
            c = np.atleast_2d(coords)
            cf = c @ p.L.T
            vx = {key: s(c) for key, s in streams_x.items()}
            vf = {key: s(cf) for key, s in streams_fx.items()}
            return self._value(c, *self._lookup(c, cf, vx, vf))

        return run


class _SolvedBlock:
    """The solved off-diagonal block C^{j,i}, evaluated on demand."""

    def __init__(self, pair: _Pair, j: int, i: int, tol: float, n_max: int):
        self.pair, self.j, self.i = pair, j, i
        self.shape = (pair.DB.sizes[j - 1], pair.DA.sizes[i - 1])
        self.phi = _DSection(pair, j, i)
        self.tol, self.n_max = tol, n_max
        self.twist = self._make_twist()
        self.dimension = self.phi.dimension
        self._eta0 = None

    def _make_twist(self) -> Cocycle:
        p, j, i = self.pair, self.j, self.i

        def F(c):
            Aii = p.Ahat(c)[:, p.sl(i), p.sl(i)]
            Bjj = p.Bhat(c)[:, p.DB.slice(j), p.DB.slice(j)]
            return _batched_kron(np.swapaxes(np.linalg.inv(Aii), -1, -2), Bjj)

        def Finv(c):
            Aii = p.Ahat(c)[:, p.sl(i), p.sl(i)]
            Bjj = p.Bhat(c)[:, p.DB.slice(j), p.DB.slice(j)]
            return _batched_kron(np.swapaxes(Aii, -1, -2), np.linalg.inv(Bjj))

        return Cocycle(p.DA.cocycle.base, FunctionField(self.shape[0] * self.shape[1], F, Finv))

    @property
    def eta0(self):
        if self._eta0 is None:
            self._eta0 = self.pair.anchors[(self.j, self.i)]
        return self._eta0

    def solve(self, x) -> np.ndarray:
        return _holonomy_solve(self.twist, self.phi, x, self.tol, self.n_max, 1.0, self.eta0)

    def evaluate_many(self, coords):
        c = np.atleast_2d(coords)
        return np.array([self.solve(TorusPoint.from_coords(row)) for row in c])

    def matrices(self, coords):
        return _unvec(self.evaluate_many(coords), *self.shape)

    def stream(self, direction: int):
        """Values along consecutive orbit points: one solve, then the equation itself.

        Forward: eta(fz) = F_z (eta(z) - phi(z)).
        Backward: eta(f^{-1}z) = phi(f^{-1}z) + F_{f^{-1}z}^{-1} eta(z).
        """
        phi_stream = self.phi.stream(direction)
        state = {"eta": None, "phi": None}

        def run(coords):
            c = np.atleast_2d(coords)
            ph = phi_stream(c)
            out = np.empty_like(ph)
            start = 0
            if state["eta"] is None:
                out[0] = self.solve(TorusPoint.from_coords(c[0]))
                state["eta"], state["phi"] = out[0], ph[0]
                start = 1
            eta, ph_prev = state["eta"], state["phi"]
            if direction > 0:
                prev_c = run.prev_c
                for n in range(start, len(c)):
                    zc = prev_c if n == 0 else c[n - 1]
                    Fz = self.twist.at(zc[None, :])[0]
                    eta = Fz @ (eta - ph_prev)
                    out[n] = eta
                    ph_prev = ph[n]
            else:
                Finv = self.twist.inv_at(c[start:]) if len(c) > start else None
                for n in range(start, len(c)):
                    eta = ph[n] + Finv[n - start] @ eta
                    out[n] = eta
                    ph_prev = ph[n]
            state["eta"], state["phi"] = eta, ph_prev
            run.prev_c = c[-1]
            return out

        run.prev_c = None
        return run


@dataclass(frozen=True, eq=False)
class ConjugacySection:
    """x -> C(x) assembled from diagonal blocks and solved off-diagonal blocks."""

    dimension: int
    pair: object
    blocks: dict

    def hat_many(self, coords) -> np.ndarray:
        c = np.atleast_2d(coords)
        p = self.pair
        d = self.dimension
        out = np.zeros((len(c), d, d))
        k = p.DA.k
        for i in range(1, k + 1):
            for j in range(1, i + 1):
                if i == j:
                    val = p.diagonal[i - 1](c)
                else:
                    val = self.blocks[(j, i)].matrices(c)
                out[:, p.DB.slice(j), p.DA.slice(i)] = val
        return out

    def evaluate_many(self, coords) -> np.ndarray:
        c = np.atleast_2d(coords)
        p = self.pair
        return p.DB.frames(c) @ self.hat_many(c) @ np.linalg.inv(p.DA.frames(c))

    def evaluate(self, x) -> np.ndarray:
        return self.evaluate_many(point_coords(x))[0]


def oracle_diagonal_blocks(C0, DA: BlockDecomposition, DB: BlockDecomposition) -> list:
    """Diagonal blocks of a known conjugacy C0 in the two adapted frames."""
    def make(i):
        def blk(c):
            c = np.atleast_2d(c)
            Chat = np.linalg.solve(DB.frames(c), C0.evaluate_many(c) @ DA.frames(c))
            return Chat[:, DB.slice(i), DA.slice(i)]
        return blk
    return [make(i) for i in range(1, DA.k + 1)]


INNER_TOL_FACTOR = 1e-2


def _fixed_point_anchors(pair: _Pair, tol: float) -> dict:
    """All off-diagonal blocks of Chat at the fixed point 0, solved jointly.

    At 0 the conjugacy equation is the finite linear system
    Bhat_0 Chat_0 = Chat_0 Ahat_0 for block upper-triangular Chat_0 with the
    given diagonal.  Solving the blocks one at a time can pick members of the
    kernel that make a later block unsolvable; the joint minimal-norm
    solution cannot.
    """
    DA, DB = pair.DA, pair.DB
    k = DA.k
    z = np.zeros((1, DA.cocycle.base.dim))
    Ah, Bh = DA.coordinates(z)[0], DB.coordinates(z)[0]
    diag = [pair.diagonal[i - 1](z)[0] for i in range(1, k + 1)]
    unknowns = [(j, i) for i in range(1, k + 1) for j in range(1, i)]
    if not unknowns:
        return {}
    col = {}
    n = 0
    for j, i in unknowns:
        col[(j, i)] = n
        n += DB.sizes[j - 1] * DA.sizes[i - 1]
    rows_M, rows_b = [], []
    for j, i in unknowns:
        r = DB.sizes[j - 1]
        c = DA.sizes[i - 1]
        M = np.zeros((r * c, n))
        b = np.zeros((r, c))

        def put(left, key, right):
            # contributes left @ X_key @ right, vectorised
            a, bb = col[key], col[key] + left.shape[1] * right.shape[0]
            M[:, a:bb] += np.kron(right.T, left)

        for m in range(j, i + 1):
            Bjm = Bh[DB.slice(j), DB.slice(m)]
            if m == i:
                b -= Bjm @ diag[i - 1]
            else:
                put(Bjm, (m, i), np.eye(c))
        for m in range(j, i + 1):
            Ami = Ah[DA.slice(m), DA.slice(i)]
            if m == j:
                b += diag[j - 1] @ Ami
            else:
                put(-np.eye(r), (j, m), Ami)
        rows_M.append(M)
        rows_b.append(_vec(b))
    M = np.vstack(rows_M)
    b = np.concatenate(rows_b)
    sol = np.linalg.lstsq(M, b, rcond=1e-12)[0]
    if np.linalg.norm(M @ sol - b) > 10 * tol * max(1.0, np.linalg.norm(b)):
        raise NoConvergence("the conjugacy equation has no solution at the fixed point 0 "
                            "with the given diagonal blocks")
    out = {}
    for j, i in unknowns:
        size = DB.sizes[j - 1] * DA.sizes[i - 1]
        out[(j, i)] = sol[col[(j, i)]: col[(j, i)] + size]
    return out


def inductive_block_solve(A_coc: Cocycle, B_coc: Cocycle, flag_A, flag_B, diagonal_conjugacies,
                          tol: float = DEFAULT_TOL, n_max: int = DEFAULT_N_MAX, metric=None,
                          check_bound: bool = True, bound_n: int = 32) -> ConjugacySection:
    """Conjugacy C with B_x = C(fx) A_x C(x)^{-1}, block by block.

    ``diagonal_conjugacies[i-1]`` maps coordinates to the (i, i) block of C
    in the adapted frames.  Off-diagonal blocks are solved in order of
    distance from the diagonal; each is the continuous solution of the
    flattened twisted equation with F_x = (A^{ii}_x)^{-T} kron B^{jj}_x.
    """
    DA = block_decompose(A_coc, flag_A, metric)
    DB = block_decompose(B_coc, flag_B, metric)
    if DA.sizes != DB.sizes:
        raise ValueError(f"flag block sizes differ: {DA.sizes} vs {DB.sizes}")
    pair = _Pair(DA, DB, list(diagonal_conjugacies))
    pair.anchors = _fixed_point_anchors(pair, tol)
    k = DA.k
    for ell in range(1, k):
        for i in range(ell + 1, k + 1):
            j = i - ell
            # values of inner blocks feed later right-hand sides, where their
            # solve error shows up as a non-decaying increment
            blk = _SolvedBlock(pair, j, i, max(tol * INNER_TOL_FACTOR ** (k - 1 - ell), 1e-14),
                               n_max)
            if check_bound:
                rep = growth_report(blk.twist, "bounded", n_max=bound_n, samples=2)
                if rep.verdict == "fail":
                    raise TwistNotBounded(
                        f"operator twist of block ({j},{i}) grows (sup {rep.K_hat:.3g})")
            pair.solved[(j, i)] = blk
    return ConjugacySection(A_coc.dim, pair, dict(pair.solved))


def _section_values(C, coords):
    if hasattr(C, "evaluate_many"):
        return C.evaluate_many(coords)
    return np.array([C(TorusPoint.from_coords(c)) for c in coords])


def conjugacy_residual(A_coc: Cocycle, B_coc: Cocycle, C, samples: int = 30, seed: int = 0,
                       stream: int = 23, tol: float = DEFAULT_TOL,
                       limit: float | None = None) -> CheckRow:
    """max over samples of ||B_x - C(fx) A_x C(x)^{-1}|| / ||B_x||."""
    pts = sample_points(A_coc.base, samples, seed, stream=stream)
    coords = np.array([p.coords for p in pts])
    fcoords = np.array([step(A_coc.base, p, 1).coords for p in pts])
    Cx, Cf = _section_values(C, coords), _section_values(C, fcoords)
    cond = np.linalg.cond(Cx)
    if np.max(cond) > 1e12:
        raise SingularC(f"C(x) has condition number {np.max(cond):.3g} > 1e12")
    A, B = A_coc.at(coords), B_coc.at(coords)
    R = B - Cf @ A @ np.linalg.inv(Cx)
    res = np.linalg.norm(R, 2, axis=(1, 2)) / np.linalg.norm(B, 2, axis=(1, 2))
    worst = float(res.max())
    limit = 10 * tol if limit is None else limit
    return CheckRow("conjugacy", samples, worst, float(np.max(cond)),
                    "pass" if worst < limit else "fail")


def intertwining_residual(A_coc: Cocycle, B_coc: Cocycle, C, samples: int = 20,
                          tol: float = DEFAULT_TOL, seed: int = 0, t_max: float = 0.2,
                          limit: float | None = None) -> CheckRow:
    """max over leaf pairs and both leaf kinds of ||H^B_{x,y} - C(y) H^A_{x,y} C(x)^{-1}||."""
    sys = A_coc.base
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(29,)))
    pts = sample_points(sys, samples, seed, stream=29)
    worst = 0.0
    for kind in ("stable", "unstable"):
        ts = rng.uniform(-t_max, t_max, samples)
        for x, t in zip(pts, ts):
            y = leaf_point(sys, x, LeafSelector(kind), t)
            HA = holonomy(A_coc, x, y, kind, tol).matrix
            HB = holonomy(B_coc, x, y, kind, tol).matrix
            Cx, Cy = _section_values(C, np.array([x.coords, y.coords]))
            worst = max(worst, float(np.linalg.norm(HB - Cy @ HA @ np.linalg.inv(Cx), 2)))
    limit = 100 * tol if limit is None else limit
    return CheckRow("intertwining", 2 * samples, worst, None, "pass" if worst < limit else "fail")


def holder_exponent_estimate(section, sys, leaf: LeafSelector, x_samples: int = 8,
                             scales=(0.1, 0.03, 0.01, 0.003, 0.001), seed: int = 0,
                             noise_floor: float = 1e-13):
    """Slope of log max_x ||s(x) - s(y_t)|| against log t for y_t on the leaf of x.

    Returns ``(beta_hat, r_squared)``.  Differences below the noise floor are
    dropped; InsufficientSignal if fewer than two scales remain.
    """
    scales = np.asarray(scales, dtype=float)
    if len(scales) < 4 or scales.max() / scales.min() < 100:
        raise ValueError("need at least 4 scales spanning at least 2 decades")
    pts = sample_points(sys, x_samples, seed, stream=31)
    base = [np.asarray(_section_values(section, p.coords[None, :])[0]) for p in pts]
    stats = []
    for t in scales:
        worst = 0.0
        for p, v in zip(pts, base):
            y = leaf_point(sys, p, leaf, t)
            worst = max(worst, float(np.linalg.norm(_section_values(section, y.coords[None, :])[0] - v)))
        stats.append(worst)
    beta, r2 = loglog_slope(scales, stats, floor=noise_floor)
    if beta is None:
        raise InsufficientSignal("section differences are below the noise floor at every scale")
    return beta, r2


# --- invariant splittings and exponents -------------------------------------------------

def _orbit_values(coc: Cocycle, x, start: int, count: int) -> np.ndarray:
    """Generator values at f^start x, ..., f^{start+count-1} x."""
    sys = coc.base
    p = step(sys, x, start)
    pts = orbit(sys, p.raw_array, count - 1, 1)
    return coc.at(raw_to_coords(pts))


def _start_frame(d: int) -> np.ndarray:
    # a fixed generic frame, so no start column lies in a proper invariant subspace
    rng = np.random.default_rng(np.random.SeedSequence(0, spawn_key=(53,)))
    return np.linalg.qr(rng.standard_normal((d, d)))[0]


def _image_frames(vals: np.ndarray, n_power: int):
    """Frames of the products vals[j+n-1] ... vals[j], for every admissible j.

    Batched QR power iteration.  Column r of each frame spans, together with
    the earlier columns, the image of the r+1 fastest directions; the
    second output holds the matching log stretches, fastest first.  Unlike
    an SVD of the normalised product this stays accurate however far apart
    the singular values drift.
    """
    count = len(vals) - n_power + 1
    d = vals.shape[1]
    Q = np.broadcast_to(_start_frame(d), (count, d, d)).copy()
    logs = np.zeros((count, d))
    for t in range(n_power):
        Q, R = np.linalg.qr(vals[t:t + count] @ Q)
        logs += np.log(np.abs(np.diagonal(R, axis1=1, axis2=2)))
    return Q, logs


def _source_frames(vals: np.ndarray, n_power: int):
    """Right singular frames of vals[j+n-1] ... vals[j], fastest first.

    The last r columns span the r-dimensional slow filtration member at the
    start of the window.
    """
    count = len(vals) - n_power + 1
    d = vals.shape[1]
    T = np.swapaxes(vals, 1, 2)
    Q = np.broadcast_to(_start_frame(d), (count, d, d)).copy()
    logs = np.zeros((count, d))
    for t in range(n_power - 1, -1, -1):
        Q, R = np.linalg.qr(T[t:t + count] @ Q)
        logs += np.log(np.abs(np.diagonal(R, axis1=1, axis2=2)))
    return Q, logs


def _group_cuts(logs: np.ndarray, gap: float) -> list:
    """Positions where consecutive stretches separate by a factor of at least ``gap``."""
    return [r for r in range(1, len(logs)) if logs[r - 1] - logs[r] >= np.log(gap)]


def _reference_groups(A: np.ndarray, rel: float = 1e-6):
    """Eigenvalue-modulus groups of a constant matrix, fastest first, with eigen-bases."""
    vals, vecs = np.linalg.eig(A)
    order = np.argsort(-np.abs(vals), kind="stable")
    groups, cur = [], [order[0]]
    for a, b in zip(order[:-1], order[1:]):
        if abs(abs(vals[a]) - abs(vals[b])) <= rel * abs(vals[a]):
            cur.append(b)
        else:
            groups.append(cur)
            cur = [b]
    groups.append(cur)
    out = []
    for g in groups:
        cols = []
        for i in g:
            cols.extend([vecs[:, i].real, vecs[:, i].imag] if abs(vals[i].imag) > 1e-12
                        else [vecs[:, i].real])
        basis, s, _ = np.linalg.svd(np.column_stack(cols), full_matrices=False)
        out.append((float(abs(vals[g[0]])), basis[:, s > 1e-10 * s[0]]))
    return out


def _intersect(Fa: np.ndarray, Sb: np.ndarray, dim: int, threshold: float) -> np.ndarray:
    qa, _ = np.linalg.qr(Fa)
    qb, _ = np.linalg.qr(Sb)
    u, s, _ = np.linalg.svd(qa.T @ qb)
    angles = np.arccos(np.clip(s, -1.0, 1.0))
    if np.sum(angles < threshold) < dim:
        raise GapTooSmall(f"filtrations intersect in fewer than {dim} dimensions "
                          f"(principal angles {angles})")
    return qa @ u[:, :dim]


def _splitting_from_frames(U_fast: np.ndarray, V_slow: np.ndarray, sizes, threshold) -> list:
    """E^1 (fastest) .. E^l (slowest) from the fast and slow filtration frames at x."""
    out = []
    acc = 0
    for size in sizes:
        out.append(_intersect(U_fast[:, : acc + size], V_slow[:, acc:], size, threshold))
        acc += size
    return out


@dataclass
class SplittingReport:
    """Invariant splitting of a perturbed cocycle at sampled points."""

    sizes: tuple
    subspaces: list
    invariance_residual: float
    reference_distance: float | None
    block_exponents: list
    reference_rates: list | None
    min_gap: float

    def rows(self, epsilon: float = 0.02, angle: float = 0.1) -> Report:
        rep = Report()
        rep.add(CheckRow("splitting_invariance", len(self.subspaces), self.invariance_residual,
                         None, "pass" if self.invariance_residual < 1e-6 else "fail"))
        if self.reference_distance is not None:
            rep.add(CheckRow("splitting_distance", len(self.subspaces), self.reference_distance,
                             None, "pass" if self.reference_distance < angle else "fail"))
        for g, exps in enumerate(self.block_exponents):
            if self.reference_rates is None:
                continue
            target = np.log(self.reference_rates[g])
            err = float(np.max(np.abs(np.asarray(exps) - target)))
            rep.add(CheckRow(f"block_{g + 1}_exponent", len(exps), err, float(np.mean(exps)),
                             "pass" if err < epsilon else "fail"))
        return rep


def invariant_splitting(B_coc: Cocycle, n_power: int = 40, samples: int = 8, seed: int = 0,
                        reference=None, gap: float = 2.0, exponent_steps: int = 2000,
                        angle_threshold: float = 1e-6) -> SplittingReport:
    """Dominated splitting of B by forward/backward power iteration.

    The fast filtration at x comes from the top left singular vectors of
    B^n_{f^{-n}x}, the slow one from the bottom right singular vectors of
    B^n_x; each E^i is the intersection of the matching members.  With a
    constant ``reference`` A the groups and target rates come from A's
    eigenvalue moduli, and GapTooSmall is raised if B's singular values do
    not separate those groups by ``gap``.  Block exponents are computed
    along ``exponent_steps`` orbit points from the restricted cocycle.
    """
    d = B_coc.dim
    ref = None if reference is None else _reference_groups(np.asarray(reference, dtype=float))
    pts = sample_points(B_coc.base, samples, seed, stream=37)
    subspaces, inv_res, dist, min_gap = [], 0.0, 0.0, np.inf
    sizes = None
    for x in pts:
        vals = _orbit_values(B_coc, x, -n_power, 2 * n_power + 1)
        U, ulogs = _image_frames(vals, n_power)
        V, vlogs = _source_frames(vals, n_power)
        if ref is not None:
            sizes = tuple(b.shape[1] for _, b in ref)
        elif sizes is None:
            cuts = _group_cuts(ulogs[0], gap)
            sizes = tuple(np.diff([0] + cuts + [d]).tolist())
        bounds = np.cumsum(sizes)[:-1]
        for lg in (ulogs[0], vlogs[n_power]):
            for r in bounds:
                ratio = float(np.exp(lg[r - 1] - lg[r]))
                min_gap = min(min_gap, ratio)
                if ratio < gap:
                    raise GapTooSmall(f"singular values separate groups only by {ratio:.3g} < {gap}")
        # window ending at x is vals[0:n], window starting at x is vals[n:2n]; same at fx
        E = _splitting_from_frames(U[0], V[n_power], sizes, angle_threshold)
        E_f = _splitting_from_frames(U[1], V[n_power + 1], sizes, angle_threshold)
        Bx = vals[n_power]
        for Ei, Efi in zip(E, E_f):
            inv_res = max(inv_res, float(np.max(principal_angles(Bx @ Ei, Efi))))
        if ref is not None:
            for Ei, (_, basis) in zip(E, ref):
                dist = max(dist, float(np.max(principal_angles(Ei, basis))))
        subspaces.append(E)
    exps = _block_exponents(B_coc, pts[0], sizes, n_power, exponent_steps, angle_threshold)
    return SplittingReport(sizes, subspaces, inv_res, dist if ref is not None else None, exps,
                           None if ref is None else [r for r, _ in ref], float(min_gap))


def _block_exponents(B_coc, x, sizes, n_power, n_steps, threshold) -> list:
    """Lyapunov spectrum of B restricted to each E^i along the orbit of x."""
    vals = _orbit_values(B_coc, x, -n_power, n_steps + 2 * n_power + 1)
    U, _ = _image_frames(vals, n_power)
    V, _ = _source_frames(vals, n_power)
    E_along = [_splitting_from_frames(U[k], V[k + n_power], sizes, threshold)
               for k in range(n_steps + 1)]
    out = []
    for g, size in enumerate(sizes):
        Q = np.eye(size)
        acc = np.zeros(size)
        for k in range(n_steps):
            Rk = E_along[k + 1][g].T @ vals[k + n_power] @ E_along[k][g]
            Q, R = np.linalg.qr(Rk @ Q)
            acc += np.log(np.abs(np.diag(R)))
        out.append(sorted((acc / n_steps).tolist(), reverse=True))
    return out


def _vector_exponent(coc: Cocycle, x, v: np.ndarray, n_steps: int, n_power: int,
                     gap: float, level_tol: float) -> float:
    """n^{-1} ln |A^n_x v| with v tracked inside its slow-filtration level.

    Plain iteration loses any slow component to rounding within a few dozen
    steps; projecting onto the smallest slow-filtration member containing v
    keeps the computation on the exact-arithmetic trajectory.
    """
    vals = _orbit_values(coc, x, 0, n_steps + n_power)
    V, logs = _source_frames(vals, n_power)
    d = len(v)
    cuts = _group_cuts(logs[0], gap)
    levels = sorted({d - r for r in cuts} | {d})
    u = v / np.linalg.norm(v)
    size = d
    for r in levels:
        basis = V[0][:, d - r:]
        if np.linalg.norm(u - basis @ (basis.T @ u)) <= level_tol:
            size = r
            break
    acc = 0.0
    for k in range(n_steps):
        u = vals[k] @ u
        if size < d:
            basis = V[k + 1][:, d - size:]
            u = basis @ (basis.T @ u)
        nrm = np.linalg.norm(u)
        acc += np.log(nrm)
        u = u / nrm
    return acc / n_steps


def exponent_match_check(A_coc: Cocycle, B_coc: Cocycle, C, x, n_steps: int = 10_000,
                         n_power: int = 40, gap: float = 2.0, level_tol: float = 1e-7,
                         limit: float = 5e-3) -> CheckRow:
    """Compare forward and backward exponents of u under A and of C(x)u under B.

    Uses the standard basis and the eigen-directions of the slow filtration
    of A at x, so both extremal and intermediate exponents are exercised.
    """
    from .cocycle import inverse_cocycle

    x = as_point(x)
    Cx = np.asarray(_section_values(C, x.coords[None, :])[0])
    d = A_coc.dim
    vecs = [np.eye(d)[:, i] for i in range(d)]
    worst = 0.0
    for direction, (Ac, Bc) in (("forward", (A_coc, B_coc)),
                                ("backward", (inverse_cocycle(A_coc), inverse_cocycle(B_coc)))):
        vals = _orbit_values(Ac, x, 0, n_power)
        V, _ = _source_frames(vals, n_power)
        candidates = vecs + [V[0][:, i] for i in range(d)]
        for u in candidates:
            ea = _vector_exponent(Ac, x, u, n_steps, n_power, gap, level_tol)
            eb = _vector_exponent(Bc, x, Cx @ u, n_steps, n_power, gap, level_tol)
            worst = max(worst, abs(ea - eb))
    return CheckRow("exponent_match", 2 * len(candidates), float(worst), None,
                    "pass" if worst < limit else "fail")
