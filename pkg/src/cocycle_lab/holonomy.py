"""Stable/unstable holonomies, twisted trajectory sums and twisted holonomies.

All limits along a leaf are computed by one routine, ``_walk``.  Given a
base point p and a point q on its local leaf it follows both orbits in the
contracting time direction (forward for stable leaves, backward for
unstable ones) and accumulates

    G_n = (P_n)^{-1} Q_n            -> H_{q,p}
    D_n = S^p_n - G_n S^q_n         -> twisted offset Phi_{q,p}

where P_n, Q_n are the cocycle iterates along the two orbits and S_n the
twisted trajectory sums.  The orbit of q is computed as p's exact orbit
plus the exactly contracted leaf displacement, so no rounding error grows
along the expanding direction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import (
    LeafSelector,
    as_point,
    fixed_point,
    leaf_coordinate,
    leaf_point,
    orbit,
    raw_to_coords,
    sample_points,
    stable_unstable_path,
    step,
)
from .cocycle import Cocycle, check_overflow, iterate
from .errors import NoConvergence
from .reports import PropertyRow, Report, loglog_slope

CHUNK = 32
RATIO = 0.95
BUNCHING_SLACK = 1.02
# walks always run this far so the fiber-bunching check sees enough of the orbit
MIN_WALK = 16
DEFAULT_TOL = 1e-10
DEFAULT_N_MAX = 2000


class _Monitor:
    """Geometric-decay stopping rule for a sequence of increment norms.

    Stops once three consecutive ratios are below 0.95 and the increment and
    its geometric tail bound are both below ``tol``, or once the increment
    has sat at the rounding floor for three steps.
    """

    def __init__(self, tol: float):
        self.tol = tol
        self.history = []
        self.floor_run = 0
        self.residual = np.inf

    def update(self, inc: float, floor: float) -> bool:
        self.residual = inc
        if inc <= floor:
            self.floor_run += 1
            return self.floor_run >= 3
        self.floor_run = 0
        h = self.history
        h.append(inc)
        if len(h) < 4 or inc >= self.tol:
            return False
        r = max(h[-1] / h[-2], h[-2] / h[-3], h[-3] / h[-4])
        return r < RATIO and inc * r / (1.0 - r) < self.tol


def _stream(section, direction: int):
    """Evaluator for consecutive orbit points; sections may supply their own."""
    maker = getattr(section, "stream", None)
    if maker is not None:
        return maker(direction)
    return section.evaluate_many


@dataclass
class _WalkResult:
    linear: np.ndarray
    offset: np.ndarray | None
    n_used: int
    residual: float


def _walk(coc: Cocycle, p, q, kind: str, tol: float, n_max: int, beta: float = 1.0,
          min_steps: int = 0, phi=None, radius: float | None = None) -> _WalkResult:
    sys = coc.base
    p, q = as_point(p), as_point(q)
    d = coc.dim
    twisted = phi is not None
    if p == q:
        return _WalkResult(np.eye(d), np.zeros(d) if twisted else None, 0, 0.0)
    w = leaf_coordinate(sys, p, q, kind, radius)
    B = sys.basis(kind)
    M = sys.stable_block if kind == "stable" else np.linalg.inv(sys.unstable_block)
    direction = 1 if kind == "stable" else -1
    rate = sys.rate(kind) ** beta

    I = np.eye(d)
    Pm, Pinv, Q, Qinv, G = I, I, I, I, I
    SP, SQ, D = np.zeros(d), np.zeros(d), np.zeros(d)
    if twisted:
        stream_p, stream_q = _stream(phi, direction), _stream(phi, direction)
        last_p = last_q = None
    monitor = _Monitor(tol)
    pos = p.raw_array
    v = np.asarray(w, dtype=float)
    k = 0
    while k < n_max:
        m = min(CHUNK, n_max - k)
        raw = orbit(sys, pos, m, direction)
        pos = raw[-1]
        vs = [v]
        for _ in range(m):
            vs.append(M @ vs[-1])
        v = vs[-1]
        pc = raw_to_coords(raw)
        qc = pc + np.array(vs) @ B.T
        if direction > 0:
            Sp, Sp_inv = coc.at(pc[:-1]), coc.inv_at(pc[:-1])
            Sq, Sq_inv = coc.at(qc[:-1]), coc.inv_at(qc[:-1])
        else:
            Sp, Sp_inv = coc.inv_at(pc[1:]), coc.at(pc[1:])
            Sq, Sq_inv = coc.inv_at(qc[1:]), coc.at(qc[1:])
        if twisted:
            if last_p is None:
                php, phq = stream_p(pc), stream_q(qc)
            else:
                php = np.vstack([last_p, stream_p(pc[1:])])
                phq = np.vstack([last_q, stream_q(qc[1:])])
            last_p, last_q = php[-1:], phq[-1:]
        for j in range(m):
            dG = Pinv @ (Sp_inv[j] @ Sq[j] - I) @ Q
            if twisted and direction > 0:
                tP, tQ = Pinv @ php[j], Qinv @ phq[j]
            Pm = Sp[j] @ Pm
            Pinv = Pinv @ Sp_inv[j]
            Q = Sq[j] @ Q
            Qinv = Qinv @ Sq_inv[j]
            G = G + dG
            k += 1
            scale = np.linalg.norm(Pinv) * np.linalg.norm(Q)
            inc = np.linalg.norm(dG)
            floor = 1e-15 * scale
            if twisted:
                if direction < 0:
                    tP, tQ = -(Pinv @ php[j + 1]), -(Qinv @ phq[j + 1])
                SP = SP + tP
                SQ = SQ + tQ
                newD = SP - G @ SQ
                inc = max(inc, np.linalg.norm(newD - D))
                D = newD
                floor = 1e-15 * (scale * (1.0 + np.linalg.norm(SQ))
                                 + np.linalg.norm(tP) + np.linalg.norm(G) * np.linalg.norm(tQ))
            if k % CHUNK == MIN_WALK:
                check_overflow(Pm)
                check_overflow(Q)
                bunch = (np.linalg.norm(Pm, 2) * np.linalg.norm(Pinv, 2) * rate**k) ** (1.0 / k)
                if bunch > BUNCHING_SLACK:
                    raise NoConvergence(
                        f"fiber bunching fails along the orbit (rate {bunch:.3f} > 1 at n={k}); "
                        "holonomies need a fiber-bunched cocycle", n_max=n_max)
            if monitor.update(inc, floor) and k >= max(min_steps, MIN_WALK):
                return _WalkResult(G, D if twisted else None, k, float(monitor.residual))
    raise NoConvergence(
        f"increments did not decay geometrically below {tol:g} within n_max={n_max} "
        f"(last increment {monitor.residual:.3g})", n_max=n_max)


@dataclass(frozen=True, eq=False)
class HolonomyMap:
    """The linear map H_{source,target} between fibers on one local leaf."""

    source: object
    target: object
    matrix: np.ndarray
    leaf: LeafSelector
    n_used: int
    residual: float

    def apply(self, v) -> np.ndarray:
        return self.matrix @ np.asarray(v, dtype=float)


def holonomy(coc: Cocycle, x, y, kind: str = "stable", tol: float = DEFAULT_TOL,
             n_max: int = DEFAULT_N_MAX, beta: float = 1.0, min_steps: int = 0,
             radius: float | None = None) -> HolonomyMap:
    """H_{x,y} = lim (A^n_y)^{-1} A^n_x, with n -> -n for unstable leaves.

    Raises NoConvergence when the increments do not decay, in particular
    when the cocycle visibly fails fiber bunching along the orbit, and
    LeafMismatch when y is not on the local leaf of x.
    """
    x, y = as_point(x), as_point(y)
    r = _walk(coc, y, x, kind, tol, n_max, beta, min_steps, radius=radius)
    return HolonomyMap(x, y, r.linear, LeafSelector(kind), r.n_used, r.residual)


def stable_holonomy(coc: Cocycle, x, y, tol: float = DEFAULT_TOL, n_max: int = DEFAULT_N_MAX,
                    **kwargs) -> HolonomyMap:
    return holonomy(coc, x, y, "stable", tol, n_max, **kwargs)


def unstable_holonomy(coc: Cocycle, x, y, tol: float = DEFAULT_TOL, n_max: int = DEFAULT_N_MAX,
                      **kwargs) -> HolonomyMap:
    return holonomy(coc, x, y, "unstable", tol, n_max, **kwargs)


def _other_kind(kind: str) -> str:
    return "unstable" if kind == "stable" else "stable"


def holonomy_property_suite(coc: Cocycle, samples: int = 50, tol: float = DEFAULT_TOL,
                            seed: int = 0, kind: str = "stable", beta: float = 1.0,
                            n_max: int = DEFAULT_N_MAX, t_max: float = 0.15,
                            scales=(0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625),
                            equivariance_steps: int = 5) -> Report:
    """Composition, equivariance, Hölder and uniqueness checks on sampled leaf triples.

    Residuals pass below 10 tol; the Hölder row passes when the log-log
    slope of max ||H_{x,y} - Id|| against leaf distance is at least beta - 0.1.
    """
    sys = coc.base
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(11,)))
    pts = sample_points(sys, samples, seed, stream=3)
    ts = rng.uniform(-t_max, t_max, size=(samples, 2))
    leaf = LeafSelector(kind)
    sgn = 1 if kind == "stable" else -1
    d = coc.dim
    kw = dict(tol=tol, n_max=n_max, beta=beta)
    comp = equi = ident = uniq = 0.0
    for x, (t1, t2) in zip(pts, ts):
        y, z = leaf_point(sys, x, leaf, t1), leaf_point(sys, x, leaf, t2)
        Hxy = holonomy(coc, x, y, kind, **kw)
        Hyz = holonomy(coc, y, z, kind, **kw)
        Hxz = holonomy(coc, x, z, kind, **kw)
        ident = max(ident, np.linalg.norm(holonomy(coc, x, x, kind, **kw).matrix - np.eye(d)))
        comp = max(comp, np.linalg.norm(Hyz.matrix @ Hxy.matrix - Hxz.matrix, 2))
        for n in range(1, equivariance_steps + 1):
            fx, fy = step(sys, x, sgn * n), step(sys, y, sgn * n)
            Hn = holonomy(coc, fx, fy, kind, **kw).matrix
            An_x, An_y = iterate(coc, x, sgn * n), iterate(coc, y, sgn * n)
            rhs = np.linalg.solve(An_y, Hn @ An_x)
            equi = max(equi, np.linalg.norm(Hxy.matrix - rhs, 2))
        longer = holonomy(coc, x, y, kind, min_steps=Hxy.n_used + 20, **kw)
        uniq = max(uniq, np.linalg.norm(longer.matrix - Hxy.matrix, 2))

    stats = []
    for t in scales:
        worst = 0.0
        for x in pts:
            y = leaf_point(sys, x, leaf, t)
            worst = max(worst, np.linalg.norm(holonomy(coc, x, y, kind, **kw).matrix - np.eye(d), 2))
        stats.append(worst)
    slope, _ = loglog_slope(scales, stats, floor=1e-13)

    def verdict(res):
        return "pass" if res < 10 * tol else "fail"

    report = Report()
    report.add(PropertyRow("H2_identity", samples, float(ident), None, n_max, verdict(ident)))
    report.add(PropertyRow("H2_composition", samples, float(comp), None, n_max, verdict(comp)))
    report.add(PropertyRow("H3_equivariance", samples, float(equi), None, n_max, verdict(equi)))
    if slope is None:
        report.add(PropertyRow("H4_holder", samples, float(max(stats)), None, n_max, "skipped"))
    else:
        report.add(PropertyRow("H4_holder", samples, float(max(stats)), slope, n_max,
                               "pass" if slope >= beta - 0.1 else "fail"))
    report.add(PropertyRow("uniqueness", samples, float(uniq), None, n_max, verdict(uniq)))
    return report


def trajectory_sum(twist: Cocycle, phi, x, n: int, history: bool = False):
    """Phi^n(x) = sum_{k<n} (F^k_x)^{-1} phi(f^k x).

    With ``history`` returns all partial sums Phi^0 .. Phi^n as an (n+1, d) array.
    """
    if n < 0:
        raise ValueError("trajectory_sum needs n >= 0")
    d = twist.dim
    out = np.zeros((n + 1, d))
    Finv = np.eye(d)
    total = np.zeros(d)
    pos = as_point(x).raw_array
    stream = _stream(phi, 1)
    k = 0
    while k < n:
        m = min(512, n - k)
        raw = orbit(twist.base, pos, m, 1)
        pos = raw[-1]
        c = raw_to_coords(raw[:-1])
        inv = twist.inv_at(c)
        vals = stream(c)
        for j in range(m):
            total = total + Finv @ vals[j]
            Finv = Finv @ inv[j]
            k += 1
            out[k] = total
        check_overflow(Finv)
    return out if history else out[n]


@dataclass(frozen=True, eq=False)
class TwistedHolonomy:
    """The affine fiber map v -> H_{x,y} v + Phi_{x,y}."""

    linear: HolonomyMap
    offset: np.ndarray

    def apply(self, v) -> np.ndarray:
        return self.linear.apply(v) + self.offset


def twisted_holonomy(twist: Cocycle, phi, x, y, kind: str = "stable", tol: float = DEFAULT_TOL,
                     n_max: int = DEFAULT_N_MAX, beta: float = 1.0,
                     radius: float | None = None) -> TwistedHolonomy:
    x, y = as_point(x), as_point(y)
    r = _walk(twist, y, x, kind, tol, n_max, beta, phi=phi, radius=radius)
    lin = HolonomyMap(x, y, r.linear, LeafSelector(kind), r.n_used, r.residual)
    return TwistedHolonomy(lin, r.offset)


def twisted_difference(twist: Cocycle, phi, x, y, tol: float = DEFAULT_TOL,
                       n_max: int = DEFAULT_N_MAX, kind: str = "stable",
                       beta: float = 1.0) -> np.ndarray:
    """Phi_{y,x} = lim (Phi^n(x) - H_{y,x} Phi^n(y)), a vector in the fiber at x.

    For unstable leaves the sums run backward:
    Phi^{-n}(x) = -sum_{k=1..n} (F^{-k}_x)^{-1} phi(f^{-k} x).
    """
    return _walk(twist, x, y, kind, tol, n_max, beta, phi=phi).offset


def twisted_holonomy_apply(twist: Cocycle, phi, x, y, v, tol: float = DEFAULT_TOL,
                           kind: str = "stable", n_max: int = DEFAULT_N_MAX) -> np.ndarray:
    return twisted_holonomy(twist, phi, x, y, kind, tol, n_max).apply(v)


def _series_solve(twist: Cocycle, phi, x, tol: float, n_max: int) -> np.ndarray:
    d = twist.dim
    Finv = np.eye(d)
    total = np.zeros(d)
    monitor = _Monitor(tol)
    pos = as_point(x).raw_array
    stream = _stream(phi, 1)
    k = 0
    while k < n_max:
        m = min(CHUNK, n_max - k)
        raw = orbit(twist.base, pos, m, 1)
        pos = raw[-1]
        c = raw_to_coords(raw[:-1])
        inv = twist.inv_at(c)
        vals = stream(c)
        for j in range(m):
            term = Finv @ vals[j]
            total = total + term
            Finv = Finv @ inv[j]
            k += 1
            if monitor.update(float(np.linalg.norm(term)), 1e-16 * np.linalg.norm(total)):
                return total
        check_overflow(Finv)
    raise NoConvergence(
        f"partial sums did not settle within n_max={n_max} (last term {monitor.residual:.3g})",
        n_max=n_max)


def fixed_point_value(twist: Cocycle, phi, tol: float = DEFAULT_TOL) -> np.ndarray:
    """eta(0) at the fixed point 0 from (Id - F_0^{-1}) eta(0) = phi(0).

    Least squares picks the minimal-norm value when the system is singular;
    an inconsistent system is a periodic obstruction.
    """
    z = raw_to_coords(fixed_point(twist.base).raw_array)[None, :]
    A = np.eye(twist.dim) - twist.inv_at(z)[0]
    b = phi.evaluate_many(z)[0]
    eta0 = np.linalg.lstsq(A, b, rcond=1e-12)[0]
    if np.linalg.norm(A @ eta0 - b) > 10 * tol * max(1.0, np.linalg.norm(b)):
        raise NoConvergence("phi has a nonzero obstruction at the fixed point 0; "
                            "the twisted equation has no solution")
    return eta0


def _holonomy_solve(twist: Cocycle, phi, x, tol: float, n_max: int, beta: float,
                    eta0: np.ndarray | None = None) -> np.ndarray:
    sys = twist.base
    v = fixed_point_value(twist, phi, tol) if eta0 is None else eta0
    for kind, a, b in stable_unstable_path(sys, fixed_point(sys), as_point(x)):
        v = twisted_holonomy(twist, phi, a, b, kind, tol, n_max, beta).apply(v)
    return v


def inverse_contraction_rate(twist: Cocycle, x, n: int = 16) -> float:
    """||(F^n_x)^{-1}||^{1/n}; below 1 the forward series converges geometrically."""
    return float(np.linalg.norm(np.linalg.inv(iterate(twist, x, n)), 2) ** (1.0 / n))


def solve_twisted_coboundary(twist: Cocycle, phi, x, tol: float = DEFAULT_TOL,
                             n_max: int = DEFAULT_N_MAX, method: str = "auto",
                             beta: float = 1.0) -> np.ndarray:
    """Continuous solution eta(x) of eta(x) = phi(x) + F_x^{-1} eta(fx).

    ``series`` sums eta = lim Phi^n(x); it converges when (F^n)^{-1} decays.
    ``holonomy`` handles bounded twists, where the series does not converge:
    it solves at the fixed point 0 and transports that value to x along a
    stable-then-unstable path with twisted holonomies, which the solution
    is invariant under.  ``auto`` picks ``series`` when
    ||(F^16_x)^{-1}||^{1/16} < 0.95.
    """
    if method == "auto":
        method = "series" if inverse_contraction_rate(twist, x) < RATIO else "holonomy"
    if method == "series":
        return _series_solve(twist, phi, x, tol, n_max)
    if method == "holonomy":
        return _holonomy_solve(twist, phi, x, tol, n_max, beta)
    raise ValueError(f"unknown method {method!r}")


def coboundary_residual(twist: Cocycle, phi, x, eta_x, eta_fx) -> float:
    """||phi(x) - eta(x) + F_x^{-1} eta(fx)||."""
    c = as_point(x).coords[None, :]
    return float(np.linalg.norm(phi.evaluate_many(c)[0] - eta_x + twist.inv_at(c)[0] @ eta_fx))


def twisted_invariance_residual(twist: Cocycle, phi, eta_solver, samples: int = 30,
                                tol: float = DEFAULT_TOL, seed: int = 0, kind: str = "stable",
                                beta: float = 1.0, t_max: float = 0.3,
                                scales=(0.1, 0.03, 0.01, 0.003, 0.001),
                                holder_samples: int = 8) -> Report:
    """Max ||eta(y) - H_{x,y}(eta(x))|| over sampled leaf pairs, plus eta's Hölder slope."""
    sys = twist.base
    leaf = LeafSelector(kind)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(13,)))
    pts = sample_points(sys, samples, seed, stream=5)
    ts = rng.uniform(0.02, t_max, samples) * rng.choice([-1.0, 1.0], samples)
    worst = 0.0
    for x, t in zip(pts, ts):
        y = leaf_point(sys, x, leaf, t)
        h = twisted_holonomy(twist, phi, x, y, kind, tol, beta=beta)
        worst = max(worst, float(np.linalg.norm(eta_solver(y) - h.apply(eta_solver(x)))))
    base_vals = [eta_solver(x) for x in pts[:holder_samples]]
    stats = []
    for t in scales:
        stats.append(max(float(np.linalg.norm(eta_solver(leaf_point(sys, x, leaf, t)) - ex))
                         for x, ex in zip(pts[:holder_samples], base_vals)))
    slope, _ = loglog_slope(scales, stats, floor=1e-13)
    report = Report()
    report.add(PropertyRow("twisted_invariance", samples, worst, None, DEFAULT_N_MAX,
                           "pass" if worst < 10 * tol else "fail"))
    if slope is None:
        report.add(PropertyRow("eta_holder", holder_samples, max(stats), None, DEFAULT_N_MAX,
                               "skipped"))
    else:
        report.add(PropertyRow("eta_holder", holder_samples, max(stats), slope, DEFAULT_N_MAX,
                               "pass" if slope >= beta - 0.1 else "fail"))
    return report
