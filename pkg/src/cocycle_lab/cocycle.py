"""Linear cocycles over a toral automorphism and certificates of their growth."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .base import HyperbolicAutomorphism, as_point, orbit, raw_to_coords, sample_points
from .errors import CocycleOverflow, Degenerate
from .fields import FunctionField

OVERFLOW = 1e300


@dataclass(frozen=True, eq=False)
class Cocycle:
    """A generator x -> A(x) in GL(d) over the base map f."""

    base: HyperbolicAutomorphism
    generator: object

    @property
    def dim(self) -> int:
        return self.generator.dimension

    def at(self, coords: np.ndarray) -> np.ndarray:
        return self.generator.evaluate_many(coords)

    def inv_at(self, coords: np.ndarray) -> np.ndarray:
        inv = getattr(self.generator, "inverse_many", None)
        if inv is not None:
            return inv(coords)
        return np.linalg.inv(self.generator.evaluate_many(coords))


def inverse_cocycle(coc: Cocycle) -> Cocycle:
    """The cocycle over f^{-1} generated by x -> A(f^{-1}x)^{-1}.

    Its n-th iterate at x is the (-n)-th iterate of ``coc`` at x.
    """
    Linv = coc.base.inverse_matrix.astype(float)
    gen = coc.generator
    return Cocycle(
        coc.base.inverse(),
        FunctionField(
            coc.dim,
            lambda c: coc.inv_at(c @ Linv.T),
            inverse_func=lambda c: gen.evaluate_many(c @ Linv.T),
        ),
    )


def check_overflow(M: np.ndarray) -> None:
    if not np.all(np.isfinite(M)) or np.abs(M).max() > OVERFLOW:
        raise CocycleOverflow("cocycle iterate exceeds 1e300; reduce n or rescale the generator")


def orbit_steps(coc: Cocycle, x, n: int) -> np.ndarray:
    """The |n| one-step matrices whose ordered product is A^n_x.

    Forward: A(x), A(fx), ...; backward: A(f^{-1}x)^{-1}, A(f^{-2}x)^{-1}, ...
    """
    x = as_point(x)
    if n >= 0:
        pts = orbit(coc.base, x, n, 1)[:-1]
        return coc.at(raw_to_coords(pts))
    pts = orbit(coc.base, x, -n, -1)[1:]
    return coc.inv_at(raw_to_coords(pts))


def iterate(coc: Cocycle, x, n: int) -> np.ndarray:
    """A^n_x = A(f^{n-1}x) ... A(x); for n < 0, (A^{-n}_{f^n x})^{-1}."""
    P = np.eye(coc.dim)
    if n == 0:
        return P
    with np.errstate(over="ignore", invalid="ignore"):
        for S in orbit_steps(coc, x, n):
            P = S @ P
            check_overflow(P)
    return P


def _running_products(steps: np.ndarray) -> np.ndarray:
    out = np.empty_like(steps)
    P = np.eye(steps.shape[1])
    with np.errstate(over="ignore", invalid="ignore"):
        for k, S in enumerate(steps):
            P = S @ P
            check_overflow(P)
            out[k] = P
    return out


def spectral_norms(Ms: np.ndarray) -> np.ndarray:
    return np.linalg.norm(Ms, ord=2, axis=(-2, -1))


def _inverse_norms(Ms: np.ndarray) -> np.ndarray:
    s = np.linalg.svd(Ms, compute_uv=False)
    return 1.0 / s[..., -1]


@dataclass
class GrowthReport:
    kind: str
    beta: float
    n_max: int
    sample_count: int
    theta_hat: float
    K_hat: float
    verdict: str
    degree_hat: float | None = None

    CSV_HEADER = ("kind", "beta", "n_max", "samples", "theta_hat", "K_hat", "verdict")

    def csv_row(self) -> tuple:
        return (self.kind, repr(self.beta), self.n_max, self.sample_count,
                repr(self.theta_hat), repr(self.K_hat), self.verdict)

    def as_dict(self) -> dict:
        return asdict(self)


GROWTH_KINDS = ("fiber_bunching", "dominated", "bounded", "quasiconformal")


def _sampled_norm_curves(coc: Cocycle, samples: int, seed: int, n_max: int, quantity):
    """quantity(products, direction) over sampled points, as (samples, 2, n_max) curves."""
    out = np.empty((samples, 2, n_max))
    for i, x in enumerate(sample_points(coc.base, samples, seed)):
        for j, sgn in enumerate((1, -1)):
            prods = _running_products(orbit_steps(coc, x, sgn * n_max))
            out[i, j] = quantity(prods)
    return out


def _stabilisation_verdict(running_sup: np.ndarray) -> str:
    n = len(running_sup)
    half = running_sup[n // 2 - 1]
    final = running_sup[-1]
    if (final - half) / half < 1e-3:
        return "pass"
    if final > 2.0 * half:
        return "fail"
    return "inconclusive"


def _upper_dyadic_slope(ns: np.ndarray, values: np.ndarray):
    """Least-squares slope and intercept of log values against log n on n >= n_max/4."""
    sel = ns >= ns[-1] / 4
    X = np.log(ns[sel])
    Y = np.log(values[sel])
    slope, intercept = np.polyfit(X, Y, 1)
    return float(slope), float(intercept)


def growth_report(coc: Cocycle, kind: str, beta: float = 1.0, n_max: int = 64,
                  samples: int = 8, seed: int = 0, margin: float = 0.02) -> GrowthReport:
    """Finite-range certificate for one of the growth hypotheses.

    Geometric kinds test, in both time directions,
      fiber_bunching: |A^n| |(A^n)^{-1}| r^{n beta}
      dominated:      |(A^n)^{-1}| r^{n beta}
    with r = nu forward and 1/nu_hat backward.  ``theta_hat`` is the largest
    n_max-th root at n = n_max and ``K_hat`` the smallest K with
    q_n <= K theta_hat^n on the sampled range.  A "fail" means the
    hypothesis fails on the tested range, not that it is disproved.
    """
    if kind not in GROWTH_KINDS:
        raise ValueError(f"unknown growth kind {kind!r}")
    if n_max < 16 or samples < 1:
        raise ValueError("growth_report needs n_max >= 16 and samples >= 1")
    if kind == "quasiconformal":
        return quasiconformal_distortion(coc, n_max, samples, seed)
    ns = np.arange(1, n_max + 1)

    if kind == "bounded":
        curves = _sampled_norm_curves(coc, samples, seed, n_max, spectral_norms)
        sup_curve = np.maximum.accumulate(np.maximum(curves.max(axis=(0, 1)), 1.0))
        return GrowthReport(kind, beta, n_max, samples, float(sup_curve[-1] ** (1.0 / n_max)),
                            float(sup_curve[-1]), _stabilisation_verdict(sup_curve))

    base = coc.base
    rates = (base.nu ** beta, base.nu_hat ** (-beta))
    worst_theta, worst_K = 0.0, 0.0
    for x in sample_points(base, samples, seed):
        for sgn, r in zip((1, -1), rates):
            prods = _running_products(orbit_steps(coc, x, sgn * n_max))
            q = _inverse_norms(prods) * r ** ns
            if kind == "fiber_bunching":
                q = q * spectral_norms(prods)
            theta = q[-1] ** (1.0 / n_max)
            worst_theta = max(worst_theta, theta)
            worst_K = max(worst_K, float(np.max(q / theta ** ns)))
    if worst_theta < 1.0 - margin:
        verdict = "pass"
    elif worst_theta > 1.0 + margin:
        verdict = "fail"
    else:
        verdict = "inconclusive"
    return GrowthReport(kind, beta, n_max, samples, float(worst_theta), worst_K, verdict)


def quasiconformal_distortion(coc: Cocycle, n_max: int = 64, samples: int = 8,
                              seed: int = 0) -> GrowthReport:
    """Sup over samples and |n| <= n_max of |A^n_x| |(A^n_x)^{-1}|.

    Passes when the running sup stops growing (relative increase < 1e-3 over
    the second half of the range).  ``degree_hat`` is the log-log slope of
    the running sup, which separates polynomial from geometric growth.
    """
    curves = _sampled_norm_curves(
        coc, samples, seed, n_max, lambda P: spectral_norms(P) * _inverse_norms(P))
    sup_curve = np.maximum.accumulate(np.maximum(curves.max(axis=(0, 1)), 1.0))
    ns = np.arange(1, n_max + 1)
    degree = 0.0 if sup_curve[-1] - 1.0 < 1e-12 else _upper_dyadic_slope(ns, sup_curve)[0]
    return GrowthReport("quasiconformal", 1.0, n_max, samples,
                        float(sup_curve[-1] ** (1.0 / n_max)), float(sup_curve[-1]),
                        _stabilisation_verdict(sup_curve), degree_hat=degree)


def lyapunov_spectrum(coc: Cocycle, x, n_steps: int = 10_000, qr_period: int = 1,
                      burn_in: int | None = None) -> list:
    """All Lyapunov exponents at x by QR re-orthonormalisation, descending.

    ``burn_in`` steps (default n_steps // 10) align the frame before
    accumulation starts; the logs of |R_ii| over the next ``n_steps`` steps
    are averaged.
    """
    if n_steps < 1000 or qr_period < 1:
        raise ValueError("lyapunov_spectrum needs n_steps >= 1000 and qr_period >= 1")
    burn_in = n_steps // 10 if burn_in is None else int(burn_in)
    d = coc.dim
    total = burn_in + n_steps
    Q = np.eye(d)
    acc = np.zeros(d)
    pos = as_point(x).raw_array
    chunk = 512
    done = 0
    M = Q
    since_qr = 0
    while done < total:
        m = min(chunk, total - done)
        pts = orbit(coc.base, pos, m, 1)
        pos = pts[-1]
        mats = coc.at(raw_to_coords(pts[:-1]))
        for k in range(m):
            M = mats[k] @ M
            since_qr += 1
            step_index = done + k + 1
            if since_qr == qr_period or step_index == burn_in or step_index == total:
                Q, R = np.linalg.qr(M)
                diag = np.abs(np.diag(R))
                if np.any(diag == 0.0):
                    raise Degenerate("zero diagonal in QR factor; the cocycle is singular")
                if step_index > burn_in:
                    acc += np.log(diag)
                M = Q
                since_qr = 0
        done += m
    return sorted((acc / n_steps).tolist(), reverse=True)


def polynomial_growth_degree(coc: Cocycle, psi, n_max: int = 256, samples: int = 8,
                             seed: int = 0):
    """Degree of polynomial growth of |(psi A)^n_x|, in both time directions.

    Returns ``(degree_hat, c_hat)``: the largest log-log slope over the upper
    dyadic range among samples, and exp of that fit's intercept.
    """
    if n_max < 64:
        raise ValueError("polynomial_growth_degree needs n_max >= 64")
    scaled = Cocycle(coc.base, FunctionField(
        coc.dim, lambda c: psi.evaluate_many(c).reshape(-1, 1, 1) * coc.at(c)))
    ns = np.arange(1, n_max + 1)
    best = (-np.inf, 0.0)
    for x in sample_points(coc.base, samples, seed):
        for sgn in (1, -1):
            norms = spectral_norms(_running_products(orbit_steps(scaled, x, sgn * n_max)))
            if np.max(np.abs(np.log(norms))) < 1e-12:
                slope, intercept = 0.0, 0.0
            else:
                slope, intercept = _upper_dyadic_slope(ns, norms)
            if slope > best[0]:
                best = (slope, intercept)
    return best[0], float(np.exp(best[1]))
