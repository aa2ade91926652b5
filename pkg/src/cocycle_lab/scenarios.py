"""Reproducible experiments built from the library.

Each scenario takes a validated ScenarioConfig and returns a
ScenarioResult: named CSV tables plus the names of failed checks.  Nothing
time- or host-dependent goes into the tables, so serial reruns are
byte-identical.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .base import STABLE, lattice_points, raw_to_coords, sample_points, step
from .cocycle import Cocycle, growth_report
from .config import ScenarioConfig, trig_section
from .conjugacy import (
    FlagField,
    block_decompose,
    conjugacy_residual,
    exponent_match_check,
    holder_exponent_estimate,
    inductive_block_solve,
    intertwining_residual,
    invariant_splitting,
    jordan_flag,
    oracle_diagonal_blocks,
)
from .errors import ConfigError
from .fields import FunctionField, MatrixField, rotation
from .holonomy import (
    coboundary_residual,
    holonomy_property_suite,
    solve_twisted_coboundary,
    twisted_invariance_residual,
)
from .reports import CheckRow, Report, csv_text


@dataclass
class Table:
    header: tuple
    rows: list

    def csv(self) -> str:
        return csv_text(self.header, self.rows)


@dataclass
class ScenarioResult:
    scenario: str
    tables: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def verdict(self) -> str:
        return "fail" if self.failures else "pass"

    def add_report(self, name: str, report: Report) -> None:
        self.tables[name] = Table(report.rows[0].HEADER, [r.row() for r in report.rows])
        for r in report.rows:
            if r.verdict == "fail":
                self.failures.append(getattr(r, "check", None) or r.property)


def _leaf(cfg: ScenarioConfig) -> str:
    kind = cfg.params.get("leaf", "stable")
    if kind not in ("stable", "unstable"):
        raise ConfigError("leaf must be 'stable' or 'unstable'", "params.leaf")
    return kind


def conjugated_cocycle(A: Cocycle, C0) -> Cocycle:
    """The cocycle B_x = C0(fx) A_x C0(x)^{-1}, with its exact inverse."""
    L = A.base.matrix.T.astype(float)

    def gen(c):
        return C0.evaluate_many(c @ L.T) @ A.at(c) @ C0.inverse_many(c)

    def inv(c):
        return C0.evaluate_many(c) @ A.inv_at(c) @ C0.inverse_many(c @ L.T)

    return Cocycle(A.base, FunctionField(A.dim, gen, inv))


# --- holonomy-verify -----------------------------------------------------------------------

def run_holonomy_verify(cfg: ScenarioConfig) -> ScenarioResult:
    res = ScenarioResult("holonomy-verify")
    coc = Cocycle(cfg.base, cfg.generator("cocycle"))
    g = growth_report(coc, "fiber_bunching", cfg.beta, n_max=cfg.n_max.get("growth", 64),
                      samples=cfg.samples.get("growth", 8), seed=cfg.seed)
    res.tables["growth"] = Table(g.CSV_HEADER, [g.csv_row()])
    if g.verdict == "fail":
        res.failures.append("fiber_bunching")
    suite = holonomy_property_suite(coc, samples=cfg.samples.get("triples", 50),
                                    tol=cfg.tolerances.get("holonomy", 1e-10), seed=cfg.seed,
                                    kind=_leaf(cfg), beta=cfg.beta,
                                    n_max=cfg.n_max.get("holonomy", 2000))
    res.add_report("holonomy", suite)
    return res


# --- twist-verify --------------------------------------------------------------------------

def _twist_phi(cfg: ScenarioConfig, twist: Cocycle):
    """(phi, known solution or None) from params.phi."""
    spec = cfg.params.get("phi")
    if not isinstance(spec, dict):
        raise ConfigError("expected an object", "params.phi")
    kind = spec.get("kind")
    if kind == "trig":
        return trig_section(spec.get("section"), "params.phi.section"), None
    if kind == "coboundary":
        eta = trig_section(spec.get("eta"), "params.phi.eta")
        if eta.dimension != twist.dim:
            raise ConfigError(f"dimension {eta.dimension} != twist dimension {twist.dim}",
                              "params.phi.eta.dimension")
        L = twist.base.matrix.T.astype(float)

        # phi = eta - F^{-1} (eta o f) has eta as its solution
        def phi(c):
            return eta.evaluate_many(c) - np.einsum(
                "nij,nj->ni", twist.inv_at(c), eta.evaluate_many(c @ L.T))

        return FunctionField(twist.dim, phi), eta
    raise ConfigError(f"unknown phi kind {kind!r}", "params.phi.kind")


def run_twist_verify(cfg: ScenarioConfig) -> ScenarioResult:
    res = ScenarioResult("twist-verify")
    twist = Cocycle(cfg.base, cfg.generator("twist"))
    phi, eta = _twist_phi(cfg, twist)
    tol = cfg.tolerances.get("holonomy", 1e-10)
    n_max = cfg.n_max.get("holonomy", 2000)
    limit = cfg.tolerances.get("coboundary", 1e-9)

    def solver(p):
        return solve_twisted_coboundary(twist, phi, p, tol, n_max, beta=cfg.beta)

    pts = sample_points(cfg.base, cfg.samples.get("points", 30), cfg.seed, stream=41)
    worst, err = 0.0, 0.0
    for x in pts:
        ex, efx = solver(x), solver(step(cfg.base, x, 1))
        worst = max(worst, coboundary_residual(twist, phi, x, ex, efx))
        if eta is not None:
            err = max(err, float(np.linalg.norm(ex - eta.evaluate(x))))
    rep = Report()
    rep.add(CheckRow("coboundary", len(pts), worst, None, "pass" if worst < limit else "fail"))
    if eta is not None:
        rep.add(CheckRow("known_solution", len(pts), err, None,
                         "pass" if err < limit else "fail"))
    res.add_report("coboundary", rep)
    inv = twisted_invariance_residual(twist, phi, solver, samples=cfg.samples.get("pairs", 30),
                                      tol=tol, seed=cfg.seed, kind=_leaf(cfg), beta=cfg.beta)
    res.add_report("invariance", inv)
    return res


# --- one-exponent --------------------------------------------------------------------------

def one_exponent_matrix(params: dict) -> np.ndarray:
    """rho * (rotation(angle) + Jordan block of size ``jordan``), block diagonal."""
    if "matrix" in params:
        return np.asarray(params["matrix"], dtype=float)
    rho = float(params.get("rho", 1.05))
    angle = float(params.get("angle", 0.9))
    size = int(params.get("jordan", 1))
    J = np.eye(size) + np.eye(size, k=1)
    A = np.zeros((2 + size, 2 + size))
    A[:2, :2] = rotation(angle)
    A[2:, 2:] = J
    return rho * A


def run_one_exponent(cfg: ScenarioConfig) -> ScenarioResult:
    res = ScenarioResult("one-exponent")
    A = one_exponent_matrix(cfg.params)
    C0 = cfg.generator("C0")
    if C0.dimension != A.shape[0]:
        raise ConfigError(f"C0 has dimension {C0.dimension}, A has {A.shape[0]}", "params.C0")
    sys = cfg.base
    A_coc = Cocycle(sys, MatrixField.constant(A))
    B_coc = conjugated_cocycle(A_coc, C0)
    tol = cfg.tolerances.get("holonomy", 1e-10)

    flag, rho = jordan_flag(A)
    flag_B = FlagField(flag.dimensions, lambda c: C0.evaluate_many(c) @ flag.frame, flag.metric)
    DA = block_decompose(A_coc, flag, flag.metric, seed=cfg.seed)
    DB = block_decompose(B_coc, flag_B, flag.metric, seed=cfg.seed)
    diag = oracle_diagonal_blocks(C0, DA, DB)
    C = inductive_block_solve(A_coc, B_coc, flag, flag_B, diag, tol=tol,
                              n_max=cfg.n_max.get("holonomy", 2000), metric=flag.metric)

    rep = Report()
    tri = max(DA.triangularity_residual, DB.triangularity_residual)
    rep.add(CheckRow("flag_invariance", 32, tri, float(flag.k), "pass" if tri < 1e-8 else "fail"))
    # fresh samples: a stream no construction step uses
    rep.add(conjugacy_residual(A_coc, B_coc, C, samples=cfg.samples.get("conjugacy", 30),
                               seed=cfg.seed, stream=59, tol=tol,
                               limit=cfg.tolerances.get("conjugacy", 1e-8)))
    rep.add(intertwining_residual(A_coc, B_coc, C, samples=cfg.samples.get("intertwining", 20),
                                  tol=tol, seed=cfg.seed + 1,
                                  limit=cfg.tolerances.get("intertwining", 1e-7)))
    beta_hat, r2 = holder_exponent_estimate(C, sys, STABLE,
                                            x_samples=cfg.samples.get("holder", 8), seed=cfg.seed)
    rep.add(CheckRow("holder", cfg.samples.get("holder", 8), 1.0 - r2, beta_hat,
                     "pass" if beta_hat >= cfg.beta - 0.1 else "fail"))
    x = sample_points(sys, 1, cfg.seed, stream=61)[0]
    rep.add(exponent_match_check(A_coc, B_coc, C0, x, n_steps=cfg.n_max.get("exponents", 2000)))
    res.add_report("conjugacy", rep)
    return res


# --- perturbation --------------------------------------------------------------------------

def run_perturbation(cfg: ScenarioConfig) -> ScenarioResult:
    res = ScenarioResult("perturbation")
    B = cfg.generator("B")
    ref = cfg.params.get("reference")
    if ref is not None:
        ref = np.asarray(ref, dtype=float)
        if ref.shape != (B.dimension, B.dimension):
            raise ConfigError(f"reference must be {B.dimension}x{B.dimension}",
                              "params.reference")
    rep = invariant_splitting(Cocycle(cfg.base, B), n_power=cfg.n_max.get("power", 40),
                              samples=cfg.samples.get("points", 8), seed=cfg.seed,
                              reference=ref, exponent_steps=cfg.n_max.get("exponents", 2000))
    res.add_report("splitting", rep.rows(epsilon=cfg.tolerances.get("exponent", 0.02),
                                         angle=cfg.tolerances.get("angle", 0.1)))
    return res


# --- pw-demo -------------------------------------------------------------------------------

def pw_functions(alpha: float, epsilon: float):
    """a(x) = exp(alpha + epsilon cos 2 pi x_1) and b(x) = sin 2 pi x_1."""
    def a(c):
        return np.exp(alpha + epsilon * np.cos(2 * np.pi * c[:, 0]))

    def b(c):
        return np.sin(2 * np.pi * c[:, 0])

    return a, b


def pw_partial_sums(sys, raw: np.ndarray, a, b, n: int):
    """Terms of c(x) = -sum_{n>=1} a(f^{-1}x) ... a(f^{-n+1}x) b(f^{-n}x).

    ``raw`` is an (N, m) uint64 array of points.  Returns the (n, N) array
    of terms; their cumulative sums are the partial sums.
    """
    Minv = sys.inverse_u64
    z = raw.astype(np.uint64)
    prod = np.ones(len(z))
    terms = np.empty((n, len(z)))
    for k in range(n):
        z = z @ Minv.T
        c = raw_to_coords(z)
        terms[k] = -prod * b(c)
        prod = prod * a(c)
    return terms


def _converged(terms: np.ndarray, n: int, tol: float, window: int = 10) -> np.ndarray:
    return np.max(np.abs(terms[n - window:n]), axis=0) < tol


def run_pw_demo(cfg: ScenarioConfig) -> ScenarioResult:
    res = ScenarioResult("pw-demo")
    p = cfg.params
    alpha, epsilon = float(p.get("alpha", -0.2)), float(p.get("epsilon", 1.0))
    tol = cfg.tolerances.get("convergence", 1e-6)
    n_short, n_long = cfg.n_max.get("short", 200), cfg.n_max.get("long", 400)
    if n_short >= n_long:
        raise ConfigError("n_max.short must be below n_max.long", "n_max.short")
    count = cfg.samples.get("points", 1000)
    sys = cfg.base
    a, b = pw_functions(alpha, epsilon)

    # Monte Carlo mean of log a; its exact value is alpha
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(67,)))
    mc = rng.random((cfg.samples.get("monte_carlo", 100000), sys.dim))
    log_a = np.log(a(mc))
    est = float(log_a.mean())
    se = float(log_a.std(ddof=1) / np.sqrt(len(log_a)))

    pts = lattice_points(sys, int(p.get("denominator_bits", 6)), count, cfg.seed)
    raw = np.array([q.raw_array for q in pts], dtype=np.uint64)
    coords = raw_to_coords(raw)
    terms = pw_partial_sums(sys, raw, a, b, n_long)
    sums = np.cumsum(terms, axis=0)
    conv_short = _converged(terms, n_short, tol)
    conv_long = _converged(terms, n_long, tol)
    sup = np.max(np.abs(sums), axis=1)
    frac = float(conv_long.mean())
    ratio = float(sup[n_long - 1] / sup[n_short - 1])

    # the derived scalar equation, checked in matrix form at converged points:
    # C(fx) A_x C(x)^{-1} = B_x with C = [[1, c], [0, 1]]
    f_raw = raw @ sys.matrix_u64.T
    c_x = sums[-1]
    c_fx = np.cumsum(pw_partial_sums(sys, f_raw, a, b, n_long), axis=0)[-1]
    av, bv = a(coords), b(coords)
    eq = np.abs(av * c_x - c_fx - bv)[conv_long]
    eq_max = float(eq.max()) if eq.size else float("nan")
    eq_limit = 10 * tol * float(np.exp(alpha + abs(epsilon)))

    rows = []
    for i in range(count):
        rows.append((i, *coords[i].tolist(), float(sums[n_short - 1, i]),
                     float(sums[n_long - 1, i]), bool(conv_short[i]), bool(conv_long[i]),
                     float(abs(terms[-1, i]))))
    xs = tuple(f"x{j + 1}" for j in range(sys.dim))
    res.tables["points"] = Table(("point",) + xs + (f"partial_sum_{n_short}",
                                                    f"partial_sum_{n_long}",
                                                    f"converged_{n_short}",
                                                    f"converged_{n_long}", "last_term"), rows)
    window = 10
    curve = []
    for n in range(1, n_long + 1):
        fr = float(_converged(terms, n, tol, window).mean()) if n >= window else 0.0
        curve.append((n, float(sup[n - 1]), fr))
    res.tables["sup_curve"] = Table(("n", "sup_abs_partial_sum", "converged_fraction"), curve)

    rep = Report()
    rep.add(CheckRow("mean_log_a", len(log_a), abs(est - alpha), est,
                     "pass" if est < 0 and abs(est - alpha) < 5 * se + 1e-12 else "fail"))
    rep.add(CheckRow("convergence_fraction", count, tol, frac,
                     "pass" if frac >= float(p.get("min_fraction", 0.95)) else "fail"))
    rep.add(CheckRow("sup_growth", count, float(sup[n_long - 1]), ratio,
                     "pass" if ratio >= float(p.get("sup_growth_factor", 2.0)) else "fail"))
    rep.add(CheckRow("twisted_equation", int(conv_long.sum()), eq_max, None,
                     "pass" if eq.size and eq_max < eq_limit else "fail"))
    res.add_report("checks", rep)
    return res


RUNNERS = {
    "pw-demo": run_pw_demo,
    "one-exponent": run_one_exponent,
    "perturbation": run_perturbation,
    "holonomy-verify": run_holonomy_verify,
    "twist-verify": run_twist_verify,
}


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    return RUNNERS[cfg.scenario](cfg)
