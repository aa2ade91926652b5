"""Symmetric positive definite matrices with the affine-invariant metric."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize


@dataclass(frozen=True, eq=False)
class SpdPoint:
    """An inner product on a fiber, as an SPD matrix."""

    matrix: np.ndarray
    residual: float | None = None

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        if not np.allclose(M, M.T, atol=1e-12 * max(1.0, np.abs(M).max())):
            raise ValueError("SpdPoint matrix must be symmetric")
        M = 0.5 * (M + M.T)
        if np.linalg.eigvalsh(M)[0] <= 0:
            raise ValueError("SpdPoint matrix must be positive definite")
        object.__setattr__(self, "matrix", M)


def _eig_fn(P: np.ndarray, fn) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (P + P.T))
    return (V * fn(w)) @ V.T


def spd_sqrt(P):
    return _eig_fn(P, np.sqrt)


def spd_invsqrt(P):
    return _eig_fn(P, lambda w: 1.0 / np.sqrt(w))


def sym_log(P):
    return _eig_fn(P, np.log)


def sym_exp(S):
    return _eig_fn(S, np.exp)


def affine_distance(P: np.ndarray, Q: np.ndarray) -> float:
    """||log(P^{-1/2} Q P^{-1/2})||_F."""
    R = spd_invsqrt(P)
    w = np.linalg.eigvalsh(0.5 * (R @ Q @ R + (R @ Q @ R).T))
    return float(np.sqrt(np.sum(np.log(w) ** 2)))


def _enclosing_ball_center(V: np.ndarray) -> np.ndarray:
    """Centre of the smallest Euclidean ball containing the rows of V.

    Solves the dual problem max sum l_i |v_i|^2 - |sum l_i v_i|^2 over the simplex.
    """
    n = V.shape[0]
    sq = np.sum(V * V, axis=1)
    gram = V @ V.T

    def neg(lam):
        return lam @ gram @ lam - lam @ sq

    def grad(lam):
        return 2.0 * gram @ lam - sq

    res = minimize(neg, np.full(n, 1.0 / n), jac=grad, method="SLSQP",
                   bounds=[(0.0, 1.0)] * n,
                   constraints=[{"type": "eq", "fun": lambda l: l.sum() - 1.0,
                                 "jac": lambda l: np.ones(n)}],
                   options={"ftol": 1e-15, "maxiter": 500})
    lam = np.clip(res.x, 0.0, None)
    return (lam / lam.sum()) @ V


def circumcenter(points, iterations: int = 100, tol: float = 1e-10) -> np.ndarray:
    """Approximate circumcentre of SPD matrices under the affine-invariant metric.

    Each round maps the points to the tangent space at the current estimate,
    moves to the Euclidean minimum-enclosing-ball centre there, and maps back.
    """
    pts = [0.5 * (G + G.T) for G in points]
    d = pts[0].shape[0]
    iu = np.triu_indices(d)
    weight = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    # start from the log-Euclidean mean
    P = sym_exp(np.mean([sym_log(G) for G in pts], axis=0))
    for _ in range(iterations):
        S, Si = spd_sqrt(P), spd_invsqrt(P)
        V = np.array([sym_log(Si @ G @ Si)[iu] * weight for G in pts])
        c = _enclosing_ball_center(V)
        C = np.zeros((d, d))
        C[iu] = c / weight
        C = C + C.T - np.diag(np.diag(C))
        P = S @ sym_exp(C) @ S
        P = 0.5 * (P + P.T)
        if np.linalg.norm(c) < tol:
            break
    return P
