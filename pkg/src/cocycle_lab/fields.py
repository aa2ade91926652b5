"""Closed-form matrix and vector fields on the torus.

Every field exposes ``dimension`` and ``evaluate_many(coords)``, where
``coords`` is an ``(N, m)`` float array.  Coordinates need not be reduced
mod 1: all fields are periodic, and evaluating at unreduced coordinates lets
callers follow leaves exactly without wrapping.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .base import TorusPoint


def point_coords(x) -> np.ndarray:
    """Float coordinates of a TorusPoint, or a single coordinate vector, as (1, m)."""
    if isinstance(x, TorusPoint):
        return x.coords[None, :]
    return np.atleast_2d(np.asarray(x, dtype=float))


def _as_matrix(a, d: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.size == d * d:
        return a.reshape(d, d)
    raise ValueError(f"expected {d*d} entries for a {d}x{d} matrix, got {a.size}")


@dataclass(frozen=True, eq=False)
class MatrixField:
    """x -> C0 @ expm(sum_k P_k cos(2 pi k.x) + Q_k sin(2 pi k.x)).

    Invertible at every x by construction; analytic in x.
    """

    dimension: int
    constant_factor: np.ndarray
    terms: tuple = ()

    def __post_init__(self):
        d = self.dimension
        c0 = _as_matrix(self.constant_factor, d)
        if abs(np.linalg.det(c0)) == 0:
            raise ValueError("constant factor must be invertible")
        object.__setattr__(self, "constant_factor", c0)
        clean = []
        for k, P, Q in self.terms:
            clean.append((tuple(int(v) for v in k), _as_matrix(P, d), _as_matrix(Q, d)))
        object.__setattr__(self, "terms", tuple(clean))

    @classmethod
    def constant(cls, C0) -> "MatrixField":
        C0 = np.atleast_2d(np.asarray(C0, dtype=float))
        return cls(C0.shape[0], C0)

    @classmethod
    def scalar(cls, value: float) -> "MatrixField":
        return cls(1, np.array([[float(value)]]))

    @property
    def is_constant(self) -> bool:
        return not any(np.any(P) or np.any(Q) for _, P, Q in self.terms)

    @property
    def is_diagonal(self) -> bool:
        def diag(M):
            return not np.any(M - np.diag(np.diag(M)))
        return diag(self.constant_factor) and all(diag(P) and diag(Q) for _, P, Q in self.terms)

    def exponent_many(self, coords: np.ndarray) -> np.ndarray:
        """The Fourier-polynomial exponent M(x), shape (N, d, d)."""
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        d = self.dimension
        out = np.zeros((coords.shape[0], d, d))
        if not self.terms:
            return out
        K = np.array([k for k, _, _ in self.terms], dtype=float)
        P = np.stack([p for _, p, _ in self.terms])
        Q = np.stack([q for _, _, q in self.terms])
        phase = 2.0 * np.pi * coords @ K.T
        out += np.einsum("nt,tij->nij", np.cos(phase), P)
        out += np.einsum("nt,tij->nij", np.sin(phase), Q)
        return out

    def evaluate_many(self, coords: np.ndarray) -> np.ndarray:
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        n = coords.shape[0]
        if self.is_constant:
            return np.broadcast_to(self.constant_factor, (n, self.dimension, self.dimension)).copy()
        M = self.exponent_many(coords)
        if self.is_diagonal:
            E = np.zeros_like(M)
            idx = np.arange(self.dimension)
            E[:, idx, idx] = np.exp(M[:, idx, idx])
        else:
            E = expm(M)
        return self.constant_factor @ E

    def evaluate(self, x) -> np.ndarray:
        return self.evaluate_many(point_coords(x))[0]

    def inverse_many(self, coords: np.ndarray) -> np.ndarray:
        """Pointwise inverses expm(-M(x)) @ C0^{-1}, without a generic inversion."""
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        c0inv = np.linalg.inv(self.constant_factor)
        if self.is_constant:
            return np.broadcast_to(c0inv, (coords.shape[0],) + c0inv.shape).copy()
        M = self.exponent_many(coords)
        if self.is_diagonal:
            E = np.zeros_like(M)
            idx = np.arange(self.dimension)
            E[:, idx, idx] = np.exp(-M[:, idx, idx])
        else:
            E = expm(-M)
        return E @ c0inv

    def precompose(self, L) -> "MatrixField":
        """The field x -> self(L x) for an integer matrix L."""
        L = np.asarray(L, dtype=np.int64)
        terms = tuple((tuple(int(v) for v in L.T @ np.array(k)), P, Q) for k, P, Q in self.terms)
        return MatrixField(self.dimension, self.constant_factor, terms)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "constant_factor": self.constant_factor.reshape(-1).tolist(),
            "terms": [
                {"k": list(k), "P": P.reshape(-1).tolist(), "Q": Q.reshape(-1).tolist()}
                for k, P, Q in self.terms
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MatrixField":
        d = int(data["dimension"])
        c0 = data.get("constant_factor")
        c0 = np.eye(d) if c0 is None else _as_matrix(c0, d)
        terms = []
        for t in data.get("terms", []):
            P = t.get("P", np.zeros(d * d))
            Q = t.get("Q", np.zeros(d * d))
            terms.append((t["k"], P, Q))
        return cls(d, c0, tuple(terms))


@dataclass(frozen=True, eq=False)
class FunctionField:
    """A matrix (or vector) field given by a vectorised callable on coordinates."""

    dimension: int
    func: Callable[[np.ndarray], np.ndarray]
    inverse_func: Callable | None = None

    def evaluate_many(self, coords: np.ndarray) -> np.ndarray:
        return np.asarray(self.func(np.atleast_2d(np.asarray(coords, dtype=float))))

    def evaluate(self, x) -> np.ndarray:
        return self.evaluate_many(point_coords(x))[0]

    def inverse_many(self, coords: np.ndarray) -> np.ndarray:
        if self.inverse_func is not None:
            return np.asarray(self.inverse_func(np.atleast_2d(np.asarray(coords, dtype=float))))
        return np.linalg.inv(self.evaluate_many(coords))


@dataclass(frozen=True, eq=False)
class TrigSection:
    """Vector field x -> c + sum_k a_k cos(2 pi k.x) + b_k sin(2 pi k.x)."""

    dimension: int
    constant: np.ndarray = None
    terms: tuple = ()

    def __post_init__(self):
        d = self.dimension
        c = np.zeros(d) if self.constant is None else np.asarray(self.constant, dtype=float).reshape(d)
        object.__setattr__(self, "constant", c)
        clean = tuple((tuple(int(v) for v in k), np.asarray(a, float).reshape(d),
                       np.asarray(b, float).reshape(d)) for k, a, b in self.terms)
        object.__setattr__(self, "terms", clean)

    @classmethod
    def zero(cls, dimension: int) -> "TrigSection":
        return cls(dimension)

    def evaluate_many(self, coords: np.ndarray) -> np.ndarray:
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        out = np.broadcast_to(self.constant, (coords.shape[0], self.dimension)).copy()
        if self.terms:
            K = np.array([k for k, _, _ in self.terms], dtype=float)
            a = np.stack([t[1] for t in self.terms])
            b = np.stack([t[2] for t in self.terms])
            phase = 2.0 * np.pi * coords @ K.T
            out += np.cos(phase) @ a + np.sin(phase) @ b
        return out

    def evaluate(self, x) -> np.ndarray:
        return self.evaluate_many(point_coords(x))[0]

    def precompose(self, L) -> "TrigSection":
        L = np.asarray(L, dtype=np.int64)
        terms = tuple((tuple(int(v) for v in L.T @ np.array(k)), a, b) for k, a, b in self.terms)
        return TrigSection(self.dimension, self.constant, terms)

    def mapped(self, M) -> "TrigSection":
        """The section x -> M @ self(x) for a constant matrix M."""
        M = np.asarray(M, dtype=float)
        terms = tuple((k, M @ a, M @ b) for k, a, b in self.terms)
        return TrigSection(M.shape[0], M @ self.constant, terms)

    def __add__(self, other: "TrigSection") -> "TrigSection":
        return TrigSection(self.dimension, self.constant + other.constant,
                           self.terms + other.terms)

    def __neg__(self) -> "TrigSection":
        return self.mapped(-np.eye(self.dimension))

    def __sub__(self, other: "TrigSection") -> "TrigSection":
        return self + (-other)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "constant": self.constant.tolist(),
            "terms": [{"k": list(k), "a": a.tolist(), "b": b.tolist()} for k, a, b in self.terms],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrigSection":
        d = int(data["dimension"])
        terms = tuple((t["k"], t.get("a", np.zeros(d)), t.get("b", np.zeros(d)))
                      for t in data.get("terms", []))
        return cls(d, data.get("constant"), terms)


def random_matrix_field(dimension: int, m: int, scale: float, n_terms: int, seed: int,
                        constant_factor=None, max_wave: int = 2) -> MatrixField:
    """Random analytic field with ``n_terms`` Fourier modes of size ``scale``."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(7,)))
    terms = []
    for _ in range(n_terms):
        k = rng.integers(-max_wave, max_wave + 1, size=m)
        if not k.any():
            k[0] = 1
        P = scale * rng.standard_normal((dimension, dimension)) / dimension
        Q = scale * rng.standard_normal((dimension, dimension)) / dimension
        terms.append((k, P, Q))
    c0 = np.eye(dimension) if constant_factor is None else constant_factor
    return MatrixField(dimension, c0, tuple(terms))


def rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])
