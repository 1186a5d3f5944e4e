"""Pucci extremal operators and the algebraic checks built on them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo

KINDS = ("pucci_plus", "pucci_minus", "laplacian")


@dataclass(frozen=True)
class Ellipticity:
    lam: float = 1.0
    Lam: float = 1.0

    def __post_init__(self):
        if not (0 < self.lam <= 1 <= self.Lam) or not np.isfinite(self.Lam):
            raise ValueError(f"need 0 < lambda <= 1 <= Lambda, got ({self.lam}, {self.Lam})")

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "Lambda": self.Lam}


@dataclass(frozen=True)
class OperatorSpec:
    kind: str
    ell: Ellipticity = Ellipticity()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "laplacian" and (self.ell.lam != 1 or self.ell.Lam != 1):
            raise ValueError("the Laplacian needs lambda = Lambda = 1")

    def __call__(self, S) -> np.ndarray:
        return apply(self, S)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.ell.to_dict()}


def _eig(S) -> np.ndarray:
    return np.linalg.eigvalsh(geo.as_matrix(S))


def _weighted(ev: np.ndarray, neg: float, pos: float):
    out = neg * np.sum(np.minimum(ev, 0.0), axis=-1) + pos * np.sum(np.maximum(ev, 0.0), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def pucci_plus(ell: Ellipticity, S):
    """Maximal operator: ``lam * sum(neg eigs) + Lam * sum(pos eigs)``."""
    return _weighted(_eig(S), ell.lam, ell.Lam)


def pucci_minus(ell: Ellipticity, S):
    """Minimal operator: ``Lam * sum(neg eigs) + lam * sum(pos eigs)``."""
    return _weighted(_eig(S), ell.Lam, ell.lam)


def pucci_from_eigs(ell: Ellipticity, ev, kind: str):
    ev = np.asarray(ev, dtype=float)
    if kind == "pucci_plus":
        return _weighted(ev, ell.lam, ell.Lam)
    if kind == "pucci_minus":
        return _weighted(ev, ell.Lam, ell.lam)
    out = np.sum(ev, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def apply(op: OperatorSpec, S):
    """Evaluate the operator on a batch of symmetric matrices."""
    if op.kind == "laplacian":
        out = np.trace(geo.as_matrix(S), axis1=-2, axis2=-1)
        return float(out) if np.ndim(out) == 0 else out
    return pucci_from_eigs(op.ell, _eig(S), op.kind)


def plus_maximizer(ell: Ellipticity, S) -> np.ndarray:
    """Coefficient matrix ``A`` with ``lam <= A <= Lam`` attaining ``trace(A S) = M+(S)``."""
    ev, Q = np.linalg.eigh(geo.as_matrix(S))
    coef = np.where(ev > 0, ell.Lam, ell.lam)
    return np.einsum("...ij,...j,...kj->...ik", Q, coef, Q)


def random_coefficients(ell: Ellipticity, rng: np.random.Generator, n: int, size=()) -> np.ndarray:
    """Random symmetric matrices with spectrum in ``[lam, Lam]``."""
    size = (size,) if isinstance(size, int) else tuple(size)
    Q, _ = np.linalg.qr(rng.standard_normal(size + (n, n)))
    ev = rng.uniform(ell.lam, ell.Lam, size + (n,))
    return np.einsum("...ij,...j,...kj->...ik", Q, ev, Q)


def sup_trace(ell: Ellipticity, S, rng: np.random.Generator, samples: int = 256) -> float:
    """``sup trace(A S)`` over sampled admissible ``A`` together with the analytic maximizer."""
    S = geo.as_matrix(S)
    n = S.shape[-1]
    A = random_coefficients(ell, rng, n, samples)
    best = np.max(np.einsum("kij,ji->k", A, S))
    return float(max(best, np.trace(plus_maximizer(ell, S) @ S)))


def ellipticity_sandwich(ell: Ellipticity, S, P):
    """Bounds ``(M-(P), M+(P))`` and the increments ``F(S+P) - F(S)`` for each operator kind.

    Returns ``(lo, hi, increments)`` where ``increments`` maps kind to value.
    The Laplacian entry is only meaningful when ``lam <= 1 <= Lam``, which
    :class:`Ellipticity` enforces.
    """
    S = geo.as_matrix(S)
    P = geo.as_matrix(P)
    lo = pucci_minus(ell, P)
    hi = pucci_plus(ell, P)
    inc = {}
    for kind in KINDS:
        op_ell = Ellipticity() if kind == "laplacian" else ell
        op = OperatorSpec(kind, op_ell)
        inc[kind] = apply(op, S + P) - apply(op, S)
    return lo, hi, inc


def subadditivity_check(ell: Ellipticity, S, P):
    """Margins of ``M-(S+P) <= M-(S)+M+(P) <= M+(S+P) <= M+(S)+M+(P)``.

    Every returned margin is ``right - left`` and should be nonnegative.
    """
    S = geo.as_matrix(S)
    P = geo.as_matrix(P)
    m_sp = pucci_minus(ell, S + P)
    mid = pucci_minus(ell, S) + pucci_plus(ell, P)
    p_sp = pucci_plus(ell, S + P)
    top = pucci_plus(ell, S) + pucci_plus(ell, P)
    return mid - m_sp, p_sp - mid, top - p_sp


def intrinsic_continuity_check(M: geo.ModelManifold, op: OperatorSpec, x, y, S):
    """``F(S) - F(L S)`` with ``L`` the transport from ``x`` to ``y``; zero for eigenvalue operators."""
    T = geo.transport_form(M, x, y, S)
    return apply(op, S) - apply(op, T)


def random_forms(rng: np.random.Generator, n: int, size=(), degenerate: bool = False, scale: float = 1.0):
    """Symmetrized Gaussian matrices; ``degenerate`` clusters eigenvalues with 1e-10 gaps."""
    size = (size,) if isinstance(size, int) else tuple(size)
    G = rng.standard_normal(size + (n, n))
    S = 0.5 * (G + np.swapaxes(G, -1, -2))
    if not degenerate:
        return scale * S
    Q, _ = np.linalg.qr(G)
    base = rng.standard_normal(size + (1,))
    ev = base + 1e-10 * rng.integers(-2, 3, size + (n,))
    zero = rng.uniform(size=size) < 0.3
    ev = np.where(zero[..., None], 1e-10 * rng.integers(-1, 2, size + (n,)), ev)
    return scale * np.einsum("...ij,...j,...kj->...ik", Q, ev, Q)
