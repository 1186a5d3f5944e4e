"""Closed-form Riemannian kernels on constant-curvature model spaces.

For ``kappa > 0`` points live on the upper sheet of the hyperboloid
``-x0**2 + |x'|**2 = -1/kappa`` inside Minkowski space; for ``kappa == 0``
they are Cartesian vectors.  Tangent vectors and symmetric forms are passed
around as components in an orthonormal frame attached to the base point, so
ambient coordinates of tangent data never leak out of this module.

Every function broadcasts over leading axes: a batch of points has shape
``(..., N)`` with ``N`` the ambient dimension, a batch of tangent components
``(..., n)`` and a batch of forms ``(..., n, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np
from scipy import integrate

_SERIES_CUTOFF = 1e-4
POINT_TOL = 1e-12
MIN_KAPPA = 1e-12


# ---------------------------------------------------------------------------
# scalar curvature factors


def tau_coth(tau):
    """``tau * coth(tau)``, the tangential Hessian factor of half squared distance."""
    tau = np.abs(np.asarray(tau, dtype=float))
    small = tau < _SERIES_CUTOFF
    safe = np.where(small, 1.0, tau)
    t2 = tau * tau
    return np.where(small, 1.0 + t2 / 3.0 - t2 * t2 / 45.0, safe / np.tanh(safe))


def sinhc(tau):
    """``sinh(tau) / tau`` with its removable singularity filled in."""
    tau = np.abs(np.asarray(tau, dtype=float))
    small = tau < _SERIES_CUTOFF
    safe = np.where(small, 1.0, tau)
    t2 = tau * tau
    return np.where(small, 1.0 + t2 / 6.0 + t2 * t2 / 120.0, np.sinh(safe) / safe)


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class ModelManifold:
    """Simply connected space form of dimension ``dim`` and curvature ``-kappa``."""

    dim: int
    kappa: float = 0.0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        if not np.isfinite(self.kappa) or self.kappa < 0:
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa!r}")
        if 0 < self.kappa < MIN_KAPPA:
            # hyperboloid coordinates of order kappa**-0.5 would swamp the spatial part
            raise ValueError(f"kappa must be 0 or at least {MIN_KAPPA}, got {self.kappa!r}")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "kappa", float(self.kappa))

    @property
    def flat(self) -> bool:
        return self.kappa == 0.0

    @property
    def ambient_dim(self) -> int:
        return self.dim if self.flat else self.dim + 1

    @property
    def sqrt_kappa(self) -> float:
        return float(np.sqrt(self.kappa))

    def origin(self) -> np.ndarray:
        x = np.zeros(self.ambient_dim)
        if not self.flat:
            x[0] = 1.0 / self.sqrt_kappa
        return x

    def to_dict(self) -> dict:
        return {"dim": self.dim, "kappa": self.kappa}


@dataclass
class SymForm:
    """Symmetric bilinear form on ``T_base M`` written in the frame at ``base``."""

    base: np.ndarray
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=float)
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.shape[-1] != self.matrix.shape[-2]:
            raise ValueError("form matrix must be square")
        if np.max(np.abs(self.matrix - np.swapaxes(self.matrix, -1, -2)), initial=0.0) > 1e-12:
            raise ValueError("form matrix is not symmetric")

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def as_matrix(S) -> np.ndarray:
    """Accept a :class:`SymForm` or a raw array and return the matrix."""
    return np.asarray(S.matrix if isinstance(S, SymForm) else S, dtype=float)


# ---------------------------------------------------------------------------
# ambient helpers


def ambient_inner(M: ModelManifold, a, b) -> np.ndarray:
    """Minkowski product for ``kappa > 0``, Euclidean dot product otherwise."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dot = np.sum(a * b, axis=-1)
    if M.flat:
        return dot
    return dot - 2.0 * a[..., 0] * b[..., 0]


def check_point(M: ModelManifold, x, tol: float = POINT_TOL) -> np.ndarray:
    """Validate and return ``x`` as a float array; raise ``ValueError`` if off the model."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != M.ambient_dim:
        raise ValueError(f"expected ambient dimension {M.ambient_dim}, got {x.shape[-1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("point has non-finite coordinates")
    if not M.flat:
        # relative residual of the hyperboloid constraint
        q = ambient_inner(M, x, x) * M.kappa + 1.0
        scale = np.maximum(1.0, M.kappa * np.sum(x * x, axis=-1))
        if np.any(np.abs(q) > tol * scale) or np.any(x[..., 0] <= 0):
            raise ValueError("point violates the hyperboloid constraint")
    return x


def project_to_tangent(M: ModelManifold, x, v) -> np.ndarray:
    """Orthogonal projection of an ambient vector onto ``T_x M``."""
    v = np.asarray(v, dtype=float)
    if M.flat:
        return v
    return v + M.kappa * ambient_inner(M, x, v)[..., None] * x


def frame(M: ModelManifold, x) -> np.ndarray:
    """Orthonormal frame at ``x`` as rows of an ``(..., n, N)`` array.

    The spatial coordinate axes at the origin are pushed to ``x`` by the
    Lorentz boost taking the origin to ``x``.  This equals transporting the
    origin frame along the radial geodesic and, unlike Gram-Schmidt on
    projected axes, stays exactly orthonormal far from the origin.
    """
    x = np.asarray(x, dtype=float)
    n = M.dim
    batch = x.shape[:-1]
    if M.flat:
        return np.broadcast_to(np.eye(n), batch + (n, n)).copy()
    sk = M.sqrt_kappa
    X0 = sk * x[..., 0]
    Xs = sk * x[..., 1:]
    E = np.empty(batch + (n, n + 1))
    E[..., :, 0] = Xs
    E[..., :, 1:] = np.eye(n) + Xs[..., :, None] * Xs[..., None, :] / (1.0 + X0)[..., None, None]
    return E


def to_ambient(M: ModelManifold, x, comps) -> np.ndarray:
    """Ambient vector of a tangent vector given by frame components."""
    return np.einsum("...i,...ij->...j", np.asarray(comps, dtype=float), frame(M, x))


def to_components(M: ModelManifold, x, v) -> np.ndarray:
    """Frame components of an ambient tangent vector at ``x``."""
    E = frame(M, x)
    return ambient_inner(M, E, np.asarray(v, dtype=float)[..., None, :])


# ---------------------------------------------------------------------------
# metric kernels


def distance(M: ModelManifold, x, y) -> np.ndarray:
    """Geodesic distance.

    On the hyperboloid this uses the chord ``|x - y|_L = (2/sqrt k) sinh(sqrt k d / 2)``,
    which keeps full relative accuracy for nearby points where
    ``arccosh`` of the Minkowski product would not.
    """
    x = check_point(M, x)
    y = check_point(M, y)
    delta = x - y
    if M.flat:
        return np.sqrt(np.sum(delta * delta, axis=-1))
    chord = np.sqrt(np.maximum(ambient_inner(M, delta, delta), 0.0))
    sk = M.sqrt_kappa
    return 2.0 / sk * np.arcsinh(0.5 * sk * chord)


def _boost_to_origin(M: ModelManifold, x, y) -> np.ndarray:
    """Coordinates of ``y`` after the isometry sending ``x`` to the origin.

    Returned on the unit-curvature hyperboloid.  Uses ``y - x`` so nearby
    points keep their relative accuracy.
    """
    sk = M.sqrt_kappa
    X = sk * x
    D = sk * (y - x)
    E = frame(M, x)
    out = np.empty(np.broadcast_shapes(x.shape, y.shape))
    out[..., 0] = 1.0 - ambient_inner(M, X, D)
    out[..., 1:] = ambient_inner(M, E, D[..., None, :])
    return out


def exp_map(M: ModelManifold, x, v) -> np.ndarray:
    """Point reached at time one along the geodesic from ``x`` with velocity ``v``."""
    x = check_point(M, x)
    v = np.asarray(v, dtype=float)
    if M.flat:
        return x + v
    sk = M.sqrt_kappa
    tau = sk * np.sqrt(np.sum(v * v, axis=-1))
    # exp at the origin, then boost the origin to x
    y = np.cosh(tau)[..., None] * (sk * x) + to_ambient(M, x, sinhc(tau)[..., None] * sk * v)
    y = y / sk
    spatial = y[..., 1:]
    y[..., 0] = np.sqrt(1.0 / M.kappa + np.sum(spatial * spatial, axis=-1))
    return y


def log_map(M: ModelManifold, x, y) -> np.ndarray:
    """Frame components at ``x`` of the initial velocity of the geodesic to ``y``."""
    x = check_point(M, x)
    y = check_point(M, y)
    if M.flat:
        return y - x
    Y = _boost_to_origin(M, x, y)
    spatial = Y[..., 1:]
    s = np.sqrt(np.sum(spatial * spatial, axis=-1))
    # |Y'| = sinh(sqrt(k) d); arcsinh(s)/s is the scale from Y' to sqrt(k) v
    scale = np.where(s > _SERIES_CUTOFF, np.arcsinh(s) / np.where(s > 0, s, 1.0), 1.0 - s * s / 6.0)
    return spatial * (scale / M.sqrt_kappa)[..., None]


def _transport_ambient(M: ModelManifold, x, y, va) -> np.ndarray:
    coef = M.kappa * ambient_inner(M, y - x, va) / (1.0 - M.kappa * ambient_inner(M, x, y))
    return va + coef[..., None] * (x + y)


def parallel_transport(M: ModelManifold, x, y, v) -> np.ndarray:
    """Transport frame components of ``v`` at ``x`` along the geodesic to ``y``."""
    x = check_point(M, x)
    y = check_point(M, y)
    v = np.asarray(v, dtype=float)
    if M.flat:
        return np.broadcast_to(v, np.broadcast_shapes(v.shape, x.shape[:-1] + (M.dim,))).copy()
    return to_components(M, y, _transport_ambient(M, x, y, to_ambient(M, x, v)))


def transport_matrix(M: ModelManifold, x, y) -> np.ndarray:
    """Orthogonal matrix ``L`` with ``components_y = L @ components_x``."""
    x = check_point(M, x)
    y = check_point(M, y)
    n = M.dim
    if M.flat:
        batch = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
        return np.broadcast_to(np.eye(n), batch + (n, n)).copy()
    Ex = frame(M, x)
    Ey = frame(M, y)
    moved = _transport_ambient(M, x[..., None, :], y[..., None, :], Ex)  # (..., n, N)
    # L[i, j] = <E_y[i], P E_x[j]>
    return ambient_inner(M, Ey[..., :, None, :], moved[..., None, :, :])


def transport_form(M: ModelManifold, x, y, S) -> np.ndarray:
    """Matrix at ``y`` of the form ``nu -> S(L^{-1} nu, L^{-1} nu)``."""
    L = transport_matrix(M, x, y)
    A = as_matrix(S)
    out = L @ A @ np.swapaxes(L, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def hess_half_dist_sq(M: ModelManifold, y, x) -> np.ndarray:
    """Hessian at ``x`` of ``z -> d(y, z)**2 / 2`` in the frame at ``x``.

    Radial eigenvalue 1, tangential eigenvalue ``tau_coth(sqrt(kappa) d)``.
    """
    x = check_point(M, x)
    y = check_point(M, y)
    n = M.dim
    batch = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
    eye = np.broadcast_to(np.eye(n), batch + (n, n))
    if M.flat:
        return eye.copy()
    d = np.broadcast_to(distance(M, x, y), batch)
    h = tau_coth(M.sqrt_kappa * d)
    w = -log_map(M, x, y)
    safe = np.where(d > 0, d, 1.0)
    nu = w / safe[..., None]
    radial = np.einsum("...i,...j->...ij", nu, nu)
    out = h[..., None, None] * eye + (1.0 - h)[..., None, None] * radial
    return np.where((d > 0)[..., None, None], out, eye)


# ---------------------------------------------------------------------------
# volumes


def sphere_area(n: int) -> float:
    """Area of the unit sphere S^{n-1} in R^n."""
    return 2.0 * pi ** (n / 2.0) / gamma(n / 2.0)


def _sinh_minus_x_series(z):
    """``sinh(z) - z`` without cancellation for small ``z``."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-2
    term = z**3 / 6.0
    acc = term.copy()
    for k in range(2, 6):
        term = term * z * z / ((2 * k) * (2 * k + 1))
        acc = acc + term
    return np.where(small, acc, np.sinh(z) - z)


def ball_volume(M: ModelManifold, r) -> np.ndarray | float:
    """Riemannian volume of a geodesic ball of radius ``r``."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0) or not np.all(np.isfinite(r_arr)):
        raise ValueError("radius must be finite and nonnegative")
    n = M.dim
    if n == 1:
        out = 2.0 * r_arr
    elif M.flat:
        out = (sphere_area(n) / n) * r_arr**n
    else:
        k = M.kappa
        a = M.sqrt_kappa * r_arr
        if n == 2:
            out = 4.0 * pi * np.sinh(0.5 * a) ** 2 / k
        elif n == 3:
            out = pi * _sinh_minus_x_series(2.0 * a) / k**1.5
        else:
            sk = M.sqrt_kappa

            def one(rr):
                val, _ = integrate.quad(lambda s: (np.sinh(sk * s) / sk) ** (n - 1), 0.0, rr)
                return val

            out = sphere_area(n) * np.vectorize(one)(r_arr)
    return float(out) if np.ndim(out) == 0 else out


def doubling_constant(M: ModelManifold, R0) -> np.ndarray | float:
    """Bound ``2^n cosh^{n-1}(2 sqrt(kappa) R0)`` on ``Vol(B_2r)/Vol(B_r)`` for ``r < R0``."""
    out = 2.0**M.dim * np.cosh(2.0 * M.sqrt_kappa * np.asarray(R0, dtype=float)) ** (M.dim - 1)
    return float(out) if np.ndim(out) == 0 else out


def doubling_check(M: ModelManifold, r, R) -> np.ndarray | float:
    """Margin ``D(R) - Vol(B_2r)/Vol(B_r)``; nonnegative on the model spaces."""
    r = np.asarray(r, dtype=float)
    R = np.asarray(R, dtype=float)
    if np.any(r <= 0) or np.any(r >= R):
        raise ValueError("doubling_check needs 0 < r < R")
    ratio = np.asarray(ball_volume(M, 2.0 * r)) / np.asarray(ball_volume(M, r))
    out = doubling_constant(M, R) - ratio
    return float(out) if np.ndim(out) == 0 else out


def doubling_theta(M: ModelManifold, R0) -> float:
    """Exponent ``log2(D) / n`` attached to the doubling constant."""
    return float(np.log2(doubling_constant(M, R0)) / M.dim)


def weighted_integral_margin(M: ModelManifold, r, R, R0, c: float = 1.0) -> float:
    """Margin of the scaled L^{n theta} average comparison for a constant ``f = c``.

    For constant data both averages are exact: the small-ball side is
    ``r^2 |c|`` and the large-ball side ``2 R^2 |c|``.  The exponent drops out,
    which makes this a closed-form reference for the sampled version.
    """
    if not 0 < r < R < R0:
        raise ValueError("need 0 < r < R < R0")
    doubling_theta(M, R0)  # validates the exponent is finite
    return 2.0 * R * R * abs(c) - r * r * abs(c)


# ---------------------------------------------------------------------------
# sampling helpers


def random_tangent(M: ModelManifold, rng: np.random.Generator, size=(), radius=1.0) -> np.ndarray:
    """Tangent components with uniformly random direction and norm in ``[0, radius]``."""
    size = (size,) if isinstance(size, int) else tuple(size)
    g = rng.standard_normal(size + (M.dim,))
    g /= np.linalg.norm(g, axis=-1, keepdims=True)
    return g * (radius * rng.uniform(size=size))[..., None]


def random_points(M: ModelManifold, rng: np.random.Generator, size=(), radius=1.0, center=None):
    """Points ``exp_center(v)`` with ``|v| <= radius``."""
    center = M.origin() if center is None else np.asarray(center, dtype=float)
    v = random_tangent(M, rng, size, radius)
    return exp_map(M, center, v)
