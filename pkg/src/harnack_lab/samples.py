"""Analytic test functions used by checks and suites."""

from __future__ import annotations

import numpy as np

from . import geometry as geo


def random_smooth(M: geo.ModelManifold, rng: np.random.Generator, center=None, radius: float = 1.0, bumps: int = 3):
    """A random smooth space-time function ``fn(points, t)``: Gaussian bumps with drifting amplitudes."""
    center = M.origin() if center is None else center
    peaks = geo.random_points(M, rng, bumps, radius, center)
    amp = rng.normal(0.0, 1.0, bumps)
    width = rng.uniform(0.3, 1.0, bumps) * radius
    freq = rng.uniform(0.0, 2.0, bumps)
    phase = rng.uniform(0.0, 2 * np.pi, bumps)
    base = rng.normal()

    def fn(points, t):
        d2 = geo.distance(M, np.asarray(points)[..., None, :], peaks) ** 2
        return base + np.sum(amp * np.exp(-d2 / width**2) * np.cos(freq * t + phase), axis=-1)

    return fn


def half_dist_sq(M: geo.ModelManifold, y, scale: float = 1.0):
    """``fn(points, t) = scale * d(points, y)^2 / 2``."""

    def fn(points, t):
        return 0.5 * scale * geo.distance(M, points, y) ** 2

    return fn


def well(M: geo.ModelManifold, center, depth: float = 1.0, width: float = 1.0, level: float = 0.0, drift: float = 0.0):
    """Smooth well ``level - depth * exp(-d^2 / (2 width^2)) + drift * t``."""

    def fn(points, t):
        d2 = geo.distance(M, points, center) ** 2
        return level - depth * np.exp(-0.5 * d2 / width**2) + drift * t

    return fn
