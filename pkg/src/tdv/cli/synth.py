"""Noise and sampling-pattern synthesis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SamplingSpec",
    "add_gaussian_noise",
    "contour_mask",
    "spiral_path",
    "spiral_mask",
    "make_sampling_mask",
]


@dataclass(frozen=True)
class SamplingSpec:
    """Sampling pattern.

    ``mode`` is ``"random"``, ``"contours"``, ``"spiral"`` or ``"mask"``.
    ``density`` is the sampled fraction for random/contour modes and the
    under-sampling ratio (path length over raster length) for spirals.
    """

    mode: str = "random"
    density: float = 0.07
    levels: tuple = ()

    def __post_init__(self):
        if self.mode not in ("random", "contours", "spiral", "mask"):
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        if self.mode != "mask" and not 0 < self.density <= 1:
            raise ValueError(f"density must be in (0, 1], got {self.density}")


def add_gaussian_noise(u, level: float, seed: int = 0) -> np.ndarray:
    """``u + level * range(u) * N(0, 1)``."""
    if level < 0:
        raise ValueError(f"noise level must be nonnegative, got {level}")
    u = np.asarray(u, dtype=float)
    if level == 0:
        return u.copy()
    rng = np.random.default_rng(seed)
    return u + level * float(u.max() - u.min()) * rng.standard_normal(u.shape)


def contour_mask(ref, levels) -> np.ndarray:
    """Pixels on the iso-lines of ``ref``: the lower side of every crossing between neighbours."""
    ref = np.asarray(ref, dtype=float)
    mask = np.zeros(ref.shape, dtype=bool)
    for c in levels:
        above = ref >= c
        mask |= np.isclose(ref, c)
        d0 = above[1:] != above[:-1]
        d1 = above[:, 1:] != above[:, :-1]
        # mark the pixel closer to the level
        closer0 = np.abs(ref[1:] - c) < np.abs(ref[:-1] - c)
        closer1 = np.abs(ref[:, 1:] - c) < np.abs(ref[:, :-1] - c)
        mask[1:] |= d0 & closer0
        mask[:-1] |= d0 & ~closer0
        mask[:, 1:] |= d1 & closer1
        mask[:, :-1] |= d1 & ~closer1
    return mask


def spiral_path(shape, pitch: float, step: float = 0.25) -> np.ndarray:
    """Points of an Archimedean spiral ``r = pitch * theta / (2 pi)`` centred on the grid,
    clipped to the image and sampled every ``step`` pixels of arc length."""
    m, n = shape
    cy, cx = (m - 1) / 2, (n - 1) / 2
    r_max = np.hypot(cy, cx) + pitch
    b = pitch / (2 * np.pi)
    pts = []
    theta = 0.0
    while b * theta <= r_max:
        r = b * theta
        pts.append((cy + r * np.sin(theta), cx + r * np.cos(theta)))
        theta += step / max(np.hypot(r, b), 1e-12)
    p = np.array(pts)
    inside = (p[:, 0] >= -0.5) & (p[:, 0] <= m - 0.5) & (p[:, 1] >= -0.5) & (p[:, 1] <= n - 0.5)
    return p[inside]


def _path_length(p):
    # consecutive in-image points only
    d = np.hypot(*np.diff(p, axis=0).T)
    return float(d[d < 2.0].sum())


def spiral_mask(shape, rho: float, tol: float = 0.01):
    """Rasterised spiral whose path length is ``rho`` times the raster length ``m * n``.

    Returns ``(mask, achieved_rho)``; the pitch is found by bisection.
    """
    m, n = shape
    target = rho * m * n
    lo, hi = 1.0, float(max(m, n))
    for _ in range(40):
        pitch = 0.5 * (lo + hi)
        length = _path_length(spiral_path(shape, pitch))
        if abs(length - target) <= tol * target:
            break
        if length > target:
            lo = pitch
        else:
            hi = pitch
    p = spiral_path(shape, pitch)
    mask = np.zeros(shape, dtype=bool)
    idx = np.clip(np.rint(p).astype(int), 0, [m - 1, n - 1])
    mask[idx[:, 0], idx[:, 1]] = True
    return mask, length / (m * n)


def make_sampling_mask(spec: SamplingSpec, shape, seed: int = 0, reference=None) -> np.ndarray:
    """Boolean sampling mask for ``spec``.

    Contour mode needs a ``reference`` field; levels are either
    ``spec.levels`` or equally spaced, added until the density is reached.
    """
    m, n = shape
    if spec.mode == "random":
        rng = np.random.default_rng(seed)
        k = max(1, int(round(spec.density * m * n)))
        mask = np.zeros(m * n, dtype=bool)
        mask[rng.choice(m * n, size=k, replace=False)] = True
        return mask.reshape(shape)
    if spec.mode == "spiral":
        return spiral_mask(shape, spec.density)[0]
    if spec.mode == "contours":
        if reference is None:
            raise ValueError("contour sampling needs a reference field")
        ref = np.asarray(reference, dtype=float)
        if spec.levels:
            return contour_mask(ref, spec.levels)
        lo, hi = ref.min(), ref.max()
        mask = np.zeros(shape, dtype=bool)
        for k in range(1, m * n):
            mask = contour_mask(ref, lo + (hi - lo) * np.arange(1, k + 1) / (k + 1))
            if mask.mean() >= spec.density:
                break
        return mask
    raise ValueError("mask mode takes the mask from a file")
