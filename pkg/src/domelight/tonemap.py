"""Dynamic-range management for the 8-bit LED system: spherical highlight
blur on the environment map and energy-redistributing dilation over the
panel neighbor graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dome import DomeGeometry
from .envmap import EnvironmentMap, pixel_directions, solid_angles
from .errors import InvariantError, ShapeError

__all__ = ["DilationConfig", "DilationResult", "blur_highlights", "dilate"]

_LUMA = np.array([0.2126, 0.7152, 0.0722])


@dataclass(frozen=True)
class DilationConfig:
    """Knobs for highlight smoothing and over-cap energy redistribution.

    cap is the per-channel panel maximum in normalized drive units;
    blur_sigma is the angular std-dev of the highlight blur in radians;
    highlight_threshold is a luminance percentile in (0, 100].
    """

    cap: float = 1.0
    blur_sigma: float = math.radians(3.0)
    highlight_threshold: float = 99.0
    max_iters: int = 64
    k_spread: int = 6

    def __post_init__(self) -> None:
        if self.cap <= 0:
            raise InvariantError("cap must be > 0")
        if self.max_iters < 1:
            raise InvariantError("max_iters must be >= 1")
        if self.k_spread < 1:
            raise InvariantError("k_spread must be >= 1")
        if not (0.0 < self.highlight_threshold <= 100.0):
            raise InvariantError("highlight_threshold must be in (0, 100]")
        if self.blur_sigma < 0:
            raise InvariantError("blur_sigma must be >= 0")

    def to_dict(self) -> dict:
        return {
            "cap": self.cap,
            "blur_sigma": self.blur_sigma,
            "highlight_threshold": self.highlight_threshold,
            "max_iters": self.max_iters,
            "k_spread": self.k_spread,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DilationConfig":
        return cls(**{k: doc[k] for k in cls.__dataclass_fields__ if k in doc})


def blur_highlights(env: EnvironmentMap, cfg: DilationConfig) -> EnvironmentMap:
    """Smooth everything above the highlight percentile with a spherical
    Gaussian while preserving total power.

    The above-threshold layer is split off, each bright pixel's power is
    splatted over the sphere with kernel exp(-ang^2 / 2 sigma^2) normalized
    per source (energy conserving), and the result is added back onto the
    untouched below-threshold layer. Maps with no pixel strictly above the
    percentile come back unchanged.
    """
    lum = env.pixels @ _LUMA
    threshold = np.percentile(lum, cfg.highlight_threshold)
    mask = lum > threshold
    if not mask.any() or cfg.blur_sigma == 0:
        return env

    h, w = env.height, env.width
    dirs = pixel_directions(w, h).reshape(-1, 3)
    omega = solid_angles(w, h).reshape(-1)
    radiance = env.pixels.reshape(-1, 3)
    flat_mask = mask.reshape(-1)

    src_dirs = dirs[flat_mask]
    src_power = radiance[flat_mask] * omega[flat_mask, None]

    cos = np.clip(src_dirs @ dirs.T, -1.0, 1.0)
    ang = np.arccos(cos)
    kernel = np.exp(-0.5 * (ang / cfg.blur_sigma) ** 2)
    per_source = kernel @ omega  # kernel mass seen by each source
    spread_power = kernel.T @ (src_power / per_source[:, None])

    # splatting conserves energy analytically; rescale pins it exactly
    pre = src_power.sum(axis=0)
    post = spread_power.sum(axis=0)
    scale = np.divide(pre, post, out=np.ones(3), where=post > 0)
    spread = spread_power * scale / omega[:, None]

    out = radiance.copy()
    out[flat_mask] = 0.0
    out += spread
    return EnvironmentMap(out.reshape(h, w, 3))


@dataclass(frozen=True)
class DilationResult:
    """Dilated per-panel powers plus energy bookkeeping.

    deficit is the per-channel energy discarded by the final clamp when the
    dome could not absorb everything (zero when converged).
    """

    powers: np.ndarray
    deficit: np.ndarray
    iterations: int
    converged: bool


def dilate(powers: np.ndarray, geometry: DomeGeometry, cfg: DilationConfig) -> DilationResult:
    """Push per-panel power above ``cfg.cap`` onto nearest neighbors.

    Each iteration synchronously clamps every over-cap channel and splits
    the excess equally among the panel's k_spread nearest neighbors, so the
    result does not depend on panel order. Energy is preserved exactly
    while redistribution succeeds; whatever still exceeds the cap after
    max_iters is clamped off and reported as deficit.
    """
    x = np.asarray(powers, dtype=np.float64)
    if x.shape != (len(geometry), 3):
        raise ShapeError(f"powers must be ({len(geometry)}, 3), got {x.shape}")
    x = x.copy()
    cap = cfg.cap

    n = len(geometry)
    spread = np.zeros((n, n))
    if n > 1:
        for p, nbs in enumerate(geometry.nearest_neighbors(cfg.k_spread)):
            spread[p, nbs] = 1.0 / len(nbs)
    # a panel with no neighbors (single-panel dome) cannot shed excess;
    # its overflow goes straight to the deficit report
    movable = spread.sum(axis=1) > 0

    passes = 0
    for _ in range(cfg.max_iters):
        excess = x - cap
        np.clip(excess, 0.0, None, out=excess)
        excess[~movable] = 0.0
        if not (excess > 0).any():
            break
        x = np.where(movable[:, None], np.minimum(x, cap), x)
        x += spread.T @ excess
        passes += 1

    residual = np.clip(x - cap, 0.0, None)
    deficit = residual.sum(axis=0)
    np.minimum(x, cap, out=x)
    converged = not (deficit > 0).any()
    return DilationResult(powers=x, deficit=deficit, iterations=passes, converged=converged)
