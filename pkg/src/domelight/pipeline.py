"""The full reproduction pipeline: environment map in, LightMap out.

Stage order: highlight blur -> Voronoi partition -> cos-weighted
integration -> exposure normalization -> HDR dilation -> per-panel
six-channel NNLS -> shared weight normalization -> 8-bit quantization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dome import DomeGeometry, integrate, partition
from .envmap import EnvironmentMap
from .errors import DomelightError
from .spectral import LightMap, SpectralCalibration, quantize, solve_lightmap
from .tonemap import DilationConfig, blur_highlights, dilate

__all__ = ["ReproduceResult", "reproduce"]

# fraction of panel channel values allowed above drive 1.0 before dilation
_EXPOSURE_PERCENTILE = 99.9


@dataclass(frozen=True)
class ReproduceResult:
    """LightMap plus the per-stage bookkeeping the CLI and service report."""

    lightmap: LightMap
    panel_powers: np.ndarray  # absolute per-panel RGB power after dilation
    exposure_norm: float
    dilation_iterations: int
    dilation_converged: bool


class StageError(DomelightError):
    """Wraps a pipeline failure with the stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}': {cause}")
        self.stage = stage
        self.cause = cause


def _stage(name: str, fn, *args):
    try:
        return fn(*args)
    except DomelightError as exc:
        raise StageError(name, exc) from exc


def reproduce(
    env: EnvironmentMap,
    geometry: DomeGeometry,
    cal: SpectralCalibration,
    cfg: DilationConfig | None = None,
    drop_uncovered: bool = False,
) -> ReproduceResult:
    """Convert an HDR environment map to a six-spectrum LightMap.

    Deterministic for fixed inputs. The exposure normalization maps the
    99.9th-percentile panel channel power to drive 1.0 before dilation;
    LightMap.exposure_scalar undoes both that and the shared weight scale,
    so absolute power is recoverable. Deficit is reported in absolute units.
    """
    cfg = cfg if cfg is not None else DilationConfig()
    smoothed = _stage("blur_highlights", blur_highlights, env, cfg)
    part = _stage("partition", partition, geometry, env.width, env.height, drop_uncovered)
    powers = _stage("integrate", integrate, smoothed, part)

    norm = float(np.percentile(powers, _EXPOSURE_PERCENTILE))
    if norm <= 0.0:
        zero = LightMap.zero(len(geometry))
        return ReproduceResult(
            lightmap=zero,
            panel_powers=np.zeros_like(powers),
            exposure_norm=1.0,
            dilation_iterations=0,
            dilation_converged=True,
        )
    result = _stage("dilate", dilate, powers / norm, geometry, cfg)
    weights, weight_scale = _stage("solve_panel", solve_lightmap, result.powers, cal)
    lightmap = LightMap(
        weights=weights,
        dmx=quantize(weights),
        exposure_scalar=norm * weight_scale,
        deficit=result.deficit * norm,
    )
    return ReproduceResult(
        lightmap=lightmap,
        panel_powers=result.powers * norm,
        exposure_norm=norm,
        dilation_iterations=result.iterations,
        dilation_converged=result.converged,
    )
