"""Preview image generation: probe renders, reconstruction views, and the
Voronoi-cell overlay, encoded as deterministic PNG bytes.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

from .dome import DomeGeometry, partition
from .envmap import EnvironmentMap, render_probe
from .errors import RangeError
from .spectral import LightMap, SpectralCalibration, reconstruct_env

__all__ = ["PREVIEW_KINDS", "encode_png", "tone_map", "panel_color", "render_preview"]

PREVIEW_KINDS = ("probe_diffuse", "probe_mirror", "recon_env", "voronoi_overlay")


def tone_map(linear: np.ndarray) -> np.ndarray:
    """Fixed display transform for previews: Reinhard then gamma 2.2."""
    x = np.clip(linear, 0.0, None)
    x = x / (1.0 + x)
    return (np.clip(x, 0.0, 1.0) ** (1.0 / 2.2) * 255.0 + 0.5).astype(np.uint8)


def encode_png(rgb8: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(rgb8, mode="RGB").save(buf, format="PNG", optimize=False, compress_level=6)
    return buf.getvalue()


def panel_color(panel_id: int) -> tuple[int, int, int]:
    """Distinct, deterministic color per panel id (unique for id < 65536)."""
    return (panel_id % 256, panel_id // 256, 128 + (panel_id * 37) % 128)


def voronoi_overlay(geometry: DomeGeometry, width: int, height: int) -> np.ndarray:
    part = partition(geometry, width, height)
    palette = np.array([panel_color(p) for p in range(len(geometry))], dtype=np.uint8)
    return palette[part.owner]


def render_preview(
    kind: str,
    *,
    envmap: EnvironmentMap | None = None,
    lightmap: LightMap | None = None,
    geometry: DomeGeometry | None = None,
    calibration: SpectralCalibration | None = None,
    size: int = 128,
    width: int = 256,
    height: int = 128,
) -> bytes:
    """Produce PNG bytes for one preview kind from whichever inputs it needs."""
    if kind not in PREVIEW_KINDS:
        raise RangeError(f"preview kind must be one of {PREVIEW_KINDS}")
    if kind == "voronoi_overlay":
        if geometry is None:
            raise RangeError("voronoi_overlay needs a dome geometry")
        return encode_png(voronoi_overlay(geometry, width, height))
    if kind == "recon_env":
        if lightmap is None or geometry is None or calibration is None:
            raise RangeError("recon_env needs lightmap, geometry, and calibration")
        env = reconstruct_env(lightmap, geometry, calibration, width, height)
        return encode_png(tone_map(env.pixels))
    # probe kinds: render either a named envmap or the reconstruction
    if envmap is None:
        if lightmap is None or geometry is None or calibration is None:
            raise RangeError("probe preview needs an envmap or a lightmap+geometry+calibration")
        envmap = reconstruct_env(lightmap, geometry, calibration, width, height)
    mode = "diffuse" if kind == "probe_diffuse" else "mirror"
    return encode_png(tone_map(render_probe(envmap, mode, size)))
