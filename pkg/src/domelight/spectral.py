"""Six-spectrum LED solve: non-negative least squares against a calibrated
LED basis, 8-bit quantization, and the virtual-dome reconstruction used for
closed-loop validation.

LED channel order everywhere: Red, Green, Blue, Amber, Cyan, White.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .dome import DomeGeometry, partition
from .envmap import EnvironmentMap, solid_angles
from .errors import ConfigError, InvariantError, IoError, RangeError, ShapeError, SolverError

__all__ = [
    "N_LED_CHANNELS",
    "LED_NAMES",
    "SpectralCalibration",
    "LightMap",
    "nnls",
    "calibrate_from_chart",
    "solve_panel",
    "solve_lightmap",
    "quantize",
    "dequantize",
    "reconstruct_env",
    "default_calibration",
    "load_calibration",
    "save_calibration",
    "save_lightmap",
    "load_lightmap",
    "lightmap_to_bytes",
    "lightmap_from_bytes",
]

N_LED_CHANNELS = 6
LED_NAMES = ("red", "green", "blue", "amber", "cyan", "white")


def nnls(A: np.ndarray, b: np.ndarray, max_iters: int | None = None) -> np.ndarray:
    """Solve min ||Ax - b||_2 subject to x >= 0 by Lawson-Hanson active set.

    Terminates with KKT residuals at machine-precision scale: the gradient
    vanishes on passive coordinates and is non-negative-pointing (w <= tol)
    on active ones. Raises SolverError after 3n index additions, which does
    not happen on well-conditioned inputs.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if A.ndim != 2:
        raise ShapeError("A must be 2-D")
    m, n = A.shape
    if m < 1 or n < 1:
        raise ShapeError("A must be at least 1x1")
    if b.shape != (m,):
        raise ShapeError(f"b must have shape ({m},), got {b.shape}")
    if not (np.isfinite(A).all() and np.isfinite(b).all()):
        raise InvariantError("nnls requires finite inputs")

    max_iters = max_iters or 3 * n
    scale = np.abs(A).max(initial=0.0) * max(np.abs(b).max(initial=0.0), 1.0)
    tol = 100.0 * np.finfo(np.float64).eps * max(scale, 1.0) * max(m, n)

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    additions = 0
    while True:
        w = A.T @ (b - A @ x)
        candidates = ~passive
        if not candidates.any() or w[candidates].max() <= tol:
            return x
        j = int(np.flatnonzero(candidates)[np.argmax(w[candidates])])
        passive[j] = True
        additions += 1
        if additions > max_iters:
            raise SolverError(f"no convergence after {max_iters} iterations")
        while True:
            z = np.zeros(n)
            z[passive], *_ = np.linalg.lstsq(A[:, passive], b, rcond=None)
            if z[passive].min() > 0:
                x = z
                break
            blocking = passive & (z <= 0)
            ratios = x[blocking] / (x[blocking] - z[blocking])
            alpha = ratios.min()
            x = x + alpha * (z - x)
            passive &= x > tol
            x[~passive] = 0.0
            if not passive.any():
                x = np.zeros(n)
                break


@dataclass(frozen=True)
class SpectralCalibration:
    """LED-basis response used by the spectral solve.

    ``rgb3`` mode: led_basis is (3, 6), direct camera-linear RGB response of
    each channel at full drive. ``chart24`` mode: led_basis is (72, 6), 24
    chart patches x 3 camera channels per LED (row 3p+k = patch p, channel
    k); chart_reflectance holds the 24 patch RGB reflectances.

    A 3x6 basis can never have full column rank, so six-primary metamers
    are inherent; the solver's deterministic pivot order picks one. The
    basis condition number is exposed for diagnostics.
    """

    mode: str
    led_basis: np.ndarray
    chart_reflectance: np.ndarray | None = None

    def __post_init__(self) -> None:
        basis = np.asarray(self.led_basis, dtype=np.float64)
        if self.mode not in ("rgb3", "chart24"):
            raise ConfigError(f"unknown calibration mode: {self.mode!r}")
        rows = 3 if self.mode == "rgb3" else 72
        if basis.shape != (rows, N_LED_CHANNELS):
            raise ConfigError(f"{self.mode} basis must be ({rows}, {N_LED_CHANNELS}), got {basis.shape}")
        if not np.isfinite(basis).all() or (basis < 0).any():
            raise ConfigError("basis entries must be finite and >= 0")
        dead = ~basis.any(axis=0)
        if dead.any():
            names = [LED_NAMES[c] for c in np.flatnonzero(dead)]
            raise ConfigError(f"dead LED channel(s): {', '.join(names)}")
        basis = basis.copy()
        basis.flags.writeable = False
        object.__setattr__(self, "led_basis", basis)
        if self.mode == "chart24":
            refl = np.asarray(self.chart_reflectance, dtype=np.float64)
            if refl.shape != (24, 3):
                raise ConfigError("chart24 calibration needs (24, 3) reflectances")
            if not np.isfinite(refl).all() or (refl < 0).any():
                raise ConfigError("reflectances must be finite and >= 0")
            refl = refl.copy()
            refl.flags.writeable = False
            object.__setattr__(self, "chart_reflectance", refl)

    @property
    def condition(self) -> float:
        s = np.linalg.svd(self.led_basis, compute_uv=False)
        return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")

    @property
    def rgb_basis(self) -> np.ndarray:
        """(3, 6) camera-RGB emitted per unit drive of each LED channel.

        For chart24 this divides the most neutral bright patch's readings by
        its reflectance to estimate the raw illuminant response.
        """
        if self.mode == "rgb3":
            return self.led_basis
        p = int(np.argmax(self.chart_reflectance.min(axis=1)))
        rows = self.led_basis[3 * p : 3 * p + 3, :]
        return rows / self.chart_reflectance[p][:, None]

    @property
    def white_point(self) -> np.ndarray:
        """Camera RGB of all six channels at full drive."""
        return self.rgb_basis @ np.ones(N_LED_CHANNELS)


def default_calibration() -> SpectralCalibration:
    """Synthetic idealized narrowband calibration shipped for dome-less use.

    Columns: R, G, B, amber, cyan, white. Row sums stay <= 2 so the 8-bit
    quantization error bound 1/255 per emitted channel holds.
    """
    basis = np.array(
        [
            [1.0, 0.0, 0.0, 0.50, 0.00, 1.0 / 3.0],
            [0.0, 1.0, 0.0, 0.25, 0.25, 1.0 / 3.0],
            [0.0, 0.0, 1.0, 0.00, 0.50, 1.0 / 3.0],
        ]
    )
    return SpectralCalibration(mode="rgb3", led_basis=basis)


def calibrate_from_chart(per_led_chart_captures: np.ndarray, chart_reflectance: np.ndarray) -> SpectralCalibration:
    """Build a chart24 calibration from 24-patch captures under each LED.

    ``per_led_chart_captures`` is (6, 24, 3): camera RGB of every patch with
    one LED channel at full drive. Linearity is assumed (drive w scales the
    readings by w). An all-zero capture column means a dead channel.
    """
    caps = np.asarray(per_led_chart_captures, dtype=np.float64)
    if caps.shape != (N_LED_CHANNELS, 24, 3):
        raise ShapeError(f"captures must be (6, 24, 3), got {caps.shape}")
    if not np.isfinite(caps).all() or (caps < 0).any():
        raise ConfigError("captures must be finite and >= 0")
    basis = np.empty((72, N_LED_CHANNELS))
    for c in range(N_LED_CHANNELS):
        basis[:, c] = caps[c].reshape(-1)
    return SpectralCalibration(mode="chart24", led_basis=basis, chart_reflectance=chart_reflectance)


def solve_panel(target_rgb: np.ndarray, cal: SpectralCalibration) -> np.ndarray:
    """Raw (unnormalized) six-channel drive weights for one panel's target RGB.

    chart24 mode promotes the target to chart space first: the target acts
    as the illuminant scaling each patch's reflected appearance,
    b[3p+k] = target_k * reflectance[p, k].
    """
    t = np.asarray(target_rgb, dtype=np.float64)
    if t.shape != (3,):
        raise ShapeError("target must be an RGB triple")
    if (t < 0).any():
        raise RangeError("target RGB must be >= 0")
    if cal.mode == "rgb3":
        b = t
    else:
        b = (cal.chart_reflectance * t[None, :]).reshape(-1)
    return nnls(cal.led_basis, b)


def solve_lightmap(targets: np.ndarray, cal: SpectralCalibration) -> tuple[np.ndarray, float]:
    """Solve every panel and apply the shared brightest-weight normalization.

    Returns (weights (n, 6) in [0, 1], scale) where scale >= 1 is what the
    raw weights were divided by; emitted power in target units is
    scale * rgb_basis @ weights.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim != 2 or targets.shape[1] != 3:
        raise ShapeError("targets must be (n, 3)")
    weights = np.empty((targets.shape[0], N_LED_CHANNELS))
    for p in range(targets.shape[0]):
        weights[p] = solve_panel(targets[p], cal)
    peak = float(weights.max(initial=0.0))
    scale = max(peak, 1.0)
    return weights / scale, scale


def quantize(weights: np.ndarray) -> np.ndarray:
    """Map drive weights in [0, 1] to DMX bytes, rounding half up.

    Values outside [0, 1] by more than 1e-9 raise RangeError; inside the
    tolerance they clamp.
    """
    w = np.asarray(weights, dtype=np.float64)
    if (w < -1e-9).any() or (w > 1.0 + 1e-9).any():
        raise RangeError("weights must lie in [0, 1]")
    w = np.clip(w, 0.0, 1.0)
    return np.floor(w * 255.0 + 0.5).astype(np.uint8)


def dequantize(dmx: np.ndarray) -> np.ndarray:
    return np.asarray(dmx, dtype=np.float64) / 255.0


@dataclass(frozen=True)
class LightMap:
    """Per-panel six-channel drive state, the pipeline's central output.

    ``weights`` are drive levels in [0, 1]; ``dmx`` is their 8-bit
    quantization; ``exposure_scalar`` links drive units back to the source
    map's radiance units (absolute emitted power per panel is
    exposure_scalar * rgb_basis @ weights); ``deficit`` is the per-channel
    energy the dome could not absorb, in those same absolute units.
    """

    weights: np.ndarray
    dmx: np.ndarray
    exposure_scalar: float
    deficit: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] != N_LED_CHANNELS:
            raise InvariantError(f"weights must be (n, {N_LED_CHANNELS}), got {w.shape}")
        if (w < 0).any() or (w > 1).any() or not np.isfinite(w).all():
            raise InvariantError("weights must lie in [0, 1]")
        d = np.asarray(self.dmx, dtype=np.uint8)
        if d.shape != w.shape:
            raise InvariantError("dmx shape must match weights")
        if not np.array_equal(d, quantize(w)):
            raise InvariantError("dmx must equal quantize(weights)")
        deficit = np.asarray(self.deficit, dtype=np.float64)
        if deficit.shape != (3,):
            raise InvariantError("deficit must be an RGB triple")
        w = w.copy()
        w.flags.writeable = False
        d = d.copy()
        d.flags.writeable = False
        deficit = deficit.copy()
        deficit.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "dmx", d)
        object.__setattr__(self, "deficit", deficit)

    @property
    def n_panels(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def from_weights(cls, weights: np.ndarray, exposure_scalar: float = 1.0, deficit=None) -> "LightMap":
        w = np.asarray(weights, dtype=np.float64)
        if deficit is None:
            deficit = np.zeros(3)
        return cls(weights=w, dmx=quantize(w), exposure_scalar=float(exposure_scalar), deficit=deficit)

    @classmethod
    def zero(cls, n_panels: int) -> "LightMap":
        return cls.from_weights(np.zeros((n_panels, N_LED_CHANNELS)))

    def with_panel(self, panel_id: int, weights6: np.ndarray) -> "LightMap":
        w = self.weights.copy()
        w[panel_id] = weights6
        return LightMap.from_weights(w, self.exposure_scalar, self.deficit)


def reconstruct_env(
    lightmap: LightMap,
    geometry: DomeGeometry,
    cal: SpectralCalibration,
    width: int,
    height: int,
) -> EnvironmentMap:
    """Paint each panel's emitted RGB uniformly over its Voronoi cell.

    Cell radiance is chosen so the cell-integrated power equals the panel's
    absolute emitted power: the dome's best-case rendering of its target.
    """
    if lightmap.n_panels != len(geometry):
        raise ShapeError("lightmap panel count does not match dome")
    part = partition(geometry, width, height)
    emitted = lightmap.weights @ cal.rgb_basis.T * lightmap.exposure_scalar  # (n, 3) power
    omega = solid_angles(width, height)
    cell_omega = np.bincount(part.owner.reshape(-1), weights=omega.reshape(-1), minlength=len(geometry))
    radiance_per_panel = np.divide(
        emitted, cell_omega[:, None], out=np.zeros_like(emitted), where=cell_omega[:, None] > 0
    )
    return EnvironmentMap(radiance_per_panel[part.owner])


# ---------------------------------------------------------------------------
# Calibration files
# ---------------------------------------------------------------------------


def save_calibration(cal: SpectralCalibration, path) -> None:
    doc: dict = {
        "version": 1,
        "mode": cal.mode,
        "led_basis": [float(v) for v in cal.led_basis.reshape(-1)],
        "white_point": [float(v) for v in cal.white_point],
    }
    if cal.chart_reflectance is not None:
        doc["chart_reflectance"] = [float(v) for v in cal.chart_reflectance.reshape(-1)]
    try:
        with open(path, "w") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_calibration(path) -> SpectralCalibration:
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"not valid JSON: {exc}") from exc
    if doc.get("version") != 1:
        raise ConfigError(f"unsupported calibration version: {doc.get('version')!r}")
    mode = doc.get("mode")
    rows = 3 if mode == "rgb3" else 72
    try:
        basis = np.asarray(doc["led_basis"], dtype=np.float64).reshape(rows, N_LED_CHANNELS)
        refl = None
        if mode == "chart24":
            refl = np.asarray(doc["chart_reflectance"], dtype=np.float64).reshape(24, 3)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"malformed calibration file: {exc}") from exc
    return SpectralCalibration(mode=mode, led_basis=basis, chart_reflectance=refl)


# ---------------------------------------------------------------------------
# LightMap blobs
# ---------------------------------------------------------------------------

_LIGHTMAP_MAGIC = b"LMP1"


class TruncatedBlob(ConfigError):
    """Lightmap blob shorter than its header promises."""


def lightmap_to_bytes(lightmap: LightMap) -> bytes:
    head = _LIGHTMAP_MAGIC + struct.pack(
        "<Idddd",
        lightmap.n_panels,
        lightmap.exposure_scalar,
        *lightmap.deficit,
    )
    return head + lightmap.dmx.tobytes() + lightmap.weights.astype("<f8").tobytes()


def lightmap_from_bytes(buf: bytes, offset: int = 0) -> tuple[LightMap, int]:
    """Decode one lightmap blob; returns (lightmap, bytes consumed)."""
    fixed = struct.calcsize("<Idddd")
    if len(buf) - offset < 4 + fixed:
        raise TruncatedBlob()
    if buf[offset : offset + 4] != _LIGHTMAP_MAGIC:
        raise ConfigError("bad lightmap magic")
    n, exposure, d0, d1, d2 = struct.unpack_from("<Idddd", buf, offset + 4)
    pos = offset + 4 + fixed
    need = n * N_LED_CHANNELS
    if len(buf) - pos < need + need * 8:
        raise TruncatedBlob()
    dmx = np.frombuffer(buf, np.uint8, need, pos).reshape(n, N_LED_CHANNELS)
    pos += need
    weights = np.frombuffer(buf, "<f8", need, pos).reshape(n, N_LED_CHANNELS)
    pos += need * 8
    lm = LightMap(weights=weights, dmx=dmx, exposure_scalar=exposure, deficit=np.array([d0, d1, d2]))
    return lm, pos - offset


def save_lightmap(lightmap: LightMap, path) -> None:
    try:
        with open(path, "wb") as f:
            f.write(lightmap_to_bytes(lightmap))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_lightmap(path) -> LightMap:
    try:
        with open(path, "rb") as f:
            buf = f.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    lm, used = lightmap_from_bytes(buf)
    if used != len(buf):
        raise ConfigError("trailing bytes after lightmap blob")
    return lm
