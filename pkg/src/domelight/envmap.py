"""Equirectangular HDR environment maps: data model, Radiance RGBE IO,
exposure-bracket merging, solid-angle math, and probe-sphere rendering.

Conventions (fixed for the whole package):
  * pixel (i, j) center maps to azimuth  phi   = 2*pi*(i+0.5)/W - pi
                              and polar  theta =   pi*(j+0.5)/H
  * direction d = (sin(theta)*sin(phi), cos(theta), sin(theta)*cos(phi)),
    so +Y is up, the image left edge is phi = -pi, and +Z is the image
    center column.
  * per-pixel solid angle omega(i, j) = (2*pi/W) * (pi/H) * sin(theta).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import (
    FormatError,
    InvariantError,
    IoError,
    RangeError,
    ShapeError,
    TruncatedError,
)

__all__ = [
    "EnvironmentMap",
    "ExposureBracket",
    "pixel_directions",
    "solid_angles",
    "direction_to_pixel",
    "load_hdr",
    "save_hdr",
    "merge_brackets",
    "total_power",
    "render_probe",
]

_MIN_WIDTH = 4
_MIN_HEIGHT = 2


def pixel_directions(width: int, height: int) -> np.ndarray:
    """Unit direction of every pixel center, shape (H, W, 3)."""
    i = np.arange(width)
    j = np.arange(height)
    phi = 2.0 * np.pi * (i + 0.5) / width - np.pi
    theta = np.pi * (j + 0.5) / height
    sin_t = np.sin(theta)[:, None]
    d = np.empty((height, width, 3))
    d[:, :, 0] = sin_t * np.sin(phi)[None, :]
    d[:, :, 1] = np.cos(theta)[:, None]
    d[:, :, 2] = sin_t * np.cos(phi)[None, :]
    return d


def solid_angles(width: int, height: int) -> np.ndarray:
    """Per-pixel solid angle (2pi/W)(pi/H)sin(theta), shape (H, W)."""
    theta = np.pi * (np.arange(height) + 0.5) / height
    col = (2.0 * np.pi / width) * (np.pi / height) * np.sin(theta)
    return np.broadcast_to(col[:, None], (height, width)).copy()


def direction_to_pixel(direction: np.ndarray, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Nearest pixel indices (i, j) for unit directions of shape (..., 3).

    The azimuth wraps; the polar index clamps at the poles.
    """
    d = np.asarray(direction, dtype=float)
    phi = np.arctan2(d[..., 0], d[..., 2])
    theta = np.arccos(np.clip(d[..., 1], -1.0, 1.0))
    i = np.rint((phi + np.pi) * width / (2.0 * np.pi) - 0.5).astype(int) % width
    j = np.clip(np.rint(theta * height / np.pi - 0.5).astype(int), 0, height - 1)
    return i, j


@dataclass(frozen=True)
class EnvironmentMap:
    """Linear-radiance equirectangular image.

    ``pixels`` is (H, W, 3) float64 with every component finite and >= 0.
    Instances are immutable and safe to share across threads.
    """

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise InvariantError(f"pixels must be (H, W, 3), got {px.shape}")
        h, w, _ = px.shape
        if w < _MIN_WIDTH or h < _MIN_HEIGHT:
            raise InvariantError(f"map too small: {w}x{h}, need >= {_MIN_WIDTH}x{_MIN_HEIGHT}")
        if not np.isfinite(px).all():
            raise InvariantError("radiance must be finite (no NaN/Inf)")
        if (px < 0).any():
            raise InvariantError("radiance must be >= 0")
        px = px.copy()
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def directions(self) -> np.ndarray:
        return pixel_directions(self.width, self.height)

    def solid_angles(self) -> np.ndarray:
        return solid_angles(self.width, self.height)


def total_power(env: EnvironmentMap) -> np.ndarray:
    """Sum of radiance * solid angle over all pixels, one value per channel."""
    omega = env.solid_angles()
    return np.einsum("hwc,hw->c", env.pixels, omega)


# ---------------------------------------------------------------------------
# Radiance RGBE (.hdr) files
# ---------------------------------------------------------------------------

_RESOLUTION_RE = re.compile(rb"^-Y (\d+) \+X (\d+)$")


def rgbe_to_float(rgbe: np.ndarray) -> np.ndarray:
    """Decode RGBE bytes (..., 4) to linear RGB (..., 3).

    v = (mantissa + 0.5) * 2**(exponent - 136); a zero exponent byte means
    (0, 0, 0) regardless of mantissas.
    """
    rgbe = np.asarray(rgbe, dtype=np.uint8)
    mant = rgbe[..., :3].astype(np.float64) + 0.5
    expo = rgbe[..., 3].astype(np.int32)
    scale = np.ldexp(1.0, expo - 136)
    rgb = mant * scale[..., None]
    rgb[expo == 0] = 0.0
    return rgb


def float_to_rgbe(rgb: np.ndarray) -> np.ndarray:
    """Encode linear RGB (..., 3) to RGBE bytes (..., 4).

    Shared-exponent scheme: the max channel's mantissa lands in [128, 255],
    other channels truncate. Values that would underflow the exponent byte
    flush to zero; overflow saturates at the largest representable pixel.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    if not np.isfinite(rgb).all() or (rgb < 0).any():
        raise InvariantError("RGBE encode requires finite, non-negative radiance")
    maxc = rgb.max(axis=-1)
    mant, expo = np.frexp(maxc)
    scale = np.ldexp(1.0, 8 - expo)
    out = np.zeros(rgb.shape[:-1] + (4,), dtype=np.uint8)
    mantissas = np.floor(rgb * scale[..., None])
    e_byte = expo + 128
    zero = (maxc < 1e-38) | (e_byte < 1)
    over = e_byte > 255
    mantissas = np.clip(mantissas, 0, 255)
    out[..., :3] = mantissas
    out[..., 3] = np.clip(e_byte, 0, 255)
    out[zero] = 0
    out[over, :3] = 255
    out[over, 3] = 255
    return out


def _read_exact(stream, n: int) -> bytes:
    buf = stream.read(n)
    if len(buf) != n:
        raise TruncatedError(f"expected {n} bytes, got {len(buf)}")
    return buf


def _parse_header(stream) -> tuple[int, int]:
    line = stream.readline()
    if not line.startswith(b"#?"):
        raise FormatError("missing Radiance magic line (#?RADIANCE)")
    fmt_seen = False
    while True:
        line = stream.readline()
        if line == b"":
            raise TruncatedError("header ended before blank line")
        line = line.rstrip(b"\r\n")
        if line == b"":
            break
        if line.startswith(b"FORMAT="):
            if line != b"FORMAT=32-bit_rle_rgbe":
                raise FormatError(f"unsupported format: {line.decode(errors='replace')}")
            fmt_seen = True
        # other header variables (EXPOSURE, comments, ...) are ignored
    if not fmt_seen:
        raise FormatError("header has no FORMAT=32-bit_rle_rgbe line")
    res = stream.readline().rstrip(b"\r\n")
    m = _RESOLUTION_RE.match(res)
    if not m:
        raise FormatError(f"unsupported resolution line: {res.decode(errors='replace')}")
    height, width = int(m.group(1)), int(m.group(2))
    if width < 1 or height < 1:
        raise FormatError("non-positive image dimensions")
    return width, height


def _decode_rle_scanline(stream, width: int) -> np.ndarray:
    """New-style RLE scanline body (the 2,2,hi,lo marker already consumed)."""
    row = np.empty((width, 4), dtype=np.uint8)
    for c in range(4):
        i = 0
        while i < width:
            count = _read_exact(stream, 1)[0]
            if count > 128:
                run = count - 128
                if i + run > width:
                    raise FormatError("RLE run overflows scanline")
                row[i : i + run, c] = _read_exact(stream, 1)[0]
                i += run
            elif count > 0:
                if i + count > width:
                    raise FormatError("RLE literal overflows scanline")
                row[i : i + count, c] = np.frombuffer(_read_exact(stream, count), np.uint8)
                i += count
            else:
                raise FormatError("zero-length RLE record")
    return row


def _decode_scanline(stream, width: int) -> np.ndarray:
    head = _read_exact(stream, 4)
    if head[0] == 2 and head[1] == 2 and head[2] & 0x80 == 0:
        if (head[2] << 8) | head[3] != width:
            raise FormatError("RLE scanline width mismatch")
        return _decode_rle_scanline(stream, width)
    # flat scanline: the four bytes already read are pixel 0
    rest = _read_exact(stream, 4 * (width - 1))
    return np.frombuffer(head + rest, np.uint8).reshape(width, 4)


def load_hdr(path) -> EnvironmentMap:
    """Load a Radiance RGBE file (flat or new-style RLE scanlines)."""
    try:
        f = open(path, "rb")
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    with f:
        width, height = _parse_header(f)
        rgbe = np.empty((height, width, 4), dtype=np.uint8)
        for j in range(height):
            rgbe[j] = _decode_scanline(f, width)
    return EnvironmentMap(rgbe_to_float(rgbe))


def save_hdr(env: EnvironmentMap, path) -> None:
    """Write a Radiance RGBE file with flat (unencoded) scanlines."""
    if not np.isfinite(env.pixels).all() or (env.pixels < 0).any():
        raise InvariantError("map contains NaN/Inf or negative radiance")
    rgbe = float_to_rgbe(env.pixels)
    header = b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n" + f"-Y {env.height} +X {env.width}\n".encode()
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(rgbe.tobytes())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Exposure-bracket merging
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExposureBracket:
    """A stack of 8-bit LDR captures of one scene at increasing exposure.

    ``images`` is (K, H, W, 3) uint8; ``evs`` holds one exposure value in
    stops per image, strictly increasing (higher EV = brighter capture).
    """

    images: np.ndarray
    evs: np.ndarray

    def __post_init__(self) -> None:
        imgs = np.asarray(self.images)
        evs = np.asarray(self.evs, dtype=np.float64)
        if imgs.ndim == 3:
            imgs = imgs[None]
        if imgs.ndim != 4 or imgs.shape[-1] != 3:
            raise ShapeError(f"images must be (K, H, W, 3), got {imgs.shape}")
        if imgs.dtype != np.uint8:
            raise InvariantError("bracket images must be 8-bit (uint8)")
        if imgs.shape[0] < 2:
            raise InvariantError("bracket needs >= 2 images")
        if evs.shape != (imgs.shape[0],):
            raise ShapeError("need exactly one EV per image")
        if not (np.diff(evs) > 0).all():
            raise InvariantError("EVs must be strictly increasing")
        imgs = imgs.copy()
        imgs.flags.writeable = False
        evs = evs.copy()
        evs.flags.writeable = False
        object.__setattr__(self, "images", imgs)
        object.__setattr__(self, "evs", evs)


def merge_brackets(bracket: ExposureBracket, gamma: float = 2.2) -> EnvironmentMap:
    """Merge an exposure bracket into a linear HDR map.

    Each sample is decoded to linear via (z/255)**gamma and divided by
    2**EV; samples are averaged with a triangle hat weight peaking at 127.5
    and vanishing at 0 and 255. Pixels saturated in every image take the
    lowest-EV clip value; pixels that are zero everywhere stay zero.
    """
    if gamma <= 0:
        raise RangeError("gamma must be > 0")
    z = bracket.images.astype(np.float64)
    evs = bracket.evs
    linear = (z / 255.0) ** gamma
    radiance = linear / (2.0 ** evs)[:, None, None, None]
    w = 1.0 - np.abs(z - 127.5) / 127.5
    den = w.sum(axis=0)
    num = (w * radiance).sum(axis=0)
    out = np.divide(num, den, out=np.zeros_like(num), where=den > 0)

    # Weightless pixels: every sample sat at 0 or 255. Saturated-high pixels
    # clip to the lowest-EV estimate; all-zero pixels stay zero.
    dead = den == 0
    if dead.any():
        saturated = z == 255
        any_sat = saturated.any(axis=0)
        first_sat = saturated.argmax(axis=0)
        clip_value = 1.0 / 2.0 ** evs[first_sat]
        out = np.where(dead & any_sat, clip_value, out)
    return EnvironmentMap(out)


# ---------------------------------------------------------------------------
# Probe-sphere rendering
# ---------------------------------------------------------------------------

_PROBE_MODES = ("diffuse", "mirror")


def _probe_normals(size: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthographic sphere normals for a size x size probe image.

    The camera sits on +Z looking down -Z, so visible normals have n_z > 0.
    Returns (normals (S, S, 3), inside mask (S, S)).
    """
    u = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    x = np.broadcast_to(u[None, :], (size, size))
    y = np.broadcast_to(-u[:, None], (size, size))
    r2 = x * x + y * y
    inside = r2 <= 1.0
    z = np.sqrt(np.clip(1.0 - r2, 0.0, None))
    n = np.stack([x, y, z], axis=-1)
    return n, inside


def render_probe(env: EnvironmentMap, mode: str, size: int) -> np.ndarray:
    """Render the environment onto a sphere, orthographic, viewed from +Z.

    ``mirror`` looks the environment up along the reflection of the view ray
    (center pixel reflects straight back to +Z); ``diffuse`` integrates
    cosine-weighted irradiance per normal. Output is linear (S, S, 3);
    pixels outside the sphere are zero.
    """
    if mode not in _PROBE_MODES:
        raise RangeError(f"mode must be one of {_PROBE_MODES}")
    if size < 16:
        raise RangeError("probe size must be >= 16")
    normals, inside = _probe_normals(size)
    out = np.zeros((size, size, 3))

    if mode == "mirror":
        # incoming view ray v = (0,0,-1); r = v - 2 (v.n) n = (2 nx nz, 2 ny nz, 2 nz^2 - 1)
        n = normals[inside]
        refl = np.empty_like(n)
        refl[:, 0] = 2.0 * n[:, 0] * n[:, 2]
        refl[:, 1] = 2.0 * n[:, 1] * n[:, 2]
        refl[:, 2] = 2.0 * n[:, 2] ** 2 - 1.0
        i, j = direction_to_pixel(refl, env.width, env.height)
        out[inside] = env.pixels[j, i]
        return out

    dirs = pixel_directions(env.width, env.height).reshape(-1, 3)
    power = (env.pixels * env.solid_angles()[:, :, None]).reshape(-1, 3)
    n = normals[inside]
    vals = np.empty((n.shape[0], 3))
    chunk = max(1, 8_000_000 // max(dirs.shape[0], 1))
    for start in range(0, n.shape[0], chunk):
        stop = min(start + chunk, n.shape[0])
        cos = n[start:stop] @ dirs.T
        np.clip(cos, 0.0, None, out=cos)
        vals[start:stop] = cos @ power
    out[inside] = vals
    return out
