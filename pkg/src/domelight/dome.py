"""Dome geometry (panel directions, neighbor graph, DMX addressing),
spherical Voronoi partitioning of environment maps, and per-panel
irradiance integration with exact energy closure.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .envmap import EnvironmentMap, pixel_directions, solid_angles
from .errors import ConfigError, InvariantError, IoError, RangeError, ShapeError

__all__ = [
    "PanelDescriptor",
    "DomeGeometry",
    "PartitionMap",
    "DEFAULT_CUTOFF_POLAR",
    "PANELS_PER_UNIVERSE",
    "CHANNELS_PER_PANEL",
    "generate_dome",
    "load_dome",
    "save_dome",
    "partition",
    "integrate",
]

log = logging.getLogger(__name__)

CHANNELS_PER_PANEL = 6
# 85 panels * 6 channels = 510 <= 512, so a panel never straddles universes.
PANELS_PER_UNIVERSE = 85

# Three-quarter sphere with an 8 m opening on a 10 m dome:
# panels stop at polar pi - asin(8/10).
DEFAULT_CUTOFF_POLAR = math.pi - math.asin(0.8)

_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class PanelDescriptor:
    """One light panel: pointing direction and DMX address."""

    id: int
    direction: np.ndarray  # unit 3-vector from dome center
    universe: int
    channel_base: int

    def __post_init__(self) -> None:
        d = np.asarray(self.direction, dtype=np.float64)
        if d.shape != (3,):
            raise InvariantError("panel direction must be a 3-vector")
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise InvariantError(f"panel {self.id} direction is not unit length")
        if self.universe < 0 or not (0 <= self.channel_base and self.channel_base + CHANNELS_PER_PANEL <= 512):
            raise InvariantError(f"panel {self.id} DMX address out of range")
        d = d.copy()
        d.flags.writeable = False
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True)
class DomeGeometry:
    """Immutable set of panels, their neighbor graph, and the polar cutoff.

    ``neighbors[p]`` lists panel ids sorted by angular distance from p; the
    relation is symmetric. Single-panel domes have an empty neighbor list.
    """

    panels: tuple[PanelDescriptor, ...]
    neighbors: tuple[tuple[int, ...], ...]
    cutoff_polar: float
    neighbors_k: int

    def __post_init__(self) -> None:
        if len(self.panels) < 1:
            raise InvariantError("dome needs at least one panel")
        if not (0.0 < self.cutoff_polar <= math.pi):
            raise InvariantError("cutoff_polar must be in (0, pi]")
        addresses = {(p.universe, p.channel_base) for p in self.panels}
        if len(addresses) != len(self.panels):
            raise ConfigError("duplicate DMX address (universe, channel)")
        dirs = self.directions()
        dots = dirs @ dirs.T
        np.fill_diagonal(dots, -2.0)
        if len(self.panels) > 1 and dots.max() >= 1.0 - 1e-12:
            raise ConfigError("duplicate panel directions")
        if len(self.neighbors) != len(self.panels):
            raise InvariantError("one neighbor list per panel required")
        for p, nbs in enumerate(self.neighbors):
            if len(self.panels) > 1 and len(nbs) < 1:
                raise InvariantError(f"panel {p} has no neighbors")
            for q in nbs:
                if p not in self.neighbors[q]:
                    raise InvariantError(f"neighbor relation not symmetric: {p}->{q}")

    def __len__(self) -> int:
        return len(self.panels)

    def directions(self) -> np.ndarray:
        """Panel directions as an (n, 3) array, row p = panel id p."""
        return np.array([p.direction for p in self.panels])

    def nearest_neighbors(self, k: int) -> list[np.ndarray]:
        """The k nearest panel ids per panel by angular distance (ties by id)."""
        dirs = self.directions()
        n = len(self.panels)
        k = min(k, n - 1)
        out = []
        dots = dirs @ dirs.T
        np.fill_diagonal(dots, -2.0)
        for p in range(n):
            order = np.argsort(-dots[p], kind="stable")
            out.append(order[:k])
        return out


def generate_dome(
    n_panels: int,
    cutoff_polar: float = DEFAULT_CUTOFF_POLAR,
    universes_base: int = 0,
    neighbors_k: int = 6,
) -> DomeGeometry:
    """Place ``n_panels`` on a spherical Fibonacci spiral down to ``cutoff_polar``.

    Panel 0 sits at the zenith (+Y); panel n-1 at the cutoff. DMX addresses
    run sequentially, 6 channels per panel, 85 panels per universe.
    """
    if n_panels < 1:
        raise RangeError("n_panels must be >= 1")
    if not (0.0 < cutoff_polar <= math.pi):
        raise RangeError("cutoff_polar must be in (0, pi]")
    if n_panels == 1:
        cos_theta = np.array([1.0])
    else:
        # midpoint lattice: equal-area bands between pole and cutoff
        span = 1.0 - math.cos(cutoff_polar)
        cos_theta = 1.0 - span * (np.arange(n_panels) + 0.5) / n_panels
    theta = np.arccos(np.clip(cos_theta, -1.0, 1.0))
    phi = np.arange(n_panels) * _GOLDEN_ANGLE
    sin_t = np.sin(theta)
    dirs = np.stack([sin_t * np.sin(phi), np.cos(theta), sin_t * np.cos(phi)], axis=-1)
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)

    panels = tuple(
        PanelDescriptor(
            id=i,
            direction=dirs[i],
            universe=universes_base + i // PANELS_PER_UNIVERSE,
            channel_base=(i % PANELS_PER_UNIVERSE) * CHANNELS_PER_PANEL,
        )
        for i in range(n_panels)
    )
    neighbors = _symmetric_knn(dirs, neighbors_k)
    return DomeGeometry(panels=panels, neighbors=neighbors, cutoff_polar=cutoff_polar, neighbors_k=neighbors_k)


def _symmetric_knn(dirs: np.ndarray, k: int) -> tuple[tuple[int, ...], ...]:
    n = dirs.shape[0]
    if n == 1:
        return ((),)
    k = min(k, n - 1)
    dots = dirs @ dirs.T
    np.fill_diagonal(dots, -2.0)
    adjacency: list[set[int]] = [set() for _ in range(n)]
    for p in range(n):
        for q in np.argsort(-dots[p], kind="stable")[:k]:
            adjacency[p].add(int(q))
            adjacency[int(q)].add(p)
    lists = []
    for p in range(n):
        nbs = sorted(adjacency[p], key=lambda q: (-dots[p, q], q))
        lists.append(tuple(nbs))
    return tuple(lists)


# ---------------------------------------------------------------------------
# Geometry files
# ---------------------------------------------------------------------------


def save_dome(geometry: DomeGeometry, path) -> None:
    doc = {
        "version": 1,
        "cutoff_polar": geometry.cutoff_polar,
        "neighbors_k": geometry.neighbors_k,
        "panels": [
            {
                "id": p.id,
                "dir": [float(x) for x in p.direction],
                "universe": p.universe,
                "channel": p.channel_base,
            }
            for p in geometry.panels
        ],
    }
    try:
        with open(path, "w") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_dome(path) -> DomeGeometry:
    """Load a dome geometry file, re-normalizing slightly off-unit directions.

    Direction magnitude off by more than 1e-3 or a duplicate DMX address is
    a ConfigError; off by more than 1e-6 logs a warning.
    """
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"not valid JSON: {exc}") from exc
    if doc.get("version") != 1:
        raise ConfigError(f"unsupported geometry file version: {doc.get('version')!r}")
    try:
        entries = sorted(doc["panels"], key=lambda e: e["id"])
        cutoff = float(doc["cutoff_polar"])
        neighbors_k = int(doc.get("neighbors_k", 6))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed geometry file: {exc}") from exc
    if [e["id"] for e in entries] != list(range(len(entries))):
        raise ConfigError("panel ids must be 0..n-1 without gaps")
    dirs = []
    panels = []
    for e in entries:
        d = np.asarray(e["dir"], dtype=np.float64)
        if d.shape != (3,):
            raise ConfigError(f"panel {e['id']}: direction must be a 3-vector")
        norm = float(np.linalg.norm(d))
        if abs(norm - 1.0) > 1e-3:
            raise ConfigError(f"panel {e['id']}: direction magnitude {norm:.6f} is not unit")
        if abs(norm - 1.0) > 1e-6:
            log.warning("panel %d: direction off unit by %.2e, re-normalizing", e["id"], abs(norm - 1.0))
        if abs(norm - 1.0) > 1e-9:
            d = d / norm
        dirs.append(d)
        panels.append(
            PanelDescriptor(id=e["id"], direction=d, universe=int(e["universe"]), channel_base=int(e["channel"]))
        )
    neighbors = _symmetric_knn(np.array(dirs), neighbors_k)
    try:
        return DomeGeometry(panels=tuple(panels), neighbors=neighbors, cutoff_polar=cutoff, neighbors_k=neighbors_k)
    except InvariantError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Voronoi partition and irradiance integration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PartitionMap:
    """Per-pixel Voronoi ownership of an equirect grid.

    ``owner`` is (H, W) int32 panel ids (-1 = dropped below-cutoff pixel),
    ``weight`` is omega * max(0, cos angle to owner), and ``cell_norm[p]``
    is the weight sum over p's cell.
    """

    owner: np.ndarray
    weight: np.ndarray
    cell_norm: np.ndarray

    @property
    def width(self) -> int:
        return self.owner.shape[1]

    @property
    def height(self) -> int:
        return self.owner.shape[0]

    @property
    def n_panels(self) -> int:
        return self.cell_norm.shape[0]


def partition(geometry: DomeGeometry, width: int, height: int, drop_uncovered: bool = False) -> PartitionMap:
    """Assign every pixel to its angularly nearest panel (ties to lowest id).

    Pixels below the dome cutoff stay assigned to their nearest panel so no
    energy is lost, unless ``drop_uncovered`` marks them unowned (-1).
    """
    if width < 8 or height < 4:
        raise RangeError("partition needs a grid of at least 8x4")
    dirs = pixel_directions(width, height).reshape(-1, 3)
    pdirs = geometry.directions()
    m = dirs.shape[0]
    owner = np.empty(m, dtype=np.int32)
    own_dot = np.empty(m)
    chunk = max(1, 4_000_000 // max(len(geometry), 1))
    for start in range(0, m, chunk):
        stop = min(start + chunk, m)
        dots = dirs[start:stop] @ pdirs.T
        owner[start:stop] = np.argmax(dots, axis=1)
        own_dot[start:stop] = dots[np.arange(stop - start), owner[start:stop]]
    omega = solid_angles(width, height).reshape(-1)
    weight = omega * np.clip(own_dot, 0.0, None)
    if drop_uncovered:
        theta = np.pi * (np.arange(height) + 0.5) / height
        dropped = np.broadcast_to((theta > geometry.cutoff_polar)[:, None], (height, width)).reshape(-1)
        owner = np.where(dropped, np.int32(-1), owner)
        weight = np.where(dropped, 0.0, weight)
    valid = owner >= 0
    cell_norm = np.bincount(owner[valid], weights=weight[valid], minlength=len(geometry))
    return PartitionMap(
        owner=owner.reshape(height, width),
        weight=weight.reshape(height, width),
        cell_norm=cell_norm,
    )


def integrate(env: EnvironmentMap, part: PartitionMap) -> np.ndarray:
    """Per-panel RGB power, cos-weighted per cell, renormalized per channel
    so the panel powers sum exactly to the map's total power.

    Returns an (n_panels, 3) array. Empty cells get zero power. If a
    channel's cos-weighted sums vanish while the map still has energy (every
    lit pixel > 90 degrees from its nearest panel), that channel falls back
    to plain solid-angle binning so the energy closure still holds.
    """
    if (env.height, env.width) != (part.height, part.width):
        raise ShapeError(
            f"map {env.width}x{env.height} does not match partition {part.width}x{part.height}"
        )
    n = part.n_panels
    owner = part.owner.reshape(-1)
    weight = part.weight.reshape(-1)
    omega = solid_angles(env.width, env.height).reshape(-1)
    radiance = env.pixels.reshape(-1, 3)
    valid = owner >= 0
    ids = owner[valid]

    cell_omega = np.bincount(ids, weights=omega[valid], minlength=n)
    out = np.empty((n, 3))
    for c in range(3):
        num = np.bincount(ids, weights=radiance[valid, c] * weight[valid], minlength=n)
        raw = np.divide(num, part.cell_norm, out=np.zeros(n), where=part.cell_norm > 0)
        out[:, c] = raw * cell_omega
        target = float(np.dot(radiance[valid, c], omega[valid]))
        got = float(out[:, c].sum())
        if got > 0.0:
            out[:, c] *= target / got
        elif target > 0.0:
            out[:, c] = np.bincount(ids, weights=radiance[valid, c] * omega[valid], minlength=n)
    return out
