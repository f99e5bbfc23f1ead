"""Keyframed dynamic-lighting sequences: interpolation in linear drive
space, a seeded lightning-flicker generator, and a drift-free playback
clock built on absolute frame scheduling (target 120 Hz).
"""

from __future__ import annotations

import bisect
import json
import math
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvariantError, IoError, RangeError
from .spectral import LightMap, lightmap_from_bytes, lightmap_to_bytes, quantize

__all__ = [
    "Keyframe",
    "Sequence",
    "sample",
    "flicker_generator",
    "MonotonicClock",
    "VirtualClock",
    "Playback",
    "playback_clock",
    "save_sequence",
    "load_sequence",
]

INTERP_MODES = ("hold", "linear", "smoothstep")

MIN_FPS = 1.0
MAX_FPS = 240.0


@dataclass(frozen=True)
class Keyframe:
    t: float
    lightmap: LightMap
    interp_out: str = "linear"

    def __post_init__(self) -> None:
        if self.t < 0:
            raise InvariantError("keyframe time must be >= 0")
        if self.interp_out not in INTERP_MODES:
            raise InvariantError(f"interp_out must be one of {INTERP_MODES}")


@dataclass(frozen=True)
class Sequence:
    """Time-sorted keyframes with a playback rate and loop flag."""

    keyframes: tuple[Keyframe, ...]
    fps: float = 120.0
    loop: bool = False

    def __post_init__(self) -> None:
        if len(self.keyframes) < 1:
            raise InvariantError("sequence needs at least one keyframe")
        times = [k.t for k in self.keyframes]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvariantError("keyframe times must be strictly increasing")
        counts = {k.lightmap.n_panels for k in self.keyframes}
        if len(counts) != 1:
            raise InvariantError("all keyframes must share one panel count")
        if not (MIN_FPS <= self.fps <= MAX_FPS):
            raise RangeError(f"fps must be in [{MIN_FPS:g}, {MAX_FPS:g}]")
        object.__setattr__(self, "keyframes", tuple(self.keyframes))

    @property
    def duration(self) -> float:
        return self.keyframes[-1].t

    @property
    def n_panels(self) -> int:
        return self.keyframes[0].lightmap.n_panels


def _smoothstep(u: float) -> float:
    return u * u * (3.0 - 2.0 * u)


def sample(seq: Sequence, t: float) -> LightMap:
    """Lighting state at time t: interpolated in linear drive space, then
    quantized. Before the first keyframe the first applies; past the last,
    the last (or the time wraps when looping).
    """
    if t < 0:
        raise RangeError("sample time must be >= 0")
    frames = seq.keyframes
    last_t = frames[-1].t
    if seq.loop and t > last_t and last_t > 0:
        t = math.fmod(t, last_t)
    if t <= frames[0].t:
        return frames[0].lightmap
    if t >= last_t:
        return frames[-1].lightmap
    # strictly inside: find segment [k, k+1) with frames[k].t <= t
    times = [k.t for k in frames]
    idx = bisect.bisect_right(times, t) - 1
    a, b = frames[idx], frames[idx + 1]
    if a.interp_out == "hold":
        return a.lightmap
    u = (t - a.t) / (b.t - a.t)
    if a.interp_out == "smoothstep":
        u = _smoothstep(u)
    wa, wb = a.lightmap.weights, b.lightmap.weights
    weights = wa + (wb - wa) * u
    exposure = a.lightmap.exposure_scalar + (b.lightmap.exposure_scalar - a.lightmap.exposure_scalar) * u
    deficit = a.lightmap.deficit + (b.lightmap.deficit - a.lightmap.deficit) * u
    return LightMap(weights=weights, dmx=quantize(weights), exposure_scalar=exposure, deficit=deficit)


# ---------------------------------------------------------------------------
# Lightning flicker
# ---------------------------------------------------------------------------


def flicker_generator(
    base: LightMap,
    seed: int,
    mean_interval: float,
    burst_len: float,
    peak_gain: float,
    duration: float = 10.0,
    fps: float = 120.0,
) -> Sequence:
    """Seeded Poisson-timed lightning bursts on the white channel.

    Burst start times are cumulative exponential draws (numpy default_rng).
    During a burst the white drive is multiplied toward peak_gain with a
    one-frame linear attack and exponential decay (time constant
    burst_len/3); overlapping bursts take the max envelope. All frames
    clamp into [0, 1] so they stay quantizable.
    """
    if peak_gain < 1.0:
        raise RangeError("peak_gain must be >= 1")
    if mean_interval <= 0 or burst_len <= 0 or duration <= 0:
        raise RangeError("mean_interval, burst_len, duration must be > 0")
    if not (MIN_FPS <= fps <= MAX_FPS):
        raise RangeError(f"fps must be in [{MIN_FPS:g}, {MAX_FPS:g}]")

    rng = np.random.default_rng(seed)
    bursts = []
    t = rng.exponential(mean_interval)
    while t < duration:
        bursts.append(t)
        t += rng.exponential(mean_interval)

    dt = 1.0 / fps
    tau = burst_len / 3.0
    n_frames = int(round(duration * fps)) + 1
    frames = []
    for n in range(n_frames):
        ft = n * dt
        gain = 1.0
        if peak_gain > 1.0:
            env = 0.0
            for bt in bursts:
                d = ft - bt
                if d < 0:
                    continue
                env = max(env, d / dt if d < dt else math.exp(-(d - dt) / tau))
            gain = 1.0 + (peak_gain - 1.0) * env
        weights = base.weights.copy()
        weights[:, 5] = np.clip(weights[:, 5] * gain, 0.0, 1.0)
        lm = LightMap.from_weights(weights, base.exposure_scalar, base.deficit)
        frames.append(Keyframe(t=ft, lightmap=lm, interp_out="linear"))
    return Sequence(keyframes=tuple(frames), fps=fps, loop=False)


# ---------------------------------------------------------------------------
# Playback
# ---------------------------------------------------------------------------


class MonotonicClock:
    """Wall clock with interruptible absolute-deadline waits."""

    def now(self) -> float:
        return time.monotonic()

    def wait_until(self, deadline: float, interrupt: threading.Event) -> None:
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return
            if interrupt.wait(min(remaining, 0.05)):
                return


class VirtualClock:
    """Deterministic test clock. ``wait_until`` jumps time forward, which
    models an ideal scheduler; ``advance``/``set_time`` drive catch-up tests.
    """

    def __init__(self, start: float = 0.0):
        self._now = start

    def now(self) -> float:
        return self._now

    def advance(self, dt: float) -> None:
        if dt < 0:
            raise RangeError("cannot advance a clock backwards")
        self._now += dt

    def set_time(self, t: float) -> None:
        self._now = t

    def wait_until(self, deadline: float, interrupt: threading.Event) -> None:
        if not interrupt.is_set():
            self._now = max(self._now, deadline)


class Playback:
    """Run handle for sequence playback with absolute frame scheduling.

    Frame n is due at t0 + n/fps computed from t0 directly, so schedule
    targets never drift. Late frames are emitted immediately and counted,
    never dropped. ``stop`` is idempotent; a sink exception stops playback
    and surfaces on ``error``.
    """

    def __init__(self, seq: Sequence, sink, *, clock=None, fps: float | None = None, start_offset: float = 0.0):
        fps = seq.fps if fps is None else fps
        if not (MIN_FPS <= fps <= MAX_FPS):
            raise RangeError(f"fps must be in [{MIN_FPS:g}, {MAX_FPS:g}]")
        self.seq = seq
        self.sink = sink
        self.fps = float(fps)
        self.clock = clock if clock is not None else MonotonicClock()
        self.start_offset = float(start_offset)
        if seq.loop:
            self.total_frames = None
        else:
            remaining = max(seq.duration - start_offset, 0.0)
            self.total_frames = max(1, int(round(remaining * self.fps)))
        self.frames_emitted = 0
        self.lateness: list[float] = []
        self.last_lateness = 0.0
        self.error: Exception | None = None
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._t0 = self.clock.now()

    @property
    def finished(self) -> bool:
        if self.error is not None or self._stop.is_set():
            return True
        return self.total_frames is not None and self.frames_emitted >= self.total_frames

    def next_target(self) -> float | None:
        if self.finished:
            return None
        return self._t0 + self.frames_emitted / self.fps

    def step(self) -> bool:
        """Emit the next frame if its schedule time has arrived."""
        target = self.next_target()
        if target is None:
            return False
        now = self.clock.now()
        if now < target:
            return False
        n = self.frames_emitted
        lightmap = sample(self.seq, self.start_offset + n / self.fps)
        self.last_lateness = now - target
        try:
            self.sink(n, lightmap)
        except Exception as exc:  # sink failure stops playback, surfaced on the handle
            self.error = exc
            return False
        self.lateness.append(now - target)
        self.frames_emitted = n + 1
        return True

    def pump(self) -> int:
        """Catch up: emit every frame whose deadline has passed."""
        count = 0
        while self.step():
            count += 1
        return count

    def run(self) -> None:
        """Blocking playback loop (the thread target for ``start``)."""
        while not self.finished:
            target = self.next_target()
            if target is None:
                break
            self.clock.wait_until(target, self._stop)
            if self._stop.is_set():
                break
            self.step()

    def start(self) -> "Playback":
        if self._thread is None:
            self._t0 = self.clock.now()
            self._thread = threading.Thread(target=self.run, name="domelight-playback", daemon=True)
            self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None and self._thread.is_alive():
            self._thread.join(timeout=5.0)

    def join(self, timeout: float | None = None) -> None:
        if self._thread is not None:
            self._thread.join(timeout)


def playback_clock(seq: Sequence, sink, *, clock=None, fps: float | None = None, start_offset: float = 0.0) -> Playback:
    """Create an unstarted playback handle; call .start() or .run()."""
    return Playback(seq, sink, clock=clock, fps=fps, start_offset=start_offset)


# ---------------------------------------------------------------------------
# Sequence files: JSON index + one adjacent binary blob container
# ---------------------------------------------------------------------------


def save_sequence(seq: Sequence, path) -> None:
    """Write ``<path>`` (JSON) plus ``<stem>.lmb`` holding all keyframe
    lightmaps concatenated; each keyframe references its blob by index.
    """
    path = Path(path)
    blob_name = path.stem + ".lmb"
    doc = {
        "version": 1,
        "fps": seq.fps,
        "loop": seq.loop,
        "keyframes": [
            {"t": k.t, "interp": k.interp_out, "lightmap_ref": f"{blob_name}#{i}"}
            for i, k in enumerate(seq.keyframes)
        ],
    }
    try:
        with open(path.parent / blob_name, "wb") as f:
            for k in seq.keyframes:
                f.write(lightmap_to_bytes(k.lightmap))
        with open(path, "w") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_sequence(path) -> Sequence:
    path = Path(path)
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"not valid JSON: {exc}") from exc
    if doc.get("version") != 1:
        raise ConfigError(f"unsupported sequence version: {doc.get('version')!r}")
    try:
        entries = doc["keyframes"]
        fps = float(doc["fps"])
        loop = bool(doc["loop"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed sequence file: {exc}") from exc

    blobs: dict[str, list[LightMap]] = {}
    frames = []
    for e in entries:
        try:
            ref = e["lightmap_ref"]
            blob_name, idx_s = ref.split("#")
            idx = int(idx_s)
            t = float(e["t"])
            interp = e["interp"]
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"malformed keyframe entry: {e!r}") from exc
        if blob_name not in blobs:
            blob_path = path.parent / blob_name
            try:
                buf = blob_path.read_bytes()
            except OSError as exc:
                raise IoError(f"cannot read {blob_path}: {exc}") from exc
            maps = []
            pos = 0
            while pos < len(buf):
                lm, used = lightmap_from_bytes(buf, pos)
                maps.append(lm)
                pos += used
            blobs[blob_name] = maps
        maps = blobs[blob_name]
        if not (0 <= idx < len(maps)):
            raise ConfigError(f"lightmap_ref index {idx} out of range")
        frames.append(Keyframe(t=t, lightmap=maps[idx], interp_out=interp))
    try:
        return Sequence(keyframes=tuple(frames), fps=fps, loop=loop)
    except InvariantError as exc:
        raise ConfigError(str(exc)) from exc
