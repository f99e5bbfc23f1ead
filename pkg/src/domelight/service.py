"""Control service: a project directory on disk, live dome state with
per-panel overrides, sequence transport, previews, and the HTTP + WebSocket
API the console UI drives.

Concurrency: one writer lock serializes edits and transport commands; the
playback thread composes frames from immutable snapshots, so a streamed
frame reflects exactly one override state (edit atomicity).
"""

from __future__ import annotations

import asyncio
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, Response

from . import preview as preview_mod
from .dome import DomeGeometry, generate_dome, load_dome, save_dome
from .envmap import EnvironmentMap, load_hdr
from .errors import ConfigError, DomelightError, NotFoundError, RangeError
from .pipeline import reproduce
from .sequence import MonotonicClock, Playback, Sequence, load_sequence, sample
from .spectral import (
    LightMap,
    SpectralCalibration,
    default_calibration,
    load_calibration,
    quantize,
    save_calibration,
    solve_panel,
)
from .tonemap import DilationConfig
from .transport import ArtNetSender

__all__ = ["Project", "DomeService", "create_app", "load_project", "save_project"]

DEFAULT_PORT = 8000

PORT_ENV_VAR = "DOMELIGHT_PORT"
TRANSPORT_ENV_VAR = "DOMELIGHT_TRANSPORT"


@dataclass
class Project:
    """Everything a dome session references, persisted as a directory."""

    name: str = "untitled"
    dome_file: str = "dome.json"
    calibration_file: str = "calibration.json"
    envmaps: dict = field(default_factory=dict)  # name -> relative path
    sequences: dict = field(default_factory=dict)
    transport_endpoint: str | None = None
    port: int = DEFAULT_PORT
    dilation: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "name": self.name,
            "dome": self.dome_file,
            "calibration": self.calibration_file,
            "envmaps": dict(sorted(self.envmaps.items())),
            "sequences": dict(sorted(self.sequences.items())),
            "transport_endpoint": self.transport_endpoint,
            "port": self.port,
            "dilation": self.dilation,
        }


def save_project(project: Project, directory) -> None:
    path = Path(directory) / "project.json"
    path.write_text(json.dumps(project.to_dict(), indent=2, sort_keys=True) + "\n")


def load_project(directory) -> Project:
    path = Path(directory) / "project.json"
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"no project.json in {directory}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"project.json is not valid JSON: {exc}") from exc
    if doc.get("version") != 1:
        raise ConfigError(f"unsupported project version: {doc.get('version')!r}")
    return Project(
        name=doc.get("name", "untitled"),
        dome_file=doc.get("dome", "dome.json"),
        calibration_file=doc.get("calibration", "calibration.json"),
        envmaps=dict(doc.get("envmaps", {})),
        sequences=dict(doc.get("sequences", {})),
        transport_endpoint=doc.get("transport_endpoint"),
        port=int(doc.get("port", DEFAULT_PORT)),
        dilation=dict(doc.get("dilation", {})),
    )


def ensure_project(directory) -> Project:
    """Load the project, scaffolding a default 480-panel one if absent."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if not (directory / "project.json").exists():
        project = Project()
        save_dome(generate_dome(480), directory / project.dome_file)
        save_calibration(default_calibration(), directory / project.calibration_file)
        (directory / "envmaps").mkdir(exist_ok=True)
        (directory / "sequences").mkdir(exist_ok=True)
        save_project(project, directory)
    return load_project(directory)


def _parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"transport endpoint must be host:port, got {text!r}")
    return host, int(port)


class DomeService:
    """One dome, one project: the single source of truth behind the API."""

    def __init__(
        self,
        project_dir,
        *,
        transport_endpoint: str | None = None,
        clock_factory=None,
        autostart_playback: bool = True,
        frame_observer=None,
    ):
        self.dir = Path(project_dir)
        self.project = ensure_project(self.dir)
        self.dome: DomeGeometry = load_dome(self.dir / self.project.dome_file)
        self.calibration: SpectralCalibration = load_calibration(self.dir / self.project.calibration_file)
        endpoint = (
            transport_endpoint
            or os.environ.get(TRANSPORT_ENV_VAR)
            or self.project.transport_endpoint
        )
        self._sender = ArtNetSender(_parse_endpoint(endpoint)) if endpoint else None
        self._clock_factory = clock_factory or MonotonicClock
        self._autostart = autostart_playback
        self._frame_observer = frame_observer

        # _lock guards quick state mutations and is the only lock the
        # playback thread takes; _command_lock serializes transport commands
        # (which join the playback thread) and is never taken by it.
        self._lock = threading.RLock()
        self._command_lock = threading.Lock()
        self.base_lightmap = LightMap.zero(len(self.dome))
        self.base_info: dict = {"source": None, "deficit": [0.0, 0.0, 0.0], "exposure_scalar": 0.0}
        self.overrides: dict[int, np.ndarray] = {}
        self.playback: Playback | None = None
        self.active_sequence: str | None = None
        self.paused_t: float = 0.0
        self._version = 0
        self._live = {"frame_no": -1, "dmx": self._compose_dmx(self.base_lightmap), "lateness": 0.0}

    # -- state plumbing ------------------------------------------------------

    def _bump(self) -> None:
        self._version += 1

    @property
    def version(self) -> int:
        with self._lock:
            return self._version

    def _compose_dmx(self, lightmap: LightMap) -> list[list[int]]:
        weights = lightmap.weights
        if self.overrides:
            weights = weights.copy()
            for panel_id, w6 in self.overrides.items():
                weights[panel_id] = w6
        return quantize(weights).tolist()

    def _refresh_idle_state(self) -> None:
        self._live = {"frame_no": -1, "dmx": self._compose_dmx(self.base_lightmap), "lateness": 0.0}
        self._bump()
        if self._sender is not None:
            self._send_current()

    def _send_current(self) -> None:
        dmx = np.array(self._live["dmx"], dtype=np.uint8)
        lm = LightMap.from_weights(dmx / 255.0)
        self._sender.send_lightmap(lm, self.dome)

    def _frame_sink(self, frame_no: int, lightmap: LightMap) -> None:
        with self._lock:
            dmx = self._compose_dmx(lightmap)
            lateness = getattr(self.playback, "last_lateness", 0.0) if self.playback else 0.0
            self._live = {"frame_no": frame_no, "dmx": dmx, "lateness": lateness}
            self._bump()
        if self._frame_observer is not None:
            self._frame_observer(frame_no, dmx)
        if self._sender is not None:
            arr = np.array(dmx, dtype=np.uint8)
            self._sender.send_lightmap(LightMap.from_weights(arr / 255.0), self.dome)

    def live_payload(self) -> tuple[int, dict]:
        with self._lock:
            payload = {
                "version": self._version,
                "frame_no": self._live["frame_no"],
                "dmx": self._live["dmx"],
                "lateness": self._live["lateness"],
                "playing": self.is_playing,
                "t": self.transport_time,
            }
            return self._version, payload

    # -- assets ---------------------------------------------------------------

    def envmap_path(self, name: str) -> Path:
        if name not in self.project.envmaps:
            raise NotFoundError(f"no envmap named {name!r}")
        return self.dir / self.project.envmaps[name]

    def load_envmap(self, name: str) -> EnvironmentMap:
        return load_hdr(self.envmap_path(name))

    def upload_envmap(self, name: str, data: bytes) -> None:
        if not name or "/" in name or name.startswith("."):
            raise RangeError(f"bad envmap name: {name!r}")
        with self._lock:
            rel = f"envmaps/{name}.hdr"
            target = self.dir / rel
            target.parent.mkdir(exist_ok=True)
            target.write_bytes(data)
            load_hdr(target)  # validate; leaves file in place only if well-formed
            self.project.envmaps[name] = rel
            save_project(self.project, self.dir)
            self._bump()

    def sequence_path(self, name: str) -> Path:
        if name not in self.project.sequences:
            raise NotFoundError(f"no sequence named {name!r}")
        return self.dir / self.project.sequences[name]

    def load_sequence(self, name: str) -> Sequence:
        return load_sequence(self.sequence_path(name))

    # -- pipeline -------------------------------------------------------------

    def run_reproduce(self, envmap_name: str, dilation: dict | None = None, drop_uncovered: bool = False) -> dict:
        env = self.load_envmap(envmap_name)
        cfg_doc = dict(self.project.dilation)
        cfg_doc.update(dilation or {})
        cfg = DilationConfig.from_dict(cfg_doc) if cfg_doc else DilationConfig()
        result = reproduce(env, self.dome, self.calibration, cfg, drop_uncovered=drop_uncovered)
        with self._lock:
            self.base_lightmap = result.lightmap
            self.base_info = {
                "source": envmap_name,
                "deficit": [float(v) for v in result.lightmap.deficit],
                "exposure_scalar": result.lightmap.exposure_scalar,
                "dilation_iterations": result.dilation_iterations,
                "dilation_converged": result.dilation_converged,
            }
            if not self.is_playing:
                self._refresh_idle_state()
            else:
                self._bump()
        return dict(self.base_info)

    # -- overrides -------------------------------------------------------------

    def set_override(self, panel_id: int, values, mode: str) -> None:
        if not (0 <= panel_id < len(self.dome)):
            raise NotFoundError(f"no panel {panel_id}")
        values = np.asarray(values, dtype=np.float64)
        if mode == "direct":
            if values.shape != (6,):
                raise RangeError("direct override needs six channel weights")
            if (values < 0).any() or (values > 1).any():
                raise RangeError("override weights must lie in [0, 1]")
            w6 = values
        elif mode == "rgb":
            if values.shape != (3,):
                raise RangeError("rgb override needs an RGB triple")
            w6 = solve_panel(values, self.calibration)
            if w6.max() > 1.0 + 1e-9:
                raise RangeError("rgb target outside panel gamut")
            w6 = np.clip(w6, 0.0, 1.0)
        else:
            raise RangeError(f"unknown override mode: {mode!r}")
        with self._lock:
            self.overrides[panel_id] = w6
            if not self.is_playing:
                self._refresh_idle_state()
            else:
                self._bump()

    def clear_override(self, panel_id: int) -> None:
        if not (0 <= panel_id < len(self.dome)):
            raise NotFoundError(f"no panel {panel_id}")
        with self._lock:
            self.overrides.pop(panel_id, None)
            if not self.is_playing:
                self._refresh_idle_state()
            else:
                self._bump()

    # -- transport --------------------------------------------------------------

    @property
    def is_playing(self) -> bool:
        return self.playback is not None and not self.playback.finished

    @property
    def transport_time(self) -> float:
        if self.playback is not None:
            emitted = self.playback.frames_emitted
            t = self.playback.start_offset + max(emitted - 1, 0) / self.playback.fps
            seq_duration = self.playback.seq.duration
            return min(t, seq_duration) if not self.playback.seq.loop else t
        return self.paused_t

    def transport(self, action: str, sequence: str | None = None, t: float | None = None) -> dict:
        with self._command_lock:
            if action == "play":
                name = sequence or self.active_sequence
                if name is None:
                    raise RangeError("no sequence selected")
                seq = self.load_sequence(name)
                if sequence is not None and sequence != self.active_sequence:
                    self.paused_t = 0.0
                self._halt_playback()
                pb = Playback(seq, self._frame_sink, clock=self._clock_factory(), start_offset=self.paused_t)
                with self._lock:
                    self.active_sequence = name
                    self.playback = pb
                    self._bump()
                if self._autostart:
                    pb.start()
            elif action == "pause":
                self._capture_position()
                self._halt_playback()
                with self._lock:
                    self._bump()
            elif action == "seek":
                if t is None:
                    raise RangeError("seek needs t")
                was_playing = self.is_playing
                self._halt_playback()
                name = self.active_sequence
                duration = self.load_sequence(name).duration if name else 0.0
                self.paused_t = min(max(t, 0.0), duration)
                if was_playing and name:
                    seq = self.load_sequence(name)
                    pb = Playback(seq, self._frame_sink, clock=self._clock_factory(), start_offset=self.paused_t)
                    with self._lock:
                        self.playback = pb
                    if self._autostart:
                        pb.start()
                with self._lock:
                    self._bump()
            elif action == "stop":
                self._halt_playback()
                self.paused_t = 0.0
                with self._lock:
                    self._refresh_idle_state()
            else:
                raise RangeError(f"unknown transport action: {action!r}")
            return self.transport_state()

    def _capture_position(self) -> None:
        if self.playback is not None:
            self.paused_t = self.transport_time

    def _halt_playback(self) -> None:
        """Stop and join the playback thread. Callers must hold
        _command_lock but not _lock (the thread needs _lock to finish)."""
        pb = self.playback
        if pb is not None:
            pb.stop()
            with self._lock:
                self.playback = None

    def transport_state(self) -> dict:
        pb = self.playback
        lateness = pb.lateness if pb else []
        return {
            "playing": self.is_playing,
            "sequence": self.active_sequence,
            "t": self.transport_time,
            "fps": pb.fps if pb else None,
            "frames_emitted": pb.frames_emitted if pb else 0,
            "lateness_ms_median": float(np.median(lateness) * 1e3) if lateness else None,
        }

    # -- previews -----------------------------------------------------------------

    def preview(self, kind: str, source: str | None = None, size: int = 128, width: int = 256, height: int = 128) -> bytes:
        envmap = None
        if source and source != "recon":
            envmap = self.load_envmap(source)
        return preview_mod.render_preview(
            kind,
            envmap=envmap,
            lightmap=self.base_lightmap,
            geometry=self.dome,
            calibration=self.calibration,
            size=size,
            width=width,
            height=height,
        )

    # -- summary ---------------------------------------------------------------------

    def summary(self) -> dict:
        with self._lock:
            return {
                "name": self.project.name,
                "n_panels": len(self.dome),
                "universes": sorted({p.universe for p in self.dome.panels}),
                "panel_dirs": [[float(v) for v in p.direction] for p in self.dome.panels],
                "envmaps": sorted(self.project.envmaps),
                "sequences": sorted(self.project.sequences),
                "base_lightmap": dict(self.base_info),
                "overrides": {str(pid): [float(v) for v in w6] for pid, w6 in sorted(self.overrides.items())},
                "transport": self.transport_state(),
                "version": self._version,
            }

    def close(self) -> None:
        with self._command_lock:
            self._halt_playback()
        if self._sender is not None:
            self._sender.close()


def create_app(service: DomeService):
    """FastAPI application wrapping one DomeService."""
    app = FastAPI(title="domelight console API")
    app.state.service = service

    @app.exception_handler(DomelightError)
    async def domain_error(request, exc: DomelightError):
        status = 404 if isinstance(exc, NotFoundError) else 422
        return JSONResponse(status_code=status, content={"error": type(exc).__name__, "detail": str(exc)})

    @app.get("/api/state")
    def get_state():
        return service.summary()

    @app.post("/api/envmap")
    async def post_envmap(request: Request, name: str):
        data = await request.body()
        service.upload_envmap(name, data)
        return {"ok": True, "name": name}

    @app.post("/api/reproduce")
    def post_reproduce(body: dict):
        name = body.get("envmap")
        if not isinstance(name, str):
            raise RangeError("body must include envmap name")
        return service.run_reproduce(
            name,
            dilation=body.get("dilation"),
            drop_uncovered=bool(body.get("drop_uncovered", False)),
        )

    @app.put("/api/panel/{panel_id}/override")
    def put_override(panel_id: int, body: dict):
        mode = body.get("mode", "direct")
        values = body.get("values")
        if values is None:
            raise RangeError("body must include values")
        service.set_override(panel_id, values, mode)
        return {"ok": True, "panel": panel_id}

    @app.delete("/api/panel/{panel_id}/override")
    def delete_override(panel_id: int):
        service.clear_override(panel_id)
        return {"ok": True, "panel": panel_id}

    @app.post("/api/transport")
    def post_transport(body: dict):
        action = body.get("action")
        if not isinstance(action, str):
            raise RangeError("body must include action")
        return service.transport(action, sequence=body.get("sequence"), t=body.get("t"))

    @app.get("/api/preview/{kind}")
    def get_preview(kind: str, source: str | None = None, size: int = 128, width: int = 256, height: int = 128):
        png = service.preview(kind, source=source, size=size, width=width, height=height)
        return Response(content=png, media_type="image/png")

    @app.websocket("/api/live")
    async def live(ws: WebSocket):
        # latest-wins: a slow reader skips intermediate versions entirely;
        # idle streams get a 1 s keepalive so clients can distinguish a
        # quiet console from a dead connection
        await ws.accept()
        last = -1
        last_sent = 0.0
        poll = 1.0 / 120.0  # caps the stream at the playback rate
        keepalive = 1.0
        try:
            while True:
                version, payload = service.live_payload()
                now = time.monotonic()
                if version != last or now - last_sent >= keepalive:
                    await ws.send_json(payload)
                    last = version
                    last_sent = now
                await asyncio.sleep(poll)
        except WebSocketDisconnect:
            pass

    return app
