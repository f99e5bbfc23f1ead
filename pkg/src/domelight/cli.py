"""Batch and headless entry points for every pipeline stage.

Exit codes: 0 success, 1 IO failure, 2 validation failure. All randomized
features take an explicit --seed; --deterministic suppresses wall-clock
fields in outputs.
"""

from __future__ import annotations

import functools
import json
import math
import sys
import time
from pathlib import Path

import click
import numpy as np
from PIL import Image

from . import preview as preview_mod
from .dome import DEFAULT_CUTOFF_POLAR, generate_dome, load_dome, save_dome
from .envmap import ExposureBracket, load_hdr, merge_brackets, save_hdr
from .errors import DomelightError, IoError
from .pipeline import reproduce
from .sequence import Playback, VirtualClock, load_sequence
from .spectral import (
    calibrate_from_chart,
    load_calibration,
    load_lightmap,
    save_calibration,
    save_lightmap,
)
from .tonemap import DilationConfig
from .transport import ArtNetSender, LoopbackSink
from .service import DomeService, create_app

EXIT_OK = 0
EXIT_IO = 1
EXIT_INVALID = 2


def handle_errors(fn):
    """Map domain errors to exit 2 and OS-level errors to exit 1."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except IoError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_IO)
        except DomelightError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_INVALID)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_IO)

    return wrapper


@click.group()
@click.version_option()
def main():
    """Dome lighting reproduction toolkit."""


@main.command()
@click.option("--image", "images", type=click.Path(exists=True, path_type=Path), multiple=True, required=True, help="LDR bracket image (repeat, darkest first).")
@click.option("--ev", "evs", type=float, multiple=True, required=True, help="Exposure value in stops, one per image, increasing.")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="Output Radiance .hdr file.")
@click.option("--gamma", type=float, default=2.2, show_default=True, help="LDR decode gamma.")
@handle_errors
def merge(images, evs, out, gamma):
    """Merge an exposure bracket into an HDR environment map."""
    if len(images) != len(evs):
        raise click.UsageError("--image and --ev counts must match")
    stack = []
    for p in images:
        arr = np.asarray(Image.open(p).convert("RGB"), dtype=np.uint8)
        stack.append(arr)
    bracket = ExposureBracket(images=np.stack(stack), evs=np.array(evs))
    env = merge_brackets(bracket, gamma=gamma)
    save_hdr(env, out)
    click.echo(f"wrote {out} ({env.width}x{env.height})")


def _dilation_options(fn):
    fn = click.option("--cap", type=float, default=1.0, show_default=True, help="Per-channel panel cap in normalized drive units.")(fn)
    fn = click.option("--blur-sigma-deg", type=float, default=3.0, show_default=True, help="Highlight blur angular sigma (degrees).")(fn)
    fn = click.option("--highlight-percentile", type=float, default=99.0, show_default=True, help="Luminance percentile above which pixels are blurred.")(fn)
    fn = click.option("--max-iters", type=int, default=64, show_default=True, help="Dilation iteration limit.")(fn)
    fn = click.option("--k-spread", type=int, default=6, show_default=True, help="Neighbor count per dilation step.")(fn)
    return fn


@main.command(name="reproduce")
@click.option("--hdr", type=click.Path(exists=True, path_type=Path), required=True, help="Input Radiance .hdr environment map.")
@click.option("--dome", "dome_path", type=click.Path(exists=True, path_type=Path), required=True, help="Dome geometry JSON.")
@click.option("--calibration", type=click.Path(exists=True, path_type=Path), required=True, help="Spectral calibration JSON.")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="Output LightMap blob; a JSON sidecar lands next to it.")
@click.option("--drop-uncovered", is_flag=True, help="Drop energy below the dome cutoff instead of assigning it to edge panels.")
@click.option("--deterministic", is_flag=True, help="Suppress wall-clock fields in the sidecar.")
@_dilation_options
@handle_errors
def reproduce_cmd(hdr, dome_path, calibration, out, drop_uncovered, deterministic, cap, blur_sigma_deg, highlight_percentile, max_iters, k_spread):
    """Run the full reproduction pipeline on one environment map."""
    env = load_hdr(hdr)
    geometry = load_dome(dome_path)
    cal = load_calibration(calibration)
    cfg = DilationConfig(
        cap=cap,
        blur_sigma=math.radians(blur_sigma_deg),
        highlight_threshold=highlight_percentile,
        max_iters=max_iters,
        k_spread=k_spread,
    )
    result = reproduce(env, geometry, cal, cfg, drop_uncovered=drop_uncovered)
    save_lightmap(result.lightmap, out)
    sidecar = {
        "deficit": [float(v) for v in result.lightmap.deficit],
        "exposure_scalar": result.lightmap.exposure_scalar,
        "dilation_iterations": result.dilation_iterations,
        "dilation_converged": result.dilation_converged,
        "n_panels": result.lightmap.n_panels,
        "source": hdr.name,
    }
    if not deterministic:
        sidecar["created_unix"] = time.time()
    Path(str(out) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    click.echo(f"wrote {out} (deficit {sidecar['deficit']})")


@main.command(name="preview")
@click.option("--kind", type=click.Choice(["probe-diffuse", "probe-mirror", "recon-env", "voronoi-overlay"]), required=True)
@click.option("--hdr", type=click.Path(exists=True, path_type=Path), help="Environment map (probe kinds).")
@click.option("--lightmap", type=click.Path(exists=True, path_type=Path), help="LightMap blob (recon kinds).")
@click.option("--dome", "dome_path", type=click.Path(exists=True, path_type=Path), help="Dome geometry JSON.")
@click.option("--calibration", type=click.Path(exists=True, path_type=Path), help="Spectral calibration JSON.")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="Output PNG.")
@click.option("--size", type=int, default=128, show_default=True, help="Probe image size.")
@click.option("--width", type=int, default=256, show_default=True)
@click.option("--height", type=int, default=128, show_default=True)
@handle_errors
def preview_cmd(kind, hdr, lightmap, dome_path, calibration, out, size, width, height):
    """Render a validation preview image."""
    png = preview_mod.render_preview(
        kind.replace("-", "_"),
        envmap=load_hdr(hdr) if hdr else None,
        lightmap=load_lightmap(lightmap) if lightmap else None,
        geometry=load_dome(dome_path) if dome_path else None,
        calibration=load_calibration(calibration) if calibration else None,
        size=size,
        width=width,
        height=height,
    )
    out.write_bytes(png)
    click.echo(f"wrote {out}")


@main.command()
@click.argument("sequence", type=click.Path(exists=True, path_type=Path))
@click.option("--endpoint", type=str, help="Art-Net UDP endpoint host:port.")
@click.option("--loopback", is_flag=True, help="Play into an in-process loopback sink instead of the network.")
@click.option("--dome", "dome_path", type=click.Path(exists=True, path_type=Path), required=True, help="Dome geometry JSON.")
@click.option("--virtual-clock", is_flag=True, help="Run against a virtual clock (deterministic, fast).")
@click.option("--fps", type=float, help="Override the sequence frame rate.")
@handle_errors
def play(sequence, endpoint, loopback, dome_path, virtual_clock, fps):
    """Play a sequence to the dome at its frame rate."""
    if not endpoint and not loopback:
        raise click.UsageError("need --endpoint or --loopback")
    seq = load_sequence(sequence)
    geometry = load_dome(dome_path)
    sink_ctx = LoopbackSink() if loopback else None
    target = sink_ctx.endpoint if sink_ctx else tuple(endpoint.rsplit(":", 1))
    sender = ArtNetSender((target[0], int(target[1])))
    try:
        def frame_sink(n, lightmap):
            sender.send_lightmap(lightmap, geometry)

        clock = VirtualClock() if virtual_clock else None
        pb = Playback(seq, frame_sink, clock=clock, fps=fps)
        pb.start()
        pb.join()
        late = np.array(pb.lateness) if pb.lateness else np.zeros(1)
        edges = [0.0, 1e-4, 1e-3, 2e-3, 5e-3, 1e-2, 1e-1, np.inf]
        hist, _ = np.histogram(late, bins=edges)
        click.echo(f"frames emitted: {pb.frames_emitted}")
        click.echo("lateness histogram (s):")
        for lo, hi, count in zip(edges[:-1], edges[1:], hist):
            click.echo(f"  [{lo:g}, {hi:g}): {count}")
        if sink_ctx:
            sink_ctx.wait_for_frames(pb.frames_emitted, timeout=2.0)
            click.echo(f"loopback frames: {sink_ctx.frames}")
        if pb.error is not None:
            click.echo(f"error: playback stopped: {pb.error}", err=True)
            sys.exit(EXIT_IO)
    finally:
        sender.close()
        if sink_ctx:
            sink_ctx.close()


@main.command()
@click.argument("project_dir", type=click.Path(path_type=Path))
@click.option("--port", type=int, default=None, help="HTTP port (overrides env and project file).")
@click.option("--transport-endpoint", type=str, default=None, help="Art-Net endpoint host:port (overrides env and project file).")
@handle_errors
def serve(project_dir, port, transport_endpoint):
    """Run the control service for the console UI."""
    import os

    import uvicorn

    from .service import DEFAULT_PORT, PORT_ENV_VAR

    service = DomeService(project_dir, transport_endpoint=transport_endpoint)
    app = create_app(service)
    if port is None:
        port = int(os.environ.get(PORT_ENV_VAR, service.project.port or DEFAULT_PORT))
    click.echo(f"serving project {service.project.name!r} on port {port}")
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")


@main.group()
def dome():
    """Dome geometry tools."""


@dome.command(name="gen")
@click.option("--panels", type=int, default=480, show_default=True, help="Number of light panels.")
@click.option("--cutoff-polar", type=float, default=DEFAULT_CUTOFF_POLAR, show_default=True, help="Maximum polar angle covered by panels (radians).")
@click.option("--universes-base", type=int, default=0, show_default=True, help="First DMX universe index.")
@click.option("--neighbors-k", type=int, default=6, show_default=True, help="Neighbor count for the adjacency graph.")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="Output geometry JSON.")
@handle_errors
def dome_gen(panels, cutoff_polar, universes_base, neighbors_k, out):
    """Generate a Fibonacci-spiral dome geometry file."""
    geometry = generate_dome(panels, cutoff_polar=cutoff_polar, universes_base=universes_base, neighbors_k=neighbors_k)
    save_dome(geometry, out)
    universes = sorted({p.universe for p in geometry.panels})
    click.echo(f"wrote {out} ({panels} panels, universes {universes[0]}..{universes[-1]})")


@main.command()
@click.option("--captures", type=click.Path(exists=True, path_type=Path), required=True, help="JSON with per-LED 24-patch RGB captures, shape (6, 24, 3).")
@click.option("--reflectance", type=click.Path(exists=True, path_type=Path), required=True, help="JSON with 24 patch RGB reflectances, shape (24, 3).")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="Output calibration JSON.")
@handle_errors
def calibrate(captures, reflectance, out):
    """Build a chart24 spectral calibration from color-chart captures."""
    caps = np.asarray(json.loads(captures.read_text()), dtype=np.float64)
    refl = np.asarray(json.loads(reflectance.read_text()), dtype=np.float64)
    cal = calibrate_from_chart(caps, refl)
    save_calibration(cal, out)
    click.echo(f"wrote {out} (condition number {cal.condition:.3f})")


if __name__ == "__main__":
    main()
