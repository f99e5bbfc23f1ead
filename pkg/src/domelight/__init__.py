"""domelight: HDR environment maps to six-spectrum LED dome light maps,
with Art-Net playback and a live control service.
"""

from .envmap import (
    EnvironmentMap,
    ExposureBracket,
    load_hdr,
    merge_brackets,
    render_probe,
    save_hdr,
    total_power,
)
from .dome import DomeGeometry, PanelDescriptor, PartitionMap, generate_dome, integrate, load_dome, partition, save_dome
from .tonemap import DilationConfig, DilationResult, blur_highlights, dilate
from .spectral import (
    LightMap,
    SpectralCalibration,
    calibrate_from_chart,
    default_calibration,
    nnls,
    quantize,
    reconstruct_env,
    solve_panel,
)
from .sequence import Keyframe, Playback, Sequence, VirtualClock, flicker_generator, playback_clock, sample
from .transport import ArtDmxPacket, ArtNetSender, LoopbackSink, decode_packet, encode_frame
from .pipeline import ReproduceResult, reproduce
from . import errors

__version__ = "0.1.0"

__all__ = [
    "EnvironmentMap",
    "ExposureBracket",
    "load_hdr",
    "save_hdr",
    "merge_brackets",
    "total_power",
    "render_probe",
    "DomeGeometry",
    "PanelDescriptor",
    "PartitionMap",
    "generate_dome",
    "load_dome",
    "save_dome",
    "partition",
    "integrate",
    "DilationConfig",
    "DilationResult",
    "blur_highlights",
    "dilate",
    "LightMap",
    "SpectralCalibration",
    "nnls",
    "calibrate_from_chart",
    "solve_panel",
    "quantize",
    "reconstruct_env",
    "default_calibration",
    "Keyframe",
    "Sequence",
    "sample",
    "flicker_generator",
    "Playback",
    "playback_clock",
    "VirtualClock",
    "ArtDmxPacket",
    "ArtNetSender",
    "LoopbackSink",
    "encode_frame",
    "decode_packet",
    "ReproduceResult",
    "reproduce",
    "errors",
]
