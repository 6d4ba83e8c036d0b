"""Contact-conditioned indoor scene diffusion."""

from ._core import (
    Box,
    ConfigError,
    IoError,
    ParseError,
    SceneDiffError,
    ValidationError,
    calibrate,
    evaluate,
    footprint,
    iou3d,
    load_scene,
    render,
    sample,
    schedule,
    sdf_point_box,
    synth,
    train,
)

__all__ = [
    "Box",
    "ConfigError",
    "IoError",
    "ParseError",
    "SceneDiffError",
    "ValidationError",
    "calibrate",
    "evaluate",
    "footprint",
    "iou3d",
    "load_scene",
    "render",
    "sample",
    "schedule",
    "sdf_point_box",
    "synth",
    "train",
]
