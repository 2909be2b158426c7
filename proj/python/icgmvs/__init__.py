"""Desk-scale cascade multi-view stereo."""

from ._core import (
    Camera,
    DatasetError,
    DimensionError,
    IoError,
    Network,
    NumericError,
    ParameterError,
    ParseError,
    SyntheticScene,
    SyntheticView,
    UsageError,
    cloud_metrics,
    default_intrinsics,
    depth_errors,
    fscore,
    fuse_depths,
    homography,
    initial_hypotheses,
    look_at,
    make_scene,
    read_pfm,
    read_ply,
    set_num_threads,
    write_pfm,
)

__all__ = [name for name in dir() if not name.startswith("_")]
