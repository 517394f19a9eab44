"""Approximate MSB-pruned convolution and integer LeNet-5 inference."""

from ._softsparse import (
    AssertionFailure,
    ConfigError,
    DomainError,
    Error,
    FormatError,
    LeNet5,
    OverflowError,
    ShapeError,
    StateError,
    accel_run,
    approx_dot,
    conv2d,
    dataset_stats,
    load_idx_images,
    load_idx_labels,
    msb,
    threshold_from_fraction,
)

__all__ = [
    "AssertionFailure",
    "ConfigError",
    "DomainError",
    "Error",
    "FormatError",
    "LeNet5",
    "OverflowError",
    "ShapeError",
    "StateError",
    "accel_run",
    "approx_dot",
    "conv2d",
    "dataset_stats",
    "load_idx_images",
    "load_idx_labels",
    "msb",
    "threshold_from_fraction",
]
