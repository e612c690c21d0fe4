"""Quadratic self-organized operational networks for speech command recognition."""

from ._core import (
    ConfigError,
    DataError,
    DivergenceError,
    Error,
    FormatError,
    IoError,
    MissingListError,
    Model,
    RateError,
    ShapeError,
    conv2d,
    count_costs,
    evaluate,
    extract_features,
    grad_check,
    mfcc,
    normalize_minmax,
    qselfonn,
    read_wav,
    selfonn,
    train,
    write_wav,
)

COMMANDS = ("on", "off", "yes", "no", "left", "right", "up", "down", "stop", "go")

__all__ = [
    "COMMANDS",
    "ConfigError",
    "DataError",
    "DivergenceError",
    "Error",
    "FormatError",
    "IoError",
    "MissingListError",
    "Model",
    "RateError",
    "ShapeError",
    "conv2d",
    "count_costs",
    "evaluate",
    "extract_features",
    "grad_check",
    "mfcc",
    "normalize_minmax",
    "qselfonn",
    "read_wav",
    "selfonn",
    "train",
    "write_wav",
]
