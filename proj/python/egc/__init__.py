"""Emotion and gender classification engine."""

from ._egc import (
    EMOTIONS,
    FACE_SIZE,
    GENDERS,
    ArchiveError,
    Cascade,
    ConfigError,
    DataError,
    Error,
    Model,
    Pipeline,
    ShapeError,
    build_model,
    crc32,
    detect_faces,
    load_cascade,
    load_weights,
    preprocess,
    read_pgm,
    save_weights,
    write_pgm,
)

__all__ = [
    "EMOTIONS",
    "FACE_SIZE",
    "GENDERS",
    "ArchiveError",
    "Cascade",
    "ConfigError",
    "DataError",
    "Error",
    "Model",
    "Pipeline",
    "ShapeError",
    "build_model",
    "crc32",
    "detect_faces",
    "load_cascade",
    "load_weights",
    "preprocess",
    "read_pgm",
    "save_weights",
    "write_pgm",
]
