import json
import logging
import os

import numpy as np
import pandas as pd

from app.errors import ValidationError
from utils.constants import SCHEMA_VERSION
from utils.helpers import load_json, validate_schema

logger = logging.getLogger(__name__)

GRID_DTYPE = "<f8"
CSV_FLOAT_FORMAT = "%.17g"

# --- Grid files ---


def write_grid(path, values, extra=None):
    """
    Writes a grid file: one JSON header line, then the raw little-endian
    binary64 samples in row-major order.
    """
    values = np.ascontiguousarray(values, dtype=GRID_DTYPE)
    header = {
        "schemaVersion": SCHEMA_VERSION,
        "n": values.ndim,
        "gridShape": list(values.shape),
        "byteOrder": "little",
        "dtype": "float64",
    }
    if extra:
        header.update(extra)
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        f.write(values.tobytes(order="C"))
    logger.debug("wrote grid %s with shape %s", path, values.shape)
    return path


def read_grid_header(path):
    try:
        with open(path, "rb") as f:
            line = f.readline()
    except OSError as e:
        raise ValidationError(f"cannot read grid file {path}: {e.strerror}", path=str(path))
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise ValidationError(f"grid file {path} has no JSON header line", path=str(path))
    for key in ("n", "gridShape", "byteOrder"):
        if key not in header:
            raise ValidationError(f"grid header is missing '{key}'", path=str(path))
    if header["byteOrder"] != "little":
        raise ValidationError("only little-endian grids are supported", path=str(path))
    return header, len(line)


def read_grid(path, expected_shape=None):
    """Returns (values, header); the payload must match the declared shape exactly."""
    header, offset = read_grid_header(path)
    shape = tuple(int(s) for s in header["gridShape"])
    if len(shape) != header["n"]:
        raise ValidationError("grid header dimension and shape disagree", path=str(path))
    with open(path, "rb") as f:
        f.seek(offset)
        payload = f.read()
    count = int(np.prod(shape))
    if len(payload) != 8 * count:
        raise ValidationError(f"grid payload holds {len(payload)} bytes, expected {8 * count}",
                              path=str(path))
    values = np.frombuffer(payload, dtype=GRID_DTYPE).reshape(shape).copy()
    if expected_shape is not None and tuple(expected_shape) != shape:
        raise ValidationError("grid shape does not match the geometry",
                              gridShape=list(shape), expected=list(expected_shape))
    return values, header


# --- Potential sidecars ---


def write_potential(path, values, geometry, meta=None):
    """Grid file plus a ``.json`` sidecar carrying the geometry and run metadata."""
    write_grid(path, values)
    sidecar = {"schemaVersion": SCHEMA_VERSION, "geometry": geometry.to_dict(), **(meta or {})}
    with open(path + ".json", "w", encoding="utf-8") as f:
        json.dump(sidecar, f, sort_keys=True, indent=2, allow_nan=False)
    return path


def read_sidecar(path):
    """The validated ``.json`` sidecar of a grid file."""
    sidecar = load_json(path + ".json")
    validate_schema(sidecar, "potential.sidecar")
    return sidecar


def write_grid_csv(path, values, geometry):
    """One row per grid point: the real coordinates x0.. and the sampled value."""
    coords = geometry.coordinates()
    frame = pd.DataFrame({f"x{i}": c.ravel() for i, c in enumerate(coords)})
    frame["value"] = np.asarray(values, dtype=float).ravel()
    return write_table(frame, path)


# --- Reports and tables ---


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def write_table(frame, path):
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    return path


def write_text(text, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    return path
