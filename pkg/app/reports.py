"""Report rendering: canonical JSON text, CSV tables and log summaries."""

import json
import logging
from fractions import Fraction
from math import isfinite

import numpy as np
import pandas as pd

from app.storage import CSV_FLOAT_FORMAT
from utils.helpers import rational_entry

logger = logging.getLogger(__name__)


def to_jsonable(value):
    """Plain JSON types; non-finite floats become the strings "inf", "-inf", "nan"."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, Fraction):
        return rational_entry(value)
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if isfinite(value) else str(value)
    if isinstance(value, pd.DataFrame):
        return to_jsonable(value.to_dict(orient="records"))
    return value


def render_json(report):
    """Sorted keys, no NaN; ``timings`` stays at the top level only."""
    return json.dumps(to_jsonable(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def render_csv(frame):
    return frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT)


def strip_timings(report):
    return {k: v for k, v in report.items() if k != "timings"}


def render_error(error):
    return render_json(error.to_dict())


def log_summary(command, report, exit_code):
    """One status line per command, in the terminal register of the report."""
    if exit_code == 0:
        status = "✅ ok"
    elif exit_code == 3:
        status = "❌ criterion failed"
    else:
        status = "⚠️ failed"
    highlights = []
    for key in ("margin", "fm", "epsilonUniform", "worstFace", "residualSup", "cn",
                "gluedMargin", "extrapolated", "passed"):
        if key in report:
            value = report[key]
            if isinstance(value, dict) and "exact" in value:
                value = value["exact"]
            highlights.append(f"{key}={value}")
    logger.info("%s %s %s", status, command, " ".join(highlights))
