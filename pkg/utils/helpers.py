import json
import logging
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import jsonschema
import numpy as np

from app.errors import ValidationError
from utils.constants import CONFIG_SCHEMAS

logger = logging.getLogger(__name__)


def validate_schema(document, schema_name):
    """Checks a config document against its published schema; raises ValidationError."""
    if schema_name not in CONFIG_SCHEMAS:
        raise ValidationError(f"unknown command schema '{schema_name}'", schema=schema_name)
    try:
        jsonschema.validate(instance=document, schema=CONFIG_SCHEMAS[schema_name])
    except jsonschema.ValidationError as e:
        path = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ValidationError(f"config for '{schema_name}' is invalid at {path}: {e.message}",
                              schema=schema_name, path=path)
    return True


def parse_rational(value):
    """Parses "p/q", "p" or an int into a Fraction."""
    if isinstance(value, bool):
        raise ValidationError(f"not a rational: {value!r}")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, float):
        # Floats are accepted through their shortest decimal form
        return Fraction(repr(value))
    try:
        return Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError):
        raise ValidationError(f"not a rational: {value!r}", value=str(value))


def format_rational(value):
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def rational_entry(value):
    """Exact string plus float shadow, the report form of a rational."""
    return {"exact": format_rational(value), "float": float(value)}


def chunked_map(func, array, threads=1):
    """Applies ``func`` to chunks of ``array`` along axis 0 and concatenates.

    Chunks are disjoint, so workers never write the same grid point.
    """
    array = np.asarray(array)
    if threads <= 1 or array.shape[0] < 2 * threads:
        return func(array)
    chunks = np.array_split(array, threads, axis=0)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(func, chunks))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(group, axis=0) for group in zip(*parts))
    return np.concatenate(parts, axis=0)


def make_rng(seed):
    return np.random.default_rng(seed)


def load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ValidationError(f"malformed JSON in {path}: {e.msg}", path=str(path), line=e.lineno)
    except OSError as e:
        raise ValidationError(f"cannot read {path}: {e.strerror}", path=str(path))
