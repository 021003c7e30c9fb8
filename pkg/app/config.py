import logging
import os
from dataclasses import dataclass, field

from app.errors import ValidationError
from app.kernel import CoefficientSet
from utils.data_loader import load_example_config
from utils.helpers import load_json, validate_schema

logger = logging.getLogger(__name__)

PATH_KEYS = ("fGridPath", "referencePath", "samplesPath")


@dataclass
class RunConfig:
    """A validated command document; relative file paths resolve against ``base_dir``."""

    command: str
    document: dict
    source: str = None
    base_dir: str = field(default=".")

    def __getitem__(self, key):
        return self.document[key]

    def get(self, key, default=None):
        return self.document.get(key, default)

    def path(self, key):
        value = self.document.get(key)
        if value is None:
            return None
        return value if os.path.isabs(value) else os.path.join(self.base_dir, value)


def load_config(command, path=None):
    """
    Reads and validates the config for ``command`` ("kernel.cone", "psh.glue", ...).
    Without a path the bundled example config for the command is used.
    """
    if path is None:
        document, source = load_example_config(command)
        logger.info("no --config given; using the bundled example %s", source)
    else:
        document, source = load_json(path), str(path)
    if not isinstance(document, dict):
        raise ValidationError("config must be a JSON object", path=source)
    validate_schema(document, command)
    base_dir = os.path.dirname(os.path.abspath(source)) if source else "."
    config = RunConfig(command, document, source, base_dir)
    for key in PATH_KEYS:
        if key in document and not os.path.isfile(config.path(key)):
            raise ValidationError(f"{key} does not name a file", path=key, file=document[key])
    return config


def equation_from_dict(spec):
    """CoefficientSet from an ``equation`` block; checks n against the coefficient count."""
    n = int(spec["n"])
    c = spec.get("c", [])
    if len(c) != n - 1:
        raise ValidationError(f"equation.c must list {n - 1} coefficients for n={n}",
                              path="equation/c")
    return CoefficientSet(n, tuple(c), float(spec.get("c0", 1.0)), float(spec.get("fIntegral", 0.0)))
