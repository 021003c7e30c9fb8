import json
import os

from app.errors import ValidationError

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")


def example_config_path(command):
    """data/<group>_<name>.json for a command such as "toric.check"."""
    return os.path.join(DATA_DIR, command.replace(".", "_") + ".json")


def load_example_config(command):
    path = example_config_path(command)
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f), path
    except OSError:
        raise ValidationError(f"no bundled example config for '{command}'", command=command)
