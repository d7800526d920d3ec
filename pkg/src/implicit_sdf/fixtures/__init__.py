"""Bundled 2-D point clouds with normals (``circle``, ``l_shape``)."""

from importlib import resources
from pathlib import Path

NAMES = ("circle", "l_shape")


def fixture_path(name: str) -> Path:
    if name not in NAMES:
        raise ValueError(f"unknown fixture {name!r}; choose from {NAMES}")
    return Path(str(resources.files(__name__).joinpath(f"{name}.xyz")))
