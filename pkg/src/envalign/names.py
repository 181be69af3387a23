"""Standard-library membership and import-name to distribution-name mapping."""

from __future__ import annotations

import json
import re
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional

_SEP = re.compile(r"[-_.]+")

# import name -> published distribution name
DEFAULT_ALIASES: dict[str, str] = {
    "PIL": "pillow",
    "bs4": "beautifulsoup4",
    "cv2": "opencv-python",
    "dateutil": "python-dateutil",
    "dotenv": "python-dotenv",
    "jwt": "pyjwt",
    "sklearn": "scikit-learn",
    "yaml": "pyyaml",
}


def normalize_package_name(name: str) -> str:
    return _SEP.sub("-", name).lower()


@lru_cache(maxsize=None)
def _bundled_stdlib() -> frozenset[str]:
    text = resources.files("envalign").joinpath("data/stdlib_names.txt").read_text("utf-8")
    return frozenset(line.strip() for line in text.splitlines()
                     if line.strip() and not line.startswith("#"))


def load_stdlib(path: Optional[str | Path] = None) -> frozenset[str]:
    """Bundled standard-library top-level names, or a newline-separated override file."""
    if path is None:
        return _bundled_stdlib()
    text = Path(path).read_text("utf-8")
    return frozenset(line.strip() for line in text.splitlines()
                     if line.strip() and not line.startswith("#"))


def load_aliases(path: Optional[str | Path] = None) -> dict[str, str]:
    """Default alias table updated from a JSON object file, if given."""
    table = dict(DEFAULT_ALIASES)
    if path is not None:
        table.update(json.loads(Path(path).read_text("utf-8")))
    return table


def distribution_name(import_name: str, aliases: Mapping[str, str] = DEFAULT_ALIASES) -> str:
    return normalize_package_name(aliases.get(import_name, import_name))
