"""Locate bundled data files (AID table, class-permission table, corpora).

``SEPAL_DATA_DIR`` overrides the packaged defaults, so deployments can swap
in their own tables without reinstalling.
"""

from __future__ import annotations

import os
from pathlib import Path

_PACKAGED = Path(__file__).parent / "data"


def data_dir() -> Path:
    override = os.environ.get("SEPAL_DATA_DIR")
    return Path(override) if override else _PACKAGED


def data_path(name: str) -> Path:
    p = data_dir() / name
    if not p.exists():
        # Fall back to the packaged copy so a partial override dir still works.
        packaged = _PACKAGED / name
        if packaged.exists():
            return packaged
    return p
