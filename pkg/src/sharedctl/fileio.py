"""Atomic text-file writes shared by the dataset and artifact writers."""

import os
import tempfile
from pathlib import Path


def atomic_write_text(path, text: str) -> None:
    """Write to a sibling temp file and rename; readers never see partials."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
