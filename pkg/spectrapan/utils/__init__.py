import contextlib
import logging
import os
import sys
import tempfile
from pathlib import Path

import humanize

logger = logging.getLogger("spectrapan")


def atomic_write_bytes(path: Path, data: bytes) -> Path:
    """
    Write `data` to `path` through a temp file in the same directory followed by os.replace,
    so readers never observe a half-written artifact.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise
    logger.info(f"Wrote {path} ({humanize.naturalsize(len(data), binary=True)})")
    return path


def atomic_write_text(path: Path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def sidecar_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def environment_versions() -> dict[str, str]:
    import numpy
    import PIL
    import scipy

    from .. import __version__

    return {
        "spectrapan": __version__,
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "Pillow": PIL.__version__,
        "python": ".".join(map(str, sys.version_info[:3])),
    }


def write_metadata_sidecar(path: Path, argv: list[str] | None = None, **extra) -> Path:
    """Record versions and the producing command next to an artifact (`<artifact>.meta.json`)."""
    from .serialize import dumps_json

    meta = {"artifact": Path(path).name, "versions": environment_versions()}
    if argv is not None:
        meta["argv"] = list(argv)
    meta.update(extra)
    return atomic_write_text(sidecar_path(path), dumps_json(meta, indent=2) + "\n")
