"""Small file helpers shared by the CLI and the dataset/checkpoint writers."""

import hashlib
import json
import os
import tempfile
from pathlib import Path


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, no whitespace, stable float repr."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj, indent=2):
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=indent) + "\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def config_hash(obj) -> str:
    return hashlib.sha256(dumps(obj).encode()).hexdigest()[:16]
