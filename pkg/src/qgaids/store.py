"""Deterministic on-disk artifacts.

An artifact is a zip archive holding ``meta.json`` plus one ``.npy`` member per
array. Member timestamps are pinned so identical content gives identical bytes,
which is what the bundle digest and the CLI idempotence checks rely on.
"""

from __future__ import annotations

import hashlib
import io
import json
import zipfile
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import FormatVersionError

FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def digest_of(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _member(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    return info


def write_artifact(path: str | Path, kind: str, meta: Mapping[str, Any],
                   arrays: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"format_version": FORMAT_VERSION, "kind": kind, "meta": dict(meta),
              "arrays": sorted(arrays)}
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr(_member("meta.json"), canonical_json(header))
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]),
                                      allow_pickle=False)
            zf.writestr(_member(f"{name}.npy"), buf.getvalue())
    return path


def read_artifact(path: str | Path, kind: str) -> tuple[dict, dict[str, np.ndarray]]:
    """Load an artifact, refusing a wrong ``kind`` or format version."""
    with zipfile.ZipFile(Path(path)) as zf:
        header = json.loads(zf.read("meta.json"))
        if header.get("format_version") != FORMAT_VERSION:
            raise FormatVersionError(
                f"{path}: format_version {header.get('format_version')!r}, "
                f"expected {FORMAT_VERSION}")
        if header.get("kind") != kind:
            raise FormatVersionError(f"{path}: holds a {header.get('kind')!r}, expected {kind!r}")
        arrays = {}
        for name in header["arrays"]:
            with zf.open(f"{name}.npy") as fh:
                arrays[name] = np.lib.format.read_array(io.BytesIO(fh.read()),
                                                        allow_pickle=False)
    return header["meta"], arrays
