"""
On-disk cube and dataset format.

A cube is stored as raw little-endian float32 in (band, row, column) order
(``<name>.f32``) next to a JSON sidecar (``<name>.json``)::

    {"height": H, "width": W, "bands": B, "dtype": "f32le", "order": "brc",
     "sha256": "<hex digest of the .f32 bytes>"}

A dataset directory holds cubes plus ``manifest.json`` listing relative
paths, shapes, checksums and a domain tag.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import CUBE_DTYPE, CUBE_ORDER, MANIFEST_NAME
from utils.errors import StorageError
from utils.helpers import as_numpy, retry_on_error, sha256_bytes

logger = logging.getLogger("sfsci.storage")

PathLike = Union[str, Path]
SIDECAR_FIELDS = ("height", "width", "bands", "dtype", "order", "sha256")


def _paths(path: PathLike) -> Tuple[Path, Path]:
    base = Path(path)
    if base.suffix in (".f32", ".json"):
        base = base.with_suffix("")
    return base.with_name(base.name + ".f32"), base.with_name(base.name + ".json")


@retry_on_error(max_attempts=3)
def save_cube(path: PathLike, cube) -> Dict[str, Any]:
    """
    Write a (B, H, W) cube (a 2-D array is stored as one band).

    Returns:
        The sidecar header that was written
    """
    array = as_numpy(cube)
    if array.ndim == 2:
        array = array[None]
    if array.ndim != 3:
        raise StorageError("shape", f"cube must be 2-D or 3-D, got {array.ndim}-D")

    payload = np.ascontiguousarray(array, dtype="<f4").tobytes()
    data_path, header_path = _paths(path)
    data_path.parent.mkdir(parents=True, exist_ok=True)

    bands, height, width = array.shape
    header = {
        "height": int(height),
        "width": int(width),
        "bands": int(bands),
        "dtype": CUBE_DTYPE,
        "order": CUBE_ORDER,
        "sha256": sha256_bytes(payload),
    }
    data_path.write_bytes(payload)
    header_path.write_text(json.dumps(header, indent=2))
    logger.debug(f"Saved cube {array.shape} to {data_path}")
    return header


def _read_header(header_path: Path) -> Dict[str, Any]:
    if not header_path.exists():
        raise StorageError("header", f"missing sidecar {header_path}")
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as e:
        raise StorageError("header", f"malformed JSON in {header_path}: {e}")

    for name in SIDECAR_FIELDS:
        if name not in header:
            raise StorageError(name, f"missing from {header_path}")
    for name in ("height", "width", "bands"):
        if not isinstance(header[name], int) or header[name] < 1:
            raise StorageError(name, f"must be a positive integer, got {header[name]!r}")
    if header["dtype"] != CUBE_DTYPE:
        raise StorageError("dtype", f"expected '{CUBE_DTYPE}', got {header['dtype']!r}")
    if header["order"] != CUBE_ORDER:
        raise StorageError("order", f"expected '{CUBE_ORDER}', got {header['order']!r}")
    return header


def load_cube(path: PathLike) -> np.ndarray:
    """Read a cube written by save_cube, verifying shape and checksum."""
    data_path, header_path = _paths(path)
    header = _read_header(header_path)
    if not data_path.exists():
        raise StorageError("data", f"missing payload {data_path}")

    payload = data_path.read_bytes()
    expected = header["bands"] * header["height"] * header["width"] * 4
    if len(payload) != expected:
        raise StorageError("shape", f"payload has {len(payload)} bytes, header implies {expected}")
    if sha256_bytes(payload) != header["sha256"]:
        raise StorageError("sha256", f"checksum mismatch for {data_path}")

    array = np.frombuffer(payload, dtype="<f4").reshape(header["bands"], header["height"], header["width"])
    return array.astype(np.float32)


def save_dataset(
    directory: PathLike,
    cubes: Sequence,
    domain: str,
    extra: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    """
    Write cubes as ``scene_XXXX`` files plus a manifest.

    Args:
        directory: Target directory (created if needed)
        cubes: Sequence of (B, H, W) arrays
        domain: Domain tag recorded in the manifest ("source", "target", ...)
        extra: Additional manifest fields (config hash, generator config)

    Returns:
        The manifest dictionary
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    entries = []
    for index, cube in enumerate(cubes):
        name = f"scene_{index:04d}"
        header = save_cube(directory / name, cube)
        entries.append({
            "path": f"{name}.f32",
            "shape": [header["bands"], header["height"], header["width"]],
            "sha256": header["sha256"],
        })

    manifest = {"domain": domain, "count": len(entries), "entries": entries}
    if extra:
        manifest.update(extra)
    _write_manifest(directory / MANIFEST_NAME, manifest)
    logger.info(f"Saved {len(entries)} '{domain}' scenes to {directory}")
    return manifest


@retry_on_error(max_attempts=3)
def _write_manifest(path: Path, manifest: Dict[str, Any]) -> None:
    path.write_text(json.dumps(manifest, indent=2))


def load_dataset(directory: PathLike) -> Tuple[List[np.ndarray], Dict[str, Any]]:
    """Load every cube listed in a dataset manifest, checking shapes and checksums."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.exists():
        raise StorageError("manifest", f"missing {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise StorageError("manifest", f"malformed JSON: {e}")
    if "entries" not in manifest or "domain" not in manifest:
        raise StorageError("manifest", "must contain 'entries' and 'domain'")

    cubes = []
    for entry in manifest["entries"]:
        cube = load_cube(directory / entry["path"])
        if list(cube.shape) != list(entry["shape"]):
            raise StorageError("shape", f"{entry['path']} has shape {list(cube.shape)}, manifest says {entry['shape']}")
        _, header_path = _paths(directory / entry["path"])
        if json.loads(header_path.read_text())["sha256"] != entry["sha256"]:
            raise StorageError("sha256", f"{entry['path']} checksum differs from manifest")
        cubes.append(cube)

    logger.info(f"Loaded {len(cubes)} '{manifest['domain']}' scenes from {directory}")
    return cubes, manifest
