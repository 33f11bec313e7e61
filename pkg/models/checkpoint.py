"""
Checkpoint codec.

A checkpoint is a pair of files:

- ``<name>.json``: manifest with schema version, architecture hash, model
  kind and geometry, the ordered tensor list (name, shape, sha256), frozen
  flags and the SHA-256 of the blob.
- ``<name>.bin``: every tensor as little-endian float32, in manifest order.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn as nn

from config import CHECKPOINT_SCHEMA_VERSION
from models.adapters import AdaptedModel, attach_adapters
from models.unfolding import DenoiserConfig, UnfoldingModel
from utils.errors import ConfigError, StorageError
from utils.helpers import retry_on_error, sha256_bytes

logger = logging.getLogger("sfsci.checkpoint")

PathLike = Union[str, Path]


def _paths(path: PathLike) -> Tuple[Path, Path]:
    base = Path(path)
    if base.suffix in (".json", ".bin"):
        base = base.with_suffix("")
    return base.with_name(base.name + ".json"), base.with_name(base.name + ".bin")


def _backbone(model: nn.Module) -> UnfoldingModel:
    return model.backbone if isinstance(model, AdaptedModel) else model


@retry_on_error(max_attempts=3)
def save_checkpoint(
    path: PathLike,
    model: nn.Module,
    config_hash: str,
    extra: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    """
    Serialize an UnfoldingModel or AdaptedModel.

    Args:
        path: Base path; ``.json`` and ``.bin`` are appended
        model: Model to save
        config_hash: Architecture hash the checkpoint is bound to
        extra: Additional manifest fields (training history, metrics)

    Returns:
        The manifest that was written
    """
    manifest_path, blob_path = _paths(path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)

    backbone = _backbone(model)
    params = dict(model.named_parameters())
    modules, chunks = [], []
    for name, tensor in model.state_dict().items():
        array = np.ascontiguousarray(tensor.detach().cpu().numpy(), dtype="<f4")
        payload = array.tobytes()
        chunks.append(payload)
        modules.append({"name": name, "shape": list(array.shape), "sha256": sha256_bytes(payload)})
    blob = b"".join(chunks)

    manifest = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "config_hash": config_hash,
        "kind": "adapted" if isinstance(model, AdaptedModel) else "unfolding",
        "stages": backbone.num_stages,
        "bands": backbone.bands,
        "shift": backbone.shift,
        "denoiser": backbone.denoiser_cfg.to_dict(),
        "module_list": modules,
        "frozen_flags": {name: not p.requires_grad for name, p in params.items()},
        "blob_sha256": sha256_bytes(blob),
    }
    if extra:
        manifest["extra"] = extra

    blob_path.write_bytes(blob)
    manifest_path.write_text(json.dumps(manifest, indent=2))
    logger.info(f"Saved {manifest['kind']} checkpoint ({len(modules)} tensors) to {manifest_path}")
    return manifest


def read_manifest(path: PathLike) -> Dict[str, Any]:
    manifest_path, _ = _paths(path)
    if not manifest_path.exists():
        raise StorageError("manifest", f"missing {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise StorageError("manifest", f"malformed JSON in {manifest_path}: {e}")
    for name in ("schema_version", "config_hash", "kind", "module_list", "frozen_flags", "blob_sha256"):
        if name not in manifest:
            raise StorageError(name, f"missing from {manifest_path}")
    if manifest["schema_version"] != CHECKPOINT_SCHEMA_VERSION:
        raise StorageError(
            "schema_version",
            f"expected {CHECKPOINT_SCHEMA_VERSION}, got {manifest['schema_version']}"
        )
    return manifest


def load_checkpoint(path: PathLike, expected_hash: Optional[str] = None) -> nn.Module:
    """
    Rebuild a model from a checkpoint, verifying checksums and config binding.

    Args:
        path: Base path used at save time
        expected_hash: Architecture hash of the current config; a mismatch is rejected

    Returns:
        UnfoldingModel or AdaptedModel with the saved values and frozen flags
    """
    manifest = read_manifest(path)
    if expected_hash is not None and manifest["config_hash"] != expected_hash:
        raise ConfigError(
            "config_hash",
            f"checkpoint was built for {manifest['config_hash'][:12]}, current config is {expected_hash[:12]}"
        )

    _, blob_path = _paths(path)
    if not blob_path.exists():
        raise StorageError("blob", f"missing {blob_path}")
    blob = blob_path.read_bytes()
    if sha256_bytes(blob) != manifest["blob_sha256"]:
        raise StorageError("blob_sha256", f"checksum mismatch for {blob_path}")

    backbone = UnfoldingModel(
        manifest["stages"], manifest["bands"], manifest["shift"], DenoiserConfig(**manifest["denoiser"])
    )
    model: nn.Module = attach_adapters(backbone) if manifest["kind"] == "adapted" else backbone

    state = {}
    offset = 0
    expected_names = list(model.state_dict().keys())
    listed_names = [entry["name"] for entry in manifest["module_list"]]
    if listed_names != expected_names:
        raise StorageError("module_list", "tensor names/order do not match the rebuilt architecture")

    for entry in manifest["module_list"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        payload = blob[offset: offset + 4 * count]
        offset += 4 * count
        if sha256_bytes(payload) != entry["sha256"]:
            raise StorageError(entry["name"], "tensor checksum mismatch")
        array = np.frombuffer(payload, dtype="<f4").reshape(entry["shape"]).astype(np.float32)
        state[entry["name"]] = torch.from_numpy(array)
    if offset != len(blob):
        raise StorageError("blob", f"{len(blob) - offset} trailing bytes")

    model.load_state_dict(state)
    for name, param in model.named_parameters():
        param.requires_grad_(not manifest["frozen_flags"].get(name, False))
    backbone.frozen = not any(p.requires_grad for p in backbone.parameters())
    if backbone.frozen:
        backbone.eval()

    logger.info(f"Loaded {manifest['kind']} checkpoint from {path}")
    return model
