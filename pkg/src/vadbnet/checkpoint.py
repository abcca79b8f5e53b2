"""Checkpoint container.

A checkpoint is an uncompressed ``.npz`` archive of little-endian arrays:

* ``param/<name>``          model state (parameters and buffers)
* ``optim/<index>/<key>``   optimizer per-parameter state tensors
* ``rng/torch``             torch CPU generator state (uint8)
* ``meta``                  UTF-8 JSON as uint8: ``format``, ``version``,
                            ``kind``, ``config_hash``, ``step``, ``epoch``,
                            optimizer ``param_groups`` and free-form ``extra``
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

FORMAT = "vadbnet-checkpoint"
VERSION = 1


class ConfigMismatch(RuntimeError):
    """An artifact was produced under a different configuration."""


def _le(array: np.ndarray) -> np.ndarray:
    if array.dtype.byteorder == ">" or (array.dtype.byteorder == "=" and np.little_endian is False):
        return array.astype(array.dtype.newbyteorder("<"))
    return array


def _np(t: torch.Tensor) -> np.ndarray:
    return _le(np.ascontiguousarray(t.detach().cpu().numpy()))


@dataclass
class Checkpoint:
    params: dict[str, torch.Tensor]
    meta: dict
    optimizer_state: dict | None = None
    rng_state: torch.Tensor | None = None
    extra: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return self.meta["config_hash"]


def save_checkpoint(path, model: torch.nn.Module, *, config_hash: str, kind: str, step: int = 0,
                    epoch: int = 0, optimizer: torch.optim.Optimizer | None = None, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {f"param/{k}": _np(v) for k, v in model.state_dict().items()}
    meta = {
        "format": FORMAT,
        "version": VERSION,
        "kind": kind,
        "config_hash": config_hash,
        "step": step,
        "epoch": epoch,
        "extra": extra or {},
    }
    if optimizer is not None:
        sd = optimizer.state_dict()
        meta["param_groups"] = sd["param_groups"]
        for idx, state in sd["state"].items():
            for key, value in state.items():
                arrays[f"optim/{idx}/{key}"] = _np(torch.as_tensor(value))
    arrays["rng/torch"] = torch.get_rng_state().numpy()
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path, expected_hash: str | None = None, kind: str | None = None) -> Checkpoint:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("format") != FORMAT:
            raise ValueError(f"{path} is not a vadbnet checkpoint")
        if meta["version"] > VERSION:
            raise ValueError(f"checkpoint version {meta['version']} is newer than supported {VERSION}")
        params = {k[6:]: torch.from_numpy(data[k].copy()) for k in data.files if k.startswith("param/")}
        optim: dict[int, dict] = {}
        for k in data.files:
            if k.startswith("optim/"):
                _, idx, key = k.split("/", 2)
                optim.setdefault(int(idx), {})[key] = torch.from_numpy(data[k].copy())
        rng = torch.from_numpy(data["rng/torch"].copy()) if "rng/torch" in data.files else None
    if expected_hash is not None and meta["config_hash"] != expected_hash:
        raise ConfigMismatch(
            f"{path} was written under config {meta['config_hash']}, current config is {expected_hash}"
        )
    if kind is not None and meta["kind"] != kind:
        raise ValueError(f"{path} holds a {meta['kind']!r} checkpoint, expected {kind!r}")
    opt_state = None
    if "param_groups" in meta:
        opt_state = {"state": optim, "param_groups": meta["param_groups"]}
    return Checkpoint(params, meta, opt_state, rng, meta.get("extra", {}))
