"""Named-tensor checkpoints stored as ``.npz`` with an embedded JSON header.

npz keeps dtype and shape per array, so float64 values round-trip bit-exactly.
"""
from __future__ import annotations

import json
import os
from typing import Mapping

import numpy as np

_META_KEY = "__meta__"


def save_checkpoint(path: str | os.PathLike, tensors: Mapping[str, np.ndarray],
                    meta: dict | None = None) -> None:
    arrays = {name: np.asarray(value, dtype=np.float64) for name, value in tensors.items()}
    if _META_KEY in arrays:
        raise ValueError(f"tensor name {_META_KEY!r} is reserved")
    header = json.dumps(meta or {}, sort_keys=True)
    arrays[_META_KEY] = np.frombuffer(header.encode("utf-8"), dtype=np.uint8)
    # np.savez appends .npz to bare names; write through a handle to keep the path exact
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(path, allow_pickle=False) as archive:
        tensors = {name: archive[name] for name in archive.files if name != _META_KEY}
        meta = {}
        if _META_KEY in archive.files:
            meta = json.loads(archive[_META_KEY].tobytes().decode("utf-8"))
    return tensors, meta
