"""Policy checkpoints: a flat, byte-deterministic binary format.

Layout: magic line, one JSON header line (layout version, dims, optimizer
state), then the weight matrix and both moment accumulators as raw
little-endian float64. Loading rejects a feature-layout mismatch so a
checkpoint never silently runs against the wrong featurization.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from .policy import PolicyParams
from .strategies import N_STRATEGIES

_MAGIC = b"STRATREC-CKPT-1\n"


class CheckpointLayoutError(ValueError):
    pass


def save_checkpoint(params: PolicyParams, path: str | Path) -> None:
    header = {
        "layout_version": params.layout_version,
        "n_strategies": N_STRATEGIES,
        "dim": params.dim,
        "optimizer": params.optimizer,
        "opt_step": params.opt_step,
        "beta1": params.beta1,
        "beta2": params.beta2,
        "eps": params.eps,
        "weight_decay": params.weight_decay,
        "dtype": "<f8",
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        fh.write(params.weights.astype("<f8").tobytes())
        fh.write(params.opt_m.astype("<f8").tobytes())
        fh.write(params.opt_v.astype("<f8").tobytes())


def load_checkpoint(path: str | Path, expect_layout: Optional[str] = None) -> PolicyParams:
    with open(path, "rb") as fh:
        if fh.readline() != _MAGIC:
            raise CheckpointLayoutError(f"{path}: not a policy checkpoint")
        header = json.loads(fh.readline())
        raw = fh.read()
    if expect_layout is not None and header["layout_version"] != expect_layout:
        raise CheckpointLayoutError(
            f"{path}: checkpoint layout {header['layout_version']!r} "
            f"does not match expected {expect_layout!r}"
        )
    n, dim = header["n_strategies"], header["dim"]
    block = n * dim * 8
    if len(raw) != 3 * block:
        raise CheckpointLayoutError(f"{path}: truncated checkpoint payload")
    def arr(i: int) -> np.ndarray:
        return np.frombuffer(raw[i * block : (i + 1) * block], dtype="<f8").reshape(n, dim).copy()
    return PolicyParams(
        weights=arr(0),
        opt_m=arr(1),
        opt_v=arr(2),
        opt_step=header["opt_step"],
        optimizer=header["optimizer"],
        beta1=header["beta1"],
        beta2=header["beta2"],
        eps=header["eps"],
        weight_decay=header["weight_decay"],
        layout_version=header["layout_version"],
    )
