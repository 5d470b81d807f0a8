from __future__ import annotations

import json
import os
from typing import Iterator

import numpy as np

from ..autograd import Tensor, load_tensors, save_tensors
from .config import AstnConfig

PARTITIONS = ("G", "C", "D")
_PARTITION_TAG = {"G": 101, "C": 202, "D": 303}
GRU_WEIGHTS = ("W_xz", "W_hz", "W_xr", "W_hr", "W_xh", "W_hh")
GRU_BIASES = ("b_z", "b_r", "b_h")


def parameter_shapes(config: AstnConfig) -> dict[str, dict[str, tuple[int, ...]]]:
    """Name -> shape for each partition, in a fixed order."""
    g: dict[str, tuple[int, ...]] = {}
    k = config.spatial_kernel
    c_in = 1
    for i, c in enumerate(config.spatial_channels):
        g[f"spatial.conv{i}.weight"] = (c, c_in, k, k)
        g[f"spatial.conv{i}.bias"] = (c,)
        c_in = c
    w, h = config.spatial_grid()
    g["spatial.fc.weight"] = (c_in * w * h, config.spatial_dim)
    g["spatial.fc.bias"] = (config.spatial_dim,)

    k = config.intrinsic_kernel
    c_in = config.spatial_dim
    for i, c in enumerate(config.intrinsic_channels):
        g[f"intrinsic.conv{i}.weight"] = (c, c_in, k)
        g[f"intrinsic.conv{i}.bias"] = (c,)
        c_in = c
    g["intrinsic.fc.weight"] = (c_in * config.intrinsic_length(), config.intrinsic_dim)
    g["intrinsic.fc.bias"] = (config.intrinsic_dim,)

    h1, h2 = config.intrinsic_dim, config.hidden_dim
    for direction in ("fwd", "bwd") if config.bidirectional else ("fwd",):
        for name in GRU_WEIGHTS:
            g[f"gru.{direction}.{name}"] = (h1 if name.startswith("W_x") else h2, h2)
        for name in GRU_BIASES:
            g[f"gru.{direction}.{name}"] = (h2,)

    c: dict[str, tuple[int, ...]] = {}
    d_in = config.dynamic_dim
    for i, width in enumerate(config.classifier_hidden + (1,)):
        c[f"classifier.fc{i}.weight"] = (d_in, width)
        c[f"classifier.fc{i}.bias"] = (width,)
        d_in = width

    d = {"discriminator.weight": (config.feature_dim(), 1), "discriminator.bias": (1,)}
    return {"G": g, "C": c, "D": d}


def _fan_in(shape: tuple[int, ...]) -> int:
    if len(shape) == 2:
        return shape[0]
    return int(np.prod(shape[1:]))


class AstnParams:
    """Learnable tensors split into generator (G), classifier (C) and discriminator (D).

    Partitions are disjoint. Freezing a partition turns off ``requires_grad``
    on its tensors, which also drops their gradient buffers.
    """

    def __init__(self, partitions: dict[str, dict[str, Tensor]]):
        if set(partitions) != set(PARTITIONS):
            raise ValueError(f"expected partitions {PARTITIONS}")
        self.partitions = partitions
        names = [n for p in PARTITIONS for n in partitions[p]]
        if len(set(names)) != len(names):
            raise ValueError("parameter partitions overlap")

    @classmethod
    def init(cls, config: AstnConfig, seed: int = 0, dtype=np.float32) -> "AstnParams":
        """Uniform +-1/sqrt(fan_in) weights and zero biases.

        Each partition draws from its own stream, so adding or resizing the
        discriminator leaves G and C initialization unchanged.
        """
        config.validate()
        parts = {}
        for part, shapes in parameter_shapes(config).items():
            rng = np.random.default_rng([seed, _PARTITION_TAG[part]])
            tensors = {}
            for name, shape in shapes.items():
                is_bias = name.endswith("bias") or name.split(".")[-1].startswith("b_")
                if is_bias:
                    values = np.zeros(shape)
                else:
                    bound = 1.0 / np.sqrt(_fan_in(shape))
                    values = rng.uniform(-bound, bound, size=shape)
                tensors[name] = Tensor(values.astype(dtype), requires_grad=True, name=name)
            parts[part] = tensors
        return cls(parts)

    def __getitem__(self, name: str) -> Tensor:
        for part in PARTITIONS:
            if name in self.partitions[part]:
                return self.partitions[part][name]
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(name in self.partitions[p] for p in PARTITIONS)

    def partition(self, part: str) -> list[Tensor]:
        return list(self.partitions[part].values())

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for part in PARTITIONS:
            yield from self.partitions[part].items()

    def set_trainable(self, *parts: str) -> None:
        """Make exactly the listed partitions require gradients."""
        for part in PARTITIONS:
            for t in self.partitions[part].values():
                t.requires_grad = part in parts

    def zero_grad(self) -> None:
        for _, t in self.items():
            t.zero_grad()

    def state_dict(self, parts: tuple[str, ...] = PARTITIONS) -> dict[str, np.ndarray]:
        return {n: t.values.copy() for p in parts for n, t in self.partitions[p].items()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        for name, t in self.items():
            if name not in state:
                if strict:
                    raise KeyError(f"missing parameter {name!r}")
                continue
            arr = np.asarray(state[name])
            if arr.shape != t.shape:
                raise ValueError(f"parameter {name!r}: checkpoint shape {arr.shape} != model shape {t.shape}")
            t.values = arr.astype(t.dtype).copy()
        if strict:
            extra = set(state) - {n for n, _ in self.items()}
            if extra:
                raise KeyError(f"unexpected parameters in checkpoint: {sorted(extra)}")

    def fingerprint(self, part: str) -> bytes:
        return b"".join(t.values.tobytes() for t in self.partitions[part].values())

    def astype(self, dtype) -> "AstnParams":
        return AstnParams({p: {n: t.astype(dtype) for n, t in d.items()} for p, d in self.partitions.items()})

    def copy(self) -> "AstnParams":
        return self.astype(self.partition("G")[0].dtype)

    def count(self) -> dict[str, int]:
        return {p: int(sum(t.size for t in self.partitions[p].values())) for p in PARTITIONS}


def save_model(path: str | os.PathLike, config: AstnConfig, params: AstnParams, meta: dict | None = None) -> None:
    save_tensors(path, params.state_dict(), {"astn_config": config.to_json(), **(meta or {})})


def load_model(path: str | os.PathLike) -> tuple[AstnConfig, AstnParams, dict]:
    arrays, meta = load_tensors(path)
    if "astn_config" not in meta:
        raise ValueError(f"{path}: checkpoint carries no model config")
    config = AstnConfig.from_json(meta.pop("astn_config"))
    dtype = next(iter(arrays.values())).dtype if arrays else np.float32
    params = AstnParams.init(config, seed=0, dtype=dtype)
    params.load_state_dict({k: v for k, v in arrays.items() if k in params}, strict=False)
    missing = [n for n, _ in params.items() if n not in arrays]
    if missing:
        raise ValueError(f"{path}: checkpoint does not match config, missing {missing[:3]}...")
    return config, params, meta


def config_json(config: AstnConfig) -> str:
    return json.dumps(config.to_json(), sort_keys=True)
