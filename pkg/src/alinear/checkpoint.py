"""Flat binary checkpoint format for model parameters.

Layout (all integers little-endian, all floats IEEE-754 binary64):

    offset  size  field
    0       8     magic bytes b"ALNRCKP1"
    8       4     u32 format version (currently 1)
    12      4     u32 input length T
    16      4     u32 horizon H
    20      8     f64 delta (seasonal decay strength)
    28      4     u32 ablation mode (0 full, 1 no_kernel, 2 no_decomp,
                  3 no_adaptive)
    32      8     f64 width_min
    40      8     f64 width_max
    48      8     f64 fixed_alpha
    56      4     u32 number of named tensors
    then per tensor, in a fixed order:
            2     u16 name length L
            L     ASCII name
            1     u8 number of dimensions (0 for scalars)
            4*nd  u32 dimension sizes
            8*n   f64 data, row-major

The named tensors are exactly the learnable fields of the stored mode, in
their update order, so a checkpoint can be rebuilt without consulting
anything but this file.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .decomposition import DecompParams
from .errors import DataError
from .model import MODES, ModelParams

MAGIC = b"ALNRCKP1"
VERSION = 1
_MODE_CODE = {name: i for i, name in enumerate(MODES)}


def save_checkpoint(params: ModelParams, path: str | Path) -> None:
    path = Path(path)
    chunks = [
        MAGIC,
        struct.pack(
            "<IIIdIddd",
            VERSION,
            params.input_len,
            params.horizon,
            params.delta,
            _MODE_CODE[params.mode],
            params.decomp.width_min,
            params.decomp.width_max,
            params.fixed_alpha,
        ),
    ]
    names = params.learnable_fields()
    chunks.append(struct.pack("<I", len(names)))
    for name in names:
        value = np.asarray(params.get(name), dtype=np.float64)
        encoded = name.encode("ascii")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", value.ndim))
        for dim in value.shape:
            chunks.append(struct.pack("<I", dim))
        chunks.append(np.ascontiguousarray(value).tobytes())
    path.write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> ModelParams:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if blob[:8] != MAGIC:
        raise DataError(f"{path} is not a checkpoint (bad magic)")
    offset = 8
    version, t_len, horizon, delta, mode_code, w_min, w_max, fixed_alpha = struct.unpack_from(
        "<IIIdIddd", blob, offset
    )
    offset += struct.calcsize("<IIIdIddd")
    if version != VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    if mode_code >= len(MODES):
        raise DataError(f"unknown ablation mode code {mode_code}")
    mode = MODES[mode_code]

    (n_tensors,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset : offset + name_len].decode("ascii")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        shape = []
        for _ in range(ndim):
            (dim,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            shape.append(dim)
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).copy()
        offset += 8 * count
        tensors[name] = data.reshape(shape) if shape else data[0]

    decomp = DecompParams(
        kernel_base=float(tensors.get("kernel_base", 25.0)),
        kernel_slope=float(tensors.get("kernel_slope", 0.0)),
        width_min=w_min,
        width_max=w_max,
    )

    def tensor(name):
        return tensors[name] if name in tensors else None

    params = ModelParams(
        input_len=t_len,
        horizon=horizon,
        delta=delta,
        decomp=decomp,
        trend_weight=tensors["trend_weight"],
        trend_bias=tensors["trend_bias"],
        seasonal_weight=tensor("seasonal_weight"),
        seasonal_bias=tensor("seasonal_bias"),
        mix_base=float(tensors.get("mix_base", 0.0)),
        mix_slope=float(tensors.get("mix_slope", 0.0)),
        mode=mode,
        fixed_alpha=fixed_alpha,
    )
    _validate(params, path)
    return params


def _validate(params: ModelParams, path: Path) -> None:
    t_len, horizon = params.input_len, params.horizon
    if params.trend_weight.shape != (horizon, t_len):
        raise DataError(f"{path}: trend weight shape {params.trend_weight.shape} "
                        f"does not match header ({horizon}, {t_len})")
    if params.trend_bias.shape != (horizon,):
        raise DataError(f"{path}: trend bias shape mismatch")
    if params.seasonal_weight is not None and params.seasonal_weight.shape != (horizon, t_len):
        raise DataError(f"{path}: seasonal weight shape mismatch")
