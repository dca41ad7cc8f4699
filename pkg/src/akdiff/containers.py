"""Self-describing binary tensor container and JSON sidecars.

Layout: 6 magic bytes ``MCKS1\\n``, one line of JSON metadata
(``{"nc":..,"ky":..,"kx":..,"dtype":..,"role":..}``) terminated by a
newline, then the raw little-endian payload, coil-major row-major. Complex
data is stored as interleaved (re, im) 32-bit floats. The payload length
must match the header exactly; write-then-read is bit-identical.
"""
from __future__ import annotations

import json
import math
import os
from typing import Any

import numpy as np

from .core import AcsRegion, SamplingMask
from .errors import ContainerFormatError
from .score import TrainState
from .slr import AnnihilationFilter, HankelConfig

MAGIC = b"MCKS1\n"

_DTYPES = {
    "c64": np.dtype("<c8"),
    "f32": np.dtype("<f4"),
    "u8": np.dtype("u1"),
}
_ROLES = ("kspace", "image", "mask", "sens", "gains")

__all__ = [
    "MAGIC",
    "write_container",
    "read_container",
    "format_json",
    "write_sidecar",
    "read_sidecar",
    "save_mask",
    "load_mask",
    "save_smaps",
    "load_smaps",
    "save_train_state",
    "load_train_state",
    "save_filter",
    "load_filter",
]


def _dtype_code(arr: np.ndarray) -> str:
    if np.issubdtype(arr.dtype, np.complexfloating):
        return "c64"
    if arr.dtype == np.uint8:
        return "u8"
    if np.issubdtype(arr.dtype, np.floating):
        return "f32"
    raise ContainerFormatError(f"unsupported array dtype {arr.dtype}")


def write_container(path: str, arr: np.ndarray, role: str) -> None:
    """Serialize a (nc, ky, kx) or (ky, kx) array; 2-D input gets nc=1."""
    if role not in _ROLES:
        raise ContainerFormatError(f"unknown role {role!r}")
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ContainerFormatError(f"expected 2-D or 3-D array, got shape {arr.shape}")
    code = _dtype_code(arr)
    payload = np.ascontiguousarray(arr.astype(_DTYPES[code], copy=False)).tobytes()
    nc, ky, kx = arr.shape
    header = (
        f'{{"nc":{nc},"ky":{ky},"kx":{kx},"dtype":"{code}","role":"{role}"}}\n'
    ).encode("ascii")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header)
        fh.write(payload)


def read_container(path: str) -> tuple[np.ndarray, dict]:
    """Read a container; returns ``(array, header_dict)``.

    Raises :class:`ContainerFormatError` on bad magic, malformed header, or
    a payload whose byte length does not match the header exactly.
    """
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ContainerFormatError(f"bad magic {magic!r} in {path}")
        header_bytes = bytearray()
        while True:
            b = fh.read(1)
            if not b:
                raise ContainerFormatError(f"unterminated header in {path}")
            if b == b"\n":
                break
            header_bytes.extend(b)
            if len(header_bytes) > 4096:
                raise ContainerFormatError(f"header too long in {path}")
        try:
            header = json.loads(header_bytes.decode("ascii"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ContainerFormatError(f"malformed header in {path}: {exc}") from exc
        for key in ("nc", "ky", "kx", "dtype", "role"):
            if key not in header:
                raise ContainerFormatError(f"header missing {key!r} in {path}")
        if header["dtype"] not in _DTYPES:
            raise ContainerFormatError(f"unknown dtype {header['dtype']!r} in {path}")
        if header["role"] not in _ROLES:
            raise ContainerFormatError(f"unknown role {header['role']!r} in {path}")
        nc, ky, kx = (int(header[k]) for k in ("nc", "ky", "kx"))
        if min(nc, ky, kx) < 1:
            raise ContainerFormatError(f"non-positive dims in header of {path}")
        dt = _DTYPES[header["dtype"]]
        expected = nc * ky * kx * dt.itemsize
        payload = fh.read()
    if len(payload) != expected:
        raise ContainerFormatError(
            f"payload length {len(payload)} != expected {expected} in {path}"
        )
    arr = np.frombuffer(payload, dtype=dt).reshape(nc, ky, kx)
    return arr.copy(), header


# ---------------------------------------------------------------------------
# Deterministic JSON
# ---------------------------------------------------------------------------


def _fmt_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isinf(f):
            return '"inf"' if f > 0 else '"-inf"'
        if math.isnan(f):
            return '"nan"'
        s = f"{f:.17g}"
        if "e" not in s and "." not in s:
            s += ".0"
        return s
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ",".join(_fmt_value(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{_fmt_value(x)}" for k, x in v.items()) + "}"
    if v is None:
        return "null"
    raise TypeError(f"cannot format {type(v)} deterministically")


def format_json(obj: dict) -> str:
    """Byte-stable JSON: insertion key order, 17-significant-digit floats,
    infinities as quoted strings."""
    return _fmt_value(obj)


def write_sidecar(path: str, meta: dict) -> None:
    """Write ``<path>.json`` next to an artifact (seeds, parameters)."""
    with open(path + ".json", "w", encoding="ascii") as fh:
        fh.write(format_json(meta))
        fh.write("\n")


def read_sidecar(path: str) -> dict:
    with open(path + ".json", "r", encoding="ascii") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# Typed save/load helpers
# ---------------------------------------------------------------------------


def save_mask(path: str, mask: SamplingMask, meta: dict | None = None) -> None:
    write_container(path, mask.mask.astype(np.uint8), "mask")
    info = {"acs": [mask.acs.y0, mask.acs.y1, mask.acs.x0, mask.acs.x1]}
    info.update(meta or {})
    write_sidecar(path, info)


def load_mask(path: str) -> SamplingMask:
    arr, header = read_container(path)
    if header["role"] != "mask":
        raise ContainerFormatError(f"expected role 'mask', got {header['role']!r}")
    side = read_sidecar(path) if os.path.exists(path + ".json") else {}
    if "acs" in side:
        y0, y1, x0, x1 = (int(v) for v in side["acs"])
    else:
        ky, kx = arr.shape[1:]
        y0, y1, x0, x1 = ky // 2, ky // 2 + 1, 0, kx
    return SamplingMask(mask=arr[0], acs=AcsRegion(y0, y1, x0, x1))


def save_smaps(path: str, smaps: np.ndarray, meta: dict | None = None) -> None:
    write_container(path, smaps, "sens")
    if meta:
        write_sidecar(path, meta)


def load_smaps(path: str) -> np.ndarray:
    """Load sensitivity maps, restoring the unit pointwise power that
    single-precision storage perturbs."""
    arr, header = read_container(path)
    if header["role"] != "sens":
        raise ContainerFormatError(f"expected role 'sens', got {header['role']!r}")
    maps = arr.astype(np.complex128)
    power = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    power[power == 0] = 1.0
    return maps / power


def save_train_state(path: str, state: TrainState, meta: dict | None = None) -> None:
    """Gains go in the container (leading dim = step count); iteration count
    and loss history go in the sidecar."""
    write_container(path, state.gains, "gains")
    info = {
        "iterations": state.iterations,
        "loss_history": [float(v) for v in state.loss_history],
    }
    info.update(meta or {})
    write_sidecar(path, info)


def load_train_state(path: str) -> TrainState:
    arr, header = read_container(path)
    if header["role"] != "gains":
        raise ContainerFormatError(f"expected role 'gains', got {header['role']!r}")
    side = read_sidecar(path) if os.path.exists(path + ".json") else {}
    return TrainState(
        gains=arr.astype(np.complex128),
        iterations=int(side.get("iterations", 0)),
        loss_history=np.asarray(side.get("loss_history", []), dtype=np.float64),
    )


def save_filter(path: str, filt: AnnihilationFilter, meta: dict | None = None) -> None:
    """Filter banks reuse the 'gains' role: nc=1, ky = filter length,
    kx = filter count (zero columns stored as a length x 1 placeholder)."""
    mat = filt.filters
    if mat.shape[1] == 0:
        mat = np.zeros((mat.shape[0], 1), dtype=np.complex128)
    write_container(path, mat[None], "gains")
    info = {
        "window": [filt.window.wy, filt.window.wx],
        "rank_threshold": filt.rank_threshold,
        "n_filters": filt.n_filters,
        "empty": filt.empty,
    }
    info.update(meta or {})
    write_sidecar(path, info)


def load_filter(path: str) -> AnnihilationFilter:
    arr, header = read_container(path)
    side = read_sidecar(path)
    wy, wx = (int(v) for v in side["window"])
    n_filters = int(side["n_filters"])
    mat = arr[0].astype(np.complex128)[:, :n_filters]
    return AnnihilationFilter(
        filters=mat,
        rank_threshold=float(side["rank_threshold"]),
        window=HankelConfig(wy, wx),
        empty=bool(side["empty"]),
    )
