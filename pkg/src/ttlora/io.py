"""File formats: TTLF v1 core archives and raw dense weight files.

TTLF v1 is a ZIP archive holding manifest.json plus one little-endian
binary payload per core, laid out (r[i-1], k[i], r[i]) with the last
index fastest. Writers are deterministic (stored entries, fixed
timestamps, sorted manifest keys) so write -> read -> write is
byte-identical.
"""

from __future__ import annotations

import json
import zipfile
from pathlib import Path

import numpy as np

from .errors import ContractViolation
from .tt_core import TTCores, TensorizationMap

FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)
_DTYPES = {"f16": "<f2", "f32": "<f4", "f64": "<f8"}


def _write_entry(zf: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    zf.writestr(info, payload)


def save_ttlf(
    path,
    cores: TTCores,
    tmap: TensorizationMap,
    alpha: float | None = None,
    dtype: str = "f64",
    seed: int | None = None,
    scheme: str | None = None,
    layer_label: str | None = None,
) -> None:
    if dtype not in _DTYPES:
        raise ContractViolation(f"dtype must be one of {sorted(_DTYPES)}, got {dtype!r}")
    if cores.dims != tmap.dims:
        raise ContractViolation("core dims do not match tensorization map")
    manifest = {
        "format_version": FORMAT_VERSION,
        "m": tmap.m,
        "n": tmap.n,
        "dims": list(tmap.dims),
        "ranks": list(cores.ranks.ranks),
        "alpha": alpha,
        "dtype": dtype,
        "seed": seed,
        "scheme": scheme,
        "layer_label": layer_label,
    }
    blob = json.dumps(manifest, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        _write_entry(zf, "manifest.json", blob)
        for i, c in enumerate(cores.cores):
            payload = np.ascontiguousarray(c).astype(_DTYPES[dtype]).tobytes()
            _write_entry(zf, f"core_{i:04d}.bin", payload)


def load_ttlf(path) -> tuple[TTCores, TensorizationMap, dict]:
    with zipfile.ZipFile(path, "r") as zf:
        manifest = json.loads(zf.read("manifest.json").decode("utf-8"))
        if manifest.get("format_version") != FORMAT_VERSION:
            raise ContractViolation(
                f"unsupported TTLF format_version {manifest.get('format_version')}"
            )
        dims = tuple(manifest["dims"])
        ranks = list(manifest["ranks"])
        np_dtype = _DTYPES[manifest["dtype"]]
        cores = []
        for i, k in enumerate(dims):
            raw = zf.read(f"core_{i:04d}.bin")
            arr = np.frombuffer(raw, dtype=np_dtype).reshape(ranks[i], k, ranks[i + 1])
            cores.append(arr.astype(np.float64) if manifest["dtype"] != "f64" else arr.copy())
    tmap = _map_from_manifest(manifest)
    return TTCores(cores), tmap, manifest


def _map_from_manifest(manifest: dict) -> TensorizationMap:
    dims = tuple(manifest["dims"])
    m = manifest["m"]
    prod = 1
    for p, k in enumerate(dims):
        if prod == m and p >= 1:
            return TensorizationMap(m, manifest["n"], dims[:p], dims[p:])
        prod *= k
    raise ContractViolation(f"dims {dims} have no prefix multiplying to m={m}")


def save_dense(path, w: np.ndarray, dtype: str = "f64") -> None:
    """Raw row-major little-endian matrix with a JSON sidecar {m, n, dtype}."""
    if dtype not in _DTYPES:
        raise ContractViolation(f"dtype must be one of {sorted(_DTYPES)}, got {dtype!r}")
    if w.ndim != 2:
        raise ContractViolation(f"expected a matrix, got ndim={w.ndim}")
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(w).astype(_DTYPES[dtype]).tobytes())
    sidecar = {"m": w.shape[0], "n": w.shape[1], "dtype": dtype}
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_dense(path) -> np.ndarray:
    path = Path(path)
    sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text("utf-8"))
    raw = path.read_bytes()
    m, n = sidecar["m"], sidecar["n"]
    arr = np.frombuffer(raw, dtype=_DTYPES[sidecar["dtype"]])
    if arr.size != m * n:
        raise ContractViolation(f"payload has {arr.size} elements, expected {m * n}")
    return arr.reshape(m, n).astype(np.float64)
