"""Fused TT contraction kernels.

The adapter matvec is a chain of small matrix products; at adapter sizes
the per-call numpy dispatch overhead dominates, so the hot path is a
single numba-compiled kernel over a packed core buffer. Set
TTLORA_BACKEND=numpy to force the pure-numpy path (or =numba to require
the compiled one); default "auto" uses numba when importable.

See benchmarks/bench_contraction.py for a comparison of both paths.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ContractViolation

_BACKEND = os.environ.get("TTLORA_BACKEND", "auto").lower()
if _BACKEND not in ("auto", "numba", "numpy"):
    raise ContractViolation(f"TTLORA_BACKEND must be auto|numba|numpy, got {_BACKEND!r}")

_HAVE_NUMBA = False
if _BACKEND != "numpy":
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:
        if _BACKEND == "numba":
            raise
if not _HAVE_NUMBA:

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


def active_backend() -> str:
    return "numba" if _HAVE_NUMBA else "numpy"


def pack_cores(cores: list[np.ndarray]):
    """Flatten a core chain into one contiguous f64 buffer plus extent arrays."""
    rl = np.array([c.shape[0] for c in cores], dtype=np.int64)
    kk = np.array([c.shape[1] for c in cores], dtype=np.int64)
    rr = np.array([c.shape[2] for c in cores], dtype=np.int64)
    sizes = rl * kk * rr
    off = np.zeros(len(cores) + 1, dtype=np.int64)
    np.cumsum(sizes, out=off[1:])
    flat = np.empty(off[-1], dtype=np.float64)
    for i, c in enumerate(cores):
        flat[off[i]:off[i + 1]] = np.ascontiguousarray(c, dtype=np.float64).ravel()
    return flat, rl, kk, rr, off


@njit(cache=True)
def _tt_apply_packed(flat, rl, kk, rr, off, p, x):
    """Batched ΔW @ x.T over packed cores; x is (B, n), returns (B, m)."""
    d = rl.shape[0]
    batch = x.shape[0]

    # column phase: contract col modes right-to-left into a rank carry
    carry = np.ascontiguousarray(x).reshape(batch * x.shape[1], 1)
    for i in range(d - 1, p - 1, -1):
        core = flat[off[i]:off[i + 1]].reshape(rl[i], kk[i] * rr[i])
        rows = carry.size // (kk[i] * rr[i])
        carry = np.dot(carry.reshape(rows, kk[i] * rr[i]), core.T)
    # carry is now (batch, r_p)

    # row phase: build the (m, r_p) row factor left-to-right
    row = flat[off[0]:off[1]].reshape(kk[0], rr[0])
    for i in range(1, p):
        core = flat[off[i]:off[i + 1]].reshape(rl[i], kk[i] * rr[i])
        row = np.dot(row, core).reshape(row.shape[0] * kk[i], rr[i])

    return np.dot(carry, row.T)


def _tt_apply_numpy(cores: list[np.ndarray], p: int, x: np.ndarray) -> np.ndarray:
    d = len(cores)
    batch = x.shape[0]
    carry = x.reshape(batch * x.shape[1], 1)
    for i in range(d - 1, p - 1, -1):
        rli, ki, rri = cores[i].shape
        carry = carry.reshape(-1, ki * rri) @ cores[i].reshape(rli, ki * rri).T
    row = cores[0].reshape(cores[0].shape[1], cores[0].shape[2])
    for i in range(1, p):
        rli, ki, rri = cores[i].shape
        row = (row @ cores[i].reshape(rli, ki * rri)).reshape(-1, rri)
    return carry @ row.T


def tt_apply(cores: list[np.ndarray], n_row_modes: int, x: np.ndarray) -> np.ndarray:
    """Apply the TT-represented update to a batch of input rows.

    x has shape (batch, n); the result has shape (batch, m). Peak
    intermediate size is O(m * max_rank), never O(m * n).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ContractViolation(f"expected a 2-d batch, got ndim={x.ndim}")
    if _HAVE_NUMBA:
        flat, rl, kk, rr, off = pack_cores(cores)
        return _tt_apply_packed(flat, rl, kk, rr, off, n_row_modes, x)
    return _tt_apply_numpy([np.asarray(c, dtype=np.float64) for c in cores], n_row_modes, x)
