"""Tensor-train shapes, ranks, cores: construction, reconstruction, TT-SVD.

A matrix update of shape (m, n) is tensorized into d modes: the leading
row_modes multiply to m, the trailing col_modes multiply to n, both
row-major. The tensor is then factored into a chain of order-3 cores,
core i having extents (r[i-1], k[i], r[i]) with boundary ranks 1.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TTShape:
    """Mode sizes k1..kd of the tensorized update."""

    dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(k) for k in self.dims))
        if len(self.dims) < 2:
            raise ContractViolation(f"need at least 2 modes, got {self.dims}")
        if any(k < 1 for k in self.dims):
            raise ContractViolation(f"mode sizes must be >= 1, got {self.dims}")

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return math.prod(self.dims)

    def rank_bound(self, i: int) -> int:
        """Max exact TT-rank across the bond between cores i and i+1 (1-based bond index)."""
        return min(math.prod(self.dims[:i]), math.prod(self.dims[i:]))


@dataclass(frozen=True)
class TTRanks:
    """Bond dimensions r0..rd; boundary ranks are always 1."""

    ranks: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
        if len(self.ranks) < 3:
            raise ContractViolation(f"need d+1 >= 3 rank entries, got {self.ranks}")
        if self.ranks[0] != 1 or self.ranks[-1] != 1:
            raise ContractViolation(f"boundary ranks must be 1, got {self.ranks}")
        if any(r < 1 for r in self.ranks):
            raise ContractViolation(f"ranks must be >= 1, got {self.ranks}")

    @classmethod
    def uniform(cls, shape: TTShape, r: int, clamp: bool = True) -> "TTRanks":
        """Boundary-1 chain with internal rank r, clamped to the exactness bound."""
        ranks = [1] + [r] * (shape.d - 1) + [1]
        out = cls(tuple(ranks))
        return out.clamped(shape) if clamp else out

    def clamped(self, shape: TTShape) -> "TTRanks":
        """Clamp internal ranks to min(prod k[:i], prod k[i:]); warn when clamping."""
        if len(self.ranks) != shape.d + 1:
            raise ContractViolation(
                f"rank chain length {len(self.ranks)} != d+1 = {shape.d + 1}"
            )
        new = list(self.ranks)
        for i in range(1, shape.d):
            bound = shape.rank_bound(i)
            if new[i] > bound:
                log.warning(
                    "rank %d at bond %d exceeds exactness bound %d for shape %s; clamped",
                    new[i], i, bound, shape.dims,
                )
                new[i] = bound
        return TTRanks(tuple(new))


@dataclass(frozen=True)
class TensorizationMap:
    """Bijection between (i, j) matrix indices and the d-dimensional multi-index.

    Rows map to the leading modes, columns to the trailing modes, both
    row-major, so dense.reshape(dims) is exactly the tensorized update.
    """

    m: int
    n: int
    row_modes: tuple[int, ...]
    col_modes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "row_modes", tuple(int(k) for k in self.row_modes))
        object.__setattr__(self, "col_modes", tuple(int(k) for k in self.col_modes))
        if math.prod(self.row_modes) != self.m:
            raise ContractViolation(
                f"row modes {self.row_modes} do not multiply to m={self.m}"
            )
        if math.prod(self.col_modes) != self.n:
            raise ContractViolation(
                f"col modes {self.col_modes} do not multiply to n={self.n}"
            )
        TTShape(self.dims)  # validates d >= 2, positivity

    @property
    def dims(self) -> tuple[int, ...]:
        return self.row_modes + self.col_modes

    @property
    def shape(self) -> TTShape:
        return TTShape(self.dims)

    def delinearize(self, i: int, j: int) -> tuple[int, ...]:
        """(i, j) -> multi-index over dims, row-major on each side."""
        if not (0 <= i < self.m and 0 <= j < self.n):
            raise ContractViolation(f"index ({i}, {j}) out of range for {self.m}x{self.n}")
        out = []
        for modes, idx in ((self.row_modes, i), (self.col_modes, j)):
            part = []
            for k in reversed(modes):
                part.append(idx % k)
                idx //= k
            out.extend(reversed(part))
        return tuple(out)

    def linearize(self, multi: tuple[int, ...]) -> tuple[int, int]:
        """Multi-index -> (i, j). Inverse of delinearize."""
        if len(multi) != len(self.dims):
            raise ContractViolation(f"multi-index length {len(multi)} != d={len(self.dims)}")
        p = len(self.row_modes)
        i = 0
        for k, a in zip(self.row_modes, multi[:p]):
            if not 0 <= a < k:
                raise ContractViolation(f"multi-index {multi} out of range for dims {self.dims}")
            i = i * k + a
        j = 0
        for k, b in zip(self.col_modes, multi[p:]):
            if not 0 <= b < k:
                raise ContractViolation(f"multi-index {multi} out of range for dims {self.dims}")
            j = j * k + b
        return i, j


@dataclass
class TTCores:
    """The trainable object: a chain of order-3 cores.

    Core i has extents (r[i-1], k[i], r[i]); consecutive cores share a
    bond dimension.
    """

    cores: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.cores:
            raise ContractViolation("empty core chain")
        for c in self.cores:
            if c.ndim != 3:
                raise ContractViolation(f"core has {c.ndim} axes, expected 3")
        if self.cores[0].shape[0] != 1 or self.cores[-1].shape[2] != 1:
            raise ContractViolation("boundary ranks must be 1")
        for a, b in zip(self.cores, self.cores[1:]):
            if a.shape[2] != b.shape[0]:
                raise ContractViolation(
                    f"bond mismatch: {a.shape} does not chain into {b.shape}"
                )

    @property
    def d(self) -> int:
        return len(self.cores)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> TTRanks:
        return TTRanks((1,) + tuple(c.shape[2] for c in self.cores))

    @property
    def n_params(self) -> int:
        return sum(c.size for c in self.cores)

    @property
    def dtype(self) -> np.dtype:
        return self.cores[0].dtype

    def astype(self, dtype) -> "TTCores":
        return TTCores([c.astype(dtype) for c in self.cores])

    def copy(self) -> "TTCores":
        return TTCores([c.copy() for c in self.cores])


def param_count(shape: TTShape, ranks: TTRanks) -> int:
    """Total element count of the core chain: sum_i r[i-1] * k[i] * r[i]."""
    if len(ranks.ranks) != shape.d + 1:
        raise ContractViolation(
            f"rank chain length {len(ranks.ranks)} != d+1 = {shape.d + 1}"
        )
    r = ranks.ranks
    return sum(r[i] * k * r[i + 1] for i, k in enumerate(shape.dims))


def _ordered_factorizations(x: int, parts: int) -> list[tuple[int, ...]]:
    """All ordered factorizations of x into `parts` factors >= 2 (or [1] if x == 1)."""
    if parts == 1:
        return [(x,)] if x >= 1 else []
    if x == 1:
        return []
    out = []
    for f in range(2, x + 1):
        if x % f == 0:
            for rest in _ordered_factorizations(x // f, parts - 1):
                if all(k >= 2 for k in rest):
                    out.append((f,) + rest)
    return out


def factorize_dims(
    m: int,
    n: int,
    d: int,
    max_maps: int | None = None,
    seed: int = 0,
) -> list[TensorizationMap]:
    """Enumerate tensorization maps with total mode count d.

    Factors are >= 2 except that a side equal to 1 contributes the single
    mode [1]. Returns lexicographically ordered maps; above max_maps, a
    seeded deterministic subsample (order preserved). No factorization
    existing yields an empty list.
    """
    if d < 2:
        raise ContractViolation(f"need d >= 2, got {d}")
    if m < 1 or n < 1:
        raise ContractViolation("matrix extents must be positive")
    maps = []
    for p in range(1, d):
        q = d - p
        rows = _ordered_factorizations(m, p) if m > 1 else ([(1,)] if p == 1 else [])
        cols = _ordered_factorizations(n, q) if n > 1 else ([(1,)] if q == 1 else [])
        for rm in rows:
            for cm in cols:
                maps.append(TensorizationMap(m, n, rm, cm))
    maps.sort(key=lambda t: t.dims)
    if max_maps is not None and len(maps) > max_maps:
        rng = np.random.default_rng(seed)
        keep = sorted(rng.choice(len(maps), size=max_maps, replace=False))
        maps = [maps[i] for i in keep]
    return maps


def tt_random_init(
    shape: TTShape,
    ranks: TTRanks,
    seed: int,
    scheme: str = "gaussian_all_but_last_zero",
    sigma: float = 0.02,
) -> TTCores:
    """Seeded Gaussian core init.

    Scheme "gaussian_all_but_last_zero" zeroes the final core so the
    represented update is exactly zero at the start of training.
    """
    if sigma <= 0:
        raise ContractViolation(f"sigma must be positive, got {sigma}")
    if scheme not in ("gaussian", "gaussian_all_but_last_zero"):
        raise ContractViolation(f"unknown init scheme {scheme!r}")
    if len(ranks.ranks) != shape.d + 1:
        raise ContractViolation("rank chain length mismatch")
    rng = np.random.default_rng(seed)
    r = ranks.ranks
    cores = []
    for i, k in enumerate(shape.dims):
        c = rng.normal(0.0, sigma, size=(r[i], k, r[i + 1]))
        cores.append(c)
    if scheme == "gaussian_all_but_last_zero":
        cores[-1] = np.zeros_like(cores[-1])
    return TTCores(cores)


def tt_reconstruct(cores: TTCores, tmap: TensorizationMap) -> np.ndarray:
    """Contract the full chain back to the dense m x n update."""
    if cores.dims != tmap.dims:
        raise ContractViolation(
            f"core dims {cores.dims} do not match map dims {tmap.dims}"
        )
    chain = cores.cores
    res = chain[0].reshape(chain[0].shape[1], chain[0].shape[2])
    for c in chain[1:]:
        rl, k, rr = c.shape
        res = (res @ c.reshape(rl, k * rr)).reshape(-1, rr)
    return res.reshape(tmap.m, tmap.n)


def tt_svd(
    dense: np.ndarray,
    tmap: TensorizationMap,
    max_rank: int,
    tol: float = 0.0,
) -> TTCores:
    """Sequential-SVD decomposition of a dense matrix into TT cores.

    Singular values below tol * (largest singular value of the unfolding)
    are dropped; internal ranks never exceed max_rank. Exact inputs with
    TT-ranks <= max_rank reconstruct to within floating-point error.
    """
    if max_rank < 1:
        raise ContractViolation(f"max_rank must be >= 1, got {max_rank}")
    if tol < 0:
        raise ContractViolation(f"tol must be nonnegative, got {tol}")
    if dense.shape != (tmap.m, tmap.n):
        raise ContractViolation(
            f"dense extents {dense.shape} do not match map {tmap.m}x{tmap.n}"
        )
    dims = tmap.dims
    d = len(dims)
    rest = np.asarray(dense, dtype=np.float64).reshape(dims)
    cores = []
    r_prev = 1
    for i in range(d - 1):
        mat = rest.reshape(r_prev * dims[i], -1)
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        if s.size and s[0] > 0:
            keep = int(np.sum(s > tol * s[0]))
        else:
            keep = 1
        r = max(1, min(keep, max_rank))
        cores.append(u[:, :r].reshape(r_prev, dims[i], r))
        rest = (s[:r, None] * vt[:r])
        r_prev = r
    cores.append(rest.reshape(r_prev, dims[-1], 1))
    return TTCores(cores)
