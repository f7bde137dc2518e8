"""Parameter, compression, and storage accounting."""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .errors import ContractViolation
from .hypersearch import SweepReport, pareto_frontier
from .tt_core import TTRanks, TTShape, param_count

_BYTES = {"f16": 2, "f32": 4, "f64": 8}


@dataclass(frozen=True)
class CompressionReport:
    m: int
    n: int
    n_wrapped: int
    dense_params: int
    adapter_params: int
    compression_ratio: float
    storage_bytes: dict

    def format(self) -> str:
        lines = [
            f"target matrix: {self.m} x {self.n} ({self.n_wrapped} wrapped)",
            f"dense update params: {self.dense_params}",
            f"adapter params: {self.adapter_params}",
            f"compression ratio: {self.compression_ratio:.4g}x",
        ]
        for dt, b in self.storage_bytes.items():
            lines.append(f"storage @ {dt}: {b} bytes ({b / 1024:.1f} KB)")
        return "\n".join(lines)


def compression_report(
    m: int,
    n: int,
    shape: TTShape,
    ranks: TTRanks,
    n_wrapped_matrices: int = 1,
) -> CompressionReport:
    """Dense-vs-adapter accounting for one wrapped matrix geometry.

    dense = n_wrapped * m * n; adapter = n_wrapped * sum r[i-1]*k[i]*r[i];
    ratio = dense / adapter computed in exact integer arithmetic before
    any formatting.
    """
    if shape.size != m * n:
        raise ContractViolation(
            f"shape {shape.dims} does not factorize {m}x{n} (product {shape.size})"
        )
    if n_wrapped_matrices < 1:
        raise ContractViolation("need at least one wrapped matrix")
    adapter = n_wrapped_matrices * param_count(shape, ranks)
    dense = n_wrapped_matrices * m * n
    return CompressionReport(
        m=m,
        n=n,
        n_wrapped=n_wrapped_matrices,
        dense_params=dense,
        adapter_params=adapter,
        compression_ratio=dense / adapter,
        storage_bytes={dt: adapter * b for dt, b in _BYTES.items()},
    )


def storage_estimate(n_params: int, dtype: str = "f16") -> int:
    """Checkpoint payload size in bytes for n_params at the given precision."""
    if dtype not in _BYTES:
        raise ContractViolation(f"dtype must be one of {sorted(_BYTES)}")
    return n_params * _BYTES[dtype]


def emit_tradeoff_data(report: SweepReport, path) -> None:
    """Full (params, metric) scatter sorted by params, frontier flagged."""
    if not report.trials:
        raise ContractViolation("empty sweep report")
    frontier_ids = {id(r) for r in report.pareto} or {
        id(r) for r in pareto_frontier(report.trials)
    }
    rows = sorted(report.trials, key=lambda r: (r.trainable_params, r.config.trial_id))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trainable_params", "val_metric", "alpha", "rank", "shape", "pareto"])
        for r in rows:
            w.writerow([
                r.trainable_params,
                f"{r.val_metric:.10g}",
                r.config.alpha,
                r.config.rank,
                "x".join(str(k) for k in r.config.shape),
                int(id(r) in frontier_ids),
            ])
