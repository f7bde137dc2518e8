"""Adapted linear layer: frozen dense weight plus an α-scaled TT update.

The inference path applies the update through the fused contraction
kernel and never materializes the dense delta; merge() collapses the
layer into a single dense weight for latency-free deployment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .autodiff import Tensor
from .errors import ContractViolation
from .tt_core import TTCores, TensorizationMap, tt_reconstruct


@dataclass
class FrozenLinear:
    """Pre-trained weight (and optional bias); never receives gradients."""

    w0: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self):
        self.w0 = np.asarray(self.w0, dtype=np.float64)
        if self.w0.ndim != 2:
            raise ContractViolation(f"weight must be a matrix, got ndim={self.w0.ndim}")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)
            if self.bias.shape != (self.w0.shape[0],):
                raise ContractViolation(
                    f"bias length {self.bias.shape} != row count {self.w0.shape[0]}"
                )
        self.w0.setflags(write=False)
        if self.bias is not None:
            self.bias.setflags(write=False)

    def forward(self, x: np.ndarray) -> np.ndarray:
        y = x @ self.w0.T
        return y if self.bias is None else y + self.bias


@dataclass
class AdaptedLinear:
    """FrozenLinear plus trainable TT cores scaled by alpha (a bare multiplier)."""

    base: FrozenLinear
    cores: TTCores
    tmap: TensorizationMap
    alpha: float = 1.0

    def __post_init__(self):
        if (self.tmap.m, self.tmap.n) != self.base.w0.shape:
            raise ContractViolation(
                f"map {self.tmap.m}x{self.tmap.n} does not match weight {self.base.w0.shape}"
            )
        if self.cores.dims != self.tmap.dims:
            raise ContractViolation("core dims do not match tensorization map")

    @property
    def n_trainable(self) -> int:
        return self.cores.n_params


def tt_matvec(cores: TTCores, tmap: TensorizationMap, x: np.ndarray) -> np.ndarray:
    """ΔW @ x via the rank-bounded contraction; x may be a vector or a batch."""
    if cores.dims != tmap.dims:
        raise ContractViolation("core dims do not match tensorization map")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != tmap.n:
        raise ContractViolation(f"input length {x.shape[1]} != n={tmap.n}")
    y = kernels.tt_apply(cores.cores, len(tmap.row_modes), x)
    return y[0] if single else y


def adapted_forward(layer: AdaptedLinear, x: np.ndarray) -> np.ndarray:
    """y = W0 x + bias + alpha * (TT update) x."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.tmap.n:
        raise ContractViolation(f"input length {x.shape[-1]} != n={layer.tmap.n}")
    return layer.base.forward(x) + layer.alpha * tt_matvec(layer.cores, layer.tmap, x)


def batch_forward(layer: AdaptedLinear, x: np.ndarray) -> np.ndarray:
    """Rowwise adapted_forward over a (batch, n) input."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ContractViolation(f"expected a 2-d batch, got ndim={x.ndim}")
    return adapted_forward(layer, x)


def merge(layer: AdaptedLinear) -> FrozenLinear:
    """Collapse to a single dense weight: W0 + alpha * reconstruct(cores)."""
    w = layer.base.w0 + layer.alpha * tt_reconstruct(layer.cores, layer.tmap)
    return FrozenLinear(w, None if layer.base.bias is None else layer.base.bias.copy())


# ---- differentiable graph builders (training path) ----

def delta_graph(core_params: list[Tensor], tmap: TensorizationMap) -> Tensor:
    """Dense m x n update as a Tensor expression over the core parameters."""
    res = core_params[0].reshape(core_params[0].shape[1], core_params[0].shape[2])
    for c in core_params[1:]:
        rl, k, rr = c.shape
        res = (res @ c.reshape(rl, k * rr)).reshape(-1, rr)
    return res.reshape(tmap.m, tmap.n)


def adapted_graph(layer: AdaptedLinear, core_params: list[Tensor], x: Tensor) -> Tensor:
    """Differentiable batched forward; gradients flow only into core_params."""
    w_eff = Tensor(layer.base.w0) + delta_graph(core_params, layer.tmap) * layer.alpha
    y = x @ w_eff.T
    if layer.base.bias is not None:
        y = y + Tensor(layer.base.bias)
    return y


def core_tensors(layer: AdaptedLinear) -> list[Tensor]:
    return [Tensor(c, requires_grad=True) for c in layer.cores.cores]
