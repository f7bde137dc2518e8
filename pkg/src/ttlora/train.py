"""Trainer for TT-adapted models: Adam/SGD on the core parameters only,
early stopping on validation loss, resumable epochs for sweep scheduling.

Also hosts the gradient plumbing (GradBuffer collection and the
finite-difference gradient checker).
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from .autodiff import GradBuffer, Tensor
from .errors import ContractViolation, NumericalFailure
from .tt_linear import AdaptedLinear, adapted_graph, core_tensors


def backward(loss: Tensor, core_params: list[Tensor], loss_grad: float = 1.0) -> GradBuffer:
    """Replay the tape and collect per-core gradients.

    W0 and biases never appear as parameters, so no gradient buffer can
    exist for them.
    """
    if loss._backward is None and not loss._parents:
        raise ContractViolation("backward() called without a recorded forward pass")
    loss.backward()
    grads = []
    for p in core_params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        grads.append(loss_grad * g)
    return GradBuffer(grads=grads, loss=float(loss.data))


def grad_check(
    layer: AdaptedLinear,
    loss_fn,
    x: np.ndarray,
    tol: float = 1e-4,
    step: float = 1e-5,
    max_elems: int = 10_000,
    seed: int = 0,
) -> dict:
    """Compare tape gradients against central finite differences.

    loss_fn maps the layer's batched output Tensor to a scalar Tensor.
    Above max_elems core elements, a seeded random subsample is checked.
    Returns {max_rel_err, pass, n_checked}; non-finite values yield a
    failing report instead of raising.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    params = core_tensors(layer)
    try:
        loss = loss_fn(adapted_graph(layer, params, Tensor(x)))
        buf = backward(loss, params)
    except NumericalFailure as exc:
        return {"max_rel_err": float("inf"), "pass": False, "n_checked": 0,
                "diagnostic": str(exc)}

    def eval_loss(cores):
        ps = [Tensor(c) for c in cores]
        return float(loss_fn(adapted_graph(layer, ps, Tensor(x))).data)

    base = [c.copy() for c in layer.cores.cores]
    coords = [(i, idx) for i, c in enumerate(base) for idx in range(c.size)]
    if len(coords) > max_elems:
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(coords), size=max_elems, replace=False)
        coords = [coords[i] for i in pick]

    max_rel = 0.0
    for i, idx in coords:
        flat = base[i].reshape(-1)
        orig = flat[idx]
        flat[idx] = orig + step
        up = eval_loss(base)
        flat[idx] = orig - step
        down = eval_loss(base)
        flat[idx] = orig
        fd = (up - down) / (2.0 * step)
        an = buf.grads[i].reshape(-1)[idx]
        if not (np.isfinite(fd) and np.isfinite(an)):
            return {"max_rel_err": float("inf"), "pass": False,
                    "n_checked": len(coords), "diagnostic": "non-finite gradient"}
        diff = abs(an - fd)
        if diff > 1e-8:
            max_rel = max(max_rel, diff / max(abs(an) + abs(fd), 1e-8))
    return {"max_rel_err": max_rel, "pass": max_rel < tol, "n_checked": len(coords)}


@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    max_epochs: int = 20
    patience: int = 5
    batch_size: int = 32
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ContractViolation("learning_rate must be positive")
        if self.patience < 1:
            raise ContractViolation("patience must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ContractViolation(f"unknown optimizer {self.optimizer!r}")


class _Adam:
    def __init__(self, params: list[np.ndarray], cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        c = self.cfg
        self.t += 1
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= c.beta1
            m += (1 - c.beta1) * g
            v *= c.beta2
            v += (1 - c.beta2) * g * g
            mhat = m / (1 - c.beta1 ** self.t)
            vhat = v / (1 - c.beta2 ** self.t)
            p -= c.learning_rate * mhat / (np.sqrt(vhat) + c.eps)


class _SGD:
    def __init__(self, params: list[np.ndarray], cfg: TrainConfig):
        self.params = params
        self.lr = cfg.learning_rate

    def step(self, grads: list[np.ndarray]) -> None:
        for p, g in zip(self.params, grads):
            p -= self.lr * g


@dataclass
class TrainedResult:
    best_state: list[np.ndarray]
    history: list[dict]
    stopped_epoch: int
    best_epoch: int
    best_val_loss: float


class Trainer:
    """Single-writer owner of a model's trainable arrays between steps.

    The model protocol: trainable_arrays() -> list of live ndarrays,
    build_loss(X, y) -> (scalar Tensor, param Tensors wrapping those
    arrays), eval_loss(X, y) -> float, eval_metric(X, y) -> float.
    """

    def __init__(self, model, dataset: dict, config: TrainConfig):
        if len(dataset["train_x"]) == 0 or len(dataset["val_x"]) == 0:
            raise ContractViolation("empty dataset split")
        self.model = model
        self.ds = dataset
        self.cfg = config
        self.rng = np.random.default_rng(config.seed)
        params = model.trainable_arrays()
        self.opt = (_Adam if config.optimizer == "adam" else _SGD)(params, config)
        self.history: list[dict] = []
        self.epoch = 0
        self.best_val = float("inf")
        self.best_epoch = -1
        self.best_state = [p.copy() for p in params]
        self.since_improve = 0
        self.stopped = False

    def _epoch_pass(self) -> float:
        n = len(self.ds["train_x"])
        order = self.rng.permutation(n)
        bs = min(self.cfg.batch_size, n)
        losses = []
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            loss, params = self.model.build_loss(self.ds["train_x"][idx], self.ds["train_y"][idx])
            buf = backward(loss, params)
            self.opt.step(buf.grads)
            losses.append(buf.loss)
        return float(np.mean(losses))

    def run_epochs(self, n_epochs: int) -> None:
        """Run up to n_epochs more; respects the early-stopping state."""
        for _ in range(n_epochs):
            if self.stopped:
                return
            t0 = time.perf_counter()
            train_loss = self._epoch_pass()
            val_loss = self.model.eval_loss(self.ds["val_x"], self.ds["val_y"])
            if not np.isfinite(val_loss) or not np.isfinite(train_loss):
                raise NumericalFailure(
                    f"divergence at epoch {self.epoch}: train={train_loss} val={val_loss}"
                )
            metric = self.model.eval_metric(self.ds["val_x"], self.ds["val_y"])
            self.epoch += 1
            self.history.append({
                "epoch": self.epoch,
                "train_loss": train_loss,
                "val_loss": val_loss,
                "val_metric": metric,
                "wall_time_s": time.perf_counter() - t0,
            })
            if val_loss < self.best_val:
                self.best_val = val_loss
                self.best_epoch = self.epoch
                self.best_state = [p.copy() for p in self.model.trainable_arrays()]
                self.since_improve = 0
            else:
                self.since_improve += 1
                if self.since_improve >= self.cfg.patience:
                    self.stopped = True
                    return

    def restore_best(self) -> None:
        for live, best in zip(self.model.trainable_arrays(), self.best_state):
            live[...] = best

    def result(self) -> TrainedResult:
        return TrainedResult(
            best_state=[p.copy() for p in self.best_state],
            history=list(self.history),
            stopped_epoch=self.epoch,
            best_epoch=self.best_epoch,
            best_val_loss=self.best_val,
        )


def train(model, dataset: dict, config: TrainConfig) -> TrainedResult:
    """Full training run: up to max_epochs with early stopping, returning
    the lowest-validation-loss snapshot (restored into the model)."""
    trainer = Trainer(model, dataset, config)
    while not trainer.stopped and trainer.epoch < config.max_epochs:
        trainer.run_epochs(1)
    trainer.restore_best()
    return trainer.result()


def write_history(history: list[dict], path) -> None:
    cols = ["epoch", "train_loss", "val_loss", "val_metric", "wall_time_s"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in history:
            w.writerow({k: row[k] for k in cols})
