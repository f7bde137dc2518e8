"""Desk-scale host networks and synthetic datasets.

ToyAttentionClassifier is a single-head, single-block attention
classifier whose query and value projections are the adaptation targets;
everything else stays frozen except the classification head. A dense
low-rank (B @ A) baseline is provided for comparison rows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import ContractViolation
from .tt_core import (
    TTCores,
    TTRanks,
    TTShape,
    TensorizationMap,
    factorize_dims,
    param_count,
    tt_random_init,
    tt_reconstruct,
)
from .tt_linear import AdaptedLinear, FrozenLinear, delta_graph


@dataclass
class LoRABaseline:
    """Dense low-rank update B @ A with r(m+n) trainable parameters."""

    b: np.ndarray
    a: np.ndarray
    alpha: float = 1.0

    @classmethod
    def init(cls, m: int, n: int, r: int, seed: int, alpha: float = 1.0) -> "LoRABaseline":
        rng = np.random.default_rng(seed)
        # zero B so the update starts at exactly zero
        return cls(
            b=np.zeros((m, r)),
            a=rng.normal(0.0, 0.02, size=(r, n)),
            alpha=alpha,
        )

    @property
    def n_trainable(self) -> int:
        return self.b.size + self.a.size


@dataclass
class ArchConfig:
    vocab: int = 32
    embed_dim: int = 64
    hidden_dim: int = 128
    n_classes: int = 2
    seed: int = 0


class ToyAttentionClassifier:
    """Embedding -> one self-attention block -> FFN -> mean pool -> head.

    With PEFT enabled, exactly W_q and W_v carry adapters; W_k, W_o, the
    FFN, and the embedding stay frozen. The head is always trainable and
    its parameters are accounted separately from the adapters.
    """

    def __init__(self, arch: ArchConfig, peft: dict | None = None):
        self.arch = arch
        e, h, c = arch.embed_dim, arch.hidden_dim, arch.n_classes
        rng = np.random.default_rng(arch.seed)
        s = 1.0 / math.sqrt(e)
        self.embedding = rng.normal(0.0, 1.0, size=(arch.vocab, e))
        self.w_k = rng.normal(0.0, s, size=(e, e))
        self.w_o = rng.normal(0.0, s, size=(e, e))
        self.ff1 = rng.normal(0.0, s, size=(h, e))
        self.ff2 = rng.normal(0.0, 1.0 / math.sqrt(h), size=(e, h))
        self.head_w = np.zeros((c, e))
        self.head_b = np.zeros(c)
        w_q0 = rng.normal(0.0, s, size=(e, e))
        w_v0 = rng.normal(0.0, s, size=(e, e))

        self.peft = dict(peft) if peft else {"kind": "none"}
        kind = self.peft.get("kind", "none")
        self.adapters: dict[str, object] = {}
        if kind == "ttlora":
            shape = TTShape(tuple(self.peft["shape"]))
            if shape.size != e * e:
                raise ContractViolation(
                    f"shape {shape.dims} does not factorize the {e}x{e} projection"
                )
            tmap = _square_map(e, shape.dims)
            ranks = TTRanks.uniform(shape, int(self.peft["rank"]))
            alpha = float(self.peft.get("alpha", 1.0))
            scheme = self.peft.get("scheme", "gaussian_all_but_last_zero")
            sigma = float(self.peft.get("sigma", 0.02))
            for i, (label, w0) in enumerate((("W_q", w_q0), ("W_v", w_v0))):
                cores = tt_random_init(shape, ranks, seed=arch.seed * 1000 + i,
                                       scheme=scheme, sigma=sigma)
                self.adapters[label] = AdaptedLinear(FrozenLinear(w0), cores, tmap, alpha)
        elif kind == "lora":
            r = int(self.peft["rank"])
            alpha = float(self.peft.get("alpha", 1.0))
            self.frozen_q, self.frozen_v = w_q0, w_v0
            for i, label in enumerate(("W_q", "W_v")):
                self.adapters[label] = LoRABaseline.init(e, e, r, seed=arch.seed * 1000 + i,
                                                         alpha=alpha)
        elif kind == "none":
            pass
        else:
            raise ContractViolation(f"unknown peft kind {kind!r}")
        if kind != "lora":
            self.frozen_q, self.frozen_v = w_q0, w_v0

    # ---- parameter registry ----

    def adapter_arrays(self) -> list[np.ndarray]:
        out = []
        for label in ("W_q", "W_v"):
            ad = self.adapters.get(label)
            if isinstance(ad, AdaptedLinear):
                out.extend(ad.cores.cores)
            elif isinstance(ad, LoRABaseline):
                out.extend([ad.b, ad.a])
        return out

    def trainable_arrays(self) -> list[np.ndarray]:
        return self.adapter_arrays() + [self.head_w, self.head_b]

    def adapted_labels(self) -> list[str]:
        return sorted(self.adapters)

    def n_adapter_params(self) -> int:
        return sum(a.size for a in self.adapter_arrays())

    def n_head_params(self) -> int:
        return self.head_w.size + self.head_b.size

    def param_report(self) -> dict:
        frozen = (self.embedding.size + self.w_k.size + self.w_o.size
                  + self.ff1.size + self.ff2.size
                  + self.frozen_q.size + self.frozen_v.size)
        return {
            "adapter_params": self.n_adapter_params(),
            "head_params": self.n_head_params(),
            "trainable_params": self.n_adapter_params() + self.n_head_params(),
            "frozen_params": frozen,
            "adapted_matrices": self.adapted_labels(),
        }

    # ---- forward ----

    def _proj_weight(self, label: str, w0: np.ndarray, params: dict) -> Tensor:
        ad = self.adapters.get(label)
        if ad is None:
            return Tensor(w0)
        if isinstance(ad, AdaptedLinear):
            return Tensor(w0) + delta_graph(params[label], ad.tmap) * ad.alpha
        b, a = params[label]
        return Tensor(w0) + (b @ a) * ad.alpha

    def _wrap_params(self) -> tuple[dict, list[Tensor]]:
        params: dict[str, list[Tensor]] = {}
        flat: list[Tensor] = []
        for label in ("W_q", "W_v"):
            ad = self.adapters.get(label)
            if isinstance(ad, AdaptedLinear):
                ts = [Tensor(c, requires_grad=True) for c in ad.cores.cores]
            elif isinstance(ad, LoRABaseline):
                ts = [Tensor(ad.b, requires_grad=True), Tensor(ad.a, requires_grad=True)]
            else:
                continue
            params[label] = ts
            flat.extend(ts)
        hw = Tensor(self.head_w, requires_grad=True)
        hb = Tensor(self.head_b, requires_grad=True)
        flat.extend([hw, hb])
        return {"proj": params, "head": (hw, hb)}, flat

    def logits_graph(self, tokens: np.ndarray) -> tuple[Tensor, list[Tensor]]:
        tokens = np.asarray(tokens, dtype=np.int64)
        e = self.arch.embed_dim
        x = Tensor(self.embedding[tokens])  # (B, S, e), frozen lookup
        wrapped, flat = self._wrap_params()
        w_q = self._proj_weight("W_q", self.frozen_q, wrapped["proj"])
        w_v = self._proj_weight("W_v", self.frozen_v, wrapped["proj"])
        q = x @ w_q.T
        k = x @ Tensor(self.w_k).T
        v = x @ w_v.T
        scores = (q @ k.transpose(0, 2, 1)) * (1.0 / math.sqrt(e))
        attn = scores.softmax(axis=-1)
        ctx = (attn @ v) @ Tensor(self.w_o).T
        hidden = (ctx @ Tensor(self.ff1).T).tanh() @ Tensor(self.ff2).T
        pooled = (x + hidden).mean(axis=1)  # (B, e)
        hw, hb = wrapped["head"]
        logits = pooled @ hw.T + hb
        return logits, flat

    # ---- trainer protocol ----

    def build_loss(self, tokens: np.ndarray, labels: np.ndarray):
        logits, flat = self.logits_graph(tokens)
        return logits.cross_entropy(labels), flat

    def predict(self, tokens: np.ndarray) -> np.ndarray:
        logits, _ = self.logits_graph(tokens)
        return logits.data.argmax(axis=1)

    def eval_loss(self, tokens: np.ndarray, labels: np.ndarray) -> float:
        logits, _ = self.logits_graph(tokens)
        return float(logits.cross_entropy(np.asarray(labels, dtype=np.int64)).data)

    def eval_metric(self, tokens: np.ndarray, labels: np.ndarray) -> float:
        return float((self.predict(tokens) == np.asarray(labels)).mean())


def _square_map(e: int, dims: tuple[int, ...]) -> TensorizationMap:
    """Split dims into a prefix multiplying to e and suffix multiplying to e."""
    prod = 1
    for p, k in enumerate(dims):
        if prod == e and p >= 1:
            if math.prod(dims[p:]) == e:
                return TensorizationMap(e, e, dims[:p], dims[p:])
        prod *= k
    raise ContractViolation(f"dims {dims} admit no row/col split for {e}x{e}")


def build_model(arch_config: ArchConfig, peft: dict | None = None) -> ToyAttentionClassifier:
    """Construct the toy classifier with adapters on W_q and W_v only."""
    return ToyAttentionClassifier(arch_config, peft)


class AdaptedLinearRegressor:
    """Trainer protocol wrapper around a single AdaptedLinear (MSE loss)."""

    def __init__(self, layer: AdaptedLinear):
        self.layer = layer

    def trainable_arrays(self) -> list[np.ndarray]:
        return self.layer.cores.cores

    def build_loss(self, x: np.ndarray, y: np.ndarray):
        from .tt_linear import adapted_graph, core_tensors

        params = core_tensors(self.layer)
        out = adapted_graph(self.layer, params, Tensor(x))
        return out.mse(y), params

    def eval_loss(self, x: np.ndarray, y: np.ndarray) -> float:
        from .tt_linear import batch_forward

        diff = batch_forward(self.layer, x) - y
        return float((diff * diff).mean())

    def eval_metric(self, x: np.ndarray, y: np.ndarray) -> float:
        return -self.eval_loss(x, y)


def make_teacher_student(
    m: int,
    n: int,
    true_ranks: int,
    n_samples: int,
    sigma_noise: float,
    seed: int,
    tmap: TensorizationMap | None = None,
) -> dict:
    """Regression dataset Y = (W0 + ΔW*) X + noise with a planted TT update.

    ΔW* is synthesized from random cores of uniform rank true_ranks, so a
    student of equal or greater rank can represent it exactly. W0, ΔW*,
    and the map are returned alongside for oracle checks.
    """
    if m < 1 or n < 1 or n_samples < 2:
        raise ContractViolation("extents and sample count must be positive")
    if tmap is None:
        candidates = factorize_dims(m, n, 4) or factorize_dims(m, n, 2)
        if not candidates:
            raise ContractViolation(f"no tensorization found for {m}x{n}")
        tmap = candidates[0]
    rng = np.random.default_rng(seed)
    shape = tmap.shape
    ranks = TTRanks.uniform(shape, true_ranks)
    w0 = rng.normal(0.0, 1.0 / math.sqrt(n), size=(m, n))
    teacher = tt_random_init(shape, ranks, seed=seed + 1, scheme="gaussian", sigma=0.5)
    delta_star = tt_reconstruct(teacher, tmap)
    x = rng.normal(0.0, 1.0, size=(n_samples, n))
    y = x @ (w0 + delta_star).T
    if sigma_noise > 0:
        y = y + rng.normal(0.0, sigma_noise, size=y.shape)
    split = int(0.8 * n_samples)
    return {
        "train_x": x[:split], "train_y": y[:split],
        "val_x": x[split:], "val_y": y[split:],
        "w0": w0, "delta_star": delta_star, "tmap": tmap,
        "true_ranks": true_ranks, "sigma_noise": sigma_noise,
    }


_RULES = ("token-presence", "majority-token", "position-pattern")
_MARKER = 1


def make_synthetic_classification(
    n_classes: int,
    seq_len: int,
    vocab: int,
    rule: str,
    n_samples: int,
    seed: int,
) -> dict:
    """Balanced labeled token sequences learnable by the toy attention model.

    Rules: token-presence (is the marker token anywhere in the sequence),
    majority-token (most frequent among the first n_classes tokens), and
    position-pattern (class of the token immediately after the marker).
    Split 80/20, seeded.
    """
    if rule not in _RULES:
        raise ContractViolation(f"rule must be one of {_RULES}, got {rule!r}")
    if vocab < 4 or seq_len < 2:
        raise ContractViolation(
            f"degenerate task: need vocab >= 4 and seq_len >= 2, got vocab={vocab}, "
            f"seq_len={seq_len}"
        )
    if n_classes < 2:
        raise ContractViolation("need at least 2 classes")
    if rule == "token-presence" and n_classes != 2:
        raise ContractViolation("token-presence is a binary rule")
    if rule in ("majority-token", "position-pattern") and vocab < n_classes + 2:
        raise ContractViolation("vocab too small for the requested class count")

    rng = np.random.default_rng(seed)
    per_class = n_samples // n_classes
    seqs, labels = [], []
    # background tokens avoid the marker so the rules stay unambiguous
    bg = np.array([t for t in range(vocab) if t != _MARKER])

    for cls in range(n_classes):
        for _ in range(per_class):
            s = rng.choice(bg, size=seq_len)
            if rule == "token-presence":
                if cls == 1:
                    s[rng.integers(seq_len)] = _MARKER
            elif rule == "majority-token":
                # class tokens are 2..n_classes+1; flood enough of them to win
                tok = 2 + cls
                count = seq_len // 2 + 1
                pos = rng.choice(seq_len, size=count, replace=False)
                s[pos] = tok
            else:  # position-pattern
                p = rng.integers(seq_len - 1)
                s[p] = _MARKER
                s[p + 1] = 2 + cls
                # scrub accidental extra markers to keep the rule well defined
                for q in range(seq_len):
                    if q != p and s[q] == _MARKER:
                        s[q] = bg[rng.integers(len(bg))]
            seqs.append(s)
            labels.append(cls)

    x = np.array(seqs, dtype=np.int64)
    y = np.array(labels, dtype=np.int64)
    order = rng.permutation(len(y))
    x, y = x[order], y[order]
    split = int(0.8 * len(y))
    return {
        "train_x": x[:split], "train_y": y[:split],
        "val_x": x[split:], "val_y": y[split:],
        "rule": rule, "vocab": vocab, "n_classes": n_classes,
    }


def save_classification_jsonl(path, x: np.ndarray, y: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tokens, label in zip(x, y):
            fh.write(json.dumps({"tokens": [int(t) for t in tokens],
                                 "label": int(label)}) + "\n")


def load_classification_jsonl(path) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            xs.append(rec["tokens"])
            ys.append(rec["label"])
    return np.array(xs, dtype=np.int64), np.array(ys, dtype=np.int64)
