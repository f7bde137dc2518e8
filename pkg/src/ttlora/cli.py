"""Command-line entry point.

Subcommands: decompose, reconstruct, count, train, sweep, merge,
gradcheck. Exit codes: 0 success, 1 contract violation or usage error,
2 numerical failure (divergence / non-finite values).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as ttio
from .errors import ContractViolation, NumericalFailure
from .hypersearch import (
    SearchSpace,
    TrialConfig,
    enumerate_trials,
    successive_halving,
    write_pareto_csv,
    write_sweep_csv,
)
from .models import (
    AdaptedLinearRegressor,
    ArchConfig,
    build_model,
    make_synthetic_classification,
    make_teacher_student,
)
from .report import compression_report, emit_tradeoff_data
from .train import TrainConfig, Trainer, grad_check, train, write_history
from .tt_core import (
    TTRanks,
    TTShape,
    TensorizationMap,
    tt_random_init,
    tt_reconstruct,
    tt_svd,
)
from .tt_linear import AdaptedLinear, FrozenLinear, merge as merge_layer


def _parse_shape(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.replace("x", ",").split(",") if t)
    except ValueError:
        raise ContractViolation(f"cannot parse shape {text!r}")


def _split_map(m: int, n: int, dims: tuple[int, ...]) -> TensorizationMap:
    prod = 1
    for p in range(1, len(dims)):
        prod *= dims[p - 1]
        if prod == m:
            return TensorizationMap(m, n, dims[:p], dims[p:])
    raise ContractViolation(f"no prefix of {dims} multiplies to m={m}")


def _ranks_for(shape: TTShape, rank: int) -> TTRanks:
    return TTRanks.uniform(shape, rank)


# ---- subcommand handlers ----

def _cmd_count(args) -> int:
    dims = _parse_shape(args.shape)
    shape = TTShape(dims)
    ranks = _ranks_for(shape, args.rank)
    rep = compression_report(args.m, args.n, shape, ranks, args.wrapped)
    print(rep.format())
    if (args.m, args.n) == (768, 2304) and dims == (12, 8, 8, 3, 8, 8, 12) and args.rank == 5:
        print(
            "note: this configuration is sometimes quoted as 1,135 params "
            "(~1560x); the rank-chain sum gives 995 (~1778x). The sum is "
            "reported here; see README for details."
        )
    return 0


def _cmd_decompose(args) -> int:
    dense = ttio.load_dense(args.input)
    m, n = dense.shape
    tmap = _split_map(m, n, _parse_shape(args.shape))
    cores = tt_svd(dense, tmap, max_rank=args.max_rank, tol=args.tol)
    recon = tt_reconstruct(cores, tmap)
    denom = np.linalg.norm(dense)
    rel = np.linalg.norm(recon - dense) / denom if denom > 0 else 0.0
    ttio.save_ttlf(args.output, cores, tmap, dtype=args.dtype)
    print(f"wrote {args.output}; ranks {list(cores.ranks.ranks)}; "
          f"relative reconstruction error {rel:.3e}")
    return 0


def _cmd_reconstruct(args) -> int:
    cores, tmap, manifest = ttio.load_ttlf(args.input)
    dense = tt_reconstruct(cores, tmap)
    ttio.save_dense(args.output, dense, dtype=args.dtype)
    print(f"wrote {args.output} ({tmap.m}x{tmap.n}, dims {manifest['dims']})")
    return 0


def _cmd_merge(args) -> int:
    cores, tmap, manifest = ttio.load_ttlf(args.ttlf)
    base = ttio.load_dense(args.base)
    alpha = args.alpha if args.alpha is not None else (manifest.get("alpha") or 1.0)
    layer = AdaptedLinear(FrozenLinear(base), cores, tmap, alpha=alpha)
    merged = merge_layer(layer)
    ttio.save_dense(args.output, merged.w0, dtype=args.dtype)
    print(f"wrote merged weight {args.output} (alpha={alpha})")
    return 0


def _cmd_gradcheck(args) -> int:
    presets = {
        "small": dict(m=8, n=8, dims=(2, 4, 4, 2), rank=2,
                      scheme="gaussian", alpha=1.0),
        "zero": dict(m=8, n=8, dims=(2, 4, 4, 2), rank=2,
                     scheme="gaussian_all_but_last_zero", alpha=1.0),
        "clamped": dict(m=4, n=4, dims=(2, 2, 2, 2), rank=16,
                        scheme="gaussian", alpha=0.5),
    }
    p = presets[args.preset]
    tmap = _split_map(p["m"], p["n"], p["dims"])
    shape = tmap.shape
    ranks = TTRanks.uniform(shape, p["rank"])
    cores = tt_random_init(shape, ranks, seed=args.seed, scheme=p["scheme"], sigma=0.5)
    rng = np.random.default_rng(args.seed)
    w0 = rng.normal(size=(p["m"], p["n"]))
    layer = AdaptedLinear(FrozenLinear(w0), cores, tmap, alpha=p["alpha"])
    x = rng.normal(size=(4, p["n"]))
    target = rng.normal(size=(4, p["m"]))
    rep = grad_check(layer, lambda y: y.mse(target), x, tol=args.tol)
    status = "PASS" if rep["pass"] else "FAIL"
    print(f"{status} max_rel_err={rep['max_rel_err']:.3e} checked={rep['n_checked']}")
    return 0 if rep["pass"] else 2


def _build_dataset(task: dict) -> dict:
    kind = task["type"]
    if kind == "teacher_student":
        return make_teacher_student(
            m=task["m"], n=task["n"], true_ranks=task["true_ranks"],
            n_samples=task.get("n_samples", 512),
            sigma_noise=task.get("sigma_noise", 0.0),
            seed=task.get("seed", 0),
        )
    if kind == "classification":
        return make_synthetic_classification(
            n_classes=task.get("n_classes", 2),
            seq_len=task.get("seq_len", 12),
            vocab=task.get("vocab", 16),
            rule=task.get("rule", "token-presence"),
            n_samples=task.get("n_samples", 512),
            seed=task.get("seed", 0),
        )
    raise ContractViolation(f"unknown task type {kind!r}")


def _build_trial_model(task: dict, ds: dict, shape, rank, alpha, seed):
    if task["type"] == "teacher_student":
        tmap = _split_map(task["m"], task["n"], tuple(shape))
        s = tmap.shape
        ranks = TTRanks.uniform(s, rank)
        cores = tt_random_init(s, ranks, seed=seed, scheme="gaussian_all_but_last_zero",
                               sigma=0.02)
        layer = AdaptedLinear(FrozenLinear(ds["w0"]), cores, tmap, alpha=alpha)
        return AdaptedLinearRegressor(layer)
    arch = ArchConfig(
        vocab=task.get("vocab", 16),
        embed_dim=task.get("embed_dim", 64),
        hidden_dim=task.get("hidden_dim", 128),
        n_classes=ds["n_classes"],
        seed=seed,
    )
    return build_model(arch, peft={"kind": "ttlora", "shape": list(shape),
                                   "rank": rank, "alpha": alpha})


def _cmd_train(args) -> int:
    cfg = json.loads(Path(args.config).read_text("utf-8"))
    task = cfg["task"]
    ds = _build_dataset(task)
    peft = cfg.get("peft", {})
    model = _build_trial_model(task, ds, peft.get("shape"), peft.get("rank", 2),
                               peft.get("alpha", 1.0), seed=cfg.get("seed", 0))
    tc = TrainConfig(**cfg.get("train", {}))
    result = train(model, ds, tc)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_history(result.history, out_dir / "history.csv")
    if task["type"] == "teacher_student":
        layer = model.layer
        ttio.save_ttlf(out_dir / "adapter.ttlf", layer.cores, layer.tmap,
                       alpha=layer.alpha, dtype="f32", seed=cfg.get("seed", 0),
                       layer_label="adapter")
    print(f"best val loss {result.best_val_loss:.6g} at epoch {result.best_epoch}; "
          f"stopped after epoch {result.stopped_epoch}")
    return 0


def _cmd_sweep(args) -> int:
    spec = json.loads(Path(args.spec).read_text("utf-8"))
    task = spec["task"]
    ds = _build_dataset(task)
    if task["type"] == "teacher_student":
        target_mn = (task["m"], task["n"])
        n_wrapped = 1
    else:
        e = task.get("embed_dim", 64)
        target_mn = (e, e)
        n_wrapped = 2
    space = SearchSpace(
        shapes=tuple(tuple(s) for s in spec["shapes"]),
        ranks=tuple(spec["ranks"]),
        alphas=tuple(spec["alphas"]),
        learning_rates=tuple(spec["learning_rates"]),
    )
    base_seed = spec.get("seed", 0)
    trials = enumerate_trials(space, target_mn, base_seed=base_seed,
                              subsample=spec.get("subsample"))
    schedule = spec.get("budget_schedule", [2, 5, 10])
    patience = spec.get("patience", 5)

    def objective(cfg: TrialConfig, total_budget: int, state):
        trainer = state
        if trainer is None:
            model = _build_trial_model(task, ds, cfg.shape, cfg.rank, cfg.alpha,
                                       seed=cfg.seed)
            tc = TrainConfig(learning_rate=cfg.lr, max_epochs=schedule[-1],
                             patience=patience, batch_size=spec.get("batch_size", 32),
                             seed=cfg.seed)
            trainer = Trainer(model, ds, tc)
        trainer.run_epochs(total_budget - trainer.epoch)
        hist = {h["epoch"]: h for h in trainer.history}
        metric = hist[trainer.best_epoch]["val_metric"] if trainer.best_epoch in hist \
            else float("-inf")
        return trainer.best_val, metric, trainer.epoch, trainer

    report = successive_halving(
        trials, schedule, spec.get("keep_fraction", 0.5), objective,
        target_mn=target_mn, n_wrapped=n_wrapped, workers=args.workers,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(report, out_dir / "sweep_results.csv")
    write_pareto_csv(report, out_dir / "pareto.csv")
    emit_tradeoff_data(report, out_dir / "tradeoff.csv")
    n_done = sum(1 for r in report.trials if r.status == "completed")
    n_fail = sum(1 for r in report.trials if r.status == "failed")
    print(f"{len(report.trials)} trials: {n_done} completed, {n_fail} failed, "
          f"{len(report.trials) - n_done - n_fail} pruned")
    if report.best is not None:
        c = report.best.config
        print(f"best: shape {'x'.join(map(str, c.shape))} rank {c.rank} "
              f"alpha {c.alpha} lr {c.lr} val_loss {report.best.best_val_loss:.6g}")
        return 0
    print("all trials failed", file=sys.stderr)
    return 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ttlora", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("count", help="parameter and compression accounting")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--shape", required=True, help="comma-separated mode sizes")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--wrapped", type=int, default=1)
    p.set_defaults(fn=_cmd_count)

    p = sub.add_parser("decompose", help="dense matrix file -> TTLF archive")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--shape", required=True)
    p.add_argument("--max-rank", type=int, default=64)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--dtype", default="f64", choices=["f16", "f32", "f64"])
    p.set_defaults(fn=_cmd_decompose)

    p = sub.add_parser("reconstruct", help="TTLF archive -> dense matrix file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--dtype", default="f64", choices=["f16", "f32", "f64"])
    p.set_defaults(fn=_cmd_reconstruct)

    p = sub.add_parser("merge", help="TTLF + dense base -> merged dense weight")
    p.add_argument("--ttlf", required=True)
    p.add_argument("--base", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--dtype", default="f64", choices=["f16", "f32", "f64"])
    p.set_defaults(fn=_cmd_merge)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--preset", default="small", choices=["small", "zero", "clamped"])
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("train", help="train from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default="train_out")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("sweep", help="hyperparameter sweep from a JSON spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-dir", default="sweep_out")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=_cmd_sweep)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except ContractViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
