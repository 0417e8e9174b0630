"""Command-line surface: data generation, training, evaluation,
cross-validation with ablations, and the gradient self-check.

Run configs are flat key=value text files; unknown keys are rejected and
the fully resolved config is echoed into the output directory so any run
can be reproduced from its artifacts. Exit codes: 2 config error, 3 data
or artifact error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .alignment import (
    AlignmentConfig,
    alignment_loss,
    emotion_match_matrix,
    similarity_matrices,
)
from .data import (
    Batch,
    DatasetError,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from .layers import CrossAttentionLayer, LayerNormLayer, LinearLayer, ProjectionMLP
from .matching import mem_forward_loss, mine_hard_negatives
from .model import (
    CheckpointError,
    FoalNet,
    FoalNetConfig,
    load_checkpoint,
    save_checkpoint,
)
from .tensor import (
    NumericError,
    Tensor,
    concat,
    cross_entropy,
    gather_rows,
    grad_check,
    log_softmax,
    matmul,
    mean_pool_time,
    power,
    relu,
    softmax,
    transpose_last2,
    tsum,
)
from .training import (
    OptimConfig,
    apply_state,
    cross_validate,
    evaluate,
    format_summary,
    run_ablation,
    train,
)


class ConfigError(ValueError):
    """Bad key, bad value, or missing requirement in a run config."""


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default); None default means the key has no value until set
CONFIG_SCHEMA = {
    "dataset": (str, None),
    "out_dir": (str, None),
    "val_group": (int, 0),
    "seed": (int, 0),
    "batch_size": (int, 64),
    "epochs": (int, 50),
    "jobs": (int, 1),
    "lr": (float, 1e-4),
    "beta1": (float, 0.9),
    "beta2": (float, 0.999),
    "eps": (float, 1e-8),
    "weight_decay": (float, 0.01),
    "heads": (int, 4),
    "fusion_layers": (int, 2),
    "attn_dropout": (float, 0.1),
    "proj_hidden": (int, 512),
    "proj_dropout": (float, 0.5),
    "proj_dim": (int, 512),
    "temperature": (float, 10.0),
    "l2_normalize": (_parse_bool, True),
    "per_positive_norm": (_parse_bool, False),
    "lambda": (float, 0.01),
    "enable_avel": (_parse_bool, True),
    "enable_mem": (_parse_bool, True),
}


def parse_config(path) -> dict:
    """Read a key=value file into a fully defaulted config dict."""
    resolved = {key: default for key, (_, default) in CONFIG_SCHEMA.items()}
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        parser, _ = CONFIG_SCHEMA[key]
        try:
            resolved[key] = parser(value)
        except ValueError as err:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {err}") from err
    return resolved


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigError(f"config is missing required keys: {', '.join(missing)}")


def format_resolved(cfg: dict) -> str:
    lines = []
    for key in CONFIG_SCHEMA:
        value = cfg[key]
        if value is None:
            continue
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def _model_config(cfg: dict, header) -> FoalNetConfig:
    align = AlignmentConfig(proj_dim=cfg["proj_dim"],
                            temperature=cfg["temperature"],
                            l2_normalize=cfg["l2_normalize"],
                            per_positive_norm=cfg["per_positive_norm"])
    return FoalNetConfig(d_a=header.d_a, d_v=header.d_v, classes=header.classes,
                         heads=cfg["heads"], fusion_layers=cfg["fusion_layers"],
                         attn_dropout=cfg["attn_dropout"],
                         proj_hidden=cfg["proj_hidden"],
                         proj_dropout=cfg["proj_dropout"], align=align,
                         lam=cfg["lambda"], enable_avel=cfg["enable_avel"],
                         enable_mem=cfg["enable_mem"], seed=cfg["seed"])


def _optim_config(cfg: dict) -> OptimConfig:
    return OptimConfig(lr=cfg["lr"], beta1=cfg["beta1"], beta2=cfg["beta2"],
                       eps=cfg["eps"], weight_decay=cfg["weight_decay"],
                       epochs=cfg["epochs"], seed=cfg["seed"])


def _prepare_out_dir(cfg: dict) -> Path:
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.resolved").write_text(format_resolved(cfg))
    return out_dir


def _metrics_text(metrics) -> str:
    lines = [f"ua {metrics.ua:.12f}", f"wa {metrics.wa:.12f}",
             "confusion (rows=truth, cols=pred):"]
    for row in metrics.confusion:
        lines.append("  " + " ".join(f"{int(v):6d}" for v in row))
    return "\n".join(lines) + "\n"


# -- commands ----------------------------------------------------------------


def cmd_gen_data(args) -> int:
    spec = SyntheticSpec(classes=args.classes, groups=args.groups,
                         per_class=args.per_class, d_a=args.d_a, d_v=args.d_v,
                         t_frames=args.t_frames, f_frames=args.f_frames,
                         separation=args.separation, noise=args.noise,
                         scheme=args.scheme, seed=args.seed)
    dataset = generate_synthetic(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(out, dataset.header, dataset.samples)
    h = dataset.header
    print(f"wrote {h.sample_count} samples to {out}")
    print(f"classes {h.classes} ({', '.join(h.label_names)}), "
          f"groups {args.groups}, scheme {spec.scheme}")
    print(f"audio [T={h.t_frames}, D_a={h.d_a}], video [F={h.f_frames}, D_v={h.d_v}]")
    return 0


def _split_by_group(samples, val_group: int):
    train_set = [s for s in samples if s.group != val_group]
    val_set = [s for s in samples if s.group == val_group]
    if not val_set:
        raise ConfigError(f"val_group {val_group} has no samples in the dataset")
    if not train_set:
        raise ConfigError(f"val_group {val_group} leaves an empty training set")
    return train_set, val_set


def cmd_train(args) -> int:
    cfg = parse_config(args.config)
    _require(cfg, "dataset", "out_dir")
    dataset = load_dataset(cfg["dataset"])
    train_set, val_set = _split_by_group(dataset.samples, cfg["val_group"])
    out_dir = _prepare_out_dir(cfg)

    model = FoalNet(_model_config(cfg, dataset.header))
    with open(out_dir / "metrics.ndjson", "w") as log:
        result = train(model, train_set, val_set, _optim_config(cfg),
                       batch_size=cfg["batch_size"], log=log, run_id="train",
                       fold=cfg["val_group"])
    apply_state(model, result.best_state)
    save_checkpoint(model, out_dir / "best.ckpt")

    best = result.best_metrics
    if best is None:  # zero-epoch run: score the freshly initialized model
        best = evaluate(model, val_set, cfg["batch_size"])
    summary = (f"trained {len(result.history)} epochs on "
               f"{len(train_set)} samples (val group {cfg['val_group']}, "
               f"{len(val_set)} samples)\n"
               f"best epoch {result.best_epoch}\n" + _metrics_text(best))
    (out_dir / "summary.txt").write_text(summary)
    print(summary, end="")
    print(f"checkpoint: {out_dir / 'best.ckpt'}")
    return 0


def cmd_eval(args) -> int:
    config_path = args.config
    if config_path is None:
        config_path = Path(args.checkpoint).parent / "config.resolved"
        if not config_path.exists():
            raise ConfigError(
                "no --config given and no config.resolved beside the checkpoint")
    cfg = parse_config(config_path)
    dataset = load_dataset(args.dataset)
    samples = dataset.samples
    if args.group is not None:
        samples = [s for s in samples if s.group == args.group]
        if not samples:
            raise ConfigError(f"group {args.group} has no samples in the dataset")

    model = FoalNet(_model_config(cfg, dataset.header))
    load_checkpoint(model, args.checkpoint)
    metrics = evaluate(model, samples, cfg["batch_size"])
    print(f"evaluated {len(samples)} samples"
          + (f" (group {args.group})" if args.group is not None else ""))
    print(_metrics_text(metrics), end="")
    return 0


def cmd_xval(args) -> int:
    cfg = parse_config(args.config)
    _require(cfg, "dataset", "out_dir")
    dataset = load_dataset(cfg["dataset"])
    out_dir = _prepare_out_dir(cfg)

    model_cfg = _model_config(cfg, dataset.header)
    optim_cfg = _optim_config(cfg)
    with open(out_dir / "metrics.ndjson", "w") as log:
        if args.ablation:
            rows = run_ablation(dataset.samples, model_cfg, optim_cfg,
                                batch_size=cfg["batch_size"], log=log,
                                jobs=cfg["jobs"])
        else:
            rows = [cross_validate(dataset.samples, model_cfg, optim_cfg,
                                   batch_size=cfg["batch_size"], log=log,
                                   jobs=cfg["jobs"])]
    summary = format_summary(rows)
    (out_dir / "summary.txt").write_text(summary)
    print(summary, end="")
    return 0


# -- gradient self-check -------------------------------------------------------


def _toy_batch(rng: np.random.Generator, n=4, t=3, f=2, d_a=8, d_v=6) -> Batch:
    labels = np.array([0, 1, 0, 2], dtype=np.intp)[:n]
    return Batch(audio=rng.standard_normal((n, t, d_a)),
                 video=rng.standard_normal((n, f, d_v)),
                 labels=labels,
                 groups=np.zeros(n, dtype=np.intp))


def _toy_model(seed: int = 11) -> FoalNet:
    cfg = FoalNetConfig(d_a=8, d_v=6, classes=4, heads=2, fusion_layers=2,
                        attn_dropout=0.0, proj_hidden=16, proj_dropout=0.0,
                        align=AlignmentConfig(proj_dim=6), seed=seed)
    return FoalNet(cfg).eval()


def gradcheck_items():
    """(name, forward closure, parameters, tolerance) for every check.

    Primitives and single layers must agree with central differences to
    1e-6; the composite objective, whose graph stacks hundreds of ops, is
    held to 1e-4. Dropout is disabled throughout (rate 0, eval mode);
    rectifier inputs sit away from the kink at the pinned seeds.
    """
    rng = np.random.default_rng(2024)
    items = []

    def param(*shape):
        return Tensor(rng.standard_normal(shape), requires_grad=True)

    def const(*shape):
        return Tensor(rng.standard_normal(shape))

    a, b = param(3, 4), param(4, 2)
    items.append(("matmul", lambda: tsum(power(matmul(a, b), 2.0)), [a, b], 1e-6))

    x_t, w_t = param(2, 3, 4), const(2, 4, 3)
    items.append(("transpose_last2",
                  lambda: tsum(transpose_last2(x_t) * w_t), [x_t], 1e-6))

    x_sm, w_sm = param(3, 5), const(3, 5)
    items.append(("softmax", lambda: tsum(softmax(x_sm, axis=-1) * w_sm),
                  [x_sm], 1e-6))

    x_ls, w_ls = param(3, 5), const(3, 5)
    items.append(("log_softmax", lambda: tsum(log_softmax(x_ls, axis=-1) * w_ls),
                  [x_ls], 1e-6))

    logits = param(4, 3)
    targets = np.array([0, 2, 1, 1], dtype=np.intp)
    items.append(("cross_entropy", lambda: cross_entropy(logits, targets),
                  [logits], 1e-6))

    x_mp = param(2, 3, 4)
    items.append(("mean_pool_time", lambda: tsum(power(mean_pool_time(x_mp), 2.0)),
                  [x_mp], 1e-6))

    c1, c2, w_cat = param(2, 3), param(3, 3), const(5, 3)
    items.append(("concat", lambda: tsum(concat([c1, c2], axis=0) * w_cat),
                  [c1, c2], 1e-6))

    x_g, w_g = param(4, 3), const(5, 3)
    idx = np.array([2, 0, 3, 3, 1], dtype=np.intp)
    items.append(("gather_rows", lambda: tsum(gather_rows(x_g, idx) * w_g),
                  [x_g], 1e-6))

    x_rel = Tensor(np.array([[-1.5, 0.7, 2.0], [0.9, -0.3, -2.2]]),
                   requires_grad=True)
    w_rel = const(2, 3)
    items.append(("relu", lambda: tsum(relu(x_rel) * w_rel), [x_rel], 1e-6))

    x_pow = Tensor(rng.uniform(0.5, 2.0, (3, 3)), requires_grad=True)
    items.append(("power", lambda: tsum(power(x_pow, -0.5)), [x_pow], 1e-6))

    lin = LinearLayer(5, 3, rng)
    x_lin = const(4, 5)
    items.append(("linear", lambda: tsum(power(lin(x_lin), 2.0)),
                  lin.parameters(), 1e-6))

    mlp = ProjectionMLP(6, 8, 5, 0.0, rng).eval()
    x_mlp = const(4, 6)
    items.append(("projection_mlp", lambda: tsum(power(mlp(x_mlp), 2.0)),
                  mlp.parameters(), 1e-6))

    ln = LayerNormLayer(6)
    x_ln, w_ln = param(3, 6), const(3, 6)
    items.append(("layer_norm", lambda: tsum(ln(x_ln) * w_ln),
                  [x_ln] + ln.parameters(), 1e-6))

    attn = CrossAttentionLayer(4, 6, 2, 0.0, rng).eval()
    q_att, kv_att = const(2, 3, 4), const(2, 2, 6)
    items.append(("cross_attention", lambda: tsum(power(attn(q_att, kv_att), 2.0)),
                  attn.parameters(), 1e-6))

    acfg = AlignmentConfig(proj_dim=5)
    e_a, e_v = param(4, 5), param(4, 5)
    match = emotion_match_matrix(np.array([0, 1, 0, 2]))
    items.append((
        "alignment_loss",
        lambda: alignment_loss(*similarity_matrices(e_a, e_v, acfg), match, acfg),
        [e_a, e_v], 1e-6))

    mem_model = _toy_model(seed=17)
    mem_batch = _toy_batch(np.random.default_rng(5))
    mem_match = emotion_match_matrix(mem_batch.labels)
    with_e = mem_model.project(Tensor(mem_batch.audio), Tensor(mem_batch.video))
    c_a2v, c_v2a = similarity_matrices(*with_e, mem_model.config.align)
    picks = mine_hard_negatives(c_a2v.data, c_v2a.data, mem_match)
    items.append((
        "mem_loss",
        lambda: mem_forward_loss(mem_model, Tensor(mem_batch.audio),
                                 Tensor(mem_batch.video), picks),
        mem_model.parameters(), 1e-6))

    full_model = _toy_model(seed=11)
    full_batch = _toy_batch(np.random.default_rng(7))
    items.append(("total_loss", lambda: full_model.total_loss(full_batch)[0],
                  full_model.parameters(), 1e-4))
    return items


def cmd_gradcheck(args) -> int:
    failures = 0
    for name, fwd, params, tol in gradcheck_items():
        err = grad_check(fwd, params)
        status = "ok" if err <= tol else "FAIL"
        if status == "FAIL":
            failures += 1
        print(f"{name:<18} max rel err {err:9.3e}  tol {tol:.0e}  {status}")
    if failures:
        print("max relative error <= 1e-4: FAIL")
        raise NumericError(f"{failures} gradient check(s) out of tolerance")
    print("max relative error <= 1e-4: PASS")
    return 0


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foalnet",
        description="Audio-video emotion recognition over precomputed "
                    "embeddings: alignment, hard-negative matching, "
                    "cross-attention fusion.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="write a synthetic embedding dataset")
    gen.add_argument("--out", required=True)
    gen.add_argument("--classes", type=int, default=4)
    gen.add_argument("--groups", type=int, default=4)
    gen.add_argument("--per-class", type=int, default=50, dest="per_class")
    gen.add_argument("--d-a", type=int, default=32, dest="d_a")
    gen.add_argument("--d-v", type=int, default=24, dest="d_v")
    gen.add_argument("--t-frames", type=int, default=8, dest="t_frames")
    gen.add_argument("--f-frames", type=int, default=4, dest="f_frames")
    gen.add_argument("--separation", type=float, default=3.0)
    gen.add_argument("--noise", type=float, default=1.0)
    gen.add_argument("--scheme", choices=("complementary", "redundant"),
                     default="complementary")
    gen.add_argument("--seed", type=int, default=1)
    gen.set_defaults(func=cmd_gen_data)

    tr = sub.add_parser("train", help="train on one group split")
    tr.add_argument("--config", required=True)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--config", default=None,
                    help="defaults to config.resolved beside the checkpoint")
    ev.add_argument("--group", type=int, default=None,
                    help="restrict evaluation to one group")
    ev.set_defaults(func=cmd_eval)

    xv = sub.add_parser("xval", help="leave-one-group-out cross-validation")
    xv.add_argument("--config", required=True)
    xv.add_argument("--ablation", action="store_true",
                    help="run the Baseline / +AVEL / +MEM / +AVEL+MEM grid")
    xv.set_defaults(func=cmd_xval)

    gc = sub.add_parser("gradcheck", help="finite-difference gradient self-check")
    gc.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (DatasetError, CheckpointError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return 3
    except FileNotFoundError as err:
        print(f"data error: {err}", file=sys.stderr)
        return 3
    except NumericError as err:
        print(f"numeric error: {err}", file=sys.stderr)
        return 4
    except ValueError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
