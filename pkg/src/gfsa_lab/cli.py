"""Command-line entry point: ``gfsa-lab <command> [options]``.

Commands
--------
verify-bound
    Measure the Taylor error of A^K over random row-stochastic matrices.
spectrum
    Filter response on the singular values of an attention matrix file.
train
    Train the toy transformer from a key=value config.
diagnose
    Cosine similarity and spectra for a saved checkpoint.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .attention import AttentionMatrix
from .config import ConfigError, read_config, model_config, DEFAULTS
from .gfsa import BoundViolation, GraphFilter, error_profile
from .model import (evaluate, forward, load_checkpoint, metrics_jsonl,
                    save_checkpoint, train)
from .numerics import MatrixFormatError, Rng, format_csv, read_matrix
from .tasks import make_task

DIAGNOSE_BATCH = 32


def _emit(text: str, out) -> None:
    if out is None or str(out) == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, newline="\n")


def bound_sizes(n_max: int) -> list[int]:
    """Powers of two from 2 up to ``n_max``, plus ``n_max`` itself."""
    if n_max < 2:
        raise ValueError("--n-max must be >= 2")
    sizes = []
    n = 2
    while n <= n_max:
        sizes.append(n)
        n *= 2
    if sizes[-1] != n_max:
        sizes.append(n_max)
    return sizes


def verify_bound(n_max: int, trials: int, k_min: int, k_max: int, seed: int) -> str:
    """CSV of max/mean E_K per K over ``trials`` matrices for each size.

    Matrices are drawn in (size, trial) order from one seeded stream.
    Raises :class:`BoundViolation` if any E_K exceeds 2K + 1e-9.
    """
    if k_min < 1 or k_max < k_min:
        raise ValueError("invalid K range: need 1 <= k_min <= k_max")
    if trials < 1:
        raise ValueError("--trials must be >= 1")
    ks = list(range(k_min, k_max + 1))
    rng = Rng(seed)
    errors = {k: [] for k in ks}
    for n in bound_sizes(n_max):
        for _ in range(trials):
            a = AttentionMatrix(rng.row_stochastic(n))
            for rec in error_profile(a, ks):
                errors[rec.k].append(rec.actual_error)
    rows = [(k, max(errors[k]), float(np.mean(errors[k])), float(2 * k)) for k in ks]
    return format_csv(["K", "max_actual_EK", "mean_actual_EK", "bound"], rows)


def spectrum(matrix_file, w0: float, w1: float, wk: float, k: int) -> str:
    a = AttentionMatrix.from_input(read_matrix(matrix_file), masked=True)
    f = GraphFilter.single(w0, w1, wk, k)
    return dg.filter_response(f, 0, dg.attention_spectrum(a)).to_csv()


def diagnose(checkpoint, eval_seed: int) -> dict[str, str]:
    """Named CSV outputs for a checkpoint, evaluated on a seeded batch."""
    state, cfg, manifest = load_checkpoint(checkpoint)
    task = make_task(manifest.get("task", "copy"), cfg.vocab, cfg.seq_len,
                     size=DIAGNOSE_BATCH, seed=eval_seed)
    metrics = evaluate(state, cfg, task.inputs, task.targets)
    out = {
        "cosine_similarity.csv": format_csv(
            ["layer", "cosine_similarity"],
            enumerate(metrics["cosine_sim_per_layer"], start=1)),
    }
    fp = forward(state, cfg, task.inputs[:1])
    sigma = dg.feature_spectrum(fp.features[-1].value[0])
    out["feature_spectrum.csv"] = format_csv(["index", "sigma"], enumerate(sigma))
    p = state.params
    for layer in range(cfg.layers):
        att = fp.attention[layer].value[0]
        if cfg.uses_gfsa(layer):
            f = GraphFilter(p["gfsa_w0"][layer], p["gfsa_w1"][layer], p["gfsa_wk"][layer],
                            cfg.filter_order)
        else:
            f = GraphFilter.initial(cfg.heads, cfg.filter_order)
        for head in range(cfg.heads):
            report = dg.filter_response(f, head, dg.attention_spectrum(AttentionMatrix(att[head])),
                                        layer_index=layer + 1)
            out[f"attention_spectrum_layer{layer + 1}_head{head + 1}.csv"] = report.to_csv()
    return out


def _cmd_verify_bound(args) -> int:
    opts = {"trials": DEFAULTS["trials"], "k_min": DEFAULTS["k_min"], "k_max": DEFAULTS["k_max"],
            "seed": DEFAULTS["seed"]}
    if args.config:
        cfg = read_config(args.config)
        opts.update({key: cfg[key] for key in opts})
    for key in opts:
        if getattr(args, key) is not None:
            opts[key] = getattr(args, key)
    try:
        text = verify_bound(args.n_max, opts["trials"], opts["k_min"], opts["k_max"], opts["seed"])
    except BoundViolation as exc:
        print(f"bound violated: {exc}", file=sys.stderr)
        return 1
    _emit(text, args.out)
    return 0


def _cmd_spectrum(args) -> int:
    _emit(spectrum(args.matrix, args.w0, args.w1, args.wk, args.K), args.out)
    return 0


def _cmd_train(args) -> int:
    values = read_config(args.config)
    if args.seed is not None:
        values["seed"] = args.seed
    cfg = model_config(values)
    out_dir = Path(args.out or values["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    task = make_task(values["task"], cfg.vocab, cfg.seq_len, seed=cfg.seed)
    state, metrics = train(cfg, task, values["epochs"])
    (out_dir / "metrics.jsonl").write_text(metrics_jsonl(metrics), newline="\n")
    save_checkpoint(out_dir / "checkpoint", state, cfg,
                    extra={"task": values["task"], "epochs": values["epochs"]})
    last = metrics[-1]
    print(f"epoch {last['epoch']}: loss {last['loss']:.6g} accuracy {last['accuracy']:.4f}",
          file=sys.stderr)
    return 0


def _cmd_diagnose(args) -> int:
    outputs = diagnose(args.checkpoint, args.seed if args.seed is not None else 0)
    out_dir = Path(args.out) if args.out else Path(args.checkpoint) / "diagnostics"
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in outputs.items():
        (out_dir / name).write_text(text, newline="\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gfsa-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-bound", help="empirical check of E_K <= 2K")
    p.add_argument("--n-max", type=int, default=64)
    p.add_argument("--trials", type=int)
    p.add_argument("--k-min", type=int)
    p.add_argument("--k-max", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=_cmd_verify_bound)

    p = sub.add_parser("spectrum", help="filter response on attention singular values")
    p.add_argument("--matrix", required=True)
    p.add_argument("--w0", type=float, default=0.0)
    p.add_argument("--w1", type=float, default=1.0)
    p.add_argument("--wk", type=float, default=0.0)
    p.add_argument("--K", type=int, default=2)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("train", help="train the toy transformer")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides out_dir)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("diagnose", help="diagnostics for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed", type=int, help="evaluation batch seed (default 0)")
    p.add_argument("--out", help="output directory (default <checkpoint>/diagnostics)")
    p.set_defaults(func=_cmd_diagnose)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MatrixFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
