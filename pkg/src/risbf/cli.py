"""Command-line entry point: ``risbf <subcommand>``.

Exit codes: 0 success, 2 usage or configuration error (including bad input
files and method preconditions), 3 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import harness, plotting
from .channel import generate_dataset, load_dataset, save_dataset
from .config import ConfigError, RunConfig, load_run_config
from .nn import ArchitectureSpec, load_model, save_model, train

log = logging.getLogger("risbf")

EXIT_USAGE = 2
EXIT_RUNTIME = 3

# flag dest -> RunConfig key
_OVERRIDES = ("M", "N", "snr_db", "count", "seed", "threads", "batch_size", "init_lr",
              "max_epochs", "early_stop_patience", "plateau_patience", "lr_decay",
              "sdr_trials", "sdr_tol", "sdr_restarts", "sdr_max_iters", "reference")


class UsageError(Exception):
    pass


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int, help="worker count (default: machine parallelism)")
    parser.add_argument("-v", "--verbose", action="store_true")


def _scenario(parser):
    parser.add_argument("--M", type=int)
    parser.add_argument("--N", type=int)
    parser.add_argument("--snr-db", type=float)


def _solver(parser):
    parser.add_argument("--sdr-trials", type=int)
    parser.add_argument("--sdr-tol", type=float)
    parser.add_argument("--sdr-restarts", type=int)
    parser.add_argument("--sdr-max-iters", type=int)


def _training(parser):
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--init-lr", type=float)
    parser.add_argument("--max-epochs", type=int)
    parser.add_argument("--early-stop-patience", type=int)
    parser.add_argument("--plateau-patience", type=int)
    parser.add_argument("--lr-decay", type=float)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _configs(text: str) -> list[tuple[int, int]]:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            m, n = item.lower().split("x")
            out.append((int(m), int(n)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected MxN pairs like 4x32, got {item!r}")
    return out


def _methods(text: str) -> list[str]:
    return [m.strip() for m in text.split(",") if m.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="risbf", description="RIS passive beamforming toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a channel dataset file")
    _common(p)
    _scenario(p)
    p.add_argument("--count", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the phase-prediction network")
    _common(p)
    _training(p)
    p.add_argument("--train", required=True, dest="train_path")
    p.add_argument("--val", required=True, dest="val_path")
    p.add_argument("--model-out", required=True)
    p.add_argument("--history", help="history CSV path (default: <model-out>.history.csv)")

    p = sub.add_parser("eval", help="compare methods on a test dataset")
    _common(p)
    _solver(p)
    p.add_argument("--test", required=True)
    p.add_argument("--methods", type=_methods, default=["sdr", "random"])
    p.add_argument("--model", help="model file for the 'nn' method")
    p.add_argument("--reference")
    p.add_argument("--out", default="report.csv")

    p = sub.add_parser("bench", help="time methods per instance")
    _common(p)
    _solver(p)
    p.add_argument("--configs", type=_configs, default=[(2, 16), (4, 32), (8, 64)])
    p.add_argument("--methods", type=_methods, default=["nn", "nn-batch", "sdr"],
                   help="nn = one instance per call; nn-batch = all instances in one call")
    p.add_argument("--repetitions", type=int, default=20)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--model", action="append", default=[], help="model file(s) used for matching (M, N)")
    p.add_argument("--v-max", type=float, default=1.5)
    p.add_argument("--fc", type=float, default=2.6e9)
    p.add_argument("--out", default="bench.csv")

    p = sub.add_parser("sweep", help="sweep N or M and report per-method gains")
    _common(p)
    _scenario(p)
    _solver(p)
    p.add_argument("--axis", choices=("N", "M"), default="N")
    p.add_argument("--values", type=_int_list, required=True)
    p.add_argument("--methods", type=_methods, default=["sdr", "random"])
    p.add_argument("--model-dir", help="directory of model_M{M}_N{N}.rism files for 'nn'")
    p.add_argument("--count", type=int)
    p.add_argument("--reference")
    p.add_argument("--out-dir", default=".")

    p = sub.add_parser("coherence", help="channel coherence time")
    p.add_argument("--v-max", type=float, default=1.5, help="m/s")
    p.add_argument("--fc", type=float, default=2.6e9, help="Hz")

    p = sub.add_parser("ablation", help="BatchNorm and batch-size training study")
    _common(p)
    p.add_argument("--M", type=int, default=8)
    p.add_argument("--N", type=int, default=64)
    p.add_argument("--count", type=int, default=20000)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-sizes", type=_int_list, default=[5000])
    p.add_argument("--out-dir", default=".")

    p = sub.add_parser("sample-study", help="network performance versus training-set size")
    _common(p)
    _scenario(p)
    _training(p)
    _solver(p)
    p.add_argument("--counts", type=_int_list, required=True)
    p.add_argument("--test-count", type=int, default=2000)
    p.add_argument("--out-dir", default=".")
    return parser


def _run_config(args) -> RunConfig:
    overrides = {k: getattr(args, k) for k in _OVERRIDES if hasattr(args, k)}
    return load_run_config(getattr(args, "config", None), overrides)


def _workers(cfg: RunConfig) -> int:
    return cfg.threads or os.cpu_count() or 1


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _load_dataset(path, cfg: RunConfig):
    try:
        return load_dataset(path, cfg.scenario())
    except OSError as exc:
        raise UsageError(f"cannot read dataset {path}: {exc}") from None


def _load_model(path):
    try:
        return load_model(path)
    except OSError as exc:
        raise UsageError(f"cannot read model {path}: {exc}") from None


def cmd_gen_data(args) -> int:
    cfg = _run_config(args)
    ds = generate_dataset(cfg.scenario(), cfg.count, cfg.resolved_seed(), workers=_workers(cfg))
    save_dataset(ds, args.out)
    print(f"# {cfg.describe()}")
    print(f"wrote {len(ds)} samples (M={ds.M}, N={ds.N}) to {args.out}")
    print(f"sha256 {_sha256(args.out)}")
    return 0


def cmd_train(args) -> int:
    cfg = _run_config(args)
    tr = _load_dataset(args.train_path, cfg)
    va = _load_dataset(args.val_path, cfg)
    if (tr.M, tr.N) != (va.M, va.N):
        raise UsageError(f"train set is (M, N) = {(tr.M, tr.N)} but validation set is {(va.M, va.N)}")
    cfg = replace(cfg, M=tr.M, N=tr.N)
    spec = ArchitectureSpec(tr.M, tr.N)
    params, history = train(tr, va, spec, cfg.training())
    save_model(params, args.model_out)
    hist_path = Path(args.history or f"{args.model_out}.history.csv")
    _write_text(hist_path, harness.history_csv(history, cfg.describe()))
    png = hist_path.with_suffix(".png")
    plotting.plot_history(history, png, f"M={tr.M}, N={tr.N}")
    _write_text(hist_path.with_suffix(".gp"), plotting.gnuplot_history(hist_path.name, png.name))
    print(f"epochs {len(history)}, best epoch {history.best_epoch + 1}, "
          f"best val loss {history.best_val_loss:.6g}")
    print(f"model {args.model_out} sha256 {_sha256(args.model_out)}")
    return 0


def _print_report(report: harness.ExperimentReport) -> None:
    print(f"M={report.M} N={report.N} count={report.count} reference={report.reference}")
    print(f"{'method':<12}{'mean gain':>14}{'gain %':>10}{'rate':>10}{'rate %':>10}{'mean ms':>12}")
    for m in report.methods:
        print(f"{m.method:<12}{m.mean_gain:>14.6g}{m.ratio_pct:>10.2f}{m.rate_at_mean_snr:>10.4f}"
              f"{m.rate_ratio_pct:>10.2f}{m.mean_ms:>12.4f}")


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    test = _load_dataset(args.test, cfg)
    params = _load_model(args.model) if args.model else None
    methods = [harness.make_method(name, params, cfg.solver()) for name in args.methods]
    reference = args.reference or (cfg.reference if cfg.reference in args.methods else args.methods[0])
    cfg = replace(cfg, M=test.M, N=test.N, count=len(test), reference=reference)
    report = harness.evaluate_methods(methods, test, reference, cfg.resolved_seed(), _workers(cfg))
    _write_text(args.out, harness.report_csv(report, cfg.describe()))
    _print_report(report)
    bad = sum(m.nonconverged for m in report.methods)
    if bad:
        log.warning("%d SDR solves hit max_iters; see the nonconverged column", bad)
    return 0


def cmd_bench(args) -> int:
    cfg = _run_config(args)
    if not args.configs:
        raise UsageError("no configurations given")
    models = {}
    for path in args.model:
        params = _load_model(path)
        models[(params.spec.M, params.spec.N)] = params
    for name in args.methods:
        if name not in harness.METHOD_NAMES + (harness.BATCHED_NN,):
            raise UsageError(f"unknown method {name!r}")
    with threadpool_limits(limits=1):
        rows = harness.benchmark_runtime(args.methods, args.configs, args.repetitions, args.warmup,
                                         cfg.resolved_seed(), models, cfg.solver())
    tc = harness.coherence_time(args.v_max, args.fc)
    out = _write_text(args.out, harness.timing_csv(rows, cfg.describe(), tc))
    png = out.with_suffix(".png")
    plotting.plot_timing(rows, png)
    _write_text(out.with_suffix(".gp"), plotting.gnuplot_timing(out.name, png.name))
    print(f"coherence time {tc * 1e3:.2f} ms")
    print(f"{'M':>3}{'N':>5}  {'method':<12}{'mean ms':>12}{'median ms':>12}{'speedup':>12}")
    for r in rows:
        print(f"{r.M:>3}{r.N:>5}  {r.method:<12}{r.mean_ms:>12.4f}{r.median_ms:>12.4f}{r.speedup_vs_sdr:>12.1f}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _run_config(args)
    for name in args.methods:
        if name not in harness.METHOD_NAMES:
            raise UsageError(f"unknown method {name!r}")

    def methods_for(M, N):
        params = None
        if "nn" in args.methods:
            if not args.model_dir:
                raise UsageError("method 'nn' needs --model-dir")
            params = _load_model(Path(args.model_dir) / f"model_M{M}_N{N}.rism")
        return [harness.make_method(n, params, cfg.solver()) for n in args.methods]

    reference = args.reference or (cfg.reference if cfg.reference in args.methods else args.methods[0])
    cfg = replace(cfg, reference=reference)
    points = harness.sweep(args.axis, args.values, cfg.scenario(), methods_for, cfg.count,
                           cfg.resolved_seed(), reference, _workers(cfg))
    out_dir = Path(args.out_dir)
    csv_path = _write_text(out_dir / "sweep.csv", harness.sweep_csv(points, cfg.describe()))
    png = out_dir / f"sweep_{args.axis}.png"
    plotting.plot_sweep(points, png)
    _write_text(out_dir / f"sweep_{args.axis}.gp",
                plotting.gnuplot_sweep(csv_path.name, args.methods, args.axis, png.name))
    for p in points:
        _print_report(p.report)
    for name, ok in harness.monotone_methods(points).items():
        print(f"{name}: mean gain {'increasing' if ok else 'NOT increasing'} in {args.axis}")
    return 0


def cmd_coherence(args) -> int:
    tc = harness.coherence_time(args.v_max, args.fc)
    print(f"T_c = {tc * 1e3:.2f} ms")
    return 0


def cmd_ablation(args) -> int:
    cfg = _run_config(args)
    variants = [(bn, b) for b in args.batch_sizes for bn in (True, False)]
    runs = harness.bn_batch_ablation(args.M, args.N, args.count, args.epochs, variants,
                                     cfg.resolved_seed(), threads=cfg.threads)
    out_dir = Path(args.out_dir)
    lines = [f"# risbf ablation v1; {cfg.describe()} M={args.M} N={args.N} count={args.count}",
             "label,bn,batch_size,epoch,train_loss,val_loss"]
    for run in runs:
        for i, (t, v) in enumerate(zip(run.history.train_loss, run.history.val_loss)):
            lines.append(f"{run.label},{int(run.bn)},{run.batch_size},{i + 1},{t:.10g},{v:.10g}")
    _write_text(out_dir / "ablation.csv", "\n".join(lines) + "\n")
    plotting.plot_ablation(runs, out_dir / "ablation.png")
    for run in runs:
        print(f"{run.label:<20} val-loss improvement {100 * run.improvement:.2f}%")
    return 0


def cmd_sample_study(args) -> int:
    cfg = _run_config(args)
    rows = harness.sample_count_study(cfg.M, cfg.N, args.counts, args.test_count, cfg.training(),
                                      cfg.resolved_seed(), sdr_opts=cfg.solver())
    out_dir = Path(args.out_dir)
    lines = [f"# risbf sample-study v1; {cfg.describe()}", "train_count,mean_gain,ratio_pct"]
    lines += [f"{c},{g:.10g},{r:.4f}" for c, g, r in rows]
    _write_text(out_dir / "sample_study.csv", "\n".join(lines) + "\n")
    plotting.plot_sample_study(rows, out_dir / "sample_study.png")
    for c, g, r in rows:
        print(f"{c:>9} samples: {r:.2f}% of reference")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
    "coherence": cmd_coherence,
    "ablation": cmd_ablation,
    "sample-study": cmd_sample_study,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError, ValueError) as exc:
        print(f"risbf {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"risbf {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
