"""Method comparisons over test ensembles, sweeps, runtime benchmarks and training studies."""

from __future__ import annotations

import csv
import io
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .baselines import closed_form_single_antenna, random_phase
from .channel import ChannelRealization, Dataset, ScenarioConfig, generate_dataset, sample_rng
from .nn import (ArchitectureSpec, NetworkParams, TrainConfig, TrainHistory, init_network,
                 predict, predict_dataset, train)
from .objective import channel_gain
from .sdr import SolverOptions, solve_sdr

SPEED_OF_LIGHT = 2.99792458e8

REPORT_VERSION = 1
METHOD_NAMES = ("closed-form", "random", "sdr", "nn")
# benchmark-only: the network applied to all timed instances in one call
BATCHED_NN = "nn-batch"

# salt mixed into the per-instance stream so methods sharing an instance get different draws
_METHOD_SALT = {"closed-form": 1, "random": 2, "sdr": 3, "nn": 4}


class ClosedForm:
    name = "closed-form"

    def check(self, M: int, N: int) -> None:
        if M != 1:
            raise ValueError(f"closed-form method requires M = 1, got M = {M}")

    def __call__(self, ch: ChannelRealization, rng: np.random.Generator):
        return closed_form_single_antenna(ch), True


class RandomPhase:
    name = "random"

    def check(self, M: int, N: int) -> None:
        pass

    def __call__(self, ch, rng):
        return random_phase(rng, ch.N), True


@dataclass
class Sdr:
    opts: SolverOptions = field(default_factory=SolverOptions)
    name: str = "sdr"

    def check(self, M: int, N: int) -> None:
        pass

    def __call__(self, ch, rng):
        sol = solve_sdr(ch, self.opts, rng)
        return sol.theta, sol.converged


@dataclass
class Neural:
    params: NetworkParams
    name: str = "nn"

    def check(self, M: int, N: int) -> None:
        if (M, N) != (self.params.spec.M, self.params.spec.N):
            raise ValueError(
                f"model is for (M, N) = {(self.params.spec.M, self.params.spec.N)}, data is {(M, N)}"
            )

    def __call__(self, ch, rng):
        return predict(self.params, ch), True


def make_method(name: str, params: Optional[NetworkParams] = None,
                sdr_opts: Optional[SolverOptions] = None):
    if name == "closed-form":
        return ClosedForm()
    if name == "random":
        return RandomPhase()
    if name == "sdr":
        return Sdr(sdr_opts or SolverOptions())
    if name == "nn":
        if params is None:
            raise ValueError("method 'nn' needs a model")
        return Neural(params)
    raise ValueError(f"unknown method {name!r}; choose from {', '.join(METHOD_NAMES)}")


@dataclass
class MethodStats:
    method: str
    mean_gain: float
    std_gain: float
    mean_rate: float
    ratio_pct: float
    rate_at_mean_snr: float
    rate_ratio_pct: float
    mean_ms: float
    median_ms: float
    nonconverged: int


@dataclass
class ExperimentReport:
    M: int
    N: int
    count: int
    seed: int
    reference: str
    methods: list
    gains: dict = field(default_factory=dict, repr=False)

    def __getitem__(self, name: str) -> MethodStats:
        for m in self.methods:
            if m.method == name:
                return m
        raise KeyError(name)

    def ratio(self, name: str) -> float:
        """Mean gain of ``name`` as a percentage of the reference's mean gain."""
        return self[name].ratio_pct

    def rate_ratio(self, name: str) -> float:
        """log2(1 + snr * mean gain) of ``name`` as a percentage of the reference's."""
        return self[name].rate_ratio_pct


def _method_rng(seed: int, index: int, method: str) -> np.random.Generator:
    return sample_rng(seed ^ (_METHOD_SALT.get(method, 7) << 56), index)


def _run_chunk(method, ds: Dataset, indices: Sequence[int], seed: int):
    gains, times, ok = [], [], []
    for i in indices:
        ch = ds[i]
        rng = _method_rng(seed, i, method.name)
        t0 = time.perf_counter()
        theta, converged = method(ch, rng)
        times.append(time.perf_counter() - t0)
        gains.append(channel_gain(ch, theta))
        ok.append(converged)
    return gains, times, ok


def run_method(method, ds: Dataset, seed: int = 0, workers: int = 1):
    """Per-instance gains, wall-clock seconds and convergence flags for one method."""
    method.check(ds.M, ds.N)
    K = len(ds)
    if workers <= 1 or K < 2 * workers:
        return [np.asarray(a) for a in _run_chunk(method, ds, range(K), seed)]
    bounds = np.linspace(0, K, workers + 1).astype(int)
    chunks = [range(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, [method] * workers, [ds] * workers, chunks, [seed] * workers))
    return [np.concatenate([np.asarray(p[j]) for p in parts]) for j in range(3)]


def evaluate_methods(methods, test_set: Dataset, reference: str, seed: int = 0,
                     workers: int = 1) -> ExperimentReport:
    """Mean channel gain per method and its percentage of the reference method's mean."""
    names = [m.name for m in methods]
    if reference not in names:
        raise ValueError(f"reference method {reference!r} is not among {names}")
    for m in methods:
        m.check(test_set.M, test_set.N)
    snr = test_set.config.snr_linear
    results = {m.name: run_method(m, test_set, seed, workers) for m in methods}
    ref_mean = float(np.mean(results[reference][0]))
    ref_rate = math.log2(1.0 + snr * ref_mean)
    stats = []
    for name in names:
        gains, times, ok = results[name]
        mean = float(np.mean(gains))
        stats.append(MethodStats(
            method=name,
            mean_gain=mean,
            std_gain=float(np.std(gains)),
            mean_rate=float(np.mean(np.log2(1.0 + snr * gains))),
            ratio_pct=100.0 if name == reference else 100.0 * mean / ref_mean,
            rate_at_mean_snr=math.log2(1.0 + snr * mean),
            rate_ratio_pct=100.0 if name == reference else 100.0 * math.log2(1.0 + snr * mean) / ref_rate,
            mean_ms=float(np.mean(times)) * 1e3,
            median_ms=float(np.median(times)) * 1e3,
            nonconverged=int(np.size(ok) - np.count_nonzero(ok)),
        ))
    return ExperimentReport(test_set.M, test_set.N, len(test_set), seed, reference, stats,
                            {n: results[n][0] for n in names})


@dataclass
class SweepPoint:
    axis: str
    value: int
    report: ExperimentReport


def sweep(axis: str, values: Sequence[int], base: ScenarioConfig,
          methods_for: Callable[[int, int], list], count: int, seed: int,
          reference: Optional[str] = None, workers: int = 1) -> list[SweepPoint]:
    """One report per axis value; ``methods_for(M, N)`` builds the method list."""
    if axis not in ("M", "N"):
        raise ValueError("axis must be 'M' or 'N'")
    if not values:
        raise ValueError("sweep axis is empty")
    points = []
    for v in values:
        M, N = (v, base.N) if axis == "M" else (base.M, v)
        cfg = base.with_size(M, N)
        methods = methods_for(M, N)
        ref = reference if reference is not None else methods[0].name
        if ref not in [m.name for m in methods]:
            ref = methods[0].name
        ds = generate_dataset(cfg, count, seed)
        points.append(SweepPoint(axis, v, evaluate_methods(methods, ds, ref, seed, workers)))
    return points


def monotone_methods(points: Sequence[SweepPoint]) -> dict[str, bool]:
    """Whether each method's mean gain strictly increases along the sweep axis."""
    out = {}
    names = {m.method for p in points for m in p.report.methods}
    for name in sorted(names):
        series = [p.report[name].mean_gain for p in points
                  if any(m.method == name for m in p.report.methods)]
        out[name] = all(b > a for a, b in zip(series, series[1:]))
    return out


def coherence_time(v_max: float, f_c: float) -> float:
    """Coherence time in seconds, T_c = 9 / (16 pi f_d) with f_d = v f_c / c."""
    if v_max <= 0 or f_c <= 0:
        raise ValueError("speed and carrier frequency must be positive")
    f_d = v_max * f_c / SPEED_OF_LIGHT
    return 9.0 / (16.0 * math.pi * f_d)


@dataclass
class TimingRow:
    M: int
    N: int
    method: str
    repetitions: int
    mean_ms: float
    median_ms: float
    min_ms: float
    speedup_vs_sdr: float = float("nan")


def benchmark_runtime(method_names: Sequence[str], configs: Sequence[tuple[int, int]],
                      repetitions: int = 20, warmup: int = 3, seed: int = 0,
                      models: Optional[dict] = None,
                      sdr_opts: Optional[SolverOptions] = None) -> list[TimingRow]:
    """Mean wall-clock per instance for each method and (M, N).

    Instance generation and model construction happen before the timed loop.
    Without a trained model for a configuration the network is freshly
    initialized; inference cost does not depend on the weight values.

    ``"nn"`` times one instance per call (latency).  ``"nn-batch"`` times one
    call over all ``repetitions`` instances, repeated ``repetitions`` times,
    and reports the per-instance share (throughput).
    """
    if repetitions < 10:
        raise ValueError("need at least 10 repetitions")
    if not configs:
        raise ValueError("no configurations to benchmark")
    models = models or {}
    rows = []
    for M, N in configs:
        ds = generate_dataset(ScenarioConfig(M=M, N=N), repetitions + warmup, seed)
        config_rows = []
        for name in method_names:
            params = models.get((M, N))
            if name in ("nn", BATCHED_NN) and params is None:
                params = init_network(ArchitectureSpec(M, N), np.random.default_rng(seed))
            if name == BATCHED_NN:
                config_rows.append(_time_batched(params, ds, warmup, repetitions))
                continue
            method = make_method(name, params, sdr_opts)
            method.check(M, N)
            samples = [ds[i] for i in range(len(ds))]
            for i in range(warmup):
                method(samples[i], _method_rng(seed, i, name))
            times = []
            for i in range(warmup, warmup + repetitions):
                rng = _method_rng(seed, i, name)
                t0 = time.perf_counter()
                method(samples[i], rng)
                times.append(time.perf_counter() - t0)
            ms = [t * 1e3 for t in times]
            config_rows.append(TimingRow(M, N, name, repetitions, statistics.fmean(ms),
                                         statistics.median(ms), min(ms)))
        sdr = [r for r in config_rows if r.method == "sdr"]
        if sdr:
            for r in config_rows:
                r.speedup_vs_sdr = sdr[0].mean_ms / r.mean_ms
        rows += config_rows
    return rows


def loss_improvement(history: TrainHistory, epochs: int = 30) -> float:
    """Relative decrease of validation loss from epoch 1 to epoch ``epochs``."""
    first = history.val_loss[0]
    last = history.val_loss[min(epochs, len(history)) - 1]
    return (first - last) / abs(first)


@dataclass
class AblationRun:
    label: str
    bn: bool
    batch_size: int
    history: TrainHistory

    @property
    def improvement(self) -> float:
        return loss_improvement(self.history, len(self.history))


def bn_batch_ablation(M: int = 8, N: int = 64, count: int = 20000, epochs: int = 30,
                      variants: Iterable[tuple[bool, int]] = ((True, 5000), (False, 5000)),
                      seed: int = 0, val_fraction: float = 0.2,
                      threads: Optional[int] = None) -> list[AblationRun]:
    """Train with and without BatchNorm and at several batch sizes for a fixed epoch budget."""
    cfg = ScenarioConfig(M=M, N=N)
    n_val = max(2, int(round(count * val_fraction)))
    tr = generate_dataset(cfg, count - n_val, seed)
    va = generate_dataset(cfg, n_val, seed + 1)
    runs = []
    for bn, batch in variants:
        tc = TrainConfig(batch_size=batch, max_epochs=epochs, seed=seed, threads=threads,
                         early_stop_patience=epochs + 1)
        _, hist = train(tr, va, ArchitectureSpec(M, N, bn_after_fc=bn), tc)
        runs.append(AblationRun(f"{'BN' if bn else 'no BN'}, batch {batch}", bn, batch, hist))
    return runs


def sample_count_study(M: int, N: int, counts: Sequence[int], test_count: int = 2000,
                       config: TrainConfig = TrainConfig(), seed: int = 0,
                       reference: str = "sdr", sdr_opts: Optional[SolverOptions] = None):
    """Test performance of the network (percent of the reference) versus training-set size."""
    cfg = ScenarioConfig(M=M, N=N)
    te = generate_dataset(cfg, test_count, seed + 2)
    ref = make_method(reference, sdr_opts=sdr_opts)
    ref_gain = float(np.mean(run_method(ref, te, seed)[0]))
    out = []
    for count in counts:
        tr = generate_dataset(cfg, count, seed)
        va = generate_dataset(cfg, max(2, count // 4), seed + 1)
        params, _ = train(tr, va, ArchitectureSpec(M, N), config)
        gain = float(np.mean(run_method(Neural(params), te, seed)[0]))
        out.append((count, gain, 100.0 * gain / ref_gain))
    return out


def _time_batched(params: NetworkParams, ds: Dataset, warmup: int, repetitions: int) -> TimingRow:
    timed = ds.subset(np.arange(warmup, warmup + repetitions))
    predict_dataset(params, ds.subset(np.arange(warmup)) if warmup else timed)
    ms = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        predict_dataset(params, timed)
        ms.append((time.perf_counter() - t0) * 1e3 / repetitions)
    return TimingRow(ds.M, ds.N, BATCHED_NN, repetitions, statistics.fmean(ms),
                     statistics.median(ms), min(ms))


# --- delimited output -----------------------------------------------------------------

REPORT_COLUMNS = ("M", "N", "count", "seed", "reference", "method", "mean_gain", "std_gain",
                  "mean_rate", "ratio_pct", "rate_at_mean_snr", "rate_ratio_pct",
                  "mean_ms", "median_ms", "nonconverged")
SWEEP_COLUMNS = ("axis", "value") + REPORT_COLUMNS
TIMING_COLUMNS = ("M", "N", "method", "repetitions", "mean_ms", "median_ms", "min_ms",
                  "speedup_vs_sdr", "coherence_ms", "within_coherence")
HISTORY_COLUMNS = ("epoch", "train_loss", "val_loss", "lr")


def _header(kind: str, provenance: str) -> str:
    return f"# risbf {kind} v{REPORT_VERSION}; {provenance}\n"


def _report_rows(report: ExperimentReport):
    for m in report.methods:
        yield {"M": report.M, "N": report.N, "count": report.count, "seed": report.seed,
               "reference": report.reference, **asdict(m)}


def _write(columns, rows, kind: str, provenance: str) -> str:
    buf = io.StringIO()
    buf.write(_header(kind, provenance))
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for row in rows:
        w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def report_csv(report: ExperimentReport, provenance: str = "") -> str:
    return _write(REPORT_COLUMNS, _report_rows(report), "report", provenance)


def sweep_csv(points: Sequence[SweepPoint], provenance: str = "") -> str:
    rows = ({"axis": p.axis, "value": p.value, **row} for p in points for row in _report_rows(p.report))
    return _write(SWEEP_COLUMNS, rows, "sweep", provenance)


def timing_csv(rows: Sequence[TimingRow], provenance: str = "", coherence_s: Optional[float] = None) -> str:
    tc_ms = coherence_s * 1e3 if coherence_s else float("nan")
    out = []
    for r in rows:
        d = asdict(r)
        d["coherence_ms"] = tc_ms
        d["within_coherence"] = int(r.mean_ms < tc_ms) if coherence_s else ""
        out.append(d)
    return _write(TIMING_COLUMNS, out, "bench", provenance)


def history_csv(history: TrainHistory, provenance: str = "") -> str:
    rows = ({"epoch": i + 1, "train_loss": t, "val_loss": v, "lr": lr}
            for i, (t, v, lr) in enumerate(zip(history.train_loss, history.val_loss, history.lr)))
    return _write(HISTORY_COLUMNS, rows, "history", provenance)


def read_csv(text: str) -> list[dict]:
    """Parse a CSV written by this module, skipping the comment header."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))
