"""Command-line driver for the toy, sticky-chain and gradient-check experiments.

Examples::

    attnlab --experiment toy --steps 100
    attnlab --experiment sticky --mode both --steps 1000 --seeds 0,1,2
    attnlab --experiment gradcheck
    attnlab --config runs/sticky/config.txt

Settings come from the dataclass defaults, then an optional ``key = value``
config file, then command-line flags (flags win).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from attnlab import svg
from attnlab.diagnostics import (
    diagnostics,
    kl_mean,
    pca_trajectories,
    predictive_entropy,
    shared_frame_trajectories,
)
from attnlab.gradcheck import TOLERANCE, suite
from attnlab.gradients import backward
from attnlab.tasks import (
    INIT_SCALE,
    TOY_INIT_SCALE,
    StickyChainSpec,
    build_kernel,
    generate_sticky,
    generate_toy,
    kernel_entropy,
    sticky_params,
)
from attnlab.trainers import DivergenceError, RunLog, TrainConfig, train

log = logging.getLogger("attnlab")

EXIT_OK, EXIT_DIVERGED, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

METRIC_COLUMNS = ["step", "loss", "accuracy", "predictive_entropy", "attention_entropy_mean"]
TRAJECTORY_COLUMNS = ["position", "start_pc1", "start_pc2", "end_pc1", "end_pc2", "length"]
HEATMAP_MAX = 64

EXPERIMENT_DEFAULTS = {
    "toy": {"steps": 100, "eta": 0.05, "snapshot_every": 10, "pca_sample": 5, "init_scale": TOY_INIT_SCALE},
    # the loss is summed over T = 2000 positions, so this is 0.01 per position
    "sticky": {"steps": 1000, "eta": 5e-6, "snapshot_every": 100, "pca_sample": 200, "init_scale": INIT_SCALE},
    "gradcheck": {"steps": 1, "eta": 0.0, "snapshot_every": 1, "pca_sample": 1, "init_scale": 0.5},
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str = "sticky"
    mode: str = "both"
    seeds: list[int] = field(default_factory=lambda: [0])
    steps: int | None = None
    eta: float | None = None
    eta_em_routing: float | None = None
    snapshot_every: int | None = None
    pca_sample: int | None = None
    output_dir: str = "runs"
    init_scale: float | None = None
    # sticky-chain task
    vocab: int = 8
    stay_prob: float = 0.3
    T: int = 2000
    d_x: int = 20
    d_k: int = 10
    d_v: int = 15
    embed_scale: float = 2.0
    noise_std: float = 1.0

    def resolved(self) -> "ExperimentConfig":
        """Copy with experiment-specific defaults filled in and values validated."""
        if self.experiment not in EXPERIMENT_DEFAULTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.mode not in ("sgd", "em", "both"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        out = ExperimentConfig(**asdict(self))
        for key, value in EXPERIMENT_DEFAULTS[self.experiment].items():
            if getattr(out, key) is None:
                setattr(out, key, value)
        if out.eta_em_routing is None and out.experiment != "gradcheck":
            out.eta_em_routing = out.eta / 10.0
        if out.experiment != "gradcheck":
            try:
                TrainConfig(steps=out.steps, eta=out.eta, eta_em_routing=out.eta_em_routing,
                            snapshot_every=out.snapshot_every)
                if out.experiment == "sticky":
                    out.sticky_spec(0)
            except ValueError as err:
                raise ConfigError(str(err)) from None
        return out

    def sticky_spec(self, seed: int) -> StickyChainSpec:
        return StickyChainSpec(
            vocab=self.vocab, stay_prob=self.stay_prob, T=self.T, d_x=self.d_x, d_k=self.d_k, d_v=self.d_v,
            embed_scale=self.embed_scale, noise_std=self.noise_std, seed=seed,
        )

    def train_config(self, mode: str, seed: int) -> TrainConfig:
        return TrainConfig(steps=self.steps, eta=self.eta, eta_em_routing=self.eta_em_routing, mode=mode,
                           seed=seed, snapshot_every=self.snapshot_every)

    def modes(self) -> list[str]:
        return ["em", "sgd"] if self.mode == "both" else [self.mode]

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name} = {value!r}" if isinstance(value, float) else f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


_FIELD_TYPES = {
    "experiment": str, "mode": str, "output_dir": str,
    "steps": int, "snapshot_every": int, "pca_sample": int, "vocab": int, "T": int,
    "d_x": int, "d_k": int, "d_v": int,
    "eta": float, "eta_em_routing": float, "init_scale": float, "stay_prob": float,
    "embed_scale": float, "noise_std": float,
}


def _coerce(key: str, raw: str):
    if key == "seeds":
        try:
            return [int(s) for s in str(raw).split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"seeds must be a comma-separated list of integers, got {raw!r}") from None
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        return _FIELD_TYPES[key](raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are ignored."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        values[key] = _coerce(key, raw)
    return values


def load_config_text(text: str) -> dict:
    """Accept either a ``key = value`` file or a summary.json with an embedded config."""
    if text.lstrip().startswith("{"):
        try:
            embedded = json.loads(text)["config"]
        except (ValueError, KeyError, TypeError):
            raise ConfigError("JSON config must be a summary.json with a 'config' object") from None
        unknown = set(embedded) - {f.name for f in fields(ExperimentConfig)}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return {k: v for k, v in embedded.items() if v is not None}
    return parse_config_text(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="attnlab", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", type=Path, help="key = value config file; flags override it")
    p.add_argument("--experiment", choices=sorted(EXPERIMENT_DEFAULTS))
    p.add_argument("--mode", choices=["sgd", "em", "both"])
    p.add_argument("--steps", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--eta-em-routing", dest="eta_em_routing", type=float)
    p.add_argument("--seeds", help="comma-separated list, e.g. 0,1,2")
    p.add_argument("--snapshot-every", dest="snapshot_every", type=int)
    p.add_argument("--out", dest="output_dir")
    p.add_argument("--embed-scale", dest="embed_scale", type=float)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(argv=None) -> tuple[ExperimentConfig, bool]:
    args = build_parser().parse_args(argv)
    values = {}
    if args.config is not None:
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as err:
            raise ConfigError(f"cannot read config file: {err}") from None
        values.update(load_config_text(text))
    for key in ("experiment", "mode", "steps", "eta", "eta_em_routing", "snapshot_every", "output_dir", "embed_scale"):
        value = getattr(args, key)
        if value is not None:
            values[key] = value
    if args.seeds is not None:
        values["seeds"] = _coerce("seeds", args.seeds)
    return ExperimentConfig(**values).resolved(), args.verbose


# -- writers -------------------------------------------------------------

def _fmt(x) -> str:
    return f"{x:.17g}" if isinstance(x, float) else str(x)


def write_metrics_csv(run: RunLog, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in run.records:
            w.writerow([_fmt(getattr(r, c)) for c in METRIC_COLUMNS])


def write_trajectories_csv(proj, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for (j, a, b), length in zip(proj.arrows(), proj.lengths):
            w.writerow([j, _fmt(float(a[0])), _fmt(float(a[1])), _fmt(float(b[0])), _fmt(float(b[1])), _fmt(float(length))])


def _json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def final_metrics(run: RunLog, task) -> dict:
    tr = run.final_trace
    report = diagnostics(tr, backward(run.final_params, task, tr, check_dual=False), task.y)
    return {
        "final_loss": report.mean_loss,
        "final_accuracy": report.accuracy,
        "final_entropy": report.mean_predictive_entropy,
        "final_attention_entropy": float(report.attention_entropy.mean()),
        "initial_loss": run.records[0].loss,
        "initial_attention_entropy": run.records[0].attention_entropy_mean,
        "min_column_usage": float(report.column_usage.min()),
        "mean_value_norm": float(report.value_norms.mean()),
    }


def write_run(run: RunLog, task, out: Path, label: str, config: ExperimentConfig, extra: dict) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(run, out / "metrics.csv")
    n = min(HEATMAP_MAX, task.T)
    svg.emit_svg_heatmap(run.initial_trace.Alpha[:n, :n], out / "heatmap_initial.svg",
                         title=f"{label}: initial attention (first {n} positions)", vmin=0.0, vmax=1.0)
    svg.emit_svg_heatmap(run.final_trace.Alpha[:n, :n], out / "heatmap_final.svg",
                         title=f"{label}: final attention (first {n} positions)", vmin=0.0, vmax=1.0)
    proj = pca_trajectories(run.snapshots[0][1], run.snapshots[-1][1], min(config.pca_sample, task.T))
    write_trajectories_csv(proj, out / "trajectories.csv")
    svg.emit_svg_arrows({label: proj}, out / "pca.svg", title=f"{label}: value trajectories (PCA)")
    svg.emit_svg_curves({label: run.losses()}, out / "loss.svg", title=f"{label}: mean loss", ylabel="nats")
    metrics = final_metrics(run, task)
    metrics["mean_trajectory_length"] = float(proj.lengths.mean())
    summary = {"mode": label, "config": asdict(config), **extra, **metrics}
    _json(out / "summary.json", summary)
    return summary


def compare_runs(runs: dict[str, RunLog], task, out: Path, config: ExperimentConfig, extra: dict) -> dict:
    """Paired EM/SGD summary: Table-style finals, KL(EM||SGD), shared-frame trajectories."""
    em, sgd = runs["em"], runs["sgd"]
    projs = shared_frame_trajectories(em.snapshots[0][1], {m: r.snapshots[-1][1] for m, r in runs.items()},
                                      min(config.pca_sample, task.T))
    svg.emit_svg_arrows(projs, out / "pca.svg", title="value trajectories, shared PCA frame (blue EM, red SGD)")
    for key, title in [("loss", "mean loss"), ("accuracy", "accuracy"), ("predictive_entropy", "predictive entropy")]:
        series = {m: [getattr(r, key) for r in run.records] for m, run in runs.items()}
        svg.emit_svg_curves(series, out / f"{key}.svg", title=title,
                            hline=extra.get("theoretical_min_entropy") if key != "accuracy" else None)
    em_l, sgd_l = em.losses(), sgd.losses()
    hit = np.nonzero(em_l <= sgd_l[-1])[0]
    summary = {
        "config": asdict(config),
        **extra,
        "final_loss_em": em.final_trace.mean_loss,
        "final_loss_sgd": sgd.final_trace.mean_loss,
        "final_acc_em": float(np.mean(np.argmax(em.final_trace.Probs, axis=0) == task.y)),
        "final_acc_sgd": float(np.mean(np.argmax(sgd.final_trace.Probs, axis=0) == task.y)),
        "final_entropy_em": _pred_entropy(em),
        "final_entropy_sgd": _pred_entropy(sgd),
        "final_kl": kl_mean(em.final_trace.Probs, sgd.final_trace.Probs),
        "em_steps_to_sgd_final_loss": int(hit[0]) if hit.size else None,
        "trajectory_length_em": float(np.median(projs["em"].lengths)),
        "trajectory_length_sgd": float(np.median(projs["sgd"].lengths)),
    }
    _json(out / "summary.json", summary)
    return summary


def _pred_entropy(run: RunLog) -> float:
    return predictive_entropy(run.final_trace.Probs)


# -- experiments ---------------------------------------------------------

def _make_task(config: ExperimentConfig, seed: int):
    if config.experiment == "toy":
        task, params = generate_toy(seed, scale=config.init_scale)
        return task, params, {}
    spec = config.sticky_spec(seed)
    task, _ = generate_sticky(spec)
    params = sticky_params(spec, scale=config.init_scale)
    return task, params, {"theoretical_min_entropy": kernel_entropy(build_kernel(spec)), "task": spec.to_dict()}


def run_seed(config: ExperimentConfig, seed: int, out: Path) -> dict:
    task, params0, extra = _make_task(config, seed)
    runs = {}
    summaries = {}
    for mode in config.modes():
        log.info("seed %d: training %s for %d steps", seed, mode, config.steps)
        runs[mode] = train(params0, task, config.train_config(mode, seed))
        sub = out / mode if len(config.modes()) > 1 else out
        summaries[mode] = write_run(runs[mode], task, sub, mode, config, extra)
    if len(runs) == 2:
        summaries["paired"] = compare_runs(runs, task, out, config, extra)
    return summaries


def run_gradcheck(config: ExperimentConfig, out: Path) -> int:
    results = suite()
    worst = max(r.max_error for r in results)
    for r in results:
        print(f"{r.label:24s} max relative error {r.max_error:.3e}")
    print(f"max relative error over {len(results)} instances: {worst:.3e} (tolerance {TOLERANCE:g})")
    out.mkdir(parents=True, exist_ok=True)
    _json(out / "gradcheck.json", {"max_relative_error": worst, "tolerance": TOLERANCE,
                                   "instances": {r.label: r.errors for r in results}})
    return EXIT_OK if worst < TOLERANCE else EXIT_DIVERGED


def run_experiment(config: ExperimentConfig) -> int:
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(config.to_text(), encoding="utf-8")
        if config.experiment == "gradcheck":
            return run_gradcheck(config, out)
        per_seed = {}
        for seed in config.seeds:
            per_seed[seed] = run_seed(config, seed, out / f"seed_{seed}")
    except DivergenceError as err:
        print(f"error: training diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as err:
        print(f"error: I/O failure: {err}", file=sys.stderr)
        return EXIT_IO
    if config.mode == "both":
        keys = ["final_loss_em", "final_loss_sgd", "final_entropy_em", "final_entropy_sgd", "final_kl",
                "trajectory_length_em", "trajectory_length_sgd"]
        agg = {k: float(np.median([s["paired"][k] for s in per_seed.values()])) for k in keys}
        first = next(iter(per_seed.values()))["paired"]
        if "theoretical_min_entropy" in first:
            agg["theoretical_min_entropy"] = first["theoretical_min_entropy"]
        hits = [s["paired"]["em_steps_to_sgd_final_loss"] for s in per_seed.values()]
        agg["em_steps_to_sgd_final_loss"] = hits
        try:
            _json(out / "summary.json", {"config": asdict(config), "seeds": list(config.seeds),
                                         "aggregate": "median over seeds", **agg})
        except OSError as err:
            print(f"error: I/O failure: {err}", file=sys.stderr)
            return EXIT_IO
        for k, v in agg.items():
            print(f"{k:32s} {v}" if isinstance(v, list) else f"{k:32s} {v:.4f}")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        config, verbose = config_from_args(argv)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return run_experiment(config)


if __name__ == "__main__":
    sys.exit(main())
