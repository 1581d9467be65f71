"""Experiment harness: single runs, seed batches, sweeps, ablations, plots.

Directory layout under the output root (the ``SAVGO_RUNS_DIR`` environment
variable, or ``./runs``):

    <root>/<experiment>/seed<k>/metrics.csv          incremental, flushed
    <root>/<experiment>/seed<k>/effective_config.json
    <root>/<experiment>/seed<k>/checkpoints/*.npz
    <root>/<experiment>/summary.json

metrics.csv carries exactly the columns in ``trainer.CSV_FIELDS``. The
effective config echoed next to each run reproduces that run byte for
byte (modulo wall_seconds).
"""

from __future__ import annotations

import csv
import dataclasses
import glob as globlib
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, save_config, to_dict
from .networks import save_mlp
from .svgplot import Series, render_chart
from .trainer import CSV_FIELDS, MetricsRow, train

RUNS_DIR_ENV = "SAVGO_RUNS_DIR"

VARIANTS = ("full", "no_adaptive_rho", "no_representation_loss",
            "no_adaptive_beta", "uniform_kernel")

SWEEP_AXES = {"lambda": "curvature", "K": "num_candidates",
              "variant": None, "seed": None}


@dataclass
class SweepSpec:
    """One swept axis and the values it takes."""

    axis: str
    values: list

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(
                f"unknown sweep axis {self.axis!r}; "
                f"known: {sorted(SWEEP_AXES)}")
        if not self.values:
            raise ConfigError("sweep needs at least one value")


@dataclass
class RunSummary:
    """What one seed's run produced, plus where it lives on disk."""

    run_dir: str
    env_id: str
    algorithm: str
    seed: int
    config_hash: str
    best_eval_return: float
    final_eval_return: float
    wall_seconds: float


def output_root(override=None) -> Path:
    if override is not None:
        return Path(override)
    return Path(os.environ.get(RUNS_DIR_ENV, "runs"))


def apply_variant(cfg: ExperimentConfig, variant: str) -> ExperimentConfig:
    """Fold a named ablation into a config."""
    if variant not in VARIANTS:
        raise ConfigError(
            f"unknown variant {variant!r}; known: {list(VARIANTS)}")
    if variant == "full":
        return dataclasses.replace(cfg)
    if variant == "no_adaptive_rho":
        return dataclasses.replace(cfg, fixed_rho=cfg.rho_max)
    if variant == "no_representation_loss":
        return dataclasses.replace(cfg, freeze_encoder=True)
    if variant == "no_adaptive_beta":
        return dataclasses.replace(cfg, fixed_beta=cfg.beta_init)
    return dataclasses.replace(cfg, uniform_kernel=True)


def config_digest(cfg: ExperimentConfig) -> str:
    """Short hash of the effective config with the seed masked out."""
    payload = to_dict(cfg.resolve())
    payload["seed"] = 0
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def run_single(cfg: ExperimentConfig, run_dir) -> RunSummary:
    """Train one seed, streaming metrics to disk as they arrive."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    effective = cfg.resolve()
    save_config(effective, run_dir / "effective_config.json")

    csv_path = run_dir / "metrics.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        fh.flush()

        def on_row(row: MetricsRow):
            writer.writerow([repr(getattr(row, f)) if f != "step"
                             else row.step for f in CSV_FIELDS])
            fh.flush()

        loop = train(effective, metrics_hook=on_row)

    ckpt_dir = run_dir / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    save_mlp(loop.policy.net, ckpt_dir / "policy.npz")
    save_mlp(loop.critics.q1, ckpt_dir / "critic1.npz")
    save_mlp(loop.critics.q2, ckpt_dir / "critic2.npz")
    if loop.encoder_pair is not None:
        save_mlp(loop.encoder_pair.online, ckpt_dir / "encoder.npz")

    rows = loop.metrics
    best = max((r.mean_eval_return for r in rows), default=float("nan"))
    final = rows[-1].mean_eval_return if rows else float("nan")
    wall = rows[-1].wall_seconds if rows else 0.0
    summary = RunSummary(str(run_dir), effective.env_id, effective.algorithm,
                         effective.seed, config_digest(effective), best,
                         final, wall)
    with open(run_dir / "summary.json", "w") as fh:
        json.dump(dataclasses.asdict(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def _run_single_in_dir(args) -> RunSummary:
    cfg_dict, run_dir = args
    from .config import from_dict
    return run_single(from_dict(cfg_dict), run_dir)


def _aggregate(summaries: list[RunSummary]) -> dict:
    best = np.array([s.best_eval_return for s in summaries])
    return {
        "seeds": [s.seed for s in summaries],
        "best_eval_return_mean": float(best.mean()),
        "best_eval_return_std": float(best.std()),
        "per_seed_best": [float(b) for b in best],
        "wall_seconds_total": float(sum(s.wall_seconds for s in summaries)),
    }


def run_experiment(cfg: ExperimentConfig, seed_list=None, jobs: int = 1,
                   out_root=None, name: str | None = None
                   ) -> tuple[list[RunSummary], dict]:
    """Run one config over one or more seeds and write an aggregate."""
    seeds = list(seed_list) if seed_list else [cfg.seed]
    exp_name = name or (f"{cfg.env_id}_{cfg.algorithm}_"
                        f"{config_digest(cfg)}")
    exp_dir = output_root(out_root) / exp_name
    exp_dir.mkdir(parents=True, exist_ok=True)

    tasks = []
    for seed in seeds:
        run_cfg = dataclasses.replace(cfg, seed=int(seed))
        tasks.append((to_dict(run_cfg), str(exp_dir / f"seed{seed}")))

    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(_run_single_in_dir, tasks))
    else:
        summaries = [_run_single_in_dir(t) for t in tasks]

    aggregate = _aggregate(summaries)
    with open(exp_dir / "summary.json", "w") as fh:
        json.dump(aggregate, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summaries, aggregate


def run_sweep(cfg: ExperimentConfig, spec: SweepSpec, seed_list=None,
              jobs: int = 1, out_root=None) -> dict:
    """Sweep one axis, one experiment directory per value."""
    results = {}
    for value in spec.values:
        if spec.axis == "variant":
            swept = apply_variant(cfg, str(value))
            label = str(value)
        elif spec.axis == "seed":
            swept = dataclasses.replace(cfg, seed=int(value))
            label = f"seed{value}"
        else:
            swept = dataclasses.replace(
                cfg, **{SWEEP_AXES[spec.axis]: value})
            label = f"{spec.axis}{value}"
        name = f"{swept.env_id}_{swept.algorithm}_{spec.axis}_{label}"
        seeds = None if spec.axis == "seed" else seed_list
        _, aggregate = run_experiment(swept, seed_list=seeds, jobs=jobs,
                                      out_root=out_root, name=name)
        results[str(value)] = aggregate

    sweep_dir = output_root(out_root)
    sweep_dir.mkdir(parents=True, exist_ok=True)
    path = sweep_dir / (f"sweep_{cfg.env_id}_{cfg.algorithm}_"
                        f"{spec.axis}.json")
    with open(path, "w") as fh:
        json.dump({"axis": spec.axis, "results": results}, fh, indent=2,
                  sort_keys=True)
        fh.write("\n")
    return results


def run_ablation(cfg: ExperimentConfig, variant: str, seed_list=None,
                 jobs: int = 1, out_root=None
                 ) -> tuple[list[RunSummary], dict]:
    """Run one named ablation variant of a base config."""
    ablated = apply_variant(cfg, variant)
    name = f"{ablated.env_id}_{ablated.algorithm}_ablate_{variant}"
    return run_experiment(ablated, seed_list=seed_list, jobs=jobs,
                          out_root=out_root, name=name)


# ------------------------------------------------------------------ plots --


def read_metrics_csv(path) -> dict[str, np.ndarray]:
    """Load one metrics file, insisting on the exact expected schema."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty metrics file") from None
        if tuple(header) != CSV_FIELDS:
            unexpected = [c for c in header if c not in CSV_FIELDS]
            missing = [c for c in CSV_FIELDS if c not in header]
            raise ValueError(
                f"{path}: metrics schema mismatch "
                f"(unexpected columns {unexpected}, missing {missing})")
        rows = [[float(cell) for cell in row] for row in reader if row]
    data = np.asarray(rows, dtype=np.float64).reshape(-1, len(CSV_FIELDS))
    return {name: data[:, i] for i, name in enumerate(CSV_FIELDS)}


def _run_label(csv_path: Path) -> tuple[str, str, int]:
    cfg_path = csv_path.parent / "effective_config.json"
    if cfg_path.exists():
        with open(cfg_path) as fh:
            cfg = json.load(fh)
        return cfg["env_id"], cfg["algorithm"], int(cfg["seed"])
    return csv_path.parent.parent.name, csv_path.parent.name, -1


def emit_plots(inputs, out_dir) -> list[str]:
    """Render one learning-curve SVG per environment from metrics files.

    ``inputs`` is a glob pattern or an iterable of patterns/paths. Curves
    average seeds per algorithm with a +-1 std band.
    """
    patterns = [inputs] if isinstance(inputs, (str, Path)) else list(inputs)
    paths = []
    for pattern in patterns:
        expanded = sorted(globlib.glob(str(pattern), recursive=True))
        paths.extend(expanded if expanded else
                     ([str(pattern)] if Path(pattern).exists() else []))
    if not paths:
        raise ValueError(f"no metrics files matched {patterns!r}")

    grouped: dict[str, dict[str, list[dict]]] = {}
    for p in paths:
        csv_path = Path(p)
        columns = read_metrics_csv(csv_path)
        env_id, algorithm, _seed = _run_label(csv_path)
        grouped.setdefault(env_id, {}).setdefault(algorithm,
                                                  []).append(columns)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for env_id, by_algo in sorted(grouped.items()):
        series = []
        for algorithm, runs in sorted(by_algo.items()):
            n = min(r["step"].size for r in runs)
            steps = runs[0]["step"][:n]
            stack = np.stack([r["mean_eval_return"][:n] for r in runs])
            mean = stack.mean(axis=0)
            std = stack.std(axis=0)
            series.append(Series(f"{algorithm} ({stack.shape[0]} seeds)",
                                 steps, mean, mean - std, mean + std))
        path = out_dir / f"{env_id}.svg"
        render_chart(series, f"{env_id}: evaluation return", "environment steps",
                     "mean evaluation return", path)
        written.append(str(path))
    return written
