"""Experiment harness: multi-seed scoring, the batch-size stability sweep,
the similarity/component/depth ablations, and deterministic report files.

Every run is keyed by (canonical config, seed); arms that canonicalize to
the same config share a single run, which is also how the harness proves
that "remove the label-label loss" and "set its weight to zero" are the
same experiment.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import FeatureDataset, split_dataset
from .metrics import weighted_f1
from .trainer import RunConfig, config_to_flat, predict, train

DEFAULT_SWEEP_SIZES = (1, 2, 4, 8, 16, 32)
SWEEP_MODES = ("sslcl", "supcon", "ce-only")


def canonical_config_json(config: RunConfig) -> str:
    return json.dumps(config_to_flat(config), sort_keys=True)


def config_hash(config: RunConfig) -> str:
    return hashlib.sha256(canonical_config_json(config).encode()).hexdigest()[:12]


def train_and_score(config: RunConfig, dataset: FeatureDataset, seed: int) -> tuple[float, list[float]]:
    """Train on the fixed 70/15/15 split and score weighted F1 on test."""
    splits = split_dataset(dataset, config.split_seed)
    result = train(config, splits.train, seed=seed, eval_dataset=splits.val)
    preds = predict(result.store, dataset.header, splits.test.records, config)
    golds = [r.label for r in splits.test.records]
    return weighted_f1(preds, golds, dataset.header.num_labels)


def _run_tasks(configs: dict[str, RunConfig], dataset: FeatureDataset,
               seeds: Sequence[int], jobs: int) -> dict[tuple[str, int], tuple[float, list[float]]]:
    """Execute each unique (config, seed) once; results keyed for re-assembly."""
    tasks = [(key, seed) for key in sorted(configs) for seed in seeds]

    def run_one(task):
        key, seed = task
        return task, train_and_score(configs[key], dataset, seed)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            finished = list(pool.map(run_one, tasks))
    else:
        finished = [run_one(t) for t in tasks]
    return dict(finished)


@dataclass
class CellResult:
    """Aggregate of one experimental arm over all seeds."""

    name: str
    config_hash: str
    scores: list[float]
    per_class: list[list[float]]

    @property
    def mean(self) -> float:
        return float(np.mean(self.scores))

    @property
    def sd(self) -> float:
        return float(np.std(self.scores, ddof=1)) if len(self.scores) > 1 else 0.0

    @property
    def per_class_mean(self) -> list[float]:
        return [float(v) for v in np.mean(self.per_class, axis=0)]


@dataclass
class SweepResult:
    sizes: list[int]
    modes: list[str]
    seeds: list[int]
    cells: dict[tuple[str, int], CellResult]

    def mean(self, mode: str, size: int) -> float:
        return self.cells[(mode, size)].mean

    def stability(self, mode: str, small: int = 2, large: int = 32) -> float:
        """wF1(small batch) minus wF1(large batch); near zero means stable."""
        return self.mean(mode, small) - self.mean(mode, large)


def batch_size_sweep(config: RunConfig, dataset: FeatureDataset,
                     sizes: Sequence[int] = DEFAULT_SWEEP_SIZES,
                     modes: Sequence[str] = SWEEP_MODES,
                     seeds: Sequence[int] | None = None, jobs: int = 1,
                     equalize_steps: bool = False) -> SweepResult:
    """Train every (loss mode, batch size, seed) cell on the same split.

    equalize_steps=True holds the optimizer-step budget constant across
    batch sizes by deriving each cell's epoch count from the base config;
    without it, small-batch cells get far more updates per epoch, which
    confounds batch-size effects with optimization budget (there is no
    early stopping to absorb the difference).
    """
    seeds = list(config.seeds if seeds is None else seeds)
    n_train = int(round(0.7 * len(dataset)))
    base_steps = config.epochs * int(np.ceil(n_train / config.batch_size))
    arm_configs: dict[str, RunConfig] = {}
    arm_of: dict[tuple[str, int], str] = {}
    for mode in modes:
        for size in sizes:
            arm = replace(config, loss_mode=mode, batch_size=size)
            arm.hp = replace(config.hp)
            if equalize_steps:
                arm.epochs = max(1, round(base_steps / np.ceil(n_train / size)))
            key = canonical_config_json(arm)
            arm_configs[key] = arm
            arm_of[(mode, size)] = key
    results = _run_tasks(arm_configs, dataset, seeds, jobs)
    cells = {}
    for (mode, size), key in arm_of.items():
        scores = [results[(key, s)][0] for s in seeds]
        per_class = [results[(key, s)][1] for s in seeds]
        cells[(mode, size)] = CellResult(
            name=f"{mode}@bs{size}", config_hash=config_hash(arm_configs[key]),
            scores=scores, per_class=per_class)
    return SweepResult(sizes=list(sizes), modes=list(modes), seeds=seeds, cells=cells)


def sweep_to_csv(sweep: SweepResult, num_labels: int) -> str:
    cols = ["mode", "batch_size", "config_hash", "mean_wf1", "sd_wf1"]
    cols += [f"f1_class{k}" for k in range(num_labels)]
    lines = [",".join(cols)]
    for mode in sweep.modes:
        for size in sweep.sizes:
            cell = sweep.cells[(mode, size)]
            row = [mode, str(size), cell.config_hash, repr(cell.mean), repr(cell.sd)]
            row += [repr(v) for v in cell.per_class_mean]
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"


# --- ablations ---------------------------------------------------------------

def _component_flags(config: RunConfig, *, drop_augmentation=False, drop_negative=False,
                     drop_label_label=False) -> RunConfig:
    arm = replace(config)
    arm.hp = replace(config.hp)
    if drop_augmentation:
        arm.augmentation = False
    if drop_negative:
        arm.use_negative_loss = False
    if drop_label_label:
        arm.hp.label_loss_weight = 0.0
    return arm


def ablation_arms(config: RunConfig) -> dict[str, RunConfig]:
    """Named arm configs: similarity measures, component removals, LE depths."""
    full = replace(config)
    full.hp = replace(config.hp)
    arms = {"full": full}
    for measure in ("dot", "cosine"):
        arm = replace(full, measure=measure)
        arm.hp = replace(config.hp)
        arms[f"measure={measure}"] = arm
    arms["-augmentation"] = _component_flags(full, drop_augmentation=True)
    arms["-negative"] = _component_flags(full, drop_negative=True)
    arms["-label-label"] = _component_flags(full, drop_label_label=True)
    emb_only = replace(full, le_depth="embedding-only", label_embed_dim=config.feature_dim)
    emb_only.hp = replace(config.hp)
    arms["le=embedding-only"] = emb_only
    three = replace(full, le_depth="three-layer")
    three.hp = replace(config.hp)
    arms["le=three-layer"] = three
    return arms


def _assert_config_dedup(config: RunConfig) -> None:
    # Removing all three components at once must equal composing the flags.
    combined = _component_flags(config, drop_augmentation=True, drop_negative=True,
                                drop_label_label=True)
    stepwise = _component_flags(
        _component_flags(_component_flags(config, drop_augmentation=True),
                         drop_negative=True), drop_label_label=True)
    if canonical_config_json(combined) != canonical_config_json(stepwise):
        raise AssertionError("component-removal configs failed to canonicalize equally")


@dataclass
class AblationReport:
    arms: dict[str, CellResult]
    seeds: list[int]
    arm_configs: dict[str, dict]

    def delta_vs_full(self, name: str) -> float:
        return self.arms[name].mean - self.arms["full"].mean


def ablation_suite(config: RunConfig, dataset: FeatureDataset,
                   seeds: Sequence[int] | None = None, jobs: int = 1) -> AblationReport:
    _assert_config_dedup(config)
    seeds = list(config.seeds if seeds is None else seeds)
    arms = ablation_arms(config)
    unique = {canonical_config_json(c): c for c in arms.values()}
    results = _run_tasks(unique, dataset, seeds, jobs)
    report_arms = {}
    for name, arm in arms.items():
        key = canonical_config_json(arm)
        report_arms[name] = CellResult(
            name=name, config_hash=config_hash(arm),
            scores=[results[(key, s)][0] for s in seeds],
            per_class=[results[(key, s)][1] for s in seeds])
    return AblationReport(arms=report_arms, seeds=seeds,
                          arm_configs={name: config_to_flat(c) for name, c in arms.items()})


def ablation_to_csv(report: AblationReport, num_labels: int) -> str:
    cols = ["arm", "config_hash", "mean_wf1", "sd_wf1", "delta_vs_full"]
    cols += [f"f1_class{k}" for k in range(num_labels)]
    lines = [",".join(cols)]
    for name in report.arms:
        cell = report.arms[name]
        row = [name, cell.config_hash, repr(cell.mean), repr(cell.sd),
               repr(report.delta_vs_full(name))]
        row += [repr(v) for v in cell.per_class_mean]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def ablation_summary(report: AblationReport) -> str:
    """Human-readable digest with the soft ordering checks spelled out."""
    full = report.arms["full"].mean
    lines = [f"seeds: {report.seeds}", f"full configuration: mean w-F1 {full:.4f}", ""]
    for name, cell in report.arms.items():
        delta = report.delta_vs_full(name)
        lines.append(f"{name:<20} mean {cell.mean:.4f}  sd {cell.sd:.4f}  delta {delta:+.4f}")
    lines.append("")
    soft_checks = {
        "soft-hgr >= dot": full >= report.arms["measure=dot"].mean,
        "soft-hgr >= cosine": full >= report.arms["measure=cosine"].mean,
        "-augmentation <= full": report.arms["-augmentation"].mean <= full,
        "-negative <= full": report.arms["-negative"].mean <= full,
        "-label-label <= full": report.arms["-label-label"].mean <= full,
    }
    for label, ok in soft_checks.items():
        lines.append(f"soft check {label}: {'satisfied' if ok else 'VIOLATED (warning)'}")
    return "\n".join(lines) + "\n"


def sweep_summary(sweep: SweepResult) -> str:
    lines = ["batch-size sweep (mean w-F1 per cell)"]
    header = "mode      " + "".join(f"  bs={s:<5}" for s in sweep.sizes)
    lines.append(header)
    for mode in sweep.modes:
        row = f"{mode:<10}" + "".join(f"  {sweep.mean(mode, s):.4f} " for s in sweep.sizes)
        lines.append(row)
    if 2 in sweep.sizes and 32 in sweep.sizes:
        lines.append("")
        for mode in sweep.modes:
            lines.append(f"stability s({mode}) = wF1(bs=2) - wF1(bs=32) = "
                         f"{sweep.stability(mode):+.4f}")
    return "\n".join(lines) + "\n"


def sweep_svg(sweep: SweepResult) -> str:
    """Minimal hand-rolled line plot: mean w-F1 against batch size per mode."""
    width, height, margin = 640, 400, 50
    values = [sweep.mean(m, s) for m in sweep.modes for s in sweep.sizes]
    lo, hi = min(values), max(values)
    span = (hi - lo) or 1.0
    lo, hi = lo - 0.1 * span, hi + 0.1 * span
    colors = {"sslcl": "#1f77b4", "supcon": "#d62728", "ce-only": "#7f7f7f"}

    def x_at(i):
        return margin + i * (width - 2 * margin) / max(len(sweep.sizes) - 1, 1)

    def y_at(v):
        return height - margin - (v - lo) / (hi - lo) * (height - 2 * margin)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    for i, size in enumerate(sweep.sizes):
        parts.append(f'<text x="{x_at(i):.1f}" y="{height - margin + 20}" '
                     f'text-anchor="middle" font-size="12">{size}</text>')
    for j, mode in enumerate(sweep.modes):
        pts = " ".join(f"{x_at(i):.1f},{y_at(sweep.mean(mode, s)):.1f}"
                       for i, s in enumerate(sweep.sizes))
        color = colors.get(mode, "#2ca02c")
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{width - margin + 5}" y="{margin + 16 * j}" '
                     f'font-size="12" fill="{color}">{mode}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_sweep_report(out_dir, sweep: SweepResult, num_labels: int, *, svg: bool = False) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(sweep_to_csv(sweep, num_labels), encoding="utf-8")
    (out / "summary.txt").write_text(sweep_summary(sweep), encoding="utf-8")
    if svg:
        (out / "sweep.svg").write_text(sweep_svg(sweep), encoding="utf-8")


def write_ablation_report(out_dir, report: AblationReport, num_labels: int) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.csv").write_text(ablation_to_csv(report, num_labels), encoding="utf-8")
    (out / "summary.txt").write_text(ablation_summary(report), encoding="utf-8")
    (out / "arms.json").write_text(json.dumps(report.arm_configs, indent=2), encoding="utf-8")
