"""Joint optimization of the encoder, classifier head and label network.

One Adam instance owns the encoder and head, a second one owns the label
network at its own (much smaller) learning rate; they never share state.
Every run is a pure function of (config, dataset, seed): identical inputs
reproduce byte-identical metrics logs and checkpoints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .data import DatasetHeader, FeatureBatch, FeatureDataset, batch_iter, records_to_batch
from .encoder import FULL_MASK, MODALITY_SETTINGS, augmentation_views, classify, encode, init_encoder_params
from .label_embedding import DEPTHS, embed_labels, init_label_params
from .losses import (FloorCount, HyperParams, LossBreakdown, cross_entropy,
                     sslcl_loss, supcon_loss)
from .metrics import weighted_f1
from .similarity import MEASURES, build_context, sim_matrix

LOSS_MODES = ("sslcl", "supcon", "ce-only")
PREDICTORS = ("head", "similarity")


class ConfigError(ValueError):
    """A config key or value failed validation."""


class NonFiniteLossError(RuntimeError):
    """Training aborted because a loss term stopped being finite."""


@dataclass
class RunConfig:
    hp: HyperParams = field(default_factory=HyperParams)
    measure: str = "soft-hgr"
    le_depth: str = "two-layer"
    loss_mode: str = "sslcl"
    modality_setting: str = "trimodal"
    batch_size: int = 8
    epochs: int = 6
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    encoder_lr: float = 1e-3
    label_net_lr: float = 1e-5
    augmentation: bool = True
    use_negative_loss: bool = True
    consistent_denominator: bool = False
    hidden_dim: int = 16
    feature_dim: int = 8
    label_embed_dim: int | None = None
    le_hidden_dim: int | None = None
    predictor: str = "head"
    split_seed: int = 20240
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def resolved_embed_dim(self) -> int:
        # Default table width is twice the feature dimension.
        return 2 * self.feature_dim if self.label_embed_dim is None else self.label_embed_dim

    def validate(self) -> None:
        self.hp.validate()
        if self.measure not in MEASURES:
            raise ConfigError(f"measure must be one of {MEASURES}, got {self.measure!r}")
        if self.le_depth not in DEPTHS:
            raise ConfigError(f"le_depth must be one of {DEPTHS}, got {self.le_depth!r}")
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.modality_setting not in MODALITY_SETTINGS:
            raise ConfigError(f"modality_setting must be one of {MODALITY_SETTINGS}")
        if self.predictor not in PREDICTORS:
            raise ConfigError(f"predictor must be one of {PREDICTORS}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be at least 1")
        if not self.seeds:
            raise ConfigError("seed list must not be empty")
        if self.le_depth == "embedding-only" and self.resolved_embed_dim() != self.feature_dim:
            raise ConfigError("embedding-only label net needs label_embed_dim == feature_dim")


_HP_KEYS = ("alpha", "beta", "gamma", "label_loss_weight", "ce_weight", "supcon_temperature")
_PLAIN_KEYS = tuple(f.name for f in fields(RunConfig) if f.name != "hp")
FLAT_KEYS = tuple(f"hp.{k}" for k in _HP_KEYS) + _PLAIN_KEYS


def config_to_flat(config: RunConfig) -> dict:
    """Flat, fixed-order key/value view of a config (the CLI namespace)."""
    out = {f"hp.{k}": getattr(config.hp, k) for k in _HP_KEYS}
    for key in _PLAIN_KEYS:
        value = getattr(config, key)
        out[key] = list(value) if key == "seeds" else value
    return out


def config_from_flat(values: dict, base: RunConfig | None = None) -> RunConfig:
    """Build a config from flat keys; unknown keys raise naming the key."""
    config = replace(base) if base is not None else RunConfig()
    config.hp = replace(config.hp)
    for key, value in values.items():
        if key not in FLAT_KEYS:
            raise ConfigError(f"unknown config key: {key!r}")
        if key.startswith("hp."):
            setattr(config.hp, key[3:], float(value))
        elif key == "seeds":
            config.seeds = tuple(int(v) for v in value)
        elif key in ("label_embed_dim", "le_hidden_dim"):
            setattr(config, key, None if value is None else int(value))
        elif key in ("batch_size", "epochs", "hidden_dim", "feature_dim", "split_seed"):
            setattr(config, key, int(value))
        elif key in ("encoder_lr", "label_net_lr", "adam_beta1", "adam_beta2", "adam_eps"):
            setattr(config, key, float(value))
        elif key in ("augmentation", "use_negative_loss", "consistent_denominator"):
            if not isinstance(value, bool):
                raise ConfigError(f"config key {key!r} expects true/false")
            setattr(config, key, value)
        else:
            setattr(config, key, str(value))
    config.validate()
    return config


class ParameterStore:
    """Named float64 parameter arrays, updated in place by the optimizers."""

    def __init__(self, arrays: dict[str, np.ndarray]):
        self.arrays = {name: np.asarray(arr, dtype=np.float64) for name, arr in arrays.items()}

    def leaves(self, tape: Tape) -> dict[str, Tensor]:
        return {name: tape.leaf(name, arr) for name, arr in self.arrays.items()}

    def constants(self) -> dict[str, Tensor]:
        return {name: Tensor(arr) for name, arr in self.arrays.items()}

    @property
    def encoder_names(self) -> list[str]:
        return [n for n in self.arrays if not n.startswith("label.")]

    @property
    def label_names(self) -> list[str]:
        return [n for n in self.arrays if n.startswith("label.")]


def init_params(header: DatasetHeader, config: RunConfig, rng: np.random.Generator) -> ParameterStore:
    arrays = init_encoder_params(header, config.hidden_dim, config.feature_dim, rng)
    arrays.update(init_label_params(
        header.num_labels, config.feature_dim, config.resolved_embed_dim(),
        config.le_depth, rng, hidden_dim=config.le_hidden_dim))
    return ParameterStore(arrays)


class Adam:
    """Bias-corrected Adam over a fixed set of parameter names."""

    def __init__(self, names: Sequence[str], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.names = list(names)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, store: ParameterStore, grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        t = self.step_count
        for name in self.names:
            grad = grads[name]
            m = self._m.get(name)
            v = self._v.get(name)
            if m is None:
                m = np.zeros_like(grad)
                v = np.zeros_like(grad)
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
            self._m[name] = m
            self._v[name] = v
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            store.arrays[name] = store.arrays[name] - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def compute_step_loss(config: RunConfig, leaves: dict[str, Tensor], batch: FeatureBatch,
                      counter: FloorCount | None = None) -> tuple[Tensor, LossBreakdown]:
    """One step's objective node and breakdown for the configured loss mode."""
    counter = counter if counter is not None else FloorCount()
    n = batch.size
    feats = encode(batch, FULL_MASK, leaves)
    probs = classify(feats, leaves)
    ce = cross_entropy(probs, batch.labels, counter=counter)

    if config.loss_mode == "sslcl":
        masks = augmentation_views(config.modality_setting) if config.augmentation else []
        views = [encode(batch, mask, leaves) for mask in masks]
        table = embed_labels(leaves, config.le_depth)
        ctx = build_context(feats, table, batch.labels, config.measure)
        node, breakdown = sslcl_loss(
            ctx, views, batch.label_counts, config.hp,
            use_negative=config.use_negative_loss,
            consistent_denominator=config.consistent_denominator,
            counter=counter)
        total = ad.add(node, ad.scale(ce, config.hp.ce_weight))
    elif config.loss_mode == "supcon":
        contrast = supcon_loss(feats, batch.labels, config.hp.supcon_temperature)
        total = ad.add(contrast, ad.scale(ce, config.hp.ce_weight))
        breakdown = LossBreakdown(
            positive_terms=np.zeros(n), negative_terms=np.zeros(n),
            sample_weights=np.ones(n), label_loss=0.0, sslcl_loss=0.0,
            supcon_term=contrast.item())
    else:
        total = ce
        breakdown = LossBreakdown(
            positive_terms=np.zeros(n), negative_terms=np.zeros(n),
            sample_weights=np.ones(n), label_loss=0.0, sslcl_loss=0.0)
    breakdown.ce_loss = ce.item()
    breakdown.train_loss = total.item()
    breakdown.floored_logs = counter.count
    return total, breakdown


def predict(store: ParameterStore, header: DatasetHeader, records, config: RunConfig) -> np.ndarray:
    """Predicted labels; head argmax by default, similarity argmax as the
    diagnostic mode (its batch assignment comes from the head, since true
    labels are unavailable at inference)."""
    batch = records_to_batch(header, records)
    consts = store.constants()
    feats = encode(batch, FULL_MASK, consts)
    probs = classify(feats, consts)
    head_preds = np.argmax(probs.values, axis=1)
    if config.predictor == "head":
        return head_preds
    table = embed_labels(consts, config.le_depth)
    ctx = build_context(feats, table, head_preds, config.measure)
    return np.argmax(sim_matrix(ctx).values, axis=1)


@dataclass
class TrainResult:
    store: ParameterStore
    metrics_lines: list[str]
    epoch_scores: list[dict]
    floored_logs: int


def train(config: RunConfig, dataset: FeatureDataset, *, seed: int,
          eval_dataset: FeatureDataset | None = None) -> TrainResult:
    """Optimize against the configured objective; fully deterministic per seed."""
    config.validate()
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(seed)
    store = init_params(dataset.header, config, rng)
    opt_encoder = Adam(store.encoder_names, config.encoder_lr,
                       config.adam_beta1, config.adam_beta2, config.adam_eps)
    opt_label = Adam(store.label_names, config.label_net_lr,
                     config.adam_beta1, config.adam_beta2, config.adam_eps)

    lines: list[str] = []
    epoch_scores: list[dict] = []
    step = 0
    floored_total = 0
    last_record: dict | None = None
    for epoch in range(config.epochs):
        for batch in batch_iter(dataset, config.batch_size, seed=[seed, epoch], shuffle=True):
            tape = Tape()
            leaves = store.leaves(tape)
            try:
                total, breakdown = compute_step_loss(config, leaves, batch)
                grads = tape.gradients(total)
            except ad.NonFiniteError as err:
                context = f"; last step terms: {json.dumps(last_record)}" if last_record else ""
                raise NonFiniteLossError(
                    f"aborted at step {step} (epoch {epoch}): {err}{context}") from err
            opt_encoder.step(store, grads)
            opt_label.step(store, grads)
            record = breakdown.step_record(step, epoch)
            lines.append(json.dumps(record))
            last_record = record
            floored_total += breakdown.floored_logs
            step += 1
        train_wf1, _ = weighted_f1(
            predict(store, dataset.header, dataset.records, config),
            [r.label for r in dataset.records], dataset.header.num_labels)
        if eval_dataset is not None and len(eval_dataset):
            eval_wf1, _ = weighted_f1(
                predict(store, eval_dataset.header, eval_dataset.records, config),
                [r.label for r in eval_dataset.records], eval_dataset.header.num_labels)
        else:
            eval_wf1 = None
        epoch_record = {"epoch": epoch, "train_wf1": train_wf1, "eval_wf1": eval_wf1}
        lines.append(json.dumps(epoch_record))
        epoch_scores.append(epoch_record)
    return TrainResult(store=store, metrics_lines=lines,
                       epoch_scores=epoch_scores, floored_logs=floored_total)


def write_metrics_log(path, config: RunConfig, result: TrainResult) -> None:
    """JSONL artifact: a config header line, then the per-step/epoch records."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"config": config_to_flat(config)}) + "\n")
        for line in result.metrics_lines:
            fh.write(line + "\n")


def save_checkpoint(path, store: ParameterStore, config: RunConfig) -> None:
    obj = {
        "config": config_to_flat(config),
        "parameters": {
            name: {"shape": list(arr.shape), "values": arr.ravel().tolist()}
            for name, arr in store.arrays.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj))


def load_checkpoint(path) -> tuple[ParameterStore, RunConfig]:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    arrays = {
        name: np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in obj["parameters"].items()
    }
    return ParameterStore(arrays), config_from_flat(obj["config"])


# --- gradient verification -------------------------------------------------

GRADCHECK_MODES = ("sslcl+augmentation", "sslcl-augmentation", "supcon", "ce-only")
FD_STEP = 1e-5
GRAD_TOL = 1e-4
# Relative error with a floored denominator: a pure ratio is ill-posed for
# gradients that are exactly zero (unused parameter groups).
_REL_FLOOR = 1e-3


@dataclass
class GradCheckReport:
    rows: list[dict]
    tolerance: float = GRAD_TOL

    @property
    def max_rel_err(self) -> float:
        return max((row["max_rel_err"] for row in self.rows), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance

    def summary(self) -> str:
        lines = [f"{row['mode']:<22} {row['group']:<8} max_rel_err={row['max_rel_err']:.3e}"
                 for row in self.rows]
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"{verdict}: overall max relative error {self.max_rel_err:.3e} "
                     f"(tolerance {self.tolerance:g})")
        return "\n".join(lines)


def _gradcheck_config(base: RunConfig, mode: str, rng: np.random.Generator) -> RunConfig:
    config = replace(base)
    config.hp = replace(base.hp)
    config.feature_dim = int(rng.integers(2, 6))
    config.hidden_dim = int(rng.integers(2, 5))
    config.label_embed_dim = None
    config.le_hidden_dim = None
    config.loss_mode = "sslcl" if mode.startswith("sslcl") else mode
    config.augmentation = mode == "sslcl+augmentation"
    config.modality_setting = "trimodal"
    return config


def _random_instance(config: RunConfig, num_labels: int, rng: np.random.Generator
                     ) -> tuple[DatasetHeader, FeatureBatch, ParameterStore]:
    n = int(rng.integers(1 if config.loss_mode == "sslcl" else 2, 7))
    header = DatasetHeader(text_dim=4, audio_dim=3, visual_dim=3,
                           num_labels=num_labels,
                           label_names=tuple(f"class{k}" for k in range(num_labels)))
    labels = rng.integers(0, num_labels, size=n)
    _, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
    batch = FeatureBatch(
        ids=[f"g{i}" for i in range(n)],
        text=rng.standard_normal((n, header.text_dim)),
        audio=rng.standard_normal((n, header.audio_dim)),
        visual=rng.standard_normal((n, header.visual_dim)),
        labels=labels.astype(np.intp), label_counts=counts[inverse])
    store = init_params(header, config, rng)
    # Zero-initialized biases park masked-view preactivations exactly on the
    # ReLU kink, where central differences are ill-posed; jitter off it.
    for name in store.arrays:
        store.arrays[name] = store.arrays[name] + rng.uniform(0.02, 0.1, store.arrays[name].shape)
    return header, batch, store


def _loss_value(config: RunConfig, store: ParameterStore, batch: FeatureBatch) -> float:
    total, _ = compute_step_loss(config, store.constants(), batch)
    return total.item()


def gradcheck(config: RunConfig | None = None, *, instances_per_mode: int = 6,
              seed: int = 1) -> GradCheckReport:
    """Central finite differences against the tape for every parameter of
    every loss mode, on random small instances (N <= 6, K <= 4, d <= 5)."""
    base = config if config is not None else RunConfig()
    rng = np.random.default_rng(seed)
    rows = []
    for mode in GRADCHECK_MODES:
        group_worst: dict[str, float] = {}
        for _ in range(instances_per_mode):
            check_config = _gradcheck_config(base, mode, rng)
            num_labels = int(rng.integers(2, 5))
            header, batch, store = _random_instance(check_config, num_labels, rng)
            tape = Tape()
            total, _ = compute_step_loss(check_config, store.leaves(tape), batch)
            grads = tape.gradients(total)
            for name, grad in grads.items():
                group = "label" if name.startswith("label.") else (
                    "head" if name.startswith("head.") else "encoder")
                flat = store.arrays[name].ravel()
                numeric = np.zeros_like(flat)
                for j in range(flat.size):
                    original = flat[j]
                    flat[j] = original + FD_STEP
                    up = _loss_value(check_config, store, batch)
                    flat[j] = original - FD_STEP
                    down = _loss_value(check_config, store, batch)
                    flat[j] = original
                    numeric[j] = (up - down) / (2 * FD_STEP)
                analytic = grad.ravel()
                denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), _REL_FLOOR)
                rel = float(np.max(np.abs(analytic - numeric) / denom))
                group_worst[group] = max(group_worst.get(group, 0.0), rel)
        for group in sorted(group_worst):
            rows.append({"mode": mode, "group": group, "max_rel_err": group_worst[group]})
    return GradCheckReport(rows=rows)
