"""Training-objective terms: focal positive/negative sample-label losses,
label-label discrimination, cross entropy, the combined objective, and a
vanilla SupCon baseline.

Every term is assembled from tape primitives so the trainer gets exact
gradients. Probabilities that can saturate pass through a 1e-300 log
floor; each floored evaluation is counted and surfaced in the breakdown.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from . import similarity as sim
from .similarity import SimilarityContext

LOG_FLOOR = 1e-300
GAMMA_CHOICES = (0.5, 1.0, 1.5)
LABEL_WEIGHT_CHOICES = (0.5, 1.0, 2.0)


@dataclass
class HyperParams:
    """Loss hyperparameters. alpha/beta are the positive/negative focusing
    exponents, gamma the sample-weight exponent, label_loss_weight the
    label-label trade-off, ce_weight the cross-entropy trade-off."""

    alpha: float = 2.0
    beta: float = 0.5
    gamma: float = 1.0
    label_loss_weight: float = 1.0
    ce_weight: float = 1.0
    supcon_temperature: float = 0.07

    def validate(self) -> None:
        for name in ("alpha", "beta", "gamma", "ce_weight", "supcon_temperature"):
            if getattr(self, name) <= 0:
                raise ValueError(f"hyperparameter {name} must be strictly positive")
        # label_loss_weight may be zero: that is the label-label ablation arm.
        if self.label_loss_weight < 0:
            raise ValueError("label_loss_weight must be non-negative")


@dataclass
class FloorCount:
    """Counts log evaluations that hit the 1e-300 floor."""

    count: int = 0


@dataclass
class LossBreakdown:
    """Per-term values of one training step, all float64."""

    positive_terms: np.ndarray
    negative_terms: np.ndarray
    sample_weights: np.ndarray
    label_loss: float
    sslcl_loss: float
    ce_loss: float = 0.0
    supcon_term: float = 0.0
    train_loss: float = 0.0
    floored_logs: int = 0

    def step_record(self, step: int, epoch: int) -> dict:
        n = max(len(self.positive_terms), 1)
        return {
            "step": step,
            "epoch": epoch,
            "l_pos_mean": float(np.sum(self.positive_terms) / n),
            "l_neg_mean": float(np.sum(self.negative_terms) / n),
            "L_Label": self.label_loss,
            "L_SSLCL": self.sslcl_loss,
            "L_CE": self.ce_loss,
            "L_SupCon": self.supcon_term,
            "L_Train": self.train_loss,
            "floored_logs": self.floored_logs,
        }


def safe_log(node: Tensor, counter: FloorCount | None = None,
             relevant: np.ndarray | None = None) -> Tensor:
    """log with the argument floored at 1e-300; floored entries are counted.

    `relevant` optionally restricts the count to entries that actually
    enter the loss (e.g. the off-diagonal of a masked matrix).
    """
    hit = node.values < LOG_FLOOR
    if relevant is not None:
        hit = hit & (relevant > 0)
    floored = int(np.sum(hit))
    if counter is not None and floored:
        counter.count += floored
    return ad.log(ad.clamp_min(node, LOG_FLOOR))


def _safe_pow(node: Tensor, exponent: float) -> Tensor:
    # Clamp keeps the derivative finite when a probability underflows to 0.
    return ad.pow_const(ad.clamp_min(node, LOG_FLOOR), exponent)


def _focal_positive(prob: Tensor, alpha: float, counter: FloorCount | None) -> Tensor:
    """-log(p) (1-p)^alpha, elementwise."""
    comp = ad.add_const(ad.scale(prob, -1.0), 1.0)
    return ad.scale(ad.mul(safe_log(prob, counter), _safe_pow(comp, alpha)), -1.0)


def _onehot(labels: np.ndarray, num_labels: int) -> np.ndarray:
    out = np.zeros((len(labels), num_labels))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def positive_loss(index: int, ctx: SimilarityContext, views: Sequence[Tensor],
                  hp: HyperParams, *, consistent_denominator: bool = False,
                  counter: FloorCount | None = None) -> Tensor:
    """Focal positive sample-label loss for one sample.

    views holds the sample's raw augmented feature rows, each (1, d); the
    similarity layer centers them against the full-view batch statistics.
    By default the denominator scores every label against the original
    sample row even for the augmented terms; consistent_denominator=True
    switches the view terms to score labels against the view itself.
    """
    own_label = int(ctx.labels[index])
    num_labels = ctx.num_labels
    cand_sims = ad.stack([sim.pair_similarity(ctx, index, j) for j in range(num_labels)])
    view_sims = [sim.view_row_similarity(ctx, row, own_label) for row in views]

    shift = float(max(cand_sims.values.max(), max((s.item() for s in view_sims), default=-np.inf)))
    exp_cands = ad.exp(ad.add_const(cand_sims, -shift))
    exp_views = [ad.exp(ad.add_const(s, -shift)) for s in view_sims]
    denom = ad.sum_all(exp_cands)
    for ev in exp_views:
        denom = ad.add(denom, ev)

    onehot = np.zeros(num_labels)
    onehot[own_label] = 1.0
    own_exp = ad.dot(exp_cands, Tensor(onehot))
    total = _focal_positive(ad.div(own_exp, denom), hp.alpha, counter)

    for view_row, ev, s_v in zip(views, exp_views, view_sims):
        if consistent_denominator:
            view_cand = sim.view_sim_matrix(ctx, view_row)
            shift_v = float(max(view_cand.values.max(), max(s.item() for s in view_sims)))
            d_v = ad.sum_all(ad.exp(ad.add_const(view_cand, -shift_v)))
            for s_other in view_sims:
                d_v = ad.add(d_v, ad.exp(ad.add_const(s_other, -shift_v)))
            p_v = ad.div(ad.exp(ad.add_const(s_v, -shift_v)), d_v)
        else:
            p_v = ad.div(ev, denom)
        total = ad.add(total, _focal_positive(p_v, hp.alpha, counter))
    return total


def negative_loss(index: int, ctx: SimilarityContext, hp: HyperParams, *,
                  counter: FloorCount | None = None) -> Tensor:
    """Focal negative sample-label loss for one sample:
    -sum_{k != y} log(1 - p_k) p_k^beta with p the label softmax.

    The complement 1 - p_k is evaluated as its own exp-sum ratio
    sum_{j != k} e^{s_j} / sum_j e^{s_j}, never by subtraction, so it
    stays accurate when one similarity dominates.
    """
    num_labels = ctx.num_labels
    cand_sims = ad.stack([sim.pair_similarity(ctx, index, j) for j in range(num_labels)])
    shift = float(cand_sims.values.max())
    exps = ad.exp(ad.add_const(cand_sims, -shift))
    denom = ad.sum_all(exps)
    own = int(ctx.labels[index])
    total = None
    for k in range(num_labels):
        if k == own:
            continue
        pick = np.zeros(num_labels)
        pick[k] = 1.0
        p_k = ad.div(ad.dot(exps, Tensor(pick)), denom)
        comp_k = ad.div(ad.dot(exps, Tensor(1.0 - pick)), denom)
        term = ad.mul(safe_log(comp_k, counter), _safe_pow(p_k, hp.beta))
        total = term if total is None else ad.add(total, term)
    return ad.scale(total, -1.0)


def label_label_loss(label_embeddings: Tensor, *, counter: FloorCount | None = None) -> Tensor:
    """Discrimination loss over raw (uncentered) label-embedding dot products.

    The self-similarity is pinned to exp(0) = 1 in each denominator so a
    large own-norm cannot crush the off-diagonal softmax terms.
    """
    num_labels = label_embeddings.shape[0]
    if num_labels < 2:
        raise ValueError("label-label loss needs at least two labels")
    gram = ad.matmul(label_embeddings, ad.transpose(label_embeddings))
    offdiag = 1.0 - np.eye(num_labels)
    gram_off = ad.mul(Tensor(offdiag), gram)
    shift = np.max(gram.values, axis=1, where=offdiag > 0, initial=0.0)
    shifted = ad.add_const(gram_off, -shift[:, None])
    exps = ad.mul(Tensor(offdiag), ad.exp(shifted))
    denom = ad.add_const(ad.rowsum(exps), np.exp(-shift))
    # 1 - p(i,j) assembled as (sum over other pairs + pinned self term) / denom
    # rather than by subtraction, keeping it exact when one pair dominates.
    comp_num = ad.add_const(ad.matmul(exps, Tensor(offdiag)), np.exp(-shift)[:, None])
    comp = ad.mul_colvec(comp_num, ad.pow_const(denom, -1.0))
    logs = ad.mul(Tensor(offdiag), safe_log(comp, counter, relevant=offdiag))
    return ad.scale(ad.sum_all(logs), -1.0)


def batched_sample_losses(ctx: SimilarityContext, view_mats: Sequence[Tensor],
                          hp: HyperParams, *, use_negative: bool = True,
                          consistent_denominator: bool = False,
                          counter: FloorCount | None = None) -> tuple[Tensor, Tensor]:
    """Vectorized per-sample positive and negative losses, as (N,) nodes.

    Mirrors positive_loss/negative_loss exactly; the per-sample forms stay
    around as the readable reference and for the oracle tests.
    """
    n, num_labels = ctx.size, ctx.num_labels
    sims = sim.sim_matrix(ctx)
    view_vecs = [sim.view_sim_vector(ctx, vm) for vm in view_mats]

    shift = sims.values.max(axis=1)
    for vv in view_vecs:
        shift = np.maximum(shift, vv.values)
    shifted = ad.add_const(sims, -shift[:, None])
    exp_sims = ad.exp(shifted)
    base_denom = ad.rowsum(exp_sims)
    denom = base_denom
    exp_views = [ad.exp(ad.add(vv, Tensor(-shift))) for vv in view_vecs]
    for ev in exp_views:
        denom = ad.add(denom, ev)

    onehot = _onehot(ctx.labels, num_labels)
    own = ad.rowsum(ad.mul(shifted, Tensor(onehot)))
    pos = _focal_positive(ad.div(ad.exp(own), denom), hp.alpha, counter)
    for vi, (vm, ev, vv) in enumerate(zip(view_mats, exp_views, view_vecs)):
        if consistent_denominator:
            view_sims = sim.view_sim_matrix(ctx, vm)
            shift_v = view_sims.values.max(axis=1)
            for other in view_vecs:
                shift_v = np.maximum(shift_v, other.values)
            d_v = ad.rowsum(ad.exp(ad.add_const(view_sims, -shift_v[:, None])))
            for other in view_vecs:
                d_v = ad.add(d_v, ad.exp(ad.add(other, Tensor(-shift_v))))
            p_v = ad.div(ad.exp(ad.add(vv, Tensor(-shift_v))), d_v)
        else:
            p_v = ad.div(ev, denom)
        pos = ad.add(pos, _focal_positive(p_v, hp.alpha, counter))

    if use_negative:
        # Negative-pair softmax over labels only (no view terms); complements
        # come from the over-other-labels exp sum, never from subtraction.
        inv_base = ad.pow_const(base_denom, -1.0)
        probs = ad.mul_colvec(exp_sims, inv_base)
        off_labels = 1.0 - np.eye(num_labels)
        comps = ad.mul_colvec(ad.matmul(exp_sims, Tensor(off_labels)), inv_base)
        terms = ad.mul(Tensor(1.0 - onehot),
                       ad.mul(safe_log(comps, counter, relevant=1.0 - onehot),
                              _safe_pow(probs, hp.beta)))
        neg = ad.scale(ad.rowsum(terms), -1.0)
    else:
        neg = Tensor(np.zeros(n))
    return pos, neg


def sample_weights(label_counts: np.ndarray, batch_size: int, gamma: float) -> np.ndarray:
    """(N / n_{y_i})^gamma, n the within-batch count of the sample's label."""
    counts = np.asarray(label_counts, dtype=np.float64)
    if np.any(counts < 1):
        raise ValueError("every sample's label count must be at least 1")
    return (batch_size / counts) ** gamma


def sslcl_loss(ctx: SimilarityContext, view_mats: Sequence[Tensor],
               label_counts: np.ndarray, hp: HyperParams, *,
               use_negative: bool = True, consistent_denominator: bool = False,
               counter: FloorCount | None = None) -> tuple[Tensor, LossBreakdown]:
    """Full weighted sample-label objective plus the label-label term.

    Returns the scalar node and a breakdown filled in through sslcl_loss;
    the caller completes ce/train. The label-label value is always
    computed for the logs, its gradient contribution is scaled by the
    configured weight (zero weight = the ablation arm).
    """
    counter = counter if counter is not None else FloorCount()
    pos, neg = batched_sample_losses(
        ctx, view_mats, hp, use_negative=use_negative,
        consistent_denominator=consistent_denominator, counter=counter)
    weights = sample_weights(label_counts, ctx.size, hp.gamma)
    weighted = ad.dot(Tensor(weights), ad.add(pos, neg))
    label_term = label_label_loss(ctx.label_embeddings, counter=counter)
    node = ad.add(weighted, ad.scale(label_term, hp.label_loss_weight))
    breakdown = LossBreakdown(
        positive_terms=np.array(pos.values),
        negative_terms=np.array(neg.values),
        sample_weights=weights,
        label_loss=label_term.item(),
        sslcl_loss=node.item(),
        floored_logs=counter.count,
    )
    return node, breakdown


def cross_entropy(probs: Tensor, labels, *, counter: FloorCount | None = None) -> Tensor:
    """-sum_i log p_i[y_i] over predicted class distributions."""
    labels = np.asarray(labels, dtype=np.intp)
    if probs.values.ndim != 2 or len(labels) != probs.shape[0]:
        raise ValueError("cross_entropy expects (N, K) probabilities and N labels")
    own = ad.rowsum(ad.mul(probs, Tensor(_onehot(labels, probs.shape[1]))))
    return ad.scale(ad.sum_all(safe_log(own, counter)), -1.0)


def total_loss(breakdown: LossBreakdown, hp: HyperParams) -> float:
    """Combined objective value: sslcl term plus weighted cross entropy."""
    return breakdown.sslcl_loss + hp.ce_weight * breakdown.ce_loss


def supcon_loss(features: Tensor, labels, temperature: float) -> Tensor:
    """Vanilla supervised contrastive loss on L2-normalized features.

    Anchors without an in-batch positive contribute zero but stay in the
    mean, so starving minority classes of positives visibly dilutes the
    signal instead of crashing.
    """
    labels = np.asarray(labels, dtype=np.intp)
    n = features.shape[0]
    if n != len(labels):
        raise ValueError("labels must match the batch size")
    if n < 2:
        return Tensor(0.0)
    sq = ad.rowsum(ad.mul(features, features))
    inv_norm = ad.pow_const(ad.clamp_min(sq, 1e-24), -0.5)
    normed = ad.mul_colvec(features, inv_norm)
    sims = ad.scale(ad.matmul(normed, ad.transpose(normed)), 1.0 / temperature)

    offdiag = 1.0 - np.eye(n)
    positives = offdiag * (labels[:, None] == labels[None, :])
    pos_counts = positives.sum(axis=1)
    sims_off = ad.mul(Tensor(offdiag), sims)
    shift = np.max(sims_off.values, axis=1, where=offdiag > 0, initial=-np.inf)
    shifted = ad.add_const(sims_off, -shift[:, None])
    exps = ad.mul(Tensor(offdiag), ad.exp(shifted))
    log_denom = ad.log(ad.rowsum(exps))

    anchor_weight = np.divide(1.0, pos_counts, out=np.zeros(n), where=pos_counts > 0)
    has_pos = (pos_counts > 0).astype(np.float64)
    pos_logit_sums = ad.rowsum(ad.mul(Tensor(positives), shifted))
    per_anchor = ad.sub(ad.mul(Tensor(anchor_weight), pos_logit_sums),
                        ad.mul(Tensor(has_pos), log_denom))
    return ad.scale(ad.sum_all(per_anchor), -1.0 / n)
