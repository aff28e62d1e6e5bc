"""Self-supervised training: masking, MLM and hypersphere losses, the training loop."""

from __future__ import annotations

import copy
import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
import torch

from .hierarchical import MODES, EncodedRecord, run_batch
from .log_tree import SegmentPlan
from .model_core import (AdamW, EncoderConfig, EncoderStack, NonFiniteGradient, grad_check_probes,
                         measure_attention, token_nll)

log = logging.getLogger(__name__)


class NoMaskablePositions(ValueError):
    pass


class TrainingDiverged(FloatingPointError):
    def __init__(self, message: str, last_good_state: dict | None):
        super().__init__(message)
        self.last_good_state = last_good_state


@dataclass(frozen=True)
class TrainConfig:
    mask_rate: float = 0.2
    vhm_weight: float = 0.1
    epochs: int = 50
    batch_size: int = 8
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    mode: str = "bidirectional"
    z_source: str = "reverse"
    seed: int = 0
    mask_seed: int = 1234
    record_wallclock: bool = False

    def __post_init__(self):
        if not 0 < self.mask_rate < 1:
            raise ValueError("mask_rate must lie in (0, 1)")
        if self.vhm_weight < 0:
            raise ValueError("vhm_weight must be >= 0")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MaskPlan:
    units: tuple[int, ...]                    # masked content units, ascending
    targets: tuple[int, ...]                  # original ids at those units
    coords: tuple[tuple[int, int], ...]       # (step, offset) in the segment plan


def mask_count(rate: float, maskable: int) -> int:
    return max(1, int(math.floor(rate * maskable + 0.5)))


def apply_masking(plan: SegmentPlan, rate: float, rng: np.random.Generator) -> MaskPlan:
    maskable = plan.maskable_units
    if not maskable:
        raise NoMaskablePositions("segment plan has no maskable tokens")
    n = mask_count(rate, len(maskable))
    chosen = np.sort(rng.choice(len(maskable), size=n, replace=False))
    units = tuple(maskable[i] for i in chosen)
    return MaskPlan(units, tuple(plan.content_ids[u] for u in units),
                    tuple(plan.unit_coords[u] for u in units))


def eval_mask(plan: SegmentPlan, rate: float, mask_seed: int, index: int) -> MaskPlan:
    """Fixed mask for record ``index`` of an evaluation set."""
    return apply_masking(plan, rate, np.random.default_rng([mask_seed, index]))


# ---------------------------------------------------------------- losses

def mlm_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    if logits.shape[0] != targets.shape[0]:
        raise ValueError(f"{logits.shape[0]} logit rows for {targets.shape[0]} masked targets")
    return token_nll(logits, targets).mean()


def hypersphere_distances(summaries: torch.Tensor, center: torch.Tensor) -> torch.Tensor:
    sq = ((summaries - center) ** 2).sum(dim=-1)
    # sqrt has an infinite slope at 0; keep exact zeros without NaN gradients
    pos = sq > 0
    return torch.where(pos, torch.sqrt(torch.where(pos, sq, torch.ones_like(sq))), torch.zeros_like(sq))


def summary_center(summaries: torch.Tensor) -> torch.Tensor:
    """Mean summary, taken relative to the first row so that identical rows give that row exactly."""
    ref = summaries[0]
    return ref + (summaries - ref).mean(dim=0)


def vhm_loss(summaries: torch.Tensor, center: torch.Tensor | None = None) -> torch.Tensor:
    """Mean distance of the summaries to their (gradient-blocked) batch mean."""
    if summaries.shape[0] < 2:
        warnings.warn("hypersphere loss needs at least two summaries; returning 0", stacklevel=2)
        return summaries.sum() * 0.0
    if center is None:
        center = summary_center(summaries).detach()
    return hypersphere_distances(summaries, center).mean()


def total_loss(mlm, vhm, weight: float):
    return mlm + weight * vhm


def split_dataset(records: Sequence, seed: int):
    """Seeded shuffle, then contiguous train/val/test at 5:1:1 (remainder to train)."""
    n = len(records)
    if n < 7:
        raise ValueError(f"need at least 7 records to split 5:1:1, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_val = n_test = n // 7
    n_train = n - n_val - n_test
    pick = [records[i] for i in perm]
    return pick[:n_train], pick[n_train:n_train + n_val], pick[n_train + n_val:]


# ---------------------------------------------------------------- evaluation

@dataclass
class EvalResult:
    mlm: float
    vhm: float
    record_mlm: np.ndarray
    summaries: torch.Tensor
    masked_tokens: int


def _batches(n: int, size: int) -> list[range]:
    out = [range(i, min(i + size, n)) for i in range(0, n, size)]
    if len(out) > 1 and len(out[-1]) < 2:
        last = out.pop()
        out[-1] = range(out[-1].start, last.stop)
    return out


@torch.no_grad()
def evaluate(stack: EncoderStack, records: Sequence[EncodedRecord], mode: str, *, mask_rate: float = 0.2,
             mask_seed: int = 1234, batch_size: int = 64, z_source: str = "reverse",
             center: torch.Tensor | None = None) -> EvalResult:
    """Token-weighted MLM loss under fixed masks, plus per-record losses and summaries."""
    masks = [eval_mask(r.plan, mask_rate, mask_seed, i).units for i, r in enumerate(records)]
    nll_sum = np.zeros(len(records))
    counts = np.zeros(len(records))
    summaries = []
    for rng_ in _batches(len(records), batch_size):
        batch = [records[i] for i in rng_]
        out = run_batch(stack, batch, [masks[i] for i in rng_], mode, z_source)
        nll = token_nll(out.logits, out.targets).double().numpy()
        owners = out.record_index.numpy() + rng_.start
        np.add.at(nll_sum, owners, nll)
        np.add.at(counts, owners, 1)
        summaries.append(out.summaries)
    S = torch.cat(summaries)
    c = summary_center(S) if center is None else center
    vhm = float(hypersphere_distances(S, c).mean()) if len(records) > 1 or center is not None else 0.0
    return EvalResult(float(nll_sum.sum() / counts.sum()), vhm, nll_sum / counts, S, int(counts.sum()))


# ---------------------------------------------------------------- training

@dataclass
class TrainResult:
    stack: EncoderStack
    history: list[dict]
    center: torch.Tensor
    best_epoch: int
    config: TrainConfig
    extras: dict = field(default_factory=dict)

    def metrics_document(self) -> dict:
        return {
            "train_config": self.config.to_dict(),
            "encoder_config": self.stack.config.to_dict(),
            "best_epoch": self.best_epoch,
            "history": self.history,
        }


def train(encoder_config: EncoderConfig, config: TrainConfig, train_set: Sequence[EncodedRecord],
          val_set: Sequence[EncodedRecord], dtype: torch.dtype = torch.float32) -> TrainResult:
    """Train from scratch; keeps the parameters with the best validation total loss."""
    torch.manual_seed(config.seed)
    stack = EncoderStack(encoder_config, dtype)
    opt = AdamW(stack.named_parameters(), lr=config.lr, betas=(config.beta1, config.beta2),
                eps=config.eps, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    history: list[dict] = []
    best_state, best_score, best_epoch = None, math.inf, 0
    last_good = copy.deepcopy(stack.state_dict())
    t0 = time.perf_counter()

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_set))
        nll_total, tokens, vhm_total, n_rec = 0.0, 0, 0.0, 0
        for idx in _batches(len(order), config.batch_size):
            batch = [train_set[order[i]] for i in idx]
            masks = [apply_masking(r.plan, config.mask_rate, rng).units for r in batch]
            out = run_batch(stack, batch, masks, config.mode, config.z_source)
            mlm = mlm_loss(out.logits, out.targets)
            vhm = vhm_loss(out.summaries) if config.vhm_weight > 0 else out.summaries.new_zeros(())
            loss = total_loss(mlm, vhm, config.vhm_weight)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}", last_good)
            opt.zero_grad()
            loss.backward()
            try:
                opt.step()
            except NonFiniteGradient as e:
                raise TrainingDiverged(str(e), last_good) from e
            m = len(out.targets)
            nll_total += float(mlm.detach()) * m
            tokens += m
            vhm_total += float(vhm.detach()) * len(batch)
            n_rec += len(batch)
        last_good = copy.deepcopy(stack.state_dict())
        wall = round(time.perf_counter() - t0, 3) if config.record_wallclock else None
        tr_mlm, tr_vhm = nll_total / tokens, vhm_total / n_rec
        history.append(_entry(epoch, "train", tr_mlm, tr_vhm, config.vhm_weight, wall))
        ev = evaluate(stack, val_set, config.mode, mask_rate=config.mask_rate,
                      mask_seed=config.mask_seed, z_source=config.z_source)
        val_total = ev.mlm + config.vhm_weight * ev.vhm
        history.append(_entry(epoch, "val", ev.mlm, ev.vhm, config.vhm_weight, wall))
        log.info("epoch %d train mlm %.4f vhm %.4f | val mlm %.4f vhm %.4f",
                 epoch, tr_mlm, tr_vhm, ev.mlm, ev.vhm)
        if val_total < best_score:
            best_score, best_epoch = val_total, epoch
            best_state = copy.deepcopy(stack.state_dict())

    stack.load_state_dict(best_state)
    train_summaries = evaluate(stack, train_set, config.mode, mask_rate=config.mask_rate,
                               mask_seed=config.mask_seed, z_source=config.z_source).summaries
    center = summary_center(train_summaries)
    return TrainResult(stack, history, center, best_epoch, config)


def _entry(epoch, split, mlm, vhm, weight, wall) -> dict:
    return {"epoch": epoch, "split": split, "mlm": mlm, "vhm": vhm,
            "total": mlm + weight * vhm, "wallclock": wall}


def train_flat_baseline(encoder_config: EncoderConfig, config: TrainConfig, train_set, val_set,
                        backbone_blocks: int = 2, dtype: torch.dtype = torch.float32) -> TrainResult:
    """Same protocol on the linearized records with a deeper encoder."""
    return train(replace(encoder_config, n_blocks=backbone_blocks), replace(config, mode="flat"),
                 train_set, val_set, dtype)


# ---------------------------------------------------------------- gradient check

GRADCHECK_RECORDS = (
    '{"user": "alice", "ctx": {"ip": "10 0 1", "mfa": true}, "ops": ["get", {"bucket": "logs"}]}',
    '{"user": "bob", "ctx": {"ip": "10 0 2", "mfa": false}, "region": "eu west", "ops": []}',
)


@dataclass
class GradCheckResult:
    max_rel_error: float
    probes: list[tuple[str, tuple, float, float, float]]
    structural_zeros: dict[str, float]     # excluded tensor -> max |analytic gradient|

    @property
    def groups(self) -> list[str]:
        return sorted({p[0] for p in self.probes})

    def to_dict(self) -> dict:
        return {"max_rel_error": self.max_rel_error, "probes": len(self.probes),
                "groups": self.groups, "structural_zeros": self.structural_zeros}


def gradient_check(encoder_config: EncoderConfig, *, probes: int = 50, seed: int = 0,
                   mode: str = "bidirectional", vhm_weight: float = 0.1, mask_rate: float = 0.3,
                   init_std: float = 0.3, eps: float = 1e-6) -> GradCheckResult:
    """Finite-difference check of the total loss on a fixed 2-record batch in double precision.

    Parameters are drawn with ``init_std`` rather than the training scale so
    that no gradient is small enough to drown in rounding noise. The VHM
    center is computed once and held fixed while probing.

    Two kinds of entries have an exactly zero true gradient and are left out
    of the random probes, because finite differences there return pure
    rounding noise: the key bias (softmax is invariant to a per-row shift)
    and positional rows beyond the longest window. The key-bias gradients are
    reported separately so callers can assert they vanish.
    """
    from .log_tree import parse_record, tree_text
    from .hierarchical import encode_record
    from .tokenizer import build_vocab

    trees = [parse_record(r, str(i)) for i, r in enumerate(GRADCHECK_RECORDS)]
    vocab = build_vocab([tree_text(t) for t in trees])
    cfg = replace(encoder_config, vocab_size=len(vocab), init_std=init_std, seed=seed)
    stack = EncoderStack(cfg, torch.float64)
    records = [encode_record(t, vocab, cfg) for t in trees]
    masks = [eval_mask(r.plan, mask_rate, seed, i).units for i, r in enumerate(records)]
    with torch.no_grad():
        center = summary_center(run_batch(stack, records, masks, mode).summaries)

    def loss_fn():
        out = run_batch(stack, records, masks, mode)
        return total_loss(mlm_loss(out.logits, out.targets), vhm_loss(out.summaries, center), vhm_weight)

    with measure_attention() as meter:
        loss = loss_fn()
    longest = meter.largest
    params = dict(stack.named_parameters())
    grads = torch.autograd.grad(loss, list(params.values()), allow_unused=True)
    zeros = {n: float(g.abs().max()) if g is not None else 0.0
             for (n, _), g in zip(params.items(), grads) if n.endswith("k_bias")}

    def skip(name, index):
        return name.endswith("k_bias") or (name == "pos_emb" and index[0] >= longest)

    worst, results = grad_check_probes(loss_fn, params, probes, eps, seed, skip)
    return GradCheckResult(worst, results, zeros)
