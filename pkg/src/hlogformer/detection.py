"""Synthetic anomaly detection: fake-record generation and the three detectors.

Fake records are made by mismatching key/value pairs. Detection works by
loss (MLM loss and distance to the training-set summary center), by fake
rate (share of masked tokens whose true id misses the model's top-T
candidates) and by exporting summary vectors for visualization.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .hierarchical import EncodedRecord, run_batch
from .log_tree import LogTree
from .model_core import EncoderStack
from .training import _batches, eval_mask, evaluate, hypersphere_distances

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FakeGenConfig:
    p: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError("swap probability must lie in (0, 1)")


@dataclass(frozen=True)
class DetectionConfig:
    T: int = 10
    alpha: float = 0.35
    mask_seed: int = 1234
    mask_rate: float = 0.2

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("candidate size T must be >= 1")
        if not 0 <= self.alpha <= 1:
            raise ValueError("threshold alpha must lie in [0, 1]")


# ---------------------------------------------------------------- fake generation

def _with_values(tree: LogTree, new_values: dict[int, tuple[str, str]], suffix: str) -> LogTree:
    nodes = list(tree.nodes)
    for i, (text, raw) in new_values.items():
        nodes[i] = dataclasses.replace(nodes[i], value_text=text, raw=raw)
    return LogTree(tuple(nodes), tree.root_id, tree.record_id + suffix)


def gen_fake(trees: Sequence[LogTree], cfg: FakeGenConfig = FakeGenConfig()) -> list[LogTree]:
    """Mismatch key/value pairs of every record with probability ``cfg.p`` per leaf.

    Two or more marked leaves have their values rotated one place
    (x, y, z -> z, x, y). A single marked leaf (forced when none is marked)
    takes a different value drawn from the leaves of other records. Records
    with fewer than two leaves are skipped.
    """
    rng = np.random.default_rng(cfg.seed)
    pool = [(r, leaf.value_text, leaf.raw) for r, t in enumerate(trees) for leaf in t.leaves()]
    fakes = []
    for r, tree in enumerate(trees):
        leaves = tree.leaves()
        if len(leaves) < 2:
            warnings.warn(f"record {tree.record_id!r} has fewer than two leaves; not faked", stacklevel=2)
            continue
        marked = np.flatnonzero(rng.random(len(leaves)) < cfg.p)
        if len(marked) == 0:
            marked = np.array([rng.integers(len(leaves))])
        if len(marked) >= 2:
            chosen = [leaves[i] for i in marked]
            new = {leaf.id: (prev.value_text, prev.raw)
                   for leaf, prev in zip(chosen, chosen[-1:] + chosen[:-1])}
        else:
            leaf = leaves[int(marked[0])]
            new = {leaf.id: _draw_foreign(rng, pool, r, leaf.raw)}
        fakes.append(_with_values(tree, new, "-fake"))
    return fakes


def _draw_foreign(rng, pool, record: int, original: str) -> tuple[str, str]:
    for _ in range(1000):
        src, text, raw = pool[int(rng.integers(len(pool)))]
        if src != record and raw != original:
            return text, raw
    raise ValueError("value pool has no value differing from the original")


# ---------------------------------------------------------------- detection by loss

@dataclass
class RateClassification:
    alpha: float
    real_accuracy: float
    fake_accuracy: float
    balanced_accuracy: float


@dataclass
class DetectionReport:
    real_mlm: list[float] = field(default_factory=list)
    fake_mlm: list[float] = field(default_factory=list)
    real_vhm: list[float] = field(default_factory=list)
    fake_vhm: list[float] = field(default_factory=list)
    T_values: list[int] = field(default_factory=list)
    real_rates: list[list[float]] = field(default_factory=list)   # [record][T]
    fake_rates: list[list[float]] = field(default_factory=list)
    classification: list[RateClassification] = field(default_factory=list)
    classification_T: int | None = None

    def means(self) -> dict:
        out = {}
        for name in ("real_mlm", "fake_mlm", "real_vhm", "fake_vhm"):
            vals = getattr(self, name)
            out[name] = float(np.mean(vals)) if vals else None
        for label, rates in (("real", self.real_rates), ("fake", self.fake_rates)):
            if rates:
                m = np.mean(np.asarray(rates), axis=0)
                out[f"{label}_fake_rate"] = {str(T): float(v) for T, v in zip(self.T_values, m)}
        return out

    def to_dict(self) -> dict:
        return {
            "means": self.means(),
            "T_values": self.T_values,
            "classification_T": self.classification_T,
            "classification": [dataclasses.asdict(c) for c in self.classification],
            "per_record": {
                "real": {"mlm": self.real_mlm, "vhm_distance": self.real_vhm, "fake_rate": self.real_rates},
                "fake": {"mlm": self.fake_mlm, "vhm_distance": self.fake_vhm, "fake_rate": self.fake_rates},
            },
        }


def detect_by_loss(stack: EncoderStack, mode: str, real: Sequence[EncodedRecord], fake: Sequence[EncodedRecord],
                   center: torch.Tensor | None, *, mask_seed: int = 1234, mask_rate: float = 0.2,
                   report: DetectionReport | None = None) -> DetectionReport:
    """Per-record MLM loss and distance to the persisted training-set center."""
    if center is None:
        raise ValueError("checkpoint carries no training-set center")
    report = report or DetectionReport()
    for records, mlm_attr, vhm_attr in ((real, "real_mlm", "real_vhm"), (fake, "fake_mlm", "fake_vhm")):
        ev = evaluate(stack, records, mode, mask_rate=mask_rate, mask_seed=mask_seed, center=center)
        setattr(report, mlm_attr, [float(x) for x in ev.record_mlm])
        setattr(report, vhm_attr, [float(x) for x in hypersphere_distances(ev.summaries, center)])
    return report


# ---------------------------------------------------------------- detection by fake rate

def candidate_ranks(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Rank of each true id when ids are ordered by logit, ties to the lower id."""
    true = logits.gather(1, targets.unsqueeze(1))
    ids = torch.arange(logits.shape[1]).unsqueeze(0)
    above = (logits > true).sum(dim=1)
    tied_lower = ((logits == true) & (ids < targets.unsqueeze(1))).sum(dim=1)
    return above + tied_lower


@torch.no_grad()
def fake_rates(stack: EncoderStack, mode: str, records: Sequence[EncodedRecord], T_values: Sequence[int],
               *, mask_seed: int = 1234, mask_rate: float = 0.2, batch_size: int = 64) -> np.ndarray:
    """(records x len(T_values)) share of masked tokens outside the top-T candidates."""
    V = stack.config.vocab_size
    for T in T_values:
        if not 1 <= T <= V:
            raise ValueError(f"candidate size T={T} outside [1, {V}]")
    masks = [eval_mask(r.plan, mask_rate, mask_seed, i).units for i, r in enumerate(records)]
    out = np.zeros((len(records), len(T_values)))
    for rng_ in _batches(len(records), batch_size):
        res = run_batch(stack, [records[i] for i in rng_], [masks[i] for i in rng_], mode)
        ranks = candidate_ranks(res.logits, res.targets).numpy()
        owners = res.record_index.numpy()
        for a, i in enumerate(rng_):
            r = ranks[owners == a]
            out[i] = [(r >= T).mean() for T in T_values]
    return out


def fake_rate(stack: EncoderStack, record: EncodedRecord, cfg: DetectionConfig = DetectionConfig(),
              mode: str = "bidirectional", index: int = 0) -> float:
    """Fake rate of one record; ``index`` is its position in the evaluation set (selects the mask)."""
    units = eval_mask(record.plan, cfg.mask_rate, cfg.mask_seed, index).units
    with torch.no_grad():
        res = run_batch(stack, [record], [units], mode)
    return float((candidate_ranks(res.logits, res.targets) >= cfg.T).double().mean())


def classify_by_rate(rates_real: Sequence[float], rates_fake: Sequence[float], alpha: float) -> RateClassification:
    """Predict fake when rate > alpha; report per-class and balanced accuracy."""
    if len(rates_real) == 0 or len(rates_fake) == 0:
        raise ValueError("need at least one real and one fake rate")
    if not 0 <= alpha <= 1:
        raise ValueError("threshold alpha must lie in [0, 1]")
    real_acc = float(np.mean(np.asarray(rates_real) <= alpha))
    fake_acc = float(np.mean(np.asarray(rates_fake) > alpha))
    return RateClassification(alpha, real_acc, fake_acc, (real_acc + fake_acc) / 2)


# ---------------------------------------------------------------- export

def export_summaries(path: str | Path, summaries, record_ids: Sequence[str], labels: Sequence[str]) -> None:
    S = np.asarray(summaries.detach().double() if isinstance(summaries, torch.Tensor) else summaries,
                   dtype=np.float64)
    if len(S) != len(record_ids) or len(S) != len(labels):
        raise ValueError("summaries, record ids and labels differ in length")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["record_id", "label"] + [f"dim_{j}" for j in range(S.shape[1])])
        for rid, lab, row in zip(record_ids, labels, S):
            w.writerow([rid, lab] + [repr(float(x)) for x in row])


def read_summaries(path: str | Path) -> tuple[list[str], list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    return ([r[0] for r in body], [r[1] for r in body],
            np.array([[float(x) for x in r[2:]] for r in body], dtype=np.float64).reshape(len(body), -1))


def record_summaries(stack: EncoderStack, mode: str, records: Sequence[EncodedRecord], *,
                     mask_seed: int = 1234, mask_rate: float = 0.2) -> torch.Tensor:
    return evaluate(stack, records, mode, mask_rate=mask_rate, mask_seed=mask_seed).summaries
