"""The summary-vector recurrence over a segment plan.

Each step encodes the window ``[sigma_prev (k dense slots)] ++ [segment
tokens] ++ [k SUM placeholders]`` with the shared encoder stack. The hidden
states at the trailing placeholders become the next summary, those at the
segment positions are the step's token representations. A forward pass walks
the plan children-before-parent; the bidirectional mode then walks it back
starting from the forward pass's final summary.

:func:`run_batch` executes many records in lockstep (step ``t`` of every
record in one encoder call) and is what training uses. The single-record
functions (:func:`step`, :func:`forward_pass`, :func:`reverse_pass`,
:func:`run_record`) are the direct reading of the recurrence and serve as the
reference the batched path is tested against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import torch

from .log_tree import NO_UNIT, LogTree, SegmentPlan, build_segments, linearize_units
from .model_core import EncoderConfig, EncoderStack, encode, output_logits
from .tokenizer import MASK, PAD, SUM, Vocab

MODES = ("bidirectional", "forward_only", "no_summary", "flat")


@dataclass(frozen=True)
class EncodedRecord:
    record_id: str
    plan: SegmentPlan
    flat_ids: tuple[int, ...]
    flat_units: tuple[int, ...]

    @cached_property
    def flat_positions(self) -> dict[int, int]:
        return {u: i for i, u in enumerate(self.flat_units) if u != NO_UNIT}

    @property
    def content_ids(self) -> tuple[int, ...]:
        return self.plan.content_ids


def encode_record(tree: LogTree, vocab: Vocab, config: EncoderConfig) -> EncodedRecord:
    plan = build_segments(tree, vocab, config.max_segment_len)
    flat_ids, flat_units = linearize_units(tree, vocab)
    return EncodedRecord(tree.record_id, plan, tuple(flat_ids), tuple(flat_units))


class StepOutput(NamedTuple):
    Z: torch.Tensor
    sigma_next: torch.Tensor


@dataclass
class RecordOutputs:
    logits: torch.Tensor
    targets: torch.Tensor
    record_summary: torch.Tensor
    Z: list[torch.Tensor] = field(default_factory=list)
    forward_final: torch.Tensor | None = None
    reverse_final: torch.Tensor | None = None


@dataclass
class BatchOutputs:
    logits: torch.Tensor          # (m, V) at masked positions, record-major, MaskPlan order
    targets: torch.Tensor         # (m,)
    record_index: torch.Tensor    # (m,) record of each row
    summaries: torch.Tensor       # (N, d)


# ---------------------------------------------------------------- one step

def init_summary(stack: EncoderStack) -> torch.Tensor:
    return stack.sigma_init


def _step_batch(stack: EncoderStack, sigma: torch.Tensor, seqs: Sequence[Sequence[int]]):
    """Encode one step for A records at once.

    Returns (hidden (A, w, d), sigma_next (A, k, d), lengths (A,)). Padding
    sits after the SUM placeholders so each row's real positions are laid
    out exactly as in a single-record call.
    """
    k = stack.config.summary_slots
    A = len(seqs)
    lengths = torch.tensor([len(s) for s in seqs], dtype=torch.long)
    n_max = int(lengths.max())
    ids = torch.full((A, n_max), PAD, dtype=torch.long)
    for r, s in enumerate(seqs):
        ids[r, :len(s)] = torch.as_tensor(s, dtype=torch.long)
    d = stack.token_emb.shape[1]
    sums = stack.token_emb[SUM].expand(A, k, d)
    src = torch.cat([sigma, stack.token_emb[ids], sums], dim=1)

    w = 2 * k + n_max
    p = torch.arange(w).unsqueeze(0)
    n = lengths.unsqueeze(1)
    src_idx = torch.where(p < k + n, p, torch.where(p < 2 * k + n, p - n + n_max, p - k))
    x = src.gather(1, src_idx.unsqueeze(-1).expand(A, w, d)) + stack.pos_emb[:w]
    mask = p < 2 * k + n
    hidden = encode(stack, x, mask)
    sum_pos = k + n + torch.arange(k).unsqueeze(0)
    sigma_next = hidden.gather(1, sum_pos.unsqueeze(-1).expand(A, k, d))
    return hidden, sigma_next, lengths


def step(stack: EncoderStack, sigma_prev: torch.Tensor, segment) -> StepOutput:
    """One application of the encoder to ``[sigma_prev, segment tokens, SUM x k]``."""
    ids = segment.token_ids if hasattr(segment, "token_ids") else segment
    k = stack.config.summary_slots
    hidden, sigma_next, _ = _step_batch(stack, sigma_prev.unsqueeze(0), [list(ids)])
    return StepOutput(hidden[0, k:k + len(ids)], sigma_next[0])


def _masked_steps(plan: SegmentPlan, masked: Sequence[int] = ()) -> list[list[int]]:
    mset = set(masked)
    return [[MASK if u in mset else tok for tok, u in zip(seg.token_ids, seg.units)]
            for seg in plan.steps]


def forward_pass(stack: EncoderStack, plan: SegmentPlan, *, no_summary: bool = False,
                 token_ids: Sequence[Sequence[int]] | None = None):
    """Chain sigma through the steps low-level to high-level. Returns (Z list, final sigma)."""
    seqs = token_ids if token_ids is not None else [s.token_ids for s in plan.steps]
    sigma0 = init_summary(stack)
    sigma = sigma0
    Z = []
    for ids in seqs:
        out = step(stack, sigma0 if no_summary else sigma, ids)
        Z.append(out.Z)
        sigma = out.sigma_next
    return Z, sigma


def reverse_pass(stack: EncoderStack, plan: SegmentPlan, sigma_start: torch.Tensor, *,
                 token_ids: Sequence[Sequence[int]] | None = None):
    """Same mechanics high-level to low-level. Z is returned in plan order."""
    seqs = token_ids if token_ids is not None else [s.token_ids for s in plan.steps]
    sigma = sigma_start
    Z: list = [None] * len(seqs)
    for t in reversed(range(len(seqs))):
        out = step(stack, sigma, seqs[t])
        Z[t] = out.Z
        sigma = out.sigma_next
    return Z, sigma


def run_record(stack: EncoderStack, record: EncodedRecord, masked_units: Sequence[int] = (),
               mode: str = "bidirectional", z_source: str = "reverse") -> RecordOutputs:
    """Reference single-record execution; ``masked_units`` are content units."""
    _check_mode(mode)
    masked_units = list(masked_units)
    targets = torch.tensor([record.content_ids[u] for u in masked_units], dtype=torch.long)
    if mode == "flat":
        hidden = _flat_hidden(stack, record, masked_units)
        pos = [record.flat_positions[u] for u in masked_units]
        rows = hidden[pos] if pos else hidden[:0]
        return RecordOutputs(output_logits(stack, rows), targets, hidden.mean(dim=0))

    seqs = _masked_steps(record.plan, masked_units)
    Zf, sf = forward_pass(stack, record.plan, no_summary=(mode == "no_summary"), token_ids=seqs)
    Z, final, sr = Zf, sf, None
    if mode == "bidirectional":
        Zr, sr = reverse_pass(stack, record.plan, sf, token_ids=seqs)
        final = sr
        if z_source == "reverse":
            Z = Zr
    coords = record.plan.unit_coords
    rows = [Z[coords[u][0]][coords[u][1]] for u in masked_units]
    hid = torch.stack(rows) if rows else stack.token_emb.new_zeros(0, stack.token_emb.shape[1])
    return RecordOutputs(output_logits(stack, hid), targets, final.mean(dim=0), Z, sf, sr)


def _flat_windows(stack: EncoderStack, ids: Sequence[int]) -> list[list[int]]:
    W = stack.config.max_window
    return [list(ids[i:i + W]) for i in range(0, len(ids), W)]


def _flat_hidden(stack: EncoderStack, record: EncodedRecord, masked_units: Sequence[int]) -> torch.Tensor:
    ids = list(record.flat_ids)
    for u in masked_units:
        ids[record.flat_positions[u]] = MASK
    parts = []
    for win in _flat_windows(stack, ids):
        x = stack.token_emb[torch.tensor(win)] + stack.pos_emb[:len(win)]
        parts.append(encode(stack, x))
    return torch.cat(parts)


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


# ---------------------------------------------------------------- batched

def run_batch(stack: EncoderStack, records: Sequence[EncodedRecord], masks: Sequence[Sequence[int]],
              mode: str = "bidirectional", z_source: str = "reverse") -> BatchOutputs:
    """Run many records at once; ``masks[r]`` lists the masked content units of record r."""
    _check_mode(mode)
    targets, owner = [], []
    for r, rec in enumerate(records):
        targets.extend(rec.content_ids[u] for u in masks[r])
        owner.extend([r] * len(masks[r]))
    targets_t = torch.tensor(targets, dtype=torch.long)
    owner_t = torch.tensor(owner, dtype=torch.long)
    if mode == "flat":
        rows, summaries = _flat_batch(stack, records, masks)
    else:
        rows, summaries = _hier_batch(stack, records, masks, mode, z_source)
    return BatchOutputs(output_logits(stack, rows), targets_t, owner_t, summaries)


def _hier_batch(stack, records, masks, mode, z_source):
    k = stack.config.summary_slots
    d = stack.token_emb.shape[1]
    N = len(records)
    seqs = [_masked_steps(rec.plan, masks[r]) for r, rec in enumerate(records)]
    # masked offsets per (record, step), in MaskPlan order
    wanted: list[dict[int, list[tuple[int, int]]]] = []
    for r, rec in enumerate(records):
        per_step: dict[int, list[tuple[int, int]]] = {}
        for j, u in enumerate(masks[r]):
            t, off = rec.plan.unit_coords[u]
            per_step.setdefault(t, []).append((off, j))
        wanted.append(per_step)

    sigma_init = stack.sigma_init.unsqueeze(0).expand(N, k, d)
    passes = ["forward"] if mode != "bidirectional" else ["forward", "reverse"]
    collect_in = "reverse" if mode == "bidirectional" and z_source == "reverse" else "forward"
    sigma = sigma_init
    gathered, keys = [], []
    T_max = max(len(s) for s in seqs)
    for direction in passes:
        for t in range(T_max):
            active = [r for r in range(N) if len(seqs[r]) > t]
            seg_of = {r: (t if direction == "forward" else len(seqs[r]) - 1 - t) for r in active}
            idx = torch.tensor(active, dtype=torch.long)
            source = sigma_init if mode == "no_summary" else sigma
            hidden, sig_next, _ = _step_batch(stack, source.index_select(0, idx),
                                              [seqs[r][seg_of[r]] for r in active])
            sigma = sigma.index_copy(0, idx, sig_next)
            if direction != collect_in:
                continue
            rows, cols = [], []
            for a, r in enumerate(active):
                for off, j in wanted[r].get(seg_of[r], ()):
                    rows.append(a)
                    cols.append(k + off)
                    keys.append((r, j))
            if rows:
                gathered.append(hidden[torch.tensor(rows), torch.tensor(cols)])
    summaries = sigma.mean(dim=1)
    return _in_mask_order(gathered, keys, d, stack), summaries


def _in_mask_order(gathered, keys, d, stack):
    if not gathered:
        return stack.token_emb.new_zeros(0, d)
    rows = torch.cat(gathered)
    order = sorted(range(len(keys)), key=keys.__getitem__)
    return rows.index_select(0, torch.tensor(order, dtype=torch.long))


def _flat_batch(stack, records, masks):
    d = stack.token_emb.shape[1]
    N = len(records)
    windows, owner = [], []
    wanted_rows, wanted_cols = [], []
    for r, rec in enumerate(records):
        ids = list(rec.flat_ids)
        for u in masks[r]:
            ids[rec.flat_positions[u]] = MASK
        W = stack.config.max_window
        base = len(windows)
        windows.extend(_flat_windows(stack, ids))
        owner.extend([r] * (len(windows) - base))
        for u in masks[r]:
            pos = rec.flat_positions[u]
            wanted_rows.append(base + pos // W)
            wanted_cols.append(pos % W)
    lengths = torch.tensor([len(w) for w in windows], dtype=torch.long)
    n_max = int(lengths.max())
    ids_t = torch.full((len(windows), n_max), PAD, dtype=torch.long)
    for i, w in enumerate(windows):
        ids_t[i, :len(w)] = torch.as_tensor(w, dtype=torch.long)
    mask = torch.arange(n_max).unsqueeze(0) < lengths.unsqueeze(1)
    x = stack.token_emb[ids_t] + stack.pos_emb[:n_max]
    hidden = encode(stack, x, mask)

    pooled = (hidden * mask.unsqueeze(-1).to(hidden.dtype)).sum(dim=1)
    owner_t = torch.tensor(owner, dtype=torch.long)
    totals = hidden.new_zeros(N, d).index_add(0, owner_t, pooled)
    counts = torch.zeros(N, dtype=hidden.dtype).index_add(0, owner_t, lengths.to(hidden.dtype))
    summaries = totals / counts.unsqueeze(1)
    rows = hidden[torch.tensor(wanted_rows, dtype=torch.long), torch.tensor(wanted_cols, dtype=torch.long)] \
        if wanted_rows else hidden.new_zeros(0, d)
    # flat rows are already record-major in mask order
    return rows, summaries
