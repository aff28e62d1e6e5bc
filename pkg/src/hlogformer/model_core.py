"""Numeric kernels, the shared transformer encoder, AdamW and a gradient checker.

Tensors are torch tensors; autograd supplies analytic gradients and
:func:`grad_check` verifies them against central finite differences.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Mapping

import numpy as np
import torch
from torch import nn

from .tokenizer import SUM


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 128
    n_blocks: int = 1
    max_window: int = 128
    summary_slots: int = 10
    seed: int = 0
    init_std: float = 0.02

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.summary_slots < 1:
            raise ValueError("summary_slots must be >= 1")
        if self.max_window < 2 * self.summary_slots + 4:
            raise ValueError("max_window must be >= 2 * summary_slots + 4")
        if self.vocab_size <= SUM:
            raise ValueError("vocab_size must include the special tokens")

    @property
    def max_segment_len(self) -> int:
        return self.max_window - 2 * self.summary_slots

    def to_dict(self) -> dict:
        return asdict(self)


def count_params(config: EncoderConfig) -> int:
    V, d, f = config.vocab_size, config.d_model, config.d_ff
    W, k, B = config.max_window, config.summary_slots, config.n_blocks
    return V * d + W * d + k * d + B * block_params(d, f)


def block_params(d: int, f: int) -> int:
    """Parameters of one encoder block: Q/K/V/O projections, FFN, two layer norms."""
    return 4 * (d * d + d) + (d * f + f) + (f * d + d) + 2 * 2 * d


# ---------------------------------------------------------------- kernels

def softmax_rows(x: torch.Tensor) -> torch.Tensor:
    x = x - x.amax(dim=-1, keepdim=True)
    e = torch.exp(x)
    return e / e.sum(dim=-1, keepdim=True)


def layer_norm(x: torch.Tensor, scale: torch.Tensor, shift: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    mean = x.mean(dim=-1, keepdim=True)
    centered = x - mean
    var = (centered * centered).mean(dim=-1, keepdim=True)
    return centered / torch.sqrt(var + eps) * scale + shift


def gelu(x: torch.Tensor) -> torch.Tensor:
    return 0.5 * x * (1.0 + torch.erf(x / math.sqrt(2.0)))


def cross_entropy(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean negative log-likelihood of ``targets`` under row-wise softmax of ``logits``."""
    V = logits.shape[-1]
    targets = torch.as_tensor(targets, dtype=torch.long)
    if targets.numel() and int(targets.max()) >= V:
        raise ValueError(f"target id {int(targets.max())} >= vocabulary size {V}")
    if logits.shape[0] == 0:
        raise ValueError("cross_entropy needs at least one row")
    return token_nll(logits, targets).mean()


def token_nll(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    m = logits.amax(dim=-1, keepdim=True)
    lse = (m + torch.log(torch.exp(logits - m).sum(dim=-1, keepdim=True))).squeeze(-1)
    return lse - logits.gather(-1, targets.unsqueeze(-1)).squeeze(-1)


# ---------------------------------------------------------------- encoder

class Block(nn.Module):
    def __init__(self, d: int, f: int):
        super().__init__()
        self.ln1_scale = nn.Parameter(torch.ones(d))
        self.ln1_shift = nn.Parameter(torch.zeros(d))
        self.q_weight = nn.Parameter(torch.empty(d, d))
        self.q_bias = nn.Parameter(torch.zeros(d))
        self.k_weight = nn.Parameter(torch.empty(d, d))
        self.k_bias = nn.Parameter(torch.zeros(d))
        self.v_weight = nn.Parameter(torch.empty(d, d))
        self.v_bias = nn.Parameter(torch.zeros(d))
        self.o_weight = nn.Parameter(torch.empty(d, d))
        self.o_bias = nn.Parameter(torch.zeros(d))
        self.ln2_scale = nn.Parameter(torch.ones(d))
        self.ln2_shift = nn.Parameter(torch.zeros(d))
        self.ff1_weight = nn.Parameter(torch.empty(d, f))
        self.ff1_bias = nn.Parameter(torch.zeros(f))
        self.ff2_weight = nn.Parameter(torch.empty(f, d))
        self.ff2_bias = nn.Parameter(torch.zeros(d))


class EncoderStack(nn.Module):
    """Token/position embeddings, learned initial summary and ``n_blocks`` pre-norm blocks.

    The output head is tied to ``token_emb``. Weight matrices are stored
    ``(in, out)`` so projections read ``x @ W + b``.
    """

    def __init__(self, config: EncoderConfig, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.config = config
        V, d, W, k = config.vocab_size, config.d_model, config.max_window, config.summary_slots
        self.token_emb = nn.Parameter(torch.empty(V, d))
        self.pos_emb = nn.Parameter(torch.empty(W, d))
        self.sigma_init = nn.Parameter(torch.empty(k, d))
        self.blocks = nn.ModuleList(Block(d, config.d_ff) for _ in range(config.n_blocks))
        self.reset_parameters()
        self.to(dtype)

    def reset_parameters(self) -> None:
        gen = torch.Generator().manual_seed(self.config.seed)
        std = self.config.init_std
        with torch.no_grad():
            for name, p in self.named_parameters():
                leaf = name.rsplit(".", 1)[-1]
                if leaf.endswith("_scale"):
                    p.fill_(1.0)
                elif leaf.endswith(("_bias", "_shift")):
                    p.zero_()
                else:
                    p.copy_(torch.randn(p.shape, generator=gen, dtype=torch.float64) * std)

    @property
    def dtype(self) -> torch.dtype:
        return self.token_emb.dtype

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def block_parameters(self) -> int:
        return sum(p.numel() for p in self.blocks.parameters())


class AttentionMeter:
    """Records the real (unpadded) window length of every encoded sequence."""

    def __init__(self):
        self.windows: list[int] = []

    @property
    def cost(self) -> int:
        return sum(w * w for w in self.windows)

    @property
    def largest(self) -> int:
        return max(self.windows, default=0)


_meters: list[AttentionMeter] = []


@contextmanager
def measure_attention():
    meter = AttentionMeter()
    _meters.append(meter)
    try:
        yield meter
    finally:
        _meters.remove(meter)


def _attention(block: Block, x: torch.Tensor, allowed: torch.Tensor, n_heads: int) -> torch.Tensor:
    N, n, d = x.shape
    dh = d // n_heads

    def heads(t):
        return t.view(N, n, n_heads, dh).transpose(1, 2)

    q = heads(x @ block.q_weight + block.q_bias)
    k = heads(x @ block.k_weight + block.k_bias)
    v = heads(x @ block.v_weight + block.v_bias)
    scores = (q @ k.transpose(-1, -2)) / math.sqrt(dh)
    scores = scores.masked_fill(~allowed.unsqueeze(1), float("-inf"))
    out = softmax_rows(scores) @ v
    out = out.transpose(1, 2).reshape(N, n, d)
    return out @ block.o_weight + block.o_bias


def encode(stack: EncoderStack, inputs: torch.Tensor, attention_mask: torch.Tensor | None = None) -> torch.Tensor:
    """Run the blocks over ``inputs`` of shape (n, d) or (N, n, d).

    ``attention_mask`` is True at real positions. Real positions never attend
    to padding; padded positions attend only to themselves and their outputs
    are meaningless.
    """
    squeeze = inputs.dim() == 2
    x = inputs.unsqueeze(0) if squeeze else inputs
    N, n, _ = x.shape
    if n > stack.config.max_window:
        raise ValueError(f"window of {n} positions exceeds max_window={stack.config.max_window}")
    if attention_mask is None:
        mask = torch.ones(N, n, dtype=torch.bool)
    else:
        mask = attention_mask.unsqueeze(0) if squeeze else attention_mask
    for meter in _meters:
        meter.windows.extend(int(m) for m in mask.sum(dim=1))
    allowed = (mask.unsqueeze(2) & mask.unsqueeze(1)) | torch.eye(n, dtype=torch.bool)

    h = x
    for blk in stack.blocks:
        a = layer_norm(h, blk.ln1_scale, blk.ln1_shift)
        h = h + _attention(blk, a, allowed, stack.config.n_heads)
        f = layer_norm(h, blk.ln2_scale, blk.ln2_shift)
        h = h + gelu(f @ blk.ff1_weight + blk.ff1_bias) @ blk.ff2_weight + blk.ff2_bias
    return h.squeeze(0) if squeeze else h


def output_logits(stack: EncoderStack, hidden: torch.Tensor) -> torch.Tensor:
    return hidden @ stack.token_emb.t()


# ---------------------------------------------------------------- optimizer

class NonFiniteGradient(FloatingPointError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient for parameter {name!r}")
        self.name = name


class AdamW:
    """Bias-corrected Adam; decoupled weight decay is applied after the adaptive step."""

    def __init__(self, params: Iterable[tuple[str, torch.Tensor]], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {n: torch.zeros_like(p) for n, p in self.params.items()}
        self.v = {n: torch.zeros_like(p) for n, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    @torch.no_grad()
    def step(self, grads: Mapping[str, torch.Tensor] | None = None) -> None:
        if grads is None:
            grads = {n: p.grad for n, p in self.params.items() if p.grad is not None}
        for name, g in grads.items():
            if not torch.isfinite(g).all():
                raise NonFiniteGradient(name)
        self.t += 1
        bc1 = 1 - self.beta1 ** self.t
        bc2 = 1 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                g = torch.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m.mul_(self.beta1).add_(g, alpha=1 - self.beta1)
            v.mul_(self.beta2).addcmul_(g, g, value=1 - self.beta2)
            p.sub_(self.lr * (m / bc1) / (torch.sqrt(v / bc2) + self.eps))
            if self.weight_decay:
                p.mul_(1 - self.lr * self.weight_decay)


def adam_step(stack: nn.Module, grads: Mapping[str, torch.Tensor], optimizer: AdamW) -> nn.Module:
    optimizer.step(grads)
    return stack


# ---------------------------------------------------------------- gradient check

def grad_check(loss_fn: Callable[[], torch.Tensor], params: Mapping[str, torch.Tensor],
               probes: int = 50, eps: float = 1e-6, seed: int = 0,
               skip: Callable[[str, tuple], bool] | None = None) -> float:
    """Max relative error between autograd and central differences on random entries.

    Every tensor in ``params`` is probed at least once (when ``probes`` allows);
    ``skip(name, index)`` excludes known non-differentiable points such as a
    ReLU input sitting exactly at zero.
    """
    return grad_check_probes(loss_fn, params, probes, eps, seed, skip)[0]


def grad_check_probes(loss_fn, params, probes=50, eps=1e-6, seed=0, skip=None):
    """As :func:`grad_check`, also returning ``[(name, index, analytic, numeric, rel_err)]``."""
    names = list(params)
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    grads = torch.autograd.grad(loss, [params[n] for n in names], allow_unused=True)
    analytic = {n: (g if g is not None else torch.zeros_like(params[n])) for n, g in zip(names, grads)}

    rng = np.random.default_rng(seed)

    def draw(name):
        for _ in range(100):
            index = tuple(int(rng.integers(s)) for s in params[name].shape)
            if skip is None or not skip(name, index):
                return index
        return None

    chosen: list[tuple[str, tuple]] = []
    for name in names[:probes]:
        index = draw(name)
        if index is not None:
            chosen.append((name, index))
    eligible = sorted({n for n, _ in chosen}, key=names.index)
    while len(chosen) < probes and eligible:
        name = eligible[int(rng.integers(len(eligible)))]
        index = draw(name)
        if index is not None:
            chosen.append((name, index))

    results = []
    with torch.no_grad():
        for name, index in chosen:
            p = params[name]
            orig = p[index].item()
            p[index] = orig + eps
            up = loss_fn().item()
            p[index] = orig - eps
            down = loss_fn().item()
            p[index] = orig
            numeric = (up - down) / (2 * eps)
            a = analytic[name][index].item()
            results.append((name, index, a, numeric, abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)))
    return max((r[4] for r in results), default=0.0), results
