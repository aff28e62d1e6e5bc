"""Evaluators that consume learned record embeddings: PCA, linear probing, recommendation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import torch

from .model_core import AdamW, cross_entropy


@dataclass
class PCAResult:
    coords: np.ndarray
    components: np.ndarray            # (out_dims, d), rows are unit eigenvectors
    explained_variance_ratio: np.ndarray


def pca_project(vectors, out_dims: int = 2, tol: float = 1e-10) -> PCAResult:
    """Project onto the top covariance eigenvectors.

    Each eigenvector is signed so its first non-negligible component is
    positive. Directions with (numerically) zero variance get zero coordinates.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or len(X) < out_dims + 1:
        raise ValueError(f"need at least {out_dims + 1} vectors of shape (n, d)")
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / (len(X) - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = np.clip(evals[order], 0.0, None), evecs[:, order]
    total = evals.sum()
    k = min(out_dims, X.shape[1])
    comps = np.zeros((out_dims, X.shape[1]))
    rank = int((evals > tol * max(total, 1e-300)).sum())
    if rank < out_dims:
        warnings.warn(f"data has rank {rank} < {out_dims}; trailing coordinates set to 0", stacklevel=2)
    for j in range(min(k, rank)):
        v = evecs[:, j]
        lead = np.flatnonzero(np.abs(v) > 1e-12)
        if len(lead) and v[lead[0]] < 0:
            v = -v
        comps[j] = v
    ratio = np.zeros(out_dims)
    if total > 0:
        ratio[:k] = evals[:k] / total
        ratio[rank:] = 0.0
    return PCAResult(Xc @ comps.T, comps, ratio)


@dataclass
class ClassificationResult:
    test_accuracy: float
    train_accuracy: float
    n_classes: int


def classify_supervised(embeddings, labels: Sequence, splits: tuple[Sequence[int], Sequence[int], Sequence[int]],
                        *, epochs: int = 300, lr: float = 0.05, weight_decay: float = 1e-3,
                        seed: int = 0) -> ClassificationResult:
    """Train a linear softmax head on frozen embeddings and report test accuracy.

    ``splits`` holds (train, val, test) index lists; the validation split is
    not used for model selection by this fixed-epoch probe but must be disjoint.
    """
    X = np.asarray(embeddings, dtype=np.float64)
    classes, y = np.unique(np.asarray(labels), return_inverse=True)
    train_idx, _, test_idx = (np.asarray(s, dtype=int) for s in splits)
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    if len(np.unique(y[train_idx])) < 2:
        raise ValueError("training split contains a single class")
    mu = X[train_idx].mean(axis=0)
    sd = X[train_idx].std(axis=0) + 1e-8
    Xs = torch.tensor((X - mu) / sd)
    yt = torch.tensor(y, dtype=torch.long)

    gen = torch.Generator().manual_seed(seed)
    W = torch.nn.Parameter(torch.randn(X.shape[1], len(classes), generator=gen, dtype=torch.float64) * 0.01)
    b = torch.nn.Parameter(torch.zeros(len(classes), dtype=torch.float64))
    opt = AdamW([("weight", W), ("bias", b)], lr=lr, weight_decay=weight_decay)
    tr = torch.as_tensor(train_idx)
    for _ in range(epochs):
        opt.zero_grad()
        loss = cross_entropy(Xs[tr] @ W + b, yt[tr])
        loss.backward()
        opt.step()
    with torch.no_grad():
        pred = (Xs @ W + b).argmax(dim=1).numpy()
    return ClassificationResult(float((pred[test_idx] == y[test_idx]).mean()),
                                float((pred[train_idx] == y[train_idx]).mean()), len(classes))


def _cosine(users: np.ndarray, items: np.ndarray) -> np.ndarray:
    un = np.linalg.norm(users)
    inorm = np.linalg.norm(items, axis=1)
    denom = un * inorm
    dots = items @ users
    return np.where(denom > 0, dots / np.where(denom > 0, denom, 1.0), 0.0)


def recommend_eval(item_embeddings, histories: Sequence[Sequence[int]], ks: Sequence[int] = (1, 3, 5, 8, 10),
                   *, n_pos: int = 10, n_neg: int = 10, seed: int = 0) -> dict[int, float]:
    """Average precision@K for held-out last purchases against random negatives.

    The user embedding is the mean embedding of every purchase except the last
    ``n_pos``; those are the positives. Negatives are items the user never
    bought. Items are ranked by cosine similarity, ties broken by lower item id.
    """
    E = np.asarray(item_embeddings, dtype=np.float64)
    rng = np.random.default_rng(seed)
    n_items = len(E)
    totals = {k: 0.0 for k in ks}
    for h in histories:
        h = list(h)
        if len(h) <= n_pos:
            raise ValueError(f"history of {len(h)} purchases cannot hold out {n_pos} positives")
        bought = set(h)
        candidates = np.array([i for i in range(n_items) if i not in bought])
        if len(candidates) < n_neg:
            raise ValueError("not enough unpurchased items to sample negatives")
        pos = h[-n_pos:]
        neg = rng.choice(candidates, size=n_neg, replace=False).tolist()
        user = E[h[:-n_pos]].mean(axis=0)
        items = np.array(pos + neg)
        scores = _cosine(user, E[items])
        order = np.lexsort((items, -scores))
        hit = np.concatenate([np.ones(n_pos), np.zeros(n_neg)])[order]
        for k in ks:
            totals[k] += hit[:k].sum() / k
    return {k: totals[k] / len(histories) for k in ks}


def classify_tasks(embeddings, tasks: Mapping[str, Sequence], splits, **kw) -> dict[str, float]:
    return {name: classify_supervised(embeddings, labels, splits, **kw).test_accuracy
            for name, labels in tasks.items()}
