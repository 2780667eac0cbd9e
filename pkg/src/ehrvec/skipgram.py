"""Tied-weight Skip-gram with a full softmax, trained by Adadelta.

One matrix ``V`` (N x D) serves as both the center and the context
vectors, so ``p(o | i) = softmax_c(V[c] . V[i])[o]``.

Sign convention: every gradient in this module is the gradient of the
log-likelihood, and :func:`adadelta_step` *ascends* it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .corpus import TrainingPair, WindowConfig, epoch_pairs
from .ingest import PatientTimeline, Vocabulary

log = logging.getLogger(__name__)


def check_finite(emb: np.ndarray) -> None:
    if not np.all(np.isfinite(emb)):
        raise ValueError("embedding matrix contains non-finite entries")


def _logits(emb: np.ndarray, center: int) -> np.ndarray:
    if not 0 <= center < emb.shape[0]:
        raise IndexError(f"center index {center} out of range")
    check_finite(emb)
    z = emb @ emb[center]
    return z - z.max()


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - np.max(z))
    return e / e.sum()


def softmax_probs(emb: np.ndarray, center: int) -> np.ndarray:
    return softmax(_logits(emb, center))


def pair_log_prob(emb: np.ndarray, pair: TrainingPair) -> float:
    center, context = pair
    z = _logits(emb, center)
    return float(z[context] - np.log(np.exp(z).sum()))


def corpus_objective(emb: np.ndarray, pairs, T: int) -> float:
    """Average log probability: sum of pair log-probs divided by T positions."""
    if T <= 0:
        raise ValueError("sequence length T must be positive")
    return sum(pair_log_prob(emb, p) for p in pairs) / T


def batch_gradient(emb: np.ndarray, centers: np.ndarray, contexts: np.ndarray):
    """Summed log-likelihood gradient of a batch of pairs.

    Returns ``(grad, total_log_prob)`` where ``grad`` has the shape of ``emb``.
    Row c gets ``([c == o] - p_c) * v(i)`` from each pair; the center row
    additionally gets ``v(o) - sum_c p_c v(c)``.
    """
    B = len(centers)
    rows = np.arange(B)
    Vi = emb[centers]
    Z = Vi @ emb.T
    Z -= Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    S = E.sum(axis=1)
    total = float(np.sum(Z[rows, contexts] - np.log(S)))
    G = E
    G /= -S[:, None]
    G[rows, contexts] += 1.0
    grad = G.T @ Vi
    np.add.at(grad, centers, G @ emb)
    return grad, total


def pair_gradient(emb: np.ndarray, pair: TrainingPair) -> np.ndarray:
    """Exact gradient of ``pair_log_prob`` w.r.t. every embedding row (dense N x D)."""
    check_finite(emb)
    center, context = pair
    n = emb.shape[0]
    if not (0 <= center < n and 0 <= context < n):
        raise IndexError("pair index out of range")
    grad, _ = batch_gradient(emb, np.array([center]), np.array([context]))
    return grad


@dataclass
class AdadeltaState:
    avg_sq_grad: np.ndarray
    avg_sq_update: np.ndarray

    @classmethod
    def zeros_like(cls, params: np.ndarray) -> "AdadeltaState":
        return cls(np.zeros_like(params, dtype=np.float64), np.zeros_like(params, dtype=np.float64))


def _adadelta_dense(Eg, Edx, x, g, rho, eps):
    Eg *= rho
    Eg += (1.0 - rho) * g * g
    delta = np.sqrt(Edx + eps) / np.sqrt(Eg + eps) * g
    x += delta
    Edx *= rho
    Edx += (1.0 - rho) * delta * delta


def adadelta_step(state: AdadeltaState, grad: np.ndarray, params: np.ndarray,
                  rho: float = 0.95, eps: float = 1e-6):
    """One Adadelta ascent step, updating ``state`` and ``params`` in place.

    For 2-D parameters, rows whose gradient is entirely zero are skipped,
    accumulators included. For 1-D parameters the same applies per entry.
    """
    if grad.shape != params.shape or state.avg_sq_grad.shape != params.shape:
        raise ValueError("gradient, parameter and state shapes disagree")
    if not np.all(np.isfinite(grad)):
        raise ValueError("non-finite gradient")
    if params.ndim == 2:
        touched = np.any(grad != 0.0, axis=1)
    else:
        touched = grad != 0.0
    if touched.all():
        _adadelta_dense(state.avg_sq_grad, state.avg_sq_update, params, grad, rho, eps)
    elif touched.any():
        idx = np.flatnonzero(touched)
        Eg, Edx, x = state.avg_sq_grad[idx], state.avg_sq_update[idx], params[idx]
        _adadelta_dense(Eg, Edx, x, grad[idx], rho, eps)
        state.avg_sq_grad[idx], state.avg_sq_update[idx], params[idx] = Eg, Edx, x
    return state, params


@dataclass
class TrainConfig:
    d: int = 100
    w: int = 5
    epochs: int = 10
    batch_size: int = 100
    seed: int = 0
    rho: float = 0.95
    eps: float = 1e-6
    shuffle_pairs: bool = True

    def __post_init__(self):
        if self.d < 1 or self.w < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("d, w and batch_size must be >= 1; epochs >= 0")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


def init_embeddings(n: int, d: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(-0.5 / d, 0.5 / d, size=(n, d))


def _run_batches(emb, state, centers, contexts, cfg: TrainConfig) -> float:
    total = 0.0
    B = cfg.batch_size
    for start in range(0, len(centers), B):
        grad, ll = batch_gradient(emb, centers[start:start + B], contexts[start:start + B])
        total += ll
        adadelta_step(state, grad, emb, cfg.rho, cfg.eps)
    return total


def _shuffled(centers, contexts, cfg: TrainConfig, epoch: int):
    if not cfg.shuffle_pairs:
        return centers, contexts
    order = np.random.default_rng([cfg.seed, epoch]).permutation(len(centers))
    return centers[order], contexts[order]


def train(timelines: list[PatientTimeline], vocab: Vocabulary, cfg: TrainConfig,
          history: list | None = None) -> np.ndarray:
    """Fit concept vectors; returns the N x D embedding matrix.

    Each epoch logs ``epoch=<k> mean_ll=<float>``, the mean log-likelihood of
    the epoch's pairs as evaluated in the forward pass of their batch.
    Pair order is shuffled per epoch (seeded) unless ``shuffle_pairs`` is off.
    If ``history`` is given, the per-epoch means are appended to it.
    """
    if not timelines:
        raise ValueError("no timelines to train on")
    emb = init_embeddings(len(vocab), cfg.d, cfg.seed)
    state = AdadeltaState.zeros_like(emb)
    wcfg = WindowConfig(cfg.w, cfg.seed)
    for epoch in range(cfg.epochs):
        parts = [(c, o) for c, o, _ in epoch_pairs(timelines, epoch, wcfg) if len(c)]
        if not parts:
            raise ValueError("corpus produced no training pairs")
        centers = np.concatenate([c for c, _ in parts])
        contexts = np.concatenate([o for _, o in parts])
        centers, contexts = _shuffled(centers, contexts, cfg, epoch)
        mean_ll = _run_batches(emb, state, centers, contexts, cfg) / len(centers)
        log.info("epoch=%d mean_ll=%.6f", epoch, mean_ll)
        if history is not None:
            history.append(mean_ll)
    return emb


def fit_pairs(centers, contexts, n: int, cfg: TrainConfig) -> np.ndarray:
    """Train on a fixed pair list instead of timelines (same loop as :func:`train`)."""
    centers = np.asarray(centers, dtype=np.int64)
    contexts = np.asarray(contexts, dtype=np.int64)
    emb = init_embeddings(n, cfg.d, cfg.seed)
    state = AdadeltaState.zeros_like(emb)
    for epoch in range(cfg.epochs):
        c, o = _shuffled(centers, contexts, cfg, epoch)
        _run_batches(emb, state, c, o, cfg)
    return emb
