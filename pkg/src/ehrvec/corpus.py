"""Training sequences and Skip-gram (center, context) pairs."""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .ingest import PatientTimeline


class TrainingPair(NamedTuple):
    center: int
    context: int


@dataclass(frozen=True)
class WindowConfig:
    w: int = 5
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.w < 1:
            raise ValueError("half-window w must be >= 1")


def _visit_rng(seed: int, patient_id: str, epoch: int) -> np.random.Generator:
    # crc32 rather than hash(): str hashing is salted per process
    key = zlib.crc32(patient_id.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), key, epoch]))


def flatten_timeline(t: PatientTimeline, epoch: int, cfg: WindowConfig) -> list[int]:
    """Concatenate visits in date order, shuffling codes inside each visit.

    The within-visit permutation depends only on (seed, patient, epoch).
    """
    rng = None
    out: list[int] = []
    for _, codes in t.visits:
        if len(codes) > 1:
            if rng is None:
                rng = _visit_rng(cfg.shuffle_seed, t.patient_id, epoch)
            out.extend(codes[i] for i in rng.permutation(len(codes)))
        else:
            out.extend(codes)
    return out


def pair_arrays(seq, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised form of :func:`generate_pairs`: (centers, contexts) arrays."""
    if w < 1:
        raise ValueError("half-window w must be >= 1")
    seq = np.asarray(seq, dtype=np.int64)
    T = len(seq)
    offsets = np.concatenate([np.arange(-w, 0), np.arange(1, w + 1)])
    pos = np.arange(T)[:, None] + offsets[None, :]
    valid = (pos >= 0) & (pos < T)
    # row-major boolean indexing keeps the (t, j) ordering
    centers = np.broadcast_to(seq[:, None], pos.shape)[valid]
    contexts = seq[pos[valid]]
    return centers, contexts


def generate_pairs(seq, w: int) -> list[TrainingPair]:
    centers, contexts = pair_arrays(seq, w)
    return [TrainingPair(int(c), int(o)) for c, o in zip(centers, contexts)]


def n_pairs(T: int, w: int) -> int:
    """Closed-form pair count for a sequence of length T."""
    return sum(min(w, t) + min(w, T - 1 - t) for t in range(T))


def epoch_pairs(
    timelines: list[PatientTimeline], epoch: int, cfg: WindowConfig
) -> Iterator[tuple[np.ndarray, np.ndarray, int]]:
    """Yield (centers, contexts, T) per patient for one epoch.

    Windows never cross patients.
    """
    for t in timelines:
        seq = flatten_timeline(t, epoch, cfg)
        c, o = pair_arrays(seq, cfg.w)
        yield c, o, len(seq)
