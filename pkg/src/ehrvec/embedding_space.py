"""Cosine queries over concept vectors, plus the text embedding format.

File layout: a ``"<N> <D>"`` header, then N lines of
``<domain>:<code> <x1> ... <xD>`` separated by single spaces.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .ingest import ConceptCode, FormatError, Vocabulary


@dataclass(frozen=True)
class ScoredConcept:
    concept: ConceptCode
    score: float
    index: int


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("undefined cosine for zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_scores(emb: np.ndarray, query) -> np.ndarray:
    """Cosine of every row against ``query``; zero-norm rows score NaN."""
    q = np.asarray(query, dtype=np.float64)
    qn = np.linalg.norm(q)
    if qn == 0.0:
        raise ValueError("undefined cosine for zero vector")
    norms = np.linalg.norm(emb, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = (emb @ q) / (norms * qn)
    scores[norms == 0.0] = np.nan
    return np.clip(scores, -1.0, 1.0)


def nearest_neighbors(emb: np.ndarray, vocab: Vocabulary, query, k: int,
                      exclude: Iterable[int] = ()) -> list[ScoredConcept]:
    """Top-k rows by cosine to ``query``; ties go to the lower index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = cosine_scores(emb, query)
    keep = ~np.isnan(scores)
    excl = np.fromiter(exclude, dtype=np.int64)
    keep[excl[(excl >= 0) & (excl < len(keep))]] = False
    idx = np.flatnonzero(keep)
    # lexsort: last key is primary
    order = idx[np.lexsort((idx, -scores[idx]))][:k]
    return [ScoredConcept(vocab.code_at[i], float(scores[i]), int(i)) for i in order]


def additive_query(emb: np.ndarray, vocab: Vocabulary, plus: list[ConceptCode],
                   minus: list[ConceptCode], k: int) -> list[ScoredConcept]:
    """Neighbors of ``sum(plus) - sum(minus)``, excluding the input concepts."""
    used = []
    q = np.zeros(emb.shape[1])
    for sign, group in ((1.0, plus), (-1.0, minus)):
        for concept in group:
            if concept not in vocab:
                raise KeyError(f"unknown concept {concept}")
            i = vocab.index_of[concept]
            used.append(i)
            q += sign * emb[i]
    if not np.any(q):
        raise ValueError("query vector is zero")
    return nearest_neighbors(emb, vocab, q, k, exclude=used)


def _fmt(x: float) -> str:
    s = f"{x:.9g}"
    if not any(ch in s for ch in ".ein"):
        s += ".0"
    return s


def export_embeddings(emb: np.ndarray, vocab: Vocabulary, sink: TextIO) -> None:
    if emb.ndim != 2 or emb.shape[0] != len(vocab):
        raise ValueError("embedding rows do not match vocabulary size")
    if not np.all(np.isfinite(emb)):
        raise ValueError("embedding matrix contains non-finite entries")
    for c in vocab.code_at:
        if " " in c.code or "\n" in c.code:
            raise ValueError(f"code {c.code!r} contains whitespace")
    n, d = emb.shape
    sink.write(f"{n} {d}\n")
    for concept, row in zip(vocab.code_at, emb):
        sink.write(str(concept) + " " + " ".join(_fmt(x) for x in row.tolist()) + "\n")


def import_embeddings(source: Iterable[str]) -> tuple[np.ndarray, Vocabulary]:
    """Parse the text format; vocabulary frequencies are set to 1."""
    it = iter(source)
    header = next(it, None)
    if header is None:
        raise FormatError("missing header", 1)
    parts = header.split()
    try:
        n, d = (int(p) for p in parts)
    except ValueError:
        raise FormatError("header must be '<N> <D>'", 1) from None
    if n < 1 or d < 1:
        raise FormatError("header counts must be positive", 1)
    emb = np.empty((n, d))
    codes: list[ConceptCode] = []
    seen: set[ConceptCode] = set()
    row = 0
    for lineno, line in enumerate(it, start=2):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        if row >= n:
            raise FormatError(f"more rows than the declared {n}", lineno)
        tokens = line.split(" ")
        if len(tokens) != d + 1:
            raise FormatError(f"expected {d} values", lineno)
        try:
            concept = ConceptCode.parse(tokens[0])
        except ValueError as exc:
            raise FormatError(str(exc), lineno) from None
        if concept in seen:
            raise FormatError(f"duplicate code {concept}", lineno)
        seen.add(concept)
        try:
            emb[row] = [float(t) for t in tokens[1:]]
        except ValueError:
            raise FormatError("non-numeric token", lineno) from None
        if not np.all(np.isfinite(emb[row])):
            raise FormatError("non-finite value", lineno)
        codes.append(concept)
        row += 1
    if row != n:
        raise FormatError(f"header declares {n} rows but found {row}")
    return emb, Vocabulary(codes, [1] * n)


def save_embeddings(path, emb: np.ndarray, vocab: Vocabulary) -> None:
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as f:
            export_embeddings(emb, vocab, f)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    os.replace(tmp, path)


def load_embeddings(path) -> tuple[np.ndarray, Vocabulary]:
    with open(path, encoding="utf-8") as f:
        return import_embeddings(f)
