"""Patient feature rows: summed concept vectors or one-hot code counts."""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .cohort import CohortLabel
from .ingest import PatientTimeline, Vocabulary

OBSERVATION_DAYS = 548  # 18 months
FEATURE_KINDS = ("concept_vector", "one_hot_counts")


@dataclass
class FeatureMatrix:
    rows: np.ndarray
    labels: np.ndarray
    patient_ids: list[str]
    feature_kind: str

    def __post_init__(self):
        if self.feature_kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.feature_kind!r}")
        if not (len(self.rows) == len(self.labels) == len(self.patient_ids)):
            raise ValueError("rows, labels and ids differ in length")
        if not np.all(np.isfinite(self.rows)):
            raise ValueError("feature rows contain non-finite values")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise ValueError("labels must be 0/1")

    @property
    def f(self) -> int:
        return self.rows.shape[1]


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, rows: np.ndarray) -> np.ndarray:
        return apply_standardizer(self, rows)


def observation_window(timeline: PatientTimeline, index_date: dt.date,
                       days: int = OBSERVATION_DAYS) -> list[int]:
    """Codes from visits in ``[index_date - days, index_date)``, with multiplicity."""
    start = index_date - dt.timedelta(days=days)
    return [c for date, codes in timeline.visits if start <= date < index_date for c in codes]


def patient_vector(codes, emb: np.ndarray, coverage) -> np.ndarray:
    """Sum of embedding rows for the covered codes; uncovered codes are skipped."""
    kept = [c for c in codes if c in coverage]
    if not kept:
        return np.zeros(emb.shape[1])
    return emb[kept].sum(axis=0)


def one_hot_counts(codes, n: int) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    if codes.size and (codes.min() < 0 or codes.max() >= n):
        raise IndexError("code index out of range")
    return np.bincount(codes, minlength=n).astype(np.float64)


def fit_standardizer(train_rows: np.ndarray) -> Standardizer:
    train_rows = np.asarray(train_rows, dtype=np.float64)
    if len(train_rows) == 0:
        raise ValueError("cannot fit a standardizer on zero rows")
    std = train_rows.std(axis=0)
    # constant columns can get a rounding-level std; pin them to exactly zero
    std[np.ptp(train_rows, axis=0) == 0] = 0.0
    return Standardizer(train_rows.mean(axis=0), std)


def apply_standardizer(s: Standardizer, rows: np.ndarray) -> np.ndarray:
    """``(x - mean) / std``; zero-variance features become 0."""
    rows = np.asarray(rows, dtype=np.float64)
    safe = np.where(s.std > 0, s.std, 1.0)
    out = (rows - s.mean) / safe
    out[:, s.std == 0] = 0.0
    return out


def _windows(timelines: list[PatientTimeline], cohort: list[CohortLabel]):
    by_id = {t.patient_id: t for t in timelines}
    for label in cohort:
        t = by_id.get(label.patient_id)
        codes = observation_window(t, label.index_date) if t is not None else []
        yield label, codes


def featurize_concept(timelines, cohort, vocab: Vocabulary, emb: np.ndarray,
                      emb_vocab: Vocabulary) -> FeatureMatrix:
    """Concept-vector rows; codes absent from ``emb_vocab`` are dropped."""
    # map data-vocabulary index -> embedding row
    row_of = np.array([emb_vocab.index_of.get(c, -1) for c in vocab.code_at])
    coverage = set(range(emb.shape[0]))
    rows, labels, ids = [], [], []
    for label, codes in _windows(timelines, cohort):
        rows.append(patient_vector(row_of[codes].tolist(), emb, coverage))
        labels.append(int(label.status == "case"))
        ids.append(label.patient_id)
    return FeatureMatrix(np.array(rows).reshape(len(ids), emb.shape[1]),
                         np.array(labels), ids, "concept_vector")


def featurize_one_hot(timelines, cohort, vocab: Vocabulary) -> FeatureMatrix:
    rows, labels, ids = [], [], []
    for label, codes in _windows(timelines, cohort):
        rows.append(one_hot_counts(codes, len(vocab)))
        labels.append(int(label.status == "case"))
        ids.append(label.patient_id)
    return FeatureMatrix(np.array(rows).reshape(len(ids), len(vocab)),
                         np.array(labels), ids, "one_hot_counts")


def write_features(fm: FeatureMatrix, sink: TextIO) -> None:
    for pid, label, row in zip(fm.patient_ids, fm.labels.tolist(), fm.rows.tolist()):
        sink.write(json.dumps({"patient_id": pid, "label": label, "features": row}) + "\n")


def read_features(path, feature_kind: str) -> FeatureMatrix:
    rows, labels, ids = [], [], []
    with open(path, encoding="utf-8") as f:
        for raw in f:
            if raw.strip():
                obj = json.loads(raw)
                ids.append(obj["patient_id"])
                labels.append(obj["label"])
                rows.append(obj["features"])
    return FeatureMatrix(np.array(rows, dtype=np.float64), np.array(labels), ids, feature_kind)
