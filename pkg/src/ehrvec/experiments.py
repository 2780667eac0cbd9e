"""End-to-end runs on synthetic data, shared by scripts/ and the acceptance tests."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .cohort import build_cohort
from .features import featurize_concept, featurize_one_hot
from .ingest import build_timelines, build_vocabulary
from .predict import KINDS, EvalReport, default_spec, run_experiment
from .skipgram import TrainConfig, train
from .synthgen import SynthConfig, generate


@dataclass
class ClusterRecovery:
    intra_cosine: float
    inter_cosine: float
    nn_same_cluster: float
    epoch_mean_ll: list[float]
    train_seconds: float

    @property
    def gap(self) -> float:
        return self.intra_cosine - self.inter_cosine


def cluster_scores(emb: np.ndarray, vocab, code_clusters: dict[str, int]) -> tuple[float, float, float]:
    """Mean intra/inter-cluster cosine over planted codes, and nearest-neighbor agreement.

    The nearest neighbor is searched over the whole vocabulary, so an HF code
    or an unplanted code as neighbor counts as a miss.
    """
    unit = emb / np.linalg.norm(emb, axis=1, keepdims=True)
    labels = np.array([code_clusters.get(str(c), -1) for c in vocab.code_at])
    planted = np.flatnonzero(labels >= 0)
    sims = unit @ unit.T
    sub = sims[np.ix_(planted, planted)]
    same = labels[planted][:, None] == labels[planted][None, :]
    off_diag = ~np.eye(len(planted), dtype=bool)
    intra = float(sub[same & off_diag].mean())
    inter = float(sub[~same].mean())
    np.fill_diagonal(sims, -np.inf)
    nn = np.argmax(sims[planted], axis=1)
    hit = float(np.mean(labels[nn] == labels[planted]))
    return intra, inter, hit


def cluster_recovery(synth: SynthConfig | None = None, cfg: TrainConfig | None = None) -> ClusterRecovery:
    synth = synth or SynthConfig()
    cfg = cfg or TrainConfig()
    _, events, truth = generate(synth)
    vocab = build_vocabulary(events)
    timelines = build_timelines(events, vocab)
    history: list[float] = []
    t0 = time.perf_counter()
    emb = train(timelines, vocab, cfg, history=history)
    seconds = time.perf_counter() - t0
    intra, inter, hit = cluster_scores(emb, vocab, truth["code_clusters"])
    return ClusterRecovery(intra, inter, hit, history, seconds)


# Synthetic HF task large enough for >= 300 cases and >= 2,000 controls.
HF_TASK = SynthConfig(n_patients=6000, seed=11, noise_rate=0.3, hf_rate=0.3)


@dataclass
class HFResult:
    n_cases: int
    n_controls: int
    reports: dict = field(default_factory=dict)  # (kind, feature_kind) -> EvalReport
    embedding_seconds: float = 0.0

    def mean_auc(self, kind: str, feature_kind: str) -> float:
        return self.reports[(kind, feature_kind)].mean_auc


def heart_failure_experiment(synth: SynthConfig = HF_TASK, cfg: TrainConfig | None = None,
                             cohort_seed: int = 5, eval_seed: int = 0,
                             kinds=KINDS) -> HFResult:
    """Embeddings on every patient, then one-hot vs concept-vector features for each classifier."""
    cfg = cfg or TrainConfig()
    patients, events, _ = generate(synth)
    labels = build_cohort(events, patients, cohort_seed)
    vocab = build_vocabulary(events)
    timelines = build_timelines(events, vocab)
    t0 = time.perf_counter()
    emb = train(timelines, vocab, cfg)
    result = HFResult(sum(l.status == "case" for l in labels),
                      sum(l.status == "control" for l in labels),
                      embedding_seconds=time.perf_counter() - t0)
    matrices = {
        "one_hot_counts": featurize_one_hot(timelines, labels, vocab),
        "concept_vector": featurize_concept(timelines, labels, vocab, emb, vocab),
    }
    for kind in kinds:
        for fk, fm in matrices.items():
            result.reports[(kind, fk)] = run_experiment(fm, default_spec(kind, fk), eval_seed)
    return result


def training_speed(n_clusters: int = 50, n_patients: int = 4000, d: int = 100, seed: int = 0):
    """Logistic-regression seconds per fold on wide one-hot rows vs d-dimensional concept rows.

    Cost depends only on the feature width, so the concept rows come from an
    untrained embedding; that keeps the run short at vocabulary sizes > 5,000.
    """
    per = {"diagnosis": 34, "medication": 33, "procedure": 33}
    synth = SynthConfig(n_patients=n_patients, n_clusters=n_clusters, codes_per_cluster=per,
                        hf_rate=0.9, seed=seed, clusters_per_patient=(1, 3))
    patients, events, _ = generate(synth)
    labels = build_cohort(events, patients, seed)
    vocab = build_vocabulary(events)
    timelines = build_timelines(events, vocab)
    emb = train(timelines, vocab, TrainConfig(d=d, epochs=0, seed=seed))
    one_hot = featurize_one_hot(timelines, labels, vocab)
    concept = featurize_concept(timelines, labels, vocab, emb, vocab)
    out = {}
    for fm in (one_hot, concept):
        rep: EvalReport = run_experiment(fm, default_spec("logistic_regression", fm.feature_kind), seed)
        out[fm.feature_kind] = (fm.f, float(np.mean(rep.train_seconds_per_fold)))
    return out
