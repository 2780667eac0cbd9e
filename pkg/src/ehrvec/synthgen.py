"""Synthetic patient populations with planted concept clusters and HF onset.

Each cluster owns a block of diagnosis, medication and procedure codes.
Patients carry 1-3 latent clusters and draw visit codes from them; carriers
of the precursor cluster may become incident HF cases, with a denser run of
precursor visits during the 18 months before diagnosis.
"""

from __future__ import annotations

import datetime as dt
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .cohort import load_qualifying_codes
from .ingest import ConceptCode, EventRecord, PatientRecord, write_events, write_patients

DOMAIN_PREFIX = {"diagnosis": "dx", "medication": "rx", "procedure": "px"}


@dataclass
class SynthConfig:
    n_patients: int = 2000
    n_clusters: int = 10
    codes_per_cluster: dict = field(
        default_factory=lambda: {"diagnosis": 10, "medication": 10, "procedure": 10})
    visits_per_patient: tuple[int, int] = (10, 24)
    codes_per_visit: tuple[int, int] = (2, 5)
    noise_rate: float = 0.1
    hf_precursor_cluster: int = 0
    hf_rate: float = 0.3
    seed: int = 0
    clusters_per_patient: tuple[int, int] = (1, 3)
    precursor_visits: tuple[int, int] = (1, 3)
    n_clinics: int = 2
    age_range: tuple[int, int] = (55, 75)  # age at start + 5 years
    start_date: dt.date = dt.date(2004, 1, 1)
    follow_up_days: int = 2920

    def validate(self) -> None:
        for name in ("visits_per_patient", "codes_per_visit", "clusters_per_patient",
                     "precursor_visits", "age_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name} must be a non-empty range, got {(lo, hi)}")
        if self.n_patients < 1 or self.n_clusters < 1 or self.n_clinics < 1:
            raise ValueError("n_patients, n_clusters and n_clinics must be positive")
        if self.visits_per_patient[0] < 1 or self.codes_per_visit[0] < 1:
            raise ValueError("every patient needs at least one visit and one code per visit")
        if set(self.codes_per_cluster) - set(DOMAIN_PREFIX):
            raise ValueError("codes_per_cluster keys must be domains")
        per_cluster = sum(self.codes_per_cluster.values())
        if per_cluster < 1:
            raise ValueError("clusters must own at least one code")
        if self.codes_per_visit[1] > per_cluster:
            raise ValueError(
                f"codes_per_visit upper bound {self.codes_per_visit[1]} exceeds the "
                f"{per_cluster} codes available in a cluster")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ValueError("noise_rate must lie in [0, 1]")
        if not 0.0 < self.hf_rate < 1.0:
            raise ValueError("hf_rate must lie in (0, 1)")
        if not 0 <= self.hf_precursor_cluster < self.n_clusters:
            raise ValueError("hf_precursor_cluster out of range")
        if self.clusters_per_patient[0] < 1 or self.clusters_per_patient[1] > self.n_clusters:
            raise ValueError("clusters_per_patient must fit within n_clusters")
        lo_age, hi_age = self.age_range
        # HF onset falls within +-2 years of the reference age
        if lo_age - 2 < 50 or hi_age + 2 >= 85:
            raise ValueError("age_range must keep HF onset within [50, 85)")
        if self.follow_up_days < 2500:
            raise ValueError("follow_up_days too short for the HF onset schedule")


def cluster_codes(cfg: SynthConfig) -> list[list[ConceptCode]]:
    out = []
    for k in range(cfg.n_clusters):
        codes = []
        for domain in ("diagnosis", "medication", "procedure"):
            for j in range(cfg.codes_per_cluster.get(domain, 0)):
                codes.append(ConceptCode(domain, f"{DOMAIN_PREFIX[domain]}{k:02d}_{j:02d}"))
        out.append(codes)
    return out


def _source(rng, domain: str) -> str:
    u = rng.random()
    if domain == "diagnosis":
        return "problem_list" if u < 0.15 else "encounter"
    if domain == "medication":
        return "medication_order"
    if u < 0.10:
        return "image_order"
    return "other_order" if u < 0.15 else "procedure_order"


class _Sampler:
    def __init__(self, cfg: SynthConfig, rng):
        self.cfg = cfg
        self.rng = rng
        self.clusters = cluster_codes(cfg)
        self.all_codes = [c for cl in self.clusters for c in cl]

    def visit(self, clusters: list[int]) -> list[ConceptCode]:
        lo, hi = self.cfg.codes_per_visit
        m = int(self.rng.integers(lo, hi + 1))
        chosen: list[ConceptCode] = []
        while len(chosen) < m:
            if self.rng.random() < self.cfg.noise_rate:
                c = self.all_codes[self.rng.integers(len(self.all_codes))]
            else:
                pool = self.clusters[clusters[self.rng.integers(len(clusters))]]
                c = pool[self.rng.integers(len(pool))]
            if c not in chosen:
                chosen.append(c)
        return chosen


def generate(cfg: SynthConfig):
    """Return ``(patients, events, truth)``; events are sorted by patient then date."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    sampler = _Sampler(cfg, rng)
    hf_codes = sorted(load_qualifying_codes())
    patients: list[PatientRecord] = []
    events: list[EventRecord] = []
    patient_clusters: dict[str, list[int]] = {}
    status: dict[str, str] = {}
    reference = cfg.start_date + dt.timedelta(days=5 * 365)
    for i in range(cfg.n_patients):
        pid = f"P{i:06d}"
        n_cl = int(rng.integers(cfg.clusters_per_patient[0], cfg.clusters_per_patient[1] + 1))
        clusters = sorted(int(k) for k in rng.choice(cfg.n_clusters, size=n_cl, replace=False))
        sex = "F" if rng.random() < 0.5 else "M"
        clinic = f"clinic{int(rng.integers(cfg.n_clinics))}"
        age_days = int(rng.integers(cfg.age_range[0] * 365, (cfg.age_range[1] + 1) * 365))
        birth = reference - dt.timedelta(days=age_days)
        patients.append(PatientRecord(pid, sex, birth, clinic))
        patient_clusters[pid] = clusters

        t0 = cfg.start_date + dt.timedelta(days=int(rng.integers(365)))
        n_vis = int(rng.integers(cfg.visits_per_patient[0], cfg.visits_per_patient[1] + 1))
        n_vis = min(n_vis, cfg.follow_up_days)
        offsets = np.sort(rng.choice(np.arange(1, cfg.follow_up_days), size=n_vis - 1, replace=False))
        visits: dict[dt.date, list[tuple[ConceptCode, str]]] = {}
        for off in [0, *offsets.tolist()]:
            day = t0 + dt.timedelta(days=off)
            visits[day] = [(c, _source(rng, c.domain)) for c in sampler.visit(clusters)]

        is_case = cfg.hf_precursor_cluster in clusters and rng.random() < cfg.hf_rate
        status[pid] = "case" if is_case else "control"
        if is_case:
            hfdx = t0 + dt.timedelta(days=int(rng.integers(1460, 2191)))
            n_pre = int(rng.integers(cfg.precursor_visits[0], cfg.precursor_visits[1] + 1))
            pre_days = rng.choice(np.arange(1, 549), size=n_pre, replace=False)
            for back in sorted(pre_days.tolist(), reverse=True):
                day = hfdx - dt.timedelta(days=back)
                codes = sampler.visit([cfg.hf_precursor_cluster])
                visits.setdefault(day, []).extend(
                    (c, _source(rng, c.domain)) for c in codes)
            a = int(rng.integers(20, 121))
            b = int(rng.integers(a + 20, 301))
            for off in (0, a, b):
                day = hfdx + dt.timedelta(days=off)
                code = ConceptCode("diagnosis", hf_codes[rng.integers(len(hf_codes))])
                visits.setdefault(day, []).append((code, "encounter"))
        for day in sorted(visits):
            for concept, source in visits[day]:
                events.append(EventRecord(pid, day, concept, source))

    code_clusters = {str(c): k for k, cl in enumerate(sampler.clusters) for c in cl}
    code_clusters.update({f"diagnosis:{c}": -1 for c in hf_codes})
    truth = {"code_clusters": code_clusters, "patient_clusters": patient_clusters,
             "intended_status": status}
    return patients, events, truth


def write_dataset(out_dir, patients, events, truth) -> dict[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "patients": os.path.join(out_dir, "patients.jsonl"),
        "events": os.path.join(out_dir, "events.jsonl"),
        "truth": os.path.join(out_dir, "truth.json"),
    }
    with open(paths["patients"], "w", encoding="utf-8", newline="\n") as f:
        write_patients(patients, f)
    with open(paths["events"], "w", encoding="utf-8", newline="\n") as f:
        write_events(events, f)
    with open(paths["truth"], "w", encoding="utf-8", newline="\n") as f:
        json.dump(truth, f, indent=1, sort_keys=True)
        f.write("\n")
    return paths
