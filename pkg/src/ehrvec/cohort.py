"""Incident heart-failure case definition and matched control selection."""

from __future__ import annotations

import datetime as dt
import json
from collections import defaultdict
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, TextIO

import numpy as np

from .ingest import EventRecord, PatientRecord

QUALIFYING_SOURCES = frozenset({"encounter", "problem_list", "medication_order"})
AGE_BANDS = tuple(range(50, 85, 5))  # lower edges of [50,55) ... [80,85)


def load_qualifying_codes(path=None) -> frozenset[str]:
    """One ICD-9 code per line; defaults to the bundled 25-code HF list."""
    if path is None:
        text = resources.files("ehrvec").joinpath("data/hf_icd9_codes.txt").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    codes = frozenset(line.strip() for line in text.splitlines() if line.strip())
    if not codes:
        raise ValueError("qualifying code list is empty")
    return codes


@dataclass(frozen=True)
class CaseCriteria:
    qualifying_codes: frozenset[str] = field(default_factory=load_qualifying_codes)
    window_days: int = 365
    min_encounters: int = 3
    min_age_years: int = 50
    max_age_years_exclusive: int = 85
    qualifying_sources: frozenset[str] = QUALIFYING_SOURCES

    def __post_init__(self):
        if not self.qualifying_codes:
            raise ValueError("qualifying_codes must be non-empty")
        if self.min_encounters < 2:
            raise ValueError("min_encounters must be >= 2")

    def is_qualifying(self, ev: EventRecord) -> bool:
        return (ev.concept.domain == "diagnosis"
                and ev.concept.code in self.qualifying_codes
                and ev.source in self.qualifying_sources)


@dataclass(frozen=True)
class CohortLabel:
    patient_id: str
    status: str  # "case" | "control"
    index_date: dt.date
    matched_case_id: str | None = None

    def to_json(self) -> str:
        obj = {"patient_id": self.patient_id, "status": self.status,
               "index_date": self.index_date.isoformat()}
        if self.matched_case_id is not None:
            obj["matched_case_id"] = self.matched_case_id
        return json.dumps(obj)


def age_years(birth: dt.date, on: dt.date) -> int:
    """Completed years of age on a given date."""
    return on.year - birth.year - ((on.month, on.day) < (birth.month, birth.day))


def age_band(age: int) -> int | None:
    if 50 <= age < 85:
        return 50 + 5 * ((age - 50) // 5)
    return None


def find_hf_diagnosis_date(dates: list[dt.date], criteria: CaseCriteria) -> dt.date | None:
    """Earliest anchor date with ``min_encounters`` dates within ``window_days``.

    The anchor starts at the first date and moves to the next qualifying
    date whenever its window cannot be completed, which covers the rule
    that a gap of more than a year after the first appearance promotes the
    second appearance to first qualifying encounter.
    ``dates`` must be sorted and hold one entry per calendar day.
    """
    for a, b in zip(dates, dates[1:]):
        if b <= a:
            raise ValueError("qualifying dates must be strictly increasing")
    need = criteria.min_encounters
    window = dt.timedelta(days=criteria.window_days)
    hi = 0
    for lo, anchor in enumerate(dates):
        if hi < lo:
            hi = lo
        while hi + 1 < len(dates) and dates[hi + 1] - anchor <= window:
            hi += 1
        if hi - lo + 1 >= need:
            return anchor
    return None


def qualifying_dates(events: Iterable[EventRecord], criteria: CaseCriteria) -> dict[str, list[dt.date]]:
    days: dict[str, set[dt.date]] = defaultdict(set)
    for ev in events:
        if criteria.is_qualifying(ev):
            days[ev.patient_id].add(ev.date)
    return {pid: sorted(d) for pid, d in days.items()}


def identify_cases(events: list[EventRecord], patients: list[PatientRecord],
                   criteria: CaseCriteria | None = None) -> list[CohortLabel]:
    """Cases, ordered by HF diagnosis date then patient id."""
    criteria = criteria or CaseCriteria()
    by_id = {p.patient_id: p for p in patients}
    cases = []
    for pid, dates in qualifying_dates(events, criteria).items():
        hfdx = find_hf_diagnosis_date(dates, criteria)
        if hfdx is None:
            continue
        p = by_id.get(pid)
        if p is None or p.birth_date is None:
            raise ValueError(f"no birth date for patient {pid!r}")
        if criteria.min_age_years <= age_years(p.birth_date, hfdx) < criteria.max_age_years_exclusive:
            cases.append(CohortLabel(pid, "case", hfdx))
    cases.sort(key=lambda c: (c.index_date, c.patient_id))
    return cases


@dataclass
class _EncounterSummary:
    first: dt.date | None = None
    dates: list[dt.date] = field(default_factory=list)


def _summarise(events: Iterable[EventRecord], criteria: CaseCriteria):
    encounters: dict[str, _EncounterSummary] = defaultdict(_EncounterSummary)
    hf_days: dict[str, list[dt.date]] = defaultdict(list)
    for ev in events:
        if ev.source == "encounter":
            encounters[ev.patient_id].dates.append(ev.date)
        if ev.concept.domain == "diagnosis" and ev.concept.code in criteria.qualifying_codes:
            hf_days[ev.patient_id].append(ev.date)
    for s in encounters.values():
        s.dates.sort()
        s.first = s.dates[0]
    return encounters, hf_days


def is_eligible_control(case: PatientRecord, case_label: CohortLabel, cand: PatientRecord,
                        encounters, hf_days, window_days: int = 365) -> bool:
    hfdx = case_label.index_date
    if cand.clinic_id != case.clinic_id or cand.sex != case.sex:
        return False
    band = age_band(age_years(cand.birth_date, hfdx))
    if band is None or band != age_band(age_years(case.birth_date, hfdx)):
        return False
    lookback = hfdx - dt.timedelta(days=window_days)
    if any(lookback <= d < hfdx for d in hf_days.get(cand.patient_id, ())):
        return False
    cand_enc = encounters.get(cand.patient_id)
    case_enc = encounters.get(case.patient_id)
    if cand_enc is None or case_enc is None:
        return False
    if abs((cand_enc.first - case_enc.first).days) > window_days:
        return False
    return cand_enc.dates[-1] >= hfdx - dt.timedelta(days=30)


def match_controls(cases: list[CohortLabel], candidates: list[PatientRecord],
                   events: list[EventRecord], seed: int,
                   patients: list[PatientRecord] | None = None,
                   criteria: CaseCriteria | None = None,
                   max_controls: int = 10) -> list[CohortLabel]:
    """Draw up to ``max_controls`` matched controls per case, without reuse.

    Cases are processed in ascending (HF date, patient id) order. ``patients``
    must contain the case records if they are not among ``candidates``.
    """
    criteria = criteria or CaseCriteria()
    case_ids = {c.patient_id for c in cases}
    if any(p.patient_id in case_ids for p in candidates):
        raise ValueError("cases and candidates must be disjoint")
    by_id = {p.patient_id: p for p in (patients or [])}
    encounters, hf_days = _summarise(events, criteria)
    strata: dict[tuple, list[PatientRecord]] = defaultdict(list)
    for p in sorted(candidates, key=lambda p: p.patient_id):
        strata[(p.clinic_id, p.sex)].append(p)
    rng = np.random.default_rng(seed)
    used: set[str] = set()
    controls = []
    for label in sorted(cases, key=lambda c: (c.index_date, c.patient_id)):
        case = by_id[label.patient_id]
        eligible = [p for p in strata[(case.clinic_id, case.sex)]
                    if p.patient_id not in used
                    and is_eligible_control(case, label, p, encounters, hf_days, criteria.window_days)]
        if not eligible:
            continue
        take = min(max_controls, len(eligible))
        for i in sorted(rng.choice(len(eligible), size=take, replace=False)):
            p = eligible[i]
            used.add(p.patient_id)
            controls.append(CohortLabel(p.patient_id, "control", label.index_date, label.patient_id))
    return controls


def build_cohort(events: list[EventRecord], patients: list[PatientRecord], seed: int,
                 criteria: CaseCriteria | None = None) -> list[CohortLabel]:
    criteria = criteria or CaseCriteria()
    cases = identify_cases(events, patients, criteria)
    case_ids = {c.patient_id for c in cases}
    candidates = [p for p in patients if p.patient_id not in case_ids]
    return cases + match_controls(cases, candidates, events, seed, patients, criteria)


def cohort_summary(labels: list[CohortLabel]) -> str:
    n_case = sum(l.status == "case" for l in labels)
    n_ctrl = len(labels) - n_case
    mean = n_ctrl / n_case if n_case else 0.0
    return f"cases={n_case} controls={n_ctrl} mean_controls_per_case={mean:.2f}"


def write_cohort(labels: Iterable[CohortLabel], sink: TextIO) -> None:
    for l in labels:
        sink.write(l.to_json() + "\n")


def read_cohort(path) -> list[CohortLabel]:
    labels = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
                status = obj["status"]
                if status not in ("case", "control"):
                    raise ValueError(f"bad status {status!r}")
                labels.append(CohortLabel(obj["patient_id"], status,
                                          dt.date.fromisoformat(obj["index_date"]),
                                          obj.get("matched_case_id")))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"invalid cohort record at line {lineno}: {exc}") from None
    return labels
