"""Parsing of patient/event JSON-lines files and timeline assembly."""

from __future__ import annotations

import datetime as dt
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, TextIO

DOMAINS = ("diagnosis", "medication", "procedure")
SOURCES = (
    "encounter",
    "problem_list",
    "medication_order",
    "procedure_order",
    "image_order",
    "other_order",
)
SEXES = ("F", "M")

EVENT_FIELDS = frozenset({"patient_id", "date", "code", "domain", "source"})
PATIENT_FIELDS = frozenset({"patient_id", "sex", "birth_date", "clinic_id"})


class FormatError(ValueError):
    """Raised for malformed input lines; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"{message} at line {line}"
        super().__init__(message)


@dataclass(frozen=True, order=True)
class ConceptCode:
    # field order gives the (domain, code) lexicographic ordering
    domain: str
    code: str

    def __post_init__(self):
        if not self.code:
            raise ValueError("concept code must be non-empty")
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")

    def __str__(self) -> str:
        return f"{self.domain}:{self.code}"

    @classmethod
    def parse(cls, token: str) -> "ConceptCode":
        """Inverse of ``str()``: ``"diagnosis:401.9"`` -> ConceptCode."""
        domain, sep, code = token.partition(":")
        if not sep:
            raise ValueError(f"expected <domain>:<code>, got {token!r}")
        return cls(domain, code)


@dataclass(frozen=True)
class EventRecord:
    patient_id: str
    date: dt.date
    concept: ConceptCode
    source: str


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    sex: str
    birth_date: dt.date
    clinic_id: str


@dataclass
class Vocabulary:
    code_at: list[ConceptCode]
    frequency: list[int]
    index_of: dict[ConceptCode, int] = field(init=False)

    def __post_init__(self):
        self.index_of = {c: i for i, c in enumerate(self.code_at)}
        if len(self.index_of) != len(self.code_at):
            raise ValueError("duplicate concept in vocabulary")
        if len(self.frequency) != len(self.code_at):
            raise ValueError("frequency length does not match vocabulary size")

    def __len__(self) -> int:
        return len(self.code_at)

    def __contains__(self, concept: ConceptCode) -> bool:
        return concept in self.index_of


@dataclass
class PatientTimeline:
    patient_id: str
    visits: list[tuple[dt.date, list[int]]]

    def n_codes(self) -> int:
        return sum(len(codes) for _, codes in self.visits)


def _parse_date(value, field_name: str, line: int) -> dt.date:
    if not isinstance(value, str):
        raise FormatError(f"invalid {field_name}", line)
    try:
        return dt.date.fromisoformat(value)
    except ValueError:
        raise FormatError(f"invalid {field_name}", line) from None


def _json_lines(stream: Iterable[str], fields: frozenset):
    for lineno, raw in enumerate(stream, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise FormatError(f"malformed JSON ({exc.msg})", lineno) from None
        if not isinstance(obj, dict):
            raise FormatError("expected a JSON object", lineno)
        missing = fields - obj.keys()
        if missing:
            raise FormatError(f"missing field {sorted(missing)[0]!r}", lineno)
        extra = obj.keys() - fields
        if extra:
            raise FormatError(f"unexpected field {sorted(extra)[0]!r}", lineno)
        yield lineno, obj


def _string_field(obj: dict, name: str, line: int) -> str:
    value = obj[name]
    if not isinstance(value, str) or not value:
        raise FormatError(f"invalid {name}", line)
    return value


def parse_events(stream: Iterable[str]) -> list[EventRecord]:
    """Parse an events JSON-lines stream, preserving input order."""
    events = []
    concepts: dict[tuple[str, str], ConceptCode] = {}
    for lineno, obj in _json_lines(stream, EVENT_FIELDS):
        pid = _string_field(obj, "patient_id", lineno)
        date = _parse_date(obj["date"], "date", lineno)
        code = _string_field(obj, "code", lineno)
        domain = obj["domain"]
        if domain not in DOMAINS:
            raise FormatError(f"unknown domain {domain!r}", lineno)
        source = obj["source"]
        if source not in SOURCES:
            raise FormatError(f"unknown source {source!r}", lineno)
        key = (domain, code)
        concept = concepts.get(key)
        if concept is None:
            concept = concepts[key] = ConceptCode(domain, code)
        events.append(EventRecord(pid, date, concept, source))
    return events


def parse_patients(stream: Iterable[str]) -> list[PatientRecord]:
    patients = []
    seen = set()
    for lineno, obj in _json_lines(stream, PATIENT_FIELDS):
        pid = _string_field(obj, "patient_id", lineno)
        if pid in seen:
            raise FormatError(f"duplicate patient_id {pid!r}", lineno)
        seen.add(pid)
        sex = obj["sex"]
        if sex not in SEXES:
            raise FormatError(f"unknown sex {sex!r}", lineno)
        birth = _parse_date(obj["birth_date"], "birth_date", lineno)
        clinic = _string_field(obj, "clinic_id", lineno)
        patients.append(PatientRecord(pid, sex, birth, clinic))
    return patients


def read_events(path) -> list[EventRecord]:
    with open(path, encoding="utf-8") as f:
        return parse_events(f)


def read_patients(path) -> list[PatientRecord]:
    with open(path, encoding="utf-8") as f:
        return parse_patients(f)


def event_to_json(ev: EventRecord) -> str:
    return json.dumps({
        "patient_id": ev.patient_id,
        "date": ev.date.isoformat(),
        "code": ev.concept.code,
        "domain": ev.concept.domain,
        "source": ev.source,
    })


def patient_to_json(p: PatientRecord) -> str:
    return json.dumps({
        "patient_id": p.patient_id,
        "sex": p.sex,
        "birth_date": p.birth_date.isoformat(),
        "clinic_id": p.clinic_id,
    })


def write_events(events: Iterable[EventRecord], sink: TextIO) -> None:
    for ev in events:
        sink.write(event_to_json(ev) + "\n")


def write_patients(patients: Iterable[PatientRecord], sink: TextIO) -> None:
    for p in patients:
        sink.write(patient_to_json(p) + "\n")


def build_vocabulary(events: list[EventRecord]) -> Vocabulary:
    """Index concepts by descending frequency, ties by (domain, code)."""
    if not events:
        raise ValueError("cannot build a vocabulary from zero events")
    counts = Counter(ev.concept for ev in events)
    ordered = sorted(counts, key=lambda c: (-counts[c], c))
    return Vocabulary(ordered, [counts[c] for c in ordered])


def build_timelines(events: list[EventRecord], vocab: Vocabulary) -> list[PatientTimeline]:
    """Group each patient's events into date-ordered visits.

    Timelines come back sorted by patient id. Within a visit, codes keep
    their input order and duplicates are retained.
    """
    by_patient: dict[str, dict[dt.date, list[int]]] = defaultdict(lambda: defaultdict(list))
    index_of = vocab.index_of
    for ev in events:
        try:
            idx = index_of[ev.concept]
        except KeyError:
            raise ValueError(f"concept {ev.concept} is not in the vocabulary") from None
        by_patient[ev.patient_id][ev.date].append(idx)
    return [
        PatientTimeline(pid, sorted(visits.items()))
        for pid, visits in sorted(by_patient.items())
    ]
