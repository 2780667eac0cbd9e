"""Command-line entry points: ``ehrvec <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import cohort as cohort_mod
from .embedding_space import additive_query, load_embeddings, nearest_neighbors, save_embeddings
from .features import FEATURE_KINDS, featurize_concept, featurize_one_hot, write_features
from .ingest import ConceptCode, build_timelines, build_vocabulary, read_events, read_patients
from .predict import KINDS, default_spec, run_experiment
from .skipgram import TrainConfig, train
from .synthgen import SynthConfig, generate, write_dataset

log = logging.getLogger("ehrvec")


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    subcommand: str
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    seed: int | None = None
    overrides: dict = field(default_factory=dict)

    def check_inputs(self) -> None:
        for name, path in self.inputs.items():
            if path is not None and not os.path.isfile(path):
                raise UsageError(f"--{name.replace('_', '-')}: no such file: {path}")


def _range(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(",")
    return int(lo), int(hi or lo)


def _write_atomic(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    os.replace(tmp, path)


def _emit_neighbors(results, out) -> None:
    for r in results:
        out.write(f"{r.concept}\t{r.score:.6f}\n")


# ---------------------------------------------------------------- subcommands

def cmd_synth(args) -> None:
    cfg = SynthConfig(
        n_patients=args.n_patients, n_clusters=args.n_clusters,
        codes_per_cluster={"diagnosis": args.diagnoses, "medication": args.medications,
                           "procedure": args.procedures},
        visits_per_patient=args.visits, codes_per_visit=args.codes_per_visit,
        noise_rate=args.noise, hf_precursor_cluster=args.precursor_cluster,
        hf_rate=args.hf_rate, seed=args.seed, n_clinics=args.clinics)
    patients, events, truth = generate(cfg)
    paths = write_dataset(args.out_dir, patients, events, truth)
    print(f"wrote {len(patients)} patients, {len(events)} events to {paths['events']}",
          file=sys.stderr)


def _subset_events(events, cohort_path, subset):
    if subset == "all":
        return events
    if cohort_path is None:
        raise UsageError("--subset cases|cohort requires --cohort")
    labels = cohort_mod.read_cohort(cohort_path)
    keep = {l.patient_id for l in labels if subset == "cohort" or l.status == "case"}
    return [ev for ev in events if ev.patient_id in keep]


def cmd_train_embeddings(args) -> None:
    events = _subset_events(read_events(args.events), args.cohort, args.subset)
    if not events:
        raise UsageError("no events to train on")
    vocab = build_vocabulary(events)
    timelines = build_timelines(events, vocab)
    cfg = TrainConfig(d=args.dim, w=args.window, epochs=args.epochs,
                      batch_size=args.batch, seed=args.seed)
    emb = train(timelines, vocab, cfg)
    save_embeddings(args.out, emb, vocab)


def _lookup(vocab, token: str) -> ConceptCode:
    try:
        concept = ConceptCode.parse(token)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if concept not in vocab:
        raise UsageError(f"unknown concept {token}")
    return concept


def cmd_query_nn(args) -> None:
    emb, vocab = load_embeddings(args.emb)
    concept = _lookup(vocab, args.code)
    i = vocab.index_of[concept]
    exclude = () if args.include_self else (i,)
    _emit_neighbors(nearest_neighbors(emb, vocab, emb[i], args.k, exclude), sys.stdout)


def cmd_analogy(args) -> None:
    emb, vocab = load_embeddings(args.emb)
    plus = [_lookup(vocab, t) for t in args.plus]
    minus = [_lookup(vocab, t) for t in args.minus or []]
    _emit_neighbors(additive_query(emb, vocab, plus, minus, args.k), sys.stdout)


def cmd_build_cohort(args) -> None:
    events = read_events(args.events)
    patients = read_patients(args.patients)
    criteria = cohort_mod.CaseCriteria(cohort_mod.load_qualifying_codes(args.codes))
    labels = cohort_mod.build_cohort(events, patients, args.seed, criteria)
    buf = "".join(l.to_json() + "\n" for l in labels)
    _write_atomic(args.out, buf)
    print(cohort_mod.cohort_summary(labels), file=sys.stderr)


def _load_pipeline(events_path, cohort_path):
    events = read_events(events_path)
    labels = cohort_mod.read_cohort(cohort_path)
    vocab = build_vocabulary(events)
    return vocab, build_timelines(events, vocab), labels


def _features(kind, vocab, timelines, labels, emb_path):
    if kind == "one_hot_counts":
        return featurize_one_hot(timelines, labels, vocab)
    if emb_path is None:
        raise UsageError("concept_vector features require --emb")
    emb, emb_vocab = load_embeddings(emb_path)
    return featurize_concept(timelines, labels, vocab, emb, emb_vocab)


def cmd_featurize(args) -> None:
    vocab, timelines, labels = _load_pipeline(args.events, args.cohort)
    fm = _features(args.kind, vocab, timelines, labels, args.emb)
    tmp = args.out + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        write_features(fm, f)
    os.replace(tmp, args.out)


def cmd_evaluate(args) -> None:
    vocab, timelines, labels = _load_pipeline(args.events, args.cohort)
    matrices = {kind: _features(kind, vocab, timelines, labels, args.emb) for kind in FEATURE_KINDS}
    reports = []
    for clf in args.classifiers:
        for kind in FEATURE_KINDS:
            report = run_experiment(matrices[kind], default_spec(clf, kind), args.seed)
            log.info("%s/%s mean_auc=%.4f", clf, kind, report.mean_auc)
            reports.append(report)
    # all cells computed before any file is written
    os.makedirs(args.out_dir, exist_ok=True)
    for r in reports:
        path = os.path.join(args.out_dir, f"report_{r.classifier.kind}_{r.feature_kind}.json")
        _write_atomic(path, r.to_json(timing=not args.no_timing))
    out = sys.stdout
    out.write(f"{'classifier':<22}{'features':<17}{'mean_auc':>9}{'std_auc':>9}"
              + ("" if args.no_timing else f"{'sec/fold':>10}") + "\n")
    for r in reports:
        line = f"{r.classifier.kind:<22}{r.feature_kind:<17}{r.mean_auc:>9.4f}{r.std_auc:>9.4f}"
        if not args.no_timing:
            line += f"{np.mean(r.train_seconds_per_fold):>10.3f}"
        out.write(line + "\n")


def cmd_export_vectors(args) -> None:
    """Tab-separated vectors + metadata for external projection tools."""
    emb, vocab = load_embeddings(args.emb)
    rows = [i for i, c in enumerate(vocab.code_at) if args.domain is None or c.domain == args.domain]
    if not rows:
        raise UsageError(f"no concepts in domain {args.domain}")
    _write_atomic(args.out_vectors, "".join(
        "\t".join(f"{x:.9g}" for x in emb[i].tolist()) + "\n" for i in rows))
    _write_atomic(args.out_meta, "domain\tcode\n" + "".join(
        f"{vocab.code_at[i].domain}\t{vocab.code_at[i].code}\n" for i in rows))


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ehrvec", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--n-patients", type=int, default=2000)
    s.add_argument("--n-clusters", type=int, default=10)
    s.add_argument("--diagnoses", type=int, default=10, help="diagnosis codes per cluster")
    s.add_argument("--medications", type=int, default=10)
    s.add_argument("--procedures", type=int, default=10)
    s.add_argument("--visits", type=_range, default=(10, 24), metavar="LO,HI")
    s.add_argument("--codes-per-visit", type=_range, default=(2, 5), metavar="LO,HI")
    s.add_argument("--noise", type=float, default=0.1)
    s.add_argument("--precursor-cluster", type=int, default=0)
    s.add_argument("--hf-rate", type=float, default=0.3)
    s.add_argument("--clinics", type=int, default=2)
    s.set_defaults(func=cmd_synth, inputs=())

    s = sub.add_parser("train-embeddings", help="train concept vectors")
    s.add_argument("--events", required=True)
    s.add_argument("--dim", type=int, default=100)
    s.add_argument("--window", type=int, default=5)
    s.add_argument("--epochs", type=int, default=10)
    s.add_argument("--batch", type=int, default=100)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--cohort", help="cohort file, needed for --subset cases|cohort")
    s.add_argument("--subset", choices=("all", "cohort", "cases"), default="all")
    s.set_defaults(func=cmd_train_embeddings, inputs=("events", "cohort"))

    s = sub.add_parser("query-nn", help="nearest neighbors of one concept")
    s.add_argument("--emb", required=True)
    s.add_argument("--code", required=True, help="<domain>:<code>")
    s.add_argument("--k", type=int, default=50)
    s.add_argument("--include-self", action="store_true")
    s.set_defaults(func=cmd_query_nn, inputs=("emb",))

    s = sub.add_parser("analogy", help="neighbors of a sum/difference of concepts")
    s.add_argument("--emb", required=True)
    s.add_argument("--plus", nargs="+", required=True)
    s.add_argument("--minus", nargs="*")
    s.add_argument("--k", type=int, default=50)
    s.set_defaults(func=cmd_analogy, inputs=("emb",))

    s = sub.add_parser("build-cohort", help="identify HF cases and matched controls")
    s.add_argument("--events", required=True)
    s.add_argument("--patients", required=True)
    s.add_argument("--codes", help="qualifying ICD-9 codes, one per line")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_build_cohort, inputs=("events", "patients", "codes"))

    s = sub.add_parser("featurize", help="dump patient feature rows")
    s.add_argument("--events", required=True)
    s.add_argument("--cohort", required=True)
    s.add_argument("--kind", choices=FEATURE_KINDS, required=True)
    s.add_argument("--emb")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_featurize, inputs=("events", "cohort", "emb"))

    s = sub.add_parser("evaluate", help="6-fold AUC for every classifier x feature kind")
    s.add_argument("--events", required=True)
    s.add_argument("--cohort", required=True)
    s.add_argument("--emb", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--classifiers", nargs="+", choices=KINDS, default=list(KINDS))
    s.add_argument("--no-timing", action="store_true",
                   help="omit wall-clock timings so reports are byte-reproducible")
    s.set_defaults(func=cmd_evaluate, inputs=("events", "cohort", "emb"))

    s = sub.add_parser("export-vectors", help="TSV vectors + metadata for plotting tools")
    s.add_argument("--emb", required=True)
    s.add_argument("--out-vectors", required=True)
    s.add_argument("--out-meta", required=True)
    s.add_argument("--domain", choices=("diagnosis", "medication", "procedure"))
    s.set_defaults(func=cmd_export_vectors, inputs=("emb",))
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    if args.command == "train-embeddings":
        # per-epoch progress lines are always shown
        logging.getLogger("ehrvec.skipgram").setLevel(logging.INFO)
    manifest = RunManifest(args.command,
                           inputs={k: getattr(args, k) for k in args.inputs},
                           seed=getattr(args, "seed", None))
    try:
        manifest.check_inputs()
        args.func(args)
    except (UsageError, ValueError, KeyError, IndexError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"ehrvec {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())
