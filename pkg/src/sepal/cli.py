"""Batch command-line entry point.

Every subcommand reads files, writes files, and exits; outputs are sorted
and all randomness flows from explicit seeds, so reruns on unchanged inputs
are byte-identical. A key=value config file can preset any flag; flags on
the command line win.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import atomic, baseline, comments, docvec, formats, parsers, report, synth, uids, widedeep
from .features import DEFAULT_HASH_BUCKETS, Encoder, build_vocab, write_examples
from .policy import ALLOW, PolicyDb, PolicyError


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    p = Path(path)
    if not p.exists():
        raise CliError(f"missing file: {path}", code=3)
    return p.read_text()


# --- parse -------------------------------------------------------------------


def cmd_parse(args) -> int:
    # Merge order is file-name order, so the same file set gives identical
    # output however the arguments were listed.
    texts = sorted(_read_many(args.inputs, args.jobs))
    if args.format in ("cil", "flat"):
        db = PolicyDb()
        for path, text in texts:
            parse = parsers.parse_cil if args.format == "cil" else parsers.parse_flat
            db.merge(parse(text, file=path, strict=args.strict))
        formats.save_db(args.out, db)
        for w in db.warnings:
            print(f"warning: {w}", file=sys.stderr)
        return 0
    records = []
    if args.format == "te-comments":
        for path, text in texts:
            unit = Path(path).stem if path != "-" else "stdin"
            for doc in parsers.parse_te_comments(text, unit):
                records.append({"unit": doc.unit, "polarity": doc.polarity, "sentences": doc.sentences})
    elif args.format == "file-contexts":
        for _, text in texts:
            records.extend(
                {"path": e.path_pattern, "type": e.label_type} for e in parsers.parse_file_contexts(text)
            )
    elif args.format == "rc":
        for _, text in texts:
            records.extend(
                {"service": e.service_name, "path": e.executable_path, "user": e.user}
                for e in parsers.parse_rc(text)
            )
    elif args.format == "seapp":
        for _, text in texts:
            records.extend(
                {"domain": e.domain, "user": e.assigned_user_class, "selector": dict(e.selector)}
                for e in parsers.parse_seapp(text)
            )
    with open(args.out, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return 0


def _read_many(paths: list[str], jobs: int) -> list[tuple[str, str]]:
    if jobs > 1 and len(paths) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            texts = list(pool.map(_read_text, paths))
        return list(zip(paths, texts))
    return [(p, _read_text(p)) for p in paths]


# --- expansion and diff ---------------------------------------------------------


def cmd_expand(args) -> int:
    db = formats.load_db(args.db)
    atoms, sources = atomic.expand_with_sources(db)
    if args.augment_cap is not None:
        if args.augment_cap == "auto":
            n_allow = sum(1 for a in atoms if a.label == ALLOW)
            n_never = len(atoms) - n_allow
            available = len(atomic.augment_from_negations(db, cap=None))
            cap = atomic.choose_augment_cap(n_allow, n_never, available)
        else:
            cap = int(args.augment_cap)
        inferred = atomic.augment_from_negations(db, cap=cap)
        for atom in inferred:
            sources.setdefault(atom, "inferred")
        atoms |= inferred
    formats.save_atomics(args.out, atoms, sources)
    return 0


def cmd_diff(args) -> int:
    device, dev_sources = formats.load_atomics(args.device)
    reference, _ = formats.load_atomics(args.reference)
    device = {a for a in device if a.label == ALLOW}
    reference = {a for a in reference if a.label == ALLOW}
    custom = atomic.diff(device, reference)
    formats.save_atomics(args.out, custom, dev_sources)
    return 0


# --- uid -------------------------------------------------------------------------


def cmd_uid(args) -> int:
    db = formats.load_db(args.db)
    fc = parsers.parse_file_contexts(_read_text(args.fc)) if args.fc else []
    rc = parsers.parse_rc(_read_text(args.rc)) if args.rc else []
    seapp = parsers.parse_seapp(_read_text(args.seapp)) if args.seapp else []
    uid_map = uids.infer_users(db, fc, rc, seapp)
    formats.save_uid_map(args.out, uid_map)
    return 0


# --- comments ----------------------------------------------------------------------


def cmd_comments(args) -> int:
    corpus = comments.load_corpus(args.corpus)
    docs = comments.docs_from_conllu(_read_text(args.conllu), corpus)
    vectors = docvec.embed_docs(docs, dim=args.dim, epochs=args.epochs, seed=args.seed)
    formats.save_doc_vectors(args.out, vectors)
    return 0


# --- training and classification ------------------------------------------------------


def _build_encoder(db_path, vecs_path, uid_path, vocab, hash_buckets) -> Encoder:
    db = formats.load_db(db_path) if db_path else PolicyDb()
    doc_vecs = formats.load_doc_vectors(vecs_path) if vecs_path else []
    uid_map = formats.load_uid_map(uid_path) if uid_path else {}
    return Encoder(db, vocab, uid_map=uid_map, doc_vecs=doc_vecs, hash_buckets=hash_buckets)


def cmd_train(args) -> int:
    atoms, _ = formats.load_atomics(args.atomics)
    vocab = build_vocab(atoms)
    encoder = _build_encoder(args.db, args.vecs, args.uid, vocab, args.hash_buckets)
    examples = encoder.encode_all(sorted(atoms))
    config = widedeep.TrainConfig(
        seed=args.seed,
        lr_wide=args.lr_wide,
        lr_deep=args.lr_deep,
        epochs=args.epochs,
        batch_size=args.batch_size,
        test_frac=args.test_frac,
        hash_buckets=args.hash_buckets,
    )
    if args.save_features:
        write_examples(args.save_features, examples, args.hash_buckets, vocab)
    model = widedeep.train(examples, config, encoder.wide_dim, vocab.sizes())
    model.vocab = vocab
    widedeep.save_model(args.out, model)
    if model.metrics:
        m = model.metrics
        print(f"held-out accuracy={m.accuracy:.4f} precision={m.precision:.4f} recall={m.recall:.4f} n={m.n_test}")
    return 0


def cmd_classify(args) -> int:
    model = widedeep.load_model(args.model)
    if model.vocab is None:
        raise CliError("model file carries no vocabulary; retrain with this version", code=1)
    custom, sources = formats.load_atomics(args.custom)
    encoder = _build_encoder(args.db, args.vecs, args.uid, model.vocab, model.config.hash_buckets)
    findings = widedeep.flag_unregulated(model, custom, encoder, sources=sources, image=args.image)
    formats.save_findings(args.out, findings)
    print(f"flagged {len(findings)} of {len(custom)} customized atomics")
    return 0


def cmd_baseline(args) -> int:
    train_atoms, _ = formats.load_atomics(args.train)
    custom, _ = formats.load_atomics(args.custom)
    index = baseline.NeighborIndex(train_atoms)
    with open(args.out, "w") as fh:
        for atom in sorted(custom):
            verdict = baseline.nn_classify(index, atom, m=args.m, sigma=args.sigma)
            rec = {
                "subject": atom.subject,
                "target": atom.target,
                "class": atom.klass,
                "permission": atom.perm,
                "verdict": verdict.verdict,
                "neighbors": verdict.neighbor_count,
                "majority_fraction": round(verdict.majority_fraction, 6),
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return 0


# --- reporting ----------------------------------------------------------------------------


def cmd_report(args) -> int:
    findings = formats.load_findings(args.findings)
    db = formats.load_db(args.db) if args.db else None
    te_sources = {}
    if args.te:
        for path in sorted(Path(args.te).glob("*.te")):
            te_sources[path.name] = path.read_text()
    history = []
    if args.history:
        for path in sorted(Path(args.history).glob("*.jsonl")):
            atoms, _ = formats.load_atomics(path)
            history.append((path.stem, atoms))
    report.categorize(findings, db=db, te_sources=te_sources, reference_history=history)
    formats.save_findings(args.out, findings)
    if args.stats:
        if not args.images:
            raise CliError("--stats needs --images MANIFEST for customized counts", code=1)
        flagged_by_image: dict[str, int] = {}
        for f in findings:
            flagged_by_image[f.source_image] = flagged_by_image.get(f.source_image, 0) + 1
        corpus = []
        for line in Path(args.images).read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            meta = report.ImageMeta(
                rec["image"], rec.get("version", ""), rec.get("manufacturer", "")
            )
            corpus.append((meta, int(rec["customized"]), flagged_by_image.get(meta.image, 0)))
        Path(args.stats).write_text(report.stats(corpus).to_csv())
    return 0


def cmd_synth(args) -> int:
    corpus = synth.generate(args.seed)
    synth.write_corpus(corpus, args.out)
    print(
        f"reference={len(corpus.reference)} device={len(corpus.device)} "
        f"holdout={len(corpus.holdout)} violations={len(corpus.violations)} benign={len(corpus.benign)}"
    )
    return 0


# --- wiring -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="sepal", description=__doc__)
    top.add_argument("--config", help="key=value file presetting any flag")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse policy or side tables")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--format", required=True, choices=["cil", "flat", "te-comments", "file-contexts", "rc", "seapp"])
    p.add_argument("--out", required=True)
    p.add_argument("--strict", action="store_true", help="undeclared names are errors")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("expand", help="expand a policy database to atomic rules")
    p.add_argument("--db", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--augment-cap", default=None, help="count, or 'auto' to balance labels")
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("diff", help="device minus reference, by four-tuple")
    p.add_argument("--device", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("uid", help="infer privilege buckets for domains")
    p.add_argument("--db", required=True)
    p.add_argument("--fc")
    p.add_argument("--rc")
    p.add_argument("--seapp")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_uid)

    p = sub.add_parser("comments", help="triplets from parsed comments, embedded per unit")
    p.add_argument("--conllu", required=True)
    p.add_argument("--corpus", default=None, help="directory with actions.txt/resources.txt")
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, default=300)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--epochs", type=int, default=40)
    p.set_defaults(func=cmd_comments)

    p = sub.add_parser("train", help="train the joint classifier")
    p.add_argument("--atomics", required=True)
    p.add_argument("--db")
    p.add_argument("--vecs")
    p.add_argument("--uid")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--test-frac", type=float, default=0.10)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--lr-wide", type=float, default=0.1)
    p.add_argument("--lr-deep", type=float, default=0.01)
    p.add_argument("--hash-buckets", type=int, default=DEFAULT_HASH_BUCKETS)
    p.add_argument("--save-features", help="also write the encoded-example record file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="flag customized atomics the model rejects")
    p.add_argument("--model", required=True)
    p.add_argument("--custom", required=True)
    p.add_argument("--db")
    p.add_argument("--vecs")
    p.add_argument("--uid")
    p.add_argument("--image", default="", help="image name recorded on findings")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("baseline", help="nearest-neighbor verdicts")
    p.add_argument("--train", required=True)
    p.add_argument("--custom", required=True)
    p.add_argument("--m", type=int, default=baseline.DEFAULT_M)
    p.add_argument("--sigma", type=float, default=baseline.DEFAULT_SIGMA)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("report", help="categorize findings and aggregate stats")
    p.add_argument("--findings", required=True)
    p.add_argument("--db")
    p.add_argument("--te", help="directory of TE sources for debug-macro regions")
    p.add_argument("--history", help="directory of <version>.jsonl reference expansions")
    p.add_argument("--images", help="manifest JSONL: image, version, manufacturer, customized")
    p.add_argument("--out", required=True)
    p.add_argument("--stats")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="planted synthetic corpus for end-to-end checks")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    return top


def _load_config(path: str) -> dict:
    out = {}
    for raw in _read_text(path).splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"bad config line: {raw!r}", code=2)
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _coerce(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    if value in ("true", "false"):
        return value == "true"
    return value


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, _ = parser.parse_known_args(argv)
    if args.config:
        defaults = {k: _coerce(v) for k, v in _load_config(args.config).items()}
        for action in parser._subparsers._group_actions:  # noqa: SLF001
            for sp in action.choices.values():
                sp.set_defaults(**{k: v for k, v in defaults.items() if _has_option(sp, k)})
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except parsers.PolicyParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"missing file: {exc.filename}", file=sys.stderr)
        return 3
    except widedeep.DegenerateData as exc:
        print(f"degenerate data: {exc}", file=sys.stderr)
        return 4
    except (PolicyError, docvec.EmptyCorpus, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _has_option(subparser: argparse.ArgumentParser, key: str) -> bool:
    return any(a.dest == key for a in subparser._actions)  # noqa: SLF001


if __name__ == "__main__":
    sys.exit(main())
