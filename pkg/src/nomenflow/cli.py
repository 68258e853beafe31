"""``nomenflow`` command line.

Subcommands: preprocess, build-corpus, train, predict, evaluate, entropy,
analyze, synth. Settings resolve in the order command-line flag, JSON config
file (``--config`` or ``$NOMENFLOW_CONFIG``), built-in default; the resolved
settings are echoed to stderr on every run.

Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import warnings
from collections import Counter
from pathlib import Path
from typing import Any, Callable

from nomenflow import __version__
from nomenflow.classifier import (
    FeatureConfig,
    ModelFormatError,
    ModelIOError,
    NgramModel,
    TrainConfig,
    load_model,
    predict_batch,
    save_model,
    train,
)
from nomenflow.corpus import (
    CorpusFormatError,
    LabeledName,
    SplitSpec,
    apply_exclusions,
    ingest,
    ngram_entropy,
    read_corpus,
    split,
    write_corpus,
)
from nomenflow.evaluation import evaluate, hierarchy_consistency
from nomenflow.migration import (
    RecordFormatError,
    analyze,
    default_synthetic_spec,
    generate_synthetic_corpus,
    parse_periods,
    synthetic_names,
    write_records,
    read_records,
)
from nomenflow.normalize import Status, preprocess
from nomenflow.taxonomy import DEFAULT_EXCLUDED, ExclusionPolicy, TaxonomyError, TaxonomyTable, load_taxonomy

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3
CONFIG_ENV = "NOMENFLOW_CONFIG"

# published normalized entropies of a large Wikipedia name corpus, shown for comparison
REFERENCE_ENTROPY = {"US": 0.96, "CA": 0.96, "AU": 0.94, "NZ": 0.93, "ZA": 1.00,
                     "GB": 0.90, "DE": 0.86, "FR": 0.78}

DEFAULTS: dict[str, Any] = {
    "taxonomy": None,
    "seed": 0,
    "level": 1,
    "min_n": 2,
    "max_n": 5,
    "buckets": 2 ** 21,
    "lr": 0.1,
    "epochs": 5,
    "dim": 100,
    "linear_decay": False,
    "periods": None,
    "origin": "both",
    "dataset_range": "1996-2020",
    "margin": 2,
    "persistence": 2,
    "min_class_size": 100,
    "exclude": ",".join(sorted(DEFAULT_EXCLUDED)),
    "fractions": "0.65,0.15,0.20",
    "n": 3,
    "normalizer": "country",
    "top_k": 5,
    "per_label": 2000,
    "scale": 1,
}


class CLIError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _config_error(msg: str) -> CLIError:
    return CLIError(EXIT_CONFIG, f"config error: {msg}")


# --------------------------------------------------------------------------
# config resolution


def _load_config_file(path: str | None) -> dict[str, Any]:
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise _config_error(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise _config_error(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise _config_error(f"config file {path} must hold a JSON object")
    data = {k.replace("-", "_"): v for k, v in data.items()}
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        raise _config_error(f"unknown key(s) in {path}: {', '.join(unknown)}")
    return data


def _resolve(args: argparse.Namespace) -> dict[str, Any]:
    file_cfg = _load_config_file(args.config)
    resolved = {}
    for key, default in DEFAULTS.items():
        if not hasattr(args, key):
            continue
        value = getattr(args, key)
        if value is None:
            value = file_cfg.get(key, default)
        resolved[key] = value
        setattr(args, key, value)
    return resolved


def _echo_config(args: argparse.Namespace, resolved: dict[str, Any]) -> None:
    shown = {"command": args.command, **resolved}
    for key in ("input", "inputs", "output", "out_dir", "corpus", "model", "records", "val"):
        if getattr(args, key, None) is not None:
            v = getattr(args, key)
            shown[key] = [str(x) for x in v] if isinstance(v, list) else str(v)
    print("config: " + json.dumps(shown, sort_keys=True), file=sys.stderr)


def _taxonomy(args: argparse.Namespace) -> TaxonomyTable:
    try:
        return load_taxonomy(args.taxonomy)
    except TaxonomyError as exc:
        raise _config_error(str(exc)) from exc
    except OSError as exc:
        raise _config_error(f"cannot read taxonomy {args.taxonomy}: {exc.strerror or exc}") from exc


def _feature_config(args) -> FeatureConfig:
    try:
        return FeatureConfig(min_n=args.min_n, max_n=args.max_n, bucket_count=args.buckets)
    except ValueError as exc:
        raise _config_error(str(exc)) from exc


def _train_config(args) -> TrainConfig:
    try:
        return TrainConfig(learning_rate=args.lr, epochs=args.epochs, dim=args.dim, seed=args.seed,
                           linear_decay=bool(args.linear_decay))
    except ValueError as exc:
        raise _config_error(str(exc)) from exc


def _year_range(text: str) -> tuple[int, int]:
    try:
        (p,) = parse_periods(text)
    except ValueError as exc:
        raise _config_error(f"bad --range {text!r}: {exc}") from exc
    return p.start, p.end


def _periods(text: str | None):
    if not text:
        return None
    try:
        return parse_periods(text)
    except ValueError as exc:
        raise _config_error(str(exc)) from exc


# --------------------------------------------------------------------------
# output helpers


def _atomic_write(path: str | Path, writer: Callable[[Path], None]) -> None:
    """Write through a temporary sibling and rename, so a failed run never
    leaves a partial artifact behind."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent if str(path.parent) else ".")
    os.close(fd)
    try:
        writer(Path(tmp))
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _write_text(path: str | Path, text: str) -> None:
    _atomic_write(path, lambda p: p.write_text(text, encoding="utf-8"))


def _emit(args, payload: dict, text: str) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True) if args.json else text)


def _read_text_lines(path: str) -> list[str]:
    if path == "-":
        return sys.stdin.read().splitlines()
    try:
        return Path(path).read_bytes().decode("utf-8").splitlines()
    except UnicodeDecodeError as exc:
        raise CLIError(EXIT_DATA, f"{path}: not valid UTF-8 (byte {exc.start})") from exc


def _load_model(path: str) -> NgramModel:
    try:
        return load_model(path)
    except ModelIOError:
        raise
    except ModelFormatError as exc:
        raise CLIError(EXIT_DATA, f"{path}: {type(exc).__name__}: {exc}") from exc


def _level_labels(rows: list[LabeledName], taxonomy: TaxonomyTable, level: int, source: str) -> list[str]:
    missing = Counter(r.country for r in rows if r.country not in taxonomy)
    if missing:
        listed = ", ".join(f"{c}({n})" for c, n in missing.most_common(10))
        raise CLIError(EXIT_DATA, f"{source}: countries outside the taxonomy: {listed}")
    return [taxonomy.rollup(r.country, level) for r in rows]


# --------------------------------------------------------------------------
# subcommands


def cmd_preprocess(args) -> int:
    lines = _read_text_lines(args.input)
    out_rows, counts = [], Counter()
    for line in lines:
        if not line.strip():
            continue
        raw = line.split("\t", 1)[0]
        outcome = preprocess(raw)
        counts[outcome.status.value] += 1
        out_rows.append(f"{raw}\t{outcome.text}\t{outcome.status.value}")
    body = "".join(r + "\n" for r in out_rows)
    _write_text(args.output, body)
    kept = counts[Status.OK.value]
    rejected = {k: v for k, v in sorted(counts.items()) if k != Status.OK.value}
    _emit(args, {"kept": kept, "rejected": rejected, "output": str(args.output)},
          f"kept {kept}, rejected {sum(rejected.values())} {rejected or ''}".rstrip())
    return EXIT_OK


def cmd_build_corpus(args) -> int:
    taxonomy = _taxonomy(args)
    try:
        fractions = [float(x) for x in args.fractions.split(",")]
        spec = SplitSpec(*fractions, seed=args.seed)
        policy = ExclusionPolicy.from_codes([c for c in args.exclude.split(",") if c], args.min_class_size)
    except (TypeError, ValueError) as exc:
        raise _config_error(str(exc)) from exc
    rows, stats = ingest(args.inputs)
    rows = apply_exclusions(rows, policy, taxonomy, stats)
    if not rows:
        raise CLIError(EXIT_DATA, "no rows left after cleaning and exclusions")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        parts = split(rows, spec)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in zip(("train", "val", "test"), parts):
        _atomic_write(out / f"{name}.tsv", lambda p, part=part: write_corpus(part, p))
    summary = stats.to_dict()
    summary["reconciles"] = stats.reconciles()
    summary["splits"] = {n: len(p) for n, p in zip(("train", "val", "test"), parts)}
    _write_text(out / "stats.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _emit(args, summary,
          f"ingested {stats.ingested}: kept {stats.kept}, duplicates {stats.duplicates}, "
          f"rejected {stats.rejected_total}, excluded {stats.excluded}\n"
          f"splits train/val/test = {len(parts[0])}/{len(parts[1])}/{len(parts[2])} -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    if args.level not in (1, 2, 3):
        raise _config_error("--level must be 1, 2 or 3")
    taxonomy = _taxonomy(args)
    fcfg, tcfg = _feature_config(args), _train_config(args)
    rows = read_corpus(args.corpus)
    if not rows:
        raise CLIError(EXIT_DATA, f"{args.corpus}: empty corpus")
    labels = _level_labels(rows, taxonomy, args.level, args.corpus)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model, losses = train([r.name for r in rows], labels, fcfg, tcfg, level=args.level)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    payload: dict[str, Any] = {"labels": len(model.labels), "examples": len(rows),
                               "epoch_loss": losses, "model": str(args.output)}
    text = [f"epoch {i + 1}: loss {loss:.6f}" for i, loss in enumerate(losses)]
    if args.val:
        val = read_corpus(args.val)
        truth = _level_labels(val, taxonomy, args.level, args.val)
        report = evaluate(truth, [p.label for p in predict_batch(model, [r.name for r in val])])
        payload["validation"] = report.to_dict()
        text.append(f"validation: accuracy {report.accuracy:.4f}  macro F1 {report.macro_f1:.4f}  "
                    f"weighted F1 {report.weighted_f1:.4f}")
    _atomic_write(args.output, lambda p: save_model(model, p))
    text.append(f"saved {len(model.labels)}-label level-{args.level} model to {args.output}")
    _emit(args, payload, "\n".join(text))
    return EXIT_OK


def cmd_predict(args) -> int:
    model = _load_model(args.model)
    raws = [line.split("\t", 1)[0] for line in _read_text_lines(args.input) if line.strip()]
    outcomes = [preprocess(r) for r in raws]
    ok = [o.text for o in outcomes if o.ok]
    preds = iter(predict_batch(model, ok))
    results = []
    for raw, o in zip(raws, outcomes):
        if o.ok:
            p = next(preds)
            results.append({"name": raw, "clean": o.text, "label": p.label, "probability": p.probability,
                            "status": o.status.value})
        else:
            results.append({"name": raw, "clean": o.text, "label": None, "probability": None,
                            "status": o.status.value})
    if args.json:
        body = "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in results)
    else:
        body = "name\tlabel\tprobability\tstatus\n" + "".join(
            f"{r['name']}\t{r['label'] or ''}\t{'' if r['probability'] is None else format(r['probability'], '.6f')}"
            f"\t{r['status']}\n" for r in results)
    if args.output:
        _write_text(args.output, body)
        print(f"wrote {len(results)} predictions to {args.output}", file=sys.stderr)
    else:
        sys.stdout.write(body)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = _load_model(args.model)
    level = model.level or args.level
    taxonomy = _taxonomy(args)
    rows = read_corpus(args.corpus)
    if not rows:
        raise CLIError(EXIT_DATA, f"{args.corpus}: empty corpus")
    truth = _level_labels(rows, taxonomy, level, args.corpus)
    names = [r.name for r in rows]
    preds = predict_batch(model, names)
    report = evaluate(truth, [p.label for p in preds])
    payload = report.to_dict()
    payload["level"] = level
    text = report.to_text()
    if args.coarse_model:
        if level != 3:
            raise _config_error("--coarse-model needs a level-3 model as MODEL")
        coarse = _load_model(args.coarse_model)
        cons = hierarchy_consistency([p.label for p in preds], [p.label for p in predict_batch(coarse, names)],
                                     taxonomy, level=coarse.level or 1)
        payload["consistency"] = cons.to_dict()
        text += f"\nconsistency with level-{cons.level} model: {cons.consistency:.5f}"
    if args.confusion:
        _write_text(args.confusion, report.confusion.to_csv(normalized=args.normalized))
    _emit(args, payload, text)
    return EXIT_OK


def cmd_entropy(args) -> int:
    rows = read_corpus(args.corpus)
    if not rows:
        raise CLIError(EXIT_DATA, f"{args.corpus}: empty corpus")
    counts = Counter(r.country for r in rows)
    countries = args.countries.split(",") if args.countries else sorted(counts)
    if args.n < 1:
        raise _config_error("--n must be >= 1")
    result = {}
    for c in countries:
        if c not in counts:
            raise CLIError(EXIT_DATA, f"empty_country: no names for {c!r}")
        result[c] = {"entropy": ngram_entropy(rows, c, args.n, not args.no_pad, args.normalizer),
                     "names": counts[c], "reference": REFERENCE_ENTROPY.get(c)}
    lines = ["country  names    entropy  reference"]
    for c, v in result.items():
        ref = f"{v['reference']:.2f}" if v["reference"] is not None else "-"
        lines.append(f"{c:<7}  {v['names']:>7}  {v['entropy']:.4f}   {ref}")
    _emit(args, {"n": args.n, "normalizer": args.normalizer, "countries": result}, "\n".join(lines))
    return EXIT_OK


def cmd_analyze(args) -> int:
    if args.origin not in ("academic", "name", "both"):
        raise _config_error("--origin must be academic, name or both")
    dataset_range = _year_range(args.dataset_range)
    periods = _periods(args.periods)
    taxonomy = _taxonomy(args)
    needs_names = args.origin in ("name", "both")
    if needs_names and not (args.level3_model and args.level2_model):
        raise _config_error("--origin name/both needs --level3-model and --level2-model")
    m3 = _load_model(args.level3_model) if needs_names else None
    m2 = _load_model(args.level2_model) if needs_names else None
    try:
        records = read_records(args.records, dataset_range)
    except RecordFormatError as exc:
        raise CLIError(EXIT_DATA, str(exc)) from exc
    except json.JSONDecodeError as exc:  # pragma: no cover - caught per line
        raise CLIError(EXIT_DATA, str(exc)) from exc
    result = analyze(records, dataset_range, m3, m2, taxonomy, periods, args.origin,
                     args.margin, args.persistence)
    summary = result.summary(k=args.top_k)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "flows.csv", result.flows.to_csv())
    _write_text(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    text = [f"authors {summary['authors']} (empty after trim {summary['authors_empty_after_trim']}), "
            f"names assigned {summary['names_assigned']}, rejected {summary['names_rejected']}"]
    for o, sect in summary["by_definition"].items():
        share = sect["returns"] / sect["events"] if sect["events"] else 0.0
        text.append(f"{o} origin: {sect['events']} moves, {sect['returns']} returns ({share:.1%})")
    text.append(f"wrote {out / 'flows.csv'} and {out / 'summary.json'}")
    _emit(args, summary, "\n".join(text))
    return EXIT_OK


def cmd_synth(args) -> int:
    periods = _periods(args.periods)
    spec = default_synthetic_spec(scale=args.scale, periods=periods)
    records, truth = generate_synthetic_corpus(spec, seed=args.seed)
    names = synthetic_names(spec.alphabets, args.per_label, seed=args.seed + 1)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "names.tsv", lambda p: write_corpus(names, p))
    _atomic_write(out / "records.jsonl", lambda p: write_records(records, p))
    _write_text(out / "truth_flows.csv", truth.flows.to_csv())
    payload = {"authors": len(records), "names": len(names), "flow_rows": len(truth.flows),
               "dataset_range": list(spec.dataset_range), "out_dir": str(out)}
    _emit(args, payload, f"wrote {len(names)} training names, {len(records)} author records and "
                         f"{len(truth.flows)} planted flow rows to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--seed", type=int, help="random seed (default 0)")

    tax = argparse.ArgumentParser(add_help=False)
    tax.add_argument("--taxonomy", help="taxonomy TSV (default: bundled)")

    model_flags = argparse.ArgumentParser(add_help=False)
    g = model_flags.add_argument_group("model")
    g.add_argument("--min-n", type=int, help="shortest character n-gram (default 2)")
    g.add_argument("--max-n", type=int, help="longest character n-gram (default 5)")
    g.add_argument("--buckets", type=int, help="hash buckets, a power of two (default 2^21)")
    g.add_argument("--lr", type=float, help="learning rate (default 0.1)")
    g.add_argument("--epochs", type=int, help="training epochs (default 5)")
    g.add_argument("--dim", type=int, help="embedding dimension (default 100)")
    g.add_argument("--linear-decay", action="store_const", const=True, help="decay lr linearly to 0")

    p = argparse.ArgumentParser(prog="nomenflow", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("preprocess", parents=[common], help="normalize raw names")
    s.add_argument("input", help="one raw name per line ('-' for stdin)")
    s.add_argument("output", help="headerless TSV: raw name, clean name, status")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("build-corpus", parents=[common, tax], help="ingest, filter and split a corpus")
    s.add_argument("inputs", nargs="+", help="name<TAB>country files")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--min-class-size", type=int)
    s.add_argument("--exclude", help="comma-separated excluded countries (default US,CA,AU,NZ,ZA)")
    s.add_argument("--fractions", help="train,val,test fractions (default 0.65,0.15,0.20)")
    s.set_defaults(func=cmd_build_corpus)

    s = sub.add_parser("train", parents=[common, tax, model_flags], help="train a name classifier")
    s.add_argument("corpus", help="clean name<TAB>country file")
    s.add_argument("-o", "--output", required=True, help="model file")
    s.add_argument("--level", type=int, help="taxonomy level 1, 2 or 3 (default 1)")
    s.add_argument("--val", help="validation corpus for final metrics")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", parents=[common], help="predict name origins")
    s.add_argument("model")
    s.add_argument("input", nargs="?", default="-", help="one name per line (default stdin)")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", parents=[common, tax], help="score a model on a labeled corpus")
    s.add_argument("model")
    s.add_argument("corpus")
    s.add_argument("--level", type=int, help="level for models saved without one")
    s.add_argument("--coarse-model", help="level-1/2 model for taxonomy consistency")
    s.add_argument("--confusion", help="write the confusion matrix CSV here")
    s.add_argument("--normalized", action="store_true", help="row-normalize the confusion CSV")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("entropy", parents=[common], help="normalized n-gram entropy per country")
    s.add_argument("corpus")
    s.add_argument("--countries", help="comma-separated codes (default: all)")
    s.add_argument("--n", type=int, help="n-gram length (default 3)")
    s.add_argument("--no-pad", action="store_true", help="skip ^/$ padding")
    s.add_argument("--normalizer", choices=("country", "global"))
    s.set_defaults(func=cmd_entropy)

    s = sub.add_parser("analyze", parents=[common, tax], help="emigration vs return flows")
    s.add_argument("records", help="JSON-lines author records")
    s.add_argument("--level3-model")
    s.add_argument("--level2-model")
    s.add_argument("--origin", choices=("academic", "name", "both"))
    s.add_argument("--periods", help="e.g. 1998-2005,2006-2011")
    s.add_argument("--range", dest="dataset_range", help="dataset years START-END (default 1996-2020)")
    s.add_argument("--margin", type=int, help="censored years trimmed at each end (default 2)")
    s.add_argument("--persistence", type=int, help="entries a move must hold (default 2)")
    s.add_argument("--top-k", type=int)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic corpus with planted truth")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--per-label", type=int, help="training names per label (default 2000)")
    s.add_argument("--scale", type=int, help="multiplier on the 10,200-author default corpus")
    s.add_argument("--periods")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        resolved = _resolve(args)
        _echo_config(args, resolved)
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (CorpusFormatError, RecordFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        where = f" {exc.filename}" if getattr(exc, "filename", None) else ""
        print(f"error: I/O failure{where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
