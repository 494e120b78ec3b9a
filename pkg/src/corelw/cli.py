"""Command line front end: ``corelw {synth,train,predict,evaluate,kappa}``.

Every command is a function of (config, input files, seed). Wall-clock
timestamps are written to a separate ``timestamp`` field so reports can be
compared byte for byte once it is dropped. Errors print one line,
``ERROR <code>: <message>``, and exit with the error class's status.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import tempfile
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

from . import __version__
from .config import CONFIG_ENV, METHODS, RunConfig, config_text, load_config, read_config_file
from .corpus import load_corpus
from .embeddings import compute_sif, embed_corpus
from .encoders import EncoderParams
from .errors import ConfigError, CorelError, LoadError, ValidationError
from .evaluation import KappaInput, consistency_report, linear_kappa, qwk, run_protocol, write_consistency_csv
from .pipeline import MethodFitter, load_table
from .scoring import build_knn, predict, write_predictions
from .synth import write_synthetic_corpus, write_synthetic_embeddings
from .training import train

log = logging.getLogger("corelw")


def bundled_dir() -> Path:
    return Path(str(resources.files("corelw") / "data" / "synthetic"))


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_json(path: Path, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _parse_sets(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _resolve_config(args, base: dict | None = None) -> RunConfig:
    overrides = _parse_sets(getattr(args, "set", None))
    for flag in ("method", "repeats", "threads", "seed", "k"):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[flag] = value
    return load_config(args.config, overrides, base)


def _bundled_base() -> dict:
    return read_config_file(bundled_dir() / "config.yaml")


def _corpus_and_base(args):
    """Explicit corpus, or the bundled synthetic corpus with its settings as base layer."""
    if args.corpus:
        return Path(args.corpus), None
    return bundled_dir() / "corpus.csv", _bundled_base()


def _load(cfg: RunConfig, path):
    return load_corpus(path, config=cfg.preprocess(), num_levels=cfg.num_levels)


def run_id(cfg: RunConfig, corpus_path: Path, command: str) -> str:
    """Deterministic id from the command, the resolved config and the corpus bytes."""
    h = hashlib.sha256()
    h.update(command.encode())
    h.update(json.dumps(cfg.to_dict(), sort_keys=True).encode())
    h.update(Path(corpus_path).read_bytes())
    return h.hexdigest()[:12]


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    for target in (args.out, args.embeddings):
        if target:
            Path(target).parent.mkdir(parents=True, exist_ok=True)
    rows = write_synthetic_corpus(args.out, args.size, args.levels, args.seed, args.noise)
    print(f"wrote {len(rows)} documents to {args.out}")
    if args.embeddings:
        n = write_synthetic_embeddings(args.embeddings, args.dim, args.seed)
        print(f"wrote {n} {args.dim}-d vectors to {args.embeddings}")
    return 0


def cmd_train(args) -> int:
    corpus_path, base = _corpus_and_base(args)
    cfg = _resolve_config(args, base)
    corpus = _load(cfg, corpus_path)
    if not corpus.documents:
        raise ValidationError("training corpus is empty")
    table = load_table(cfg)
    sif = compute_sif(corpus.documents, cfg.sif_a)
    embedded = embed_corpus(corpus.documents, table, sif)
    params, report = train(embedded, cfg.encoder(), cfg.train(), cfg.sinkhorn())

    # everything below only runs after training succeeded: no partial outputs
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ck = out / "checkpoint.json"
    fd, tmp = tempfile.mkstemp(dir=out, prefix=".checkpoint.")
    os.close(fd)
    params.save(tmp, {"run_config": cfg.to_dict(), "num_levels": corpus.num_levels,
                      "train_corpus": str(corpus_path)})
    os.replace(tmp, ck)
    report.checkpoint = ck.name
    _write_json(out / "report.json", {
        "run_id": run_id(cfg, corpus_path, "train"),
        "method": cfg.method,
        "corpus": {"path": str(corpus_path), "documents": len(corpus.documents), "stats": corpus.stats},
        "train": report.to_dict(),
        "timestamp": _timestamp(),
    })
    _atomic_write(out / "config.echo", config_text(cfg))
    print(f"trained {cfg.method} on {len(corpus.documents)} documents; "
          f"final loss {report.epoch_losses[-1]:.6f}; outputs in {out}")
    return 0


def cmd_predict(args) -> int:
    ck_path = Path(args.checkpoint)
    if not ck_path.is_file():
        raise LoadError(f"checkpoint not found: {ck_path}")
    params, extra = EncoderParams.load_checkpoint(ck_path)
    if "run_config" not in extra:
        raise LoadError(f"{ck_path} carries no run configuration")
    stored = dict(extra["run_config"])
    cfg = load_config(None, _parse_sets(args.set), stored)
    k = args.k if args.k is not None else cfg.k
    num_levels = extra.get("num_levels") or cfg.num_levels
    train_c = load_corpus(args.train_corpus, config=cfg.preprocess(), num_levels=num_levels)
    test_c = load_corpus(args.test_corpus, config=cfg.preprocess(), num_levels=num_levels)
    if not train_c.documents:
        raise ValidationError("training corpus is empty")
    table = load_table(cfg)
    sif = compute_sif(train_c.documents, cfg.sif_a)
    model = build_knn(embed_corpus(train_c.documents, table, sif), params, k, num_levels, cfg.sinkhorn())
    preds = [predict(model, d) for d in embed_corpus(test_c.documents, table, sif)]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_predictions(out, preds)
    print(f"wrote {len(preds)} predictions (K={k}) to {out}")
    return 0


def cmd_evaluate(args) -> int:
    corpus_path, base = _corpus_and_base(args)
    cfg = _resolve_config(args, base)
    corpus = _load(cfg, corpus_path)
    if not corpus.documents:
        raise ValidationError("corpus is empty")
    fitter = MethodFitter(cfg, corpus.num_levels, load_table(cfg))
    report = run_protocol(corpus, fitter, cfg.plan(), cfg.method, cfg.threads)
    rows = consistency_report(report.predictions, {d.id: d.score for d in corpus.documents},
                              cfg.min_occurrences)

    out = Path(args.out or cfg.output_dir)
    payload = report.to_dict()
    payload.update({
        "run_id": run_id(cfg, corpus_path, "evaluate"),
        "config": cfg.to_dict(),
        "corpus": {"path": str(corpus_path), "documents": len(corpus.documents),
                   "num_levels": corpus.num_levels},
        "n_failed": sum(r.failed for r in report.repeats),
        "timestamp": _timestamp(),
    })
    _write_json(out / "protocol_report.json", payload)
    write_consistency_csv(out / "consistency.csv", rows)
    _atomic_write(out / "config.echo", config_text(cfg))
    qs = ", ".join("failed" if r.failed else f"{r.qwk:.3f}" if r.qwk is not None else "undefined"
                   for r in report.repeats)
    mean = "n/a" if report.qwk_mean is None else f"{report.qwk_mean:.4f}"
    std = "n/a" if report.qwk_std is None else f"{report.qwk_std:.4f}"
    print(f"{cfg.method}: QWK mean {mean} (std {std}) over {len(report.repeats)} repeats [{qs}]")
    print(f"reports in {out}")
    return 0


def _read_pairs(path: Path):
    if not path.is_file():
        raise LoadError(f"pairs file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        true_col = next((c for c in ("gold", "true", "score") if c in cols), None)
        pred_col = next((c for c in ("predicted", "pred", "prediction") if c in cols), None)
        if true_col is None or pred_col is None:
            raise LoadError(f"{path}: need a gold/true column and a predicted/pred column, got {cols}")
        true, pred = [], []
        for line, row in enumerate(reader, start=2):
            try:
                true.append(int(row[true_col]))
                pred.append(int(row[pred_col]))
            except (TypeError, ValueError):
                raise LoadError(f"{path}:{line}: non-integer score") from None
    return true, pred


def cmd_kappa(args) -> int:
    true, pred = _read_pairs(Path(args.pairs))
    levels = args.levels or max([2] + true + pred)
    data = KappaInput.from_scores(true, pred, levels)
    result = {"n": len(true), "num_levels": levels, "qwk": qwk(data), "linear_kappa": linear_kappa(data)}
    print(json.dumps(result, sort_keys=True))
    return 0


# ---------------------------------------------------------------- parser


def _add_config_flags(p, with_method=True):
    p.add_argument("--config", help=f"flat YAML config file (default: ${CONFIG_ENV})")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--seed", type=int)
    if with_method:
        p.add_argument("--method", choices=sorted(METHODS))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corelw", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a seeded synthetic scored corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=150)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.7)
    p.add_argument("--embeddings", help="also write matching word vectors here")
    p.add_argument("--dim", type=int, default=50)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train an encoder on a scored corpus")
    p.add_argument("--corpus", help="CSV/JSONL corpus (default: bundled synthetic corpus)")
    p.add_argument("--out", required=True, help="output directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="KNN predictions from a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--train-corpus", required=True)
    p.add_argument("--test-corpus", required=True)
    p.add_argument("--out", required=True, help="predictions CSV")
    p.add_argument("-k", type=int, default=None, help="neighbours (default: k from the checkpoint config, 7)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="repeated-split evaluation protocol")
    p.add_argument("--corpus", help="CSV/JSONL corpus (default: bundled synthetic corpus)")
    p.add_argument("--out", help="output directory (default: output_dir)")
    p.add_argument("--repeats", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("-k", type=int, default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("kappa", help="QWK and linear kappa from a CSV of score pairs")
    p.add_argument("pairs", help="CSV with gold/true and predicted/pred columns")
    p.add_argument("--levels", type=int)
    p.set_defaults(func=cmd_kappa)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CorelError as exc:
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return exc.exit_status
    except Exception as exc:  # noqa: BLE001 - last-resort one-line report
        print(f"ERROR internal_error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return CorelError.exit_status


if __name__ == "__main__":
    sys.exit(main())
