"""Scored-document ingestion and text normalization."""

from __future__ import annotations

import csv
import hashlib
import json
import statistics
import unicodedata
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

from nltk.stem.porter import PorterStemmer

from .errors import LoadError, ValidationError


@lru_cache(maxsize=None)
def default_stopwords() -> frozenset[str]:
    text = resources.files("corelw").joinpath("data/stopwords_en.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


def load_stopwords(path: str | Path) -> frozenset[str]:
    """Read a stopword file, one token per line."""
    try:
        text = Path(path).read_text("utf-8")
    except OSError as exc:
        raise LoadError(f"cannot read stopword file {path}: {exc}") from exc
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


@dataclass(frozen=True)
class PreprocessConfig:
    lowercase: bool = True
    strip_punctuation: bool = True
    remove_stopwords: bool = True
    stem: bool = True
    stopword_list: frozenset[str] = field(default_factory=default_stopwords)
    max_tokens: int | None = None

    def __post_init__(self):
        if self.remove_stopwords and not self.stopword_list:
            raise ValidationError("remove_stopwords is set but the stopword list is empty")
        if self.max_tokens is not None and self.max_tokens < 1:
            raise ValidationError("max_tokens must be positive")

    def digest(self) -> str:
        d = asdict(self)
        d["stopword_list"] = sorted(self.stopword_list)
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    tokens: tuple[str, ...]
    score: int


@dataclass
class Corpus:
    documents: list[Document]
    num_levels: int
    provenance: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [d.id for d in self.documents]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate document ids: {dup[:5]}")
        if self.num_levels < 2:
            raise ValidationError("num_levels must be at least 2")
        for d in self.documents:
            if not 1 <= d.score <= self.num_levels:
                raise ValidationError(
                    f"document {d.id!r}: score {d.score} outside [1, {self.num_levels}]"
                )

    def __len__(self):
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def subset(self, indices) -> "Corpus":
        docs = [self.documents[i] for i in indices]
        return Corpus(docs, self.num_levels, dict(self.provenance))

    @property
    def scores(self) -> list[int]:
        return [d.score for d in self.documents]


_stemmer = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)


@lru_cache(maxsize=65536)
def _stem(token: str) -> str:
    return _stemmer.stem(token, to_lowercase=False)


def _strip_punct(text: str) -> str:
    # punctuation = Unicode general category P*; replaced by a space
    return "".join(" " if unicodedata.category(ch).startswith("P") else ch for ch in text)


def preprocess(text: str, config: PreprocessConfig) -> list[str]:
    """lowercase -> strip punctuation -> whitespace split -> stopwords -> stem."""
    if config.lowercase:
        text = text.lower()
    if config.strip_punctuation:
        text = _strip_punct(text)
    tokens = text.split()
    if config.remove_stopwords:
        stop = config.stopword_list
        tokens = [t for t in tokens if t not in stop]
    if config.stem:
        tokens = [_stem(t) for t in tokens]
    if config.max_tokens is not None:
        tokens = tokens[: config.max_tokens]
    return tokens


def _read_records(path: Path, fmt: str) -> list[dict]:
    records = []
    if fmt == "csv":
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = {"id", "score", "text"} - set(reader.fieldnames or [])
            if missing:
                raise LoadError(f"{path}: CSV header lacks {sorted(missing)}")
            for lineno, row in enumerate(reader, start=2):
                if None in row or any(row.get(k) is None for k in ("id", "score", "text")):
                    raise LoadError(f"{path}: malformed record at line {lineno}")
                records.append({**row, "_where": f"line {lineno}"})
    elif fmt == "jsonl":
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise LoadError(f"{path}: malformed record at line {lineno}: {exc}") from exc
                if not isinstance(obj, dict) or not {"id", "score", "text"} <= obj.keys():
                    raise LoadError(f"{path}: malformed record at line {lineno}")
                records.append({**obj, "_where": f"line {lineno}"})
    else:
        raise LoadError(f"unknown corpus format {fmt!r}")
    return records


def _length_stats(lengths: list[int]) -> dict:
    if not lengths:
        return {"count": 0, "avg": 0.0, "max": 0, "min": 0}
    return {
        "count": len(lengths),
        "avg": statistics.fmean(lengths),
        "max": max(lengths),
        "min": min(lengths),
    }


def corpus_stats(corpus: Corpus, config: PreprocessConfig) -> dict:
    """Length statistics after the full pipeline and with stopwords kept."""
    keep = PreprocessConfig(
        lowercase=config.lowercase,
        strip_punctuation=config.strip_punctuation,
        remove_stopwords=False,
        stem=config.stem,
        stopword_list=config.stopword_list,
        max_tokens=config.max_tokens,
    )
    return {
        "tokens": _length_stats([len(d.tokens) for d in corpus.documents]),
        "tokens_with_stopwords": _length_stats(
            [len(preprocess(d.text, keep)) for d in corpus.documents]
        ),
    }


def load_corpus(
    path: str | Path,
    format: str | None = None,
    config: PreprocessConfig | None = None,
    num_levels: int | None = None,
) -> Corpus:
    """Load a scored corpus from CSV or JSONL and preprocess every document.

    ``format`` defaults to the file suffix. ``num_levels`` defaults to the
    largest score present (at least 2).
    """
    path = Path(path)
    config = config or PreprocessConfig()
    if not path.is_file():
        raise LoadError(f"corpus file not found: {path}")
    fmt = format or ("jsonl" if path.suffix.lower() in (".jsonl", ".json") else "csv")
    records = _read_records(path, fmt)

    docs = []
    for rec in records:
        where = rec["_where"]
        doc_id = str(rec["id"])
        try:
            score = int(str(rec["score"]).strip())
        except ValueError:
            raise LoadError(f"{path}: record {doc_id!r} ({where}) has non-integer score") from None
        text = str(rec["text"])
        tokens = preprocess(text, config)
        if not tokens:
            raise ValidationError(f"document {doc_id!r} is empty after preprocessing")
        docs.append(Document(doc_id, text, tuple(tokens), score))

    if num_levels is None:
        num_levels = max([2] + [d.score for d in docs])
    corpus = Corpus(
        docs,
        num_levels,
        provenance={"path": str(path), "config_hash": config.digest()},
    )
    corpus.stats = corpus_stats(corpus, config)
    return corpus


def write_corpus_csv(path: str | Path, rows) -> None:
    """Write ``(id, score, text)`` rows with the ``id,score,text`` header."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_NONNUMERIC, lineterminator="\n")
        w.writerow(["id", "score", "text"])
        for doc_id, score, text in rows:
            w.writerow([str(doc_id), int(score), text])
