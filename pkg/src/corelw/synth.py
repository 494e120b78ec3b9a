"""Seeded synthetic lab-report discussions whose argument complexity tracks the score.

Higher levels use more relational and conditional sentence templates, which
carry connectives, hedges and references to contradictory or outside
evidence; they are also longer. Each document mixes templates from levels
near its own so adjacent levels overlap.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .corpus import PreprocessConfig, preprocess, write_corpus_csv

TOPICS = [
    {"subject": ["enzyme", "catalase", "reaction"], "factor": ["temperature", "heat"],
     "measure": ["reaction rate", "oxygen production", "bubble height"],
     "cond": ["cold", "warm", "boiling"]},
    {"subject": ["yeast", "culture", "fermentation"], "factor": ["sugar concentration", "glucose"],
     "measure": ["carbon dioxide output", "balloon size", "gas volume"],
     "cond": ["sucrose", "glucose", "control"]},
    {"subject": ["plant", "seedling", "leaf"], "factor": ["light intensity", "light"],
     "measure": ["photosynthesis rate", "leaf growth", "chlorophyll level"],
     "cond": ["shaded", "bright", "dark"]},
    {"subject": ["bacteria", "colony", "culture"], "factor": ["antibiotic dose", "penicillin"],
     "measure": ["inhibition zone", "colony count", "growth area"],
     "cond": ["treated", "untreated", "diluted"]},
    {"subject": ["seed", "bean", "sprout"], "factor": ["salt concentration", "salinity"],
     "measure": ["germination rate", "root length", "sprout mass"],
     "cond": ["saline", "freshwater", "mixed"]},
]

MECHANISMS = [
    "the active site becomes saturated", "osmotic stress limits water uptake",
    "the cells reach a metabolic limit", "competition for nutrients increases",
    "membrane transport becomes the bottleneck", "protein structure starts to denature",
]
ERROR_SOURCES = [
    "measurement error in timing", "contamination of one sample", "uneven mixing of the solution",
    "a miscalibrated scale", "temperature drift during the trial",
]

TEMPLATES = {
    1: [
        "The {subject} changed because of the {factor}.",
        "Our results show that the {measure} was {direction}.",
        "The experiment worked and the hypothesis was {verdict}.",
        "In conclusion the {factor} affects the {measure}.",
        "This lab was {feeling} and we learned a lot about the {subject}.",
        "The {measure} was {direction} like we thought it would be.",
    ],
    2: [
        "The data from trial {n} shows the {measure} went {direction} to {value} units.",
        "In addition the average {measure} was higher in the {cond} group.",
        "Also the {subject} in tube {n} grew faster, which supports our hypothesis.",
        "The results from {n} groups support the prediction about the {factor}.",
        "The mean {measure} of {value} units agrees with the hypothesis.",
    ],
    3: [
        "However trial {n} showed a decrease in {measure}, which contradicts the overall trend.",
        "Although most groups followed the pattern, the {cond} group was an outlier, whereas the others agreed.",
        "This inconsistency can be explained by {error}, therefore the trend still holds.",
        "Comparing the {cond} and {cond2} groups reveals a relationship between {factor} and {measure}.",
        "Some data contradict the hypothesis, but the variation is small relative to the effect of {factor}.",
    ],
    4: [
        "If the {factor} were increased further, we would expect the {measure} to plateau, since {mechanism}.",
        "These results might suggest that {mechanism}, although further experiments are needed to confirm this.",
        "Previous studies in the literature report a similar pattern, which suggests that {mechanism} is likely.",
        "Consequently the conclusion remains tentative unless {error} is controlled.",
        "Hypothetically, a thought experiment with no {factor} would predict a baseline {measure}, possibly near zero.",
    ],
}

CONNECTIVES = frozenset({
    "because", "therefore", "however", "although", "whereas", "thus", "consequently",
    "since", "unless", "if", "which", "but", "also", "addition",
})

WORD_GROUPS = {
    "simple": ["changed", "show", "results", "worked", "hypothesis", "verdict", "conclusion",
               "affects", "lab", "fun", "interesting", "boring", "learned", "lot", "thought",
               "supported", "proven", "correct", "experiment"],
    "additive": ["data", "trial", "shows", "went", "units", "addition", "average", "higher",
                 "group", "also", "tube", "grew", "faster", "supports", "groups", "support",
                 "prediction", "mean", "agrees", "up", "down", "increased", "decreased"],
    "relational": ["however", "showed", "decrease", "contradicts", "overall", "trend",
                   "although", "followed", "pattern", "outlier", "whereas", "agreed",
                   "inconsistency", "explained", "therefore", "holds", "comparing", "reveals",
                   "relationship", "contradict", "variation", "small", "relative", "effect"],
    "conditional": ["increased", "expect", "plateau", "since", "might", "suggest", "further",
                    "experiments", "needed", "confirm", "previous", "studies", "literature",
                    "report", "similar", "suggests", "likely", "consequently", "remains",
                    "tentative", "unless", "controlled", "hypothetically", "thought",
                    "predict", "baseline", "possibly", "near", "zero"],
    "mechanism": " ".join(MECHANISMS).split(),
    "error": " ".join(ERROR_SOURCES).split(),
}


def _level_counts(size: int, levels: int, rng: np.random.Generator) -> list[int]:
    # level 1 is rare, as in real rubric data
    w = np.array([0.45] + [1.0] * (levels - 1))
    exact = size * w / w.sum()
    counts = np.maximum(np.floor(exact).astype(int), 1)
    while counts.sum() < size:
        counts[np.argmax(exact - counts)] += 1
    while counts.sum() > size:
        counts[np.argmax(counts)] -= 1
    scores = np.repeat(np.arange(1, levels + 1), counts)
    return list(rng.permutation(scores))


def _fill(template: str, topic: dict, rng: np.random.Generator) -> str:
    pick = lambda xs: xs[rng.integers(len(xs))]  # noqa: E731
    conds = list(topic["cond"])
    c1 = pick(conds)
    c2 = pick([c for c in conds if c != c1])
    return template.format(
        subject=pick(topic["subject"]), factor=pick(topic["factor"]),
        measure=pick(topic["measure"]), cond=c1, cond2=c2,
        direction=pick(["higher", "lower", "up", "down"]),
        verdict=pick(["supported", "proven", "correct"]),
        feeling=pick(["fun", "interesting", "boring"]),
        n=int(rng.integers(1, 7)), value=int(rng.integers(5, 95)),
        error=pick(ERROR_SOURCES), mechanism=pick(MECHANISMS),
    )


def generate_document(level: int, levels: int, rng: np.random.Generator, noise: float = 0.7) -> str:
    # position on the 4-level template scale, jittered per document
    q = 1.0 + 3.0 * (level - 1) / (levels - 1) + rng.normal(0.0, noise)
    tiers = np.arange(1, 5)
    w = np.exp(-((tiers - q) ** 2) / (2 * 0.8**2))
    w /= w.sum()
    n_sent = 3 + int(round(1.2 * (q - 1))) + int(rng.poisson(1.5))
    n_sent = max(n_sent, 2)
    topic = TOPICS[rng.integers(len(TOPICS))]
    sentences = []
    for _ in range(n_sent):
        tier = int(rng.choice(tiers, p=w))
        sentences.append(_fill(TEMPLATES[tier][rng.integers(len(TEMPLATES[tier]))], topic, rng))
    return " ".join(sentences)


def generate_corpus(size: int = 150, levels: int = 4, seed: int = 0, noise: float = 0.7):
    """Rows ``(id, score, text)``; every level appears at least once."""
    if levels < 2:
        raise ValueError("levels must be >= 2")
    if size < levels:
        raise ValueError("size must be >= levels")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5E7]))
    width = max(4, int(math.log10(size)) + 1)
    return [
        (f"S{k + 1:0{width}d}", int(s), generate_document(int(s), levels, rng, noise))
        for k, s in enumerate(_level_counts(size, levels, rng))
    ]


def write_synthetic_corpus(path: str | Path, size: int = 150, levels: int = 4, seed: int = 0,
                           noise: float = 0.7) -> list:
    rows = generate_corpus(size, levels, seed, noise)
    write_corpus_csv(path, rows)
    return rows


def synthetic_vocabulary() -> dict[str, str]:
    """Raw word -> group name over every word the templates can emit."""
    vocab = {}
    for group, words in WORD_GROUPS.items():
        for w in words:
            vocab.setdefault(w.lower(), group)
    for k, topic in enumerate(TOPICS):
        for key in ("subject", "factor", "measure", "cond"):
            for phrase in topic[key]:
                for w in phrase.split():
                    vocab.setdefault(w.lower(), f"topic{k}")
    return vocab


def write_synthetic_embeddings(path: str | Path, dim: int = 50, seed: int = 0,
                               config: PreprocessConfig | None = None) -> int:
    """GloVe-format vectors keyed by normalized tokens; words in one group cluster."""
    config = config or PreprocessConfig()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE11B]))
    vocab = synthetic_vocabulary()
    groups = sorted(set(vocab.values()))
    centers = {g: rng.normal(0.0, 0.3, dim) for g in groups}
    vectors = {}
    for word in sorted(vocab):
        for tok in preprocess(word, config):
            if tok not in vectors:
                vectors[tok] = centers[vocab[word]] + rng.normal(0.0, 0.15, dim)
    with Path(path).open("w", encoding="utf-8") as fh:
        for tok, vec in vectors.items():
            fh.write(tok + " " + " ".join(f"{x:.6f}" for x in vec) + "\n")
    return len(vectors)


def connective_count(text: str) -> int:
    """Distinct connective words in a raw text."""
    words = {w.strip(".,;:!?").lower() for w in text.split()}
    return len(words & CONNECTIVES)
