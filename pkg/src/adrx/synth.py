"""Synthetic corpus generator for desk-scale experiments.

The real annotated tweet corpora cannot be redistributed, so experiments
and acceptance runs use a generated stand-in with the same shape: a
background vocabulary, designated "drug" trigger words, and planted
multi-word "ADR phrases" drawn from a separate sub-vocabulary. An ADR
phrase is labeled I-ADR exactly when a drug token occurs earlier in the
sequence; the same phrase planted before any drug is a decoy labeled O.
That contextual rule leaves a supervised model trained on few examples
with real headroom, which pseudo-labeled pool data can close.

Labels are exact by construction, every labeled sequence contains at
least one drug name and one ADR phrase (so it passes the lexicon filter),
and the unlabeled pool is drawn from the same process with labels
discarded.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from adrx.corpus import LABEL_STRINGS, AnnotatedSequence, Label
from adrx.errors import ConfigError
from adrx.fileio import atomic_write_text

MAX_ADR_PHRASE_LEN = 3

LABELED_FILE = "labeled.tsv"
UNLABELED_FILE = "unlabeled.txt"
DRUG_LEXICON_FILE = "lexicon_drugs.txt"
ADR_LEXICON_FILE = "lexicon_adr.txt"


@dataclass(frozen=True)
class SynthConfig:
    n_labeled: int = 50
    n_unlabeled: int = 2000
    background_vocab: int = 120
    adr_vocab: int = 16
    n_adr_phrases: int = 24
    n_drugs: int = 6
    other_vocab: int = 8
    n_other_phrases: int = 6
    len_min: int = 8
    len_max: int = 16
    decoy_rate: float = 0.35
    extra_adr_rate: float = 0.30
    other_rate: float = 0.30
    seed: int = 0

    def __post_init__(self) -> None:
        counts = {
            "n_labeled": self.n_labeled,
            "n_unlabeled": self.n_unlabeled,
            "background_vocab": self.background_vocab,
            "adr_vocab": self.adr_vocab,
            "n_adr_phrases": self.n_adr_phrases,
            "n_drugs": self.n_drugs,
            "other_vocab": self.other_vocab,
            "n_other_phrases": self.n_other_phrases,
        }
        for name, value in counts.items():
            if value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")
        if not 1 <= self.len_min <= self.len_max:
            raise ConfigError("need 1 <= len_min <= len_max")
        if self.len_min < 1 + MAX_ADR_PHRASE_LEN:
            raise ConfigError(
                f"len_min must be >= {1 + MAX_ADR_PHRASE_LEN} so a drug plus "
                "one ADR phrase always fits"
            )
        for name in ("decoy_rate", "extra_adr_rate", "other_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


@dataclass
class SynthData:
    labeled: list[AnnotatedSequence]
    unlabeled_texts: list[str]
    drug_names: list[str]
    adr_phrases: list[str]


def _build_phrases(
    rng: np.random.Generator,
    words: list[str],
    count: int,
    lengths: list[int],
    weights: list[float],
) -> list[tuple[str, ...]]:
    phrases: list[tuple[str, ...]] = []
    seen: set[tuple[str, ...]] = set()
    attempts = 0
    while len(phrases) < count:
        attempts += 1
        if attempts > 200 * count:
            raise ConfigError(
                f"cannot draw {count} distinct phrases from {len(words)} words"
            )
        n = min(int(rng.choice(lengths, p=weights)), len(words))
        idx = rng.choice(len(words), size=n, replace=False)
        phrase = tuple(words[i] for i in idx)
        if phrase not in seen:
            seen.add(phrase)
            phrases.append(phrase)
    return phrases


def _make_sequence(
    rng: np.random.Generator,
    cfg: SynthConfig,
    background: list[str],
    drugs: list[str],
    adr_phrases: list[tuple[str, ...]],
    other_phrases: list[tuple[str, ...]],
) -> tuple[list[str], list[Label]]:
    target = int(rng.integers(cfg.len_min, cfg.len_max + 1))

    def pick(phrases: list[tuple[str, ...]]) -> list[str]:
        return list(phrases[int(rng.integers(len(phrases)))])

    drug = drugs[int(rng.integers(len(drugs)))]
    pre: list[tuple[list[str], Label, str]] = []
    post: list[tuple[list[str], Label, str]] = [
        (pick(adr_phrases), Label.I_ADR, "core")
    ]
    if rng.random() < cfg.decoy_rate:
        pre.append((pick(adr_phrases), Label.O, "decoy"))
    if rng.random() < cfg.extra_adr_rate:
        post.append((pick(adr_phrases), Label.I_ADR, "extra"))
    if rng.random() < cfg.other_rate:
        item = (pick(other_phrases), Label.I_OTHER, "other")
        (pre if rng.random() < 0.5 else post).append(item)
    post = [post[i] for i in rng.permutation(len(post))]

    items = pre + [([drug], Label.O, "drug")] + post
    # Shed optional items (never the drug or the core phrase) until the
    # mandatory tokens fit the target length.
    for droppable in ("other", "extra", "decoy"):
        if sum(len(tokens) for tokens, _, _ in items) <= target:
            break
        items = [item for item in items if item[2] != droppable]

    filler = target - sum(len(tokens) for tokens, _, _ in items)
    gaps = len(items) + 1
    allocation = rng.multinomial(filler, [1.0 / gaps] * gaps)

    tokens: list[str] = []
    labels: list[Label] = []

    def add_background(count: int) -> None:
        for _ in range(count):
            tokens.append(background[int(rng.integers(len(background)))])
            labels.append(Label.O)

    for i, (item_tokens, label, _) in enumerate(items):
        add_background(int(allocation[i]))
        tokens.extend(item_tokens)
        labels.extend([label] * len(item_tokens))
    add_background(int(allocation[-1]))
    return tokens, labels


def generate(cfg: SynthConfig) -> SynthData:
    """Generate the labeled corpus, unlabeled pool, and lexicons.

    Fully determined by cfg.seed. Labeled sequences are drawn before the
    pool, so growing n_unlabeled leaves the labeled corpus unchanged
    (changing n_labeled shifts the pool).
    """
    rng = np.random.default_rng(cfg.seed)
    background = [f"w{i:03d}" for i in range(cfg.background_vocab)]
    adr_words = [f"adr{i:02d}" for i in range(cfg.adr_vocab)]
    drugs = [f"drug{i:02d}" for i in range(cfg.n_drugs)]
    other_words = [f"oth{i:02d}" for i in range(cfg.other_vocab)]
    adr_phrases = _build_phrases(
        rng, adr_words, cfg.n_adr_phrases, [1, 2, 3], [0.25, 0.5, 0.25]
    )
    other_phrases = _build_phrases(
        rng, other_words, cfg.n_other_phrases, [1, 2], [0.5, 0.5]
    )

    labeled = []
    for i in range(cfg.n_labeled):
        tokens, labels = _make_sequence(
            rng, cfg, background, drugs, adr_phrases, other_phrases
        )
        labeled.append(
            AnnotatedSequence(tokens, labels, len(tokens), f"synth#{i + 1}")
        )
    unlabeled_texts = []
    for _ in range(cfg.n_unlabeled):
        tokens, _ = _make_sequence(
            rng, cfg, background, drugs, adr_phrases, other_phrases
        )
        unlabeled_texts.append(" ".join(tokens))
    return SynthData(
        labeled,
        unlabeled_texts,
        drugs,
        [" ".join(p) for p in adr_phrases],
    )


def write_synth(data: SynthData, out_dir: str | Path) -> dict[str, Path]:
    """Write the four corpus files; byte-identical for identical inputs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    blocks = []
    for seq in data.labeled:
        blocks.append(
            "\n".join(
                f"{token}\t{LABEL_STRINGS[label]}"
                for token, label in zip(seq.tokens, seq.labels)
            )
        )
    paths = {
        "labeled": out / LABELED_FILE,
        "unlabeled": out / UNLABELED_FILE,
        "drug_lexicon": out / DRUG_LEXICON_FILE,
        "adr_lexicon": out / ADR_LEXICON_FILE,
    }
    atomic_write_text(paths["labeled"], "\n\n".join(blocks) + "\n")
    atomic_write_text(paths["unlabeled"], "\n".join(data.unlabeled_texts) + "\n")
    atomic_write_text(paths["drug_lexicon"], "\n".join(data.drug_names) + "\n")
    atomic_write_text(paths["adr_lexicon"], "\n".join(data.adr_phrases) + "\n")
    return paths
