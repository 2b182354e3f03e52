"""Data model for IO-labeled token sequences: preprocessing, label/span
conversion, corpus file loading, and lexicon-based pool filtering."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from adrx.errors import ConfigError, DataFormatError

PAD_TOKEN = "<pad>"
URL_TOKEN = "<url>"
USER_TOKEN = "<user>"
RESERVED_TOKENS = (PAD_TOKEN, URL_TOKEN, USER_TOKEN)


class Label(enum.IntEnum):
    """The four output labels. Enum order doubles as the decode tie-break
    order (lowest index wins)."""

    I_ADR = 0
    I_OTHER = 1
    O = 2
    PAD = 3


LABEL_STRINGS = {
    Label.I_ADR: "I-ADR",
    Label.I_OTHER: "I-Other",
    Label.O: "O",
    Label.PAD: "PAD",
}
_STRING_TO_LABEL = {text: label for label, text in LABEL_STRINGS.items()}

# Labels that may appear in corpus files; PAD is introduced only by pad().
FILE_LABELS = (Label.I_ADR, Label.I_OTHER, Label.O)

ENTITY_LABELS = (Label.I_ADR, Label.I_OTHER)


def label_from_string(text: str) -> Label:
    label = _STRING_TO_LABEL.get(text)
    if label is None or label is Label.PAD:
        raise ValueError(f"unknown label {text!r}")
    return label


@dataclass
class AnnotatedSequence:
    """A token sequence with one IO label per token.

    ``original_length`` counts the real (pre-padding) tokens; labels at and
    beyond it are exactly the PAD positions. Instances are treated as
    immutable once constructed.
    """

    tokens: list[str]
    labels: list[Label]
    original_length: int
    source_id: str = ""

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.labels):
            raise ValueError(
                f"{len(self.tokens)} tokens but {len(self.labels)} labels"
            )
        if not 1 <= self.original_length <= len(self.tokens):
            raise ValueError(
                f"original_length {self.original_length} out of range "
                f"for {len(self.tokens)} tokens"
            )
        for i, label in enumerate(self.labels):
            if (label == Label.PAD) != (i >= self.original_length):
                raise ValueError(
                    f"label {LABEL_STRINGS[label]} at position {i} violates "
                    f"padding boundary {self.original_length}"
                )


@dataclass(frozen=True)
class Span:
    """A maximal run of same-kind entity labels, inclusive on both ends."""

    start: int
    end: int
    kind: Label

    def __post_init__(self) -> None:
        if not 0 <= self.start <= self.end:
            raise ValueError(f"bad span bounds [{self.start}, {self.end}]")
        if self.kind not in ENTITY_LABELS:
            raise ValueError(f"span kind must be an entity label, got {self.kind!r}")

    def overlaps(self, other: "Span") -> bool:
        return self.start <= other.end and other.start <= self.end


@dataclass
class Corpus:
    """An ordered collection of sequences plus the padding length in effect."""

    examples: list[AnnotatedSequence]
    max_length: int

    @classmethod
    def from_sequences(cls, sequences: Iterable[AnnotatedSequence]) -> "Corpus":
        examples = list(sequences)
        max_length = max((s.original_length for s in examples), default=0)
        return cls(examples, max_length)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)


@dataclass(frozen=True)
class Lexicon:
    """Keyword inventories used to filter the unlabeled pool."""

    drug_names: frozenset[str]
    adr_phrases: frozenset[str]


_URL_RE = re.compile(r"https?://\S+", re.IGNORECASE)
_MENTION_RE = re.compile(r"@\w+")
_DISALLOWED_RE = re.compile(r"[^a-z0-9'\-]+")

_emoticon_pattern: re.Pattern | None = None


def _emoticon_regex() -> re.Pattern:
    """Compile the shipped emoticon inventory into one token-level pattern."""
    global _emoticon_pattern
    if _emoticon_pattern is None:
        raw = (
            resources.files("adrx").joinpath("data/emoticons.txt").read_text("utf-8")
        )
        lines = [
            line.strip()
            for line in raw.splitlines()
            if line.strip() and not line.lstrip().startswith("#")
        ]
        _emoticon_pattern = re.compile("|".join(f"(?:{line})" for line in lines))
    return _emoticon_pattern


def preprocess(raw_text: str) -> list[str]:
    """Normalize one raw post into word tokens.

    Links become ``<url>``, user mentions become ``<user>``, emoticons are
    dropped, remaining text is lowercased and stripped of characters other
    than letters, digits, apostrophes and intra-word hyphens. Returns an
    empty list when nothing survives; callers drop such sequences.

    Idempotent on its own output.
    """
    emoticon = _emoticon_regex()
    text = _URL_RE.sub(f" {URL_TOKEN} ", raw_text)
    text = _MENTION_RE.sub(f" {USER_TOKEN} ", text)
    text = text.replace("’", "'").lower()
    tokens: list[str] = []
    for token in text.split():
        if token in RESERVED_TOKENS:
            tokens.append(token)
            continue
        if emoticon.fullmatch(token):
            continue
        token = _DISALLOWED_RE.sub("", token).strip("'-")
        # Re-check after stripping so one pass equals two: "x#d" -> "xd"
        # must not outlive the emoticon filter it would fail next time.
        if token and not emoticon.fullmatch(token):
            tokens.append(token)
    return tokens


def pad(
    sequences: Iterable[AnnotatedSequence], max_length: int | None = None
) -> Corpus:
    """Pad every sequence to ``max_length`` with ``<pad>``/PAD.

    When ``max_length`` is omitted it is the longest original length seen.
    Sequences longer than ``max_length`` are truncated to it.
    """
    seqs = list(sequences)
    if max_length is None:
        if not seqs:
            raise ValueError("cannot infer max_length from an empty sequence list")
        max_length = max(s.original_length for s in seqs)
    if max_length < 1:
        raise ValueError(f"max_length must be >= 1, got {max_length}")
    padded = []
    for seq in seqs:
        keep = min(seq.original_length, max_length)
        tokens = list(seq.tokens[:keep]) + [PAD_TOKEN] * (max_length - keep)
        labels = list(seq.labels[:keep]) + [Label.PAD] * (max_length - keep)
        padded.append(AnnotatedSequence(tokens, labels, keep, seq.source_id))
    return Corpus(padded, max_length)


def labels_to_spans(labels: Sequence[Label]) -> list[Span]:
    """Collapse maximal runs of identical entity labels into spans.

    IO encoding has no Begin tag, so adjacent same-kind words always form a
    single span. O and PAD positions separate runs and yield no spans.
    """
    spans: list[Span] = []
    i = 0
    n = len(labels)
    while i < n:
        kind = labels[i]
        if kind in ENTITY_LABELS:
            j = i
            while j + 1 < n and labels[j + 1] == kind:
                j += 1
            spans.append(Span(i, j, kind))
            i = j + 1
        else:
            i += 1
    return spans


def spans_to_labels(spans: Iterable[Span], length: int) -> list[Label]:
    """Inverse of labels_to_spans, painting spans onto an all-O canvas.

    Overlapping spans raise ValueError. Note the round trip
    ``labels_to_spans(spans_to_labels(s, n))`` merges adjacent same-kind
    spans into one, because IO encoding cannot represent the boundary.
    """
    labels = [Label.O] * length
    for span in spans:
        if span.end >= length:
            raise ValueError(f"span {span} exceeds sequence length {length}")
        for i in range(span.start, span.end + 1):
            if labels[i] != Label.O:
                raise ValueError(f"span {span} overlaps an earlier span at {i}")
            labels[i] = span.kind
    return labels


def load_labeled(path: str | Path) -> Corpus:
    """Read a labeled corpus in the TOKEN<TAB>LABEL column format.

    Blank lines separate sequences. Unknown labels and malformed lines
    raise DataFormatError naming the offending line.
    """
    path = Path(path)
    examples: list[AnnotatedSequence] = []
    tokens: list[str] = []
    labels: list[Label] = []

    def flush() -> None:
        if tokens:
            examples.append(
                AnnotatedSequence(
                    list(tokens),
                    list(labels),
                    len(tokens),
                    f"{path.name}#{len(examples) + 1}",
                )
            )
            tokens.clear()
            labels.clear()

    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                flush()
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataFormatError(
                    f"{path}:{lineno}: expected TOKEN<TAB>LABEL, "
                    f"found {len(parts)} column(s)"
                )
            token, label_text = parts
            if not token:
                raise DataFormatError(f"{path}:{lineno}: empty token")
            try:
                label = label_from_string(label_text)
            except ValueError:
                raise DataFormatError(
                    f"{path}:{lineno}: unknown label {label_text!r}"
                ) from None
            tokens.append(token)
            labels.append(label)
    flush()
    return Corpus.from_sequences(examples)


def load_unlabeled(path: str | Path) -> list[AnnotatedSequence]:
    """Read one raw post per line, preprocess it, and label everything O.

    Lines that preprocess to nothing are dropped.
    """
    path = Path(path)
    sequences = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            tokens = preprocess(line)
            if not tokens:
                continue
            sequences.append(
                AnnotatedSequence(
                    tokens,
                    [Label.O] * len(tokens),
                    len(tokens),
                    f"{path.name}#{lineno}",
                )
            )
    return sequences


def load_lexicon(drug_path: str | Path, adr_path: str | Path) -> Lexicon:
    """Read the two one-phrase-per-line lexicon files."""

    def read_phrases(p: str | Path) -> frozenset[str]:
        with open(p, encoding="utf-8") as handle:
            phrases = frozenset(
                line.strip().lower() for line in handle if line.strip()
            )
        if not phrases:
            raise ConfigError(f"lexicon file {p} is empty")
        return phrases

    return Lexicon(read_phrases(drug_path), read_phrases(adr_path))


def _phrases_by_length(phrases: Iterable[str]) -> dict[int, set[tuple[str, ...]]]:
    grouped: dict[int, set[tuple[str, ...]]] = {}
    for phrase in phrases:
        tokens = tuple(preprocess(phrase))
        if tokens:
            grouped.setdefault(len(tokens), set()).add(tokens)
    return grouped


def _contains_any(
    tokens: Sequence[str], grouped: dict[int, set[tuple[str, ...]]]
) -> bool:
    for length, phrases in grouped.items():
        for i in range(len(tokens) - length + 1):
            if tuple(tokens[i : i + length]) in phrases:
                return True
    return False


def lexicon_filter(
    sequences: Iterable[AnnotatedSequence], lexicon: Lexicon
) -> list[AnnotatedSequence]:
    """Keep sequences containing at least one drug name and one ADR phrase.

    Multi-word phrases match as consecutive token subsequences over the
    preprocessed tokens; order of the input is preserved.
    """
    if not lexicon.drug_names or not lexicon.adr_phrases:
        raise ConfigError("lexicon_filter requires non-empty lexicons")
    drugs = _phrases_by_length(lexicon.drug_names)
    adrs = _phrases_by_length(lexicon.adr_phrases)
    if not drugs or not adrs:
        raise ConfigError("lexicon phrases preprocess to nothing")
    kept = []
    for seq in sequences:
        real = seq.tokens[: seq.original_length]
        if _contains_any(real, drugs) and _contains_any(real, adrs):
            kept.append(seq)
    return kept
