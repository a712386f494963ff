"""Dataset formats: CoNLL token/tag files, relation TSV, SQuAD-shaped QA JSON,
BioASQ-shaped factoid JSON, plus k-fold splitting.

Parsers validate eagerly and report line numbers; every writer's output
parses back to the same records.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InputError
from .metrics import normalize_answer
from .tags import bio_to_bioes, check_bio, check_bioes, repair_bioes

DOCSTART = "-DOCSTART-"


@dataclass(frozen=True)
class LabeledSentence:
    words: tuple[str, ...]
    tags: tuple[str, ...]

    def __post_init__(self):
        if len(self.words) != len(self.tags):
            raise InputError(f"{len(self.words)} words vs {len(self.tags)} tags")


@dataclass(frozen=True)
class RelationLabelSet:
    """Ordered relation labels; the first is the negative class by default."""

    labels: tuple[str, ...]
    negative: str = ""
    required_placeholders: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.labels) < 2 or len(set(self.labels)) != len(self.labels):
            raise InputError("label set needs >= 2 unique labels")
        if not self.negative:
            object.__setattr__(self, "negative", self.labels[0])
        if self.negative not in self.labels:
            raise InputError(f"negative label {self.negative!r} not in label set")

    @property
    def positive(self) -> set[str]:
        return {l for l in self.labels if l != self.negative}


@dataclass(frozen=True)
class RelationExample:
    id: str
    sentence: str  # already anonymized
    label: str


@dataclass(frozen=True)
class QAExample:
    id: str
    question: str
    passage: str
    answers: tuple[tuple[str, int], ...] = ()  # located (text, char start) spans
    gold_answers: tuple[str, ...] = ()  # answer strings for matching/scoring

    def __post_init__(self):
        for text, start in self.answers:
            if self.passage[start:start + len(text)] != text:
                raise InputError(
                    f"answer {text!r} does not match passage slice at {start} in {self.id}")
        if not self.gold_answers and self.answers:
            object.__setattr__(self, "gold_answers", tuple(t for t, _ in self.answers))


# ---------------------------------------------------------------------------
# CoNLL
# ---------------------------------------------------------------------------

def parse_conll(stream, scheme: str = "bioes", lenient: bool = False,
                warn=None) -> list[LabeledSentence]:
    """Parse token/tag lines (last whitespace field is the tag; blank line
    ends a sentence; -DOCSTART- lines are skipped).

    scheme "bioes" or "bio" selects the validity check. With lenient=True an
    invalid sequence is repaired instead of rejected and warn(message) is
    called when provided.
    """
    if isinstance(stream, (str, os.PathLike)):
        with open(stream, encoding="utf-8") as f:
            return parse_conll(f, scheme, lenient, warn)
    if scheme not in ("bioes", "bio"):
        raise FormatError(f"unknown tag scheme {scheme!r}")
    sentences = []
    words: list[str] = []
    tags: list[str] = []
    sentence_start = 1

    def flush(lineno):
        nonlocal words, tags, sentence_start
        if not words:
            return
        try:
            if scheme == "bio":
                check_bio(tags)
            else:
                check_bioes(tags)
            fixed = tags
        except InputError as e:
            if not lenient:
                raise FormatError(
                    f"invalid {scheme.upper()} sequence in sentence starting at line "
                    f"{sentence_start}: {e}") from None
            fixed = repair_bioes(tags) if scheme == "bioes" else tags
            if warn is not None:
                warn(f"repaired sentence starting at line {sentence_start}: {e}")
        sentences.append(LabeledSentence(tuple(words), tuple(fixed)))
        words, tags = [], []
        sentence_start = lineno + 1

    lineno = 0
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            flush(lineno)
            continue
        if line.startswith(DOCSTART):
            continue
        fields = line.split()
        if len(fields) < 2:
            raise FormatError(f"line {lineno}: expected token and tag, got {line!r}")
        words.append(fields[0])
        tags.append(fields[-1])
    flush(lineno)
    return sentences


def write_conll(sentences: list[LabeledSentence], sink) -> None:
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="utf-8", newline="\n") as f:
            write_conll(sentences, f)
            return
    for sentence in sentences:
        for word, tag in zip(sentence.words, sentence.tags):
            sink.write(f"{word} {tag}\n")
        sink.write("\n")


def load_ner_dataset(stream, scheme: str = "bioes", lenient: bool = False) -> list[LabeledSentence]:
    """Parse and normalize to BIOES (BIO files are converted on load)."""
    sentences = parse_conll(stream, scheme=scheme, lenient=lenient)
    if scheme == "bio":
        sentences = [LabeledSentence(s.words, tuple(bio_to_bioes(list(s.tags))))
                     for s in sentences]
    return sentences


# ---------------------------------------------------------------------------
# relation TSV
# ---------------------------------------------------------------------------

def parse_re_tsv(stream, labels: RelationLabelSet) -> list[RelationExample]:
    """Tab-separated id, sentence, label; optional header (first cell "id")."""
    if isinstance(stream, (str, os.PathLike)):
        with open(stream, encoding="utf-8") as f:
            return parse_re_tsv(f, labels)
    examples = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        cells = line.split("\t")
        if lineno == 1 and cells and cells[0].strip().lower() == "id":
            continue
        if len(cells) != 3:
            raise FormatError(f"line {lineno}: expected 3 tab-separated columns, got {len(cells)}")
        ex_id, sentence, label = (c.strip() for c in cells)
        if label not in labels.labels:
            raise FormatError(f"line {lineno}: unknown label {label!r} "
                              f"(expected one of {list(labels.labels)})")
        for placeholder in labels.required_placeholders:
            if placeholder not in sentence:
                raise FormatError(f"line {lineno}: sentence lacks placeholder {placeholder}")
        examples.append(RelationExample(ex_id, sentence, label))
    return examples


def write_re_tsv(examples: list[RelationExample], sink) -> None:
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="utf-8", newline="\n") as f:
            write_re_tsv(examples, f)
            return
    sink.write("id\tsentence\tlabel\n")
    for ex in examples:
        sink.write(f"{ex.id}\t{ex.sentence}\t{ex.label}\n")


# ---------------------------------------------------------------------------
# QA JSON (SQuAD v1.1-shaped) and BioASQ-shaped factoid records
# ---------------------------------------------------------------------------

def parse_qa_json(source) -> list[QAExample]:
    """Read data -> paragraphs -> qas with id/question/answers{text, answer_start}."""
    doc = _load_json(source)
    try:
        examples = []
        for article in doc["data"]:
            for paragraph in article["paragraphs"]:
                passage = paragraph["context"]
                for qa in paragraph["qas"]:
                    answers = tuple((a["text"], int(a["answer_start"]))
                                    for a in qa["answers"])
                    examples.append(QAExample(
                        id=str(qa["id"]), question=qa["question"], passage=passage,
                        answers=answers))
        return examples
    except (KeyError, TypeError) as e:
        raise FormatError(f"malformed QA JSON: {e!r}") from None


def write_qa_json(examples: list[QAExample], sink, title: str = "dataset") -> None:
    paragraphs = [{
        "context": ex.passage,
        "qas": [{
            "id": ex.id,
            "question": ex.question,
            "answers": [{"text": t, "answer_start": s} for t, s in ex.answers],
        }],
    } for ex in examples]
    doc = {"version": "1.1", "data": [{"title": title, "paragraphs": paragraphs}]}
    _dump_json(doc, sink)


def normalized_occurrences(passage: str, answer: str,
                           normalizer=normalize_answer) -> list[tuple[int, int]]:
    """(start, end) character spans of the passage whose normalization equals
    the normalized answer. Matching is performed on an incrementally
    normalized copy of the passage with an index map back to the original."""
    target = normalizer(answer)
    if not target:
        return []
    norm_chars: list[str] = []
    index_map: list[int] = []  # original index per normalized char
    pending_space = False
    for i, ch in enumerate(passage):
        if ch.isspace():
            pending_space = bool(norm_chars)
            continue
        if pending_space:
            norm_chars.append(" ")
            index_map.append(i)  # the space maps to the next real char
            pending_space = False
        for folded in ch.casefold():
            norm_chars.append(folded)
            index_map.append(i)
    norm = "".join(norm_chars)

    spans = []
    start = norm.find(target)
    while start != -1:
        end_norm = start + len(target) - 1
        orig_start = index_map[start]
        orig_end = index_map[end_norm] + 1
        spans.append((orig_start, orig_end))
        start = norm.find(target, start + 1)
    return spans


def read_bioasq_questions(source) -> list[dict]:
    doc = _load_json(source)
    if "questions" not in doc or not isinstance(doc["questions"], list):
        raise FormatError("BioASQ JSON must contain a 'questions' list")
    return doc["questions"]


def _gold_strings(exact_answer) -> list[str]:
    """BioASQ exact_answer may be a string, a list, or a list of synonym lists."""
    if isinstance(exact_answer, str):
        return [exact_answer]
    out = []
    for item in exact_answer:
        out.extend(_gold_strings(item))
    return out


def bioasq_to_extractive(questions: list[dict], passages: dict[str, str],
                         normalizer=normalize_answer):
    """Convert factoid questions to extractive QAExamples.

    For each (question, referenced passage) pair, every normalized occurrence
    of every gold answer becomes a located span; pairs with no occurrence are
    dropped and counted. Returns (examples, dropped_count, skipped_non_factoid).
    """
    factoids = [q for q in questions if q.get("type") == "factoid"]
    skipped = len(questions) - len(factoids)
    missing = sorted({str(d) for q in factoids for d in q.get("documents", [])
                      if d not in passages})
    if missing:
        raise FormatError(f"questions reference unknown passage ids: {missing}")

    examples = []
    dropped = 0
    for q in factoids:
        golds = tuple(_gold_strings(q.get("exact_answer", [])))
        doc_ids = q.get("documents", [])
        for i, doc_id in enumerate(doc_ids):
            passage = passages[doc_id]
            spans = []
            for gold in golds:
                for start, end in normalized_occurrences(passage, gold, normalizer):
                    spans.append((passage[start:end], start))
            if spans:
                examples.append(QAExample(
                    id=f"{q.get('id', 'q')}_{i}", question=q.get("body", ""),
                    passage=passage, answers=tuple(spans), gold_answers=golds))
            else:
                dropped += 1
    return examples, dropped, skipped


def _load_json(source):
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as f:
            return json.load(f)
    if isinstance(source, (dict, list)):
        return source
    return json.load(source)


def _dump_json(doc, sink):
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="utf-8", newline="\n") as f:
            json.dump(doc, f, indent=1, sort_keys=True)
            f.write("\n")
        return
    json.dump(doc, sink, indent=1, sort_keys=True)
    sink.write("\n")


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------

def kfold_split(n_items: int, k: int, seed: int) -> list[tuple[list[int], list[int]]]:
    """k disjoint (train, test) index partitions; test folds cover 0..n-1
    exactly once and differ in size by at most 1. Deterministic under seed."""
    if k < 2:
        raise InputError("k must be >= 2")
    if k > n_items:
        raise InputError(f"k={k} exceeds n_items={n_items}")
    order = np.random.default_rng(seed).permutation(n_items)
    folds = []
    bounds = np.linspace(0, n_items, k + 1).round().astype(int)
    for i in range(k):
        test = sorted(order[bounds[i]:bounds[i + 1]].tolist())
        test_set = set(test)
        train = [j for j in range(n_items) if j not in test_set]
        folds.append((train, test))
    return folds
