"""Evaluation metrics: entity-level P/R/F1, classification P/R/F1, and the
ranked-answer triple (strict accuracy, lenient accuracy, MRR), with
micro-averaging across datasets by pooling raw counts.

Conventions, documented because scorers differ: 0/0 precision or recall is 0,
except when gold and predictions are empty everywhere, which scores 1.0
(perfect vacuous agreement). Raw counts are always reported so any other
convention can be re-derived.
"""

from __future__ import annotations

import hashlib
import json
import math
import string
from dataclasses import dataclass, field

from .errors import InputError
from .tags import check_bioes, parse_tag

N_BEST_DEFAULT = 5


@dataclass(frozen=True, order=True)
class EntitySpan:
    start: int
    end: int  # inclusive word index
    entity_type: str

    def __post_init__(self):
        if self.start > self.end:
            raise InputError(f"span start {self.start} > end {self.end}")


def spans_from_tags(tags: list[str]) -> set[EntitySpan]:
    """Entity spans of a valid BIOES sequence: S singletons and B..E runs."""
    check_bioes(list(tags))
    spans = set()
    start = None
    for i, tag in enumerate(tags):
        kind, typ = parse_tag(tag)
        if kind == "S":
            spans.add(EntitySpan(i, i, typ))
        elif kind == "B":
            start = i
        elif kind == "E":
            spans.add(EntitySpan(start, i, typ))
            start = None
    return spans


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    if tp == 0 and fp == 0 and fn == 0:
        return 1.0, 1.0, 1.0  # vacuous agreement
    p = tp / (tp + fp) if tp + fp > 0 else 0.0
    r = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def entity_prf(gold: list[set[EntitySpan]], pred: list[set[EntitySpan]]):
    """Exact-match entity P/R/F1 over parallel per-sentence span sets.

    A prediction counts only when start, end and type all match a gold span.
    Returns (P, R, F1, counts) with counts = {"tp", "fp", "fn"}.
    """
    if len(gold) != len(pred):
        raise InputError(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    tp = fp = fn = 0
    for g, p in zip(gold, pred):
        inter = len(g & p)
        tp += inter
        fp += len(p) - inter
        fn += len(g) - inter
    p, r, f1 = _prf(tp, fp, fn)
    return p, r, f1, {"tp": tp, "fp": fp, "fn": fn}


def micro_average(count_sets: list[dict]) -> tuple[float, float, float]:
    """Pool tp/fp/fn across datasets, then apply the formulas once."""
    if not count_sets:
        raise InputError("micro_average needs at least one dataset")
    tp = sum(c["tp"] for c in count_sets)
    fp = sum(c["fp"] for c in count_sets)
    fn = sum(c["fn"] for c in count_sets)
    return _prf(tp, fp, fn)


def classification_prf(gold: list[str], pred: list[str], positive: set[str]):
    """Micro P/R/F1 over the positive label set (multi-class: all non-negative
    labels pooled). Returns (P, R, F1, counts)."""
    if len(gold) != len(pred):
        raise InputError(f"{len(gold)} gold labels vs {len(pred)} predictions")
    tp = fp = fn = 0
    for g, p in zip(gold, pred):
        if p in positive:
            if p == g:
                tp += 1
            else:
                fp += 1
                if g in positive:
                    fn += 1
        elif g in positive:
            fn += 1
    p, r, f1 = _prf(tp, fp, fn)
    return p, r, f1, {"tp": tp, "fp": fp, "fn": fn}


def normalize_answer(s: str) -> str:
    """Case-fold, collapse whitespace, trim, strip outer ASCII punctuation."""
    folded = s.casefold()
    collapsed = " ".join(folded.split())
    return collapsed.strip(string.punctuation + " ")


def answer_ranks(ranked_answers: list[list[str]], gold_answers: list[list[str]],
                 normalizer=normalize_answer, n_best: int = N_BEST_DEFAULT) -> list[float]:
    """1-based rank of the first correct answer per question, inf if absent.

    Only the first n_best ranked answers are considered.
    """
    if len(ranked_answers) != len(gold_answers):
        raise InputError("ranked and gold lists differ in length")
    ranks = []
    for answers, golds in zip(ranked_answers, gold_answers):
        normalized_golds = {normalizer(g) for g in golds}
        rank = math.inf
        for i, answer in enumerate(answers[:n_best], start=1):
            if normalizer(answer) in normalized_golds:
                rank = i
                break
        ranks.append(rank)
    return ranks


def qa_metrics(ranked_answers: list[list[str]], gold_answers: list[list[str]],
               normalizer=normalize_answer, n_best: int = N_BEST_DEFAULT):
    """(strict, lenient, MRR) plus per-rank tallies.

    strict = fraction answered at rank 1, lenient = within the first n_best,
    MRR = mean of 1/rank with 0 for unanswered. An empty ranked list scores
    (0, 0, 0) for that question.
    """
    ranks = answer_ranks(ranked_answers, gold_answers, normalizer, n_best)
    n = len(ranks)
    if n == 0:
        raise InputError("no questions to score")
    tallies = {"questions": n, "by_rank": [0] * n_best, "unanswered": 0}
    for r in ranks:
        if math.isinf(r):
            tallies["unanswered"] += 1
        else:
            tallies["by_rank"][int(r) - 1] += 1
    strict = tallies["by_rank"][0] / n
    lenient = sum(tallies["by_rank"]) / n
    mrr = sum(0.0 if math.isinf(r) else 1.0 / r for r in ranks) / n
    return strict, lenient, mrr, tallies


def pool_qa_tallies(tally_sets: list[dict]) -> tuple[float, float, float]:
    """Micro-average ranked-answer metrics by pooling questions."""
    if not tally_sets:
        raise InputError("nothing to pool")
    n_best = len(tally_sets[0]["by_rank"])
    n = sum(t["questions"] for t in tally_sets)
    by_rank = [sum(t["by_rank"][i] for t in tally_sets) for i in range(n_best)]
    strict = by_rank[0] / n
    lenient = sum(by_rank) / n
    mrr = sum(by_rank[i] / (i + 1) for i in range(n_best)) / n
    return strict, lenient, mrr


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    """Per-dataset metric triples with raw counts and micro aggregates."""

    task: str  # "ner" | "re" | "qa"
    datasets: list[dict] = field(default_factory=list)
    provenance: str = "unspecified"
    config_fingerprint: str = "-"

    def add_dataset(self, name: str, metrics: dict, counts: dict) -> None:
        self.datasets.append({"name": name, "metrics": metrics, "counts": counts})

    @property
    def micro(self) -> dict:
        if not self.datasets:
            return {}
        counts = [d["counts"] for d in self.datasets]
        if self.task == "qa":
            s, l, m = pool_qa_tallies(counts)
            return {"strict": s, "lenient": l, "mrr": m}
        p, r, f1 = micro_average(counts)
        return {"precision": p, "recall": r, "f1": f1}

    def primary_metric(self) -> float:
        """Dev-selection scalar: micro F1 for NER/RE, MRR for QA."""
        micro = self.micro
        return micro["mrr"] if self.task == "qa" else micro["f1"]

    def to_json(self, indent: int | None = 2) -> str:
        doc = {
            "task": self.task,
            "datasets": self.datasets,
            "counts": [d["counts"] for d in self.datasets],
            "micro": self.micro,
            "provenance": self.provenance,
            "config_fingerprint": self.config_fingerprint,
        }
        return json.dumps(doc, indent=indent, sort_keys=True)

    def to_table(self) -> str:
        """Aligned text table, one dataset per row plus the micro row."""
        if self.task == "qa":
            headers = ["dataset", "S", "L", "M"]
            keys = ["strict", "lenient", "mrr"]
        else:
            headers = ["dataset", "P", "R", "F"]
            keys = ["precision", "recall", "f1"]
        rows = [[d["name"]] + [f"{d['metrics'][k] * 100:.2f}" for k in keys]
                for d in self.datasets]
        if self.datasets:
            rows.append(["micro"] + [f"{self.micro[k] * 100:.2f}" for k in keys])
        widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
                  for i, h in enumerate(headers)]
        lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
        for row in rows:
            lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
        return "\n".join(lines)


def aggregate_folds(reports: list[EvalReport]) -> dict:
    """Cross-validation aggregation, both ways: mean of per-fold metrics and
    metrics of pooled counts."""
    if not reports:
        raise InputError("no fold reports")
    task = reports[0].task
    micros = [r.micro for r in reports]
    keys = list(micros[0])
    mean_of_folds = {k: sum(m[k] for m in micros) / len(micros) for k in keys}
    counts = [d["counts"] for r in reports for d in r.datasets]
    if task == "qa":
        s, l, m = pool_qa_tallies(counts)
        pooled = {"strict": s, "lenient": l, "mrr": m}
    else:
        p, r, f1 = micro_average(counts)
        pooled = {"precision": p, "recall": r, "f1": f1}
    return {"mean_of_folds": mean_of_folds, "pooled": pooled, "folds": len(reports)}


def config_fingerprint(payload: str) -> str:
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]
