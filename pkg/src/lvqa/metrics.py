"""Answer-quality metrics and split-level report aggregation.

All scores are percentages in [0, 100].  Candidates and references pass
through the same normalization (lowercase, punctuation stripped to
spaces, whitespace split).  METEOR is the simplified stem-matching
variant without a synonym dictionary and is labelled as such in reports.
"""

from __future__ import annotations

import csv
import math
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import MetricError

_PUNCT = str.maketrans({ch: " " for ch in string.punctuation})

METRIC_NAMES = ("bleu4", "rouge_l", "meteor_simplified", "k_acc")

# suffixes tried longest-first; stems shorter than 3 characters are kept whole
_SUFFIXES = ("ation", "tion", "ment", "ing", "ed", "es", "ly", "er", "s")


def normalize(text: str) -> list[str]:
    return text.lower().translate(_PUNCT).split()


def bleu4(candidate: list[str], reference: list[str]) -> float:
    """Geometric mean of modified n-gram precisions (n=1..4) times brevity.

    Zero counts for n >= 2 take add-one smoothing; a zero unigram
    precision short-circuits to 0.  BP = 1 if len(c) > len(r) else
    exp(1 - r/c).
    """
    if not candidate:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        cand = Counter(tuple(candidate[i:i + n])
                       for i in range(len(candidate) - n + 1))
        ref = Counter(tuple(reference[i:i + n])
                      for i in range(len(reference) - n + 1))
        matches = sum(min(count, ref[gram]) for gram, count in cand.items())
        total = max(len(candidate) - n + 1, 0)
        if n == 1:
            if matches == 0:
                return 0.0
            p = matches / total
        elif matches == 0:
            p = (matches + 1) / (total + 1)
        else:
            p = matches / total
        log_sum += math.log(p)
    c, r = len(candidate), len(reference)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return 100.0 * bp * math.exp(log_sum / 4.0)


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: list[str], reference: list[str]) -> float:
    """LCS-based F1 between candidate and reference, as a percentage."""
    if not candidate or not reference:
        return 0.0
    lcs = _lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    p = lcs / len(candidate)
    r = lcs / len(reference)
    return 100.0 * 2.0 * p * r / (p + r)


def _stem(word: str) -> str:
    for suffix in _SUFFIXES:
        if word.endswith(suffix) and len(word) - len(suffix) >= 3:
            return word[:-len(suffix)]
    return word


def _align(candidate: list[str], reference: list[str]) -> list[tuple[int, int]]:
    """Greedy one-to-one alignment: exact matches first, then stem matches."""
    pairs: list[tuple[int, int]] = []
    used_c: set[int] = set()
    used_r: set[int] = set()
    for exact in (True, False):
        for i, word in enumerate(candidate):
            if i in used_c:
                continue
            key = word if exact else _stem(word)
            for j, other in enumerate(reference):
                if j in used_r:
                    continue
                if key == (other if exact else _stem(other)):
                    pairs.append((i, j))
                    used_c.add(i)
                    used_r.add(j)
                    break
    return sorted(pairs)


def meteor_simplified(candidate: list[str], reference: list[str]) -> float:
    """Stem-augmented unigram METEOR with the standard fragmentation penalty.

    F_mean = 10PR / (R + 9P); penalty = 0.5 * (chunks / matches)^3.
    """
    if not candidate or not reference:
        return 0.0
    pairs = _align(candidate, reference)
    m = len(pairs)
    if m == 0:
        return 0.0
    p = m / len(candidate)
    r = m / len(reference)
    f_mean = 10.0 * p * r / (r + 9.0 * p)
    chunks = 1
    for (ci, ri), (cj, rj) in zip(pairs, pairs[1:]):
        if cj != ci + 1 or rj != ri + 1:
            chunks += 1
    penalty = 0.5 * (chunks / m) ** 3
    return 100.0 * f_mean * (1.0 - penalty)


def keyword_accuracy(answer: str, keywords) -> int:
    """1 iff every keyword occurs in the normalized answer, else 0."""
    keywords = list(keywords)
    if not keywords:
        raise MetricError("keyword set must be non-empty")
    tokens = normalize(answer)
    for keyword in keywords:
        needle = normalize(keyword)
        if not needle:
            raise MetricError(f"keyword {keyword!r} normalizes to nothing")
        n = len(needle)
        if not any(tokens[i:i + n] == needle for i in range(len(tokens) - n + 1)):
            return 0
    return 1


def score_answer(candidate: str, reference: str, keywords) -> dict[str, float]:
    c, r = normalize(candidate), normalize(reference)
    return {
        "bleu4": bleu4(c, r),
        "rouge_l": rouge_l(c, r),
        "meteor_simplified": meteor_simplified(c, r),
        "k_acc": 100.0 * keyword_accuracy(candidate, keywords),
    }


@dataclass
class EvalReport:
    """Per-split metric means plus the per-instance records behind them."""

    records: list[dict] = field(default_factory=list)

    def add(self, instance_id: str, qa_index: int, split: str,
            scores: dict[str, float]) -> None:
        self.records.append({"instance_id": instance_id, "qa_index": qa_index,
                             "split": split, **scores})

    def mean(self, split: str, metric: str) -> float:
        values = [rec[metric] for rec in self.records if rec["split"] == split]
        if not values:
            return 0.0
        return round(sum(values) / len(values), 2)

    def splits(self) -> list[str]:
        seen = []
        for rec in self.records:
            if rec["split"] not in seen:
                seen.append(rec["split"])
        return seen

    def rows(self) -> list[tuple[str, str, float]]:
        return [(split, metric, self.mean(split, metric))
                for split in self.splits() for metric in METRIC_NAMES]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["split", "metric", "value"])
            for split, metric, value in self.rows():
                writer.writerow([split, metric, f"{value:.2f}"])

    def write_records_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["instance_id", "qa_index", "split", *METRIC_NAMES])
            for rec in self.records:
                writer.writerow([rec["instance_id"], rec["qa_index"], rec["split"],
                                 *(f"{rec[m]:.4f}" for m in METRIC_NAMES)])


def write_predictions(path, rows: list[tuple[str, str]]) -> None:
    """One line per instance: instance_id<TAB>answer."""
    with open(path, "w") as f:
        for instance_id, answer in rows:
            f.write(f"{instance_id}\t{answer}\n")


def read_predictions(path) -> list[tuple[str, str]]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            instance_id, _, answer = line.partition("\t")
            out.append((instance_id, answer))
    return out
