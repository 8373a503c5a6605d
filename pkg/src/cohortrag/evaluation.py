"""Output parsing, task metrics, and significance tests.

Classification tasks report accuracy and macro-averaged F1 and are
compared with McNemar's test; the ordinal rating task reports MAE/RMSE
and text generation reports corpus-mean ROUGE-1/ROUGE-L F-scores, both
compared with a two-tailed paired t-test over per-query values.

Conventions worth knowing: unparseable classification outputs count as
wrong (they form a sentinel class for F1); an unparseable rating is
imputed as 3 and flagged; ROUGE tokenization is lowercase,
punctuation-stripped, whitespace-split, with 1.0 for two empty strings.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from math import comb, sqrt

import numpy as np
from scipy import stats as scipy_stats

from .corpus import (
    CLASSIFICATION_TASKS,
    GENERATION_TASKS,
    ORDINAL_TASKS,
    TAG_CLASSES,
    TaskId,
)
from .errors import ValidationError
from .textutils import normalize_tokens

UNPARSEABLE = "<unparseable>"

_LAMP1_BARE_RE = re.compile(r"(?<!\[)\b([12])\b")
_LAMP3_RE = re.compile(r"\b([1-5])\b")

# longest tags first so e.g. "dark comedy" beats "comedy"
_TAGS_BY_LENGTH = sorted(TAG_CLASSES, key=len, reverse=True)


def parse_output(raw: str, task_id: TaskId):
    """Map a raw model string into the task's output space, or None."""
    if task_id is TaskId.LAMP1:
        bracket_hits = [(raw.find("[1]"), 1), (raw.find("[2]"), 2)]
        bracket_hits = [(pos, val) for pos, val in bracket_hits if pos >= 0]
        if bracket_hits:
            return min(bracket_hits)[1]
        match = _LAMP1_BARE_RE.search(raw)
        return int(match.group(1)) if match else None
    if task_id in (TaskId.LAMP2, TaskId.SYNTH):
        lowered = raw.lower()
        for tag in _TAGS_BY_LENGTH:
            if tag in lowered:
                return tag
        return None
    if task_id is TaskId.LAMP3:
        match = _LAMP3_RE.search(raw)
        return int(match.group(1)) if match else None
    return " ".join(raw.split())


@dataclass
class EvalRecord:
    query_id: str
    task_id: TaskId
    prompt_sha256: str
    raw_output: str
    parsed_output: object
    gold_output: str | None
    metrics: dict[str, float]
    flags: list[str] = field(default_factory=list)

    def to_payload(self) -> dict:
        return {
            "query_id": self.query_id,
            "task_id": self.task_id.value,
            "prompt_sha256": self.prompt_sha256,
            "raw_output": self.raw_output,
            "parsed_output": self.parsed_output,
            "gold_output": self.gold_output,
            "metrics": {k: float(v) for k, v in self.metrics.items()},
            "flags": list(self.flags),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "EvalRecord":
        return cls(
            query_id=payload["query_id"],
            task_id=TaskId(payload["task_id"]),
            prompt_sha256=payload["prompt_sha256"],
            raw_output=payload["raw_output"],
            parsed_output=payload["parsed_output"],
            gold_output=payload.get("gold_output"),
            metrics=dict(payload["metrics"]),
            flags=list(payload.get("flags", [])),
        )


def make_record(
    query_id: str,
    task_id: TaskId,
    prompt_text: str,
    raw_output: str,
    gold_output: str | None,
    flags: list[str] | None = None,
) -> EvalRecord:
    """Parse one raw output and attach its per-query metric values."""
    if gold_output is None:
        raise ValidationError(f"query {query_id!r} has no gold output to score against")
    parsed = parse_output(raw_output, task_id)
    flags = list(flags or [])
    metrics: dict[str, float] = {}

    if task_id in CLASSIFICATION_TASKS:
        gold = parse_output(gold_output, task_id)
        if gold is None:
            raise ValidationError(f"query {query_id!r}: gold output {gold_output!r} unparseable")
        if parsed is None:
            flags.append("unparseable")
        metrics["correct"] = 1.0 if parsed == gold else 0.0
    elif task_id in ORDINAL_TASKS:
        gold = parse_output(gold_output, task_id)
        if gold is None:
            raise ValidationError(f"query {query_id!r}: gold output {gold_output!r} unparseable")
        if parsed is None:
            flags.append("unparseable")
            parsed_value = 3  # middle of the 1..5 scale
        else:
            parsed_value = parsed
        metrics["abs_error"] = float(abs(parsed_value - gold))
        metrics["sq_error"] = float((parsed_value - gold) ** 2)
    else:
        gold_text = " ".join(gold_output.split())
        pred_text = parsed if isinstance(parsed, str) else ""
        metrics["rouge1_f"] = rouge_1(pred_text, gold_text)[2]
        metrics["rougeL_f"] = rouge_l(pred_text, gold_text)[2]

    return EvalRecord(
        query_id=query_id,
        task_id=task_id,
        prompt_sha256=hashlib.sha256(prompt_text.encode("utf-8")).hexdigest(),
        raw_output=raw_output,
        parsed_output=parsed,
        gold_output=gold_output,
        metrics=metrics,
        flags=flags,
    )


# ── ROUGE ───────────────────────────────────────────────────────────

def _prf(overlap: float, pred_len: int, gold_len: int) -> tuple[float, float, float]:
    if pred_len == 0 and gold_len == 0:
        return 1.0, 1.0, 1.0
    if pred_len == 0 or gold_len == 0:
        return 0.0, 0.0, 0.0
    p = overlap / pred_len
    r = overlap / gold_len
    f = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
    return p, r, f


def rouge_1(prediction: str, gold: str) -> tuple[float, float, float]:
    """Unigram precision/recall/F1 with clipped counts."""
    pred = normalize_tokens(prediction)
    ref = normalize_tokens(gold)
    overlap = 0
    ref_counts: dict[str, int] = {}
    for t in ref:
        ref_counts[t] = ref_counts.get(t, 0) + 1
    for t in pred:
        if ref_counts.get(t, 0) > 0:
            overlap += 1
            ref_counts[t] -= 1
    return _prf(overlap, len(pred), len(ref))


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(prediction: str, gold: str) -> tuple[float, float, float]:
    """LCS-based precision/recall/F1."""
    pred = normalize_tokens(prediction)
    ref = normalize_tokens(gold)
    lcs = _lcs_length(pred, ref)
    return _prf(lcs, len(pred), len(ref))


# ── aggregate scoring ───────────────────────────────────────────────

@dataclass
class MetricReport:
    task_id: TaskId
    n: int
    metrics: dict[str, float]
    notes: dict[str, object] = field(default_factory=dict)

    def to_payload(self) -> dict:
        return {
            "task_id": self.task_id.value,
            "n": self.n,
            "metrics": {k: float(v) for k, v in self.metrics.items()},
            "notes": self.notes,
        }


def _macro_f1(golds: list, preds: list) -> float:
    classes = sorted(
        {g for g in golds} | {p for p in preds if p is not None}, key=str
    )
    f1s = []
    for cls in classes:
        tp = sum(1 for g, p in zip(golds, preds) if g == cls and p == cls)
        fp = sum(1 for g, p in zip(golds, preds) if g != cls and p == cls)
        fn = sum(1 for g, p in zip(golds, preds) if g == cls and p != cls)
        precision = tp / (tp + fp) if (tp + fp) else 0.0
        recall = tp / (tp + fn) if (tp + fn) else 0.0
        f1s.append(2 * precision * recall / (precision + recall) if (precision + recall) else 0.0)
    return float(np.mean(f1s)) if f1s else 0.0


def score(records: list[EvalRecord], task_id: TaskId) -> MetricReport:
    """Aggregate per-query metrics into the task's report."""
    if not records:
        raise ValidationError("cannot score an empty record list")
    notes: dict[str, object] = {
        "unparseable": sum(1 for r in records if "unparseable" in r.flags)
    }
    if task_id in CLASSIFICATION_TASKS:
        golds = [parse_output(r.gold_output or "", task_id) for r in records]
        preds = [r.parsed_output for r in records]
        accuracy = float(np.mean([r.metrics["correct"] for r in records]))
        notes["f1_averaging"] = "macro over classes present in gold or predictions"
        metrics = {"accuracy": accuracy, "f1": _macro_f1(golds, preds)}
    elif task_id in ORDINAL_TASKS:
        mae = float(np.mean([r.metrics["abs_error"] for r in records]))
        rmse = float(sqrt(np.mean([r.metrics["sq_error"] for r in records])))
        if mae > rmse + 1e-12:
            raise ValidationError(f"MAE {mae} exceeds RMSE {rmse}; metric bug")
        metrics = {"mae": mae, "rmse": rmse}
    elif task_id in GENERATION_TASKS:
        metrics = {
            "rouge1": float(np.mean([r.metrics["rouge1_f"] for r in records])),
            "rougeL": float(np.mean([r.metrics["rougeL_f"] for r in records])),
        }
    else:
        raise ValidationError(f"no metric family for task {task_id!r}")
    return MetricReport(task_id=task_id, n=len(records), metrics=metrics, notes=notes)


# ── significance ────────────────────────────────────────────────────

def mcnemar_test(b: int, c: int) -> tuple[float, float, str]:
    """McNemar on a 2x2 discordant table.

    Exact two-tailed binomial below 25 discordant pairs, chi-square with
    continuity correction above. Returns (statistic, p, method).
    """
    n_d = b + c
    if n_d == 0:
        return 0.0, 1.0, "exact"
    if n_d < 25:
        k = min(b, c)
        tail = sum(comb(n_d, i) for i in range(k + 1)) * 0.5**n_d
        return float(k), float(min(1.0, 2.0 * tail)), "exact"
    statistic = (abs(b - c) - 1) ** 2 / n_d
    p = float(scipy_stats.chi2.sf(statistic, df=1))
    return float(statistic), p, "chi2_continuity"


def paired_t(diffs: np.ndarray) -> tuple[float, float, bool]:
    """Two-tailed paired t over per-query differences.

    Zero-variance differences are degenerate: p is reported as 0.0 (or
    1.0 when the mean is also zero) and flagged via the third element.
    """
    diffs = np.asarray(diffs, dtype=np.float64)
    n = diffs.shape[0]
    if n < 2:
        raise ValidationError("paired t-test needs at least 2 paired records")
    mean = float(diffs.mean())
    sd = float(diffs.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 1.0, True
        return float("inf") if mean > 0 else float("-inf"), 0.0, True
    t = mean / (sd / sqrt(n))
    p = 2.0 * float(scipy_stats.t.sf(abs(t), df=n - 1))
    return float(t), p, False


@dataclass
class SignificanceReport:
    task_id: TaskId
    n: int
    tests: dict[str, dict]

    def to_payload(self) -> dict:
        return {"task_id": self.task_id.value, "n": self.n, "tests": self.tests}


def significance(
    records_a: list[EvalRecord],
    records_b: list[EvalRecord],
    task_id: TaskId,
) -> SignificanceReport:
    """Compare two aligned runs with the task-appropriate test."""
    by_id_b = {r.query_id: r for r in records_b}
    pairs = [(a, by_id_b[a.query_id]) for a in records_a if a.query_id in by_id_b]
    if len(pairs) < 2:
        raise ValidationError("significance tests need at least 2 paired records")

    tests: dict[str, dict] = {}
    if task_id in CLASSIFICATION_TASKS:
        b = sum(1 for ra, rb in pairs if ra.metrics["correct"] > rb.metrics["correct"])
        c = sum(1 for ra, rb in pairs if ra.metrics["correct"] < rb.metrics["correct"])
        statistic, p, method = mcnemar_test(b, c)
        tests["accuracy"] = {
            "test": "mcnemar",
            "method": method,
            "statistic": statistic,
            "p_value": p,
            "a_better": b,
            "b_better": c,
        }
    else:
        metric_keys = (
            ["abs_error", "sq_error"] if task_id in ORDINAL_TASKS else ["rouge1_f", "rougeL_f"]
        )
        for key in metric_keys:
            diffs = np.array([ra.metrics[key] - rb.metrics[key] for ra, rb in pairs])
            t, p, degenerate = paired_t(diffs)
            tests[key] = {
                "test": "paired_t",
                "statistic": t,
                "p_value": p,
                "degenerate": degenerate,
                "mean_diff": float(diffs.mean()),
            }
    return SignificanceReport(task_id=task_id, n=len(pairs), tests=tests)
