"""Dataset loading, classification metrics, and the blocking trial.

Scoring is conservative: an ``unknown`` prediction counts as an error
against its true label. A degenerate confusion matrix (any zero factor
in the correlation denominator) scores MCC as 0.
"""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Callable, Sequence

from .blocklist import BlocklistStore, EntrySource
from .classifier import VerdictValue
from .dnswire import TYPE_A, make_query
from .domains import InvalidDomain
from .resolver import Outcome, ScriptedUpstream, SinkholeResolver

__all__ = [
    "LabeledSite",
    "ConfusionMatrix",
    "EvalMetrics",
    "FormatError",
    "DuplicateUrl",
    "LengthMismatch",
    "load_dataset",
    "compute_metrics",
    "hamming_distance",
    "hamming_matrix",
    "latency_summary",
    "latency_summary_csv",
    "run_blocking_trial",
    "PhaseOutcome",
    "TrialReport",
    "TrialSetupError",
    "language_breakdown",
]

POSITIVE = "positive"
NEGATIVE = "negative"


class FormatError(ValueError):
    def __init__(self, line_number: int, reason: str):
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number


class DuplicateUrl(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class TrialSetupError(RuntimeError):
    pass


@dataclass(frozen=True)
class LabeledSite:
    url: str
    label: str  # "positive" | "negative"
    language: str
    category: str


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class EvalMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    mcc: float
    matrix: ConfusionMatrix


def load_dataset(path: Path | str) -> list[LabeledSite]:
    """Read the ``url,label,language,category`` CSV; validates as it goes."""
    sites: list[LabeledSite] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            return []
        if [h.strip().lower() for h in header] != ["url", "label", "language", "category"]:
            raise FormatError(1, f"unexpected header {header!r}")
        for line_number, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 4:
                raise FormatError(line_number, f"expected 4 columns, got {len(row)}")
            url, label, language, category = (cell.strip() for cell in row)
            if label.lower() not in (POSITIVE, NEGATIVE):
                raise FormatError(line_number, f"label must be positive/negative, got {label!r}")
            if url in seen:
                raise DuplicateUrl(f"line {line_number}: duplicate url {url}")
            seen.add(url)
            sites.append(LabeledSite(url=url, label=label.lower(), language=language, category=category))
    return sites


def _as_verdict(value) -> VerdictValue:
    if isinstance(value, VerdictValue):
        return value
    return VerdictValue(str(value).lower())


def compute_metrics(predictions: Sequence, labels: Sequence[str]) -> EvalMetrics:
    """Score predictions against positive/negative labels.

    ``unknown`` predictions are misclassifications: a false negative on a
    positive site, a false positive on a negative one.
    """
    if len(predictions) != len(labels):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(labels)} labels")
    tp = fp = fn = tn = 0
    for raw_pred, label in zip(predictions, labels):
        pred = _as_verdict(raw_pred)
        if label == POSITIVE:
            if pred == VerdictValue.YES:
                tp += 1
            else:  # NO or UNKNOWN
                fn += 1
        elif label == NEGATIVE:
            if pred == VerdictValue.NO:
                tn += 1
            else:  # YES or UNKNOWN
                fp += 1
        else:
            raise ValueError(f"label must be positive/negative, got {label!r}")
    matrix = ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn)
    return metrics_from_matrix(matrix)


def metrics_from_matrix(matrix: ConfusionMatrix) -> EvalMetrics:
    tp, fp, fn, tn = matrix.tp, matrix.fp, matrix.fn, matrix.tn
    total = matrix.total
    accuracy = (tp + tn) / total if total else 0.0
    precision = tp / (tp + fp) if (tp + fp) else 0.0
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
    denominator = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = (tp * tn - fp * fn) / math.sqrt(denominator) if denominator else 0.0
    return EvalMetrics(accuracy=accuracy, precision=precision, recall=recall, f1=f1, mcc=mcc, matrix=matrix)


def hamming_distance(decisions_a: Sequence, decisions_b: Sequence) -> int:
    """Count positions where two verdict vectors disagree."""
    if len(decisions_a) != len(decisions_b):
        raise LengthMismatch(f"{len(decisions_a)} vs {len(decisions_b)} decisions")
    return sum(1 for a, b in zip(decisions_a, decisions_b) if _as_verdict(a) != _as_verdict(b))


def hamming_matrix(vectors: dict[str, Sequence]) -> dict[str, dict[str, int]]:
    names = sorted(vectors)
    return {
        a: {b: hamming_distance(vectors[a], vectors[b]) for b in names}
        for a in names
    }


def _p95(samples: Sequence[float]) -> float:
    ordered = sorted(samples)
    rank = max(1, math.ceil(0.95 * len(ordered)))
    return ordered[rank - 1]


def latency_summary(samples: dict[str, Sequence[float]]) -> dict:
    """Per-model mean/median/p95 plus pairwise mean ratios."""
    for model, rows in samples.items():
        if not rows:
            raise ValueError(f"no latency samples for {model}")
    stats = {
        model: {
            "count": len(rows),
            "mean": statistics.fmean(rows),
            "median": statistics.median(rows),
            "p95": _p95(rows),
        }
        for model, rows in samples.items()
    }
    names = sorted(stats)
    ratios = {
        a: {b: stats[a]["mean"] / stats[b]["mean"] for b in names}
        for a in names
    }
    return {"models": stats, "mean_ratios": ratios}


def latency_summary_csv(summary: dict) -> str:
    lines = ["model,count,mean_ms,median_ms,p95_ms"]
    for model in sorted(summary["models"]):
        row = summary["models"][model]
        lines.append(
            f"{model},{row['count']},{row['mean']:.3f},{row['median']:.3f},{row['p95']:.3f}"
        )
    return "\n".join(lines) + "\n"


def language_breakdown(
    predictions: Sequence, sites: Sequence[LabeledSite]
) -> dict[str, EvalMetrics]:
    """Per-language metrics over the dataset's ``language`` tags."""
    if len(predictions) != len(sites):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(sites)} sites")
    by_language: dict[str, tuple[list, list]] = {}
    for pred, site in zip(predictions, sites):
        preds, labels = by_language.setdefault(site.language, ([], []))
        preds.append(pred)
        labels.append(site.label)
    return {lang: compute_metrics(p, l) for lang, (p, l) in sorted(by_language.items())}


# -- blocking trial ----------------------------------------------------------


@dataclass(frozen=True)
class PhaseOutcome:
    phase: str
    at: datetime
    positives_blocked: int
    negatives_blocked: int
    positives_total: int
    negatives_total: int


@dataclass(frozen=True)
class TrialReport:
    phases: tuple[PhaseOutcome, ...]
    window_start: datetime
    window_end: datetime
    entries_tagged: int
    swept_after_end: int

    @property
    def meets_expectations(self) -> bool:
        """Pre/post fully open, during-phase blocks all positives and no negatives."""
        by_name = {p.phase: p for p in self.phases}
        pre, during, post = by_name["pre"], by_name["during"], by_name["post"]
        return (
            pre.positives_blocked == 0
            and pre.negatives_blocked == 0
            and during.positives_blocked == during.positives_total
            and during.negatives_blocked == 0
            and post.positives_blocked == 0
            and post.negatives_blocked == 0
        )

    def to_json(self) -> dict:
        return {
            "window": {
                "start": self.window_start.isoformat(),
                "end": self.window_end.isoformat(),
            },
            "entries_tagged": self.entries_tagged,
            "swept_after_end": self.swept_after_end,
            "meets_expectations": self.meets_expectations,
            "phases": [
                {
                    "phase": p.phase,
                    "at": p.at.isoformat(),
                    "positives_blocked": p.positives_blocked,
                    "negatives_blocked": p.negatives_blocked,
                    "positives_total": p.positives_total,
                    "negatives_total": p.negatives_total,
                }
                for p in self.phases
            ],
        }


class SimClock:
    """Injectable clock so multi-hour phases compress to instants."""

    def __init__(self, start: datetime):
        self.now = start

    def __call__(self) -> datetime:
        return self.now


def run_blocking_trial(
    positives: Sequence[str],
    negatives: Sequence[str],
    phase_duration: timedelta = timedelta(hours=4),
    *,
    epoch: datetime | None = None,
    tag: str = "AI-sinkhole",
    on_phase: Callable[[str, BlocklistStore, datetime], None] | None = None,
) -> TrialReport:
    """Three-phase enable/disable trial against an in-process resolver.

    The block window covers exactly the middle phase; each phase resolves
    every domain once and counts sinkhole decisions per class. The clock
    is simulated, so a 4-hour phase runs in milliseconds.
    """
    epoch = epoch or datetime(2025, 1, 1, tzinfo=timezone.utc)
    clock = SimClock(epoch)
    store = BlocklistStore(path=None, clock=clock)
    window = (epoch + phase_duration, epoch + 2 * phase_duration)
    try:
        for domain in positives:
            store.add_entry(domain, tag, window=window, source=EntrySource.MANUAL)
    except InvalidDomain as exc:
        raise TrialSetupError(f"positive list contains a non-domain: {exc}") from exc
    tagged = store.set_tag_window(tag, window)

    upstream = ScriptedUpstream(default_address="198.51.100.7")
    resolver = SinkholeResolver(store, upstream, clock=clock)

    phases = []
    instants = {
        "pre": epoch + phase_duration * 0.5,
        "during": epoch + phase_duration * 1.5,
        "post": epoch + phase_duration * 2.5,
    }
    query_id = 1
    for phase in ("pre", "during", "post"):
        at = instants[phase]
        clock.now = at
        if on_phase is not None:
            on_phase(phase, store, at)
        counts = {"positive": 0, "negative": 0}
        for label, domains in (("positive", positives), ("negative", negatives)):
            for domain in domains:
                query = make_query(query_id & 0xFFFF, domain.lower(), TYPE_A)
                query_id += 1
                _, decision = resolver.resolve(query, now=at, client="trial")
                if decision.outcome == Outcome.SINKHOLED:
                    counts[label] += 1
        phases.append(
            PhaseOutcome(
                phase=phase,
                at=at,
                positives_blocked=counts["positive"],
                negatives_blocked=counts["negative"],
                positives_total=len(positives),
                negatives_total=len(negatives),
            )
        )

    clock.now = epoch + phase_duration * 3
    swept = store.expire_sweep(clock.now)
    return TrialReport(
        phases=tuple(phases),
        window_start=window[0],
        window_end=window[1],
        entries_tagged=tagged,
        swept_after_end=swept,
    )
