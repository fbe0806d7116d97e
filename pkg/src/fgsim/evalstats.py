"""Threshold-free metrics, per-client evaluation, and rank statistics.

ROC-AUC uses the Mann-Whitney formulation (ties half-credited).  Average
precision ranks by descending score with ties broken by stable original
order; this matters only for tied scores and is pinned here so results are
reproducible bit-for-bit.  The Friedman test uses the chi-square
approximation; an exact enumeration oracle for small tables lives in the
test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import chi2

from .errors import DegenerateLabels, InvalidTable, UnsupportedK
from .kg import RelationType, SplitPart, Triple
from .sage import score_pairs
from .seeding import derive_seed

if TYPE_CHECKING:  # pragma: no cover - type-only import, avoids a cycle
    from .federation import ClientState


@dataclass(frozen=True)
class ScoredSet:
    """Scores with binary labels, validated for metric use."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.labels)
        if scores.shape != labels.shape or scores.ndim != 1:
            raise DegenerateLabels(
                f"scores {scores.shape} and labels {labels.shape} must be equal-length vectors"
            )
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels.astype(np.int64))

    @property
    def num_positive(self) -> int:
        return int(self.labels.sum())

    @property
    def num_negative(self) -> int:
        return int(len(self.labels) - self.labels.sum())


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks, ascending, ties get the mean of their rank span."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def roc_auc(s: ScoredSet) -> float:
    """Probability a random positive outranks a random negative."""
    n_pos, n_neg = s.num_positive, s.num_negative
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("ROC-AUC needs at least one positive and one negative")
    ranks = _average_ranks(s.scores)
    u = ranks[s.labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def average_precision(s: ScoredSet) -> float:
    """Mean precision at each positive's rank, descending score order.

    Tied scores keep their original relative order (stable sort), so the
    result is deterministic for any input.
    """
    n_pos = s.num_positive
    if n_pos == 0:
        raise DegenerateLabels("average precision needs at least one positive")
    order = np.argsort(-s.scores, kind="mergesort")
    sorted_labels = s.labels[order]
    precisions = []
    seen_pos = 0
    for rank, label in enumerate(sorted_labels, start=1):
        if label == 1:
            seen_pos += 1
            precisions.append(seen_pos / rank)
    return math.fsum(precisions) / n_pos


# ---------------------------------------------------------------------------
# Friedman / Nemenyi


@dataclass(frozen=True)
class RankTable:
    """N datasets x k models of (tie-adjusted) ranks, 1 = best."""

    ranks: np.ndarray

    def __post_init__(self) -> None:
        ranks = np.asarray(self.ranks, dtype=np.float64)
        if ranks.ndim != 2:
            raise InvalidTable(f"rank table must be 2-D, got shape {ranks.shape}")
        n, k = ranks.shape
        expected = k * (k + 1) / 2.0
        for i, row in enumerate(ranks):
            if abs(row.sum() - expected) > 1e-9:
                raise InvalidTable(f"row {i} sums to {row.sum()}, expected {expected}")
        object.__setattr__(self, "ranks", ranks)

    @property
    def n_datasets(self) -> int:
        return self.ranks.shape[0]

    @property
    def n_models(self) -> int:
        return self.ranks.shape[1]

    @classmethod
    def from_scores(cls, scores: np.ndarray) -> "RankTable":
        """Rank each row's scores descending (highest score -> rank 1)."""
        scores = np.asarray(scores, dtype=np.float64)
        return cls(np.vstack([_average_ranks(-row) for row in scores]))


def friedman(table: RankTable) -> tuple[float, float]:
    """Friedman chi-square statistic and its upper-tail p-value."""
    n, k = table.n_datasets, table.n_models
    if n < 2 or k < 2:
        raise InvalidTable(f"need at least 2 datasets and 2 models, got {n}x{k}")
    column_sums = table.ranks.sum(axis=0)
    statistic = 12.0 / (n * k * (k + 1)) * float(column_sums @ column_sums) - 3.0 * n * (k + 1)
    statistic = max(statistic, 0.0)
    return statistic, float(chi2.sf(statistic, k - 1))


# Two-tailed studentized-range constants divided by sqrt(2), infinite df,
# for k = 2..10 model comparisons.
_NEMENYI_Q = {
    0.05: (1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164),
    0.10: (1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920),
}


@dataclass(frozen=True)
class PosthocResult:
    critical_difference: float
    mean_ranks: np.ndarray
    significant: np.ndarray
    alpha: float
    friedman_rejected: bool


def nemenyi_posthoc(
    table: RankTable, alpha: float = 0.05, friedman_rejected: bool | None = None
) -> PosthocResult:
    """All-pairs comparison: pair (a, b) differs when |R_a - R_b| >= CD.

    CD = q_alpha(k) * sqrt(k(k+1) / (6N)).  When the caller has not already
    gated on the Friedman test, the rejection flag is computed here and
    carried in the result rather than enforced.
    """
    n, k = table.n_datasets, table.n_models
    if alpha not in _NEMENYI_Q:
        raise ValueError(f"no critical constants tabulated for alpha={alpha}")
    if not 2 <= k <= 10:
        raise UnsupportedK(f"critical constants tabulated for 2 <= k <= 10, got k={k}")
    if friedman_rejected is None:
        _, p_value = friedman(table)
        friedman_rejected = p_value < alpha
    q = _NEMENYI_Q[alpha][k - 2]
    cd = q * math.sqrt(k * (k + 1) / (6.0 * n))
    mean_ranks = table.ranks.mean(axis=0)
    gaps = np.abs(mean_ranks[:, None] - mean_ranks[None, :])
    significant = gaps >= cd
    np.fill_diagonal(significant, False)
    return PosthocResult(
        critical_difference=cd,
        mean_ranks=mean_ranks,
        significant=significant,
        alpha=alpha,
        friedman_rejected=friedman_rejected,
    )


# ---------------------------------------------------------------------------
# Per-client evaluation


@dataclass(frozen=True)
class MetricPair:
    roc_auc: float
    average_precision: float


def _split_scored_sets(
    client: "ClientState", split_part: SplitPart, head=None
) -> dict[RelationType, ScoredSet]:
    """Score a split's positives and stored negatives, batched per client."""
    head = head if head is not None else client.params.head
    positives = client.split.positives[split_part]
    negatives = client.split.negatives[split_part]
    spans: list[tuple[RelationType, int, int]] = []
    triples: list[Triple] = []
    labels: list[int] = []
    for relation in RelationType:
        pos = positives.get(relation, ())
        neg = negatives.get(relation, ())
        if not pos and not neg:
            continue
        start = len(triples)
        triples.extend(pos)
        labels.extend([1] * len(pos))
        triples.extend(neg)
        labels.extend([0] * len(neg))
        spans.append((relation, start, len(triples)))
    if not triples:
        raise DegenerateLabels(f"{split_part.value} split has no scored pairs")
    seed = derive_seed(client.seed, "eval", split_part.value)
    scores = score_pairs(client.params.encoder, head, client.kg, triples, seed)
    label_arr = np.asarray(labels, dtype=np.int64)
    return {
        relation: ScoredSet(scores=scores[a:b], labels=label_arr[a:b])
        for relation, a, b in spans
    }


def evaluate_client(
    client: "ClientState", split_part: SplitPart = SplitPart.TEST
) -> dict[RelationType, MetricPair]:
    """ROC-AUC and AP per relation on one split of one client."""
    sets = _split_scored_sets(client, split_part)
    out: dict[RelationType, MetricPair] = {}
    for relation, scored in sets.items():
        if scored.num_positive == 0 or scored.num_negative == 0:
            raise DegenerateLabels(f"{relation.value}: empty side in {split_part.value} split")
        out[relation] = MetricPair(
            roc_auc=roc_auc(scored), average_precision=average_precision(scored)
        )
    return out


def pooled_auc(client: "ClientState", split_part: SplitPart, head=None) -> float:
    """Single ROC-AUC over all relations of a split (used for cross-evaluation)."""
    sets = _split_scored_sets(client, split_part, head=head)
    scores = np.concatenate([s.scores for s in sets.values()])
    labels = np.concatenate([s.labels for s in sets.values()])
    return roc_auc(ScoredSet(scores=scores, labels=labels))


# ---------------------------------------------------------------------------
# Multi-run aggregation

Cell = tuple[str, str, str]  # (country, relation value, model name)


@dataclass(frozen=True)
class CellStats:
    mean_auc: float
    std_auc: float
    mean_ap: float
    std_ap: float
    n_runs: int


@dataclass(frozen=True)
class SignificanceEntry:
    statistic: float
    p_value: float
    alpha: float
    rejected: bool
    critical_difference: float
    mean_ranks: dict[str, float]
    significant_pairs: list[tuple[str, str]]


@dataclass
class ExperimentReport:
    countries: list[str]
    relations: list[str]
    models: list[str]
    runs: dict[Cell, list[MetricPair]]
    cells: dict[Cell, CellStats] = field(default_factory=dict)
    significance: dict[str, dict[str, SignificanceEntry]] = field(default_factory=dict)


def aggregate_runs(
    run_reports: Sequence[Mapping[Cell, MetricPair]], alpha: float = 0.05
) -> ExperimentReport:
    """Collect per-run metrics into means/stds plus per-relation rank tests.

    ``run_reports`` holds one mapping per run: (country, relation, model)
    -> metrics.  Significance uses countries as datasets and models as
    treatments, computed per relation and per metric from per-cell means.
    """
    if not run_reports:
        raise ValueError("need at least one run report")
    runs: dict[Cell, list[MetricPair]] = {}
    for report in run_reports:
        for cell, metrics in report.items():
            runs.setdefault(cell, []).append(metrics)

    countries = sorted({c for c, _, _ in runs})
    relations = sorted({r for _, r, _ in runs})
    models = sorted({m for _, _, m in runs})
    report = ExperimentReport(
        countries=countries, relations=relations, models=models, runs=runs
    )
    for cell, values in sorted(runs.items()):
        # sorted before reduction: aggregates are bit-identical under any
        # permutation of the incoming run order
        aucs = np.sort(np.array([v.roc_auc for v in values]))
        aps = np.sort(np.array([v.average_precision for v in values]))
        report.cells[cell] = CellStats(
            mean_auc=float(aucs.mean()),
            std_auc=float(aucs.std(ddof=1)) if len(values) > 1 else 0.0,
            mean_ap=float(aps.mean()),
            std_ap=float(aps.std(ddof=1)) if len(values) > 1 else 0.0,
            n_runs=len(values),
        )

    if len(countries) >= 2 and len(models) >= 2:
        for relation in relations:
            entries: dict[str, SignificanceEntry] = {}
            for metric in ("roc_auc", "average_precision"):
                attr = "mean_auc" if metric == "roc_auc" else "mean_ap"
                try:
                    scores = np.array(
                        [
                            [getattr(report.cells[(c, relation, m)], attr) for m in models]
                            for c in countries
                        ]
                    )
                except KeyError:
                    continue  # incomplete grid for this relation
                table = RankTable.from_scores(scores)
                statistic, p_value = friedman(table)
                posthoc = nemenyi_posthoc(table, alpha=alpha, friedman_rejected=p_value < alpha)
                pairs = [
                    (models[a], models[b])
                    for a in range(len(models))
                    for b in range(a + 1, len(models))
                    if posthoc.significant[a, b]
                ]
                entries[metric] = SignificanceEntry(
                    statistic=statistic,
                    p_value=p_value,
                    alpha=alpha,
                    rejected=p_value < alpha,
                    critical_difference=posthoc.critical_difference,
                    mean_ranks={m: float(r) for m, r in zip(models, posthoc.mean_ranks)},
                    significant_pairs=pairs,
                )
            if entries:
                report.significance[relation] = entries
    return report


def summary_csv_rows(report: ExperimentReport) -> list[str]:
    """Aggregate CSV: country,relation,model,metric,mean,std,n_runs."""
    rows = ["country,relation,model,metric,mean,std,n_runs"]
    for (country, relation, model), stats in sorted(report.cells.items()):
        rows.append(
            f"{country},{relation},{model},roc_auc,"
            f"{stats.mean_auc:.6f},{stats.std_auc:.6f},{stats.n_runs}"
        )
        rows.append(
            f"{country},{relation},{model},average_precision,"
            f"{stats.mean_ap:.6f},{stats.std_ap:.6f},{stats.n_runs}"
        )
    return rows


def per_run_csv_rows(report: ExperimentReport) -> list[str]:
    """Per-run CSV: country,relation,model,metric,run,value."""
    rows = ["country,relation,model,metric,run,value"]
    for (country, relation, model), values in sorted(report.runs.items()):
        for run_idx, pair in enumerate(values):
            rows.append(
                f"{country},{relation},{model},roc_auc,{run_idx},{pair.roc_auc:.6f}"
            )
            rows.append(
                f"{country},{relation},{model},average_precision,{run_idx},"
                f"{pair.average_precision:.6f}"
            )
    return rows


def significance_payload(report: ExperimentReport) -> dict:
    """JSON-ready significance matrices keyed by relation then metric."""
    payload: dict = {}
    for relation, entries in sorted(report.significance.items()):
        payload[relation] = {}
        for metric, entry in sorted(entries.items()):
            payload[relation][metric] = {
                "statistic": entry.statistic,
                "p_value": entry.p_value,
                "alpha": entry.alpha,
                "rejected": entry.rejected,
                "critical_difference": entry.critical_difference,
                "mean_ranks": entry.mean_ranks,
                "significant_pairs": [list(p) for p in entry.significant_pairs],
            }
    return payload
