"""Cluster-evaluation metrics (ACC, NMI, ARI) and cross-method average ranking.

All three scores are computed from the contingency table of true versus
predicted labels, so each is invariant to renaming clusters on either
side. ACC maximizes agreement over label mappings with the Hungarian
algorithm; NMI normalizes mutual information by the arithmetic mean of
the two label entropies (natural logs); ARI is the pair-counting Rand
index adjusted for chance under the permutation model.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import rankdata

from .errors import IncompleteGrid, LengthMismatch, NonSquare, TooFewSamples
from .util import write_csv

METRIC_NAMES = ("acc", "ari", "nmi")


def _as_labels(v) -> np.ndarray:
    a = np.asarray(v)
    if a.ndim != 1:
        raise LengthMismatch("label vectors must be 1-dimensional")
    return a.astype(int)


def contingency(g, p) -> np.ndarray:
    """Count matrix C[a, b] = #{i : g_i == a and p_i == b} (K_true x K_pred)."""
    g, p = _as_labels(g), _as_labels(p)
    if g.shape != p.shape:
        raise LengthMismatch(f"length {g.size} vs {p.size}")
    if g.size == 0:
        return np.zeros((0, 0), dtype=np.int64)
    kg, kp = int(g.max()) + 1, int(p.max()) + 1
    table = np.zeros((kg, kp), dtype=np.int64)
    np.add.at(table, (g, p), 1)
    return table


def _assignment_value(weight: np.ndarray) -> float:
    if weight.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(weight, maximize=True)
    return float(weight[rows, cols].sum())


def hungarian_max(weight) -> np.ndarray:
    """Permutation p maximizing sum_i weight[i, p[i]]; ties break to the
    lexicographically smallest permutation.

    The optimum value comes from a linear-assignment solve; the returned
    permutation is then built row by row, keeping the smallest column whose
    optimal completion still attains that value.
    """
    W = np.asarray(weight, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise NonSquare(f"expected a square matrix, got shape {W.shape}")
    K = W.shape[0]
    if K == 0:
        return np.zeros(0, dtype=int)
    best = _assignment_value(W)
    tol = 1e-9 * max(1.0, abs(best))
    chosen: list[int] = []
    free = list(range(K))
    fixed = 0.0
    for i in range(K):
        candidates = []
        for c in free:
            rest_cols = [x for x in free if x != c]
            completion = _assignment_value(W[np.ix_(range(i + 1, K), rest_cols)])
            candidates.append((c, fixed + W[i, c] + completion))
        pick = next((c for c, total in candidates if total >= best - tol), None)
        if pick is None:  # numeric fallback; keeps progress on pathological floats
            pick = max(candidates, key=lambda t: t[1])[0]
        chosen.append(pick)
        fixed += W[i, pick]
        free.remove(pick)
    return np.array(chosen, dtype=int)


def acc(g, p) -> float:
    """Best-mapping clustering accuracy: max over label mappings of agreement / n."""
    g, p = _as_labels(g), _as_labels(p)
    if g.shape != p.shape:
        raise LengthMismatch(f"length {g.size} vs {p.size}")
    if g.size == 0:
        raise TooFewSamples("acc requires at least one sample")
    table = contingency(g, p)
    k = max(table.shape)
    padded = np.zeros((k, k), dtype=float)
    padded[: table.shape[0], : table.shape[1]] = table
    # rows = predicted label, cols = true label: the mapping permutes
    # predicted names onto true names.
    perm = hungarian_max(padded.T)
    matched = padded.T[np.arange(k), perm].sum()
    return float(matched / g.size)


def _entropy(counts: np.ndarray) -> float:
    n = counts.sum()
    pk = counts[counts > 0] / n
    return float(-(pk * np.log(pk)).sum())


def nmi(g, p) -> float:
    """Normalized mutual information, 2 I(G,P) / (H(G) + H(P)), natural logs.

    Degenerate conventions: both partitions single-cluster -> 1.0 (perfect
    agreement); exactly one single-cluster -> 0.0.
    """
    g, p = _as_labels(g), _as_labels(p)
    if g.shape != p.shape:
        raise LengthMismatch(f"length {g.size} vs {p.size}")
    if g.size == 0:
        raise TooFewSamples("nmi requires at least one sample")
    table = contingency(g, p).astype(float)
    n = g.size
    a = table.sum(axis=1)
    b = table.sum(axis=0)
    hg, hp = _entropy(a), _entropy(b)
    if hg + hp == 0.0:
        return 1.0
    if hg == 0.0 or hp == 0.0:
        return 0.0

    def mi_terms(t: np.ndarray) -> float:
        rows = t.sum(axis=1)
        cols = t.sum(axis=0)
        nz = t > 0
        pij = t[nz] / n
        outer = np.outer(rows, cols)[nz] / (n * n)
        return float((pij * (np.log(pij) - np.log(outer))).sum())

    # averaging the table's and the transpose's term sums makes the float
    # result exactly invariant to swapping the arguments
    mi = 0.5 * (mi_terms(table) + mi_terms(table.T))
    return 2.0 * mi / (hg + hp)


def ari(g, p) -> float:
    """Adjusted Rand index via the contingency closed form, in [-0.5, 1].

    Identical partitions score 1.0, including when both are a single
    cluster (the chance-adjustment denominator vanishes only then).
    """
    g, p = _as_labels(g), _as_labels(p)
    if g.shape != p.shape:
        raise LengthMismatch(f"length {g.size} vs {p.size}")
    n = g.size
    if n < 2:
        raise TooFewSamples("ari requires at least two samples")
    table = contingency(g, p)

    def pairs(x: np.ndarray) -> float:
        x = x.astype(np.int64)
        return float((x * (x - 1) // 2).sum())

    index = pairs(table)
    a = pairs(table.sum(axis=1))
    b = pairs(table.sum(axis=0))
    total = n * (n - 1) / 2
    expected = a * b / total
    max_index = (a + b) / 2.0
    if max_index == expected:
        # only when both partitions are trivial and identical
        return 1.0
    return float((index - expected) / (max_index - expected))


@dataclass(frozen=True)
class ScoreReport:
    """One method's evaluation on one cohort."""

    method: str
    cohort: str
    acc: float
    ari: float
    nmi: float
    wall_clock_seconds: float = 0.0


def score(g, p, method: str = "", cohort: str = "", wall_clock_seconds: float = 0.0) -> ScoreReport:
    return ScoreReport(method, cohort, acc(g, p), ari(g, p), nmi(g, p), wall_clock_seconds)


def average_rank(reports: list[ScoreReport]) -> dict[str, tuple[float, float]]:
    """Per-method (mean, std) of descending-score ranks over (cohort, metric) cells.

    Tied scores receive the mean of their tied ranks. Every method must be
    scored in every cell. Std is the population standard deviation.
    """
    methods: list[str] = []
    for r in reports:
        if r.method not in methods:
            methods.append(r.method)
    cohorts: list[str] = []
    for r in reports:
        if r.cohort not in cohorts:
            cohorts.append(r.cohort)
    by_key = {(r.method, r.cohort): r for r in reports}
    if len(by_key) != len(reports):
        raise IncompleteGrid("?", "duplicate (method, cohort) rows")

    ranks: dict[str, list[float]] = {m: [] for m in methods}
    for cohort in cohorts:
        for metric in METRIC_NAMES:
            cell = f"({cohort}, {metric})"
            scores = []
            for m in methods:
                r = by_key.get((m, cohort))
                if r is None:
                    raise IncompleteGrid(m, cell)
                scores.append(getattr(r, metric))
            cell_ranks = rankdata([-s for s in scores], method="average")
            for m, rank in zip(methods, cell_ranks):
                ranks[m].append(float(rank))
    return {
        m: (float(np.mean(rs)), float(np.std(rs)))
        for m, rs in ranks.items()
    }


def write_score_reports_csv(
    reports: list[ScoreReport], path: str | Path, include_wall_clock: bool = True
) -> None:
    header = ["cohort", "method", "acc", "ari", "nmi"]
    if include_wall_clock:
        header.append("wall_clock_seconds")
    rows = []
    for r in reports:
        row = [r.cohort, r.method, r.acc, r.ari, r.nmi]
        if include_wall_clock:
            row.append(r.wall_clock_seconds)
        rows.append(row)
    write_csv(path, header, rows)


def score_reports_to_json(reports: list[ScoreReport]) -> str:
    return json.dumps([asdict(r) for r in reports], indent=2)
