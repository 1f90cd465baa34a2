"""Ancestry analysis over append-only birth logs.

Every evaluation leaves a birth record; records link children to the
parents that actually contributed genetic material.  The resulting DAG
supports ancestry extraction, descriptor-grid projections of a
solution's lineage, population age statistics, and a small least-squares
helper for fitting run outcomes to lineage metrics.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .metrics import project_population
from .morphology import Descriptor


@dataclass(frozen=True)
class BirthRecord:
    id: int
    parent_ids: tuple[int, ...]
    birth_eval: int
    fitness: float
    descriptor: Descriptor


class AncestryDag:
    """Immutable view of who descended from whom."""

    def __init__(self, records: Iterable[BirthRecord]):
        self.records: dict[int, BirthRecord] = {}
        for rec in records:
            if rec.id in self.records:
                raise ValueError(f"duplicate birth record id {rec.id}")
            self.records[rec.id] = rec
        for rec in self.records.values():
            for pid in rec.parent_ids:
                parent = self.records.get(pid)
                if parent is None:
                    raise ValueError(f"record {rec.id} references unknown parent {pid}")
                if parent.birth_eval >= rec.birth_eval:
                    raise ValueError(
                        f"record {rec.id} born at {rec.birth_eval} before parent "
                        f"{pid} at {parent.birth_eval}")

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, focal_id: int) -> bool:
        return focal_id in self.records


def extract_ancestry(dag: AncestryDag, focal_id: int) -> list[BirthRecord]:
    """All transitive ancestors of a solution, deduplicated, focal excluded."""
    if focal_id not in dag.records:
        raise KeyError(f"unknown individual id {focal_id}")
    seen: set[int] = set()
    stack = list(dag.records[focal_id].parent_ids)
    while stack:
        pid = stack.pop()
        if pid in seen:
            continue
        seen.add(pid)
        stack.extend(dag.records[pid].parent_ids)
    return [dag.records[i] for i in sorted(seen)]


def ancestry_qd(dag: AncestryDag, focal_id: int) -> tuple[int, float]:
    """Coverage and QD-score of the focal solution's lineage, focal included."""
    lineage = extract_ancestry(dag, focal_id) + [dag.records[focal_id]]
    proj = project_population(lineage)
    return proj.coverage(), proj.qd_score()


@dataclass(frozen=True)
class AgeStats:
    mean: float
    minimum: float
    q25: float
    median: float
    q75: float
    maximum: float


def population_age_stats(dag: AncestryDag, live_ids: Sequence[int],
                         now_eval: int) -> AgeStats:
    """Evaluation-count ages of the currently live set."""
    if not live_ids:
        raise ValueError("live set is empty")
    ages = []
    for i in live_ids:
        rec = dag.records.get(i)
        if rec is None:
            raise KeyError(f"unknown individual id {i}")
        age = now_eval - rec.birth_eval
        assert age >= 0, f"individual {i} born in the future"
        ages.append(float(age))
    arr = np.asarray(ages)
    q25, med, q75 = np.percentile(arr, [25, 50, 75])
    return AgeStats(mean=float(arr.mean()), minimum=float(arr.min()), q25=float(q25),
                    median=float(med), q75=float(q75), maximum=float(arr.max()))


# ---------------------------------------------------------------------------
# least squares
# ---------------------------------------------------------------------------

class RankDeficientError(ValueError):
    """Design matrix columns are linearly dependent."""

    def __init__(self, columns: list[int]):
        self.columns = columns
        super().__init__(f"design matrix is rank deficient; collinear columns: {columns}")


def ols_fit(design: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Least-squares fit; returns (coefficients, R^2).

    Raises RankDeficientError naming the dependent columns when the
    design is singular.  R^2 is 0 for a constant response.
    """
    X = np.asarray(design, dtype=float)
    yv = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise ValueError("design matrix must be 2-D")
    n, k = X.shape
    if yv.shape != (n,):
        raise ValueError("response length does not match design rows")
    if n < k:
        raise ValueError(f"need at least {k} rows to fit {k} coefficients, got {n}")
    if np.linalg.matrix_rank(X) < k:
        raise RankDeficientError(_collinear_columns(X))
    beta, _, _, _ = np.linalg.lstsq(X, yv, rcond=None)
    resid = yv - X @ beta
    ss_res = float(resid @ resid)
    ss_tot = float(((yv - yv.mean()) ** 2).sum())
    r2 = 0.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return beta, r2


def _collinear_columns(X: np.ndarray) -> list[int]:
    """Columns expressible as combinations of the others."""
    out = []
    k = X.shape[1]
    for c in range(k):
        others = np.delete(X, c, axis=1)
        if others.shape[1] == 0:
            continue
        coef, _, _, _ = np.linalg.lstsq(others, X[:, c], rcond=None)
        resid = X[:, c] - others @ coef
        scale = max(1.0, float(np.abs(X[:, c]).max()))
        if float(np.abs(resid).max()) <= 1e-9 * scale:
            out.append(c)
    return out
