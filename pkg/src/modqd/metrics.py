"""Population metrics and nonparametric comparisons.

Populations and archives project onto the same descriptor grid; raw
coverage counts occupied cells and QD-score sums the best fitness per
cell.  Run comparisons use the Mann-Whitney U test (exact for small
tie-free samples, normal approximation with tie correction otherwise)
with Holm step-down correction across test families.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

from .morphology import MAX_MODULES


@dataclass(frozen=True)
class ProjectionCell:
    max_fitness: float
    mean_fitness: float
    count: int


@dataclass(frozen=True)
class Projection:
    """Per-descriptor-cell aggregates of a collection of scored solutions."""

    cells: dict[tuple[int, int], ProjectionCell]

    def coverage(self) -> int:
        return len(self.cells)

    def qd_score(self) -> float:
        return sum(c.max_fitness for c in self.cells.values())


def project_population(items: Iterable) -> Projection:
    """Group anything carrying .fitness and .descriptor by descriptor cell."""
    acc: dict[tuple[int, int], list[float]] = {}
    for item in items:
        m, j = item.descriptor
        assert m >= 1 and j >= 0 and m + j <= MAX_MODULES, f"descriptor {(m, j)} off-grid"
        acc.setdefault((m, j), []).append(item.fitness)
    cells = {
        key: ProjectionCell(max_fitness=max(fs), mean_fitness=sum(fs) / len(fs), count=len(fs))
        for key, fs in acc.items()
    }
    return Projection(cells=cells)


def coverage(items: Iterable, normalizer: int | None = None):
    """Occupied-cell count; with a normalizer also the normalized share."""
    raw = project_population(items).coverage()
    if normalizer is None:
        return raw
    if normalizer == 0:
        raise ValueError("coverage normalizer must be nonzero")
    return raw, raw / normalizer


def qd_score(items: Iterable) -> float:
    """Sum of per-cell best fitness over the occupied descriptor cells."""
    return project_population(items).qd_score()


# ---------------------------------------------------------------------------
# rank statistics
# ---------------------------------------------------------------------------

EXACT_MAX_N = 8


def _rank_sum_u(a: Sequence[float], b: Sequence[float]) -> float:
    """U statistic for sample a: pairs where a wins, ties count half."""
    pooled = sorted((v, 0) for v in a) + sorted((v, 1) for v in b)
    pooled.sort(key=lambda t: t[0])
    # average ranks over tie groups
    ranks: list[float] = [0.0] * len(pooled)
    i = 0
    while i < len(pooled):
        k = i
        while k + 1 < len(pooled) and pooled[k + 1][0] == pooled[i][0]:
            k += 1
        avg = (i + k) / 2.0 + 1.0
        for t in range(i, k + 1):
            ranks[t] = avg
        i = k + 1
    r_a = sum(r for r, (_, lab) in zip(ranks, pooled) if lab == 0)
    n = len(a)
    return r_a - n * (n + 1) / 2.0


def _exact_p(u: float, n: int, m: int) -> float:
    """Two-sided exact p by enumerating all placements of sample a's ranks."""
    total = 0
    at_most = 0
    u_low = min(u, n * m - u)
    for positions in combinations(range(n + m), n):
        u_combo = sum(pos - i for i, pos in enumerate(positions))
        total += 1
        if u_combo <= u_low:
            at_most += 1
    return min(1.0, 2.0 * at_most / total)


def _normal_p(u: float, a: Sequence[float], b: Sequence[float]) -> float:
    n, m = len(a), len(b)
    big_n = n + m
    pooled = sorted(list(a) + list(b))
    tie_term = 0.0
    i = 0
    while i < big_n:
        k = i
        while k + 1 < big_n and pooled[k + 1] == pooled[i]:
            k += 1
        t = k - i + 1
        tie_term += t**3 - t
        i = k + 1
    var = (n * m / 12.0) * ((big_n + 1) - tie_term / (big_n * (big_n - 1)))
    if var <= 0:
        return 1.0
    z = (u - n * m / 2.0) / math.sqrt(var)
    return min(1.0, 2.0 * (1.0 - 0.5 * (1.0 + math.erf(abs(z) / math.sqrt(2.0)))))


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """U statistic for sample a and a two-sided p value.

    Exact enumeration when the smaller sample has at most EXACT_MAX_N
    values and the pooled sample is tie-free; otherwise the normal
    approximation with tie-corrected variance.
    """
    if not a or not b:
        raise ValueError("both samples must be non-empty")
    u = _rank_sum_u(a, b)
    pooled = list(a) + list(b)
    tie_free = len(set(pooled)) == len(pooled)
    if min(len(a), len(b)) <= EXACT_MAX_N and tie_free:
        return u, _exact_p(u, len(a), len(b))
    return u, _normal_p(u, a, b)


def holm_correct(p_values: Sequence[float]) -> list[float]:
    """Step-down Holm adjustment; monotone, capped at 1, original order."""
    n = len(p_values)
    order = sorted(range(n), key=lambda i: p_values[i])
    adjusted = [0.0] * n
    running = 0.0
    for rank, i in enumerate(order):
        running = max(running, min(1.0, (n - rank) * p_values[i]))
        adjusted[i] = running
    return adjusted


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

PROJECTION_CSV_HEADER = "m,j,max_fitness,mean_fitness,count"


def projection_to_csv(proj: Projection) -> str:
    lines = [PROJECTION_CSV_HEADER]
    for (m, j) in sorted(proj.cells):
        c = proj.cells[(m, j)]
        lines.append(f"{m},{j},{c.max_fitness!r},{c.mean_fitness!r},{c.count}")
    return "\n".join(lines) + "\n"


def _color(frac: float) -> str:
    """Light-to-dark blue ramp."""
    f = max(0.0, min(1.0, frac))
    r = int(247 - f * (247 - 8))
    g = int(251 - f * (251 - 48))
    b = int(255 - f * (255 - 107))
    return f"#{r:02x}{g:02x}{b:02x}"


def projection_to_svg(proj: Projection, value: str = "max") -> str:
    """Standalone SVG heatmap of one aggregate over the descriptor grid."""
    getter = {
        "max": lambda c: c.max_fitness,
        "mean": lambda c: c.mean_fitness,
        "count": lambda c: float(c.count),
    }[value]
    cell_px = 22
    margin = 46
    grid = MAX_MODULES
    width = margin + grid * cell_px + 90
    height = margin + grid * cell_px + margin
    vmax = max((getter(c) for c in proj.cells.values()), default=1.0)
    if vmax <= 0:
        vmax = 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for (m, j), cell in sorted(proj.cells.items()):
        v = getter(cell)
        x = margin + (m - 1) * cell_px
        y = margin + (grid - 1 - j) * cell_px
        parts.append(
            f'<rect x="{x}" y="{y}" width="{cell_px - 1}" height="{cell_px - 1}" '
            f'fill="{_color(v / vmax)}"><title>m={m} j={j} {value}={v:.4g}</title></rect>'
        )
    # axes
    parts.append(
        f'<text x="{margin + grid * cell_px / 2}" y="{height - 8}" font-size="12" '
        f'text-anchor="middle" font-family="sans-serif">non-movable modules (m)</text>')
    parts.append(
        f'<text x="14" y="{margin + grid * cell_px / 2}" font-size="12" text-anchor="middle" '
        f'font-family="sans-serif" transform="rotate(-90 14 {margin + grid * cell_px / 2})">'
        f'movable joints (j)</text>')
    # legend
    lx = margin + grid * cell_px + 16
    for k in range(10):
        parts.append(
            f'<rect x="{lx}" y="{margin + k * 18}" width="16" height="18" '
            f'fill="{_color(1.0 - k / 9)}"/>')
    parts.append(
        f'<text x="{lx + 20}" y="{margin + 10}" font-size="11" font-family="sans-serif">'
        f'{vmax:.3g}</text>')
    parts.append(
        f'<text x="{lx + 20}" y="{margin + 9 * 18 + 14}" font-size="11" '
        f'font-family="sans-serif">0</text>')
    parts.append(f'<text x="{margin}" y="{margin - 10}" font-size="12" '
                 f'font-family="sans-serif">{value} fitness per descriptor cell</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
