from types import SimpleNamespace

import numpy as np
import pytest

from modqd.metrics import (
    EXACT_MAX_N,
    PROJECTION_CSV_HEADER,
    ProjectionCell,
    coverage,
    holm_correct,
    mann_whitney_u,
    project_population,
    projection_to_csv,
    projection_to_svg,
    qd_score,
)
from modqd.morphology import Descriptor


def item(m, j, fitness):
    return SimpleNamespace(fitness=fitness, descriptor=Descriptor(m, j))


SAMPLE = [item(2, 1, 1.5), item(1, 0, 0.25), item(2, 1, 0.5)]


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------

def test_project_population_aggregates_per_cell():
    proj = project_population(SAMPLE)
    assert set(proj.cells) == {(1, 0), (2, 1)}
    cell = proj.cells[(2, 1)]
    assert cell == ProjectionCell(max_fitness=1.5, mean_fitness=1.0, count=2)
    assert proj.cells[(1, 0)] == ProjectionCell(0.25, 0.25, 1)


def test_project_population_rejects_offgrid():
    with pytest.raises(AssertionError):
        project_population([item(0, 0, 1.0)])
    with pytest.raises(AssertionError):
        project_population([item(15, 6, 1.0)])


def test_coverage_and_qd_score():
    assert coverage(SAMPLE) == 2
    assert coverage(SAMPLE, normalizer=210) == (2, 2 / 210)
    with pytest.raises(ValueError):
        coverage(SAMPLE, normalizer=0)
    assert qd_score(SAMPLE) == 1.75
    assert qd_score([]) == 0.0
    assert coverage([]) == 0


def test_empty_projection():
    proj = project_population([])
    assert proj.coverage() == 0 and proj.qd_score() == 0.0


# ---------------------------------------------------------------------------
# rank statistics
# ---------------------------------------------------------------------------

def test_mann_whitney_exact_small_separated():
    u, p = mann_whitney_u([1.0, 2.0], [3.0, 4.0])
    assert u == 0.0
    assert p == pytest.approx(1 / 3)


def test_mann_whitney_exact_three_vs_three():
    u, p = mann_whitney_u([1.0, 2.0, 3.0], [10.0, 11.0, 12.0])
    assert u == 0.0
    assert p == pytest.approx(0.1)  # 2 / C(6,3)


def test_mann_whitney_u_counts_wins_for_first_sample():
    u, p = mann_whitney_u([3.0, 5.0], [1.0, 2.0])
    assert u == 4.0
    assert p == pytest.approx(1 / 3)  # symmetric to the losing side


def test_mann_whitney_ties_fall_back_to_normal():
    u, p = mann_whitney_u([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert u == 4.5  # all ties count half
    assert p == 1.0


def test_mann_whitney_degenerate_variance():
    u, p = mann_whitney_u([5.0, 5.0], [5.0, 5.0])
    assert u == 2.0
    assert p == 1.0


def test_mann_whitney_large_samples_use_normal_tail():
    a = [float(x) for x in range(1, 10)]
    b = [float(x) for x in range(10, 19)]
    assert min(len(a), len(b)) > EXACT_MAX_N
    u, p = mann_whitney_u(a, b)
    assert u == 0.0
    assert 0.0 < p < 0.001


def test_mann_whitney_rejects_empty():
    with pytest.raises(ValueError):
        mann_whitney_u([], [1.0])
    with pytest.raises(ValueError):
        mann_whitney_u([1.0], [])


def test_mann_whitney_exact_matches_symmetry():
    # U for a plus U for b covers all n*m pairs
    rng = np.random.default_rng(2)
    for _ in range(30):
        a = list(rng.choice(1000, size=4, replace=False).astype(float))
        b = list(rng.choice(2000, size=5, replace=False).astype(float) + 0.5)
        ua, pa = mann_whitney_u(a, b)
        ub, pb = mann_whitney_u(b, a)
        assert ua + ub == len(a) * len(b)
        assert pa == pytest.approx(pb, rel=1e-12)


def test_holm_hand_case():
    out = holm_correct([0.01, 0.04, 0.03])
    assert out == pytest.approx([0.03, 0.06, 0.06])


def test_holm_caps_at_one():
    assert holm_correct([0.5, 0.9]) == [1.0, 1.0]


def test_holm_trivial_sizes():
    assert holm_correct([]) == []
    assert holm_correct([0.2]) == [0.2]


def test_holm_is_monotone_and_conservative():
    rng = np.random.default_rng(6)
    for _ in range(20):
        raw = rng.random(int(rng.integers(2, 12))).tolist()
        adj = holm_correct(raw)
        assert all(x >= r for x, r in zip(adj, raw))
        assert all(x <= 1.0 for x in adj)
        order = sorted(range(len(raw)), key=lambda i: raw[i])
        ranked = [adj[i] for i in order]
        assert ranked == sorted(ranked)


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def test_projection_to_csv_golden():
    text = projection_to_csv(project_population(SAMPLE))
    assert text == (
        "m,j,max_fitness,mean_fitness,count\n"
        "1,0,0.25,0.25,1\n"
        "2,1,1.5,1.0,2\n"
    )
    assert text.startswith(PROJECTION_CSV_HEADER)


def test_projection_csv_roundtrips_floats_exactly():
    odd = [item(3, 4, 0.1 + 0.2), item(7, 0, 1 / 3)]
    text = projection_to_csv(project_population(odd))
    rows = [line.split(",") for line in text.strip().split("\n")[1:]]
    assert float(rows[0][2]) == 0.1 + 0.2
    assert float(rows[1][2]) == 1 / 3


def test_projection_to_svg_structure():
    svg = projection_to_svg(project_population(SAMPLE))
    assert svg.startswith("<svg ") and svg.rstrip().endswith("</svg>")
    # one background + one per occupied cell + ten legend swatches
    assert svg.count("<rect ") == 1 + 2 + 10
    assert "m=2 j=1 max=1.5" in svg
    assert "#08306b" in svg and "#f7fbff" in svg


def test_projection_to_svg_value_modes():
    proj = project_population(SAMPLE)
    mean_svg = projection_to_svg(proj, value="mean")
    count_svg = projection_to_svg(proj, value="count")
    assert "m=2 j=1 mean=1" in mean_svg
    assert "m=2 j=1 count=2" in count_svg
    with pytest.raises(KeyError):
        projection_to_svg(proj, value="median")
