"""Shared run fixtures.

Evolution runs are expensive relative to everything else in the suite,
so the ones several tests need are built once per session and reused.
All of them are fully deterministic: same seed, same bytes.
"""
import pytest

from modqd.runner import RunConfig, run_evolve, run_transition

ALGORITHMS = ("sofo", "mofd", "qdsa")
SEEDS = tuple(range(5))


def ensure_run(out_dir, **kwargs):
    """Run evolve into out_dir unless a finished run is already there."""
    if not (out_dir / "final_state.json").exists():
        run_evolve(RunConfig(out_dir=str(out_dir), **kwargs))
    return out_dir


@pytest.fixture(scope="session")
def run_root(tmp_path_factory):
    return tmp_path_factory.mktemp("runs")


@pytest.fixture(scope="session")
def desk_runs(run_root):
    """Flat env, 10 000 evaluations, three algorithms, five seeds."""
    dirs = {}
    for algo in ALGORITHMS:
        for seed in SEEDS:
            d = run_root / f"desk_{algo}_s{seed}"
            dirs[(algo, seed)] = ensure_run(
                d, algorithm=algo, env="flat", evals=10_000, seed=seed)
    return dirs


@pytest.fixture(scope="session")
def budget_runs(run_root):
    """Smaller flat budgets used to pool runs across lineage depths."""
    dirs = {}
    for evals in (2600, 5000):
        for algo in ALGORITHMS:
            for seed in SEEDS:
                d = run_root / f"b{evals}_{algo}_s{seed}"
                dirs[(evals, algo, seed)] = ensure_run(
                    d, algorithm=algo, env="flat", evals=evals, seed=seed)
    return dirs


@pytest.fixture(scope="session")
def deep_runs(run_root):
    """Flat env, 50 000 evaluations; sources for transitions and lineage depth."""
    dirs = {}
    for algo in ALGORITHMS:
        for seed in SEEDS:
            d = run_root / f"deep_{algo}_s{seed}"
            dirs[(algo, seed)] = ensure_run(
                d, algorithm=algo, env="flat", evals=50_000, seed=seed)
    return dirs


# (target algorithm, source algorithm) pairs: matched continuations plus
# continuations seeded from the archive-based search's survivors.
TRANSITION_PAIRS = (("sofo", "sofo"), ("qdsa", "qdsa"), ("sofo", "qdsa"), ("mofd", "qdsa"))


@pytest.fixture(scope="session")
def transition_runs(run_root, deep_runs):
    """Platform continuations of the deep flat runs, 5 000 evaluations each."""
    dirs = {}
    for target, source in TRANSITION_PAIRS:
        for seed in SEEDS:
            d = run_root / f"tr_{target}_from_{source}_s{seed}"
            if not (d / "final_state.json").exists():
                cfg = RunConfig(algorithm=target, env="platform", out_dir=str(d),
                                evals=5000, seed=seed + 100)
                run_transition(str(deep_runs[(source, seed)]), cfg)
            dirs[(target, source, seed)] = d
    return dirs
