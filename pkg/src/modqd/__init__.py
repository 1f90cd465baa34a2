"""Quality-diversity evolution of modular robot morphologies and controllers."""
from __future__ import annotations

from .controller import WaveParams, bounce_back, effective_amplitude, mutate_params, wave_output
from .morphology import (
    Descriptor,
    MorphNode,
    MorphologyTree,
    ModuleKind,
    crossover_branch_exchange,
    descriptor_of,
    mutate_morphology,
    random_morphology,
    realize_on_lattice,
)
from .evaluator import (
    EnvironmentSpec,
    EvaluationResult,
    ExternalEvaluator,
    ProtocolError,
    Wall,
    circular_env,
    climb_capability,
    displacement_flat,
    evaluate,
    flat_env,
    platform_env,
)
from .algorithms import (
    Archive,
    Individual,
    RandomStreams,
    VariationConfig,
    crowding_distance,
    mofd_objectives,
    nondominated_sort,
    qdsa_insert,
    variation,
)
from .metrics import (
    Projection,
    coverage,
    holm_correct,
    mann_whitney_u,
    project_population,
    qd_score,
)
from .genealogy import AncestryDag, BirthRecord, ancestry_qd, extract_ancestry, ols_fit
from .runner import RunConfig, SweepConfig, run_evolve, run_sweep, run_transition

__version__ = "0.1.0"
