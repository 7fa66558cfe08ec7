"""Swarm construction by prediction-reward neuroevolution on a torus grid.

Robots on a wraparound grid push blocks; paired action/prediction networks
are evolved with the only reward being the accuracy of each robot's own
sensor predictions. The package covers the deterministic world model, the
batched simulation engine, the genetic algorithm, post-evaluation metrics
including block-structure classification, and a batch experiment CLI.
"""

from .world import (
    ActionCommand,
    Heading,
    MoveOutcome,
    RobotPose,
    SimConfig,
    World,
    attempt_actuate,
    parse_snapshot,
    random_world,
    render_snapshot,
    sense,
    step,
)
from .networks import (
    ControllerState,
    Genome,
    Scenario,
    act,
    decode,
    encode,
    load_genome,
    predict,
    random_genome,
    save_genome,
    scenario_prediction,
)
from .simulation import RunTrace, simulate_batch, simulate_traced
from .evolution import (
    EvaluatedGenome,
    EvolutionConfig,
    FitnessHistory,
    evaluate,
    evolve,
    mix64,
    mutate,
    select_proportionate,
)
from .metrics import (
    MetricsRow,
    StructureLabel,
    StructureReport,
    classify_blocks,
    movement,
    post_evaluate,
    score_run,
    similarity,
    structure_report,
)
from .experiment import (
    ExperimentPlan,
    PlanRow,
    matrix_plan,
    parse_config,
    replay,
    run_experiment,
)

__version__ = "0.1.0"
