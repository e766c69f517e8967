"""Age-of-information scheduling simulator for multihop wireless networks."""

from aoisim.topology import (
    Flow,
    NetworkTopology,
    Schedule,
    TopologyError,
    builtin_network,
    enumerate_feasible_schedules,
    validate_and_build,
)
from aoisim.stochastic import ArrivalModel, ChannelModel, RngStream
from aoisim.sim import (
    AgeTracker,
    Discipline,
    Packet,
    SimState,
    StepOutcome,
    average_age,
    drop_insert,
    step,
)
from aoisim.policies import (
    PolicyConfig,
    PolicyKind,
    StationaryPolicy,
    bp_link_weight,
    choose_schedule,
    optimize_stationary_distribution,
    sdspd_objective,
    stationary_schedule,
    weight,
)
from aoisim.solver import (
    RelaxedPolytope,
    SolverConfig,
    igd_solve,
    lemma1_gap,
    objective_F,
    project,
    round_to_schedule,
)
from aoisim.harness import (
    ExperimentConfig,
    SummaryTable,
    TrialResult,
    emit_outputs,
    lower_bound,
    run_experiment,
    run_trial,
)

__version__ = "0.1.0"
