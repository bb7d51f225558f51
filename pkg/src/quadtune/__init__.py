"""quadtune: adaptive PID autotuning workbench for a simulated quadcopter.

A retrospective-cost adaptive law tunes all 27 gains of a cascaded
position/velocity/attitude/rate autopilot from zero during a scripted
learning flight on a rigid-body simulator; a harness then benchmarks the
autotuned gains against a fixed default set on a Hilbert-curve test
trajectory, including a vehicle-mass sensitivity sweep.
"""

from .autopilot import (
    Autopilot,
    GainChannel,
    GainSet,
    Mixer,
    default_gains,
    zero_gains,
)
from .errors import ConfigError, MissionAbort, NumericalAbort, QuadtuneError
from .guidance import GuidanceLimits, plan_leg, setpoint_at
from .harness import (
    PROFILES,
    CostReport,
    FlightLog,
    ScenarioConfig,
    compute_cost,
    run_autotune,
    run_sweep,
    run_test,
    simulate,
)
from .missions import MissionPlan, MissionTracker, hilbert_mission, learning_mission
from .rcac import (
    AdaptiveGainState,
    ControllerStructure,
    Normalization,
    RcacHyperparameters,
    normalize_error,
    rcac_update,
    retrospective_cost,
)
from .vehicle import VehicleParameters, VehicleState, integrate_step, measure

__version__ = "0.1.0"
