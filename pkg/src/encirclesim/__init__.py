"""Multi-drone range-only ground-target encirclement simulator.

Two drones per target fuse noisy range measurements into a Kalman
estimate of the target state and orbit it from opposite sides while
pseudo-force fields keep the fleet clear of obstacles and each other.
"""

from .analysis import (
    CollisionAudit,
    ControllabilityReport,
    GramianReport,
    ObservabilityReport,
    collision_audit,
    controllability_gramian,
    covariance_bounds,
    observability_gramian,
    encirclement_bounds,
)
from .assignment import AssignmentResult, ScoreVector, TaskTable, run_assignment
from .controller import (
    ControllerParams,
    ForceBreakdown,
    accel_command,
    action_radius,
    apply_caps,
    attractive_force,
    interaction_force,
    repulsive_force,
)
from .errors import (
    AnalysisError,
    AssignmentError,
    ConfigurationError,
    ModelInputError,
    NumericalError,
    ProtocolError,
    SimulationError,
    TargetOutOfRange,
)
from .estimator import (
    EstimatorState,
    MeasurementRecord,
    build_measurement,
    filter_update,
    extract_state,
    init_estimator,
)
from .harness import MonteCarloResult, RunResult, run_monte_carlo, run_scenario
from .model import (
    DroneState,
    Obstacle,
    PresetShape,
    SystemMatrices,
    TargetState,
    eigen_bounds,
    preset_shape,
    step_drone,
    step_target,
)
from .scenario import ScenarioConfig, config_from_dict, golden_config, load_config
from .sensing import (
    NoiseStreams,
    RangeBatch,
    SensorConfig,
    measure_batch,
    neighbor_set,
    visible_targets,
)

__version__ = "0.1.0"
