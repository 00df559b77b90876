"""Nonsingular nodal-element parametrization of satellite relative motion.

Subpackages: frames (rotations and relative orientation), relstate (the
six-state parametrization and local mappings), dynamics (exact Keplerian
and perturbed evolution plus the Cowell oracle), conjunction (passive
safety and avoidance planning), navigation (angles-only EKF), and
missionsim (scenarios, campaigns, CLI).
"""

from .constants import AU_KM, MU_EARTH, MU_SUN
from .errors import (
    CoplanarNormalInput,
    GeometryError,
    InfeasibleEncounter,
    NodalError,
    RetrogradeSingularity,
    StepFailure,
    ZeroRange,
    ZeroSensitivity,
    ZetaUndefined,
)
from .frames import (
    ClassicalElements,
    RelativeOrientation,
    dcm_rtn2_to_rtn1,
    pci_to_pqw,
    relative_orientation,
    rot_x,
    rot_z,
    wrap_angle,
)
from .relstate import (
    EccIncVectors,
    LocalState,
    NodalRelativeState,
    RecoveredInvariants,
    ReferenceParams,
    RelativePosition,
    classical_from_oe,
    ecc_inc_vectors,
    haversine_psi,
    local_state,
    oe_from_classical,
    position_jacobians,
    relative_position,
    relative_position_batch,
    relative_velocity,
    separation_distance,
)
from .dynamics import (
    AnalyticAdvance,
    CartesianState,
    CowellTrajectory,
    NodalRates,
    PerturbationInput,
    Trajectory,
    analytic_step,
    apply_impulse,
    cartesian_to_elements,
    cowell_propagate,
    elements_to_cartesian,
    f_eta,
    f_unperturbed,
    f_unperturbed_jacobian,
    input_matrices,
    kepler_advance,
    nodal_variational,
    orbital_period,
    perturbed_derivative,
    propagate,
    rtn_basis,
    unperturbed_flow,
)
from .conjunction import (
    C1Verdict,
    C2Result,
    ManeuverPlan,
    c1_test,
    c2_check,
    plan_avoidance,
    zeta,
    zeta_descending,
    zeta_gradient,
)
from .navigation import (
    EkfUpdate,
    FilterState,
    MeasurementTriple,
    NoiseSpec,
    PredictedMeasurement,
    ekf_propagate,
    ekf_update,
    measure,
    predict_measurement,
)
from .missionsim import (
    EncounterSpec,
    ScenarioConfig,
    build_collision_scenario,
    build_truth,
    run_flyby,
    run_maneuver_sweep,
    run_montecarlo,
    run_validation,
)

__version__ = "0.1.0"
