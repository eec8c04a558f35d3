"""Symmetry-based visual-inertial odometry.

A bearing-and-IMU state estimator built around the symmetry group
SE2(3) x SOT(3)^n acting on poses, velocities and landmarks, with the
yaw-translation gauge freedom factored out of all comparisons.
"""

from .dynamics import (
    BiasState,
    GRAVITY,
    ImuInput,
    TotalTangent,
    apply_bias_correction,
    dynamics,
    lift,
)
from .filter import (
    FilterState,
    GainConfig,
    MeasurementBatch,
    add_landmark,
    bundle_lift,
    compute_input_matrix,
    compute_output_matrix,
    compute_state_matrix,
    estimated_state,
    make_filter_state,
    propagate,
    remove_landmark,
    update,
)
from .groups import (
    ExtPose,
    GaugeElement,
    Pose,
    Rot3,
    ScaledRot,
    Se3Tangent,
    adjoint_inv_se3,
    adjoint_se3,
    skew,
    unskew,
    yaw_rotation,
)
from .simulate import (
    GroundTruth,
    ScenarioConfig,
    Trajectory,
    align_gauge,
    aligned_rmse,
    generate_scenario,
    rmse_positions,
)
from .sphere import (
    ChartDomainError,
    EPS_DEPTH,
    ExceptionSetError,
    sphere_project,
    stereo_chart,
    stereo_chart_inv,
)
from .states import (
    AlgebraElement,
    BearingSet,
    CameraExtrinsics,
    SymElement,
    TotalState,
    chart_delta,
    chart_delta_inv,
    chart_epsilon,
    chart_epsilon_inv,
    exp_sym,
    gauge_act,
    measure,
    output_act,
    sym_act_total,
)

__version__ = "0.1.0"
