"""Kinematics, dynamics and motion analysis of hybrid rigid and soft-rod bodies."""

from ._hybridlink import (
    Error,
    Model,
    State,
    ad_se3,
    adjoint,
    bias_vector,
    compute_rrmse,
    contact_positions,
    energy,
    exp_adjoint,
    exp_se3,
    forward_dynamics,
    id_solve,
    ik_solve,
    load_model,
    log_se3,
    marker_positions,
    mass_matrix,
    muscle_optimize,
    parse_model,
    qp_solve,
    reference_model,
    simulate,
    standing_pose,
    tangent_integral,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
