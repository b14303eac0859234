"""Cooperative adaptive control of planar manipulators identifying a shared payload."""

from coopadapt.dynamics import (
    PARAM_LABELS,
    BodyParams,
    JointState,
    PlanarModel,
    SingularMassMatrixError,
    compose_params,
    coriolis_matrix,
    forward_dynamics,
    gravity_vector,
    inverse_dynamics,
    is_physical,
    kinetic_energy,
    mass_matrix,
    payload_regressor,
    potential_energy,
    regressor,
    rigid_body_terms,
)

__version__ = "0.1.0"


def scenario_path(name: str) -> str:
    """Filesystem path of a packaged reference scenario, e.g. 'two_robot_coupled.yaml'."""
    from importlib.resources import files

    return str(files("coopadapt") / "scenarios" / name)
