"""Proper spin and charge conductivity of gapped periodic tight-binding models."""

from importlib import resources

from ._accel import BACKEND, HAS_NUMBA
from .dynamics import evolve, neass_agreement, switching_profile
from .mesh import BZMesh
from .model import Model, ModelError, builtin_model, load_model, make_model, parse_model, shifted_model
from .neass import inverse_liouvillian, neass_fiber, neass_residual_sweep, pi1_fiber
from .spectral import GapError, fermi_projector, projector_gradient, spectral_batch, verify_gap
from .transport import (TransportFibers, chern_number, kubo_sigma, per_orbital_torque, persistent_current,
                        robustness_sweep, sigma_conv, sigma_prop, sigma_rot, spin_chern, ucc_check)


def data_file(name):
    """Path of a bundled model file, e.g. ``data_file("kane_mele.json")``."""
    return resources.files(__name__).joinpath("data", name)


__all__ = [
    "BACKEND", "BZMesh", "GapError", "HAS_NUMBA", "Model", "ModelError", "TransportFibers", "builtin_model",
    "chern_number", "data_file", "evolve", "fermi_projector", "inverse_liouvillian", "kubo_sigma",
    "load_model", "make_model", "neass_agreement", "neass_fiber", "neass_residual_sweep", "parse_model",
    "per_orbital_torque", "persistent_current", "pi1_fiber", "projector_gradient", "robustness_sweep",
    "shifted_model", "sigma_conv", "sigma_prop", "sigma_rot", "spectral_batch", "spin_chern",
    "switching_profile", "ucc_check", "verify_gap",
]
