"""Curvature-operator algebra, rotationally symmetric quasi-Einstein profiles and Ricci flow ODEs."""

from .bivectors import Bivector, bracket, wedge
from .curvature import CurvatureOperator, q_of, ricci_of, scal_of, sharp, sharp_bruteforce
from .flow import flow_einstein, flow_product_spheres, curvature_evolution_residual
from .model_spaces import parse_model_space, product, space_form
from .profile import build_profile, round_sphere
from .quasi_einstein import QEStructure, integral_identity_report, qe_residual
from .solver import solve_qe_profile

__version__ = "0.1.0"

__all__ = [
    "Bivector",
    "bracket",
    "wedge",
    "CurvatureOperator",
    "q_of",
    "ricci_of",
    "scal_of",
    "sharp",
    "sharp_bruteforce",
    "flow_einstein",
    "flow_product_spheres",
    "curvature_evolution_residual",
    "parse_model_space",
    "product",
    "space_form",
    "build_profile",
    "round_sphere",
    "QEStructure",
    "integral_identity_report",
    "qe_residual",
    "solve_qe_profile",
]
