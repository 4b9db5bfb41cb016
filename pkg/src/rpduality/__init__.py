"""Exact convex duality for integral functionals on finite scenario trees.

Submodules: :mod:`~rpduality.plq` (univariate PLQ calculus),
:mod:`~rpduality.separable`, :mod:`~rpduality.tree` (scenario trees, optional
projection, R1 norm), :mod:`~rpduality.measures`, :mod:`~rpduality.functionals`,
:mod:`~rpduality.control` and :mod:`~rpduality.cli`.
"""

from .functionals import EI, EJ, FunctionalInstance, conjugate_bruteforce, fenchel_gap, interchange_check
from .measures import RandomMeasure, J_functional, m_inf_norm, pairing
from .plq import (
    ImproperFunctionError,
    PLQFunction,
    PLQParseError,
    SubdiffInterval,
    add,
    conjugate,
    evaluate,
    expectation,
    lipschitz_envelope,
    normal_cone,
    prox,
    recession,
    scale,
    shift,
    subdifferential,
    support_function,
)
from .separable import SeparableIntegrand
from .tree import ScenarioTree, optional_projection, r1_norm

__version__ = "0.1.0"
