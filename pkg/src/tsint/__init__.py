"""Riemann–Stieltjes Δ-integrals on time scales and the inequalities built on them."""

from .convex import ConvexFn, check_subgradient, convex_catalog
from .errors import *  # noqa: F401,F403
from .expr import ExprFn, parse
from .fuzz import FuzzConfig
from .inequalities import INEQUALITIES, CheckReport, InstanceSpec, run_check
from .integration import (
    IntegralResult,
    RSSum,
    cumulative,
    darboux_bounds,
    iterated_integral,
    linearity_check,
    rs_double_integral,
    rs_integral,
    rs_integral_via_transition,
    rs_sum,
)
from .qscale import example_qscale
from .scalespec import format_scale, parse_scale
from .timescale import Interval, Partition, Point, PointClass, QTail, TimeScale, common_refinement

__version__ = "0.1.0"
