"""Gauss image problems for dual Orlicz curvature measures, solved by a normalized flow."""
from .convex import (
    RadialBody,
    SupportBody,
    body_from_record,
    ellipsoid_support,
    gauss_curvature,
    make_support_body,
    radial_from_support,
    support_from_radial,
    widths,
    wulff_shape,
)
from .errors import *  # noqa: F401,F403
from .flow import FlowConfig, FlowResult, continuation_run, default_schedule, residual, residual_norm, run, step, velocity
from .measures import (
    ProblemTriple,
    check_not_concentrated,
    dual_volume,
    eta,
    gauss_image_density,
    hemisphere_margin,
    mollify_measure,
    orlicz_energy,
    variational_check,
)
from .mofunc import (
    MOFunction,
    certify,
    flow_mode,
    function_from_descriptor,
    invert,
    make_log,
    make_orlicz,
    make_power,
    regularize,
)
from .sphere import ScalarField, SphericalGrid, build_grid

__version__ = "0.1.0"
