"""sectionlab: a numerical laboratory for section spaces of continuous
families of compact complex manifolds.

The library builds finite-atlas families over a sampled base, equips them
with bump systems and combined Hermitian metrics, integrates weighted
holomorphic sprays to get fiberwise exponential maps, assembles normal
coordinate charts on the space of continuous sections, and numerically
certifies that chart transitions are differentiable with grid-function-linear
derivatives.
"""

from .algebra import (
    AlgebraElement,
    ModuleElement,
    PowerSeries,
    convergence_radius,
    lorch_derivative,
    module_norm,
    power_series_eval,
    sup_norm,
)
from .analysis import DiscDomain, cauchy_coeff, holomorphy_residual, param_continuity, schwarz_bounds
from .family import (
    Atlas,
    BumpSystem,
    Chart,
    CompactSystem,
    Point,
    Transition,
    UnitWeights,
    atlas_validate,
    build_bump_system,
    build_compact_system,
)
from .fixtures import FIXTURE_NAMES, Bundle, describe_fixture, make_bumps, make_fixture
from .geometry import (
    MetricConstants,
    TangentVector,
    curve_length,
    estimate_chart_constants,
    estimate_metric_constants,
    fiber_distance,
    inner,
    norm,
    pushforward,
    section_distance,
    trivial_inner,
)
from .grid import BaseGrid
from .sections import (
    Frame,
    NormalChart,
    PartitionOfUnity,
    Section,
    TangentSection,
    build_normal_chart,
    frechet_remainder_report,
    gram_schmidt_frame,
    partition_of_unity,
    support_sets,
    transition_jacobian,
)
from .spray import (
    ExpConstants,
    SprayContext,
    Weighting,
    christoffel,
    estimate_exp_constants,
    exp_map,
    inverse_exp,
    picard_exp,
    spray_field,
)

__version__ = "0.1.0"
