"""Shear-deformed torus endomorphisms: cone certificates, preimage-tree
pullback averages, analytic thresholds, inverse-limit coding, and Monte-Carlo
Lyapunov exponent estimation."""

from .bounds import (
    BoundInputs,
    ThresholdReport,
    asymptotic_certificate,
    certificate_margin,
    family_inputs,
    layer_bounds,
    segment_threshold,
    solve_threshold,
)
from .cones import (
    Cone,
    ExpansionConstants,
    certify_alpha,
    contains,
    expansion_constants,
    min_expansion,
    search_alpha,
)
from .endo import (
    EndoMap,
    PreconditionError,
    ShearProfile,
    canonical_profile,
    family_constants,
    standard_family,
)
from .estimator import (
    BudgetError,
    CChiEstimate,
    PreimageTreeStats,
    TangentSample,
    c_det,
    estimate_c_chi,
    good_fraction_bound,
    pullback_tree,
)
from .intmat import (
    HomothetyError,
    IntMatrix2,
    NormalPosition,
    SingularMatrixError,
    SmithDecomposition,
    coset_representatives,
    normalize_position,
    smith_normal_form,
)
from .segments import (
    GuidedSearchResult,
    Polyline,
    VSegmentSpec,
    find_v_subsegment,
    guided_search,
    is_v_segment,
    pullback_curve,
)
from .solenoid import (
    BackwardOrbit,
    ExponentEstimate,
    PsiState,
    SymbolWord,
    cylinder_measure,
    estimate_exponents,
    psi,
    sample_backward_orbit,
)

__version__ = "0.1.0"
