"""Linear cocycles over hyperbolic toral automorphisms: holonomies, twisted
cohomological equations and conjugacies, checked numerically."""
from .base import (
    STABLE,
    UNSTABLE,
    HyperbolicAutomorphism,
    LeafSelector,
    TorusPoint,
    cat_map,
    fixed_point,
    lattice_points,
    leaf_coordinate,
    leaf_point,
    make_automorphism,
    orbit,
    sample_points,
    stable_unstable_path,
    step,
    torus_distance,
)
from .cocycle import (
    Cocycle,
    GrowthReport,
    growth_report,
    inverse_cocycle,
    iterate,
    lyapunov_spectrum,
    polynomial_growth_degree,
    quasiconformal_distortion,
)
from .conjugacy import (
    BlockDecomposition,
    ConjugacySection,
    Flag,
    FlagField,
    SplittingReport,
    block_decompose,
    conjugacy_residual,
    exponent_match_check,
    holder_exponent_estimate,
    inductive_block_solve,
    intertwining_residual,
    invariant_metric,
    invariant_splitting,
    jordan_flag,
    oracle_diagonal_blocks,
    principal_angles,
)
from .errors import (
    CocycleLabError,
    CocycleOverflow,
    ConfigError,
    Degenerate,
    GapTooSmall,
    InsufficientSignal,
    LeafMismatch,
    LeafRadiusExceeded,
    MultipleModuli,
    NoConvergence,
    NotBounded,
    NotHyperbolic,
    NotInvariant,
    NotUnimodular,
    SingularC,
    TwistNotBounded,
)
from .fields import FunctionField, MatrixField, TrigSection, random_matrix_field, rotation
from .holonomy import (
    HolonomyMap,
    TwistedHolonomy,
    coboundary_residual,
    holonomy,
    holonomy_property_suite,
    solve_twisted_coboundary,
    stable_holonomy,
    trajectory_sum,
    twisted_difference,
    twisted_holonomy,
    twisted_holonomy_apply,
    twisted_invariance_residual,
    unstable_holonomy,
)
from .spd import SpdPoint, affine_distance, circumcenter

__version__ = "0.1.0"

__all__ = [
    "BlockDecomposition",
    "Cocycle",
    "CocycleLabError",
    "CocycleOverflow",
    "ConfigError",
    "ConjugacySection",
    "Degenerate",
    "Flag",
    "FlagField",
    "FunctionField",
    "GapTooSmall",
    "GrowthReport",
    "HolonomyMap",
    "HyperbolicAutomorphism",
    "InsufficientSignal",
    "LeafMismatch",
    "LeafRadiusExceeded",
    "LeafSelector",
    "MatrixField",
    "MultipleModuli",
    "NoConvergence",
    "NotBounded",
    "NotHyperbolic",
    "NotInvariant",
    "NotUnimodular",
    "STABLE",
    "SingularC",
    "SpdPoint",
    "SplittingReport",
    "TorusPoint",
    "TrigSection",
    "TwistNotBounded",
    "TwistedHolonomy",
    "UNSTABLE",
    "affine_distance",
    "block_decompose",
    "cat_map",
    "circumcenter",
    "coboundary_residual",
    "conjugacy_residual",
    "exponent_match_check",
    "fixed_point",
    "growth_report",
    "holder_exponent_estimate",
    "holonomy",
    "holonomy_property_suite",
    "inductive_block_solve",
    "intertwining_residual",
    "invariant_metric",
    "invariant_splitting",
    "inverse_cocycle",
    "iterate",
    "jordan_flag",
    "lattice_points",
    "leaf_coordinate",
    "leaf_point",
    "lyapunov_spectrum",
    "make_automorphism",
    "oracle_diagonal_blocks",
    "orbit",
    "polynomial_growth_degree",
    "principal_angles",
    "quasiconformal_distortion",
    "random_matrix_field",
    "rotation",
    "sample_points",
    "solve_twisted_coboundary",
    "stable_holonomy",
    "stable_unstable_path",
    "step",
    "torus_distance",
    "trajectory_sum",
    "twisted_difference",
    "twisted_holonomy",
    "twisted_holonomy_apply",
    "twisted_invariance_residual",
    "unstable_holonomy",
]

