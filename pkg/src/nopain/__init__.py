"""Semi-discrete OT heights, singular boundaries, mode-mixed sampling."""

from .attack import (
    AdversarialFeature,
    AttackSummary,
    adversarial_feature_set,
    interpolate,
    mass_centers,
    run_attack,
)
from .boundary import (
    BoundaryConfig,
    NeighborRanking,
    SingularPair,
    detect_singular_pairs,
    pair_angle,
    probe_cell,
    rank_neighbors,
)
from .features import (
    FeatureSet,
    MixtureMode,
    MixtureSpec,
    PointCloud,
    axis_mixture_spec,
    load_clouds,
    load_features,
    save_clouds,
    save_features,
    synth_mixture,
)
from .metrics import CloudPair, batch_cd, chamfer_distance
from .sdot import (
    CellStatistics,
    HeightVector,
    SolveReport,
    SolverConfig,
    assign_cell,
    energy,
    estimate_cell_stats,
    height_gradient,
    hyperplane_value,
    load_heights,
    save_heights,
    solve,
)

__version__ = "0.1.0"
