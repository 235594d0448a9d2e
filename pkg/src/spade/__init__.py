"""Extreme-value out-of-distribution detection over k-NN latent distances.

Per-class peaks-over-threshold models of nearest-neighbour distances give a
probability-scale OOD score, an abstaining classifier at confidence
``1 - tau`` and a lower bound on successful adversarial perturbations.
"""

from .config import FitConfig, LatentConfig
from .detectors import (
    AbstainDecision,
    AdversarialBound,
    DetectorBundle,
    abstain_decide,
    adversarial_lower_bound,
    fit_class_models,
    fit_pairwise_models,
    ood_score,
    ood_scores,
)
from .evaluation import (
    ScoredRun,
    SynthSpec,
    auroc,
    fpr_at_tpr,
    generate_synthetic,
    stability_study,
)
from .evt import (
    GpdParams,
    PotTailModel,
    fit_gpd_mle,
    gev_cdf,
    gpd_cdf,
    gpd_logpdf,
    gpd_quantile,
    pot_fit,
    select_threshold,
    tail_probability,
    tail_quantile,
)
from .geometry import (
    empirical_lipschitz,
    informativeness,
    kth_nn_distance_same_class,
    kth_nn_distance_to_class,
    normalize,
    variation,
)
from .store import (
    EmbeddingDataset,
    EmbeddingRecord,
    ModelBundle,
    load_dataset,
    load_models,
    save_dataset,
    save_models,
)

__version__ = "0.1.0"

__all__ = [
    "FitConfig",
    "LatentConfig",
    "AbstainDecision",
    "AdversarialBound",
    "DetectorBundle",
    "abstain_decide",
    "adversarial_lower_bound",
    "fit_class_models",
    "fit_pairwise_models",
    "ood_score",
    "ood_scores",
    "ScoredRun",
    "SynthSpec",
    "auroc",
    "fpr_at_tpr",
    "generate_synthetic",
    "stability_study",
    "GpdParams",
    "PotTailModel",
    "fit_gpd_mle",
    "gev_cdf",
    "gpd_cdf",
    "gpd_logpdf",
    "gpd_quantile",
    "pot_fit",
    "select_threshold",
    "tail_probability",
    "tail_quantile",
    "empirical_lipschitz",
    "informativeness",
    "kth_nn_distance_same_class",
    "kth_nn_distance_to_class",
    "normalize",
    "variation",
    "EmbeddingDataset",
    "EmbeddingRecord",
    "ModelBundle",
    "load_dataset",
    "load_models",
    "save_dataset",
    "save_models",
]
