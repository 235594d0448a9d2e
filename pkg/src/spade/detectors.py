"""Per-class extreme-value detectors over k-NN latent distances.

For each class ``c`` the leave-one-out distances from its training points to
their k-th nearest same-class neighbour are collected and their upper tail is
modelled with a peaks-over-threshold fit. A query is then scored by

    ood(x) = min_c G_c(z_c)

where ``z_c`` is the query's k-th nearest distance into class ``c`` and
``G_c`` the fitted CDF. The same models drive an abstaining classifier and,
together with lower-tail models of cross-class distances, a lower bound on
the perturbation an adversary needs to slip past the abstention test.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .config import FitConfig
from .errors import (
    FingerprintMismatch,
    InsufficientClassSize,
    InvalidArgument,
    InvalidTau,
    MissingPairModels,
    SpadeError,
    TooFewExceedances,
    UnknownClass,
)
from .evt import PotTailModel, pot_fit, tail_probability, tail_quantile
from .geometry import (
    prepare_query,
    class_loo_distances,
    cross_class_distances,
    distances_to,
    kth_smallest,
    latent_vectors,
)
from .store import EmbeddingDataset, ModelBundle, fingerprint

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DetectorBundle:
    """Fitted class (and optionally pair) models plus the training set they score against."""

    config: FitConfig
    class_models: dict[int, PotTailModel]
    dataset: EmbeddingDataset
    pair_models: dict[tuple[int, int], PotTailModel] | None = None
    fingerprint: str = ""
    _latent: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        missing = set(self.dataset.class_index) - set(self.class_models)
        if missing:
            raise InvalidArgument(f"no class model for classes {sorted(missing)}")
        if self.pair_models is not None:
            classes = self.dataset.classes
            wanted = {(a, b) for a in classes for b in classes if a != b}
            if not wanted <= set(self.pair_models):
                raise InvalidArgument("pair models must cover every ordered class pair")
        if not self.fingerprint:
            object.__setattr__(self, "fingerprint", fingerprint(self.dataset))
        object.__setattr__(self, "_latent", latent_vectors(self.dataset, self.config.latent))

    @property
    def classes(self) -> list[int]:
        return sorted(self.class_models)

    def class_points(self, c: int) -> np.ndarray:
        return self._latent[self.dataset.class_index[c]]

    def to_model_bundle(self) -> ModelBundle:
        return ModelBundle(
            config=self.config,
            class_models=dict(self.class_models),
            fingerprint=self.fingerprint,
            pair_models=None if self.pair_models is None else dict(self.pair_models),
        )

    @classmethod
    def from_model_bundle(
        cls, bundle: ModelBundle, dataset: EmbeddingDataset, allow_mismatch: bool = False
    ) -> DetectorBundle:
        """Re-attach a persisted bundle to its training set.

        Raises :class:`FingerprintMismatch` if ``dataset`` is not the set the
        models were fitted on, unless ``allow_mismatch`` is true (then a
        warning is logged).
        """
        actual = fingerprint(dataset)
        if actual != bundle.fingerprint:
            if not allow_mismatch:
                raise FingerprintMismatch(
                    f"dataset fingerprint {actual[:12]} does not match model {bundle.fingerprint[:12]}"
                )
            logger.warning("scoring against a dataset the models were not fitted on")
        return cls(
            config=bundle.config,
            class_models=bundle.class_models,
            dataset=dataset,
            pair_models=bundle.pair_models,
            fingerprint=bundle.fingerprint,
        )


@dataclass(frozen=True)
class AbstainDecision:
    outcome: Literal["predict", "abstain"]
    predicted_class: int
    z_c: float
    threshold: float

    @property
    def abstained(self) -> bool:
        return self.outcome == "abstain"


@dataclass(frozen=True)
class AdversarialBound:
    c: int
    c_prime: int
    bound: float
    vacuous: bool


def _annotate(exc: SpadeError, where: str) -> SpadeError:
    return type(exc)(f"{where}: {exc}")


def class_distance_samples(dataset: EmbeddingDataset, config: FitConfig) -> dict[int, np.ndarray]:
    """Leave-one-out k-th same-class neighbour distances, per class."""
    vectors = latent_vectors(dataset, config.latent)
    out = {}
    for c, members in sorted(dataset.class_index.items()):
        if members.size <= config.k:
            raise InsufficientClassSize(
                f"class {c} has {members.size} members, need more than k={config.k}"
            )
        out[c] = class_loo_distances(vectors[members], config.k)
    return out


def fit_class_models(dataset: EmbeddingDataset, config: FitConfig | None = None) -> DetectorBundle:
    """Fit one upper-tail POT model per class; pair models too if ``config.pairwise``."""
    config = config or FitConfig()
    samples = class_distance_samples(dataset, config)
    models = {}
    for c, z in samples.items():
        try:
            models[c] = pot_fit(z, config.q, "upper")
        except TooFewExceedances as exc:
            raise _annotate(exc, f"class {c}") from exc
        logger.debug("class %d: t=%.6g xi=%.4f sigma=%.6g", c, models[c].t,
                     models[c].params.xi, models[c].params.sigma)
    pair_models = fit_pairwise_models(dataset, config) if config.pairwise else None
    return DetectorBundle(
        config=config,
        class_models=models,
        dataset=dataset,
        pair_models=pair_models,
        fingerprint=fingerprint(dataset),
    )


def pair_distance_samples(
    dataset: EmbeddingDataset, config: FitConfig
) -> dict[tuple[int, int], np.ndarray]:
    """For each ordered pair (c, c'), the k-th nearest distance from every point of c into c'."""
    vectors = latent_vectors(dataset, config.latent)
    classes = dataset.classes
    for c in classes:
        if dataset.class_index[c].size < config.k:
            raise InsufficientClassSize(
                f"class {c} has {dataset.class_index[c].size} members, need at least k={config.k}"
            )
    return {
        (a, b): cross_class_distances(
            vectors[dataset.class_index[a]], vectors[dataset.class_index[b]], config.k
        )
        for a in classes
        for b in classes
        if a != b
    }


def fit_pairwise_models(
    dataset: EmbeddingDataset, config: FitConfig | None = None
) -> dict[tuple[int, int], PotTailModel]:
    """Lower-tail POT models of cross-class k-th nearest distances."""
    config = config or FitConfig()
    models = {}
    for pair, z in pair_distance_samples(dataset, config).items():
        try:
            models[pair] = pot_fit(z, config.q, "lower")
        except TooFewExceedances as exc:
            raise _annotate(exc, f"class pair {pair}") from exc
    return models


def class_distances(query, bundle: DetectorBundle) -> dict[int, float]:
    """k-th nearest distance from ``query`` into every class."""
    q = prepare_query(query, bundle.dataset.d, bundle.config.normalize)
    k = bundle.config.k
    out = {}
    for c in bundle.classes:
        pts = bundle.class_points(c)
        if pts.shape[0] < k:
            raise InsufficientClassSize(f"class {c} has fewer than k={k} members")
        out[c] = kth_smallest(distances_to(q, pts), k)
    return out


def ood_score_detail(query, bundle: DetectorBundle) -> tuple[float, int]:
    """OOD score of ``query`` and the class attaining the minimum (lowest index on ties)."""
    z = class_distances(query, bundle)
    best_c, best_p = -1, np.inf
    for c, zc in z.items():
        p = tail_probability(bundle.class_models[c], zc)
        if p < best_p:
            best_c, best_p = c, p
    return float(best_p), best_c


def ood_score(query, bundle: DetectorBundle) -> float:
    """Probability-scale OOD score in [0, 1]; higher means more out-of-distribution."""
    return ood_score_detail(query, bundle)[0]


def ood_scores(queries, bundle: DetectorBundle) -> np.ndarray:
    return np.array([ood_score(q, bundle) for q in np.atleast_2d(queries)])


def _check_tau(tau: float) -> None:
    if not 0 < tau < 1:
        raise InvalidTau(f"tau must be in (0, 1), got {tau}")


def abstain_threshold(bundle: DetectorBundle, c: int, tau: float) -> float:
    """Distance quantile at confidence ``1 - tau`` for class ``c``."""
    _check_tau(tau)
    if c not in bundle.class_models:
        raise UnknownClass(f"no model for class {c}")
    return float(tail_quantile(bundle.class_models[c], 1.0 - tau))


def abstain_decide(query, predicted_class: int, tau: float, bundle: DetectorBundle) -> AbstainDecision:
    """Keep the prediction iff the query's distance into that class is within its quantile."""
    c = int(predicted_class)
    threshold = abstain_threshold(bundle, c, tau)
    q = prepare_query(query, bundle.dataset.d, bundle.config.normalize)
    pts = bundle.class_points(c)
    if pts.shape[0] < bundle.config.k:
        raise InsufficientClassSize(f"class {c} has fewer than k={bundle.config.k} members")
    z_c = kth_smallest(distances_to(q, pts), bundle.config.k)
    outcome = "predict" if z_c <= threshold else "abstain"
    return AbstainDecision(outcome=outcome, predicted_class=c, z_c=z_c, threshold=threshold)


def adversarial_lower_bound(
    c: int, c_prime: int, tau: float, lipschitz: float, bundle: DetectorBundle
) -> AdversarialBound:
    """Smallest perturbation (input units) that can move a class-``c`` training point
    into class ``c_prime`` without triggering abstention, at confidence ``1 - tau``.

    A bound <= 0 carries no guarantee and is flagged ``vacuous``.
    """
    _check_tau(tau)
    if bundle.pair_models is None:
        raise MissingPairModels("bundle was fitted without pairwise models")
    if not lipschitz > 0:
        raise InvalidArgument(f"Lipschitz constant must be positive, got {lipschitz}")
    if (c, c_prime) not in bundle.pair_models:
        raise UnknownClass(f"no pair model for ({c}, {c_prime})")
    pair_q = float(tail_quantile(bundle.pair_models[(c, c_prime)], 1.0 - tau))
    class_q = abstain_threshold(bundle, c, tau)
    bound = (pair_q - class_q) / lipschitz
    return AdversarialBound(c=c, c_prime=c_prime, bound=bound, vacuous=bound <= 0)


def all_adversarial_bounds(bundle: DetectorBundle, tau: float, lipschitz: float) -> list[AdversarialBound]:
    if bundle.pair_models is None:
        raise MissingPairModels("bundle was fitted without pairwise models")
    return [
        adversarial_lower_bound(a, b, tau, lipschitz, bundle)
        for (a, b) in sorted(bundle.pair_models)
    ]
