"""Detection metrics, synthetic embeddings and the subsampling stability study."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.stats import rankdata

from .config import FitConfig
from .detectors import DetectorBundle, class_distance_samples, ood_scores
from .errors import EmptyScores, InvalidArgument, NonFiniteValue, SpadeError
from .evt import MIN_EXCEEDANCES, _nearest_rank, pot_fit
from .geometry import distances_to, kth_smallest, latent_vectors, normalize_rows
from .store import EmbeddingDataset


# -- metrics ---------------------------------------------------------------


@dataclass(frozen=True)
class ScoredRun:
    """OOD scores of in-distribution and out-of-distribution queries (OOD = positive)."""

    id_scores: np.ndarray
    ood_scores: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.id_scores, dtype=np.float64).ravel()
        ood = np.asarray(self.ood_scores, dtype=np.float64).ravel()
        if ids.size == 0 or ood.size == 0:
            raise EmptyScores("both ID and OOD score lists must be non-empty")
        if not (np.all(np.isfinite(ids)) and np.all(np.isfinite(ood))):
            raise NonFiniteValue("scores must be finite")
        object.__setattr__(self, "id_scores", ids)
        object.__setattr__(self, "ood_scores", ood)


def auroc(run: ScoredRun) -> float:
    """Mann-Whitney estimate of P(ood score > id score), ties counted one half."""
    n_id, n_ood = run.id_scores.size, run.ood_scores.size
    ranks = rankdata(np.concatenate([run.ood_scores, run.id_scores]))
    u = ranks[:n_ood].sum() - n_ood * (n_ood + 1) / 2.0
    return float(u / (n_ood * n_id))


def fpr_at_tpr(run: ScoredRun, tpr_target: float = 0.95) -> float:
    """Fraction of ID scores flagged at the highest threshold that flags
    at least ``tpr_target`` of the OOD scores (flagged means score >= threshold)."""
    if not 0 < tpr_target <= 1:
        raise InvalidArgument(f"tpr_target must be in (0, 1], got {tpr_target}")
    ood_desc = np.sort(run.ood_scores)[::-1]
    needed = _nearest_rank(tpr_target, ood_desc.size)
    threshold = ood_desc[needed - 1]
    return float(np.mean(run.id_scores >= threshold))


# -- synthetic embeddings --------------------------------------------------


@dataclass(frozen=True)
class SynthSpec:
    """Gaussian class clusters plus held-out ID and OOD queries.

    ``ood_shift`` (shifted-cluster OOD only) is the distance between a class
    centre and its shifted twin, in units of ``sigma_cluster``.
    """

    n_classes: int = 10
    points_per_class: int = 200
    d: int = 16
    sigma_cluster: float = 0.1
    on_sphere: bool = True
    ood_kind: Literal["uniform_sphere", "shifted_cluster"] = "uniform_sphere"
    seed: int = 0
    n_id_queries: int = 500
    n_ood_queries: int = 500
    ood_shift: float = 3.0

    def __post_init__(self):
        for name in ("n_classes", "points_per_class", "d", "n_id_queries", "n_ood_queries"):
            if getattr(self, name) < 1:
                raise InvalidArgument(f"{name} must be at least 1")
        if not self.sigma_cluster > 0:
            raise InvalidArgument("sigma_cluster must be positive")
        if self.ood_kind not in ("uniform_sphere", "shifted_cluster"):
            raise InvalidArgument(f"unknown ood_kind {self.ood_kind!r}")


@dataclass(frozen=True)
class SyntheticData:
    train: EmbeddingDataset
    id_queries: EmbeddingDataset
    ood_queries: EmbeddingDataset
    centers: np.ndarray = field(repr=False)


def _unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    while True:
        x = rng.standard_normal((n, d))
        if np.all(np.linalg.norm(x, axis=1) > 1e-12):
            return normalize_rows(x)


def generate_synthetic(spec: SynthSpec) -> SyntheticData:
    """Draw a labelled training set, held-out ID queries and OOD queries.

    Everything is a function of ``spec`` alone (including its seed).
    """
    rng = np.random.default_rng(spec.seed)
    C, P, d, s = spec.n_classes, spec.points_per_class, spec.d, spec.sigma_cluster
    centers = _unit_rows(rng, C, d)

    def around(base: np.ndarray) -> np.ndarray:
        pts = base + s * rng.standard_normal(base.shape)
        return normalize_rows(pts) if spec.on_sphere else pts

    train_labels = np.repeat(np.arange(C), P)
    train_x = around(centers[train_labels])
    id_labels = np.arange(spec.n_id_queries) % C
    id_x = around(centers[id_labels])
    ood_labels = np.arange(spec.n_ood_queries) % C
    if spec.ood_kind == "uniform_sphere":
        ood_x = _unit_rows(rng, spec.n_ood_queries, d)
        # nearest centre, for bookkeeping only
        ood_labels = np.argmax(ood_x @ centers.T, axis=1)
    else:
        shifted = centers + spec.ood_shift * s * _unit_rows(rng, C, d)
        if spec.on_sphere:
            shifted = normalize_rows(shifted)
        ood_x = around(shifted[ood_labels])

    def make(prefix: str, labels: np.ndarray, x: np.ndarray) -> EmbeddingDataset:
        return EmbeddingDataset(
            ids=[f"{prefix}{i}" for i in range(len(labels))],
            labels=labels,
            vectors=x,
            n_classes=C,
        )

    return SyntheticData(
        train=make("train-", train_labels, train_x),
        id_queries=make("id-", id_labels, id_x),
        ood_queries=make("ood-", ood_labels, ood_x),
        centers=centers,
    )


# -- stability study -------------------------------------------------------


def feasible_quantile(samples, q: float, min_exceed: int = MIN_EXCEEDANCES) -> float:
    """Largest nearest-rank level ``<= q`` whose threshold leaves ``min_exceed`` strict exceedances."""
    s = np.sort(np.asarray(samples, dtype=np.float64))
    n = s.size
    for rank in range(_nearest_rank(q, n), 0, -1):
        if np.count_nonzero(s > s[rank - 1]) >= min_exceed:
            return q if rank == _nearest_rank(q, n) else rank / n
    raise SpadeError(f"no threshold leaves {min_exceed} exceedances among {n} samples")


def knn_baseline_scores(train: EmbeddingDataset, queries, config: FitConfig) -> np.ndarray:
    """Class-agnostic raw score: k-th nearest distance over the whole training set."""
    pts = latent_vectors(train, config.latent)
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if config.normalize:
        q = normalize_rows(q)
    return np.array([kth_smallest(distances_to(x, pts), config.k) for x in q])


@dataclass(frozen=True)
class StabilityRow:
    fraction: float
    seed: int
    cls: int
    n: int
    q: float
    t: float
    xi: float
    sigma: float
    n_exceed: int


@dataclass(frozen=True)
class StabilityCell:
    fraction: float
    seed: int
    auroc: float
    fpr95: float
    baseline_auroc: float
    baseline_fpr95: float


@dataclass
class StabilityReport:
    fractions: list[float]
    seeds: list[int]
    rows: list[StabilityRow]
    cells: list[StabilityCell]

    def rows_for(self, fraction: float) -> list[StabilityRow]:
        return [r for r in self.rows if r.fraction == fraction]

    def cells_for(self, fraction: float) -> list[StabilityCell]:
        return [c for c in self.cells if c.fraction == fraction]

    def param_table(self, name: str) -> np.ndarray:
        """``(n_fractions, n_seeds, n_classes)`` array of a fitted parameter."""
        classes = sorted({r.cls for r in self.rows})
        out = np.full((len(self.fractions), len(self.seeds), len(classes)), np.nan)
        fi = {f: i for i, f in enumerate(self.fractions)}
        si = {s: i for i, s in enumerate(self.seeds)}
        ci = {c: i for i, c in enumerate(classes)}
        for r in self.rows:
            out[fi[r.fraction], si[r.seed], ci[r.cls]] = getattr(r, name)
        return out

    def metric_table(self, name: str) -> np.ndarray:
        """``(n_fractions, n_seeds)`` array of a per-cell metric."""
        out = np.full((len(self.fractions), len(self.seeds)), np.nan)
        fi = {f: i for i, f in enumerate(self.fractions)}
        si = {s: i for i, s in enumerate(self.seeds)}
        for c in self.cells:
            out[fi[c.fraction], si[c.seed]] = getattr(c, name)
        return out

    def to_csv(self) -> str:
        """One line per fraction x seed x class; cell metrics repeated on each line."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fraction", "seed", "class", "n", "q", "t", "xi", "sigma", "n_exceed",
                    "auroc", "fpr95", "baseline_auroc", "baseline_fpr95"])
        cells = {(c.fraction, c.seed): c for c in self.cells}
        for r in self.rows:
            c = cells[(r.fraction, r.seed)]
            w.writerow([repr(r.fraction), r.seed, r.cls, r.n, repr(r.q), repr(r.t), repr(r.xi),
                        repr(r.sigma), r.n_exceed, repr(c.auroc), repr(c.fpr95),
                        repr(c.baseline_auroc), repr(c.baseline_fpr95)])
        return buf.getvalue()

    def summary(self) -> dict:
        """Per-fraction means and standard deviations (over seeds) of metrics and parameters."""
        per_fraction = []
        for i, f in enumerate(self.fractions):
            entry = {"fraction": f}
            for name in ("auroc", "fpr95", "baseline_auroc", "baseline_fpr95"):
                vals = self.metric_table(name)[i]
                entry[name] = float(np.mean(vals))
                entry[name + "_std"] = float(np.std(vals))
            for name in ("xi", "sigma", "t"):
                vals = self.param_table(name)[i]
                entry[name + "_mean"] = float(np.mean(vals))
                entry[name + "_std"] = float(np.std(vals))
            per_fraction.append(entry)
        return {"fractions": self.fractions, "seeds": self.seeds, "per_fraction": per_fraction}

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=1)


def _subsample_positions(dataset: EmbeddingDataset, fraction: float, rng) -> np.ndarray:
    chosen = []
    for c in dataset.classes:
        members = dataset.class_index[c]
        if fraction == 1.0:
            chosen.append(members)
            continue
        m = max(1, int(round(fraction * members.size)))
        chosen.append(rng.choice(members, size=m, replace=False))
    return np.sort(np.concatenate(chosen))


def fit_study_bundle(train: EmbeddingDataset, config: FitConfig) -> tuple[DetectorBundle, dict]:
    """Class models for one study cell.

    Identical to :func:`spade.detectors.fit_class_models` except that a class
    too small for ten exceedances at ``config.q`` is fitted at the largest
    feasible lower quantile instead of failing. Returns the bundle and the
    quantile used per class.
    """
    samples = class_distance_samples(train, config)
    models, used_q = {}, {}
    for c, z in samples.items():
        used_q[c] = feasible_quantile(z, config.q)
        models[c] = pot_fit(z, used_q[c], "upper")
    return DetectorBundle(config=config, class_models=models, dataset=train), used_q


def stability_study(
    dataset: EmbeddingDataset,
    config: FitConfig,
    fractions,
    n_seeds: int,
    id_queries,
    ood_queries,
    seed: int = 0,
) -> StabilityReport:
    """Refit on stratified subsamples and re-evaluate against fixed queries.

    For every fraction and seed, each class is subsampled without
    replacement, the class models are refitted, and both the model score and
    the raw k-NN distance baseline are evaluated (AUROC, FPR95) on the same
    held-out ID and OOD queries.
    """
    fractions = [float(f) for f in fractions]
    if not fractions or any(not 0 < f <= 1 for f in fractions):
        raise InvalidArgument(f"fractions must lie in (0, 1], got {fractions}")
    if any(b <= a for a, b in zip(fractions, fractions[1:])):
        raise InvalidArgument("fractions must be strictly increasing")
    if n_seeds < 1:
        raise InvalidArgument("n_seeds must be at least 1")
    id_q = np.atleast_2d(np.asarray(id_queries, dtype=np.float64))
    ood_q = np.atleast_2d(np.asarray(ood_queries, dtype=np.float64))

    seeds = list(range(n_seeds))
    rows, cells = [], []
    for fi, frac in enumerate(fractions):
        for s in seeds:
            rng = np.random.default_rng([seed, fi, s])
            train = dataset.subset(_subsample_positions(dataset, frac, rng))
            try:
                bundle, used_q = fit_study_bundle(train, config)
            except SpadeError as exc:
                raise type(exc)(f"fraction={frac} seed={s}: {exc}") from exc
            for c in bundle.classes:
                m = bundle.class_models[c]
                rows.append(StabilityRow(frac, s, c, m.n, used_q[c], m.t, m.params.xi,
                                         m.params.sigma, m.n_exceed))
            run = ScoredRun(ood_scores(id_q, bundle), ood_scores(ood_q, bundle))
            base = ScoredRun(knn_baseline_scores(train, id_q, config),
                             knn_baseline_scores(train, ood_q, config))
            cells.append(StabilityCell(frac, s, auroc(run), fpr_at_tpr(run),
                                       auroc(base), fpr_at_tpr(base)))
    return StabilityReport(fractions=fractions, seeds=seeds, rows=rows, cells=cells)


def evaluate(bundle: DetectorBundle, id_queries, ood_queries) -> dict:
    """AUROC and FPR95 of the OOD score on the given query sets."""
    run = ScoredRun(ood_scores(id_queries, bundle), ood_scores(ood_queries, bundle))
    return {
        "auroc": auroc(run),
        "fpr95": fpr_at_tpr(run),
        "n_id": int(run.id_scores.size),
        "n_ood": int(run.ood_scores.size),
    }
