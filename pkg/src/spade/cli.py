"""Command-line front end.

Exit status: 0 success, 1 I/O, 2 validation, 3 fingerprint mismatch,
4 missing data, 5 missing pair models. On failure a single line
``error <CODE>: <message>`` is written to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from .config import FitConfig
from .detectors import (
    DetectorBundle,
    abstain_decide,
    all_adversarial_bounds,
    fit_class_models,
    ood_score_detail,
)
from .errors import (
    EmptyDataset,
    EmptyScores,
    InvalidArgument,
    IoFailure,
    MalformedFile,
    MissingPairModels,
    MissingPrediction,
    SpadeError,
    UnknownClass,
)
from .evaluation import SynthSpec, evaluate, generate_synthetic, stability_study
from .geometry import empirical_lipschitz
from .store import load_dataset, load_models, save_dataset, save_models

log = logging.getLogger("spade")


def _write_text(path, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _load_queries(path, fmt, *, empty_is_scores=False):
    try:
        return load_dataset(path, fmt)
    except EmptyDataset as exc:
        if empty_is_scores:
            raise EmptyScores(f"{path}: no queries") from exc
        raise


def _load_bundle(args) -> DetectorBundle:
    bundle = load_models(args.model)
    train = load_dataset(args.train, args.format)
    return DetectorBundle.from_model_bundle(bundle, train, allow_mismatch=args.allow_mismatch)


def cmd_fit(args) -> int:
    train = load_dataset(args.train, args.format)
    config = FitConfig(k=args.k, q=args.q, normalize=args.normalize, pairwise=args.pairwise)
    bundle = fit_class_models(train, config)
    save_models(bundle.to_model_bundle(), args.out)
    print("class,t,xi,sigma,n_exceed")
    for c in bundle.classes:
        m = bundle.class_models[c]
        print(f"{c},{m.t!r},{m.params.xi!r},{m.params.sigma!r},{m.n_exceed}")
    return 0


def cmd_score(args) -> int:
    bundle = _load_bundle(args)
    queries = _load_queries(args.queries, args.format)
    rows = []
    for rec in queries:
        score, argmin = ood_score_detail(rec.vector, bundle)
        rows.append([rec.id, repr(score), argmin])
    _write_text(args.out, _csv_text(["id", "ood_score", "argmin_class"], rows))
    return 0


def _read_predictions(path) -> dict[str, int]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header[:2]] != ["id", "predicted_class"]:
        raise MalformedFile(f"{path}: expected header 'id,predicted_class'")
    out = {}
    for row in reader:
        if not row:
            continue
        try:
            out[row[0]] = int(row[1])
        except (IndexError, ValueError) as exc:
            raise MalformedFile(f"{path}: bad prediction row {row}") from exc
    return out


def cmd_abstain(args) -> int:
    bundle = _load_bundle(args)
    queries = _load_queries(args.queries, args.format)
    predictions = _read_predictions(args.predictions)
    missing = [rid for rid in queries.ids if rid not in predictions]
    if missing:
        raise MissingPrediction(f"no prediction for query id {missing[0]!r} ({len(missing)} missing)")
    unknown = sorted({c for c in predictions.values() if c not in bundle.class_models})
    if unknown:
        raise UnknownClass(f"predictions name unknown classes {unknown}")
    rows = []
    for rec in queries:
        dec = abstain_decide(rec.vector, predictions[rec.id], args.tau, bundle)
        rows.append([rec.id, dec.outcome, repr(dec.z_c), repr(dec.threshold)])
    _write_text(args.out, _csv_text(["id", "decision", "z_c", "threshold"], rows))
    return 0


def cmd_adv_bound(args) -> int:
    bundle = load_models(args.model)
    if bundle.pair_models is None:
        raise MissingPairModels("model was fitted without --pairwise")
    lipschitz = args.lipschitz_k
    if args.lipschitz_inputs or args.lipschitz_embeddings:
        if not (args.lipschitz_inputs and args.lipschitz_embeddings):
            raise InvalidArgument("--lipschitz-inputs and --lipschitz-embeddings go together")
        inputs = load_dataset(args.lipschitz_inputs, args.format)
        embeds = load_dataset(args.lipschitz_embeddings, args.format)
        if inputs.ids != embeds.ids:
            raise MalformedFile("input and embedding dumps must list the same ids in order")
        lipschitz = empirical_lipschitz(zip(inputs.vectors, embeds.vectors))
        print(
            f"warning: K={lipschitz!r} is an empirical lower bound on the Lipschitz "
            "constant; the bounds below are optimistic",
            file=sys.stderr,
        )
    if lipschitz is None:
        raise InvalidArgument("give --lipschitz-k or a pair of Lipschitz dumps")
    bounds = all_adversarial_bounds(bundle, args.tau, lipschitz)
    rows = [[b.c, b.c_prime, repr(b.bound), str(b.vacuous).lower()] for b in bounds]
    _write_text(args.out, _csv_text(["c", "c_prime", "bound", "vacuous"], rows))
    return 0


def cmd_eval(args) -> int:
    bundle = _load_bundle(args)
    id_q = _load_queries(args.id_queries, args.format, empty_is_scores=True)
    ood_q = _load_queries(args.ood_queries, args.format, empty_is_scores=True)
    report = evaluate(bundle, id_q.vectors, ood_q.vectors)
    _write_text(args.out, json.dumps(report, indent=1) + "\n")
    return 0


def cmd_synth(args) -> int:
    spec = SynthSpec(
        n_classes=args.n_classes,
        points_per_class=args.points_per_class,
        d=args.d,
        sigma_cluster=args.sigma_cluster,
        on_sphere=args.on_sphere,
        ood_kind=args.ood_kind,
        seed=args.seed,
        n_id_queries=args.n_id,
        n_ood_queries=args.n_ood,
        ood_shift=args.ood_shift,
    )
    data = generate_synthetic(spec)
    save_dataset(data.train, args.out_train, args.format)
    save_dataset(data.id_queries, args.out_id, args.format)
    save_dataset(data.ood_queries, args.out_ood, args.format)
    return 0


def _parse_fractions(text: str) -> list[float]:
    try:
        return [float(f) for f in text.split(",") if f.strip()]
    except ValueError as exc:
        raise InvalidArgument(f"bad fraction list {text!r}") from exc


def cmd_stability(args) -> int:
    fractions = _parse_fractions(args.fractions)
    config = FitConfig(k=args.k, q=args.q, normalize=args.normalize)
    train = load_dataset(args.train, args.format)
    id_q = _load_queries(args.id_queries, args.format, empty_is_scores=True)
    ood_q = _load_queries(args.ood_queries, args.format, empty_is_scores=True)
    report = stability_study(train, config, fractions, args.seeds, id_q.vectors,
                             ood_q.vectors, seed=args.seed)
    _write_text(args.out, report.to_csv())
    if args.summary:
        _write_text(args.summary, report.to_json() + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spade",
        description="Extreme-value OOD detection over k-NN latent distances.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=True, train=True):
        if model:
            p.add_argument("--model", required=True, help="model JSON")
        if train:
            p.add_argument("--train", required=True, help="training embeddings")
        p.add_argument("--format", choices=["csv", "binary"], default=None,
                       help="dataset format (default: by file extension)")
        p.add_argument("--out", required=True)

    def fit_flags(p):
        p.add_argument("--k", type=int, default=10)
        p.add_argument("--q", type=float, default=0.90)
        p.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=True)

    p = sub.add_parser("fit", help="fit per-class tail models")
    common(p, model=False)
    fit_flags(p)
    p.add_argument("--pairwise", action="store_true", help="also fit class-pair models")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("score", help="OOD score per query")
    common(p)
    p.add_argument("--queries", required=True)
    p.add_argument("--allow-mismatch", action="store_true")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("abstain", help="abstention decision per query")
    common(p)
    p.add_argument("--queries", required=True)
    p.add_argument("--predictions", required=True, help="CSV id,predicted_class")
    p.add_argument("--tau", type=float, default=0.05)
    p.add_argument("--allow-mismatch", action="store_true")
    p.set_defaults(func=cmd_abstain)

    p = sub.add_parser("adv-bound", help="adversarial perturbation lower bounds")
    common(p, train=False)
    p.add_argument("--tau", type=float, default=0.05)
    p.add_argument("--lipschitz-k", type=float, default=None)
    p.add_argument("--lipschitz-inputs", default=None)
    p.add_argument("--lipschitz-embeddings", default=None)
    p.set_defaults(func=cmd_adv_bound)

    p = sub.add_parser("eval", help="AUROC and FPR95 on ID vs OOD queries")
    common(p)
    p.add_argument("--id-queries", required=True)
    p.add_argument("--ood-queries", required=True)
    p.add_argument("--allow-mismatch", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate synthetic embeddings")
    p.add_argument("--n-classes", type=int, default=10)
    p.add_argument("--points-per-class", type=int, default=200)
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--sigma-cluster", type=float, default=0.1)
    p.add_argument("--on-sphere", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--ood-kind", choices=["uniform_sphere", "shifted_cluster"],
                   default="uniform_sphere")
    p.add_argument("--ood-shift", type=float, default=3.0)
    p.add_argument("--n-id", type=int, default=500)
    p.add_argument("--n-ood", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["csv", "binary"], default=None)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-id", required=True)
    p.add_argument("--out-ood", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stability", help="subsampling stability study")
    common(p, model=False)
    fit_flags(p)
    p.add_argument("--id-queries", required=True)
    p.add_argument("--ood-queries", required=True)
    p.add_argument("--fractions", default="0.1,0.25,0.5,1.0")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--summary", default=None, help="optional JSON summary path")
    p.set_defaults(func=cmd_stability)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SpadeError as exc:
        print(f"error {exc.code}: {exc}", file=sys.stderr)
        return exc.exit_status


if __name__ == "__main__":
    sys.exit(main())
