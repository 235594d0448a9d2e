"""Labelled embedding datasets and fitted model bundles on disk.

Two dataset formats are supported:

* CSV with header ``id,label,f0,...,f{d-1}``, one record per line.
* A little-endian binary layout: magic ``SPDE``, ``u32`` version (1), ``u32``
  n, ``u32`` d, ``u32`` n_classes, ``n`` ``u32`` labels, ``n*d`` ``f64``
  row-major features, then ``n`` ids each prefixed by a ``u16`` byte length.

Model bundles are stored as JSON; floats are written with ``repr`` so every
value round-trips exactly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .config import FitConfig
from .errors import (
    EmptyDataset,
    InvalidArgument,
    IoFailure,
    MalformedFile,
    NonFiniteValue,
    SchemaMismatch,
)
from .evt import GpdParams, PotTailModel

MAGIC = b"SPDE"
BINARY_VERSION = 1
MODEL_VERSION = 1

_HEADER = struct.Struct("<4sIIII")
_ID_LEN = struct.Struct("<H")


@dataclass(frozen=True)
class EmbeddingRecord:
    id: str
    label: int
    vector: np.ndarray


@dataclass(frozen=True, eq=False)
class EmbeddingDataset:
    """Immutable, validated set of labelled latent vectors."""

    ids: tuple[str, ...]
    labels: np.ndarray
    vectors: np.ndarray
    n_classes: int
    class_index: dict[int, np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        labels = np.asarray(self.labels)
        vectors = np.array(self.vectors, dtype=np.float64, order="C")
        if vectors.ndim != 2:
            raise MalformedFile(f"vectors must be a 2-D array, got shape {vectors.shape}")
        n, d = vectors.shape
        if n == 0:
            raise EmptyDataset("dataset has no records")
        if d == 0:
            raise MalformedFile("vectors must have at least one component")
        if len(ids) != n or labels.shape != (n,):
            raise MalformedFile("ids, labels and vectors disagree on record count")
        if len(set(ids)) != n:
            raise MalformedFile("record ids must be unique")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            if not np.all(np.mod(labels, 1) == 0):
                raise MalformedFile("labels must be integers")
        labels = labels.astype(np.int64)
        n_classes = int(self.n_classes)
        if n_classes < 1:
            raise MalformedFile("n_classes must be at least 1")
        if np.any(labels < 0) or np.any(labels >= n_classes):
            raise MalformedFile(f"labels must lie in [0, {n_classes})")
        if not np.all(np.isfinite(vectors)):
            raise NonFiniteValue("vectors contain NaN or infinity")
        labels.setflags(write=False)
        vectors.setflags(write=False)
        index = {}
        for c in np.unique(labels):
            members = np.flatnonzero(labels == c)
            members.setflags(write=False)
            index[int(c)] = members
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "n_classes", n_classes)
        object.__setattr__(self, "class_index", index)

    @classmethod
    def from_records(cls, records, n_classes: int | None = None) -> EmbeddingDataset:
        records = list(records)
        if not records:
            raise EmptyDataset("dataset has no records")
        labels = [int(r.label) for r in records]
        if n_classes is None:
            n_classes = max(labels) + 1
        lengths = {np.asarray(r.vector).shape for r in records}
        if len(lengths) != 1:
            raise MalformedFile("records have differing vector lengths")
        return cls(
            ids=[r.id for r in records],
            labels=labels,
            vectors=np.array([r.vector for r in records], dtype=np.float64),
            n_classes=n_classes,
        )

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def __getitem__(self, position: int) -> EmbeddingRecord:
        return EmbeddingRecord(
            self.ids[position], int(self.labels[position]), self.vectors[position]
        )

    def __iter__(self) -> Iterator[EmbeddingRecord]:
        return (self[i] for i in range(len(self)))

    def __eq__(self, other):
        if not isinstance(other, EmbeddingDataset):
            return NotImplemented
        return (
            self.ids == other.ids
            and self.n_classes == other.n_classes
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.vectors, other.vectors)
        )

    @property
    def records(self) -> list[EmbeddingRecord]:
        return list(self)

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    @property
    def classes(self) -> list[int]:
        return sorted(self.class_index)

    def subset(self, positions) -> EmbeddingDataset:
        """New dataset holding the records at ``positions`` (in that order)."""
        positions = np.asarray(positions, dtype=np.int64)
        return EmbeddingDataset(
            ids=[self.ids[i] for i in positions],
            labels=self.labels[positions],
            vectors=self.vectors[positions],
            n_classes=self.n_classes,
        )


# -- binary ----------------------------------------------------------------


def dataset_to_bytes(dataset: EmbeddingDataset) -> bytes:
    n, d = dataset.vectors.shape
    parts = [
        _HEADER.pack(MAGIC, BINARY_VERSION, n, d, dataset.n_classes),
        dataset.labels.astype("<u4").tobytes(),
        dataset.vectors.astype("<f8").tobytes(order="C"),
    ]
    for rid in dataset.ids:
        raw = rid.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise InvalidArgument(f"id longer than 65535 bytes: {rid[:32]}...")
        parts.append(_ID_LEN.pack(len(raw)))
        parts.append(raw)
    return b"".join(parts)


def dataset_from_bytes(data: bytes) -> EmbeddingDataset:
    if len(data) < _HEADER.size:
        raise MalformedFile("file too short for the binary header")
    magic, version, n, d, n_classes = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise MalformedFile(f"bad magic bytes {magic!r}")
    if version != BINARY_VERSION:
        raise MalformedFile(f"unsupported binary version {version}")
    if n == 0:
        raise EmptyDataset("dataset has no records")
    offset = _HEADER.size
    body = 4 * n + 8 * n * d
    if len(data) < offset + body:
        raise MalformedFile("file truncated inside labels or features")
    labels = np.frombuffer(data, dtype="<u4", count=n, offset=offset).astype(np.int64)
    offset += 4 * n
    vectors = np.frombuffer(data, dtype="<f8", count=n * d, offset=offset).reshape(n, d)
    offset += 8 * n * d
    ids = []
    for _ in range(n):
        if offset + _ID_LEN.size > len(data):
            raise MalformedFile("file truncated inside ids")
        (length,) = _ID_LEN.unpack_from(data, offset)
        offset += _ID_LEN.size
        if offset + length > len(data):
            raise MalformedFile("file truncated inside ids")
        try:
            ids.append(data[offset : offset + length].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise MalformedFile(f"id is not valid UTF-8: {exc}") from exc
        offset += length
    if offset != len(data):
        raise MalformedFile(f"{len(data) - offset} trailing bytes after ids")
    return EmbeddingDataset(ids=ids, labels=labels, vectors=vectors, n_classes=n_classes)


def fingerprint(dataset: EmbeddingDataset) -> str:
    """SHA-256 of the dataset's canonical binary encoding."""
    return hashlib.sha256(dataset_to_bytes(dataset)).hexdigest()


# -- csv -------------------------------------------------------------------


def dataset_to_csv(dataset: EmbeddingDataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "label"] + [f"f{j}" for j in range(dataset.d)])
    for rid, label, vec in zip(dataset.ids, dataset.labels, dataset.vectors):
        writer.writerow([rid, int(label)] + [repr(float(v)) for v in vec])
    return buf.getvalue()


def dataset_from_csv(text: str) -> EmbeddingDataset:
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if header is None:
        raise EmptyDataset("empty file")
    d = len(header) - 2
    expected = ["id", "label"] + [f"f{j}" for j in range(d)]
    if d < 1 or header != expected:
        raise MalformedFile(f"bad CSV header {header[:4]}...")
    ids, labels, vectors = [], [], []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != d + 2:
            raise MalformedFile(f"line {lineno}: expected {d + 2} fields, got {len(row)}")
        try:
            label = int(row[1])
            vec = [float(v) for v in row[2:]]
        except ValueError as exc:
            raise MalformedFile(f"line {lineno}: {exc}") from exc
        if not all(math.isfinite(v) for v in vec):
            raise NonFiniteValue(f"line {lineno}: non-finite feature value")
        ids.append(row[0])
        labels.append(label)
        vectors.append(vec)
    if not ids:
        raise EmptyDataset("CSV has a header but no records")
    if min(labels) < 0:
        raise MalformedFile("labels must be non-negative")
    return EmbeddingDataset(
        ids=ids,
        labels=np.array(labels),
        vectors=np.array(vectors, dtype=np.float64),
        n_classes=max(labels) + 1,
    )


# -- file entry points -----------------------------------------------------


def _resolve_format(path, fmt: str | None) -> str:
    if fmt is None:
        return "csv" if str(path).lower().endswith(".csv") else "binary"
    if fmt not in ("csv", "binary"):
        raise InvalidArgument(f"unknown dataset format {fmt!r}")
    return fmt


def _read_bytes(path) -> bytes:
    if not str(path):
        raise IoFailure("empty path")
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def _write_bytes(path, data: bytes) -> None:
    if not str(path):
        raise IoFailure("empty path")
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_dataset(path, format: str | None = None) -> EmbeddingDataset:
    """Read a dataset; ``format`` defaults to ``csv`` for ``*.csv`` paths, else binary."""
    fmt = _resolve_format(path, format)
    data = _read_bytes(path)
    if fmt == "binary":
        return dataset_from_bytes(data)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedFile(f"CSV is not valid UTF-8: {exc}") from exc
    return dataset_from_csv(text)


def save_dataset(dataset: EmbeddingDataset, path, format: str | None = None) -> None:
    fmt = _resolve_format(path, format)
    if fmt == "binary":
        _write_bytes(path, dataset_to_bytes(dataset))
    else:
        _write_bytes(path, dataset_to_csv(dataset).encode("utf-8"))


def file_fingerprint(path, format: str | None = None) -> str:
    return fingerprint(load_dataset(path, format))


# -- model bundles ---------------------------------------------------------


@dataclass(frozen=True)
class ModelBundle:
    """Serializable set of fitted tail models, bound to a training set by fingerprint."""

    config: FitConfig
    class_models: dict[int, PotTailModel]
    fingerprint: str
    pair_models: dict[tuple[int, int], PotTailModel] | None = None


def _model_to_json(model: PotTailModel) -> dict:
    return {
        "t": float(model.t),
        "n": int(model.n),
        "n_exceed": int(model.n_exceed),
        "xi": float(model.params.xi),
        "sigma": float(model.params.sigma),
        "tail": model.tail,
        "empirical_sorted": [float(v) for v in model.empirical_sorted],
    }


def _model_from_json(entry: dict) -> PotTailModel:
    try:
        return PotTailModel(
            params=GpdParams(xi=float(entry["xi"]), sigma=float(entry["sigma"])),
            t=float(entry["t"]),
            n=int(entry["n"]),
            n_exceed=int(entry["n_exceed"]),
            tail=entry["tail"],
            empirical_sorted=np.array(entry["empirical_sorted"], dtype=np.float64),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaMismatch(f"bad model entry: {exc}") from exc


def bundle_to_json(bundle: ModelBundle) -> str:
    cfg = bundle.config
    doc = {
        "version": MODEL_VERSION,
        "config": {
            "k": cfg.k,
            "q": cfg.q,
            "normalize": cfg.normalize,
            "distance": cfg.distance,
        },
        "fingerprint": bundle.fingerprint,
        "class_models": [
            {"class": int(c), **_model_to_json(m)} for c, m in sorted(bundle.class_models.items())
        ],
    }
    if bundle.pair_models is not None:
        doc["pair_models"] = [
            {"pair": [int(a), int(b)], **_model_to_json(m)}
            for (a, b), m in sorted(bundle.pair_models.items())
        ]
    return json.dumps(doc, indent=1)


def bundle_from_json(text: str) -> ModelBundle:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "version" not in doc:
        raise SchemaMismatch("model file lacks a version field")
    if str(doc["version"]) != str(MODEL_VERSION):
        raise SchemaMismatch(f"unsupported model version {doc['version']!r}")
    try:
        cfg = doc["config"]
        pair_models = None
        if "pair_models" in doc:
            pair_models = {
                (int(e["pair"][0]), int(e["pair"][1])): _model_from_json(e)
                for e in doc["pair_models"]
            }
        return ModelBundle(
            config=FitConfig(
                k=int(cfg["k"]),
                q=float(cfg["q"]),
                normalize=bool(cfg["normalize"]),
                pairwise=pair_models is not None,
                distance=cfg.get("distance", "euclidean"),
            ),
            class_models={int(e["class"]): _model_from_json(e) for e in doc["class_models"]},
            fingerprint=str(doc["fingerprint"]),
            pair_models=pair_models,
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise SchemaMismatch(f"malformed model file: {exc}") from exc


def save_models(bundle: ModelBundle, path) -> None:
    _write_bytes(path, bundle_to_json(bundle).encode("utf-8"))


def load_models(path) -> ModelBundle:
    return bundle_from_json(_read_bytes(path).decode("utf-8", errors="replace"))
