import numpy as np

from spade import EmbeddingDataset


def make_dataset(vectors, labels, n_classes=None, ids=None):
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    labels = np.asarray(labels)
    return EmbeddingDataset(
        ids=ids or [f"r{i}" for i in range(len(labels))],
        labels=labels,
        vectors=vectors,
        n_classes=n_classes if n_classes is not None else int(labels.max()) + 1,
    )
