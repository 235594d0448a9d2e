"""
Quickstart: score queries against per-class tail models
=======================================================

Draw a synthetic labelled embedding set, fit one tail model per class and
score held-out in-distribution queries against far-away ones.
"""

import numpy as np

from spade import FitConfig, SynthSpec, fit_class_models, generate_synthetic, ood_scores
from spade.evaluation import evaluate

# ten tight clusters on the unit sphere in 16 dimensions, plus 500 ID and
# 500 uniformly scattered OOD queries
data = generate_synthetic(SynthSpec(seed=0))
print("train:", data.train.vectors.shape, "classes:", data.train.classes)

# k-th neighbour distances within each class, then a tail fit above the 0.9 quantile
bundle = fit_class_models(data.train, FitConfig(k=10, q=0.9))
for c in bundle.classes[:3]:
    m = bundle.class_models[c]
    print(f"class {c}: threshold {m.t:.4f}  xi {m.params.xi:+.3f}  sigma {m.params.sigma:.4f}")

# scores live on a probability scale; OOD queries sit at the very top
id_s = ood_scores(data.id_queries.vectors, bundle)
ood_s = ood_scores(data.ood_queries.vectors, bundle)
print("median ID score  ", np.median(id_s))
print("median OOD score ", np.median(ood_s))

print(evaluate(bundle, data.id_queries.vectors, data.ood_queries.vectors))
