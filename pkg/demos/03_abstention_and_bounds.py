"""
Abstaining classifier and adversarial lower bounds
==================================================

The class models double as a reject option, and with cross-class models
they give the smallest perturbation that can move a training point into
another class without being rejected.
"""

import numpy as np

from spade import FitConfig, SynthSpec, abstain_decide, fit_class_models, generate_synthetic
from spade.detectors import all_adversarial_bounds

data = generate_synthetic(SynthSpec(n_classes=4, points_per_class=150, seed=3))
bundle = fit_class_models(data.train, FitConfig(pairwise=True))

# keep the classifier's prediction only when the query is close enough to that class
for tau in (0.2, 0.05, 0.01):
    rate = np.mean([
        abstain_decide(q, int(c), tau, bundle).abstained
        for q, c in zip(data.id_queries.vectors, data.id_queries.labels)
    ])
    print(f"tau={tau:<5} abstains on {rate:.1%} of held-out ID queries")

far = data.ood_queries.vectors[0]
print(abstain_decide(far, 0, 0.05, bundle))

# bounds are in input units; with the identity embedding the Lipschitz constant is 1
for b in all_adversarial_bounds(bundle, tau=0.05, lipschitz=1.0)[:4]:
    flag = "vacuous" if b.vacuous else ""
    print(f"{b.c} -> {b.c_prime}: {b.bound:.4f} {flag}")
