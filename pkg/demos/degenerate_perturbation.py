"""A unitary cocycle has one exponent of multiplicity d; small random
perturbations split it.  Prints the smallest gap against perturbation size.

    python3 demos/degenerate_perturbation.py
"""
from __future__ import annotations

import numpy as np

from lorenz_cocycles.config import ExperimentConfig
from lorenz_cocycles.experiment import build_objects, degenerate_generator, perturbation_direction, perturbed
from lorenz_cocycles.lyapunov import qr_spectrum, simplicity_check

cfg = ExperimentConfig()
b = build_objects(cfg)
d, n = 3, 20000
base = degenerate_generator(cfg, degenerate_seed=7, d=d)
direction = perturbation_direction(cfg, 7, base, m=0)

sizes = cfg.cocycle.epsilon * 2.0 ** -np.arange(6)
gaps = []
print("size        min_gap     simple")
for size in np.concatenate([[0.0], sizes]):
    spec = qr_spectrum(perturbed(base, direction, size), b.orbit_source(), n, seed=3)
    v = simplicity_check(spec, cfg.experiment.gap_tolerance)
    print(f"{size:<11.5g} {v.min_gap:<11.3e} {v.simple}")
    if size > 0:
        gaps.append(v.min_gap)

# roughly quadratic: unitary cocycles split at second order in the perturbation
slope = np.polyfit(np.log(sizes), np.log(gaps), 1)[0]
print(f"log-log slope of min gap against size: {slope:.2f}")
