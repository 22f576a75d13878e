"""Automatic relevance determination on a two-axis signal.

The targets are built from basis functions 2 and 4 of the model's own
reduced-rank basis, each along its own output direction. A ten-function
model run to convergence keeps those two and shrinks the posterior scale
second moments of the other eight by orders of magnitude.

    python3 demos/ard_pruning.py [seed]
"""

import sys

import numpy as np
from scipy.stats import ortho_group

from mrgp.basis import design_matrix
from mrgp.model import ModelConfig, fit

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
rng = np.random.default_rng(seed)
n, d = 200, 3
X = np.sort(rng.uniform(-1, 1, n))
X[0], X[-1] = -1.0, 1.0
Phi = design_matrix(X[:, None], np.array([2.0]), 4)[:, [1, 3]]
U = ortho_group.rvs(d, random_state=seed)[:2]
Y = Phi @ (rng.uniform(1.0, 2.0, 2)[:, None] * U) + 0.05 * rng.standard_normal((n, d))

for sweeps in (20, 200, 5000):
    model, states = fit(X, Y, ModelConfig(p=10, sweeps_per_resolution=sweeps, convergence_tol=1e-10),
                        return_states=True)
    a2 = model.levels[0]["a2"][0]
    print(f"max {sweeps:>4} sweeps ({len(states[0].history)} run): <a^2> =",
          np.array2string(a2, precision=4, suppress_small=False, max_line_width=200))
