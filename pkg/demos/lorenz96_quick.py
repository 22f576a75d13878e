"""A single-seed Lorenz-96 run at reduced test size.

Same setup as ``mrgp bench lorenz96`` (K = 20, F = 8, 1000 noisy training
states on [0, 8]) but with one seed and 10^4 test times, so it finishes in
about two minutes. Errors are shown in standardised units against the
noise-free states, and in original units against noisy test states.

    python3 demos/lorenz96_quick.py [seed]
"""

import logging
import sys

from mrgp.bench import bench_lorenz96

logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
report = bench_lorenz96(seeds=[seed], n_test=10_000)
print(report.format())
