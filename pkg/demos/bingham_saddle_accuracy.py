"""How accurate is the saddle-point Bingham normalising constant?

Compares the third-order saddle-point ``log C`` and second moments with
adaptive quadrature on the circle (d = 2) and the sphere (d = 3) as the
concentration grows.

    python3 demos/bingham_saddle_accuracy.py
"""

import numpy as np

from mrgp.bingham import log_norm_const, log_norm_const_oracle, moment_rho, moment_rho_oracle

print(f"{'kappa':<24}{'log C saddle':>14}{'log C quad':>14}{'rel err C':>12}{'max rho err':>13}")
for scale in (0.1, 1.0, 3.0, 10.0, 20.0):
    for kappa in (np.array([-scale, 0.0]), np.array([-scale, -scale / 2, 0.0])):
        sp, ref = float(log_norm_const(kappa)), log_norm_const_oracle(kappa)
        rho_err = np.abs(moment_rho(kappa).ravel() - moment_rho_oracle(kappa)).max()
        label = "(" + ", ".join(f"{k:g}" for k in kappa) + ")"
        print(f"{label:<24}{sp:>14.6f}{ref:>14.6f}{np.expm1(sp - ref):>12.2e}{rho_err:>13.2e}")
