"""Walk the field strength through the three landscape regimes for p = 3."""
# %%
import math

import numpy as np

from annealsgd import critical_field, nu_for_tau, order_parameter, regime_table

J, p, n = 1.0, 3, 1000
nu_c = critical_field(J, p)
print(f"critical field for J={J}, p={p}: {nu_c:.6f} (sqrt 3 = {math.sqrt(3):.6f})")

# %% B crosses zero at nu_c and tends to -1 for strong fields
for nu in [0.0, 0.5, 1.0, nu_c, 2.0, 10.0, 1e4]:
    print(f"nu={nu:10.4f}  B={order_parameter(J, p, nu):+.6f}")

# %% a grid around nu_c; the polynomial band is only ~1/n wide
nus = np.concatenate([np.linspace(0.1, 1.6, 4), nu_c + np.array([-1e-3, 0, 5e-4, 1e-3]), [2.0, 3.0]])
for row in regime_table(J, p, n, nus):
    print(f"nu={row['nu']:.6f}  B={row['B']:+.2e}  {row['regime']:<12} E[count]={row['expected_count']:.4g}")

# %% schedule fields just past nu_c; for p = 3 they give n*B close to -tau/2
for tau in [0.5, 1, 2, 5]:
    nu = nu_for_tau(nu_c, tau, n)
    print(f"tau={tau}: nu={nu:.6f}, n*B={n * order_parameter(J, p, nu):+.4f}")
