"""How far does a minimum move when a random linear field is switched on?"""
# %%
import numpy as np

from annealsgd import perturbation_shift_experiment

report = perturbation_shift_experiment([20, 40, 80], p=3, J=1.0, nu=0.5, trials=20, seed=0)

# %% distances and energy changes per size
for n in report.n_grid:
    print(f"n={n:3d}  median ||sigma - sigma~||={report.median_distance[n]:.3f}  "
          f"median |dH|/n={report.median_energy_diff[n]:.4f}  dropped={report.dropped[n]}")
print(f"fitted exponent alpha (distance ~ n^-alpha): {report.alpha:.3f}")
print(f"share of trials with |dH|/n <= 2 nu: {report.fraction_within(2 * report.nu):.2%}")

# %% same experiment with the field scaled by 1/sqrt(n) and distances on the unit sphere
alt = perturbation_shift_experiment([20, 40, 80], nu=0.5, trials=20, seed=0,
                                    field_scaling="inv_sqrt_n", distance_units="unit")
print("rescaled variant alpha:", round(alt.alpha, 3), np.round([alt.median_distance[n] for n in alt.n_grid], 4))
