"""A small minima census: count distinct minima reached by random descents.

Uses n = 40 and 200 trials so it runs in well under a minute; the
acceptance suite repeats this at n = 100 with 2000 trials.
"""
# %%
from annealsgd import CensusConfig, run_census, sample_disorder

n, seed = 40, 0
disorder = sample_disorder(n, 3, 1.0, seed=seed)
result = run_census(disorder, CensusConfig(trials=200, master_seed=seed))

# %% one line per field strength
for reg in result.regimes:
    s = reg.summary()
    print(f"{reg.label:<12} nu={reg.nu:.4f}  clusters={reg.cluster_count:4d}  "
          f"mean cos dist={reg.mean_cosine_distance:.3f}  converged={s['converged']}/{s['trials']}  "
          f"minima share={s['minima_fraction']}")

# %% energies of the endpoints: weak fields leave a spread of levels
for reg in result.regimes:
    e = reg.normalized_energies[reg.converged]
    print(f"{reg.label:<12} H/n in [{e.min():.4f}, {e.max():.4f}]")
