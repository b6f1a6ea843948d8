"""Minima census: many independent descents per field strength.

Endpoints are grouped by single-linkage clustering under the cosine distance
1 - a.b/n on the sphere, so a regime with one global minimum collapses to a
single cluster while a glassy landscape scatters into many.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .hamiltonian import (
    DEFAULT_BUDGET,
    FIELD_STREAM,
    INIT_STREAM,
    Disorder,
    derive_seed,
    sample_disorder,
    sample_field,
)
from .regimes import critical_field
from .sphere import DescentConfig, critical_indices, descend_batch, random_configuration

_BLOCK = 1024


def reference_regimes(n: int, J: float = 1.0, p: int = 3) -> list[tuple[str, float]]:
    """The three reference field strengths: 1/n, nu_c (1 - 1/n)^{1/2} and sqrt(3) nu_c.

    For J = 1, p = 3 these are 1/n, sqrt(3)(1 - 1/n)^{1/2} and 3.
    """
    nu_c = critical_field(J, p)
    return [
        ("exponential", 1.0 / n),
        ("polynomial", nu_c * math.sqrt(1.0 - 1.0 / n)),
        ("trivial", J * math.sqrt(3.0 * p * (p - 2))),
    ]


@dataclass
class CensusConfig:
    trials: int = 2000
    regimes: list[tuple[str, float]] | None = None
    descent: DescentConfig = field(default_factory=DescentConfig)
    cluster_threshold: float = 0.05
    master_seed: int = 0
    compute_indices: bool = True
    max_pairs: int = 10**6
    chunk_size: int = 500
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError(f"trials must be at least 1, got {self.trials}")
        if not 0 < self.cluster_threshold < 2:
            raise ValueError(f"cluster threshold must lie in (0, 2), got {self.cluster_threshold}")


@dataclass
class RegimeCensus:
    label: str
    nu: float
    field_seed: int
    trial_seeds: np.ndarray
    endpoints: np.ndarray
    normalized_energies: np.ndarray
    iters: np.ndarray
    converged: np.ndarray
    indices: np.ndarray
    cluster_count: int
    cluster_labels: np.ndarray
    mean_cosine_distance: float
    min_cosine_distance: float
    max_cosine_distance: float
    degenerate: bool

    @property
    def convergence_rate(self) -> float:
        return float(np.mean(self.converged))

    def summary(self) -> dict:
        conv = self.converged
        idx = self.indices[conv]
        return {
            "label": self.label,
            "nu": self.nu,
            "field_seed": self.field_seed,
            "trials": int(conv.size),
            "converged": int(conv.sum()),
            "convergence_rate": self.convergence_rate,
            "cluster_count": self.cluster_count,
            "mean_cosine_distance": self.mean_cosine_distance,
            "min_cosine_distance": self.min_cosine_distance,
            "max_cosine_distance": self.max_cosine_distance,
            "degenerate": self.degenerate,
            "minima_fraction": float(np.mean(idx == 0)) if idx.size and idx.min() >= 0 else None,
            "mean_normalized_energy": float(np.mean(self.normalized_energies[conv])) if conv.any() else None,
        }


@dataclass
class CensusResult:
    disorder: dict
    config: dict
    regimes: list[RegimeCensus]

    def by_label(self, label: str) -> RegimeCensus:
        for r in self.regimes:
            if r.label == label:
                return r
        raise KeyError(label)

    def summary(self) -> dict:
        return {"disorder": self.disorder, "config": self.config, "regimes": [r.summary() for r in self.regimes]}

    def write(self, outdir: str | Path, prefix: str = "census") -> dict[str, Path]:
        """Per-trial CSV, one endpoint matrix per regime, and a JSON summary."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = {"trials_csv": outdir / f"{prefix}_trials.csv", "summary_json": outdir / f"{prefix}_summary.json"}
        with open(paths["trials_csv"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["regime", "trial", "seed", "energy_per_n", "index", "converged", "cluster"])
            for r in self.regimes:
                for t in range(r.trial_seeds.size):
                    w.writerow([r.label, t, int(r.trial_seeds[t]), f"{r.normalized_energies[t]:.17g}",
                                int(r.indices[t]), int(r.converged[t]), int(r.cluster_labels[t])])
        for r in self.regimes:
            p = outdir / f"{prefix}_endpoints_{r.label}.csv"
            np.savetxt(p, r.endpoints, fmt="%.17g", delimiter=",")
            paths[f"endpoints_{r.label}"] = p
        paths["summary_json"].write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        return paths


def _neighbor_pairs(x: np.ndarray, eps: float):
    n = x.shape[1]
    rows, cols = [], []
    for lo in range(0, x.shape[0], _BLOCK):
        dist = 1.0 - x[lo:lo + _BLOCK] @ x.T / n
        i, j = np.nonzero(dist <= eps)
        rows.append(i + lo)
        cols.append(j)
    return np.concatenate(rows), np.concatenate(cols)


def cluster_minima(endpoints, eps: float = 0.05) -> tuple[int, np.ndarray]:
    """Single-linkage clusters: points joined by any chain of links with cosine distance <= eps.

    Antipodal points are not identified.
    """
    x = np.atleast_2d(np.asarray(endpoints, dtype=float))
    m = x.shape[0]
    if m == 0:
        return 0, np.zeros(0, dtype=np.int64)
    i, j = _neighbor_pairs(x, eps)
    graph = coo_matrix((np.ones(i.size, dtype=np.int8), (i, j)), shape=(m, m)).tocsr()
    count, labels = connected_components(graph, directed=False)
    return int(count), labels.astype(np.int64)


def cosine_distance_stats(endpoints, max_pairs: int = 10**6, seed: int = 0) -> dict:
    """Mean, min and max of 1 - a.b/n over unordered pairs of rows.

    When there are more than ``max_pairs`` pairs, a fixed-seed uniform sample
    of ``max_pairs`` distinct-index pairs is used instead.
    """
    x = np.atleast_2d(np.asarray(endpoints, dtype=float))
    m, n = x.shape
    if m < 2:
        raise ValueError("need at least two endpoints")
    total = m * (m - 1) // 2
    if total <= max_pairs:
        s, lo_, hi_ = 0.0, np.inf, -np.inf
        for lo in range(0, m, _BLOCK):
            blk = 1.0 - x[lo:lo + _BLOCK] @ x.T / n
            r = np.arange(lo, min(lo + _BLOCK, m))[:, None]
            vals = blk[np.arange(m)[None, :] > r]
            if vals.size:
                s += vals.sum()
                lo_, hi_ = min(lo_, vals.min()), max(hi_, vals.max())
        return {"mean": s / total, "min": float(lo_), "max": float(hi_), "pairs": total}
    rng = np.random.default_rng(seed)
    i = rng.integers(0, m, size=max_pairs)
    j = rng.integers(0, m - 1, size=max_pairs)
    j = j + (j >= i)
    vals = 1.0 - np.sum(x[i] * x[j], axis=1) / n
    return {"mean": float(vals.mean()), "min": float(vals.min()), "max": float(vals.max()), "pairs": max_pairs}


def _census_one(d: Disorder, k: int, label: str, nu: float, cfg: CensusConfig) -> RegimeCensus:
    field_seed = derive_seed(cfg.master_seed, FIELD_STREAM, k)
    f = sample_field(d.n, nu, field_seed)
    seeds = np.array([derive_seed(cfg.master_seed, INIT_STREAM, k, t) for t in range(cfg.trials)], dtype=np.uint64)
    sigma0 = np.array([random_configuration(d.n, int(s)) for s in seeds])

    chunks = [slice(lo, lo + cfg.chunk_size) for lo in range(0, cfg.trials, cfg.chunk_size)]
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            parts = list(ex.map(lambda c: descend_batch(d, f, sigma0[c], cfg.descent), chunks))
    else:
        parts = [descend_batch(d, f, sigma0[c], cfg.descent) for c in chunks]
    ends = np.vstack([r.endpoints for r in parts])
    energies = np.concatenate([r.normalized_energies for r in parts])
    iters = np.concatenate([r.iters for r in parts])
    conv = np.concatenate([r.converged for r in parts])

    indices = np.full(cfg.trials, -1, dtype=np.int64)
    if cfg.compute_indices and conv.any():
        indices[conv] = critical_indices(d, f, ends[conv], cfg.descent.grad_tol)

    labels = np.full(cfg.trials, -1, dtype=np.int64)
    count, lab = cluster_minima(ends[conv], cfg.cluster_threshold)
    labels[conv] = lab
    if conv.sum() >= 2:
        st = cosine_distance_stats(ends[conv], cfg.max_pairs, seed=derive_seed(cfg.master_seed, 99, k))
        degenerate = False
    else:
        st = {"mean": 0.0, "min": 0.0, "max": 0.0}
        degenerate = True
    return RegimeCensus(
        label=label, nu=float(nu), field_seed=field_seed, trial_seeds=seeds, endpoints=ends,
        normalized_energies=energies, iters=iters, converged=conv, indices=indices,
        cluster_count=count, cluster_labels=labels, mean_cosine_distance=float(st["mean"]),
        min_cosine_distance=float(st["min"]), max_cosine_distance=float(st["max"]), degenerate=degenerate,
    )


def run_census(d: Disorder, cfg: CensusConfig) -> CensusResult:
    """Descend ``cfg.trials`` times per field strength on one shared disorder.

    Regime ``k`` uses field seed derive_seed(master, FIELD_STREAM, k) and
    trial ``t`` starts from derive_seed(master, INIT_STREAM, k, t), so results
    depend only on the master seed and ``chunk_size``, never on worker count
    or scheduling. Changing ``chunk_size`` can move results in the last bits,
    because BLAS picks its kernel from the matrix shape.
    """
    regimes = cfg.regimes if cfg.regimes is not None else reference_regimes(d.n, d.J, d.p)
    out = [_census_one(d, k, label, nu, cfg) for k, (label, nu) in enumerate(regimes)]
    conf = asdict(cfg)
    conf["regimes"] = [[lab, nu] for lab, nu in regimes]
    return CensusResult(disorder=d.to_record(), config=conf, regimes=out)


@dataclass
class PerturbationShiftReport:
    """Per-n arrays over converged trials plus the fitted distance exponent.

    ``distances[n]`` holds ||sigma - sigma~|| and ``energy_diffs[n]`` holds
    |H(sigma) - H~(sigma~)| / n. ``alpha`` is minus the least-squares slope of
    log(median distance) against log(n).
    """

    n_grid: list[int]
    nu: float
    distances: dict[int, np.ndarray]
    energy_diffs: dict[int, np.ndarray]
    dropped: dict[int, int]
    median_distance: dict[int, float]
    median_energy_diff: dict[int, float]
    alpha: float
    settings: dict

    def fraction_within(self, bound: float) -> float:
        """Share of all kept trials whose normalized energy difference is <= bound."""
        allv = np.concatenate([self.energy_diffs[n] for n in self.n_grid])
        return float(np.mean(allv <= bound)) if allv.size else float("nan")

    def to_json(self) -> dict:
        return {
            "n_grid": self.n_grid,
            "nu": self.nu,
            "alpha": self.alpha,
            "median_distance": {str(k): v for k, v in self.median_distance.items()},
            "median_energy_diff": {str(k): v for k, v in self.median_energy_diff.items()},
            "dropped": {str(k): v for k, v in self.dropped.items()},
            "fraction_energy_within_2nu": self.fraction_within(2 * self.nu),
            "settings": self.settings,
            "trials": {
                str(n): {"distance": self.distances[n].tolist(), "energy_diff": self.energy_diffs[n].tolist()}
                for n in self.n_grid
            },
        }


def perturbation_shift_experiment(
    n_grid,
    p: int = 3,
    J: float = 1.0,
    nu: float = 0.5,
    trials: int = 100,
    seed: int = 0,
    descent: DescentConfig = DescentConfig(),
    field_scaling: str = "standard",
    distance_units: str = "sphere",
    budget: int = DEFAULT_BUDGET,
) -> PerturbationShiftReport:
    """Pair each unperturbed minimum with the perturbed minimum reached from it.

    For every n: one disorder, and per trial a fresh init and a fresh field
    h ~ N(0, nu^2 I). Descent on H gives sigma; descent on H - h.sigma started
    at sigma gives sigma~.

    ``field_scaling="inv_sqrt_n"`` divides h by sqrt(n) and
    ``distance_units="unit"`` measures distances between the points rescaled
    to the unit sphere; the defaults use neither.
    """
    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 3:
        raise ValueError("n_grid needs at least three sizes")
    if field_scaling not in ("standard", "inv_sqrt_n") or distance_units not in ("sphere", "unit"):
        raise ValueError(f"unknown option: {field_scaling!r}, {distance_units!r}")
    distances, ediffs, dropped, med_d, med_e = {}, {}, {}, {}, {}
    for n in n_grid:
        d = sample_disorder(n, p, J, derive_seed(seed, n), budget)
        sigma0 = np.array([random_configuration(n, seed, n, t) for t in range(trials)])
        hs = np.array([sample_field(n, nu, derive_seed(seed, n, t)).values for t in range(trials)])
        if field_scaling == "inv_sqrt_n":
            hs = hs / math.sqrt(n)
        base = descend_batch(d, None, sigma0, descent)
        pert = descend_batch(d, hs, base.endpoints, descent)
        ok = base.converged & pert.converged
        diff = base.endpoints[ok] - pert.endpoints[ok]
        dist = np.linalg.norm(diff, axis=1)
        if distance_units == "unit":
            dist = dist / math.sqrt(n)
        distances[n] = dist
        ediffs[n] = np.abs(base.energies[ok] - pert.energies[ok]) / n
        dropped[n] = int((~ok).sum())
        med_d[n] = float(np.median(dist)) if dist.size else float("nan")
        med_e[n] = float(np.median(ediffs[n])) if dist.size else float("nan")
    meds = np.array([med_d[n] for n in n_grid])
    if np.all(meds > 0):
        slope = np.polyfit(np.log(n_grid), np.log(meds), 1)[0]
        alpha = float(-slope)
    else:
        alpha = float("nan")
    settings = {"p": p, "J": J, "trials": trials, "seed": seed, "descent": asdict(descent),
                "field_scaling": field_scaling, "distance_units": distance_units}
    return PerturbationShiftReport(n_grid, float(nu), distances, ediffs, dropped, med_d, med_e, alpha, settings)
