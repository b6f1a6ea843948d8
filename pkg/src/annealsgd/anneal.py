"""AnnealSGD: a fixed random gradient bias with an annealed magnitude.

At construction a direction h ~ J sqrt(p(p-2)) N(0, I) is drawn once over
all trainable weights. Step i adds s_i * h to the raw gradient, with

    tau_i = n (exp(-i / tau0) - 1/2),    s_i = (1 + 2 tau_i / n)^{1/2}

so s_0 = sqrt(2) and s_i decays to 0. The engine only transforms gradients;
the base optimizer (SGD, momentum, Adam, ...) consumes the result unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hamiltonian import ANNEAL_STREAM, stream_rng
from .regimes import critical_field

SCHEDULES = ("tau_exp", "kappa", "linear")


@dataclass(frozen=True)
class AnnealConfig:
    J: float = 1e-3
    tau0: float = 500.0
    schedule: str = "tau_exp"
    p_est: int = 16
    n_est: int = 1
    seed: int = 0
    kappa: float = 1.0
    i_max: int = 1000

    def __post_init__(self):
        if self.J < 0:
            raise ValueError(f"J must be nonnegative, got {self.J}")
        if self.tau0 <= 0:
            raise ValueError(f"tau0 must be positive, got {self.tau0}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if self.p_est < 3:
            raise ValueError(f"p_est must be at least 3 (the critical field vanishes below), got {self.p_est}")
        if self.n_est < 1:
            raise ValueError(f"n_est must be at least 1, got {self.n_est}")


def estimate_shape(num_weights: int, p: int) -> int:
    """Effective neurons per layer, floor(sqrt(num_weights / p)), at least 1."""
    if p < 1 or num_weights < p:
        raise ValueError(f"need num_weights >= p >= 1, got {num_weights}, {p}")
    return max(1, math.isqrt(num_weights // p))


def sample_perturbation(num_weights: int, J: float, p: int, seed: int) -> np.ndarray:
    std = critical_field(J, p)
    z = stream_rng(seed, ANNEAL_STREAM).standard_normal(num_weights)
    return std * z if std > 0 else np.zeros(num_weights)


def tau_schedule(i: float, tau0: float, n_est: float) -> float:
    if i < 0:
        raise ValueError(f"iteration must be nonnegative, got {i}")
    return n_est * (math.exp(-i / tau0) - 0.5)


def scale_factor(tau: float, n_est: float) -> float:
    arg = 1.0 + 2.0 * tau / n_est
    if arg <= 0:
        raise ValueError(f"tau must exceed -n/2 = {-n_est / 2}, got {tau}")
    return math.sqrt(arg)


def kappa_scale_factor(kappa: float, n_est: float) -> float:
    arg = 1.0 + kappa * math.log(n_est) / n_est ** (1.0 / 3.0)
    if arg <= 0:
        raise ValueError(f"1 + kappa log(n) / n^(1/3) must be positive, got {arg}")
    return math.sqrt(arg)


def linear_scale_factor(i: int, i_max: int) -> float:
    return math.sqrt(2.0) * max(0.0, 1.0 - i / i_max)


class PerturbationState:
    """Fixed direction ``h`` plus the iteration counter for one training run.

    Not thread-safe: one training loop owns it.
    """

    def __init__(self, num_weights: int, cfg: AnnealConfig):
        self.cfg = cfg
        self.h = sample_perturbation(num_weights, cfg.J, cfg.p_est, cfg.seed)
        self.h.flags.writeable = False
        self.i = 0

    def scale(self, i: int | None = None) -> float:
        i = self.i if i is None else i
        cfg = self.cfg
        if cfg.schedule == "tau_exp":
            # exp(-i/tau0) underflows to 0 for large i, which tau_schedule maps to exactly -n/2
            return math.sqrt(2.0 * math.exp(-i / cfg.tau0))
        if cfg.schedule == "kappa":
            # kappa_i = kappa (2 exp(-i/tau0) - 1) runs from kappa to -kappa; once the
            # square-root argument reaches zero the field is off for good
            k = cfg.kappa * (2.0 * math.exp(-i / cfg.tau0) - 1.0)
            arg = 1.0 + k * math.log(cfg.n_est) / cfg.n_est ** (1.0 / 3.0)
            return math.sqrt(arg) if arg > 0 else 0.0
        return linear_scale_factor(i, cfg.i_max)

    @property
    def h_curr(self) -> np.ndarray:
        return self.scale() * self.h

    def perturb_gradient(self, g: np.ndarray) -> np.ndarray:
        """Return g + s_i h and advance the iteration counter."""
        g = np.asarray(g)
        if g.shape != self.h.shape:
            raise ValueError(f"gradient has shape {g.shape}, expected {self.h.shape}")
        out = g + self.scale() * self.h
        self.i += 1
        return out
