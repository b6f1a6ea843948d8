"""Spherical p-spin glass Hamiltonian with a linear external field.

The energy minimized throughout the package is

    H~(sigma) = -J n^{-(p-1)/2} sum_{i1..ip} J_{i1..ip} sigma_i1 ... sigma_ip - h . sigma

with sigma on the sphere of radius sqrt(n). Lower is better.

Random streams
--------------
Every object that draws random numbers takes an integer ``seed``. The
generator is ``numpy.random.default_rng(SeedSequence(seed, spawn_key=(k,)))``
where ``k`` is a fixed stream id:

    DISORDER_STREAM = 0   coupling tensor
    FIELD_STREAM    = 1   external field h
    INIT_STREAM     = 2   initial spin configurations
    ANNEAL_STREAM   = 3   AnnealSGD perturbation direction

so a disorder and a field built from the same integer seed are independent.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

DISORDER_STREAM = 0
FIELD_STREAM = 1
INIT_STREAM = 2
ANNEAL_STREAM = 3

DEFAULT_BUDGET = 10**8


class CapacityError(ValueError):
    """Requested dense array exceeds the configured entry budget."""


def stream_rng(seed: int, stream: int, *extra: int) -> np.random.Generator:
    """Generator for ``seed`` on a fixed stream, optionally sub-keyed by ``extra``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(stream, *extra)))


def derive_seed(master: int, *key: int) -> int:
    """Deterministic 63-bit child seed of ``master`` for the integer path ``key``."""
    state = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key)).generate_state(1, np.uint64)
    return int(state[0] >> np.uint64(1))


def _check_budget(entries: int, budget: int) -> None:
    if entries > budget:
        raise CapacityError(f"{entries} entries exceed the budget of {budget}")


@dataclass(frozen=True)
class Disorder:
    """One Hamiltonian instance: iid N(0, 1) couplings plus the scale ``J``.

    ``couplings`` is the dense, unsymmetrized rank-p tensor. ``grad_tensor`` is
    the sum over the p index positions of the coupling tensor with that
    position moved to the front; contracting its trailing p-1 axes with sigma
    gives the derivative of the polynomial part.
    """

    n: int
    p: int
    J: float
    seed: int
    couplings: np.ndarray = field(repr=False, compare=False)
    grad_tensor: np.ndarray = field(repr=False, compare=False)

    @property
    def scale(self) -> float:
        """Prefactor J / n^{(p-1)/2}."""
        return self.J / self.n ** ((self.p - 1) / 2)

    @cached_property
    def hess_tensor(self) -> np.ndarray:
        """Sum over trailing positions q of ``grad_tensor`` with axis q moved to 1.

        Contracting its last p-2 axes with sigma gives the Hessian of the
        polynomial part. Built on first use.
        """
        ht = np.array(self.grad_tensor)
        for q in range(2, self.p):
            ht += np.moveaxis(self.grad_tensor, q, 1)
        ht.flags.writeable = False
        return ht

    def to_record(self) -> dict:
        return {"n": self.n, "p": self.p, "J": self.J, "seed": self.seed}

    @classmethod
    def from_record(cls, rec: dict, budget: int = DEFAULT_BUDGET) -> "Disorder":
        return sample_disorder(int(rec["n"]), int(rec["p"]), float(rec["J"]), int(rec["seed"]), budget)

    def export_raw(self, path: str | Path) -> None:
        """Write the coupling tensor as flat little-endian float64 (C order)."""
        self.couplings.astype("<f8").tofile(path)


def sample_disorder(n: int, p: int, J: float = 1.0, seed: int = 0, budget: int = DEFAULT_BUDGET) -> Disorder:
    if n < 2 or p < 2:
        raise ValueError(f"need n >= 2 and p >= 2, got n={n}, p={p}")
    if J < 0:
        raise ValueError(f"J must be nonnegative, got {J}")
    _check_budget(n**p, budget)
    couplings = stream_rng(seed, DISORDER_STREAM).standard_normal((n,) * p)
    gt = couplings.copy()
    for r in range(1, p):
        gt += np.moveaxis(couplings, r, 0)
    couplings.flags.writeable = False
    gt.flags.writeable = False
    return Disorder(n=n, p=p, J=float(J), seed=int(seed), couplings=couplings, grad_tensor=gt)


def zero_disorder(n: int, p: int, J: float = 1.0) -> Disorder:
    """Disorder with all couplings zero (only the field acts)."""
    z = np.zeros((n,) * p)
    z.flags.writeable = False
    return Disorder(n=n, p=p, J=float(J), seed=-1, couplings=z, grad_tensor=z)


@dataclass(frozen=True)
class ExternalField:
    values: np.ndarray = field(repr=False, compare=False)
    nu: float
    seed: int

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def to_record(self) -> dict:
        return {"n": self.n, "nu": self.nu, "seed": self.seed}

    @classmethod
    def from_record(cls, rec: dict) -> "ExternalField":
        return sample_field(int(rec["n"]), float(rec["nu"]), int(rec["seed"]))

    def export_raw(self, path: str | Path) -> None:
        self.values.astype("<f8").tofile(path)


def sample_field(n: int, nu: float, seed: int = 0) -> ExternalField:
    """h_i ~ N(0, nu^2) iid. The draw is nu times a fixed standard normal vector."""
    if nu < 0:
        raise ValueError(f"field strength must be nonnegative, got {nu}")
    z = stream_rng(seed, FIELD_STREAM).standard_normal(n)
    values = nu * z if nu > 0 else np.zeros(n)
    values.flags.writeable = False
    return ExternalField(values=values, nu=float(nu), seed=int(seed))


def fixed_field(values, nu: float = float("nan")) -> ExternalField:
    """Wrap an explicit field vector (tests and hand-built experiments)."""
    v = np.array(values, dtype=float)
    v.flags.writeable = False
    return ExternalField(values=v, nu=nu, seed=-1)


def _field_values(f: ExternalField | np.ndarray | None, n: int) -> np.ndarray:
    if f is None:
        return np.zeros(n)
    h = f.values if isinstance(f, ExternalField) else np.asarray(f, dtype=float)
    if h.shape[-1] != n:
        raise ValueError(f"field has length {h.shape[-1]}, expected {n}")
    return h


def _as_batch(d: Disorder, sigma) -> tuple[np.ndarray, bool]:
    s = np.asarray(sigma, dtype=float)
    single = s.ndim == 1
    s = np.atleast_2d(s)
    if s.shape[1] != d.n:
        raise ValueError(f"configuration has length {s.shape[1]}, expected {d.n}")
    return s, single


def _contract(tensor: np.ndarray, s: np.ndarray, k: int) -> np.ndarray:
    """Contract the last ``k`` axes of ``tensor`` with each row of ``s``.

    Returns shape (batch,) + tensor.shape[:-k].
    """
    n, b = s.shape[1], s.shape[0]
    lead = tensor.shape[: tensor.ndim - k]
    # a lone row would go through gemv, which rounds differently from the small
    # gemm kernels; duplicating it keeps one trial close to its batched self
    s2 = np.vstack([s, s]) if b == 1 else s
    x = (s2 @ tensor.reshape(-1, n).T).reshape((s2.shape[0],) + tensor.shape[:-1])
    for _ in range(k - 1):
        x = np.einsum("b...j,bj->b...", x, s2)
    return x[:b].reshape((b,) + lead)


def energy(d: Disorder, sigma, f: ExternalField | np.ndarray | None = None):
    """H~(sigma). Accepts one configuration (n,) or a batch (B, n)."""
    s, single = _as_batch(d, sigma)
    h = _field_values(f, d.n)
    poly = _contract(d.couplings, s, d.p)
    e = -d.scale * poly - np.sum(s * h, axis=-1)
    return float(e[0]) if single else e


def gradient(d: Disorder, sigma, f: ExternalField | np.ndarray | None = None) -> np.ndarray:
    """Ambient (Euclidean) gradient of H~. ``f`` may also be a (B, n) array of fields."""
    s, single = _as_batch(d, sigma)
    h = _field_values(f, d.n)
    g = -d.scale * _contract(d.grad_tensor, s, d.p - 1) - h
    return g[0] if single else g


def hessian(d: Disorder, sigma, f: ExternalField | np.ndarray | None = None,
            budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """Ambient second derivative of H~; (n, n) or (B, n, n) for a batch. The field drops out."""
    _check_budget(d.n * d.n, budget)
    s, single = _as_batch(d, sigma)
    if d.p == 2:
        hm = np.broadcast_to(d.hess_tensor, (s.shape[0], d.n, d.n))
    else:
        hm = _contract(d.hess_tensor, s, d.p - 2)
    hm = -d.scale * hm
    hm = 0.5 * (hm + np.swapaxes(hm, -1, -2))
    return hm[0] if single else hm
