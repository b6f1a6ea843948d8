"""Projected gradient descent on the sphere S^{n-1}(sqrt(n)).

Each step moves against the tangential part of the ambient gradient and
rescales back to radius sqrt(n). Descent stops when the tangential
gradient norm drops to ``grad_tol``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hamiltonian import (
    DEFAULT_BUDGET,
    INIT_STREAM,
    CapacityError,
    Disorder,
    ExternalField,
    energy,
    gradient,
    hessian,
    stream_rng,
)


@dataclass(frozen=True)
class DescentConfig:
    step: float = 0.1
    grad_tol: float = 1e-4
    max_iters: int = 10**6

    def __post_init__(self):
        if self.step <= 0 or self.grad_tol <= 0 or self.max_iters <= 0:
            raise ValueError(f"descent parameters must be positive: {self}")


@dataclass
class DescentResult:
    endpoint: np.ndarray
    final_energy: float
    normalized_energy: float
    iters: int
    grad_norm: float
    ambient_grad_norm: float
    converged: bool


@dataclass
class BatchDescentResult:
    """Row ``b`` of every array describes trial ``b``."""

    endpoints: np.ndarray
    energies: np.ndarray
    iters: np.ndarray
    grad_norms: np.ndarray
    ambient_grad_norms: np.ndarray
    converged: np.ndarray

    @property
    def normalized_energies(self) -> np.ndarray:
        return self.energies / self.endpoints.shape[1]

    def __len__(self):
        return self.endpoints.shape[0]

    def __getitem__(self, b: int) -> DescentResult:
        n = self.endpoints.shape[1]
        return DescentResult(
            endpoint=self.endpoints[b].copy(),
            final_energy=float(self.energies[b]),
            normalized_energy=float(self.energies[b]) / n,
            iters=int(self.iters[b]),
            grad_norm=float(self.grad_norms[b]),
            ambient_grad_norm=float(self.ambient_grad_norms[b]),
            converged=bool(self.converged[b]),
        )


def random_configuration(n: int, seed: int, *key: int) -> np.ndarray:
    """Uniform point on S^{n-1}(sqrt(n)) from the init stream of ``seed``.

    Extra integers in ``key`` select independent sub-streams, so
    ``random_configuration(n, master, regime, trial)`` is a per-trial draw.
    """
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    x = stream_rng(seed, INIT_STREAM, *key).standard_normal(n)
    return retract(x)


def project_tangent(g, sigma) -> np.ndarray:
    """Remove the radial component: g - (g.sigma / n) sigma. Works row-wise on batches."""
    g = np.asarray(g, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if g.shape != sigma.shape:
        raise ValueError(f"shape mismatch: {g.shape} vs {sigma.shape}")
    n = sigma.shape[-1]
    coef = np.sum(g * sigma, axis=-1, keepdims=True) / n
    return g - coef * sigma


def retract(v) -> np.ndarray:
    """Rescale ``v`` (or each row) to radius sqrt(n)."""
    v = np.asarray(v, dtype=float)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot retract the zero vector")
    return np.sqrt(v.shape[-1]) * v / norms


def descend_batch(d: Disorder, f, sigma0, cfg: DescentConfig = DescentConfig()) -> BatchDescentResult:
    """Run independent descents for every row of ``sigma0``.

    ``f`` is an ExternalField shared by all rows, a (B, n) array with one field
    per row, or None. Finished rows drop out of the active set; each row's
    trajectory matches a solo run up to BLAS rounding, which depends on the
    batch shape.
    """
    s = np.array(np.atleast_2d(sigma0), dtype=float)
    B, n = s.shape
    if n != d.n:
        raise ValueError(f"configurations have length {n}, expected {d.n}")
    if f is None:
        h = np.zeros(n)
    else:
        h = np.asarray(f.values if isinstance(f, ExternalField) else f, dtype=float)
    per_row = h.ndim == 2
    if per_row and h.shape != (B, n):
        raise ValueError(f"per-row fields must have shape {(B, n)}, got {h.shape}")

    iters = np.zeros(B, dtype=np.int64)
    gnorm = np.full(B, np.inf)
    anorm = np.full(B, np.inf)
    converged = np.zeros(B, dtype=bool)
    active = np.arange(B)
    for it in range(cfg.max_iters + 1):
        if active.size == 0:
            break
        sa = s[active]
        g = gradient(d, sa, h[active] if per_row else h)
        pg = project_tangent(g, sa)
        pn = np.linalg.norm(pg, axis=1)
        gnorm[active] = pn
        anorm[active] = np.linalg.norm(g, axis=1)
        iters[active] = it
        done = pn <= cfg.grad_tol
        converged[active[done]] = True
        if it == cfg.max_iters:
            break
        keep = ~done
        active = active[keep]
        s[active] = retract(sa[keep] - cfg.step * pg[keep])

    e = energy(d, s, None) - np.sum(s * h, axis=-1)
    return BatchDescentResult(s, e, iters, gnorm, anorm, converged)


def descend(d: Disorder, f: ExternalField | None, sigma0, cfg: DescentConfig = DescentConfig()) -> DescentResult:
    if not np.isclose(np.dot(sigma0, sigma0), d.n, rtol=1e-8, atol=0):
        raise ValueError("initial configuration is not on the sphere of radius sqrt(n)")
    return descend_batch(d, f, np.asarray(sigma0)[None, :], cfg)[0]


def tangent_basis(sigma) -> np.ndarray:
    """Orthonormal basis (n, n-1) of the plane orthogonal to ``sigma``; batches give (B, n, n-1)."""
    s = np.atleast_2d(np.asarray(sigma, dtype=float))
    u = s / np.linalg.norm(s, axis=1, keepdims=True)
    # Householder reflector taking u to -+e_0; its other columns span u's complement
    v = u.copy()
    v[:, 0] += np.where(u[:, 0] >= 0, 1.0, -1.0)
    q = np.eye(s.shape[1]) - 2.0 * v[:, :, None] * v[:, None, :] / np.sum(v * v, axis=1)[:, None, None]
    q = q[:, :, 1:]
    return q[0] if np.ndim(sigma) == 1 else q


def riemannian_hessian(d: Disorder, f, sigma, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """Hessian of H~ restricted to the sphere, in tangent coordinates ((n-1) x (n-1)).

    With P the tangent projector this is P (hess) P - (sigma . grad / n) P,
    written in an orthonormal tangent basis. Batches give (B, n-1, n-1).
    """
    s = np.atleast_2d(np.asarray(sigma, dtype=float))
    hm = hessian(d, s, f, budget)
    g = np.atleast_2d(gradient(d, s, f))
    basis = tangent_basis(s)
    radial = np.sum(s * g, axis=1) / d.n
    r = np.swapaxes(basis, 1, 2) @ hm @ basis - radial[:, None, None] * np.eye(d.n - 1)
    r = 0.5 * (r + np.swapaxes(r, 1, 2))
    return r[0] if np.ndim(sigma) == 1 else r


def critical_indices(d: Disorder, f, sigmas, grad_tol: float = 1e-4,
                     budget: int = DEFAULT_BUDGET, chunk: int = 256) -> np.ndarray:
    """Number of negative tangent Hessian eigenvalues at each near-critical row of ``sigmas``.

    Eigenvalues count as negative below -1e-6 times the largest absolute entry
    of that point's tangent Hessian. Rows whose tangential gradient norm
    exceeds ``10 * grad_tol`` are rejected.
    """
    if d.n * d.n > budget:
        raise CapacityError(f"dense Hessian of size {d.n}^2 exceeds the budget of {budget}")
    s = np.atleast_2d(np.asarray(sigmas, dtype=float))
    pn = np.linalg.norm(project_tangent(gradient(d, s, f), s), axis=1)
    if np.any(pn > 10 * grad_tol):
        raise ValueError(f"not a critical point: tangential gradient norm {pn.max():.3g} > {10 * grad_tol:.3g}")
    out = np.empty(s.shape[0], dtype=np.int64)
    for lo in range(0, s.shape[0], chunk):
        fc = f[lo:lo + chunk] if isinstance(f, np.ndarray) and f.ndim == 2 else f
        r = riemannian_hessian(d, fc, s[lo:lo + chunk], budget)
        tol = 1e-6 * np.max(np.abs(r), axis=(1, 2))
        out[lo:lo + chunk] = np.sum(np.linalg.eigvalsh(r) < -tol[:, None], axis=1)
    return out


def critical_index(d: Disorder, f, sigma, grad_tol: float = 1e-4, budget: int = DEFAULT_BUDGET) -> int:
    """Index (negative-curvature count) of one near-critical point; 0 for a local minimum."""
    return int(critical_indices(d, f, np.asarray(sigma)[None, :], grad_tol, budget)[0])
