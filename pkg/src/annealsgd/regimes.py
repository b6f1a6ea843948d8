"""Closed-form regime calculus for the perturbed spherical p-spin glass.

The order parameter

    B = (J^2 p (p-2) - nu^2) / (J^2 p^2 + nu^2)

sorts a field strength ``nu`` into the exponential (B > c/n), polynomial
(|B| <= c/n) or trivial (B < -c/n) regime. The remaining functions give the
large-n expected numbers of critical points and minima near the transition,
and invert B to obtain annealing field strengths.
"""
from __future__ import annotations

import enum
import math


class Regime(str, enum.Enum):
    EXPONENTIAL = "exponential"
    POLYNOMIAL = "polynomial"
    TRIVIAL = "trivial"


class Branch(str, enum.Enum):
    """Which case of the expected critical-point count the caller asserts."""

    TRIVIAL = "trivial"          # B = -Omega(1/n)
    EDGE = "edge"                # B = -tau/n
    EXPONENTIAL = "exponential"  # B > 0


def order_parameter(J: float, p: int, nu: float) -> float:
    if J == 0 and nu == 0:
        raise ValueError("order parameter undefined for J = nu = 0")
    return (J * J * p * (p - 2) - nu * nu) / (J * J * p * p + nu * nu)


def critical_field(J: float, p: int) -> float:
    """nu_c = J sqrt(p (p - 2)); zero for p = 2."""
    if p < 2:
        raise ValueError(f"p must be at least 2, got {p}")
    return J * math.sqrt(p * (p - 2))


def expected_critical_points(branch: Branch | str, n: int, B: float | None = None, tau: float | None = None) -> float:
    """Expected number of critical points of the perturbed Hamiltonian.

    The branch is stated by the caller, never inferred from B.
    """
    branch = Branch(branch)
    if branch is Branch.TRIVIAL:
        return 2.0
    if branch is Branch.EDGE:
        if tau is None or tau <= 0:
            raise ValueError(f"edge branch needs tau > 0, got {tau}")
        return 2.0 * n / math.sqrt(math.pi) * tau**-1.5
    if B is None or B <= 0:
        raise ValueError(f"exponential branch needs B > 0, got {B}")
    log_count = math.log(4.0 * math.sqrt(n) * math.sqrt((1 + B) / (math.pi * B))) + 0.5 * n * math.log((1 + B) / (1 - B))
    return math.exp(log_count) if log_count < 709.0 else math.inf


def expected_critical_points_edge(tau: float, n: int) -> float:
    """Large-n edge scaling at B = -tau/n, valid for |tau| >= 1."""
    if abs(tau) < 1:
        raise ValueError(f"edge scaling needs |tau| >= 1, got {tau}")
    if tau > 0:
        return n * 2.0 / math.sqrt(math.pi) * tau**-1.5
    a = abs(tau)
    return n * 2.0 / math.sqrt(math.pi * a) * 2.0 * math.exp(a)


def expected_minima_edge(kappa: float) -> float:
    """Expected number of minima at B = -(kappa/2) n^{-1/3}, without the unknown constant C.

    For kappa <= -1 the true count is C times the returned value for some
    unspecified C > 0.
    """
    if abs(kappa) < 1:
        raise ValueError(f"edge scaling needs |kappa| >= 1, got {kappa}")
    if kappa > 0:
        return 1.0
    a = abs(kappa)
    return math.exp(a * a / 24.0 + 4.0 * math.sqrt(2.0) * a**1.5 / 3.0)


def nu_for_tau(nu_c: float, tau: float, n: int) -> float:
    """nu = nu_c (1 + 2 tau / n)^{1/2}."""
    arg = 1.0 + 2.0 * tau / n
    if arg <= 0:
        raise ValueError(f"tau must exceed -n/2 = {-n / 2}, got {tau}")
    return nu_c * math.sqrt(arg)


def nu_for_kappa(nu_c: float, kappa: float, n: int) -> float:
    """nu = nu_c (1 + kappa log(n) / n^{1/3})^{1/2}."""
    arg = 1.0 + kappa * math.log(n) / n ** (1.0 / 3.0)
    if arg <= 0:
        raise ValueError(f"1 + kappa log(n) / n^(1/3) must be positive, got {arg}")
    return nu_c * math.sqrt(arg)


def classify_regime(B: float, n: int, band: float = 1.0) -> Regime:
    """Polynomial inside the closed band |B| <= band/n."""
    if n < 2 or band <= 0:
        raise ValueError(f"need n >= 2 and band > 0, got n={n}, band={band}")
    if abs(B) <= band / n:
        return Regime.POLYNOMIAL
    return Regime.EXPONENTIAL if B > 0 else Regime.TRIVIAL


def regime_table(J: float, p: int, n: int, nus, band: float = 1.0) -> list[dict]:
    """One row per field strength: nu, B, regime label and the matching count.

    The count follows the sign of B and the label: B > 0 uses the exponential
    formula, B < 0 inside the band uses the edge formula with tau = -n B, the
    trivial side gives 2, and B = 0 exactly reports infinity (the B > 0
    prefactor diverges there).
    """
    rows = []
    for nu in nus:
        B = order_parameter(J, p, nu)
        label = classify_regime(B, n, band)
        if B > 0:
            count = expected_critical_points(Branch.EXPONENTIAL, n, B=B)
        elif B == 0:
            count = math.inf
        elif label is Regime.TRIVIAL:
            count = expected_critical_points(Branch.TRIVIAL, n)
        else:
            count = expected_critical_points(Branch.EDGE, n, tau=-n * B)
        rows.append({"nu": float(nu), "B": B, "regime": label.value, "expected_count": count})
    return rows
