"""Analytic layer: mean intensities, stability and the critical fitness.

Two parallel routes to the first moments are kept side by side.  The
"paper" route evaluates the closed forms stated for the exponential
model; the "renewal" route solves the standard first-moment Volterra
equation y = lambda0 + Phi^T * y numerically.  The two routes disagree
for nonzero excitation (their steady states differ), so both are exposed
and Monte Carlo arbitrates between them; nothing is reconciled silently.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (
    DegenerateParametersError,
    ExpKernel,
    KernelBank,
    UnsupportedKernelError,
    kernel_eval,
    l1_norm,
)


class NumericFailureError(RuntimeError):
    """Volterra iteration failed to converge within the refinement cap."""


class NoStationaryRateError(ValueError):
    """The branching structure admits no finite stationary mean rate."""


def _exp_params(bank: KernelBank):
    """(alpha[j][i], beta[i], alpha3, beta3) of a zero-offset exponential bank."""
    if not bank.all_exponential():
        raise UnsupportedKernelError("closed forms require exponential kernels")
    kernels = [bank.birth_kernels[j][i] for j in range(2) for i in range(2)]
    if any(k.delta != 0 for k in kernels) or bank.death_kernel.delta != 0:
        raise UnsupportedKernelError("closed forms require zero kernel offsets")
    alphas = tuple(tuple(bank.birth_kernels[j][i].alpha for i in range(2)) for j in range(2))
    betas = (bank.birth_kernels[0][0].beta, bank.birth_kernels[0][1].beta)
    return alphas, betas, bank.death_kernel.alpha, bank.death_kernel.beta


def _is_poisson(bank: KernelBank) -> bool:
    alphas, _, a3, _ = _exp_params(bank)
    return a3 == 0 and all(alphas[j][i] == 0 for j in range(2) for i in range(2))


@dataclass(frozen=True)
class ABCCoefficients:
    """Coefficients of the closed-form birth-intensity mean for one index."""

    a: float
    b: float
    c: float


def abc_coefficients(bank: KernelBank, i: int) -> ABCCoefficients:
    """Closed-form curve coefficients for intensity i in {1, 2}.

    The mean intensity is c + a*exp(-beta_i t) + b*exp(-beta_j t) with j
    the partner index; a + b + c equals the baseline rate by construction.
    """
    if i not in (1, 2):
        raise ValueError(f"index must be 1 or 2, got {i}")
    alphas, betas, _, _ = _exp_params(bank)
    ii, jj = i - 1, 2 - i
    bi, bj = betas[ii], betas[jj]
    l0i, l0j = bank.base_rates[ii], bank.base_rates[jj]
    # alphas[j][i] is alpha_{ji}: effect of a type-j event on intensity i.
    a_ii = alphas[ii][ii]
    a_ij = alphas[ii][jj]
    a_ji = alphas[jj][ii]
    a_jj = alphas[jj][jj]
    if bi == bj:
        if a_ii == a_ij == a_ji == a_jj == 0:
            return ABCCoefficients(0.0, 0.0, l0i)
        raise DegenerateParametersError(
            "equal decay rates make the closed form singular; use the renewal curve"
        )
    a = (l0i / bi) * (a_ij * a_ji - a_ii * a_jj) / (bi - bj) - (l0i / bi) * a_ii - (l0j / bi) * a_ji
    b = (l0i / bj) * (a_ii * a_jj - a_ij * a_ji) / (bi - bj)
    c = l0i - a - b
    return ABCCoefficients(a, b, c)


def expected_intensity_paper(bank: KernelBank, i: int, t) -> float:
    """Closed-form mean intensity of process i at time t (ungated for i=3)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    if i == 3:
        l03 = bank.base_rates[2]
        _, _, a3, b3 = _exp_params(bank)
        out = l03 + l03 * (1.0 - np.exp(-b3 * t)) * a3 / b3
    else:
        coef = abc_coefficients(bank, i)
        _, betas, _, _ = _exp_params(bank)
        bi, bj = betas[i - 1], betas[2 - i]
        out = coef.c + coef.a * np.exp(-bi * t) + coef.b * np.exp(-bj * t)
    return float(out) if out.ndim == 0 else out


def univariate_remark_intensity(lam0: float, alpha: float, beta: float, t) -> np.ndarray:
    """Mean intensity of a univariate exponential Hawkes process.

    Steady state beta*lam0/(beta-alpha) for alpha < beta; this is the
    standard first-moment solution and disagrees with the closed form
    above whenever alpha > 0.
    """
    t = np.asarray(t, dtype=float)
    if alpha == beta:
        return lam0 * (1.0 + beta * t)
    g = alpha - beta
    return beta * lam0 / g * (np.exp(g * t) - 1.0) + lam0 * np.exp(g * t)


def _solve_volterra(kernel_mat, base, grid: np.ndarray) -> np.ndarray:
    """Trapezoidal solve of y_i = base_i + sum_j int phi_ji(t-u) y_j(u) du.

    kernel_mat[j][i] evaluated on the grid; returns y with shape (d, n).
    """
    d = len(base)
    n = grid.size
    h = grid[1] - grid[0]
    phi = np.empty((d, d, n))
    for j in range(d):
        for i in range(d):
            ker = kernel_mat[j][i]
            if isinstance(ker, ExpKernel):
                phi[j, i] = ker.delta + ker.alpha * np.exp(-ker.beta * grid)
            else:
                phi[j, i] = [kernel_eval(ker, float(s)) for s in grid]
    y = np.empty((d, n))
    y[:, 0] = base
    # Implicit trapezoid step: (I - h/2 * Phi0^T) y_n = base + h * past.
    phi0 = phi[:, :, 0]
    lhs = np.eye(d) - 0.5 * h * phi0.T
    for m in range(1, n):
        rhs = np.array(base, dtype=float)
        for i in range(d):
            acc = 0.0
            for j in range(d):
                w = phi[j, i, m:0:-1]  # phi(t_m - t_k) for k = 0..m-1
                acc += w @ y[j, :m] - 0.5 * w[0] * y[j, 0]
            rhs[i] += h * acc
        y[:, m] = np.linalg.solve(lhs, rhs)
    return y


def _renewal_on_grid(bank: KernelBank, i: int, t_max: float, tol: float = 1e-6,
                     max_refinements: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Converged renewal solution of intensity i on a uniform grid [0, t_max]."""
    if i in (1, 2):
        kernel_mat = [[bank.birth_kernels[j][k] for k in range(2)] for j in range(2)]
        base = [bank.base_rates[0], bank.base_rates[1]]
        comp = i - 1
    elif i == 3:
        kernel_mat = [[bank.death_kernel]]
        base = [bank.base_rates[2]]
        comp = 0
    else:
        raise ValueError(f"index must be 1, 2 or 3, got {i}")
    n = 256
    grid = np.linspace(0.0, t_max, n + 1)
    y_prev = _solve_volterra(kernel_mat, base, grid)[comp]
    for _ in range(max_refinements):
        n *= 2
        grid = np.linspace(0.0, t_max, n + 1)
        y = _solve_volterra(kernel_mat, base, grid)[comp]
        diff = np.max(np.abs(y[::2] - y_prev))
        scale = max(np.max(np.abs(y)), 1e-300)
        if diff / scale < tol:
            return grid, y
        y_prev = y
    raise NumericFailureError(
        f"renewal solution did not converge to {tol} after {max_refinements} refinements"
    )


def expected_intensity_renewal(bank: KernelBank, i: int, t_grid) -> np.ndarray:
    """Numerical first-moment intensity of process i on t_grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] != 0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must increase from 0")
    if t_grid[-1] == 0:
        return np.array([float(bank.base_rates[i - 1])])
    grid, y = _renewal_on_grid(bank, i, float(t_grid[-1]))
    return np.interp(t_grid, grid, y)


def expected_count(bank: KernelBank, i: int, t: float, method: str = "paper") -> float:
    """Mean event count of process i on [0, t] for the selected curve."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return 0.0
    if method == "paper":
        if i == 3:
            l03 = bank.base_rates[2]
            _, _, a3, b3 = _exp_params(bank)
            return l03 * (1.0 + a3 / b3) * t + l03 * (math.exp(-b3 * t) - 1.0) * a3 / b3**2
        coef = abc_coefficients(bank, i)
        _, betas, _, _ = _exp_params(bank)
        bi, bj = betas[i - 1], betas[2 - i]
        return (coef.c * t
                + coef.a * (1.0 - math.exp(-bi * t)) / bi
                + coef.b * (1.0 - math.exp(-bj * t)) / bj)
    if method == "renewal":
        grid, y = _renewal_on_grid(bank, i, float(t))
        return float(np.trapezoid(y, grid))
    raise ValueError(f"unknown method {method!r}")


def _branching_matrix(bank: KernelBank) -> np.ndarray:
    """K[j, i] = L1 norm of the kernel from type j onto intensity i."""
    return np.array([[l1_norm(bank.birth_kernels[j][i]) for i in range(2)] for j in range(2)])


def asymptotic_rates(bank: KernelBank, method: str = "paper") -> tuple[float, float, float]:
    """Long-run mean rates (Lambda1, Lambda2, Lambda3).

    The paper route takes the t -> inf limits of the closed forms; the
    renewal route solves the stationary balance Lambda = lambda0 + K^T
    Lambda, which requires a subcritical branching matrix.
    """
    if method == "paper":
        _, _, a3, b3 = _exp_params(bank)
        l3 = bank.base_rates[2] * (1.0 + a3 / b3)
        if _is_poisson(bank):
            return (bank.base_rates[0], bank.base_rates[1], l3)
        c1 = abc_coefficients(bank, 1).c
        c2 = abc_coefficients(bank, 2).c
        return (c1, c2, l3)
    if method == "renewal":
        k = _branching_matrix(bank)
        if not np.all(np.isfinite(k)):
            raise NoStationaryRateError("a birth kernel has infinite L1 norm")
        if np.max(np.abs(np.linalg.eigvals(k))) >= 1:
            raise NoStationaryRateError("branching matrix is not subcritical")
        lam12 = np.linalg.solve(np.eye(2) - k.T, np.array(bank.base_rates[:2]))
        psi_norm = l1_norm(bank.death_kernel)
        if psi_norm >= 1:
            raise NoStationaryRateError("death kernel L1 norm must be < 1")
        l3 = bank.base_rates[2] / (1.0 - psi_norm)
        return (float(lam12[0]), float(lam12[1]), l3)
    raise ValueError(f"unknown method {method!r}")


def critical_fitness(bank: KernelBank, method: str = "paper") -> float:
    """Critical fitness: limiting ratio of mean death to mean mutant rate."""
    if method == "renewal":
        lam = asymptotic_rates(bank, "renewal")
        if lam[0] <= 0:
            raise DegenerateParametersError("mutant rate limit must be positive")
        return lam[2] / lam[0]
    if method != "paper":
        raise ValueError(f"unknown method {method!r}")
    alphas, betas, a3, b3 = _exp_params(bank)
    l01, l02, l03 = bank.base_rates
    b1, b2 = betas
    a11, a12 = alphas[0]
    a21, a22 = alphas[1]
    denom = (l01 * b1 * b2 - l01 * (a11 * a22 - a12 * a21) + b2 * (l01 * a11 + l02 * a21)) * b3
    if denom == 0:
        raise DegenerateParametersError("zero denominator in the critical-fitness formula")
    fc = l03 * (a3 + b3) * b1 * b2 / denom
    subcritical_jumps = a3 <= b3 and all(
        alphas[j][i] <= betas[i] for j in range(2) for i in range(2)
    )
    if subcritical_jumps:
        lo = l03 / (2 * l01 + l02)
        hi = 2 * l03 / l01
        if not (lo <= fc <= hi):
            warnings.warn(
                f"critical fitness {fc} violates the bounds [{lo}, {hi}]",
                RuntimeWarning,
            )
    return fc


class Stability(enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    CRITICAL = "critical"


_CRITICAL_WINDOW = 1e-12


def _classify(lam: tuple[float, float, float]) -> Stability:
    births, deaths = lam[0] + lam[1], lam[2]
    if abs(births - deaths) < _CRITICAL_WINDOW * deaths:
        return Stability.CRITICAL
    return Stability.STABLE if deaths > births else Stability.UNSTABLE


def stability_check(bank: KernelBank) -> Stability:
    """Compare long-run birth and death rates.

    Uses the renewal rates when they exist; a supercritical branching
    matrix means the births explode, which is unstable outright.
    """
    try:
        lam = asymptotic_rates(bank, "renewal")
    except NoStationaryRateError:
        return Stability.UNSTABLE
    return _classify(lam)


class RegimeKind(enum.Enum):
    SUBCRITICAL = "subcritical"
    PHASE_TRANSITION = "phase_transition"
    CONCENTRATION_AT_ONE = "concentration_at_one"


@dataclass(frozen=True)
class RegimeReport:
    """Asymptotic rates, critical fitness and the population regime."""

    lambda_asym_paper: tuple[float, float, float]
    lambda_asym_renewal: Optional[tuple[float, float, float]]
    fc_paper: float
    fc_renewal: Optional[float]
    regime: RegimeKind

    def to_dict(self) -> dict:
        return {
            "lambda_asym_paper": list(self.lambda_asym_paper),
            "lambda_asym_renewal": (
                None if self.lambda_asym_renewal is None else list(self.lambda_asym_renewal)
            ),
            "fc_paper": self.fc_paper,
            "fc_renewal": self.fc_renewal,
            "regime": self.regime.value,
        }


def classify_regime(bank: KernelBank) -> RegimeReport:
    """Trichotomy of the long-run population behaviour.

    Subcritical when deaths dominate births in the mean; otherwise a
    phase transition at the critical fitness when it lies in (0, 1], and
    concentration of the population near fitness 1 when it exceeds 1.
    """
    lam_paper = asymptotic_rates(bank, "paper")
    fc_paper = critical_fitness(bank, "paper")
    try:
        lam = asymptotic_rates(bank, "renewal")
        fc = critical_fitness(bank, "renewal")
        lam_renewal, fc_renewal = lam, fc
    except NoStationaryRateError:
        lam, fc = lam_paper, fc_paper
        lam_renewal = fc_renewal = None
    if lam[2] >= lam[0] + lam[1]:
        regime = RegimeKind.SUBCRITICAL
    elif fc <= 1:
        regime = RegimeKind.PHASE_TRANSITION
    else:
        regime = RegimeKind.CONCENTRATION_AT_ONE
    return RegimeReport(lam_paper, lam_renewal, fc_paper, fc_renewal, regime)


@dataclass(frozen=True)
class ExpectationCurve:
    """Callable mean intensity / mean count curve for one process index."""

    index: int
    method: str
    intensity: Callable[[float], float]
    count: Callable[[float], float]


def expectation_curve(bank: KernelBank, i: int, method: str = "paper",
                      t_max: float = 10.0) -> ExpectationCurve:
    """Build the selected expectation curve; renewal curves are tabulated
    on [0, t_max] and interpolated."""
    if method == "paper":
        return ExpectationCurve(
            i, "paper",
            intensity=lambda t: expected_intensity_paper(bank, i, t),
            count=lambda t: expected_count(bank, i, t, "paper"),
        )
    if method == "renewal":
        grid, y = _renewal_on_grid(bank, i, t_max)
        cum = np.concatenate([[0.0], np.cumsum((y[1:] + y[:-1]) * 0.5 * np.diff(grid))])
        return ExpectationCurve(
            i, "renewal",
            intensity=lambda t: float(np.interp(t, grid, y)),
            count=lambda t: float(np.interp(t, grid, cum)),
        )
    raise ValueError(f"unknown method {method!r}")
