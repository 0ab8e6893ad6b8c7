"""Model parameters, excitation kernels and the Markov intensity state.

Three counting processes drive the population: mutant births (type 1),
clone births (type 2) and deaths (type 3).  The first two are mutually
exciting, the third is self exciting and gated by the population size.
This module holds the static parameters (kernels, baseline rates), the
event log of a realization, and the shot-noise state together with the
exact propagation laws available when every kernel is exponential.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from scipy.integrate import quad


class UnsupportedKernelError(ValueError):
    """Raised when an operation needs a kernel structure the bank lacks."""


class DegenerateParametersError(ValueError):
    """Raised when a closed form is singular for the given parameters."""


class Mark(enum.IntEnum):
    """Event type: mutant birth, clone birth, or death."""

    MUTANT = 1
    CLONE = 2
    DEATH = 3


@dataclass(frozen=True)
class ExpKernel:
    """Excitation kernel delta + alpha * exp(-beta * t)."""

    alpha: float
    beta: float
    delta: float = 0.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")

    def __call__(self, t: float) -> float:
        if t < 0:
            raise ValueError(f"kernel argument must be >= 0, got {t}")
        return self.delta + self.alpha * math.exp(-self.beta * t)


@dataclass(frozen=True)
class GeneralKernel:
    """Arbitrary non-negative excitation kernel.

    The caller declares monotonicity; only non-increasing kernels admit a
    valid thinning bound and may be simulated.  The L1 norm is computed
    once by quadrature unless supplied (use math.inf for non-integrable
    kernels).
    """

    func: Callable[[float], float]
    non_increasing: bool = False
    l1: Optional[float] = None

    def __call__(self, t: float) -> float:
        if t < 0:
            raise ValueError(f"kernel argument must be >= 0, got {t}")
        v = self.func(t)
        if v < 0:
            raise ValueError(f"kernel must be non-negative, got {v} at t={t}")
        return v


def kernel_eval(kernel, t: float) -> float:
    """Evaluate a kernel at elapsed time t >= 0."""
    return kernel(t)


def l1_norm(kernel) -> float:
    """Integral of the kernel over [0, inf); +inf for a constant offset."""
    if isinstance(kernel, ExpKernel):
        if kernel.delta > 0:
            return math.inf
        return kernel.alpha / kernel.beta
    if kernel.l1 is not None:
        return kernel.l1
    value, _ = quad(kernel.func, 0, math.inf, limit=200)
    return value


@dataclass(frozen=True)
class KernelBank:
    """Baseline rates and excitation kernels of the three processes.

    ``birth_kernels[j][i]`` is the effect of a type-(j+1) event on the
    intensity of process i+1, for i, j in {0, 1}.  When both kernels
    targeting intensity i are exponential they must share the decay rate,
    which is what makes the exponential system Markov.
    """

    base_rates: tuple[float, float, float]
    birth_kernels: tuple[tuple[object, object], tuple[object, object]]
    death_kernel: object

    def __post_init__(self):
        if len(self.base_rates) != 3 or any(r <= 0 for r in self.base_rates):
            raise ValueError(f"base rates must be three positive numbers, got {self.base_rates}")
        for i in range(2):
            k1, k2 = self.birth_kernels[0][i], self.birth_kernels[1][i]
            if isinstance(k1, ExpKernel) and isinstance(k2, ExpKernel):
                if k1.beta != k2.beta:
                    raise ValueError(
                        f"exponential kernels targeting intensity {i + 1} must share "
                        f"their decay rate, got {k1.beta} and {k2.beta}"
                    )

    @classmethod
    def exponential(cls, base_rates, alphas, betas, death_alpha, death_beta,
                    deltas=None, death_delta=0.0) -> "KernelBank":
        """Build an all-exponential bank.

        ``alphas[j][i]`` is the jump of intensity i+1 at a type-(j+1)
        event; ``betas[i]`` is the decay rate attached to intensity i+1.
        """
        if deltas is None:
            deltas = ((0.0, 0.0), (0.0, 0.0))
        bk = tuple(
            tuple(ExpKernel(alphas[j][i], betas[i], deltas[j][i]) for i in range(2))
            for j in range(2)
        )
        return cls(tuple(base_rates), bk, ExpKernel(death_alpha, death_beta, death_delta))

    @classmethod
    def poisson(cls, base_rates) -> "KernelBank":
        """Bank with all excitation switched off (three Poisson processes)."""
        return cls.exponential(base_rates, ((0.0, 0.0), (0.0, 0.0)), (1.0, 1.0), 0.0, 1.0)

    def all_exponential(self) -> bool:
        return isinstance(self.death_kernel, ExpKernel) and all(
            isinstance(self.birth_kernels[j][i], ExpKernel) for j in range(2) for i in range(2)
        )


@dataclass(frozen=True)
class AdmissibilityReport:
    """Structural checks for exact Markov simulation.

    ``exponential_shared_beta`` and ``zero_offsets`` together permit the
    exact engine; ``non_explosive`` additionally bounds the jump sizes by
    the decay rates.  Checks after a failed prerequisite are None.
    """

    exponential_shared_beta: bool
    zero_offsets: Optional[bool]
    non_explosive: Optional[bool]

    @property
    def markov(self) -> bool:
        return self.exponential_shared_beta and bool(self.zero_offsets)


def is_markov_admissible(bank: KernelBank) -> AdmissibilityReport:
    """Check the kernel structure required for the exact Markov engine."""
    if not bank.all_exponential():
        return AdmissibilityReport(False, None, None)
    kernels = [bank.birth_kernels[j][i] for j in range(2) for i in range(2)]
    kernels.append(bank.death_kernel)
    zero_offsets = all(k.delta == 0 for k in kernels)
    if not zero_offsets:
        return AdmissibilityReport(True, False, None)
    non_explosive = all(k.alpha <= k.beta for k in kernels)
    return AdmissibilityReport(True, True, non_explosive)


@dataclass(frozen=True)
class Event:
    """A marked jump time of the merged process."""

    time: float
    mark: Mark

    def __post_init__(self):
        if self.time < 0:
            raise ValueError(f"event time must be >= 0, got {self.time}")


@dataclass(frozen=True)
class EventLog:
    """Strictly ordered marked events of one realization.

    The running population size N = N1 + N2 - N3 stays non-negative at
    every prefix and the first event, if any, is a mutant birth.  A log
    continuing a path started from a nonempty state carries the starting
    counts in ``initial_counts``; the first-mark rule then does not apply.
    """

    events: tuple[Event, ...] = ()
    initial_counts: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self):
        n = self.initial_counts[0] + self.initial_counts[1] - self.initial_counts[2]
        if n < 0:
            raise ValueError(f"initial population negative for counts {self.initial_counts}")
        started_empty = self.initial_counts == (0, 0, 0)
        prev = -math.inf
        for k, ev in enumerate(self.events):
            if ev.time <= prev:
                raise ValueError(f"event times must be strictly increasing at index {k}")
            prev = ev.time
            if k == 0 and started_empty and ev.mark is not Mark.MUTANT:
                raise ValueError("first event must be a mutant birth")
            n += -1 if ev.mark is Mark.DEATH else 1
            if n < 0:
                raise ValueError(f"population size goes negative at index {k}")

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def counts(self, t: float = math.inf) -> tuple[int, int, int]:
        """(N1, N2, N3) counted over events with time <= t."""
        n = list(self.initial_counts)
        for ev in self.events:
            if ev.time > t:
                break
            n[ev.mark - 1] += 1
        return tuple(n)

    def population_size(self, t: float = math.inf) -> int:
        n1, n2, n3 = self.counts(t)
        return n1 + n2 - n3


@dataclass(frozen=True)
class IntensityState:
    """Shot-noise values, event counts and the last-synchronized time."""

    xi: tuple[float, float, float] = (0.0, 0.0, 0.0)
    counts: tuple[int, int, int] = (0, 0, 0)
    clock: float = 0.0

    def __post_init__(self):
        if any(x < 0 for x in self.xi):
            raise ValueError(f"shot noise values must be >= 0, got {self.xi}")
        if self.counts[0] + self.counts[1] - self.counts[2] < 0:
            raise ValueError(f"population size negative for counts {self.counts}")

    @property
    def population_size(self) -> int:
        return self.counts[0] + self.counts[1] - self.counts[2]


def intensities_at(bank: KernelBank, state: IntensityState) -> tuple[float, float, float]:
    """(lambda1, lambda2, gated lambda3) at the state's clock time."""
    l1 = bank.base_rates[0] + state.xi[0]
    l2 = bank.base_rates[1] + state.xi[1]
    l3 = (bank.base_rates[2] + state.xi[2]) if state.population_size > 0 else 0.0
    return (l1, l2, l3)


def propagate(state: IntensityState, dt: float, bank: KernelBank) -> IntensityState:
    """Advance the shot noise by dt with no intervening events.

    Exact for exponential kernels: each component decays at its target
    rate and drifts toward the offset-induced floor delta_ji * n_j.
    """
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    report = is_markov_admissible(bank)
    if not report.exponential_shared_beta:
        raise UnsupportedKernelError("exact propagation requires exponential kernels")
    xi = list(state.xi)
    for i in range(2):
        beta = bank.birth_kernels[0][i].beta
        decay = math.exp(-beta * dt)
        drift = sum(
            bank.birth_kernels[j][i].delta * state.counts[j] for j in range(2)
        )
        xi[i] = decay * xi[i] + (1.0 - decay) * drift
    beta3 = bank.death_kernel.beta
    decay3 = math.exp(-beta3 * dt)
    xi[2] = decay3 * xi[2] + (1.0 - decay3) * bank.death_kernel.delta * state.counts[2]
    return IntensityState(tuple(xi), state.counts, state.clock + dt)


def apply_jump(state: IntensityState, mark: Mark, bank: KernelBank) -> IntensityState:
    """Apply the instantaneous intensity jumps of one event."""
    if not bank.all_exponential():
        raise UnsupportedKernelError("jump updates require exponential kernels")
    xi = list(state.xi)
    counts = list(state.counts)
    if mark is Mark.DEATH:
        if state.population_size <= 0:
            raise ValueError("death event in an empty population")
        xi[2] += bank.death_kernel.alpha
        counts[2] += 1
    else:
        j = mark - 1
        xi[0] += bank.birth_kernels[j][0].alpha
        xi[1] += bank.birth_kernels[j][1].alpha
        counts[j] += 1
    return IntensityState(tuple(xi), tuple(counts), state.clock)


def shot_noise_from_history(bank: KernelBank, events: Sequence[Event], t: float) -> tuple[float, float, float]:
    """Shot noise at time t by direct summation over past events.

    Works for any kernel; this is the defining representation and serves
    as the reference for the recursive propagation above.
    """
    xi = [0.0, 0.0, 0.0]
    for ev in events:
        if ev.time > t:
            break
        dt = t - ev.time
        if ev.mark is Mark.DEATH:
            xi[2] += kernel_eval(bank.death_kernel, dt)
        else:
            j = ev.mark - 1
            xi[0] += kernel_eval(bank.birth_kernels[j][0], dt)
            xi[1] += kernel_eval(bank.birth_kernels[j][1], dt)
    return tuple(xi)


_KERNEL_KEYS = {"alpha", "beta", "delta"}


def _kernel_to_dict(kernel) -> dict:
    if not isinstance(kernel, ExpKernel):
        raise UnsupportedKernelError("only exponential kernels serialize to JSON")
    return {"alpha": kernel.alpha, "beta": kernel.beta, "delta": kernel.delta}


def _kernel_from_dict(d: dict) -> ExpKernel:
    unknown = set(d) - _KERNEL_KEYS
    if unknown:
        raise ValueError(f"unknown kernel keys: {sorted(unknown)}")
    return ExpKernel(float(d["alpha"]), float(d["beta"]), float(d.get("delta", 0.0)))


def bank_to_json(bank: KernelBank) -> str:
    """Serialize an all-exponential bank to its JSON document."""
    doc = {
        "base_rates": list(bank.base_rates),
        "birth_kernels": [
            [_kernel_to_dict(bank.birth_kernels[j][i]) for i in range(2)] for j in range(2)
        ],
        "death_kernel": _kernel_to_dict(bank.death_kernel),
    }
    return json.dumps(doc, indent=2)


def bank_from_json(text: str) -> KernelBank:
    """Parse the JSON bank document; unknown keys are rejected."""
    doc = json.loads(text)
    unknown = set(doc) - {"base_rates", "birth_kernels", "death_kernel"}
    if unknown:
        raise ValueError(f"unknown bank keys: {sorted(unknown)}")
    rates = doc["base_rates"]
    if len(rates) != 3:
        raise ValueError(f"base_rates must have three entries, got {len(rates)}")
    bk = doc["birth_kernels"]
    if len(bk) != 2 or any(len(row) != 2 for row in bk):
        raise ValueError("birth_kernels must be a 2x2 array of kernels")
    kernels = tuple(tuple(_kernel_from_dict(bk[j][i]) for i in range(2)) for j in range(2))
    return KernelBank(tuple(float(r) for r in rates), kernels, _kernel_from_dict(doc["death_kernel"]))
