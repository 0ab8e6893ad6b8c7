"""Event generation by thinning.

Two engines share one loop structure: the exact Markov engine propagates
the shot-noise state in closed form (admissible exponential banks only),
while the general engine recomputes intensities by direct summation over
the full event history and works for any non-increasing kernel.  Both
refresh the dominating bound at every event and every rejected
candidate; with non-increasing kernels and zero offsets the total
intensity decays between events, so the value at the last refresh is a
valid bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    Event,
    EventLog,
    ExpKernel,
    GeneralKernel,
    IntensityState,
    KernelBank,
    Mark,
    UnsupportedKernelError,
    apply_jump,
    intensities_at,
    is_markov_admissible,
    propagate,
)


@dataclass(frozen=True)
class SimConfig:
    """Run parameters shared by both engines."""

    horizon: float
    seed: int
    engine: str = "markov"
    max_events: int = 10_000_000
    record_grid: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError(f"horizon must be > 0, got {self.horizon}")
        if self.max_events <= 0:
            raise ValueError(f"max_events must be > 0, got {self.max_events}")
        if self.engine not in ("markov", "thinning"):
            raise ValueError(f"unknown engine {self.engine!r}")


@dataclass(frozen=True)
class SimPath:
    """One realization: events, final state and optional intensity samples.

    ``intensity_samples`` columns are (lambda1, lambda2, gated lambda3,
    ungated lambda3) on the recording grid; the ungated column exists so
    grid means can be compared against the analytic curves, which ignore
    the gate.
    """

    events: EventLog
    final_state: IntensityState
    zero_occupation_time: float
    capped: bool = False
    grid: Optional[np.ndarray] = None
    intensity_samples: Optional[np.ndarray] = None


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for one replication stream.

    Streams derived from the same seed are independent under any
    parallel schedule.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, stream))))


def sample_mark(lam1: float, lam2: float, lam3_gated: float, u: float) -> Mark:
    """Superposition decomposition: pick the component that rings."""
    if lam1 < 0 or lam2 < 0 or lam3_gated < 0:
        raise ValueError("rates must be non-negative")
    total = lam1 + lam2 + lam3_gated
    if total <= 0:
        raise ValueError("total rate must be positive")
    if not 0 <= u < 1:
        raise ValueError(f"u must be in [0, 1), got {u}")
    x = u * total
    if x < lam1:
        return Mark.MUTANT
    if x < lam1 + lam2:
        return Mark.CLONE
    return Mark.DEATH


def _reject_offsets(bank: KernelBank) -> None:
    kernels = [bank.birth_kernels[j][i] for j in range(2) for i in range(2)]
    kernels.append(bank.death_kernel)
    for k in kernels:
        if isinstance(k, ExpKernel) and k.delta != 0:
            raise UnsupportedKernelError("simulation rejects kernels with a constant offset")


def _run(bank: KernelBank, config: SimConfig, intensity_fn, jump_fn, state0,
         rng: np.random.Generator) -> SimPath:
    """Shared thinning loop; intensity_fn/jump_fn abstract the state model."""
    t0 = state0.clock
    horizon = t0 + config.horizon
    grid = None if config.record_grid is None else np.asarray(config.record_grid, dtype=float)
    samples = None if grid is None else np.empty((grid.size, 4))
    gi = 0
    state = state0
    fresh_start = state0.counts == (0, 0, 0)
    events: list[Event] = []
    zero_time = 0.0
    capped = False
    t = t0
    if grid is not None:
        while gi < grid.size and grid[gi] <= t:
            samples[gi] = intensity_fn(state, t)
            gi += 1
    while True:
        lam = intensity_fn(state, t)
        bound = lam[0] + lam[1] + lam[2]
        t_cand = t + rng.exponential(1.0 / bound)
        t_next = min(t_cand, horizon)
        if grid is not None:
            while gi < grid.size and grid[gi] <= t_next:
                samples[gi] = intensity_fn(state, float(grid[gi]))
                gi += 1
        if state.population_size == 0:
            zero_time += t_next - t
        if t_cand >= horizon:
            t = horizon
            break
        t = t_cand
        lam = intensity_fn(state, t)
        total = lam[0] + lam[1] + lam[2]
        if rng.random() * bound < total:
            mark = sample_mark(lam[0], lam[1], lam[2], rng.random())
            if mark is Mark.CLONE and fresh_start and not events:
                # The merged process starts with a mutant birth by
                # construction; a clone cannot open an empty population.
                mark = Mark.MUTANT
            state = jump_fn(state, mark, t)
            events.append(Event(t, mark))
            if len(events) >= config.max_events:
                capped = True
                break
    if grid is not None:
        while gi < grid.size and grid[gi] <= t:
            samples[gi] = intensity_fn(state, float(grid[gi]))
            gi += 1
    final = jump_fn(state, None, t)  # synchronize clock only
    log = EventLog(tuple(events), initial_counts=state0.counts)
    return SimPath(log, final, zero_time, capped, grid, samples)


def simulate_markov(bank: KernelBank, config: SimConfig, path_index: int = 0,
                    initial_state: Optional[IntensityState] = None,
                    rng: Optional[np.random.Generator] = None) -> SimPath:
    """Statistically exact sample via the closed-form Markov state."""
    report = is_markov_admissible(bank)
    if not report.markov:
        raise UnsupportedKernelError("markov engine requires an admissible exponential bank")
    _reject_offsets(bank)
    if rng is None:
        rng = rng_for(config.seed, path_index)
    state0 = initial_state if initial_state is not None else IntensityState()

    def intensity_fn(state: IntensityState, t: float):
        if t > state.clock:
            state = propagate(state, t - state.clock, bank)
        l1, l2, l3g = intensities_at(bank, state)
        return (l1, l2, l3g, bank.base_rates[2] + state.xi[2])

    def jump_fn(state: IntensityState, mark, t: float):
        if t > state.clock:
            state = propagate(state, t - state.clock, bank)
        if mark is not None:
            state = apply_jump(state, mark, bank)
        return state

    return _run(bank, config, intensity_fn, jump_fn, state0, rng)


def _history_sum(kernel, dts: np.ndarray) -> float:
    if isinstance(kernel, ExpKernel):
        if kernel.alpha == 0:
            return kernel.delta * dts.size
        return kernel.delta * dts.size + kernel.alpha * float(np.exp(-kernel.beta * dts).sum())
    return float(sum(kernel.func(float(d)) for d in dts))


def simulate_thinning_general(bank: KernelBank, config: SimConfig, path_index: int = 0,
                              rng: Optional[np.random.Generator] = None) -> SimPath:
    """Full-history thinning for non-increasing kernels.

    Each intensity evaluation sums the kernels over the entire history,
    O(n) per candidate.
    """
    for k in [bank.birth_kernels[j][i] for j in range(2) for i in range(2)] + [bank.death_kernel]:
        if isinstance(k, GeneralKernel) and not k.non_increasing:
            raise UnsupportedKernelError(
                "thinning requires kernels declared non-increasing"
            )
    _reject_offsets(bank)
    if rng is None:
        rng = rng_for(config.seed, path_index)

    times = {Mark.MUTANT: [], Mark.CLONE: [], Mark.DEATH: []}

    def xi_at(t: float) -> tuple[float, float, float]:
        xi = [0.0, 0.0, 0.0]
        for j, mk in enumerate((Mark.MUTANT, Mark.CLONE)):
            if times[mk]:
                dts = t - np.asarray(times[mk])
                xi[0] += _history_sum(bank.birth_kernels[j][0], dts)
                xi[1] += _history_sum(bank.birth_kernels[j][1], dts)
        if times[Mark.DEATH]:
            dts = t - np.asarray(times[Mark.DEATH])
            xi[2] += _history_sum(bank.death_kernel, dts)
        return tuple(xi)

    def intensity_fn(state: IntensityState, t: float):
        xi = xi_at(t)
        n = state.population_size
        l3 = bank.base_rates[2] + xi[2]
        return (
            bank.base_rates[0] + xi[0],
            bank.base_rates[1] + xi[1],
            l3 if n > 0 else 0.0,
            l3,
        )

    def jump_fn(state: IntensityState, mark, t: float):
        counts = list(state.counts)
        if mark is not None:
            times[mark].append(t)
            counts[mark - 1] += 1
        return IntensityState(xi_at(t), tuple(counts), t)

    return _run(bank, config, intensity_fn, jump_fn, IntensityState(), rng)


def simulate(bank: KernelBank, config: SimConfig, path_index: int = 0) -> SimPath:
    """Dispatch on the configured engine."""
    if config.engine == "markov":
        return simulate_markov(bank, config, path_index)
    return simulate_thinning_general(bank, config, path_index)


def time_rescale_residuals(path: SimPath, bank: KernelBank, i: int) -> np.ndarray:
    """Compensator increments of process i between its own events.

    Integrals are closed form between global events for zero-offset
    exponential kernels; under a correct simulation the residuals are
    i.i.d. unit exponential.
    """
    if i not in (1, 2, 3):
        raise ValueError(f"index must be 1, 2 or 3, got {i}")
    if not is_markov_admissible(bank).markov:
        raise UnsupportedKernelError("closed-form compensator requires exponential kernels")
    _reject_offsets(bank)
    lam0 = bank.base_rates[i - 1]
    beta = bank.birth_kernels[0][i - 1].beta if i < 3 else bank.death_kernel.beta
    state = IntensityState(counts=path.events.initial_counts)
    residuals = []
    acc = 0.0
    t = state.clock
    for ev in path.events:
        dt = ev.time - t
        xi = state.xi[i - 1]
        gate = 1.0 if i < 3 or state.population_size > 0 else 0.0
        acc += gate * (lam0 * dt + xi * (1.0 - math.exp(-beta * dt)) / beta)
        state = propagate(state, dt, bank)
        if ev.mark == i:
            residuals.append(acc)
            acc = 0.0
        state = apply_jump(state, ev.mark, bank)
        t = ev.time
    return np.asarray(residuals)
