"""Classical sample-set producers standing in for annealing hardware.

Every sampler is callable as ``sampler(qubo, shots, seed) -> SampleSet`` so
the robust engine never depends on which one produced its candidates.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import SizeCapError
from .qubo import QuboProblem, SampleSet, index_block, index_to_bits

BOLTZMANN_CAP = 20


@dataclass(frozen=True)
class SaConfig:
    num_sweeps: int = 1000
    beta_start: float = 0.1
    beta_end: float = 10.0
    schedule: str = "geometric"
    shots: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.num_sweeps < 1:
            raise ValueError("num_sweeps must be >= 1")
        if not 0 < self.beta_start <= self.beta_end:
            raise ValueError("need 0 < beta_start <= beta_end")
        if self.schedule not in ("geometric", "linear"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.shots < 0:
            raise ValueError("shots must be nonnegative")

    def betas(self) -> np.ndarray:
        if self.schedule == "geometric":
            return np.geomspace(self.beta_start, self.beta_end, self.num_sweeps)
        return np.linspace(self.beta_start, self.beta_end, self.num_sweeps)


def shot_rng(seed: int, shot: int) -> np.random.Generator:
    """Independent stream for one shot: the seed spawned at child index ``shot``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(shot,)))


def _anneal_chunk(q: QuboProblem, cfg: SaConfig, shots: range) -> np.ndarray:
    n = q.num_vars
    betas = cfg.betas()
    lin = q.linear_vector()
    upper = q.upper_matrix()
    coupling = upper + upper.T
    x = np.empty((len(shots), n))
    uniforms = np.empty((len(shots), cfg.num_sweeps, n))
    for row, shot in enumerate(shots):
        rng = shot_rng(cfg.seed, shot)
        x[row] = rng.integers(0, 2, size=n)
        uniforms[row] = rng.random((cfg.num_sweeps, n))
    with np.errstate(over="ignore"):
        for sweep, beta in enumerate(betas):
            for i in range(n):
                field = lin[i] + x @ coupling[:, i]
                delta = (1.0 - 2.0 * x[:, i]) * field
                accept = (delta <= 0) | (uniforms[:, sweep, i] < np.exp(-beta * delta))
                x[accept, i] = 1.0 - x[accept, i]
    return x.astype(np.uint8)


def sa_sample(q: QuboProblem, cfg: SaConfig, workers: int = 1) -> SampleSet:
    """Metropolis single-flip annealing, one independent run per shot.

    Output depends only on (q, cfg): shots are split into fixed chunks whose
    results are concatenated in shot order whatever ``workers`` is.
    """
    if q.num_vars < 1:
        raise ValueError("QUBO must have at least one variable")
    if cfg.shots == 0:
        return SampleSet((), q.num_vars)
    chunk = max(1, (1 << 21) // (cfg.num_sweeps * q.num_vars))
    ranges = [range(s, min(cfg.shots, s + chunk)) for s in range(0, cfg.shots, chunk)]
    if workers > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda r: _anneal_chunk(q, cfg, r), ranges))
    else:
        parts = [_anneal_chunk(q, cfg, r) for r in ranges]
    return SampleSet.from_rows(q, np.concatenate(parts))


def boltzmann_probabilities(q: QuboProblem, temperature: float) -> np.ndarray:
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    if q.num_vars > BOLTZMANN_CAP:
        raise SizeCapError(f"{q.num_vars} variables exceeds the Gibbs cap of {BOLTZMANN_CAP}")
    energies = q.all_energies(BOLTZMANN_CAP)
    w = np.exp(-(energies - energies.min()) / temperature)
    return w / w.sum()


def boltzmann_sample(q: QuboProblem, temperature: float, shots: int, seed: int) -> SampleSet:
    """Exact Gibbs sampling via full enumeration followed by one multinomial draw."""
    p = boltzmann_probabilities(q, temperature)
    counts = np.random.default_rng(seed).multinomial(shots, p)
    hits = np.flatnonzero(counts)
    return SampleSet.from_counts(
        q, {index_to_bits(int(k), q.num_vars): int(counts[k]) for k in hits}
    )


class SaSampler:
    name = "sa"

    def __init__(self, config: SaConfig | None = None, workers: int = 1):
        self.config = config or SaConfig()
        self.workers = workers

    def __call__(self, q: QuboProblem, shots: int, seed: int) -> SampleSet:
        return sa_sample(q, replace(self.config, shots=shots, seed=seed), self.workers)


class BoltzmannSampler:
    name = "boltzmann"

    def __init__(self, temperature: float):
        self.temperature = temperature

    def __call__(self, q: QuboProblem, shots: int, seed: int) -> SampleSet:
        return boltzmann_sample(q, self.temperature, shots, seed)


class EnumerationSampler:
    """Returns every assignment once; shots and seed are ignored."""

    name = "enumeration"

    def __call__(self, q: QuboProblem, shots: int = 0, seed: int = 0) -> SampleSet:
        if q.num_vars > BOLTZMANN_CAP:
            raise SizeCapError(f"{q.num_vars} variables exceeds the cap of {BOLTZMANN_CAP}")
        return SampleSet.from_rows(q, index_block(0, 1 << q.num_vars, q.num_vars))
