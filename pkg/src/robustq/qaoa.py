"""Dense statevector QAOA for diagonal QUBO Hamiltonians.

Conventions: the cost layer is exp(-i gamma H_P) with H_P the QUBO energy of
each basis state, the mixer is exp(-i beta X) on every qubit, and the initial
state is |+>^n.  Basis index b holds variable 0 in its least significant bit.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import SizeCapError
from .qubo import QuboProblem, SampleSet, index_to_bits

QAOA_CAP = 20


@dataclass(frozen=True)
class QaoaParams:
    betas: tuple[float, ...]
    gammas: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        if len(self.betas) != len(self.gammas) or not self.betas:
            raise ValueError("betas and gammas must be nonempty and of equal length")
        if not all(np.isfinite(self.betas + self.gammas)):
            raise ValueError("angles must be finite")

    @property
    def p(self) -> int:
        return len(self.betas)


def diagonal_energies(q: QuboProblem) -> np.ndarray:
    if q.num_vars > QAOA_CAP:
        raise SizeCapError(f"{q.num_vars} qubits exceeds the simulator cap of {QAOA_CAP}")
    return q.all_energies(QAOA_CAP)


def apply_cost(psi: np.ndarray, energies: np.ndarray, gamma: float) -> np.ndarray:
    return psi * np.exp(-1j * gamma * energies)


def apply_mixer(psi: np.ndarray, num_qubits: int, beta: float) -> np.ndarray:
    c, s = np.cos(beta), -1j * np.sin(beta)
    for q in range(num_qubits):
        view = psi.reshape(-1, 2, 1 << q)
        a0 = view[:, 0, :].copy()
        a1 = view[:, 1, :]
        view[:, 0, :] = c * a0 + s * a1
        view[:, 1, :] = c * a1 + s * a0
    return psi


def qaoa_layers(q: QuboProblem, params: QaoaParams, energies: np.ndarray | None = None) -> Iterator[np.ndarray]:
    """Yield the state after each full layer (cost then mixer)."""
    n = q.num_vars
    if energies is None:
        energies = diagonal_energies(q)
    psi = np.full(1 << n, 2 ** (-n / 2), dtype=complex)
    for beta, gamma in zip(params.betas, params.gammas):
        psi = apply_mixer(apply_cost(psi, energies, gamma), n, beta)
        yield psi.copy()


def qaoa_state(q: QuboProblem, params: QaoaParams, energies: np.ndarray | None = None) -> np.ndarray:
    psi = None
    for psi in qaoa_layers(q, params, energies):
        pass
    return psi


def expectation(q: QuboProblem, params: QaoaParams, energies: np.ndarray | None = None) -> float:
    if energies is None:
        energies = diagonal_energies(q)
    psi = qaoa_state(q, params, energies)
    return float(np.sum(np.abs(psi) ** 2 * energies))


@dataclass(frozen=True)
class Landscape:
    betas: np.ndarray
    gammas: np.ndarray
    values: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["beta", "gamma", "expectation"])
        for i, b in enumerate(self.betas):
            for j, g in enumerate(self.gammas):
                writer.writerow([repr(float(b)), repr(float(g)), repr(float(self.values[i, j]))])
        return buf.getvalue()


def default_beta_grid(points: int = 32) -> np.ndarray:
    return np.linspace(0.0, np.pi, points, endpoint=False)


def default_gamma_grid(points: int = 64) -> np.ndarray:
    return np.linspace(0.0, 2 * np.pi, points, endpoint=False)


def grid_search(
    q: QuboProblem, beta_grid: Sequence[float], gamma_grid: Sequence[float], p: int = 1
) -> tuple[QaoaParams, Landscape]:
    """Single-layer grid search; ties go to the lowest (beta, gamma) grid index."""
    if p != 1:
        raise ValueError("grid search supports p = 1 only")
    betas = np.asarray(beta_grid, dtype=float)
    gammas = np.asarray(gamma_grid, dtype=float)
    if betas.size == 0 or gammas.size == 0:
        raise ValueError("grids must be nonempty")
    energies = diagonal_energies(q)
    values = np.empty((betas.size, gammas.size))
    for j, g in enumerate(gammas):
        phased = np.full(1 << q.num_vars, 2 ** (-q.num_vars / 2), dtype=complex)
        phased = apply_cost(phased, energies, g)
        for i, b in enumerate(betas):
            psi = apply_mixer(phased.copy(), q.num_vars, b)
            values[i, j] = np.sum(np.abs(psi) ** 2 * energies)
    low = values.min()
    tol = 1e-12 * max(1.0, abs(low))
    flat = int(np.flatnonzero(values.ravel() <= low + tol)[0])
    i, j = divmod(flat, gammas.size)
    best = QaoaParams((betas[i],), (gammas[j],))
    return best, Landscape(betas, gammas, values)


def qaoa_sample(
    q: QuboProblem, params: QaoaParams, shots: int, seed: int, energies: np.ndarray | None = None
) -> SampleSet:
    if shots < 0:
        raise ValueError("shots must be nonnegative")
    if shots == 0:
        return SampleSet((), q.num_vars)
    psi = qaoa_state(q, params, energies)
    probs = np.abs(psi) ** 2
    probs /= probs.sum()
    counts = np.random.default_rng(seed).multinomial(shots, probs)
    hits = np.flatnonzero(counts)
    return SampleSet.from_counts(
        q, {index_to_bits(int(k), q.num_vars): int(counts[k]) for k in hits}
    )


def normalized(q: QuboProblem, scale: float | None = None) -> tuple[QuboProblem, float]:
    """Divide by the largest absolute coefficient (or a given scale)."""
    if scale is None:
        scale = q.max_abs_coefficient() or 1.0
    return q.scaled(1.0 / scale), scale
