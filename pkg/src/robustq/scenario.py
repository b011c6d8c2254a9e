"""Discrete uncertainty sets: generation, expectation, shot apportionment."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, UnsupportedShapeError

PROB_TOL = 1e-9


@dataclass(frozen=True)
class ScenarioSet:
    scenarios: np.ndarray
    probabilities: np.ndarray | None = None

    def __post_init__(self):
        scen = np.array(self.scenarios, dtype=float)
        if scen.ndim == 1:
            scen = scen[None, :] if scen.size else scen.reshape(0, 0)
        if scen.ndim != 2:
            raise DimensionError("scenarios must be a list of equal-length vectors")
        object.__setattr__(self, "scenarios", scen)
        if self.probabilities is not None:
            p = np.array(self.probabilities, dtype=float)
            if p.shape != (scen.shape[0],):
                raise DimensionError("one probability per scenario is required")
            _check_distribution(p)
            object.__setattr__(self, "probabilities", p)

    def __len__(self):
        return self.scenarios.shape[0]

    @property
    def num_steps(self) -> int:
        return self.scenarios.shape[1]

    def weights(self) -> np.ndarray:
        if self.probabilities is None:
            return np.full(len(self), 1.0 / len(self))
        return self.probabilities

    def with_uniform_probabilities(self) -> "ScenarioSet":
        return ScenarioSet(self.scenarios, np.full(len(self), 1.0 / len(self)))

    def to_dict(self) -> dict:
        data = {"scenarios": self.scenarios.tolist()}
        if self.probabilities is not None:
            data["probabilities"] = self.probabilities.tolist()
        return data

    @classmethod
    def from_dict(cls, data) -> "ScenarioSet":
        return cls(np.array(data["scenarios"], dtype=float), data.get("probabilities"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSet":
        return cls.from_dict(json.loads(text))


def _check_distribution(p: np.ndarray):
    if np.any(~np.isfinite(p)) or np.any(p < 0):
        raise ValueError("probabilities must be finite and nonnegative")
    if abs(p.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")


def expected_scenario(s: ScenarioSet) -> np.ndarray:
    if len(s) == 0:
        raise ValueError("expected value of an empty scenario set")
    return s.weights() @ s.scenarios


def generate_gaussian_scenarios(
    mu: Sequence[float], sigma: Sequence[float], count: int, seed: int
) -> ScenarioSet:
    """Independent Normal(mu_t, sigma_t) draws per step, clamped at zero."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if mu.shape != sigma.shape or mu.ndim != 1:
        raise DimensionError("mu and sigma must be vectors of equal length")
    if count < 1:
        raise ValueError("count must be >= 1")
    if np.any(sigma < 0):
        raise ValueError("sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    draws = rng.normal(mu, sigma, size=(count, mu.size))
    return ScenarioSet(np.maximum(draws, 0.0), np.full(count, 1.0 / count))


def allocate_shots(probs: Sequence[float], total: int) -> list[int]:
    """Largest-remainder apportionment of ``total`` shots; ties go to the lower index."""
    p = np.asarray(probs, dtype=float)
    _check_distribution(p)
    if total < 0:
        raise ValueError("total must be nonnegative")
    quotas = p * total
    counts = np.floor(quotas).astype(int)
    remaining = total - int(counts.sum())
    frac = quotas - counts
    order = sorted(range(len(p)), key=lambda k: (-frac[k], k))
    for k in order[:remaining]:
        counts[k] += 1
    return [int(c) for c in counts]


@dataclass(frozen=True)
class Histogram2D:
    x_edges: np.ndarray
    y_edges: np.ndarray
    counts: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["bin_x_lo", "bin_y_lo", "count"])
        for a in range(self.counts.shape[0]):
            for b in range(self.counts.shape[1]):
                writer.writerow(
                    [repr(float(self.x_edges[a])), repr(float(self.y_edges[b])), int(self.counts[a, b])]
                )
        return buf.getvalue()


def histogram_3d(s: ScenarioSet, bins_per_axis: int) -> Histogram2D:
    """Counts of two-step scenarios on an equal-width grid spanning their range."""
    if s.num_steps != 2:
        raise UnsupportedShapeError(f"histogram needs 2-step scenarios, got {s.num_steps}")
    if bins_per_axis < 1:
        raise ValueError("bins_per_axis must be >= 1")
    counts, xe, ye = np.histogram2d(s.scenarios[:, 0], s.scenarios[:, 1], bins=bins_per_axis)
    return Histogram2D(xe, ye, counts.astype(int))
