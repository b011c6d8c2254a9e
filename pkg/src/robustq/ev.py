"""EV fleet charging against uncertain PV supply.

The per-step cost is the squared gap between charging power ``j_t`` and PV
supply ``E_t``.  Taking expectations gives

    E[(j_t - E_t)**2] = j_t**2 - C_t j_t + D_t,   C_t = 2 E[E_t],  D_t = E[E_t**2]

so the expected-value problem is a QUBO of the same shape as a single
scenario.  Charging power is integer and log-encoded as
``j_t = j_min_t + sum_k 2**k bit_{t,k}``; the total window
``e_min <= sum_t j_t <= e_max`` uses one slack register.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError
from .objective import ScenarioObjective
from .qubo import QuboBuilder, QuboProblem, penalty_linear_eq


@dataclass(frozen=True)
class EvInstance:
    num_steps: int
    j_min: tuple[int, ...]
    j_max: tuple[int, ...]
    e_min: float
    e_max: float
    bits: tuple[int, ...]
    pv_kind: str = "gaussian"
    mu: tuple[float, ...] | None = None
    sigma: tuple[float, ...] | None = None
    lo: tuple[float, ...] | None = None
    hi: tuple[float, ...] | None = None

    def __post_init__(self):
        T = self.num_steps
        for name in ("j_min", "j_max", "bits", "mu", "sigma", "lo", "hi"):
            val = getattr(self, name)
            if val is None:
                continue
            val = tuple(val)
            object.__setattr__(self, name, val)
            if len(val) != T:
                raise DimensionError(f"{name} has length {len(val)}, expected {T}")
        if self.pv_kind not in ("gaussian", "uniform"):
            raise ValueError(f"unknown pv kind {self.pv_kind!r}")
        if self.e_min > self.e_max:
            raise ValueError("e_min must not exceed e_max")
        for t in range(T):
            if not 0 <= self.j_min[t] <= self.j_max[t]:
                raise ValueError(f"step {t}: need 0 <= j_min <= j_max")
            if self.j_max[t] > self.j_min[t] + 2 ** self.bits[t] - 1:
                raise ValueError(f"step {t}: {self.bits[t]} bits cannot reach j_max")
        if self.sigma is not None and any(s < 0 for s in self.sigma):
            raise ValueError("sigma must be nonnegative")
        if self.lo is not None and self.hi is not None:
            if any(a > b for a, b in zip(self.lo, self.hi)):
                raise ValueError("pv lo must not exceed hi")

    @property
    def pv_mean(self) -> tuple[float, ...]:
        if self.pv_kind == "uniform":
            return tuple((a + b) / 2 for a, b in zip(self.lo, self.hi))
        return self.mu

    @property
    def pv_std(self) -> tuple[float, ...]:
        if self.pv_kind == "uniform":
            return tuple((b - a) / math.sqrt(12) for a, b in zip(self.lo, self.hi))
        return self.sigma

    def to_dict(self) -> dict:
        pv = {"kind": self.pv_kind}
        for key in ("mu", "sigma", "lo", "hi"):
            if getattr(self, key) is not None:
                pv[key] = list(getattr(self, key))
        return {
            "num_steps": self.num_steps,
            "pv": pv,
            "j_min": list(self.j_min),
            "j_max": list(self.j_max),
            "e_min": self.e_min,
            "e_max": self.e_max,
            "bits": list(self.bits),
        }

    @classmethod
    def from_dict(cls, data) -> "EvInstance":
        pv = data["pv"]

        def opt(key):
            return tuple(float(v) for v in pv[key]) if key in pv else None

        return cls(
            num_steps=int(data["num_steps"]),
            j_min=tuple(int(v) for v in data["j_min"]),
            j_max=tuple(int(v) for v in data["j_max"]),
            e_min=float(data["e_min"]),
            e_max=float(data["e_max"]),
            bits=tuple(int(v) for v in data["bits"]),
            pv_kind=pv.get("kind", "gaussian"),
            mu=opt("mu"),
            sigma=opt("sigma"),
            lo=opt("lo"),
            hi=opt("hi"),
        )

    @classmethod
    def from_json(cls, text: str) -> "EvInstance":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class EvCoefficients:
    C: tuple[float, ...]
    D: tuple[float, ...]


@dataclass(frozen=True)
class EvLayout:
    j_bits: tuple[tuple[int, ...], ...]
    j_min: tuple[int, ...]
    slack_bits: tuple[int, ...] = ()
    slack_coeffs: tuple[int, ...] = ()
    window: bool = False
    lambda_total: float = 0.0

    @property
    def num_vars(self) -> int:
        return sum(len(b) for b in self.j_bits) + len(self.slack_bits)


def ev_coefficients(inst: EvInstance) -> EvCoefficients:
    if inst.pv_kind == "uniform":
        if inst.lo is None or inst.hi is None:
            raise ValueError("uniform PV needs lo and hi")
        mean = [(a + b) / 2 for a, b in zip(inst.lo, inst.hi)]
        var = [(b - a) ** 2 / 12 for a, b in zip(inst.lo, inst.hi)]
    else:
        if inst.mu is None or inst.sigma is None:
            raise ValueError("gaussian PV needs mu and sigma")
        mean = list(inst.mu)
        var = [s * s for s in inst.sigma]
    return EvCoefficients(tuple(2 * m for m in mean), tuple(m * m + v for m, v in zip(mean, var)))


def default_lambda_total(inst: EvInstance) -> float:
    mean, std = inst.pv_mean, inst.pv_std
    if inst.pv_kind == "uniform":
        top = inst.hi
    else:
        top = [m + 3 * s for m, s in zip(mean, std)]
    return 1.0 + sum(max(jm, h) ** 2 for jm, h in zip(inst.j_max, top))


def _bounded_coeffs(span: int) -> tuple[int, ...]:
    """Binary coefficients whose subset sums cover exactly 0..span."""
    if span <= 0:
        return ()
    m = span.bit_length()
    coeffs = [2**k for k in range(m - 1)]
    coeffs.append(span - (2 ** (m - 1) - 1))
    return tuple(coeffs)


def window_binds(inst: EvInstance) -> bool:
    top = sum(jm + 2**b - 1 for jm, b in zip(inst.j_min, inst.bits))
    return sum(inst.j_min) < inst.e_min or top > inst.e_max


def encode_ev(
    inst: EvInstance,
    supply: Sequence[float] | None = None,
    lambda_total: float | None = None,
) -> tuple[QuboProblem, EvLayout]:
    """QUBO for the expected-value objective (``supply=None``) or one scenario."""
    T = inst.num_steps
    if supply is None:
        coeffs = ev_coefficients(inst)
        C, D = coeffs.C, coeffs.D
    else:
        supply = [float(v) for v in supply]
        if len(supply) != T:
            raise DimensionError(f"supply has length {len(supply)}, expected {T}")
        C = tuple(2 * e for e in supply)
        D = tuple(e * e for e in supply)
    if sum(inst.j_min) > inst.e_max or sum(inst.j_max) < inst.e_min:
        raise ValueError("charging bounds cannot meet the total energy window")
    if lambda_total is None:
        lambda_total = default_lambda_total(inst)
    if not lambda_total > 0:
        raise ValueError("lambda_total must be positive")

    b = QuboBuilder()
    j_bits = tuple(
        tuple(b.new_var(f"j[{t},{k}]") for k in range(inst.bits[t])) for t in range(T)
    )
    binds = window_binds(inst)
    slack_coeffs: tuple[int, ...] = ()
    slack_bits: tuple[int, ...] = ()
    if binds:
        lo = math.ceil(inst.e_min - 1e-9)
        hi = math.floor(inst.e_max + 1e-9)
        slack_coeffs = _bounded_coeffs(hi - lo)
        slack_bits = tuple(b.new_var(f"slack[{k}]") for k in range(len(slack_coeffs)))
    n = b.num_vars

    for t in range(T):
        # j**2 - C j + D = (j - C/2)**2 + D - C**2/4
        terms = {v: float(2**k) for k, v in enumerate(j_bits[t])}
        target = C[t] / 2 - inst.j_min[t]
        if terms:
            b.add(penalty_linear_eq(terms, target, 1.0, n))
        else:
            b.add_offset(target**2)
        b.add_offset(D[t] - C[t] ** 2 / 4)

    if binds:
        # (sum j - e_min - slack)**2
        terms: dict[int, float] = {}
        for t in range(T):
            for k, v in enumerate(j_bits[t]):
                terms[v] = float(2**k)
        for c, v in zip(slack_coeffs, slack_bits):
            terms[v] = -float(c)
        rhs = math.ceil(inst.e_min - 1e-9) - sum(inst.j_min)
        b.add(penalty_linear_eq(terms, rhs, lambda_total, n))

    layout = EvLayout(j_bits, tuple(inst.j_min), slack_bits, slack_coeffs, binds, float(lambda_total))
    return b.build(), layout


def decode_ev_array(layout: EvLayout, bits: np.ndarray) -> np.ndarray:
    """(m, n) bit matrix -> (m, T) integer charging powers."""
    bits = np.asarray(bits)
    if bits.ndim != 2 or bits.shape[1] != layout.num_vars:
        raise DimensionError(f"expected {layout.num_vars} columns, got shape {bits.shape}")
    out = np.empty((bits.shape[0], len(layout.j_bits)), dtype=np.int64)
    for t, idx in enumerate(layout.j_bits):
        weights = 2 ** np.arange(len(idx), dtype=np.int64)
        out[:, t] = layout.j_min[t] + bits[:, list(idx)].astype(np.int64) @ weights
    return out


def decode_ev(layout: EvLayout, x: Sequence[int]) -> tuple[int, ...]:
    if len(x) != layout.num_vars:
        raise DimensionError(f"bitstring of length {len(x)} for {layout.num_vars} variables")
    return tuple(int(v) for v in decode_ev_array(layout, np.asarray([x]))[0])


def slack_value(layout: EvLayout, bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits)
    if not layout.slack_bits:
        return np.zeros(bits.shape[0], dtype=np.int64)
    return bits[:, list(layout.slack_bits)].astype(np.int64) @ np.array(layout.slack_coeffs)


def ev_cost(j: Sequence[float], supply: Sequence[float]) -> float:
    if len(j) != len(supply):
        raise DimensionError(f"schedule of length {len(j)} vs supply of length {len(supply)}")
    return float(sum((float(a) - float(e)) ** 2 for a, e in zip(j, supply)))


class EvObjective(ScenarioObjective):
    """f(x, pv) = sum_t (j_t - pv_t)**2 on decoded schedules.

    A bitstring is feasible when its schedule respects the per-step and total
    bounds and, if a slack register exists, the slack matches the schedule so
    the window penalty is exactly zero.
    """

    def __init__(self, inst: EvInstance, layout: EvLayout):
        self.inst = inst
        self.layout = layout
        self.num_vars = layout.num_vars

    def values(self, bits, scenarios):
        j = decode_ev_array(self.layout, bits).astype(float)
        scen = np.asarray(scenarios, dtype=float)
        return np.sum((j[:, None, :] - scen[None, :, :]) ** 2, axis=2)

    def feasible_mask(self, bits):
        j = decode_ev_array(self.layout, bits)
        ok = np.all(j >= np.array(self.inst.j_min), axis=1)
        ok &= np.all(j <= np.array(self.inst.j_max), axis=1)
        total = j.sum(axis=1)
        ok &= (total >= self.inst.e_min - 1e-9) & (total <= self.inst.e_max + 1e-9)
        if self.layout.window:
            lo = math.ceil(self.inst.e_min - 1e-9)
            ok &= total - lo == slack_value(self.layout, bits)
        return ok
