"""Unit commitment: instance model, QUBO encoding, decoding and feasibility.

Time steps and units are 0-based.  The state before the horizon is "all units
off", and minimum up/down windows are truncated at the horizon end.

Generation of an online unit is log-encoded on the lattice
``mingen + step * m`` with ``m`` in ``0 .. 2**d - 1`` where
``d = floor(log2((maxgen - mingen) / step)) + 1``.  The lattice may overshoot
``maxgen``; such schedules decode as-is and are rejected by the feasibility
check.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DimensionError
from .objective import ScenarioObjective, check_feasible_set_size
from .qubo import QuboBuilder, QuboProblem, penalty_and_gadget, penalty_linear_eq

POWER_TOL = 1e-9


@dataclass(frozen=True)
class UcpUnit:
    varcost: float
    startcost: float
    mingen: float
    maxgen: float
    minup: int = 1
    mindown: int = 1
    step: float = 1.0

    @property
    def num_bits(self) -> int:
        if self.maxgen <= self.mingen:
            return 0
        ratio = (self.maxgen - self.mingen) / self.step
        return max(0, math.floor(math.log2(ratio) + 1e-12) + 1)


@dataclass(frozen=True)
class UcpInstance:
    units: tuple[UcpUnit, ...]
    num_steps: int

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(self.units))
        if self.num_steps < 1:
            raise ValueError("num_steps must be >= 1")
        for k, u in enumerate(self.units):
            if not 0 <= u.mingen <= u.maxgen:
                raise ValueError(f"unit {k}: need 0 <= mingen <= maxgen")
            if not u.step > 0:
                raise ValueError(f"unit {k}: step must be positive")
            if not (1 <= u.minup <= self.num_steps and 1 <= u.mindown <= self.num_steps):
                raise ValueError(f"unit {k}: minup/mindown must lie in 1..num_steps")
            if u.varcost < 0 or u.startcost < 0:
                raise ValueError(f"unit {k}: costs must be nonnegative")

    @property
    def num_units(self) -> int:
        return len(self.units)

    def to_dict(self) -> dict:
        return {
            "units": [
                {
                    "varcost": u.varcost,
                    "startcost": u.startcost,
                    "mingen": u.mingen,
                    "maxgen": u.maxgen,
                    "minup": u.minup,
                    "mindown": u.mindown,
                    "step": u.step,
                }
                for u in self.units
            ],
            "num_steps": self.num_steps,
        }

    @classmethod
    def from_dict(cls, data) -> "UcpInstance":
        units = tuple(
            UcpUnit(
                varcost=float(u["varcost"]),
                startcost=float(u["startcost"]),
                mingen=float(u["mingen"]),
                maxgen=float(u["maxgen"]),
                minup=int(u.get("minup", 1)),
                mindown=int(u.get("mindown", 1)),
                step=float(u.get("step", 1.0)),
            )
            for u in data["units"]
        )
        return cls(units, int(data["num_steps"]))

    @classmethod
    def from_json(cls, text: str) -> "UcpInstance":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class UcpWeights:
    demand: float = 1.0
    link: float | None = None
    start: float | None = None
    minup: float | None = None
    mindown: float | None = None

    def resolved(self, inst: UcpInstance) -> "UcpWeights":
        """Fill unset logic weights with a bound on the total deterministic cost."""
        bound = 1.0 + sum(
            u.startcost + inst.num_steps * u.varcost * u.maxgen for u in inst.units
        )
        w = UcpWeights(
            self.demand,
            bound if self.link is None else self.link,
            bound if self.start is None else self.start,
            bound if self.minup is None else self.minup,
            bound if self.mindown is None else self.mindown,
        )
        for name in ("demand", "link", "start", "minup", "mindown"):
            if not getattr(w, name) > 0:
                raise ValueError(f"penalty weight {name!r} must be positive")
        return w


@dataclass(frozen=True)
class UcpEncoding:
    """Variable layout of an encoded instance plus its QUBO parts.

    ``parts`` maps "cost", "demand", "link", "start", "minup" and "mindown"
    to fragments over the full variable range; their sum is the QUBO.
    """

    on: np.ndarray
    start: np.ndarray
    gen: tuple[np.ndarray, ...]
    num_bits: tuple[int, ...]
    weights: UcpWeights
    parts: dict = field(default_factory=dict)

    @property
    def num_vars(self) -> int:
        return int(self.on.size + self.start.size + sum(g.size for g in self.gen))

    def logic_penalty(self) -> QuboProblem:
        b = QuboBuilder(self.num_vars)
        for name in ("link", "start", "minup", "mindown"):
            b.add(self.parts[name])
        return b.build()


@dataclass(frozen=True)
class UcpSchedule:
    on: np.ndarray
    start: np.ndarray
    power: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "unit", "on", "start", "power"])
        T, N = self.on.shape
        for t in range(T):
            for i in range(N):
                writer.writerow(
                    [t, i, int(self.on[t, i]), int(self.start[t, i]), repr(float(self.power[t, i]))]
                )
        return buf.getvalue()

    def __eq__(self, other):
        if not isinstance(other, UcpSchedule):
            return NotImplemented
        return (
            np.array_equal(self.on, other.on)
            and np.array_equal(self.start, other.start)
            and np.array_equal(self.power, other.power)
        )


class Violation(NamedTuple):
    kind: str
    t: int
    unit: int


def _layout(inst: UcpInstance):
    T, N = inst.num_steps, inst.num_units
    b = QuboBuilder()
    on = np.array([[b.new_var(f"on[{t},{i}]") for i in range(N)] for t in range(T)], dtype=int)
    start = np.array(
        [[b.new_var(f"start[{t},{i}]") for i in range(N)] for t in range(T)], dtype=int
    )
    gen = []
    for i, u in enumerate(inst.units):
        d = u.num_bits
        gen.append(
            np.array(
                [[b.new_var(f"gen[{t},{i},{k}]") for k in range(d)] for t in range(T)],
                dtype=int,
            ).reshape(T, d)
        )
    return b, on, start, tuple(gen)


def _power_terms(inst: UcpInstance, on, gen, t: int, i: int) -> dict[int, float]:
    u = inst.units[i]
    terms = {int(on[t, i]): u.mingen}
    for k in range(gen[i].shape[1]):
        terms[int(gen[i][t, k])] = u.step * 2**k
    return terms


def encode_ucp(
    inst: UcpInstance, demand: Sequence[float], weights: UcpWeights | None = None
) -> tuple[QuboProblem, UcpEncoding]:
    """Deterministic UCP for one demand vector as a QUBO.

    Energy = production + start cost, plus the squared demand mismatch, plus
    logic penalties (gen bits only while on, start logic, minimum up and
    down times) that vanish on every schedule satisfying the unit logic.
    """
    T, N = inst.num_steps, inst.num_units
    demand = [float(v) for v in demand]
    if len(demand) != T:
        raise DimensionError(f"demand has length {len(demand)}, expected {T}")
    w = (weights or UcpWeights()).resolved(inst)
    builder, on, start, gen = _layout(inst)
    n = builder.num_vars

    cost = QuboBuilder(n)
    for t in range(T):
        for i, u in enumerate(inst.units):
            for var, c in _power_terms(inst, on, gen, t, i).items():
                cost.add_linear(var, u.varcost * c)
            cost.add_linear(int(start[t, i]), u.startcost)

    demand_part = QuboBuilder(n)
    for t in range(T):
        coeffs = {}
        for i in range(N):
            coeffs.update(_power_terms(inst, on, gen, t, i))
        demand_part.add(penalty_linear_eq(coeffs, demand[t], w.demand, n))

    link = QuboBuilder(n)
    for i in range(N):
        for t in range(T):
            for k in range(gen[i].shape[1]):
                g, o = int(gen[i][t, k]), int(on[t, i])
                link.add_linear(g, w.link)
                link.add_quadratic(g, o, -w.link)

    start_part = QuboBuilder(n)
    for i in range(N):
        for t in range(T):
            x, z = int(on[t, i]), int(start[t, i])
            if t == 0:
                # on before the horizon is 0, so start = on: weight * (z - x)**2
                start_part.add(penalty_linear_eq({x: 1.0, z: -1.0}, 0.0, w.start, n))
            else:
                start_part.add(penalty_and_gadget(x, int(on[t - 1, i]), z, w.start, n))

    minup = QuboBuilder(n)
    for i, u in enumerate(inst.units):
        for t in range(T):
            z = int(start[t, i])
            for tau in range(t, min(T, t + u.minup)):
                # start * (1 - on_tau)
                minup.add_linear(z, w.minup)
                minup.add_quadratic(z, int(on[tau, i]), -w.minup)

    mindown = QuboBuilder(n)
    for i, u in enumerate(inst.units):
        for t in range(T):
            z = int(start[t, i])
            for s in range(max(0, t - u.mindown), t):
                mindown.add_quadratic(z, int(on[s, i]), w.mindown)

    parts = {
        "cost": cost.build(),
        "demand": demand_part.build(),
        "link": link.build(),
        "start": start_part.build(),
        "minup": minup.build(),
        "mindown": mindown.build(),
    }
    for frag in parts.values():
        builder.add(frag)
    enc = UcpEncoding(on, start, gen, tuple(u.num_bits for u in inst.units), w, parts)
    return builder.build(), enc


def decode_arrays(enc: UcpEncoding, inst: UcpInstance, bits: np.ndarray):
    """Vectorized decode of an (m, n) bit matrix into (on, start, power), each (m, T, N)."""
    bits = np.asarray(bits)
    if bits.ndim != 2 or bits.shape[1] != enc.num_vars:
        raise DimensionError(f"expected {enc.num_vars} columns, got shape {bits.shape}")
    on = bits[:, enc.on].astype(np.int8)
    start = bits[:, enc.start].astype(np.int8)
    power = np.zeros(on.shape)
    for i, u in enumerate(inst.units):
        weights = u.step * 2.0 ** np.arange(enc.num_bits[i])
        gen_bits = bits[:, enc.gen[i]].astype(float)
        power[:, :, i] = u.mingen * on[:, :, i] + gen_bits @ weights
    return on, start, power


def decode_ucp(enc: UcpEncoding, inst: UcpInstance, x: Sequence[int]) -> UcpSchedule:
    if len(x) != enc.num_vars:
        raise DimensionError(f"bitstring of length {len(x)} for {enc.num_vars} variables")
    on, start, power = decode_arrays(enc, inst, np.asarray([x], dtype=np.uint8))
    return UcpSchedule(on[0], start[0], power[0])


def encode_schedule(enc: UcpEncoding, inst: UcpInstance, s: UcpSchedule) -> tuple[int, ...]:
    """Bitstring of a schedule whose power lies on the encoding lattice."""
    x = [0] * enc.num_vars
    T, N = s.on.shape
    for t in range(T):
        for i, u in enumerate(inst.units):
            x[enc.on[t, i]] = int(s.on[t, i])
            x[enc.start[t, i]] = int(s.start[t, i])
            if s.on[t, i]:
                m = round((s.power[t, i] - u.mingen) / u.step)
                for k in range(enc.num_bits[i]):
                    x[enc.gen[i][t, k]] = (m >> k) & 1
    return tuple(x)


def check_feasible(inst: UcpInstance, s: UcpSchedule) -> list[Violation]:
    """Unit-logic violations of a schedule; demand is deliberately not checked.

    Minimum-up violations are reported at the step the unit should have been
    on; minimum-down violations at the offending start.
    """
    T, N = inst.num_steps, inst.num_units
    if s.on.shape != (T, N) or s.start.shape != (T, N) or s.power.shape != (T, N):
        raise DimensionError(f"schedule arrays must have shape {(T, N)}")
    out = []
    for i, u in enumerate(inst.units):
        on = [int(v) for v in s.on[:, i]]
        st = [int(v) for v in s.start[:, i]]
        for t in range(T):
            prev = on[t - 1] if t > 0 else 0
            if st[t] != on[t] * (1 - prev):
                out.append(Violation("start", t, i))
        for t in range(T):
            if not st[t]:
                continue
            for tau in range(t, min(T, t + u.minup)):
                if not on[tau]:
                    out.append(Violation("minup", tau, i))
                    break
            if any(on[s_] for s_ in range(max(0, t - u.mindown), t)):
                out.append(Violation("mindown", t, i))
        for t in range(T):
            p = float(s.power[t, i])
            if not on[t]:
                if abs(p) > POWER_TOL:
                    out.append(Violation("power_off", t, i))
                continue
            if p < u.mingen - POWER_TOL or p > u.maxgen + POWER_TOL:
                out.append(Violation("power_bounds", t, i))
            elif abs((p - u.mingen) / u.step - round((p - u.mingen) / u.step)) > 1e-9:
                out.append(Violation("power_grid", t, i))
    return out


def feasible_mask_arrays(inst: UcpInstance, on, start, power) -> np.ndarray:
    """Vectorized counterpart of :func:`check_feasible` for (m, T, N) arrays."""
    m = on.shape[0]
    T = inst.num_steps
    ok = np.ones(m, dtype=bool)
    prev = np.concatenate([np.zeros_like(on[:, :1]), on[:, :-1]], axis=1)
    ok &= np.all(start == on * (1 - prev), axis=(1, 2))
    for i, u in enumerate(inst.units):
        for t in range(T):
            st = start[:, t, i] == 1
            window_up = on[:, t:min(T, t + u.minup), i]
            ok &= ~st | np.all(window_up == 1, axis=1)
            lo = max(0, t - u.mindown)
            if lo < t:
                ok &= ~st | np.all(on[:, lo:t, i] == 0, axis=1)
        p = power[:, :, i]
        is_on = on[:, :, i] == 1
        ok &= np.all(is_on | (np.abs(p) <= POWER_TOL), axis=1)
        in_bounds = (p >= u.mingen - POWER_TOL) & (p <= u.maxgen + POWER_TOL)
        ok &= np.all(~is_on | in_bounds, axis=1)
    return ok


def ucp_objective(
    inst: UcpInstance, s: UcpSchedule, demand: Sequence[float], lambda_demand: float = 1.0
) -> tuple[float, float]:
    """(deterministic cost, demand-mismatch penalty) of a schedule."""
    T, N = inst.num_steps, inst.num_units
    if len(demand) != T or s.power.shape != (T, N):
        raise DimensionError("schedule/demand shape mismatch")
    det = 0.0
    for t in range(T):
        for i, u in enumerate(inst.units):
            det += u.varcost * float(s.power[t, i]) + u.startcost * int(s.start[t, i])
    mismatch = lambda_demand * sum(
        (float(np.sum(s.power[t])) - float(demand[t])) ** 2 for t in range(T)
    )
    return det, mismatch


class UcpObjective(ScenarioObjective):
    """f(x, rd) = deterministic cost + lambda_demand * squared demand mismatch.

    Feasibility covers only the unit logic (start, minimum up/down, power
    bounds); demand satisfaction lives in the objective.
    """

    def __init__(self, inst: UcpInstance, enc: UcpEncoding):
        self.inst = inst
        self.enc = enc
        self.num_vars = enc.num_vars
        self.lambda_demand = enc.weights.demand

    def decompose(self, bits, scenarios):
        on, start, power = decode_arrays(self.enc, self.inst, bits)
        varcost = np.array([u.varcost for u in self.inst.units])
        startcost = np.array([u.startcost for u in self.inst.units])
        det = np.einsum("mtn,n->m", power, varcost) + np.einsum("mtn,n->m", start, startcost)
        supplied = power.sum(axis=2)
        scen = np.asarray(scenarios, dtype=float)
        diff = supplied[:, None, :] - scen[None, :, :]
        mismatch = self.lambda_demand * np.sum(diff**2, axis=2)
        return det, mismatch

    def values(self, bits, scenarios):
        det, mismatch = self.decompose(bits, scenarios)
        return det[:, None] + mismatch

    def feasible_mask(self, bits):
        return feasible_mask_arrays(self.inst, *decode_arrays(self.enc, self.inst, bits))

    def feasible_set(self, cap=None) -> np.ndarray:
        """Structured enumeration: feasible on-patterns per unit times gen settings."""
        inst, enc = self.inst, self.enc
        T = inst.num_steps
        n = enc.num_vars
        full = np.zeros((1, n), dtype=np.uint8)
        for i, u in enumerate(inst.units):
            rows = []
            levels = [
                m for m in range(2 ** enc.num_bits[i])
                if u.mingen + u.step * m <= u.maxgen + POWER_TOL
            ]
            for pattern in itertools.product((0, 1), repeat=T):
                starts = [pattern[t] * (1 - (pattern[t - 1] if t else 0)) for t in range(T)]
                sched_on = np.array(pattern)
                if not _unit_logic_ok(u, sched_on, starts):
                    continue
                on_steps = [t for t in range(T) if pattern[t]]
                for choice in itertools.product(levels, repeat=len(on_steps)):
                    row = np.zeros(n, dtype=np.uint8)
                    for t in range(T):
                        row[enc.on[t, i]] = pattern[t]
                        row[enc.start[t, i]] = starts[t]
                    for t, m in zip(on_steps, choice):
                        for k in range(enc.num_bits[i]):
                            row[enc.gen[i][t, k]] = (m >> k) & 1
                    rows.append(row)
            unit_rows = np.array(rows, dtype=np.uint8)
            check_feasible_set_size(len(full) * len(unit_rows))
            full = (full[:, None, :] + unit_rows[None, :, :]).reshape(-1, n)
        return full


def _unit_logic_ok(u: UcpUnit, on, starts) -> bool:
    T = len(on)
    for t in range(T):
        if not starts[t]:
            continue
        if not all(on[tau] for tau in range(t, min(T, t + u.minup))):
            return False
        if any(on[s] for s in range(max(0, t - u.mindown), t)):
            return False
    return True
