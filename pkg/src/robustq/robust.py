"""Robustness measures and the two sample-harvesting pipelines.

Both pipelines produce a pool of candidate bitstrings from a (simulated)
quantum sampler, evaluate every candidate against every scenario and pick the
candidate that minimizes either the worst-case value or the worst-case regret.
Ties always go to the lexicographically smallest bitstring.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, EmptyHarvestError, InfeasibleError
from .objective import ScenarioObjective
from .qaoa import (
    Landscape,
    QaoaParams,
    default_beta_grid,
    default_gamma_grid,
    diagonal_energies,
    grid_search,
    normalized,
    qaoa_sample,
)
from .qubo import ENERGY_TOL, Bitstring, QuboProblem, SampleSet, bitstring_str, parse_bitstring
from .scenario import ScenarioSet, allocate_shots, expected_scenario

MEASURES = ("worst_case", "regret")


def worst_case_value(values: Sequence[float]) -> float:
    return float(max(values))


def regret_value(values: Sequence[float], f_star: Sequence[float]) -> float:
    if len(values) != len(f_star):
        raise DimensionError(f"{len(values)} values vs {len(f_star)} scenario optima")
    return float(max(v - f for v, f in zip(values, f_star)))


def _check_measure(measure: str):
    if measure not in MEASURES:
        raise ValueError(f"measure must be one of {MEASURES}, got {measure!r}")


def _feasible_values(obj: ScenarioObjective, scenarios: ScenarioSet):
    feasible = obj.feasible_set()
    if len(feasible) == 0:
        raise InfeasibleError("scenario 0 has an empty feasible set")
    return feasible, obj.values(feasible, scenarios.scenarios)


def _argmin_lex(scores: np.ndarray, bits: np.ndarray) -> int:
    low = scores.min()
    tied = np.flatnonzero(scores <= low + ENERGY_TOL)
    return int(min(tied, key=lambda r: tuple(bits[r])))


def scenario_optima(obj: ScenarioObjective, scenarios: ScenarioSet) -> np.ndarray:
    """Exact f*(xi_k) = min over the feasible set, by enumeration."""
    _, values = _feasible_values(obj, scenarios)
    return values.min(axis=0)


@dataclass(frozen=True)
class RobustOptimum:
    bitstring: Bitstring
    value: float
    f_star: np.ndarray


def robust_optimum(
    obj: ScenarioObjective, scenarios: ScenarioSet, measure: str = "regret"
) -> RobustOptimum:
    """Exact min-max (worst-case or regret) optimum over the feasible set."""
    _check_measure(measure)
    feasible, values = _feasible_values(obj, scenarios)
    f_star = values.min(axis=0)
    if measure == "regret":
        scores = np.max(values - f_star[None, :], axis=1)
    else:
        scores = np.max(values, axis=1)
    r = _argmin_lex(scores, feasible)
    return RobustOptimum(tuple(int(v) for v in feasible[r]), float(scores[r]), f_star)


@dataclass(frozen=True)
class Candidate:
    bitstring: Bitstring
    feasible: bool
    values: tuple[float, ...]
    worst_case: float
    regret: float
    det_cost: float | None = None
    mismatch_regret: float | None = None
    provenance: str = ""

    def measure(self, name: str) -> float:
        _check_measure(name)
        return self.worst_case if name == "worst_case" else self.regret


def _fmt(v):
    return "" if v is None else repr(float(v))


def _parse(v):
    return None if v == "" else float(v)


@dataclass(frozen=True)
class RobustnessReport:
    """All pooled candidates, sorted by bitstring, with their robustness values.

    ``mismatch_regret`` is the worst-case demand-mismatch penalty over the
    scenarios; it and ``det_cost`` are only filled for objectives that split
    into a deterministic and a demand-dependent part.
    """

    candidates: tuple[Candidate, ...]
    f_star: tuple[float, ...]
    measure: str = "regret"

    def feasible(self) -> list[Candidate]:
        return [c for c in self.candidates if c.feasible]

    def best(self) -> Candidate:
        pool = self.feasible()
        if not pool:
            raise EmptyHarvestError("no feasible candidate in the report", self)
        low = min(c.measure(self.measure) for c in pool)
        tied = [c for c in pool if c.measure(self.measure) <= low + ENERGY_TOL]
        return min(tied, key=lambda c: c.bitstring)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        k = len(self.f_star)
        writer.writerow(
            ["bitstring", "feasible", "det_cost", "mismatch_regret", "worst_case", "regret", "provenance"]
            + [f"f_{i}" for i in range(k)]
        )
        for c in self.candidates:
            writer.writerow(
                [
                    bitstring_str(c.bitstring),
                    int(c.feasible),
                    _fmt(c.det_cost),
                    _fmt(c.mismatch_regret),
                    repr(c.worst_case),
                    repr(c.regret),
                    c.provenance,
                ]
                + [repr(v) for v in c.values]
            )
        return buf.getvalue()

    @staticmethod
    def rows_from_csv(text: str) -> list[Candidate]:
        rows = []
        for r in csv.DictReader(io.StringIO(text)):
            fcols = sorted((k for k in r if k.startswith("f_")), key=lambda k: int(k[2:]))
            rows.append(
                Candidate(
                    bitstring=parse_bitstring(r["bitstring"]),
                    feasible=r["feasible"] == "1",
                    values=tuple(float(r[k]) for k in fcols),
                    worst_case=float(r["worst_case"]),
                    regret=float(r["regret"]),
                    det_cost=_parse(r["det_cost"]),
                    mismatch_regret=_parse(r["mismatch_regret"]),
                    provenance=r["provenance"],
                )
            )
        return rows


def export_report(report: RobustnessReport) -> str:
    return report.to_csv()


def build_report(
    bits: Sequence[Bitstring],
    provenance: Sequence[str],
    obj: ScenarioObjective,
    scenarios: ScenarioSet,
    f_star: Sequence[float],
    measure: str = "regret",
) -> RobustnessReport:
    _check_measure(measure)
    f_star = np.asarray(f_star, dtype=float)
    order = sorted(range(len(bits)), key=lambda r: bits[r])
    if not order:
        return RobustnessReport((), tuple(float(v) for v in f_star), measure)
    mat = np.array([bits[r] for r in order], dtype=np.uint8)
    values = obj.values(mat, scenarios.scenarios)
    mask = obj.feasible_mask(mat)
    split = obj.decompose(mat, scenarios.scenarios)
    rows = []
    for row, r in enumerate(order):
        vals = values[row]
        rows.append(
            Candidate(
                bitstring=tuple(int(v) for v in bits[r]),
                feasible=bool(mask[row]),
                values=tuple(float(v) for v in vals),
                worst_case=float(np.max(vals)),
                regret=float(np.max(vals - f_star)),
                det_cost=None if split is None else float(split[0][row]),
                mismatch_regret=None if split is None else float(np.max(split[1][row])),
                provenance=provenance[r],
            )
        )
    return RobustnessReport(tuple(rows), tuple(float(v) for v in f_star), measure)


Oracle = Callable[[ScenarioObjective, ScenarioSet], np.ndarray]
Sampler = Callable[[QuboProblem, int, int], SampleSet]


def harvest(
    expected_qubo: QuboProblem,
    sampler: Sampler,
    obj: ScenarioObjective,
    scenarios: ScenarioSet,
    measure: str = "regret",
    shots: int = 1000,
    seed: int = 0,
    oracle: Oracle = scenario_optima,
    f_star: Sequence[float] | None = None,
) -> tuple[Candidate, RobustnessReport]:
    """Sample the expected-value QUBO once and keep the most robust feasible sample.

    Raises EmptyHarvestError (carrying the report) if no sample is feasible.
    """
    _check_measure(measure)
    samples = sampler(expected_qubo, shots, seed)
    if len(samples) == 0:
        raise EmptyHarvestError("sampler returned no samples", None)
    if f_star is None:
        f_star = oracle(obj, scenarios)
    name = getattr(sampler, "name", "sampler")
    bits = samples.bitstrings
    prov = [f"{name}:{m}" for _, _, m in samples.entries]
    report = build_report(bits, prov, obj, scenarios, f_star, measure)
    if not report.feasible():
        raise EmptyHarvestError("all harvested samples are infeasible", report)
    return report.best(), report


def derived_seed(seed: int, index: int) -> int:
    """Child seed ``index`` of ``seed`` (numpy SeedSequence spawn key)."""
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1)[0])


@dataclass(frozen=True)
class TwoStepResult:
    best: Candidate
    report: RobustnessReport
    params: QaoaParams
    landscape: Landscape
    shots: tuple[int, ...]
    scale: float = 1.0
    pooled: dict = field(default_factory=dict)


def pooled_qaoa_samples(
    scenario_qubos: Sequence[QuboProblem],
    params: QaoaParams,
    shots: Sequence[int],
    seed: int,
    workers: int = 1,
) -> list[SampleSet]:
    """Per-scenario sample sets; scenario k uses ``derived_seed(seed, k)``."""

    def run(k):
        q = scenario_qubos[k]
        return qaoa_sample(q, params, shots[k], derived_seed(seed, k), diagonal_energies(q))

    ks = range(len(scenario_qubos))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, ks))
    return [run(k) for k in ks]


def two_step_qaoa(
    expected_qubo: QuboProblem,
    scenario_qubos: Sequence[QuboProblem],
    obj: ScenarioObjective,
    scenarios: ScenarioSet,
    measure: str = "regret",
    beta_grid: Sequence[float] | None = None,
    gamma_grid: Sequence[float] | None = None,
    shots_total: int = 100,
    allocation: str = "uniform",
    seed: int = 0,
    oracle: Oracle = scenario_optima,
    normalize: bool = False,
    workers: int = 1,
) -> TwoStepResult:
    """Grid-search QAOA angles on the expected-value QUBO, rerun the circuit per
    scenario with those angles, pool all samples and select the most robust one.
    """
    _check_measure(measure)
    if len(scenario_qubos) != len(scenarios):
        raise DimensionError("one scenario QUBO per scenario is required")
    for k, q in enumerate(scenario_qubos):
        if not q.same_layout(expected_qubo):
            raise DimensionError(f"scenario QUBO {k} does not share the expected-value layout")
    if allocation == "uniform":
        probs = np.full(len(scenarios), 1.0 / len(scenarios))
    elif allocation == "probability":
        probs = scenarios.weights()
    else:
        raise ValueError(f"unknown allocation {allocation!r}")
    shots = allocate_shots(probs, shots_total)

    scale = 1.0
    if normalize:
        expected_qubo, scale = normalized(expected_qubo)
        scenario_qubos = [normalized(q, scale)[0] for q in scenario_qubos]
    params, landscape = grid_search(
        expected_qubo,
        default_beta_grid() if beta_grid is None else beta_grid,
        default_gamma_grid() if gamma_grid is None else gamma_grid,
    )
    sets = pooled_qaoa_samples(scenario_qubos, params, shots, seed, workers)

    pooled: dict[Bitstring, dict[int, int]] = {}
    for k, ss in enumerate(sets):
        for b, _, m in ss.entries:
            pooled.setdefault(b, {})[k] = m
    if not pooled:
        raise EmptyHarvestError("QAOA produced no samples", None)
    bits = list(pooled)
    prov = [";".join(f"s{k}:{m}" for k, m in sorted(pooled[b].items())) for b in bits]
    report = build_report(bits, prov, obj, scenarios, oracle(obj, scenarios), measure)
    if not report.feasible():
        raise EmptyHarvestError("all pooled QAOA samples are infeasible", report)
    return TwoStepResult(report.best(), report, params, landscape, tuple(shots), scale, pooled)


@dataclass(frozen=True)
class StochasticMeasures:
    ws: float
    rp: float
    eev: float
    vss: float
    evpi: float

    def as_dict(self) -> dict:
        return {"WS": self.ws, "RP": self.rp, "EEV": self.eev, "VSS": self.vss, "EVPI": self.evpi}


def expected_value_solution(obj: ScenarioObjective, scenarios: ScenarioSet) -> Bitstring:
    """Feasible minimizer of f(x, mean scenario)."""
    feasible = obj.feasible_set()
    if len(feasible) == 0:
        raise InfeasibleError("empty feasible set")
    mean = expected_scenario(scenarios)[None, :]
    scores = obj.values(feasible, mean)[:, 0]
    return tuple(int(v) for v in feasible[_argmin_lex(scores, feasible)])


def stochastic_measures(
    obj: ScenarioObjective, scenarios: ScenarioSet, x_ev: Sequence[int] | None = None
) -> StochasticMeasures:
    """Wait-and-see, recourse, expected-value-solution values and the derived gaps."""
    if scenarios.probabilities is None:
        raise ValueError("stochastic measures need scenario probabilities")
    p = scenarios.probabilities
    feasible, values = _feasible_values(obj, scenarios)
    if x_ev is None:
        x_ev = expected_value_solution(obj, scenarios)
    x_ev = tuple(int(v) for v in x_ev)
    hit = np.flatnonzero(np.all(feasible == np.array(x_ev, dtype=np.uint8), axis=1))
    if hit.size:
        ev_row = values[hit[0]]
    else:
        ev_row = obj.values(np.array([x_ev], dtype=np.uint8), scenarios.scenarios)[0]
    # one reduction over identically shaped rows, so equal rows give equal sums
    rows = np.vstack([values, values.min(axis=0), ev_row])
    expect = (rows * p[None, :]).sum(axis=1)
    ws, eev = float(expect[-2]), float(expect[-1])
    rp = float(expect[:-2].min())
    return StochasticMeasures(ws, rp, eev, eev - rp, rp - ws)
