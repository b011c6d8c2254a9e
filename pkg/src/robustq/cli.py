"""Command-line entry point.

Subcommands ``scenarios``, ``oracle``, ``harvest`` and ``qaoa-robust`` write
fixed-name files under ``--out-dir``.  Every run also writes
``manifest.json``; passing it back with ``--manifest`` reproduces the run.

The master ``--seed`` is never used directly: scenario generation, the
annealing sampler and the per-scenario QAOA runs each use a child seed,
``SeedSequence(seed, spawn_key=(i,))`` with i = 0, 1, 2 respectively.

Exit codes: 0 success, 2 usage or input error, 3 infeasible or empty
harvest, 4 size cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .errors import EmptyHarvestError, InfeasibleError, SizeCapError
from .ev import EvInstance, EvObjective, decode_ev, encode_ev
from .objective import ScenarioObjective
from .qaoa import default_beta_grid, default_gamma_grid
from .qubo import QuboProblem, bitstring_str
from .robust import (
    derived_seed,
    expected_value_solution,
    harvest,
    robust_optimum,
    stochastic_measures,
    two_step_qaoa,
)
from .samplers import BoltzmannSampler, SaConfig, SaSampler
from .scenario import ScenarioSet, expected_scenario, generate_gaussian_scenarios, histogram_3d
from .ucp import UcpInstance, UcpObjective, UcpWeights, decode_ucp, encode_ucp

log = logging.getLogger("robustq")

SEED_SCENARIOS, SEED_SAMPLER, SEED_QAOA = 0, 1, 2
EXIT_USAGE, EXIT_INFEASIBLE, EXIT_SIZE = 2, 3, 4

# options that change how a run executes but never what it outputs
_EXECUTION_ONLY = {"out_dir", "workers", "manifest", "verbose", "func"}


class UsageError(Exception):
    pass


@dataclass
class Problem:
    kind: str
    instance: object
    expected_qubo: QuboProblem
    scenario_qubos: list
    objective: ScenarioObjective

    def schedule(self, bits):
        if self.kind == "ev":
            return {"j": list(decode_ev(self.objective.layout, bits))}
        s = decode_ucp(self.objective.enc, self.instance, bits)
        return {
            "on": s.on.astype(int).tolist(),
            "start": s.start.astype(int).tolist(),
            "power": s.power.tolist(),
        }

    def schedule_csv(self, bits):
        if self.kind != "ucp":
            return None
        return decode_ucp(self.objective.enc, self.instance, bits).to_csv()


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})")


def load_scenarios(cfg: dict, instance=None) -> ScenarioSet:
    if cfg.get("scenarios"):
        return ScenarioSet.from_dict(_read_json(cfg["scenarios"]))
    mu, sigma = cfg.get("mu"), cfg.get("sigma")
    if mu is None and isinstance(instance, EvInstance) and instance.pv_kind == "gaussian":
        mu, sigma = list(instance.mu), list(instance.sigma)
    if mu is None or sigma is None:
        raise UsageError("give --scenarios FILE or --mu/--sigma for generated scenarios")
    seed = derived_seed(cfg["seed"], SEED_SCENARIOS)
    return generate_gaussian_scenarios(mu, sigma, cfg["count"], seed)


def build_problem(cfg: dict, scenarios: ScenarioSet | None = None):
    data = _read_json(cfg["instance"])
    if "units" in data:
        inst = UcpInstance.from_dict(data)
        scenarios = scenarios or load_scenarios(cfg, inst)
        weights = UcpWeights(
            demand=cfg.get("lambda_demand") or 1.0,
            link=cfg.get("lambda_logic"),
            start=cfg.get("lambda_logic"),
            minup=cfg.get("lambda_logic"),
            mindown=cfg.get("lambda_logic"),
        )
        q, enc = encode_ucp(inst, expected_scenario(scenarios), weights)
        qs = [encode_ucp(inst, s, weights)[0] for s in scenarios.scenarios]
        return Problem("ucp", inst, q, qs, UcpObjective(inst, enc)), scenarios
    if "pv" in data:
        inst = EvInstance.from_dict(data)
        scenarios = scenarios or load_scenarios(cfg, inst)
        lam = cfg.get("lambda_total")
        q, layout = encode_ev(inst, None, lam)
        qs = [encode_ev(inst, s, lam)[0] for s in scenarios.scenarios]
        return Problem("ev", inst, q, qs, EvObjective(inst, layout)), scenarios
    raise UsageError(f"{cfg['instance']}: neither a UCP ('units') nor an EV ('pv') instance")


def _dump(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_manifest(out: Path, cfg: dict):
    config = {k: v for k, v in sorted(cfg.items()) if k not in _EXECUTION_ONLY}
    _dump(out / "manifest.json", {"robustq_version": __version__, "config": config})


def _grids(cfg):
    return default_beta_grid(cfg["beta_points"]), default_gamma_grid(cfg["gamma_points"])


# -- subcommands ---------------------------------------------------------


def cmd_scenarios(cfg: dict, out: Path) -> int:
    s = load_scenarios(cfg)
    (out / "scenarios.json").write_text(s.to_json() + "\n")
    if s.num_steps == 2:
        (out / "histogram.csv").write_text(histogram_3d(s, cfg["bins"]).to_csv())
    else:
        log.warning("histogram export skipped: scenarios have %d steps, not 2", s.num_steps)
    write_manifest(out, cfg)
    return 0


def cmd_oracle(cfg: dict, out: Path) -> int:
    problem, scenarios = build_problem(cfg)
    write_manifest(out, cfg)
    opt = robust_optimum(problem.objective, scenarios, cfg["measure"])
    _dump(
        out / "solution.json",
        {
            "optimum": bitstring_str(opt.bitstring),
            "measure": cfg["measure"],
            "value": opt.value,
            "f_star": [float(v) for v in opt.f_star],
            "schedule": problem.schedule(opt.bitstring),
        },
    )
    sched = problem.schedule_csv(opt.bitstring)
    if sched:
        (out / "schedule.csv").write_text(sched)
    return 0


def _solution_payload(problem, best, measure):
    return {
        "bitstring": bitstring_str(best.bitstring),
        "measure": measure,
        "value": best.measure(measure),
        "worst_case": best.worst_case,
        "regret": best.regret,
        "schedule": problem.schedule(best.bitstring),
    }


def cmd_harvest(cfg: dict, out: Path) -> int:
    problem, scenarios = build_problem(cfg)
    write_manifest(out, cfg)
    if cfg["sampler"] == "boltzmann":
        sampler = BoltzmannSampler(cfg["temperature"])
    else:
        sa = SaConfig(cfg["sweeps"], cfg["beta_start"], cfg["beta_end"], cfg["schedule"])
        sampler = SaSampler(sa, workers=cfg.get("workers", 1))
    seed = derived_seed(cfg["seed"], SEED_SAMPLER)
    try:
        best, report = harvest(
            problem.expected_qubo, sampler, problem.objective, scenarios,
            cfg["measure"], cfg["shots"], seed,
        )
    except EmptyHarvestError as exc:
        if exc.report is not None:
            (out / "report.csv").write_text(exc.report.to_csv())
        raise
    (out / "report.csv").write_text(report.to_csv())
    payload = _solution_payload(problem, best, cfg["measure"])
    payload["f_star"] = list(report.f_star)
    _dump(out / "solution.json", payload)
    sched = problem.schedule_csv(best.bitstring)
    if sched:
        (out / "schedule.csv").write_text(sched)
    return 0


def cmd_qaoa_robust(cfg: dict, out: Path) -> int:
    problem, scenarios = build_problem(cfg)
    if scenarios.probabilities is None:
        scenarios = scenarios.with_uniform_probabilities()
    write_manifest(out, cfg)
    betas, gammas = _grids(cfg)
    total = cfg["shots_total"] or cfg["shots_per_scenario"] * len(scenarios)
    try:
        result = two_step_qaoa(
            problem.expected_qubo, problem.scenario_qubos, problem.objective, scenarios,
            cfg["measure"], betas, gammas, total, cfg["allocation"],
            derived_seed(cfg["seed"], SEED_QAOA), normalize=cfg["normalize"],
            workers=cfg.get("workers", 1),
        )
    except EmptyHarvestError as exc:
        if exc.report is not None:
            (out / "report.csv").write_text(exc.report.to_csv())
        raise
    (out / "report.csv").write_text(result.report.to_csv())
    (out / "landscape.csv").write_text(result.landscape.to_csv())
    payload = _solution_payload(problem, result.best, cfg["measure"])
    x_ev = expected_value_solution(problem.objective, scenarios)
    payload.update(
        {
            "f_star": list(result.report.f_star),
            "params": {"beta": result.params.betas[0], "gamma": result.params.gammas[0]},
            "qubo_scale": result.scale,
            "shots": list(result.shots),
            "expected_value_solution": bitstring_str(x_ev),
            "stochastic": stochastic_measures(problem.objective, scenarios, x_ev).as_dict(),
        }
    )
    _dump(out / "solution.json", payload)
    return 0


# -- argument parsing ----------------------------------------------------


def _add_scenario_args(p):
    p.add_argument("--scenarios", help="scenario JSON file")
    p.add_argument("--mu", type=float, nargs="+", help="generate Gaussian scenarios with these means")
    p.add_argument("--sigma", type=float, nargs="+", help="standard deviations for --mu")
    p.add_argument("--count", type=int, default=25, help="number of generated scenarios")


def _add_common(p, instance=True):
    if instance:
        p.add_argument("--instance", help="UCP or EV instance JSON")
        p.add_argument("--measure", choices=("worst_case", "regret"), default="regret")
        p.add_argument("--lambda-demand", type=float, help="UCP demand-mismatch weight (default 1)")
        p.add_argument("--lambda-logic", type=float, help="UCP logic-penalty weight override")
        p.add_argument("--lambda-total", type=float, help="EV total-window penalty weight override")
    _add_scenario_args(p)
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--manifest", help="rerun the configuration stored in a manifest.json")
    p.add_argument("--workers", type=int, default=1, help="threads for shot/scenario parallelism")
    p.add_argument("-v", "--verbose", action="store_true")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robustq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scenarios", help="generate Gaussian scenarios and their 2-D histogram")
    _add_common(p, instance=False)
    p.add_argument("--bins", type=int, default=5, help="histogram bins per axis")
    p.set_defaults(func=cmd_scenarios)

    p = sub.add_parser("oracle", help="exact robust optimum by enumeration")
    _add_common(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("harvest", help="sample the expected-value QUBO and keep the most robust sample")
    _add_common(p)
    p.add_argument("--sampler", choices=("sa", "boltzmann"), default="sa")
    p.add_argument("--shots", type=int, default=1000)
    p.add_argument("--temperature", type=float, default=0.1, help="Gibbs temperature (boltzmann)")
    p.add_argument("--sweeps", type=int, default=1000, help="annealing sweeps (sa)")
    p.add_argument("--beta-start", type=float, default=0.1)
    p.add_argument("--beta-end", type=float, default=10.0)
    p.add_argument("--schedule", choices=("geometric", "linear"), default="geometric")
    p.set_defaults(func=cmd_harvest)

    p = sub.add_parser("qaoa-robust", help="two-step scenario QAOA")
    _add_common(p)
    p.add_argument("--shots-per-scenario", type=int, default=100)
    p.add_argument("--shots-total", type=int, default=0, help="overrides --shots-per-scenario")
    p.add_argument("--allocation", choices=("uniform", "probability"), default="uniform")
    p.add_argument("--beta-points", type=int, default=32)
    p.add_argument("--gamma-points", type=int, default=64)
    p.add_argument("--normalize", action="store_true", help="divide QUBOs by the largest coefficient")
    p.set_defaults(func=cmd_qaoa_robust)
    return parser


def _resolve(args) -> dict:
    cfg = {k: v for k, v in vars(args).items()}
    cfg["command"] = args.command
    if args.manifest:
        stored = _read_json(args.manifest).get("config", {})
        if stored.get("command") != args.command:
            raise UsageError(f"manifest is for {stored.get('command')!r}, not {args.command!r}")
        cfg.update(stored)
    for key in ("instance", "scenarios"):
        if cfg.get(key):
            cfg[key] = str(Path(cfg[key]).resolve())
    if cfg["command"] != "scenarios" and not cfg.get("instance"):
        raise UsageError("--instance is required")
    for key in ("count", "shots", "shots_per_scenario", "beta_points", "gamma_points", "sweeps", "bins"):
        if key in cfg and cfg[key] is not None and cfg[key] < (0 if key == "shots" else 1):
            raise UsageError(f"--{key.replace('_', '-')} is out of range")
    return cfg


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _resolve(args)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return args.func(cfg, out)
    except UsageError as exc:
        print(f"robustq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SizeCapError as exc:
        print(f"robustq: size cap exceeded: {exc}", file=sys.stderr)
        return EXIT_SIZE
    except InfeasibleError as exc:
        print(f"robustq: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValueError as exc:
        print(f"robustq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
