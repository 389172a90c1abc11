"""Command-line front end: ``partdd generate | run | verify``.

Exit codes: 0 ok, 2 configuration or input error, 3 solver failure,
4 verification failure. Relative output paths are resolved against
``$PARTDD_OUTPUT_DIR`` when it is set.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .engine_async import run_async, run_coordinate_reference
from .engine_sync import EngineError, run_sync
from .graph import GraphError, erdos_renyi, path_graph
from .io import (
    load_problem,
    oracle_cache_path,
    problem_hash,
    read_json,
    save_problem,
    software_version,
    write_json,
)
from .local_solver import DEFAULT_TOL
from .oracle import OracleError, OracleSolution, solve_centralized
from .problem import ProblemError
from .scenarios import (
    generate_num,
    generate_random_qp,
    generate_resource_allocation,
    random_wls,
    unconstrained_rates,
)
from .trace import read_trace, write_trace

log = logging.getLogger("partdd")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4
OUTPUT_ENV = "PARTDD_OUTPUT_DIR"

SCENARIOS = ("qp", "num", "resalloc", "wls")
ENGINES = ("sync", "async", "coord-ref")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario: str = "file"
    n: int | None = None
    p: float | None = None
    seed: int = 0
    engine: str = "sync"
    horizon: int = 1000
    factor: float = 1.0
    tol: float = DEFAULT_TOL
    instance: str | None = None
    output: str | None = None
    oracle: bool = True
    equivalence: bool = False

    def validate(self):
        if self.scenario not in SCENARIOS + ("file",):
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.engine not in ENGINES:
            raise ConfigError(f"unknown engine {self.engine!r}")
        if self.horizon < 0:
            raise ConfigError("horizon must be nonnegative")
        if not self.factor > 0:
            raise ConfigError("step-size factor must be positive")
        if not self.tol > 0:
            raise ConfigError("tolerance must be positive")
        if self.n is not None and self.n < 1:
            raise ConfigError("n must be positive")
        if self.p is not None and not 0.0 <= self.p <= 1.0:
            raise ConfigError("p must lie in [0, 1]")
        return self


def _out_path(path: str | None, default: str) -> Path:
    p = Path(path if path else default)
    base = os.environ.get(OUTPUT_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def manifest_path(trace_path) -> Path:
    p = Path(trace_path)
    return p.with_name(p.stem + ".manifest.json")


# -------------------------------------------------------------------- generate

def random_num(n: int, seed: int, eps: float = 0.1, max_draws: int = 10_000):
    """NUM instance with n sources, n // 2 + 1 links and capacities below demand."""
    rng = np.random.default_rng(seed)
    n_links = n // 2 + 1
    for _ in range(max_draws):
        uses = [set(rng.choice(n_links, size=int(rng.integers(1, 3)), replace=False).tolist())
                for _ in range(n)]
        users = [[i for i in range(n) if l in uses[i]] for l in range(n_links)]
        if any(not u for u in users):
            continue
        weights = rng.uniform(1.0, 5.0, size=n)
        boxes = [(0.0, 10.0)] * n
        rates = unconstrained_rates("log", weights, np.zeros(n), 1.0, eps, [10.0] * n)
        caps = [0.6 * rates[u].sum() for u in users]
        try:
            return generate_num(n, users, caps, boxes, weights, eps)
        except GraphError:
            continue
    raise GraphError(f"no connected link structure for {n} sources in {max_draws} draws")


def build_instance(scenario: str, n: int, p: float, seed: int):
    if scenario == "num":
        prob = random_num(n, seed)
        prob.seed = seed
        return prob
    graph = path_graph(n) if p is None else erdos_renyi(n, p, seed)
    if scenario == "qp":
        return generate_random_qp(graph, seed)
    if scenario == "resalloc":
        rng = np.random.default_rng(seed)
        prob = generate_resource_allocation(graph, rng.uniform(1.0, 5.0, size=n),
                                            rng.uniform(1.0, 5.0, size=n), eps=0.1)
        prob.seed = seed
        return prob
    if scenario == "wls":
        return random_wls(graph, seed)
    raise ConfigError(f"unknown scenario {scenario!r}")


def cmd_generate(args) -> int:
    cfg = RunConfig(scenario=args.scenario, n=args.n, p=args.p, seed=args.seed).validate()
    prob = build_instance(cfg.scenario, cfg.n, cfg.p, cfg.seed)
    out = _out_path(args.output, "instance.json")
    save_problem(prob, out)
    if args.oracle:
        sol = solve_centralized(prob)
        sol.save(oracle_cache_path(out))
    print(f"wrote {out} (n={prob.n}, N={prob.layout.total}, hash={problem_hash(prob)[:12]})")
    return EXIT_OK


# -------------------------------------------------------------------- run

def _load_or_solve_oracle(prob, inst_path, tol=1e-10):
    cache = oracle_cache_path(inst_path)
    if cache.exists():
        return OracleSolution.load(cache)
    sol = solve_centralized(prob, tol=tol)
    sol.save(cache)
    return sol


def cmd_run(args) -> int:
    horizon = args.events if args.events is not None else args.rounds
    cfg = RunConfig(engine=args.engine, horizon=1000 if horizon is None else horizon,
                    factor=args.factor, tol=args.tol, seed=args.seed, instance=args.inst,
                    output=args.output, oracle=args.oracle, equivalence=args.equivalence).validate()
    if cfg.factor > 1.0:
        log.warning("step-size factor %g exceeds the convergence bound", cfg.factor)
    prob = load_problem(cfg.instance)
    sol = _load_or_solve_oracle(prob, cfg.instance) if cfg.oracle else None
    x_star = None if sol is None else sol.x
    out = _out_path(cfg.output, "trace.csv")
    manifest = {
        "software_version": software_version(),
        "instance": str(cfg.instance),
        "instance_hash": problem_hash(prob),
        "config": asdict(cfg),
        "f_star": None if sol is None else sol.f,
        "oracle_method": None if sol is None else sol.method,
    }
    if cfg.engine == "sync":
        res = run_sync(prob, cfg.horizon, factor=cfg.factor, x_star=x_star, tol=cfg.tol)
        write_trace(out, res.trace)
        manifest.update(alpha=res.alpha.tolist(), x_diag=res.x_diag.tolist(), asynchronous=False)
    elif cfg.engine == "async":
        res = run_async(prob, events=cfg.horizon, seed=cfg.seed, factor=cfg.factor, x_star=x_star,
                        tol=cfg.tol)
        write_trace(out, res.trace, asynchronous=True)
        x = np.concatenate([s.y[s.hood.slots[s.owner]] for s in res.states])
        manifest.update(alpha=res.alpha.tolist(), x_diag=x.tolist(), asynchronous=True,
                        timer_rate=1.0)
    else:
        if cfg.equivalence:
            a = run_async(prob, events=cfg.horizon, seed=cfg.seed, factor=cfg.factor, tol=cfg.tol,
                          record_duals=True)
            selection = a.fired
        else:
            selection = None
        res = run_coordinate_reference(prob, cfg.horizon, seed=cfg.seed, selection=selection,
                                       factor=cfg.factor, x_star=x_star, tol=cfg.tol,
                                       record_duals=cfg.equivalence)
        write_trace(out, res.trace, asynchronous=True)
        if cfg.equivalence:
            dev = max(float(np.max(np.abs(u - v))) for u, v in zip(a.dual_history, res.dual_history))
            manifest["equivalence_max_deviation"] = dev
            print(f"max per-iteration deviation async vs coordinate reference: {dev:.3e}")
        manifest.update(alpha=None, asynchronous=True)
    write_json(manifest_path(out), manifest)
    print(f"wrote {out}")
    return EXIT_OK


# -------------------------------------------------------------------- verify

def verify_trace(records, f_star: float, x_star=None, x_final=None, synchronous: bool = True,
                 weak_tol: float = 1e-8, mono_slack: float = 1e-9, disagreement_tol: float = 1e-3,
                 primal_tol: float = 1e-3) -> dict:
    """Check a trace against the oracle; returns a report with one entry per check."""
    if not records:
        raise ConfigError("trace is empty")
    q = np.array([r.dual_cost for r in records])
    checks = []

    def add(name, passed, margin, detail=""):
        checks.append({"check": name, "passed": bool(passed), "margin": float(margin), "detail": detail})

    excess = q - f_star
    k = int(np.argmax(excess))
    add("weak_duality", excess[k] <= weak_tol, weak_tol - excess[k],
        f"max q - f* = {excess[k]:.3e} at t={records[k].t}")
    if synchronous and len(q) > 1:
        drops = np.diff(q)
        k = int(np.argmin(drops))
        add("monotone_ascent", drops[k] >= -mono_slack, drops[k] + mono_slack,
            f"smallest step q(t+1) - q(t) = {drops[k]:.3e} between t={records[k].t} and t={records[k + 1].t}")
    d0, d1 = records[0].disagreement, records[-1].disagreement
    add("disagreement_decay", d1 <= disagreement_tol and d1 <= max(d0, disagreement_tol),
        disagreement_tol - d1, f"disagreement {d0:.3e} -> {d1:.3e}")
    if x_star is not None and x_final is not None:
        err = float(np.linalg.norm(np.asarray(x_final) - np.asarray(x_star)))
        add("primal_error", err <= primal_tol, primal_tol - err, f"||x_diag - x*|| = {err:.3e}")
    gap = abs(q[-1] - f_star)
    return {
        "passed": all(c["passed"] for c in checks),
        "f_star": f_star,
        "final_cost_error": gap,
        "checks": checks,
    }


def cmd_verify(args) -> int:
    prob = load_problem(args.inst)
    records = read_trace(args.trace)
    if not records:
        raise ConfigError(f"{args.trace}: trace is empty")
    mpath = Path(args.manifest) if args.manifest else manifest_path(args.trace)
    manifest = read_json(mpath) if mpath.exists() else {}
    if manifest.get("instance_hash") not in (None, problem_hash(prob)):
        raise ConfigError("trace manifest belongs to a different instance")
    sol = _load_or_solve_oracle(prob, args.inst)
    synchronous = not manifest.get("asynchronous", records[0].sim_time is not None)
    report = verify_trace(records, sol.f, sol.x, manifest.get("x_diag"), synchronous=synchronous)
    report["instance_hash"] = problem_hash(prob)
    text = json.dumps(report, indent=1)
    if args.output:
        out = _out_path(args.output, "report.json")
        out.write_text(text + "\n")
    print(text)
    return EXIT_OK if report["passed"] else EXIT_VERIFY


# -------------------------------------------------------------------- entry

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="partdd", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a random instance")
    g.add_argument("--scenario", choices=SCENARIOS, default="qp")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--p", type=float, default=None, help="edge probability; omit for a path graph")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output")
    g.add_argument("--oracle", action="store_true", help="also cache the centralized solution")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run an engine on an instance")
    r.add_argument("--engine", choices=ENGINES, default="sync")
    r.add_argument("--inst", required=True)
    h = r.add_mutually_exclusive_group()
    h.add_argument("--rounds", type=int)
    h.add_argument("--events", type=int)
    r.add_argument("--factor", type=float, default=1.0,
                   help="multiplies the default step sizes 1/(n L_i) (sync) or 1/L_i (async)")
    r.add_argument("--seed", type=int, default=0, help="timer / selection seed")
    r.add_argument("--tol", type=float, default=DEFAULT_TOL)
    r.add_argument("--no-oracle", dest="oracle", action="store_false")
    r.add_argument("--equivalence", action="store_true",
                   help="coord-ref only: share the async selection stream and report the deviation")
    r.add_argument("-o", "--output")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="check a trace against the oracle")
    v.add_argument("--inst", required=True)
    v.add_argument("--trace", required=True)
    v.add_argument("--manifest")
    v.add_argument("-o", "--output")
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, GraphError, ProblemError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EngineError, OracleError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
