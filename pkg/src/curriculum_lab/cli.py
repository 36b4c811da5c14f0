"""``curriculum-lab`` command line: verify | sweep | race | counterexample.

Exit codes: 0 success, 1 verification failure or aborted run, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from itertools import combinations
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import estimators as est
from . import schemas
from .config import ConfigError, ExperimentConfig
from .counterexamples import build_hinge_low_psi, build_theorem3
from .curriculum import SchedulePolicy, race
from .errors import ConstructionFailed, CurriculumLabError
from .geometry import HingeFrame
from .losses import Kind, Problem
from .samplers import hinge_x2_marginal, region_law
from .vecspace import RngStream, StandardGaussian
from .verify import race_setup, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
JOBS_ENV = "CURRICULUM_LAB_JOBS"


class Abort(Exception):
    """Run stopped; mapped to exit code 1."""


def _env_jobs():
    raw = os.environ.get(JOBS_ENV)
    if raw is None or raw == "":
        return None
    try:
        jobs = int(raw)
    except ValueError:
        raise ConfigError(f"{JOBS_ENV} must be an integer, got {raw!r}") from None
    return jobs


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment file")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides the file)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--jobs", type=int, help=f"worker threads (default: ${JOBS_ENV} or the file)")
    common.add_argument("--format", choices=("csv", "json"), help="table format for sweep and race")
    parser = argparse.ArgumentParser(prog="curriculum-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("verify", parents=[common], help="run the property suite")
    sub.add_parser("sweep", parents=[common], help="rate curves as a table")
    sub.add_parser("race", parents=[common], help="training races between ordering policies")
    sub.add_parser("counterexample", parents=[common], help="build a counterexample report")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.from_dict({})
    jobs = args.jobs if args.jobs is not None else _env_jobs()
    out = str(args.out) if args.out is not None else None
    return cfgmod.with_overrides(cfg, seed=args.seed, jobs=jobs, out=out, format=args.format)


def _provenance(command: str, cfg: ExperimentConfig) -> dict:
    return {"command": command, "seed": cfg.seed, "config_hash": cfg.config_hash()}


def _write(out: Path, name: str, text: str, written: list) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / name, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    written.append(name)


def _finish(command: str, cfg: ExperimentConfig, written: list) -> None:
    doc = {**_provenance(command, cfg), "files": sorted(written)}
    _write(Path(cfg.out), "manifest.json", schemas.dumps(doc, schemas.MANIFEST), [])


# preflight ---------------------------------------------------------------------


def preflight(command: str, cfg: ExperimentConfig) -> None:
    """Check module preconditions for every configured combination before running."""
    try:
        dist = cfg.make_distribution()
        if command == "sweep" and cfg.problem.kind == Kind.REGRESSION.value:
            for lam in cfg.geometry.lam:
                w_bar = cfg.w_bar()
                w_t = w_bar - lam * cfg.zenith()
                for psi in cfg.grid.psi:
                    for ups in cfg.grid.upsilon:
                        region_law(dist, w_bar, w_t, psi, ups)
        if command == "sweep" and cfg.problem.kind == Kind.HINGE.value:
            for theta in cfg.geometry.theta:
                HingeFrame.from_angle(theta)
            for psi in cfg.grid.psi:
                hinge_x2_marginal(dist, psi)
        if command == "race" and cfg.problem.kind == Kind.HINGE.value and dist.dim < 1:
            raise ConfigError("hinge races need at least one feature")
    except ConfigError:
        raise
    except CurriculumLabError as exc:
        raise ConfigError(f"configuration violates a precondition: {exc}") from exc


# commands ----------------------------------------------------------------------


def cmd_verify(cfg: ExperimentConfig) -> int:
    results = run_suite(cfg)
    width = max(len(r.name) for r in results)
    for r in results:
        zs = [abs(z) for z in r.z_scores]
        zinfo = f"  min|z|={min(zs):.2f} max|z|={max(zs):.2f}" if zs else ""
        print(f"{r.name:<{width}}  {r.status.value:<12} {r.claim}{zinfo}")
    passed = all(r.ok for r in results)
    doc = {**_provenance("verify", cfg), "passed": passed, "checks": [_clean(r.to_dict()) for r in results]}
    written: list = []
    _write(Path(cfg.out), "verify.json", schemas.dumps(doc, schemas.VERIFY), written)
    _finish("verify", cfg, written)
    print("ALL CHECKS PASSED" if passed else "SOME CHECKS FAILED")
    return EXIT_OK if passed else EXIT_FAIL


def _clean(obj):
    """numpy scalars to Python; non-finite numbers abort the run."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            raise Abort("refusing to serialize a non-finite number")
        return v
    return obj


def sweep_rows(cfg: ExperimentConfig) -> list:
    dist = cfg.make_distribution()
    eta, n, jobs = cfg.problem.eta, cfg.mc.n, cfg.jobs
    root = RngStream(cfg.seed, stream_id=2)
    rows = []
    if cfg.problem.kind == Kind.REGRESSION.value:
        for i, lam in enumerate(cfg.geometry.lam):
            w_bar = cfg.w_bar()
            w_t = w_bar - lam * cfg.zenith()
            mom = est.moment_oracle(dist, w_bar, w_t, 0.0, n, root.substream(i).substream(0), jobs=jobs)
            f = est.zenith_density(dist, w_bar, w_t)
            for j, psi in enumerate(cfg.grid.psi):
                cell = root.substream(i).substream(1 + j)
                mc = est.mc_delta_regression(dist, w_bar, w_t, psi, eta, n, cell.substream(0), jobs=jobs)
                rows.append(_row("regression", psi, None, lam, eta, mc, est.closed_delta_regression(mom, psi, lam, eta)))
                for k, ups in enumerate(cfg.grid.upsilon):
                    sub = cell.substream(1 + k)
                    mc = est.mc_delta_regression_local(dist, w_bar, w_t, psi, ups, eta, n, sub, jobs)
                    closed = est.first_order_delta_regression_local(psi, ups, eta, est.nabla(f, psi, ups, lam))
                    rows.append(_row("regression", psi, ups, lam, eta, mc, closed))
    else:
        for i, theta in enumerate(cfg.geometry.theta):
            fr = HingeFrame.from_angle(theta)
            for j, psi in enumerate(cfg.grid.psi):
                cell = root.substream(i).substream(1 + j)
                mc = est.mc_delta_hinge(dist, fr, psi, eta, n, cell.substream(0), jobs=jobs)
                quad = est.quad_delta_hinge(hinge_x2_marginal(dist, psi), fr, psi, eta)
                rows.append(_row("hinge", psi, None, theta, eta, mc, quad))
                for k, ups in enumerate(cfg.grid.upsilon):
                    sub = cell.substream(1 + k)
                    mc = est.mc_delta_hinge_local(dist, fr, psi, ups, eta, n, sub, jobs)
                    rows.append(_row("hinge", psi, ups, theta, eta, mc, est.closed_delta_hinge_local(psi, ups, fr, eta)))
    return rows


def _row(problem, psi, ups, geo, eta, mc: est.RateEstimate, closed: float) -> dict:
    return {
        "problem": problem,
        "psi": float(psi),
        "upsilon": None if ups is None else float(ups),
        "lambda_or_theta": float(geo),
        "eta": float(eta),
        "n": int(mc.n),
        "delta_mc": float(mc.mean),
        "delta_se": float(mc.std_error),
        "delta_closed": float(closed),
        "method": mc.method.value,
    }


def cmd_sweep(cfg: ExperimentConfig) -> int:
    rows = _clean(sweep_rows(cfg))
    written: list = []
    out = Path(cfg.out)
    if cfg.format == "csv":
        _write(out, "sweep.csv", schemas.csv_text(schemas.SWEEP_COLUMNS, rows), written)
    else:
        doc = {**_provenance("sweep", cfg), "columns": list(schemas.SWEEP_COLUMNS), "rows": rows}
        _write(out, "sweep.json", schemas.dumps(doc, schemas.SWEEP), written)
    _finish("sweep", cfg, written)
    print(f"wrote {len(rows)} rows to {out / written[0]}")
    return EXIT_OK


def race_seeds(cfg: ExperimentConfig) -> list:
    root = RngStream(cfg.seed, stream_id=3)
    return [int(root.substream(k).gen.integers(2**63)) for k in range(cfg.race.seeds)]


def cmd_race(cfg: ExperimentConfig) -> int:
    r = cfg.race
    kind = Kind(cfg.problem.kind)
    problem = Problem(kind, cfg.problem.eta, cfg.problem.norm)
    policies = {t: SchedulePolicy(t, p0=r.p0, horizon=r.horizon, refresh=r.refresh) for t in r.policies}
    checkpoint = r.checkpoint if r.checkpoint is not None else min(r.steps, r.horizon // 10)
    seeds = race_seeds(cfg)
    res = race(problem, policies, race_setup(cfg, kind), r.steps, seeds, checkpoint, loss_every=1,
               keep_trajectories=True)
    rows = []
    for name in policies:
        for seed, traj in zip(seeds, res.trajectories[name]):
            for rec in traj.records():
                rows.append({"seed": seed, "policy": name, **rec})
    rows = _clean(rows)
    out = Path(cfg.out)
    written: list = []
    if cfg.format == "csv":
        _write(out, "race_trajectories.csv", schemas.csv_text(schemas.TRAJECTORY_COLUMNS, rows), written)
    else:
        doc = {**_provenance("race", cfg), "columns": list(schemas.TRAJECTORY_COLUMNS), "rows": rows}
        _write(out, "race_trajectories.json", schemas.dumps(doc, schemas.TRAJECTORIES), written)
    if len(policies) > 1:
        comparisons = []
        for a, b in combinations(policies, 2):
            ab = res.compare(a, b)
            ba = res.compare(b, a)
            winner = a if ab.p_value < r.alpha else b if ba.p_value < r.alpha else None
            comparisons.append({
                "first": a, "second": b, "wins_first": ab.wins, "trials": ab.trials,
                "p_first_better": ab.p_value, "p_second_better": ba.p_value, "early_advantage": winner,
            })
            flag = f"early advantage: {winner}" if winner else "no early advantage"
            print(f"{a} vs {b}: {ab.wins}/{ab.trials} wins for {a}, p={ab.p_value:.3g}; {flag}")
        summary = {
            **_provenance("race", cfg),
            "problem": kind.value,
            "metric": "distance_to_optimum" if kind is Kind.REGRESSION else "cosine_to_optimum",
            "checkpoint": checkpoint,
            "steps": r.steps,
            "policies": {
                k: {"mean_at_checkpoint": float(res.at_checkpoint[k].mean()), "mean_final": float(res.final[k].mean())}
                for k in policies
            },
            "comparisons": comparisons,
        }
        _write(out, "race_summary.json", schemas.dumps(_clean(summary), schemas.RACE_SUMMARY), written)
    _finish("race", cfg, written)
    return EXIT_OK


def cmd_counterexample(cfg: ExperimentConfig) -> int:
    c = cfg.counterexample
    rng = RngStream(cfg.seed, stream_id=4)
    if c.mode == "theorem3":
        dist = cfg.make_distribution()
        if not isinstance(dist, StandardGaussian):
            print("note: the construction assumes a distribution symmetric about the labels", file=sys.stderr)
        try:
            rep = build_theorem3(dist, cfg.w_bar(), c.upsilon, c.eta, rng, n=c.n, jobs=cfg.jobs)
        except ConstructionFailed as exc:
            raise Abort(str(exc)) from exc
    else:
        rep = build_hinge_low_psi(HingeFrame.from_angle(c.theta), c.psi1, c.psi2, rng, n=c.n, jobs=cfg.jobs)
    doc = _clean({**_provenance("counterexample", cfg), "report": rep.to_dict()})
    written: list = []
    _write(Path(cfg.out), "counterexample.json", schemas.dumps(doc, schemas.COUNTEREXAMPLE), written)
    _finish("counterexample", cfg, written)
    print(f"{rep.kind}: verdict {'true' if rep.verdict else 'false'}")
    return EXIT_OK if rep.verdict else EXIT_FAIL


COMMANDS = {"verify": cmd_verify, "sweep": cmd_sweep, "race": cmd_race, "counterexample": cmd_counterexample}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        preflight(args.command, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](cfg)
    except (Abort, ValueError, FloatingPointError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
