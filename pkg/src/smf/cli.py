"""Command-line entry points.

``smf solve`` runs a factorization described by a JSON config and writes
the factors, trace, and certificate.  ``smf certify`` re-checks a saved
model against its problem.  ``smf phantom`` and ``smf hsi`` generate the
simulation datasets and optionally run the matching recovery.

Exit codes: 0 on success, 1 on usage or configuration errors, 2 when a
run finishes with numerical warnings (no convergence, prox budget
exhaustion, or a failed escape step).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments, segmentation
from .config import (
    MetaSettings,
    build_problem,
    load_run_config,
    reg_to_config,
    solver_config_to_dict,
)
from .io import save_matrix, write_smf1, read_smf1
from .optimality import MetaConfig, MetaRunConfig, check_certificate, run_meta
from .solver import FactorModel, SolverConfig, InitSpec, run

__all__ = ["main"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _trace_dict(trace) -> dict:
    return {
        "objectives": trace.objectives,
        "iterations": trace.iterations,
        "restarts": trace.restarts,
        "prox_failures": trace.prox_failures,
        "converged": trace.converged,
        "fixed_point": trace.fixed_point,
        "pruned_columns": trace.pruned_columns,
        "final_t": trace.final_t,
        "lipschitz": trace.lipschitz,
    }


def _save_model(outdir: Path, model: FactorModel) -> None:
    write_smf1(outdir / "u.smf1", model.U)
    write_smf1(outdir / "v.smf1", model.V)
    if model.Q is not None:
        write_smf1(outdir / "q.smf1", model.Q)


def _load_model(model_dir: Path) -> FactorModel:
    u = read_smf1(model_dir / "u.smf1")
    v = read_smf1(model_dir / "v.smf1")
    qpath = model_dir / "q.smf1"
    q = None
    if qpath.exists():
        q = read_smf1(qpath)
        if q.shape[1] == 1:
            q = q[:, 0]
    return FactorModel(u, v, q)


def _cmd_solve(args) -> int:
    cfg = load_run_config(args.config)
    outdir = Path(args.output) if args.output else cfg.output_dir
    if outdir is None:
        raise UsageError("no output directory (config output.directory or --output)")
    outdir.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)

    warn = False
    if cfg.meta.enabled:
        meta_cfg = MetaRunConfig(
            solver=cfg.solver,
            meta=MetaConfig(
                polar_restarts=cfg.meta.polar_restarts, escape_tol=cfg.meta.escape_tol
            ),
            max_rounds=cfg.meta.max_rounds,
        )
        result = run_meta(problem, meta_cfg)
        model, cert = result.model, result.certificate
        rounds = [
            {"round": rec.round, "action": rec.action.kind, "trace": _trace_dict(rec.trace)}
            for rec in result.history
        ]
        _write_json(outdir / "trace.json", {"rounds": rounds})
        last = result.history[-1]
        warn = last.action.kind in ("escape_failed", "rank_capped") or not last.trace.converged
    else:
        model, trace = run(problem, cfg.solver)
        cert = check_certificate(problem, model)
        _write_json(outdir / "trace.json", _trace_dict(trace))
        warn = not trace.converged or trace.prox_failures > 0

    _save_model(outdir, model)
    _write_json(outdir / "certificate.json", cert.to_dict())
    summary = [
        f"objective  {cert.objective_value:.10g}",
        f"columns    {model.rank}",
        f"polar      {cert.polar.value:.10g} ({'exact' if cert.polar.exact else 'lower bound'})",
        f"gap bound  {cert.gap_bound:.10g}",
        f"warnings   {'yes' if warn else 'no'}",
    ]
    (outdir / "summary.txt").write_text("\n".join(summary) + "\n")
    print("\n".join(summary))
    return 2 if warn else 0


def _cmd_certify(args) -> int:
    cfg = load_run_config(args.config)
    problem = build_problem(cfg)
    model = _load_model(Path(args.model))
    cert = check_certificate(problem, model, restarts=cfg.meta.polar_restarts)
    out = Path(args.output) if args.output else Path(args.model)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "certificate.json", cert.to_dict())
    verdict = cert.certified()
    lines = [
        f"objective          {cert.objective_value:.10g}",
        f"grad_q norm        {cert.grad_q_norm:.3e}",
        f"max scaling resid  {cert.max_scaling_residual:.3e}",
        f"polar              {cert.polar.value:.10g} ({'exact' if cert.polar.exact else 'lower bound'})",
        f"gap bound          {cert.gap_bound:.10g}",
        f"certified          {'yes' if verdict else 'inconclusive' if verdict is None else 'no'}",
    ]
    print("\n".join(lines))
    return 0


def _phantom_spec_from_file(path) -> tuple[experiments.PhantomSpec, dict]:
    raw = {}
    if path:
        with open(path) as fh:
            raw = json.load(fh)
    fields = {f.name for f in dataclasses.fields(experiments.PhantomSpec)}
    extra = set(raw) - fields - {"condition", "solver_seed", "max_iter", "columns"}
    if extra:
        raise ValueError(f"phantom spec: unknown keys {sorted(extra)}")
    spec_kwargs = {k: raw[k] for k in raw if k in fields}
    return experiments.PhantomSpec(**spec_kwargs), raw


def _cmd_phantom(args) -> int:
    spec, raw = _phantom_spec_from_file(args.spec)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    data = experiments.gen_phantom(spec)
    write_smf1(outdir / "y.smf1", data.y)
    write_smf1(outdir / "u_true.smf1", data.u_true)
    write_smf1(outdir / "v_true.smf1", data.v_true)
    save_matrix(outdir / "labels.csv", data.labels.astype(float))
    _write_json(
        outdir / "meta.json",
        {"spec": dataclasses.asdict(spec), "noise_sigma": data.noise_sigma},
    )
    if not args.run:
        print(f"phantom written to {outdir}")
        return 0

    condition = raw.get("condition", args.condition)
    problem = experiments.phantom_problem(data, condition)
    columns = int(raw.get("columns", spec.n_regions + 4))
    cfg = SolverConfig(
        init=InitSpec("uniform_random", columns),
        max_iter=int(raw.get("max_iter", 2000)),
        seed=int(raw.get("solver_seed", 0)),
    )
    model, trace = run(problem, cfg)
    _save_model(outdir, model)
    _write_json(outdir / "trace.json", _trace_dict(trace))
    seg = segmentation.segment(model.V, spec.height, spec.width)
    save_matrix(outdir / "segmentation.csv", seg.label_image.astype(float))
    scores = segmentation.region_ious(data.labels, seg)
    report = {
        "condition": condition,
        "objective": trace.objectives[-1],
        "converged": trace.converged,
        "region_iou": scores.tolist(),
        "regions_above_0.8": int(np.sum(scores >= 0.8)),
    }
    _write_json(outdir / "report.json", report)
    print(json.dumps(report, indent=2))
    return 0 if trace.converged else 2


def _hsi_spec_from_file(path) -> tuple[experiments.HsiSpec, dict]:
    raw = {}
    if path:
        with open(path) as fh:
            raw = json.load(fh)
    fields = {f.name for f in dataclasses.fields(experiments.HsiSpec)}
    extra = set(raw) - fields - {"lam", "nu_tv", "nu2_v", "columns", "max_iter", "solver_seed"}
    if extra:
        raise ValueError(f"hsi spec: unknown keys {sorted(extra)}")
    spec_kwargs = {k: raw[k] for k in raw if k in fields}
    return experiments.HsiSpec(**spec_kwargs), raw


def _cmd_hsi(args) -> int:
    spec, raw = _hsi_spec_from_file(args.spec)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    data = experiments.hsi_simulate(spec)
    write_smf1(outdir / "x_true.smf1", data.x_true)
    write_smf1(outdir / "y.smf1", data.y)
    _write_json(
        outdir / "meta.json",
        {
            "spec": dataclasses.asdict(spec),
            "noise_sigma": data.noise_sigma,
            "operator": data.op.to_config(),
        },
    )
    if not args.run:
        print(f"hyperspectral dataset written to {outdir}")
        return 0

    scale = float(np.abs(data.y).mean())
    lam = float(raw.get("lam", 2e-3 * scale))
    problem = experiments.hsi_problem(
        data, lam=lam, nu_tv=float(raw.get("nu_tv", 1.0)), nu2_v=float(raw.get("nu2_v", 1.0))
    )
    columns = int(raw.get("columns", 3 * spec.true_rank))
    init = experiments.hsi_init(problem, columns, seed=int(raw.get("solver_seed", 0)))
    cfg = SolverConfig(max_iter=int(raw.get("max_iter", 2000)))
    model, trace = run(problem, cfg, init_model=init)
    _save_model(outdir, model)
    _write_json(outdir / "trace.json", _trace_dict(trace))
    err = experiments.recovery_error(data.x_true, model.U, model.V)
    report = {
        "lam": lam,
        "recovery_error": err,
        "objective": trace.objectives[-1],
        "converged": trace.converged,
    }
    _write_json(outdir / "report.json", report)
    print(json.dumps(report, indent=2))
    return 0 if trace.converged else 2


def _build_parser() -> _Parser:
    parser = _Parser(prog="smf", description="structured matrix factorization runs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run a factorization from a JSON config")
    p_solve.add_argument("--config", required=True)
    p_solve.add_argument("--output", default=None)
    p_solve.set_defaults(func=_cmd_solve)

    p_cert = sub.add_parser("certify", help="check optimality of a saved model")
    p_cert.add_argument("--config", required=True)
    p_cert.add_argument("--model", required=True, help="directory with u.smf1/v.smf1")
    p_cert.add_argument("--output", default=None)
    p_cert.set_defaults(func=_cmd_certify)

    p_ph = sub.add_parser("phantom", help="generate (and optionally solve) the phantom")
    p_ph.add_argument("--spec", default=None, help="JSON overrides for the simulation")
    p_ph.add_argument("--output", required=True)
    p_ph.add_argument("--run", action="store_true")
    p_ph.add_argument("--condition", default="slrtv")
    p_ph.set_defaults(func=_cmd_phantom)

    p_hsi = sub.add_parser("hsi", help="generate (and optionally solve) hyperspectral data")
    p_hsi.add_argument("--spec", default=None)
    p_hsi.add_argument("--output", required=True)
    p_hsi.add_argument("--run", action="store_true")
    p_hsi.set_defaults(func=_cmd_hsi)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
