"""Batch front-end: ``solve``, ``optimize``, ``verify`` and ``sweep`` subcommands.

A run is described by one JSON file with the blocks ``problem``, ``scheme``,
``optimizer``, ``verify`` and ``output``.  Unknown keys are errors and the
physical parameters have no defaults.  Every artifact carries the config
hash and the library versions; wall-clock times are deliberately left out so
that identical inputs give byte-identical files.

Exit codes: 0 ok, 2 config error, 3 solver failure, 4 optimizer
non-convergence, 5 verification failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import hashlib
import json
import math
import os
import platform
import sys
import warnings

import numpy as np
import scipy

from . import __version__
from .errors import AssemblyFailure, InvalidArgument, StepFailure
from .fields import (
    ControlField,
    norm_CtL2,
    norm_L2H1a,
    norm_L2_space,
    norm_Linf,
    write_control_csv,
    write_trajectory_csv,
)
from .geometry import ControlRegion
from .optimizer import OptimizerOptions, certify, initial_control, optimize
from .problem import ProblemSetup, coefficient_from_spec, control_from_spec
from .reduced import cost, trichotomy_audit
from .solvers import SchemeOptions, solve_state
from .verification import (
    check_max_principles,
    convergence_study,
    gradient_check,
    hessian_check,
    lipschitz_probe,
)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_NONCONVERGED, EXIT_VERIFY = 0, 2, 3, 4, 5

PROBLEM_REQUIRED = ("coefficient", "omega", "T", "n_steps", "n_cells", "m", "M", "alpha", "y0", "yd")
PROBLEM_OPTIONAL = ("grading", "control", "quad_order")
SCHEME_KEYS = ("theta", "mass", "shift_r", "linear_solver_tol")
OPTIMIZER_KEYS = (
    "max_iters",
    "stationarity_tol",
    "armijo_c",
    "backtrack_factor",
    "initial_step",
    "min_step",
    "continuation",
    "active_tau",
    "initial",
    "certify",
)
CERTIFY_KEYS = ("n_hessian", "n_growth", "eps_probe", "tau", "tol")
VERIFY_KEYS = (
    "n_random_controls",
    "n_gradient_pairs",
    "n_hessian_directions",
    "n_lipschitz_pairs",
    "convergence_levels",
    "convergence_n_cells",
    "convergence_n_steps",
    "perturbation",
)
OUTPUT_KEYS = ("directory", "dump_trajectories")
SUITES = ("max_principle", "gradient", "hessian", "lipschitz", "convergence")


class ConfigError(InvalidArgument):
    pass


def _check_keys(block, name, allowed, required=()):
    if not isinstance(block, dict):
        raise ConfigError(f"block {name!r} must be a JSON object")
    extra = sorted(set(block) - set(allowed))
    if extra:
        raise ConfigError(f"unknown keys in {name!r}: {extra}")
    missing = [k for k in required if k not in block]
    if missing:
        raise ConfigError(f"missing required keys in {name!r}: {missing}")


@dataclasses.dataclass
class RunConfig:
    raw: dict
    setup: ProblemSetup
    scheme: SchemeOptions
    optimizer: dict
    verify: dict
    output: dict

    @property
    def hash(self):
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    @classmethod
    def from_dict(cls, raw):
        try:
            return cls._from_dict(raw)
        except (TypeError, KeyError, ValueError) as exc:
            if isinstance(exc, InvalidArgument):
                raise
            raise ConfigError(f"malformed config: {exc}") from exc

    @classmethod
    def _from_dict(cls, raw):
        _check_keys(raw, "config", ("problem", "scheme", "optimizer", "verify", "output"), ("problem",))
        prob = raw["problem"]
        _check_keys(prob, "problem", PROBLEM_REQUIRED + PROBLEM_OPTIONAL, PROBLEM_REQUIRED)
        omega = prob["omega"]
        if omega == "all":
            region = ControlRegion.whole()
        elif isinstance(omega, list):
            region = ControlRegion([tuple(iv) for iv in omega])
        else:
            raise ConfigError("omega must be 'all' or a list of [a, b] intervals")
        for key in ("T", "m", "M", "alpha"):
            val = prob[key]
            if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
                raise ConfigError(f"problem.{key} must be a finite number, got {val!r}")
        for key in ("n_steps", "n_cells"):
            if isinstance(prob[key], bool) or not isinstance(prob[key], int):
                raise ConfigError(f"problem.{key} must be an integer, got {prob[key]!r}")
        setup = ProblemSetup(
            coefficient=coefficient_from_spec(prob["coefficient"]),
            region=region,
            T=float(prob["T"]),
            n_steps=prob["n_steps"],
            n_cells=prob["n_cells"],
            m=float(prob["m"]),
            M=float(prob["M"]),
            alpha=float(prob["alpha"]),
            y0=prob["y0"],
            yd=prob["yd"],
            grading=prob.get("grading", "uniform"),
            control=prob.get("control"),
            quad_order=prob.get("quad_order", 3),
        )
        scheme_block = raw.get("scheme", {})
        _check_keys(scheme_block, "scheme", SCHEME_KEYS)
        scheme = SchemeOptions(**scheme_block)
        opt_block = raw.get("optimizer", {})
        _check_keys(opt_block, "optimizer", OPTIMIZER_KEYS)
        _check_keys(opt_block.get("certify", {}), "optimizer.certify", CERTIFY_KEYS)
        OptimizerOptions(**_optimizer_kwargs(opt_block, 0))  # validate early
        ver_block = raw.get("verify", {})
        _check_keys(ver_block, "verify", VERIFY_KEYS)
        out_block = raw.get("output", {})
        _check_keys(out_block, "output", OUTPUT_KEYS)
        return cls(raw, setup, scheme, opt_block, ver_block, out_block)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)


def _optimizer_kwargs(block, seed):
    kw = {k: v for k, v in block.items() if k not in ("initial", "certify")}
    kw["seed"] = seed
    return kw


def _provenance(cfg, seed, command):
    return {
        "command": command,
        "config_hash": cfg.hash,
        "seed": seed,
        "versions": {
            "degcontrol": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(c)) if isinstance(c, (float, np.floating)) else c for c in row])


def _out_dir(args, cfg):
    out = args.out or cfg.output.get("directory") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _build(cfg, seed):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        spec, ops = cfg.setup.build(cfg.scheme, seed)
    return spec, ops, [str(w.message) for w in caught]


def _dump(args, cfg):
    return bool(args.dump_trajectories or cfg.output.get("dump_trajectories", False))


# --- solve -------------------------------------------------------------------


def _uniform_prediction(spec, ops, v):
    """Closed-form implicit-Euler value when omega is everything and data are constant."""
    if ops.n_control != ops.n_nodes or spec.time.n_steps == 0:
        return None
    if np.ptp(v.values) != 0 or np.ptp(spec.y0) != 0:
        return None
    lam, dt = float(v.values[0, 0]), spec.time.dt
    return float(spec.y0[0]) * (1.0 - lam * dt) ** (-spec.time.n_steps)


def cmd_solve(args, cfg):
    spec, ops, notes = _build(cfg, args.seed)
    if cfg.setup.control is None:
        raise ConfigError("solve needs problem.control")
    v = cfg.setup.control_field(spec, ops, args.seed)
    y = solve_state(spec, ops, v, cfg.scheme)
    out = _out_dir(args, cfg)
    write_trajectory_csv(os.path.join(out, "trajectory.csv"), y, ops, spec.time)
    T = spec.time.T
    grow = math.exp((v.sup + 1.0) * T)
    mass = ops.mass(cfg.scheme.mass)
    totals = y.values @ (mass @ np.ones(ops.n_nodes))
    ref = abs(totals[0]) if totals[0] != 0 else 1.0
    summary = {
        **_provenance(cfg, args.seed, "solve"),
        "warnings": notes,
        "control_sup": v.sup,
        "norms": {
            "C_L2": norm_CtL2(y, ops),
            "L2_H1a": norm_L2H1a(y, ops, spec.time),
            "final_L2": norm_L2_space(y.final, ops),
            "sup": norm_Linf(y),
            "min": float(y.values.min()),
        },
        "bounds": {
            "sup_bound": grow * norm_Linf(spec.y0),
            "sup_ok": bool(norm_Linf(y) <= grow * norm_Linf(spec.y0) * (1 + 1e-12)),
            "energy_bound": 2.0 * grow * norm_L2_space(spec.y0, ops),
        },
        "mass_drift": float(np.max(np.abs(totals - totals[0])) / ref),
        "cost": cost(spec, ops, v, y, cfg.scheme),
        "uniform_mode_prediction": _uniform_prediction(spec, ops, v),
    }
    _write_json(os.path.join(out, "summary.json"), summary)
    return EXIT_OK


# --- optimize ----------------------------------------------------------------


def _run_optimize(cfg, seed, out, dump):
    """Optimize, certify and write artifacts into ``out``; returns (exit code, row dict)."""
    spec, ops, notes = _build(cfg, seed)
    options = OptimizerOptions(**_optimizer_kwargs(cfg.optimizer, seed))
    if "initial" in cfg.optimizer:
        u0 = control_from_spec(cfg.optimizer["initial"], spec, ops, seed)
    else:
        u0 = initial_control(spec, ops, options)
    result = optimize(spec, ops, u0, options, cfg.scheme)
    os.makedirs(out, exist_ok=True)
    _write_rows(os.path.join(out, "iterations.csv"), ["iter", "cost", "residual", "step"], result.log_rows())
    write_control_csv(os.path.join(out, "control.csv"), result.control, ops, spec.time)
    if dump:
        write_trajectory_csv(os.path.join(out, "state.csv"), result.state, ops, spec.time)
        write_trajectory_csv(os.path.join(out, "adjoint.csv"), result.adjoint, ops, spec.time)
    e = result.state.final - spec.yd
    misfit = 0.5 * float(e @ (ops.mass(cfg.scheme.mass) @ e))
    report = {
        **_provenance(cfg, seed, "optimize"),
        "warnings": notes,
        "converged": result.converged,
        "status": result.status,
        "iterations": result.iterations,
        "final_cost": result.final_cost,
        "misfit": misfit,
        "stationarity_residual": result.final_residual,
        "ssc": result.ssc.to_dict(),
        "active_set": result.active_set.summary(),
        "continuation": result.stages,
    }
    row = {
        "cost": result.final_cost,
        "residual": result.final_residual,
        "delta": result.ssc.delta,
        "gamma_hat": None,
        "status": result.status,
    }
    if result.converged:
        ck = dict(cfg.optimizer.get("certify", {}))
        rec = certify(spec, ops, result, cfg.scheme, seed=seed, **ck)
        report["certification"] = rec.to_dict()
        row["gamma_hat"] = rec.gamma_hat
        code = EXIT_OK
    else:
        report["certification"] = None
        report["trichotomy"] = trichotomy_audit(spec, ops, result.control, result.state, result.adjoint, opts=cfg.scheme)
        code = EXIT_NONCONVERGED
    _write_json(os.path.join(out, "certification.json"), report)
    return code, row


def cmd_optimize(args, cfg):
    code, _ = _run_optimize(cfg, args.seed, _out_dir(args, cfg), _dump(args, cfg))
    if code == EXIT_NONCONVERGED:
        print("optimizer did not converge; see certification.json", file=sys.stderr)
    return code


# --- verify ------------------------------------------------------------------


def _suite_reports(name, cfg, spec, ops, seed):
    vb = cfg.verify
    opts = cfg.scheme
    rng = np.random.default_rng(seed)
    amp = vb.get("perturbation", 0.5)
    if name == "max_principle":
        return [check_max_principles(spec, ops, vb.get("n_random_controls", 1000), seed, opts)]
    mid = 0.5 * (spec.m + spec.M)
    half = 0.25 * (spec.M - spec.m)

    def interior(scale=1.0):
        return ControlField.random(spec, ops, rng, mid - scale * half, mid + scale * half)

    if name == "gradient":
        reps = []
        for _ in range(vb.get("n_gradient_pairs", 5)):
            u = interior()
            w = ControlField(rng.uniform(-amp, amp, u.shape) * half, spec.m, spec.M)
            reps.append(gradient_check(spec, ops, u, w, opts=opts))
        u = interior()
        reps.append(gradient_check(spec, ops, u, ControlField.constant(spec, ops, 0.0), opts=opts))
        return reps
    if name == "hessian":
        u = interior()
        dirs = []
        for _ in range(vb.get("n_hessian_directions", 4)):
            w = rng.uniform(-1.0, 1.0, u.shape)
            w *= half / np.max(np.abs(w))
            dirs.append(ControlField(w, spec.m, spec.M))
        return [hessian_check(spec, ops, u, dirs, opts=opts)]
    if name == "lipschitz":
        return [lipschitz_probe(spec, ops, vb.get("n_lipschitz_pairs", 100), seed, opts)]
    if name == "convergence":
        levels = vb.get("convergence_levels", [0, 1, 2])
        base = dataclasses.replace(
            cfg.setup,
            n_cells=vb.get("convergence_n_cells", max(4, cfg.setup.n_cells // 4)),
            n_steps=vb.get("convergence_n_steps", max(4, cfg.setup.n_steps // 4)),
        )
        return [convergence_study(base, levels, opts=opts, seed=seed)]
    raise ConfigError(f"unknown suite {name!r}")


def cmd_verify(args, cfg):
    suite = args.suite or "all"
    names = SUITES if suite == "all" else (suite,)
    for n in names:
        if n not in SUITES:
            raise ConfigError(f"unknown suite {n!r}; choose from {', '.join(SUITES + ('all',))}")
    spec, ops, notes = _build(cfg, args.seed)
    checks = []
    for n in names:
        checks.extend(r.to_dict() for r in _suite_reports(n, cfg, spec, ops, args.seed))
    passed = all(c["status"] == "pass" for c in checks)
    out = _out_dir(args, cfg)
    _write_json(
        os.path.join(out, "verify_report.json"),
        {
            **_provenance(cfg, args.seed, "verify"),
            "suite": suite,
            "scheme": {"theta": cfg.scheme.theta, "mass": cfg.scheme.mass},
            "warnings": notes,
            "status": "pass" if passed else "fail",
            "checks": checks,
        },
    )
    for c in checks:
        print(f"{c['check']}: {c['status']}")
    return EXIT_OK if passed else EXIT_VERIFY


# --- sweep -------------------------------------------------------------------


def _parse_sweep(text):
    if not text or "=" not in text:
        raise ConfigError("--sweep expects key=v1,v2,...")
    key, _, vals = text.partition("=")
    tokens = [t for t in vals.split(",") if t.strip()]
    if not tokens:
        raise ConfigError("--sweep needs at least one value")
    values = []
    for t in tokens:
        try:
            values.append(json.loads(t))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"sweep value {t!r} is not a JSON scalar") from exc
    path = key.strip().split(".")
    if len(path) == 1:
        path = ["problem"] + path
    return path, values


def _set_path(raw, path, value):
    node = raw
    for p in path[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {'.'.join(path)}")
    node[path[-1]] = value


def cmd_sweep(args, cfg):
    path, values = _parse_sweep(args.sweep)
    out = _out_dir(args, cfg)
    rows, codes = [], []
    for k, val in enumerate(values):
        raw = copy.deepcopy(cfg.raw)
        _set_path(raw, path, val)
        row = {"value": val, "cost": None, "residual": None, "delta": None, "gamma_hat": None}
        try:
            sub = RunConfig.from_dict(raw)
            code, res = _run_optimize(sub, args.seed, os.path.join(out, f"row_{k:03d}"), _dump(args, cfg))
            row.update(res)
            row["error"] = ""
        except (InvalidArgument, AssemblyFailure) as exc:
            code, row["status"], row["error"] = EXIT_CONFIG, "config_error", str(exc)
        except StepFailure as exc:
            code, row["status"], row["error"] = EXIT_SOLVER, "solver_failure", str(exc)
        row["exit_code"] = code
        rows.append(row)
        codes.append(code)
    header = ["value", "cost", "residual", "delta", "gamma_hat", "status", "exit_code", "error"]
    _write_rows(
        os.path.join(out, "sweep.csv"),
        header,
        [["" if r.get(h) is None else r.get(h) for h in header] for r in rows],
    )
    _write_json(
        os.path.join(out, "sweep.json"),
        {**_provenance(cfg, args.seed, "sweep"), "parameter": ".".join(path), "rows": rows},
    )
    if any(c == EXIT_OK for c in codes):
        return EXIT_OK
    return codes[0]


# --- entry point ---------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="degcontrol", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "optimize", "verify", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--dump-trajectories", action="store_true")
        if name == "verify":
            p.add_argument("--suite", default="all", metavar="NAME")
        if name == "sweep":
            p.add_argument("--sweep", required=True, metavar="KEY=V1,V2,...")
    return parser


COMMANDS = {"solve": cmd_solve, "optimize": cmd_optimize, "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = RunConfig.load(args.config)
        return COMMANDS[args.command](args, cfg)
    except StepFailure as exc:
        print(f"solver failure at step {exc.step}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InvalidArgument, AssemblyFailure) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
