"""Command-line front end: ``nehari-lab <subcommand> --config FILE --out DIR``.

Every run writes its reports into ``--out`` and finishes with
``manifest.json``, which lists each emitted file with its SHA-256.
Exit codes: 0 success, 2 invalid configuration, 1 runtime error, 64 usage.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import constants, fibering, gev_lab, nehari_solver, talenti
from .errors import NehariLabError
from .functional import Problem
from .model import DiscreteField, ProblemConfig, grid_for, load_config, make_bump, validate_config

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID, EXIT_USAGE = 0, 1, 2, 64
SUBCOMMANDS = ("validate", "constants", "fibering", "solve", "sweep", "talenti", "gev")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser():
    parser = _Parser(prog="nehari-lab", description="Nehari-manifold laboratory.")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value configuration file")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--grid-n", type=int, help="override grid_n")
    common.add_argument("--mode", choices=("subcritical", "critical", "bn"), help="override mode")
    common.add_argument("--deterministic", action="store_true",
                        help="omit wall time so repeated runs are byte-identical")
    common.add_argument("--force", action="store_true", help="skip the lambda threshold check")

    sub.add_parser("validate", parents=[common], help="check the standing assumptions")
    sub.add_parser("constants", parents=[common], help="Sobolev quotients and closed-form constants")

    p = sub.add_parser("fibering", parents=[common], help="fibering map of one field")
    p.add_argument("--field", type=Path, help="field CSV (coordinates then u); default a centred bump")
    p.add_argument("--samples", type=int, default=200)

    p = sub.add_parser("solve", parents=[common], help="minimise over the Nehari branches")
    p.add_argument("--branch", choices=("plus", "minus", "both"), default="both")
    p.add_argument("--lambda-factor", type=float,
                   help="set lambda to this multiple of the threshold estimate")

    p = sub.add_parser("sweep", parents=[common], help="solve both branches over a lambda grid")
    p.add_argument("--lambda-factors", type=_floats, default=[0.25, 0.5, 0.75, 1.0, 1.25],
                   help="comma-separated multiples of the threshold estimate")
    p.add_argument("--max-iter", type=int, default=2000)

    p = sub.add_parser("talenti", parents=[common], help="Talenti family slopes and energy scan")
    p.add_argument("--r0", type=float, default=0.125)
    p.add_argument("--eps", type=_floats, help="comma-separated eps values (default r0 * 2^-k)")
    p.add_argument("--lambda-factor", type=float, default=0.1,
                   help="scan at this multiple of Lambda0")

    p = sub.add_parser("gev", parents=[common], help="eigenvalue-problem bound curve and probe")
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--s-grid", type=_floats, default=list(np.linspace(-2.0, 2.0, 17)))
    p.add_argument("--alpha", type=float, help="probe alpha (default 2 lambda_1p)")
    p.add_argument("--beta", type=float, default=0.0)
    return parser


# -- output --------------------------------------------------------------------


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


class Emitter:
    """Writes report files into one directory and remembers their hashes."""

    def __init__(self, out):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []

    def _write(self, name, text):
        data = text.encode("utf-8")
        (self.out / name).write_bytes(data)
        self.files.append({"path": name, "sha256": hashlib.sha256(data).hexdigest()})

    def json(self, name, payload):
        self._write(name, json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n")

    def csv(self, name, header, rows):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        self._write(name, buf.getvalue())

    def manifest(self, command, cfg, args, started):
        payload = {
            "subcommand": command,
            "config": cfg.to_dict() if cfg is not None else None,
            "seed": args.seed,
            "deterministic": args.deterministic,
            "outputs": list(self.files),
        }
        if not args.deterministic:
            payload["wall_time"] = time.perf_counter() - started
        text = json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n"
        (self.out / "manifest.json").write_text(text, encoding="utf-8")


def _axis_names(dim):
    return ["x", "y", "z"][:dim] if dim <= 3 else [f"x{k + 1}" for k in range(dim)]


def field_rows(u):
    return [(*xs, v) for xs, v in zip(u.grid.coords.tolist(), u.values.tolist())]


def read_field(path, grid):
    """Interior field from a CSV with coordinate columns and a final value column."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return DiscreteField(grid, data[:, -1])


# -- subcommands -------------------------------------------------------------------


def _config(args):
    cfg = load_config(args.config) if args.config else ProblemConfig()
    changes = {}
    if args.grid_n is not None:
        changes["grid_n"] = args.grid_n
    if args.mode is not None:
        changes["mode"] = args.mode
    return cfg.with_(**changes) if changes else cfg


def cmd_constants(cfg, args, emit):
    prob = Problem(cfg)
    rep = constants.compute_constants(cfg, prob.weights, prob.grid)
    emit.json("constants.json", rep.to_dict())


def cmd_fibering(cfg, args, emit):
    prob = Problem(cfg)
    grid = prob.grid
    if args.field:
        u = read_field(args.field, grid)
    else:
        L = np.asarray(grid.lengths, dtype=float)
        u = make_bump(grid, L / 2.0, 0.45 * L.min())
    bd = prob.breakdown(u)
    rep = fibering.fibering_roots(bd, cfg)
    ts = fibering.sample_grid(rep, args.samples)
    rows = [(float(t), *fibering.eval_gamma(bd, float(t), cfg)[:3]) for t in ts]
    emit.json("fibering.json", {**rep.to_dict(), "breakdown": bd.to_dict(),
                                "sign_changes": fibering.sign_changes(bd, cfg, ts)})
    emit.csv("fibering.csv", ["t", "gamma", "dgamma", "ddgamma"], rows)


def _with_lambda_factor(cfg, prob, factor):
    lam_hat0 = nehari_solver.lambda_hat0(cfg, prob.weights, prob.grid)
    if factor is None:
        return prob, lam_hat0
    return prob.with_lambda(factor * lam_hat0), lam_hat0


def cmd_solve(cfg, args, emit):
    prob, lam_hat0 = _with_lambda_factor(cfg, Problem(cfg), args.lambda_factor)
    branches = ("plus", "minus") if args.branch == "both" else (args.branch,)
    names = _axis_names(cfg.dim_N)
    for branch in branches:
        rep = nehari_solver.solve_branch(branch, prob.cfg, problem=prob, lam_hat0=lam_hat0,
                                         force=args.force, seed=args.seed)
        check = nehari_solver.verify_solution(rep, prob.cfg, problem=prob)
        emit.json(f"solve_{branch}.json", {**rep.to_dict(), "lambda": prob.cfg.lam,
                                           "lambda_hat0": lam_hat0, "verification": check.to_dict()})
        emit.csv(f"field_{branch}.csv", [*names, "u"], field_rows(rep.field))


def cmd_sweep(cfg, args, emit):
    prob = Problem(cfg)
    lam_hat0 = nehari_solver.lambda_hat0(cfg, prob.weights, prob.grid)
    lams = [f * lam_hat0 for f in args.lambda_factors]
    rows = nehari_solver.lambda_sweep(cfg, lams, weights=prob.weights, grid=prob.grid,
                                      lam_hat0=lam_hat0, seed=args.seed, max_iter=args.max_iter)
    header = ["lambda", "branch", "outcome", "above_lambda_hat0", "J"]
    emit.csv("sweep.csv", header, [[r.get(k) for k in header] for r in rows])
    emit.json("sweep.json", {"lambda_hat0": lam_hat0, "rows": rows})


def cmd_talenti(cfg, args, emit):
    prob = Problem(cfg)
    rep = constants.compute_constants(cfg, prob.weights, prob.grid)
    eps_list = args.eps or talenti.default_eps(args.r0)
    fam = talenti.build_family(cfg, eps_list, args.r0, grid=prob.grid)
    slopes = talenti.slope_report(fam)
    table = fam.table()
    header = list(table[0])
    emit.csv("talenti_table.csv", header, [[row[k] for k in header] for row in table])

    threshold = rep.Lambda0 if cfg.mode == "critical" else rep.LambdaBar0
    lam = args.lambda_factor * threshold
    scan_cfg = cfg.with_(lam=lam)
    beta = talenti.beta_choices(cfg.dim_N, cfg.p, cfg.q, cfg.s)
    eps = lam ** beta["max_form"]
    scan_fam = talenti.build_family(scan_cfg, [eps], args.r0)
    bd = talenti.radial_breakdown(scan_fam, eps, scan_cfg, prob.weights)
    scan = talenti.sup_scan(scan_cfg, bd, rep.S_p, rep.C_delta, eps)
    emit.json("talenti.json", {
        "K_Np": fam.K_Np,
        "r0": fam.r0,
        "eps": fam.eps,
        "t_values": fam.t_values,
        **slopes.to_dict(),
        "scan": {**scan.to_dict(), "lambda": lam, "beta": beta, "threshold": threshold},
    })


def cmd_gev(cfg, args, emit):
    prob = Problem(cfg)
    eig1 = constants.rayleigh_minimize("lambda_1p", prob.grid, cfg)
    eig2 = constants.rayleigh_minimize("lambda_1q", prob.grid, cfg)
    phi = eig1.field.like(np.abs(eig1.field.values))
    curve = gev_lab.build_curve(args.s_grid, phi, args.rho, cfg, test_field="phi_1p", asm=prob.asm)
    emit.csv("gev_curve.csv", ["s", "U"], curve.rows())
    eig = {"lambda_1p": eig1.value, "phi_p": phi, "lambda_1q": eig2.value}
    norms = gev_lab.probe_norms(phi, cfg, prob.asm)
    alpha = 2.0 * eig1.value if args.alpha is None else args.alpha
    probe = gev_lab.existence_probe(alpha, args.beta, cfg, eig, norms)
    emit.json("gev.json", {
        **curve.to_dict(),
        "monotonicity": gev_lab.curve_monotonicity(curve),
        "lambda_1p": eig1.value,
        "lambda_1q": eig2.value,
        "probe": probe.to_dict(),
    })


COMMANDS = {
    "constants": cmd_constants,
    "fibering": cmd_fibering,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "talenti": cmd_talenti,
    "gev": cmd_gev,
}


def dispatch(argv):
    """Run one subcommand and return the exit code."""
    parser = build_parser()
    if not argv or argv[0] not in SUBCOMMANDS + ("-h", "--help"):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"nehari-lab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    started = time.perf_counter()
    try:
        cfg = _config(args)
    except (NehariLabError, OSError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    violations = validate_config(cfg)
    emit = Emitter(args.out)
    if args.command == "validate":
        for v in violations:
            print(v)
        emit.json("validation.json", {"valid": not violations, "violations": violations})
        emit.manifest(args.command, cfg, args, started)
        if not violations:
            print("configuration is valid")
        return EXIT_INVALID if violations else EXIT_OK
    if violations:
        for v in violations:
            print(v, file=sys.stderr)
        return EXIT_INVALID
    try:
        COMMANDS[args.command](cfg, args, emit)
    except (NehariLabError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        emit.manifest(args.command, cfg, args, started)
        return EXIT_RUNTIME
    emit.manifest(args.command, cfg, args, started)
    return EXIT_OK


def main(argv=None):
    sys.exit(dispatch(sys.argv[1:] if argv is None else argv))
