"""Energy minimisation on the two Nehari branches.

Every nonzero field u has at most one point t*u on each branch (the fibering
roots), so minimising J over a branch is minimising the ray-invariant function
F(u) = J(t_branch(u) u). Its gradient at a branch point is the energy
gradient itself (the derivative along the ray vanishes there), so a descent
step followed by re-projection onto the branch is a plain manifold descent.
The loop is a preconditioned L-BFGS with Armijo backtracking; trial points
whose ray misses the branch are rejected by the line search.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from . import kernels
from .constants import compute_constants, e_lambda
from .errors import (
    BracketError,
    ConvergenceError,
    DomainError,
    EmptyBranch,
    NehariLabError,
    NoRoots,
    SpecError,
)
from .fibering import branch_root, eval_gamma, root_residual
from .functional import EnergyBreakdown, Problem, assemble_energy
from .model import DiscreteField, make_bump
from .operators import l2_distance
from .optim import Inadmissible, SpectralPreconditioner, lbfgs

BRANCHES = ("plus", "minus")
TOL_RES = 1e-6
MAX_ITER = 10_000
DEDUPE_DIST = 1e-3
MINUS_STARTS = 8


@dataclass
class SolveReport:
    """Outcome of a branch minimisation.

    Attributes:
        branch: ``plus`` or ``minus``.
        field: the accepted field.
        breakdown: its energy terms.
        residual_sup: max |R| over the nodes.
        residual_scaled: dual-norm residual relative to the energy terms.
        gamma_pp_at_1: second derivative of the fibering map at t = 1.
        iterations: iterations of the accepted run.
        starts: per-start metadata (outcome, energy, iterations).
        nonnegativized: whether |u| replaced u after convergence.
        distinct_solutions: starts that converged to pairwise distinct fields.
    """

    branch: str
    field: DiscreteField
    breakdown: EnergyBreakdown
    residual_sup: float
    residual_scaled: float
    gamma_pp_at_1: float
    iterations: int
    converged: bool
    starts: list = field(default_factory=list)
    nonnegativized: bool = False
    distinct_solutions: int = 1

    @property
    def energy(self):
        return self.breakdown.J

    def to_dict(self):
        return {
            "branch": self.branch,
            "energy": self.breakdown.J,
            "breakdown": self.breakdown.to_dict(),
            "residual_sup": self.residual_sup,
            "residual_scaled": self.residual_scaled,
            "gamma_pp_at_1": self.gamma_pp_at_1,
            "iterations": self.iterations,
            "converged": self.converged,
            "starts": self.starts,
            "nonnegativized": self.nonnegativized,
            "distinct_solutions": self.distinct_solutions,
            "grid_n": self.field.grid.n,
            "min_u": float(np.min(self.field.values)),
            "max_u": float(np.max(self.field.values)),
        }


class BranchObjective:
    """Projection onto a branch and the energy with its gradient there."""

    def __init__(self, problem, branch):
        if branch not in BRANCHES:
            raise SpecError(f"branch must be plus or minus, got {branch!r}")
        self.problem = problem
        self.branch = branch
        self.precond = SpectralPreconditioner(problem.grid, 1.0)

    def __call__(self, x):
        cfg = self.problem.cfg
        (P, Q, A, B), (dP, dQ, dA, dB) = self.problem.terms(x, grad=True)
        bd = EnergyBreakdown(P, Q, A, B, assemble_energy(P, Q, A, B, cfg))
        try:
            t = branch_root(bd, cfg, self.branch)
        except (EmptyBranch, NoRoots, BracketError) as exc:
            raise Inadmissible(str(exc)) from exc
        p, q, d, r = cfg.p, cfg.q, cfg.delta, cfg.r
        # each term is homogeneous, so the gradient at t*x is a rescaling
        g = (
            t ** (p - 1) * dP / p
            + t ** (q - 1) * dQ / q
            - cfg.lam * t ** (d - 1) * dA / d
            - cfg.c_r * t ** (r - 1) * dB / r
        )
        bt = bd.scaled(t, cfg)
        return t * x, bt.J, g, bt

    def scaled_residual(self, u, g, bd):
        cfg = self.problem.cfg
        denom = bd.P + bd.Q + cfg.lam * abs(bd.A) + cfg.c_r * abs(bd.B)
        if denom <= 0.0:
            return math.inf
        return self.precond.dual_norm(g) * self.precond.norm(u) / denom


def default_starts(grid, branch, seed=0):
    """Initial fields: a centred bump for ``plus``; bumps at scrambled Halton centres for ``minus``.

    The minus branch has no convexity to lean on, so it gets ``MINUS_STARTS``
    starts and keeps the lowest verified energy.
    """
    L = np.asarray(grid.lengths, dtype=float)
    if branch == "plus":
        return [make_bump(grid, L / 2.0, 0.45 * L.min())]
    pts = qmc.Halton(d=grid.dim, scramble=True, seed=seed).random(MINUS_STARTS)
    centres = L * (0.3 + 0.4 * pts)
    return [make_bump(grid, c, 0.3 * L.min()) for c in centres]


def _run_start(obj, x0, tol, max_iter):
    stop = lambda y, f, g, bd: obj.scaled_residual(y, g, bd) - tol
    return lbfgs(obj, x0, obj.precond, stop, max_iter=max_iter)


def _nonnegative_pass(obj, res, tol, max_iter):
    """Replace u by |u| (re-projected and re-polished) when u has negative entries."""
    u = res.x
    if np.min(u) >= -1e-10 * np.max(np.abs(u)):
        return res, False
    try:
        cand = _run_start(obj, np.abs(u), tol, max_iter)
    except Inadmissible:
        return res, False
    if cand.f > res.f + 1e-8 * max(1.0, abs(res.f)):
        return res, False
    if np.min(cand.x) < -1e-10 * np.max(np.abs(cand.x)):
        x, f, g, st = obj(np.abs(cand.x))
        stop = obj.scaled_residual(x, g, st) - tol
        cand.x, cand.f, cand.grad, cand.state, cand.measure = x, f, g, st, stop
        cand.converged = stop <= 0
    return cand, True


def lambda_hat0(cfg, weights, grid=None):
    """Discrete estimate of the threshold lambda_0 for ``cfg`` and ``weights``."""
    targets = ["S_p"] if cfg.mode in ("critical", "bn") else ["S_rp", "S_rq"]
    from .constants import lambda_branches

    if "S_rq" in targets and cfg.q not in lambda_branches(cfg):
        targets.remove("S_rq")
    return compute_constants(cfg, weights, grid, targets=targets).lambda0


def solve_branch(branch, cfg, weights=None, starts=None, grid=None, *, lam_hat0=None, force=False,
                 seed=0, tol=TOL_RES, max_iter=MAX_ITER, workers=None, problem=None):
    """Minimise the energy over one Nehari branch.

    Args:
        branch: ``plus`` (local minima of the fibering maps) or ``minus``.
        cfg: problem configuration.
        weights: sampled (a, b); defaults to the configuration's weights.
        starts: initial fields; defaults to :func:`default_starts`.
        lam_hat0: precomputed threshold estimate; computed when needed.
        force: skip the lam < lam_hat0 precondition.
        workers: thread cap for independent starts (default from
            ``NEHARI_LAB_THREADS``); results merge in start order.

    Raises:
        DomainError: lam >= lam_hat0 without ``force``.
        EmptyBranch: no start has a root on the branch.
        NoRoots: every start's ray misses the branch because lam is too large.
        ConvergenceError: no start met the tolerance; carries the best report.
    """
    problem = problem or Problem(cfg, grid, weights)
    cfg, grid = problem.cfg, problem.grid
    if not force:
        lam_hat0 = lam_hat0 if lam_hat0 is not None else lambda_hat0(cfg, problem.weights, grid)
        if not cfg.lam < lam_hat0:
            raise DomainError(f"lambda = {cfg.lam:g} is not below the threshold estimate {lam_hat0:g}")
    obj = BranchObjective(problem, branch)
    starts = default_starts(grid, branch, seed) if starts is None else list(starts)
    xs = [u.values if isinstance(u, DiscreteField) else np.asarray(u, dtype=float) for u in starts]

    def run(x0):
        try:
            return _run_start(obj, x0, tol, max_iter), None
        except Inadmissible as exc:
            return None, exc.__cause__ or exc

    nworkers = min(workers or kernels.max_workers(), len(xs))
    if nworkers > 1:
        with ThreadPoolExecutor(max_workers=nworkers) as pool:
            outcomes = list(pool.map(run, xs))
    else:
        outcomes = [run(x0) for x0 in xs]

    meta, results = [], []
    for k, (res, err) in enumerate(outcomes):
        if res is None:
            meta.append({"start": k, "outcome": type(err).__name__})
            continue
        meta.append({"start": k, "outcome": "converged" if res.converged else "NoConvergence",
                     "energy": res.f, "iterations": res.iterations})
        results.append(res)
    if not results:
        kinds = {m["outcome"] for m in meta}
        if kinds == {"NoRoots"}:
            raise NoRoots(f"{branch} branch: lambda too large for every start")
        raise EmptyBranch(f"{branch} branch: no start has a fibering root on it ({sorted(kinds)})")

    converged = [r for r in results if r.converged]
    pool_ = converged or results
    best = min(pool_, key=lambda r: r.f)  # min keeps the first of equal energies
    distinct = []
    for r in converged:
        if all(l2_distance(DiscreteField(grid, r.x), DiscreteField(grid, d.x)) > DEDUPE_DIST for d in distinct):
            distinct.append(r)
    nonneg = False
    if best.converged:
        best, nonneg = _nonnegative_pass(obj, best, tol, max_iter)
    report = _make_report(obj, best, meta, nonneg, max(1, len(distinct)))
    if not report.converged:
        raise ConvergenceError(f"{branch} branch: no start converged in {max_iter} iterations",
                               best=report, diagnostics=meta)
    return report


def _make_report(obj, res, meta, nonneg, distinct):
    cfg = obj.problem.cfg
    bd = res.state
    gpp = eval_gamma(bd, 1.0, cfg).ddgamma
    return SolveReport(
        branch=obj.branch,
        field=DiscreteField(obj.problem.grid, res.x),
        breakdown=bd,
        residual_sup=float(np.max(np.abs(res.grad))),
        residual_scaled=obj.scaled_residual(res.x, res.grad, bd),
        gamma_pp_at_1=gpp,
        iterations=res.iterations,
        converged=bool(res.converged),
        starts=meta,
        nonnegativized=nonneg,
        distinct_solutions=distinct,
    )


@dataclass
class Verification:
    passed: bool
    checks: dict

    def to_dict(self):
        return {"passed": self.passed, "checks": self.checks}


def verify_solution(report, cfg, weights=None, tol_res=TOL_RES, problem=None):
    """Recompute every acceptance predicate of a solver report from its field.

    ``report`` may also be a bare DiscreteField, in which case the branch is
    read off the sign of gamma''(1).
    """
    u = report.field if isinstance(report, SolveReport) else report
    problem = problem or Problem(cfg, u.grid, weights)
    bd, res = problem.breakdown_and_residual(u.values)
    checks = {}
    if not np.any(u.values) or bd.P + bd.Q <= 0.0:
        checks["on_manifold"] = {"ok": False, "reason": "NotOnManifold", "value": 0.0}
        return Verification(False, checks)
    gam = eval_gamma(bd, 1.0, cfg)
    branch = report.branch if isinstance(report, SolveReport) else ("plus" if gam.ddgamma > 0 else "minus")
    obj = BranchObjective(problem, branch)
    rel = root_residual(bd, 1.0, cfg)
    checks["on_manifold"] = {"ok": rel <= 1e-10, "value": rel}
    try:
        t = branch_root(bd, cfg, branch)
        checks["projection_fixed"] = {"ok": abs(t - 1.0) <= 1e-6, "value": t}
    except NehariLabError as exc:
        checks["projection_fixed"] = {"ok": False, "reason": type(exc).__name__, "value": None}
    sign = 1.0 if branch == "plus" else -1.0
    checks["gamma_pp_sign"] = {"ok": sign * gam.ddgamma > 0.0, "value": gam.ddgamma}
    checks["energy_sign"] = {"ok": -sign * bd.J > 0.0, "value": bd.J}
    scaled = obj.scaled_residual(u.values, res, bd)
    checks["residual"] = {"ok": scaled <= tol_res, "value": scaled}
    umin, umax = float(np.min(u.values)), float(np.max(np.abs(u.values)))
    checks["nonnegative"] = {"ok": umin >= -1e-10 * umax, "value": umin}
    el = e_lambda(bd, cfg)
    checks["e_lambda_nonzero"] = {"ok": abs(el) > 1e-8 * (bd.P + bd.Q), "value": el}
    return Verification(all(c["ok"] for c in checks.values()), checks)


def lambda_sweep(cfg, lams, branches=BRANCHES, weights=None, grid=None, lam_hat0=None, seed=0,
                 max_iter=2000, starts=None):
    """Solve each branch at every lambda of a grid and tabulate the outcomes.

    Outcomes are ``solved``, ``EmptyBranch``, ``NoRoots`` or ``NoConvergence``.
    The table is descriptive: a failure at some lambda does not certify
    nonexistence in the continuum problem.
    """
    lams = list(lams)
    if not lams:
        raise SpecError("lambda grid is empty")
    if any(not lam > 0 for lam in lams):
        raise SpecError("every lambda in the sweep must be positive")
    base = Problem(cfg, grid, weights)
    if lam_hat0 is None:
        lam_hat0 = lambda_hat0(cfg, base.weights, base.grid)
    rows = []
    for lam in lams:
        prob = base.with_lambda(lam)
        for branch in branches:
            row = {"lambda": lam, "branch": branch, "above_lambda_hat0": lam >= lam_hat0}
            try:
                rep = solve_branch(branch, prob.cfg, problem=prob, force=True, seed=seed,
                                   max_iter=max_iter, starts=starts)
                row.update(outcome="solved", **rep.breakdown.to_dict())
            except EmptyBranch:
                row["outcome"] = "EmptyBranch"
            except NoRoots:
                row["outcome"] = "NoRoots"
            except ConvergenceError as exc:
                row["outcome"] = "NoConvergence"
                if exc.best is not None:
                    row.update(exc.best.breakdown.to_dict())
            rows.append(row)
    return rows
