"""Variational and closed-form constants.

Discrete Sobolev and Rayleigh constants are minima of homogeneous quotients
over the grid fields and so are upper bounds of their continuum values. The
threshold lambda_0 (below which the degenerate Nehari set is empty), the
compactness levels c_inf / C_inf and their thresholds, the Talenti bubble
normalisation and the exponent window for the Brezis-Nirenberg case are closed
forms in those constants.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import BracketError, ConvergenceError, DomainError, ModeError, SpecError
from .model import DiscreteField, make_bump
from .operators import build_nonlocal, cell_quadrature, fsum, local_terms, nonlocal_terms, signed_power
from .optim import Inadmissible, SpectralPreconditioner, lbfgs

RAYLEIGH_TARGETS = ("S_rp", "S_rq", "lambda_1p", "lambda_1q", "S_p")
RAYLEIGH_TOL = 1e-6


# -- Rayleigh quotients ------------------------------------------------------


def quotient_exponents(target, cfg):
    """(numerator term, numerator degree, Lebesgue exponent) of a quotient."""
    table = {
        "S_rp": ("P", cfg.p, cfg.r),
        "S_rq": ("Q", cfg.q, cfg.r),
        "lambda_1p": ("P", cfg.p, cfg.p),
        "lambda_1q": ("Q", cfg.q, cfg.q),
        "S_p": ("P", cfg.p, cfg.p_star),
    }
    if target not in table:
        raise SpecError(f"unknown Rayleigh target {target!r}")
    term, a, t = table[target]
    if not math.isfinite(t):
        raise SpecError(f"{target} needs p < N")
    return term, a, t


@dataclass
class RayleighResult:
    """Minimum of a Rayleigh quotient over the grid fields.

    Attributes:
        target: which quotient.
        value: best value over the starts.
        field: minimiser, normalised to unit denominator.
        iterations: iterations of the best run.
        grid_n: subdivisions per axis.
        start_values: final value of every admissible start.
        rejected_starts: indices of starts with a zero denominator.
    """

    target: str
    value: float
    field: DiscreteField
    iterations: int
    grid_n: int
    converged: bool
    start_values: list = field(default_factory=list)
    rejected_starts: list = field(default_factory=list)


def default_starts(grid):
    """Three deterministic positive starts: the first sine mode and two bumps."""
    x = grid.coords / np.asarray(grid.lengths)
    sine = np.prod(np.sin(np.pi * x), axis=1)
    c = np.asarray(grid.lengths) / 2.0
    off = np.asarray(grid.lengths) * np.linspace(0.35, 0.6, grid.dim)
    L = min(grid.lengths)
    return [
        DiscreteField(grid, sine),
        make_bump(grid, c, 0.45 * L),
        make_bump(grid, off, 0.3 * L),
    ]


def _quotient_evaluator(term, a, t, grid, cfg):
    quad = cell_quadrature(grid)
    asm = build_nonlocal(grid, cfg.s, cfg.q) if term == "Q" else None

    def evaluate(x):
        if term == "P":
            num, dnum = local_terms(x, a, quad, grad=True)
        else:
            num, dnum = nonlocal_terms(x, asm, grad=True)
        ux = quad.interp @ x
        den = quad.weight * fsum(np.abs(ux) ** t)
        if not den > 0.0:
            raise Inadmissible("zero denominator")
        dden = t * (quad.interp.T @ (quad.weight * signed_power(ux, t - 1.0)))
        c = den ** (1.0 / t)
        f = num / c**a
        g = dnum / c ** (a - 1.0) - (a / t) * f * dden / c ** (t - 1.0)
        return x / c, f, g, None

    return evaluate


STALL_WINDOW = 50
STALL_RTOL = 1e-10


def rayleigh_minimize(target, grid, cfg, starts=None, max_iter=5000, tol=RAYLEIGH_TOL):
    """Minimise a Rayleigh quotient by preconditioned descent on its unit sphere.

    Args:
        target: one of ``S_rp``, ``S_rq``, ``lambda_1p``, ``lambda_1q``, ``S_p``.
        grid: the grid.
        cfg: supplies the exponents (and s for the nonlocal quotients).
        starts: initial fields; defaults to :func:`default_starts`.

    Raises:
        SpecError: every start has a zero denominator.
        ConvergenceError: no start met the tolerance within ``max_iter``;
            carries the best result found.
    """
    term, a, t = quotient_exponents(target, cfg)
    starts = default_starts(grid) if starts is None else list(starts)
    evaluate = _quotient_evaluator(term, a, t, grid, cfg)
    precond = SpectralPreconditioner(grid, 1.0)

    def make_stop():
        # With q near 1 the gradient is only Holder continuous and its dual norm
        # stalls long after the value has settled, so a flat value also counts.
        trail = []

        def stop(y, f, g, _):
            trail.append(f)
            if len(trail) > STALL_WINDOW and trail[-STALL_WINDOW - 1] - f <= STALL_RTOL * abs(f):
                return 0.0
            return precond.dual_norm(g) * precond.norm(y) / f - tol

        return stop

    best, values, rejected = None, [], []
    for k, u0 in enumerate(starts):
        x0 = u0.values if isinstance(u0, DiscreteField) else np.asarray(u0, dtype=float)
        try:
            res = lbfgs(evaluate, x0, precond, make_stop(), max_iter=max_iter)
        except Inadmissible:
            rejected.append(k)
            continue
        values.append(res.f)
        if best is None or (res.converged, -res.f) > (best.converged, -best.f):
            best = res
    if best is None:
        raise SpecError(f"{target}: every start has a zero denominator")
    out = RayleighResult(
        target, best.f, DiscreteField(grid, best.x), best.iterations, grid.n, best.converged, values, rejected
    )
    if not best.converged:
        raise ConvergenceError(f"{target}: no start converged in {max_iter} iterations", best=out)
    return out


# -- closed forms --------------------------------------------------------------


def _check_positive(**kw):
    for name, v in kw.items():
        if not v > 0:
            raise DomainError(f"{name} must be positive, got {v!r}")


def lambda0_branch(t, delta, r, S_rt, norm_a, norm_b):
    """One branch of the lambda_0 formula (t = p or t = q)."""
    k = r - delta
    return (
        ((r - t) / k) ** ((r - t) / k)
        * ((t - delta) * S_rt ** (r / t) / (k * norm_b)) ** ((t - delta) / k)
        * (S_rt ** (delta / t) / norm_a) ** ((r - t) / k)
    )


def lambda_branches(cfg):
    """Exponents t in {p, q} whose Sobolev quotient S_rt is positive.

    The nonlocal branch needs r <= q*_s; above it the quotient degenerates
    to 0 and the branch drops out (always the case when r = p* > q*_s).
    """
    out = [cfg.p]
    if cfg.r <= cfg.q_star_s * (1 + 1e-12):
        out.append(cfg.q)
    return out


def lambda0(cfg, S_rp, S_rq, norm_a, norm_b):
    """Threshold below which the degenerate part of the Nehari set is empty.

    ``S_rq`` may be None when the nonlocal branch does not apply.
    """
    _check_positive(S_rp=S_rp, norm_a=norm_a, norm_b=norm_b)
    if not cfg.r > max(cfg.p, cfg.q) > cfg.delta:
        raise DomainError("lambda_0 needs r > max{p,q} > delta")
    vals = [lambda0_branch(cfg.p, cfg.delta, cfg.r, S_rp, norm_a, norm_b)]
    if cfg.q in lambda_branches(cfg) and S_rq is not None:
        _check_positive(S_rq=S_rq)
        vals.append(lambda0_branch(cfg.q, cfg.delta, cfg.r, S_rq, norm_a, norm_b))
    return min(vals)


def _require_critical(cfg):
    if cfg.mode not in ("critical", "bn"):
        raise ModeError(f"needs critical or bn mode, got {cfg.mode}")


def c_delta(cfg, S_p, norm_a_inf, vol_omega):
    """Constant bounding the energy from below on the Nehari set in the critical regimes."""
    _require_critical(cfg)
    _check_positive(S_p=S_p, norm_a_inf=norm_a_inf, vol_omega=vol_omega)
    p, d, ps = cfg.p, cfg.delta, cfg.p_star
    k = 1.0 / d - 1.0 / ps
    inner = ((p / d) * (1.0 / p - 1.0 / ps) / k) ** (-d / p)
    bracket = inner * norm_a_inf * S_p ** (-d / p) * vol_omega ** ((ps - d) / ps)
    return k * bracket ** (p / (p - d))


def c_infinity(cfg, S_p, C_delta, lam=None):
    """Compactness level: c_inf (critical) or C_inf (bn) at ``lam``."""
    _require_critical(cfg)
    lam = cfg.lam if lam is None else lam
    if not lam > 0:
        raise DomainError("lambda must be positive")
    N, p, d = cfg.dim_N, cfg.p, cfg.delta
    tail = C_delta * lam ** (p / (p - d))
    if cfg.mode == "bn":
        return S_p ** (N / p) / N - tail
    return (S_p / lam) ** (N / p) / N - tail


def level_threshold(cfg, S_p, C_delta, lo=1e-12, hi=1e12):
    """Largest lambda with a positive compactness level, by bisection.

    Raises:
        BracketError: no sign change on [lo, hi].
    """
    f = lambda lam: c_infinity(cfg, S_p, C_delta, lam)
    flo, fhi = f(lo), f(hi)
    if not (flo > 0.0 > fhi):
        raise BracketError(f"compactness level does not change sign on [{lo:g}, {hi:g}]")
    # the level is monotone; bisect in log(lambda) for scale freedom
    g = lambda z: f(math.exp(z))
    z = brentq(g, math.log(lo), math.log(hi), xtol=1e-15, rtol=4e-15, maxiter=500)
    return math.exp(z)


def lambda_bar0_closed(cfg, S_p, C_delta):
    """Closed-form root of the bn-mode level: (S_p^(N/p) / (N C_delta))^((p-delta)/p)."""
    N, p, d = cfg.dim_N, cfg.p, cfg.delta
    return (S_p ** (N / p) / (N * C_delta)) ** ((p - d) / p)


def m_exponent(N, p, q, s):
    """Decay exponent of the Gagliardo energy of the truncated bubble."""
    return min(q * (N - p) / (p * (p - 1.0)), q * (1.0 - s) + N * (1.0 - q / p))


def _below(x, y):
    """Strict x < y that treats a rounding-level tie as equality."""
    return x < y and not math.isclose(x, y, rel_tol=1e-12, abs_tol=1e-15)


def bn_window_check(cfg):
    """The two admissible delta windows of the Brezis-Nirenberg regime."""
    if cfg.mode != "bn":
        raise ModeError(f"window check needs bn mode, got {cfg.mode}")
    N, p, q, s, d = cfg.dim_N, cfg.p, cfg.q, cfg.s, cfg.delta
    ps = cfg.p_star
    m = m_exponent(N, p, q, s)
    mid = ps * (1.0 - 1.0 / p)
    cond1 = _below(max(N * p / (m + N - p), mid), d) and _below(d, q)
    s_bound = 1.0 - ((N - p) / (p - 1.0) - N * (1.0 - q / p)) / q
    cond2 = _below(d, min(q, mid)) and 0.0 < s and _below(s, s_bound)
    return {"cond1": bool(cond1), "cond2": bool(cond2), "admissible": bool(cond1 or cond2), "s_bound": s_bound}


def e_lambda(bd, cfg):
    """((r-p)/(r-delta)) P + ((r-q)/(r-delta)) Q - lam A; vanishes on the degenerate Nehari set."""
    k = cfg.r - cfg.delta
    return math.fsum(((cfg.r - cfg.p) / k * bd.P, (cfg.r - cfg.q) / k * bd.Q, -cfg.lam * bd.A))


def talenti_K(N, p):
    """Normalising constant of the Talenti bubble: [N((N-p)/(p-1))^(p-1)]^((N-p)/p^2)."""
    return (N * ((N - p) / (p - 1.0)) ** (p - 1.0)) ** ((N - p) / (p * p))


def sobolev_constant(N, p):
    """Best constant of inf |grad u|_p^p / |u|_{p*}^p over R^N (attained by the bubble)."""
    C = (
        math.pi ** -0.5
        * N ** (-1.0 / p)
        * ((p - 1.0) / (N - p)) ** (1.0 - 1.0 / p)
        * (
            math.gamma(1 + N / 2) * math.gamma(N)
            / (math.gamma(N / p) * math.gamma(1 + N - N / p))
        ) ** (1.0 / N)
    )
    return C ** (-p)


# -- weight norms and the report ------------------------------------------------


def weight_norms(cfg, weights):
    """||a||_{r/(r-delta)}, ||a||_inf and ||b||_inf of the sampled weights."""
    a, b = weights
    quad = cell_quadrature(a.grid)
    e = cfg.r / (cfg.r - cfg.delta)
    la = quad.weight * fsum(np.abs(quad.values(a)) ** e)
    return {
        "norm_a": la ** (1.0 / e),
        "norm_a_inf": float(np.max(np.abs(a.values))),
        "norm_b_inf": float(np.max(np.abs(b.values))),
    }


@dataclass
class ConstantsReport:
    """Constants of one configuration; entries that do not apply are None."""

    grid_n: int
    mode: str
    S_rp: float | None = None
    S_rq: float | None = None
    S_p: float | None = None
    lambda_1p: float | None = None
    lambda_1q: float | None = None
    lambda0: float | None = None
    C_delta: float | None = None
    c_inf: float | None = None
    C_inf: float | None = None
    Lambda0: float | None = None
    LambdaBar0: float | None = None
    Lambda0_capped: float | None = None
    m_exp: float | None = None
    bn_window: dict | None = None
    K_Np: float | None = None
    norms: dict = field(default_factory=dict)
    iterations: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def default_targets(cfg):
    """Quotients the closed forms of ``cfg.mode`` consume.

    Critical and bn modes only need S_p (which equals S_rp there); the
    eigenvalue quotients serve the p < q eigenvalue problem and are left to
    explicit requests in those modes.
    """
    if cfg.mode in ("critical", "bn"):
        return ["S_p"]
    out = ["S_rp", "lambda_1p", "lambda_1q"]
    if cfg.q in lambda_branches(cfg):
        out.insert(1, "S_rq")
    return out


def compute_constants(cfg, weights, grid=None, targets=None):
    """Estimate the quotients on the grid and evaluate every closed form that applies.

    Args:
        targets: quotients to estimate; defaults to :func:`default_targets`.
    """
    from .model import grid_for

    grid = grid or grid_for(cfg)
    critical = cfg.mode in ("critical", "bn")
    if targets is None:
        targets = default_targets(cfg)
    rep = ConstantsReport(grid_n=grid.n, mode=cfg.mode)
    rep.norms = weight_norms(cfg, weights)
    for target in targets:
        if target == "S_rp" and critical and "S_p" in targets:
            continue
        res = rayleigh_minimize(target, grid, cfg)
        setattr(rep, target, res.value)
        rep.iterations[target] = res.iterations
    if critical and rep.S_p is not None:
        rep.S_rp = rep.S_p  # r = p*: the two quotients coincide
    n = rep.norms
    if rep.S_rp is not None:
        rep.lambda0 = lambda0(cfg, rep.S_rp, rep.S_rq, n["norm_a"], n["norm_b_inf"])
    if critical:
        rep.m_exp = m_exponent(cfg.dim_N, cfg.p, cfg.q, cfg.s)
        rep.K_Np = talenti_K(cfg.dim_N, cfg.p)
        if rep.S_p is not None:
            rep.C_delta = c_delta(cfg, rep.S_p, n["norm_a_inf"], grid.volume)
            level = c_infinity(cfg, rep.S_p, rep.C_delta)
            if cfg.mode == "bn":
                rep.C_inf = level
                rep.LambdaBar0 = level_threshold(cfg, rep.S_p, rep.C_delta)
                rep.Lambda0_capped = min(rep.LambdaBar0, rep.lambda0)
            else:
                rep.c_inf = level
                rep.Lambda0 = level_threshold(cfg, rep.S_p, rep.C_delta)
                rep.Lambda0_capped = min(rep.Lambda0, rep.lambda0)
        if cfg.mode == "bn":
            rep.bn_window = bn_window_check(cfg)
    return rep
