"""Fibering-map geometry: the energy along the ray t -> t*u.

Everything here depends on the field only through its breakdown (P, Q, A, B):

    gamma(t) = t^p P/p + t^q Q/q - lam t^delta A/delta - c_r t^r B/r,
    m(t)     = t^(p-delta) P + t^(q-delta) Q - c_r t^(r-delta) B,

and gamma'(t) = t^(delta-1) (m(t) - lam A), so the Nehari points t*u are the
solutions of m(t) = lam A. When B > 0, m rises to a single maximum at t_max
and then falls, which gives at most two roots; the one on the rising side is a
local minimum of gamma and the one on the falling side a local maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .errors import BracketError, DomainError, EmptyBranch, NoRoots

BOTH_POSITIVE = "BothPositive"
A_NEG_B_POS = "ANegBPos"
A_POS_B_NEG = "APosBNeg"
BOTH_NEGATIVE = "BothNegative"

T_MAX = 1e9
TOL_ZERO = 1e-12
TOL_ROOT = 1e-10
_RTOL = 4e-15


class GammaValues(NamedTuple):
    gamma: float
    dgamma: float
    ddgamma: float
    m: float


def _terms(bd, cfg):
    return bd.P, bd.Q, cfg.lam * bd.A, cfg.c_r * bd.B


def eval_gamma(bd, t, cfg):
    """gamma, gamma', gamma'' and m at t > 0 in closed form."""
    if not t > 0:
        raise DomainError("fibering derivatives need t > 0")
    P, Q, lA, cB = _terms(bd, cfg)
    p, q, d, r = cfg.p, cfg.q, cfg.delta, cfg.r
    tp, tq, td, tr = t**p, t**q, t**d, t**r
    g = math.fsum((tp * P / p, tq * Q / q, -td * lA / d, -tr * cB / r))
    dg = math.fsum((tp * P, tq * Q, -td * lA, -tr * cB)) / t
    ddg = math.fsum(((p - 1) * tp * P, (q - 1) * tq * Q, -(d - 1) * td * lA, -(r - 1) * tr * cB)) / (t * t)
    m = math.fsum((tp * P, tq * Q, -tr * cB)) / td
    return GammaValues(g, dg, ddg, m)


def m_of_t(bd, t, cfg):
    return eval_gamma(bd, t, cfg).m


def root_scale(bd, t, cfg):
    """Sum of the magnitudes of the four terms of gamma'(t).

    Equals P + Q + lam|A| + c_r|B| at t = 1 and follows the terms as t moves,
    so the root tolerance stays scale-free along the ray.
    """
    P, Q, lA, cB = _terms(bd, cfg)
    return (t**cfg.p * P + t**cfg.q * Q + t**cfg.delta * abs(lA) + t**cfg.r * abs(cB)) / t


def classify_case(bd, cfg=None):
    """Fibering case from the signs of A and B.

    A value below ``TOL_ZERO * (P + Q)`` in magnitude counts as nonpositive:
    with A = 0 the sublinear term cannot create a local minimum and with B = 0
    the superlinear term cannot create a local maximum.
    """
    tiny = TOL_ZERO * (bd.P + bd.Q)
    c_r = 1.0 if cfg is None else cfg.c_r
    a_pos = bd.A > tiny
    b_pos = c_r * bd.B > tiny
    if a_pos and b_pos:
        return BOTH_POSITIVE
    if b_pos:
        return A_NEG_B_POS
    if a_pos:
        return A_POS_B_NEG
    return BOTH_NEGATIVE


@dataclass(frozen=True)
class FiberingReport:
    """Root structure of one fibering map.

    Attributes:
        case: one of the four sign cases.
        status: ``ok`` or ``NoRoots`` (BothPositive with lam A >= m(t_max)).
        t_max: maximiser of m (cases with B > 0).
        t1: first root; in N+ for BothPositive and APosBNeg, in N- for ANegBPos.
        t2: second root (BothPositive only), in N-.
        gamma_pp_at: gamma'' at each returned root, keyed by root name.
        samples: optional rows (t, gamma, gamma', gamma'').
    """

    case: str
    status: str = "ok"
    t_max: float | None = None
    t1: float | None = None
    t2: float | None = None
    gamma_pp_at: dict = field(default_factory=dict)
    samples: tuple | None = None

    def roots(self):
        return [t for t in (self.t1, self.t2) if t is not None]

    def to_dict(self):
        return {
            "case": self.case,
            "status": self.status,
            "t_max": self.t_max,
            "t1": self.t1,
            "t2": self.t2,
            "gamma_pp_at": dict(self.gamma_pp_at),
        }


def _walk(fn, start, factor):
    """Step geometrically from ``start`` until ``fn`` changes sign; return the last two points."""
    sign = fn(start) > 0.0
    prev, t = start, start * factor
    while (fn(t) > 0.0) == sign:
        if t > T_MAX or t < 1.0 / T_MAX:
            raise BracketError(f"no sign change of the fibering function within [1e-9, 1e9] from t = {start:g}")
        prev, t = t, t * factor
    return (prev, t) if prev < t else (t, prev)


def _solve(fn, a, b):
    return brentq(fn, a, b, xtol=1e-300, rtol=_RTOL, maxiter=500)


def find_t_max(bd, cfg):
    """Unique maximiser of m when B > 0.

    m'(t) t^(delta+1) = (p-delta) t^p P + (q-delta) t^q Q - c_r (r-delta) t^r B;
    divided by t^max(p,q) it is strictly decreasing, so it has one root.
    """
    P, Q, _, cB = _terms(bd, cfg)
    p, q, d, r = cfg.p, cfg.q, cfg.delta, cfg.r
    k = max(p, q)

    def f(t):
        return (p - d) * t ** (p - k) * P + (q - d) * t ** (q - k) * Q - (r - d) * t ** (r - k) * cB

    return _solve(f, *_walk(f, 1.0, 2.0 if f(1.0) > 0.0 else 0.5))


def fibering_roots(bd, cfg, samples=None):
    """Classify the fibering map of u and locate its critical points.

    Args:
        bd: breakdown of u.
        cfg: problem configuration.
        samples: optional sequence of t values to tabulate.

    Raises:
        BracketError: a root bracket did not close within [1e-9, 1e9].
    """
    case = classify_case(bd, cfg)
    lA = cfg.lam * bd.A
    h = lambda t: m_of_t(bd, t, cfg) - lA
    t_max = t1 = t2 = None
    status = "ok"
    if case == BOTH_POSITIVE:
        t_max = find_t_max(bd, cfg)
        if h(t_max) <= 0.0:
            status = "NoRoots"
        else:
            t1 = _solve(h, *_walk(h, t_max, 0.5))
            t2 = _solve(h, *_walk(h, t_max, 2.0))
    elif case == A_NEG_B_POS:
        t_max = find_t_max(bd, cfg)
        t1 = _solve(h, *_walk(h, t_max, 2.0))
    elif case == A_POS_B_NEG:
        t1 = _solve(h, *_walk(h, 1.0, 0.5 if h(1.0) > 0.0 else 2.0))
    pp = {}
    if t1 is not None:
        pp["t1"] = eval_gamma(bd, t1, cfg).ddgamma
    if t2 is not None:
        pp["t2"] = eval_gamma(bd, t2, cfg).ddgamma
    rows = None
    if samples is not None:
        rows = tuple((float(t), *eval_gamma(bd, float(t), cfg)[:3]) for t in samples)
    return FiberingReport(case, status, t_max, t1, t2, pp, rows)


def falling_root(bd, cfg):
    """The root of m = lam A past t_max (the local maximum of gamma), and t_max.

    Skips the rising-side root, which may lie far below the bracket range when
    lam A is tiny.

    Raises:
        EmptyBranch: B <= 0, so gamma has no local maximum.
        NoRoots: lam A >= m(t_max).
    """
    case = classify_case(bd, cfg)
    if case not in (BOTH_POSITIVE, A_NEG_B_POS):
        raise EmptyBranch(f"{case}: the ray through u does not meet N-")
    h = lambda t: m_of_t(bd, t, cfg) - cfg.lam * bd.A
    t_max = find_t_max(bd, cfg)
    if h(t_max) <= 0.0:
        raise NoRoots("lam A exceeds the maximum of m along this ray")
    return _solve(h, *_walk(h, t_max, 2.0)), t_max


def root_residual(bd, t, cfg):
    """|gamma'(t)| relative to the term magnitudes at t."""
    scale = root_scale(bd, t, cfg)
    return abs(eval_gamma(bd, t, cfg).dgamma) / scale if scale > 0 else 0.0


def branch_root(bd, cfg, branch):
    """The fibering root of u on the requested branch (``plus`` or ``minus``).

    Raises:
        EmptyBranch: the case has no root on that branch.
        NoRoots: BothPositive but lam is too large for this u.
    """
    if branch == "minus":
        return falling_root(bd, cfg)[0]
    case = classify_case(bd, cfg)
    if case not in (BOTH_POSITIVE, A_POS_B_NEG):
        raise EmptyBranch(f"{case}: the ray through u does not meet N+")
    rep = fibering_roots(bd, cfg)
    if rep.status == "NoRoots":
        raise NoRoots("lam A exceeds the maximum of m along this ray")
    return rep.t1


def sample_grid(rep, count=200):
    """Log-spaced t values covering the report's roots with a decade of margin."""
    marks = [t for t in (rep.t_max, rep.t1, rep.t2) if t is not None] or [1.0]
    lo, hi = min(marks + [1.0]) / 10.0, max(marks + [1.0]) * 10.0
    return np.geomspace(lo, hi, count)


def sign_changes(bd, cfg, ts):
    """Number of sign changes of gamma' over the sorted sample points ``ts``."""
    signs = np.sign([eval_gamma(bd, float(t), cfg).dgamma for t in ts])
    signs = signs[signs != 0]
    return int(np.count_nonzero(signs[1:] != signs[:-1]))
