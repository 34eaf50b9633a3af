"""Truncated Talenti bubbles: norm scalings and the energy-level scan.

The bubble U_eps is concentrated at scale eps, so resolving a family whose
eps spans several octaves needs far more resolution than a uniform grid of
the unit box offers. The family is radial, however, and all of its norms
reduce to one- and two-dimensional integrals in the radius:

* L^t and W^{1,p} norms are single radial integrals;
* the Gagliardo energy of a radial f supported in B_R is

      2|S|^2 [ int_0^R rho^(N-1-sq) int_0^1 tau^(N-1) H(tau) |f(rho) - f(rho tau)|^q dtau drho
               + int_0^R sig^(N-1) |f(sig)|^q E(sig) dsig ],

  with H(tau) the sphere average of |e - tau w|^-(N+sq) and
  E(sig) = sig^-sq int_0^(sig/R) tau^(sq-1) H(tau) dtau (pairs with one point
  outside the support).

These are evaluated with composite Gauss rules on geometrically graded panels
and a Gauss-Jacobi panel at the tau = 1 singularity. Grid samples of the
family are also produced for the grid-based energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special
from scipy.optimize import minimize_scalar

from .constants import c_infinity, m_exponent, sobolev_constant, talenti_K
from .errors import BracketError, EmptyBranch, ModeError, NoRoots, SpecError
from .fibering import eval_gamma, falling_root
from .functional import EnergyBreakdown, assemble_energy
from .model import DiscreteField
from .operators import lt_norm
from .special import sphere_kernel_average, sphere_measure

_ORDER = 16
_GRADING = 2.0


# -- quadrature helpers ---------------------------------------------------------


@lru_cache(maxsize=8)
def _legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=32)
def _jacobi_right(n, alpha):
    """Nodes/weights on [0, 1] for the weight (1 - x)^alpha."""
    x, w = special.roots_jacobi(n, alpha, 0.0)
    return 0.5 * (x + 1.0), w * 0.5 ** (alpha + 1.0)


def _graded_breaks(hi, core, marks, extra=6):
    """Breakpoints on [0, hi]: halving from hi down to core * 2^-extra, plus the marks."""
    pts = {0.0, hi}
    x = hi
    floor = min(core, hi) * _GRADING**-extra
    while x > floor:
        x /= _GRADING
        pts.add(x)
    pts.update(m for m in marks if 0.0 < m < hi)
    return np.array(sorted(pts))


def _composite(breaks, n=_ORDER):
    x0, w0 = _legendre(n)
    a, b = breaks[:-1, None], breaks[1:, None]
    return (a + (b - a) * x0).ravel(), ((b - a) * w0).ravel()


# -- radial profiles ----------------------------------------------------------------


@dataclass(frozen=True)
class RadialProfile:
    """A radial function f(|x - centre|) supported in the ball of radius ``support``.

    ``f`` and ``df`` are vectorised callables of the radius; ``marks`` lists
    the radii where f changes character (core scale, cutoff knots) so the
    quadrature can grade towards them.
    """

    f: object
    df: object
    support: float
    marks: tuple
    dim: int


def _radial_nodes(prof):
    breaks = _graded_breaks(prof.support, min(prof.marks), prof.marks)
    return _composite(breaks)


def radial_lt(prof, t):
    """Integral of |f|^t over R^N."""
    r, w = _radial_nodes(prof)
    return sphere_measure(prof.dim) * math.fsum(w * r ** (prof.dim - 1) * np.abs(prof.f(r)) ** t)


def radial_p_energy(prof, p):
    """Integral of |grad f|^p over R^N."""
    r, w = _radial_nodes(prof)
    return sphere_measure(prof.dim) * math.fsum(w * r ** (prof.dim - 1) * np.abs(prof.df(r)) ** p)


def _outside_kernel(sig, R, N, sq):
    """E(sig) = sig^-sq * integral of tau^(sq-1) H(tau) over (0, sig/R)."""
    out = np.empty_like(sig)
    for k, sg in enumerate(sig):
        z = sg / R
        val, _ = integrate.quad(
            lambda t: sphere_kernel_average(t, N, N + sq), 0.0, z,
            weight="alg", wvar=(sq - 1.0, 0.0), epsabs=0.0, epsrel=1e-12, limit=200,
        )
        out[k] = sg ** (-sq) * val
    return out


def radial_gagliardo(prof, s, q, tail_panels=6):
    """Gagliardo energy [f]_{s,q}^q of a radial function on R^N (zero outside its support)."""
    N, R = prof.dim, prof.support
    sq = s * q
    alpha = q * (1.0 - s) - 1.0
    rho, wr = _radial_nodes(prof)
    core = min(prof.marks)
    xj, wj = _jacobi_right(_ORDER, alpha)
    f_rho = prof.f(rho)
    inner = np.empty_like(rho)
    for k, (r, fr) in enumerate(zip(rho, f_rho)):
        marks = [m / r for m in prof.marks] + [1.0 - _GRADING**-j for j in range(1, tail_panels + 1)]
        breaks = _graded_breaks(1.0, core / r, marks)
        tail = breaks[-2]
        tau, wt = _composite(breaks[:-1])
        g = tau ** (N - 1) * sphere_kernel_average(tau, N, N + sq) * np.abs(fr - prof.f(r * tau)) ** q
        body = math.fsum(wt * g)
        # last panel: pull (1 - tau)^alpha out of the integrand
        tj = tail + (1.0 - tail) * xj
        one_m = (1.0 - tail) * (1.0 - xj)
        gj = tj ** (N - 1) * sphere_kernel_average(tj, N, N + sq) * np.abs(fr - prof.f(r * tj)) ** q
        last = (1.0 - tail) ** (alpha + 1.0) * math.fsum(wj * gj / one_m**alpha)
        inner[k] = body + last
    first = math.fsum(wr * rho ** (N - 1 - sq) * inner)
    second = math.fsum(wr * rho ** (N - 1) * np.abs(f_rho) ** q * _outside_kernel(rho, R, N, sq))
    return 2.0 * sphere_measure(N) ** 2 * (first + second)


# -- the bubble family -----------------------------------------------------------


def bubble(r, eps, N, p):
    """Talenti bubble U_eps at radius r."""
    pp = p / (p - 1.0)
    r = np.asarray(r, dtype=float)
    return talenti_K(N, p) * eps ** ((N - p) / (p * (p - 1.0))) * (eps**pp + r**pp) ** (-(N - p) / p)


def bubble_derivative(r, eps, N, p):
    pp = p / (p - 1.0)
    r = np.asarray(r, dtype=float)
    k = (N - p) / p
    return (
        -talenti_K(N, p) * eps ** ((N - p) / (p * (p - 1.0))) * k * pp
        * r ** (pp - 1.0) * (eps**pp + r**pp) ** (-k - 1.0)
    )


def cutoff(r, r0):
    """Quintic smoothstep: 1 on [0, r0], 0 beyond 2 r0, C^2 in between."""
    t = np.clip((np.asarray(r, dtype=float) - r0) / r0, 0.0, 1.0)
    return 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


def cutoff_derivative(r, r0):
    t = np.clip((np.asarray(r, dtype=float) - r0) / r0, 0.0, 1.0)
    return -30.0 * t * t * (1.0 - t) ** 2 / r0


def truncated_bubble(eps, r0, N, p, scale=1.0):
    """Radial profile of scale * cutoff * U_eps."""
    f = lambda r: scale * cutoff(r, r0) * bubble(r, eps, N, p)
    df = lambda r: scale * (
        cutoff_derivative(r, r0) * bubble(r, eps, N, p) + cutoff(r, r0) * bubble_derivative(r, eps, N, p)
    )
    return RadialProfile(f, df, 2.0 * r0, (eps, r0, 2.0 * r0), N)


@dataclass
class FamilyMember:
    """One eps of the family: norms of u_eps and of v_eps = u_eps / |u_eps|_{p*}."""

    eps: float
    lp_star: float
    scale: float
    sob_v: float
    gag_u: float
    lt_v: dict
    grid_resolved: bool
    u_grid: DiscreteField | None = None
    v_grid: DiscreteField | None = None

    def row(self):
        out = {"eps": self.eps, "W1p_v": self.sob_v, "Wsq_u": self.gag_u}
        out.update({f"Lt_v[{t:g}]": v for t, v in self.lt_v.items()})
        out["grid_resolved"] = self.grid_resolved
        return out


@dataclass
class TalentiFamily:
    """Truncated bubbles centred at ``centre`` with cutoff radius r0."""

    N: int
    p: float
    q: float
    s: float
    r0: float
    centre: tuple
    K_Np: float
    t_values: tuple
    members: list = field(default_factory=list)

    @property
    def eps(self):
        return [m.eps for m in self.members]

    def table(self):
        return [m.row() for m in self.members]

    def profile(self, eps, normalised=True):
        m = next(m for m in self.members if m.eps == eps)
        return truncated_bubble(eps, self.r0, self.N, self.p, m.scale if normalised else 1.0)


DEFAULT_T = (1.1, 2.0, 3.0)
DEFAULT_OCTAVES = (8, 10, 12, 14, 16)


def default_eps(r0, octaves=DEFAULT_OCTAVES):
    """Scales r0 * 2^-k deep enough for the leading-order slopes to show."""
    return [r0 * 2.0 ** (-k) for k in octaves]


def build_family(cfg, eps_list, r0, grid=None, centre=None, t_values=None):
    """Sample and measure the truncated bubbles u_eps and v_eps.

    Args:
        cfg: critical or bn configuration (supplies N, p, q, s).
        eps_list: concentration scales, each at most r0.
        r0: plateau radius of the cutoff; B(centre, 4 r0) must lie in the box.
        grid: optional grid for nodal samples (eps >= 4h is flagged resolved).
        t_values: Lebesgue exponents for the L^t table; defaults to one in
            each regime around p*(1 - 1/p).

    Raises:
        ModeError: the configuration is not critical or bn.
        SpecError: the geometry or the eps list is invalid.
    """
    if cfg.mode not in ("critical", "bn"):
        raise ModeError("Talenti families need critical or bn mode")
    N, p = cfg.dim_N, cfg.p
    L = np.asarray(cfg.domain, dtype=float)
    centre = L / 2.0 if centre is None else np.asarray(centre, dtype=float)
    if np.any(centre - 4 * r0 < 0) or np.any(centre + 4 * r0 > L):
        raise SpecError(f"ball of radius 4 r0 = {4 * r0:g} does not fit in the box")
    eps_list = sorted(float(e) for e in eps_list)
    if not eps_list or eps_list[0] <= 0 or eps_list[-1] > r0:
        raise SpecError("need 0 < eps <= r0")
    if t_values is None:
        mid = cfg.p_star * (1.0 - 1.0 / p)
        t_values = tuple(sorted({DEFAULT_T[0] if DEFAULT_T[0] < mid else 1.0 + 0.5 * (mid - 1.0), mid, max(3.0, mid + 1.0)}))
    fam = TalentiFamily(N, p, cfg.q, cfg.s, r0, tuple(centre), talenti_K(N, p), tuple(t_values))
    for eps in eps_list:
        u = truncated_bubble(eps, r0, N, p)
        lp = radial_lt(u, cfg.p_star) ** (1.0 / cfg.p_star)
        v = truncated_bubble(eps, r0, N, p, 1.0 / lp)
        member = FamilyMember(
            eps=eps,
            lp_star=lp,
            scale=1.0 / lp,
            sob_v=radial_p_energy(v, p),
            gag_u=radial_gagliardo(u, cfg.s, cfg.q),
            lt_v={t: radial_lt(v, t) for t in t_values},
            grid_resolved=grid is not None and eps >= 4 * max(grid.h),
        )
        if grid is not None:
            rr = np.linalg.norm(grid.coords - centre, axis=1)
            ug = DiscreteField(grid, u.f(rr))
            member.u_grid = ug
            member.v_grid = ug.scaled(lt_norm(ug, cfg.p_star) ** (-1.0 / cfg.p_star))
        fam.members.append(member)
    return fam


# -- slopes ------------------------------------------------------------------------


def lt_target(N, p, t):
    """Exponent of |v_eps|_t^t in eps, and whether the middle regime's log factor applies."""
    mid = N * (p - 1.0) / (N - p)
    if math.isclose(t, mid, rel_tol=1e-12):
        # both outer formulas meet here at N/p; only the log factor is new
        return N / p, True
    if t > mid:
        return N - t * (N - p) / p, False
    return (N - p) * t / (p * (p - 1.0)), False


def fit_slope(eps, values):
    """Least-squares slope of log(values) against log(eps)."""
    x, y = np.log(np.asarray(eps)), np.log(np.asarray(values))
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class SlopeReport:
    rows: list

    def to_dict(self):
        return {"slopes": self.rows}

    def by_name(self, name):
        return next(r for r in self.rows if r["quantity"] == name)


def slope_report(family, S_p=None, min_octaves=2.0):
    """Fit log-log slopes of the family's norms and compare with their exponents.

    ``S_p`` is the reference for the W^{1,p} defect; it defaults to the
    closed-form best Sobolev constant, the limit of |v_eps|^p as eps -> 0.

    Raises:
        SpecError: fewer than 4 eps values or less than ``min_octaves`` octaves.
    """
    eps = np.array(family.eps)
    if eps.size < 4:
        raise SpecError(f"need at least 4 eps values, got {eps.size}")
    if math.log2(eps.max() / eps.min()) < min_octaves:
        raise SpecError(f"eps values span fewer than {min_octaves:g} octaves")
    N, p = family.N, family.p
    S = sobolev_constant(N, p) if S_p is None else S_p
    rows = []

    def add(name, values, target):
        slope = fit_slope(eps, values)
        rel = abs(slope - target) / abs(target) if target else math.inf
        rows.append({"quantity": name, "slope": slope, "target": target, "rel_error": rel})

    add("Wsq_u", [m.gag_u for m in family.members], m_exponent(N, p, family.q, family.s))
    defect = [m.sob_v - S for m in family.members]
    if all(d > 0 for d in defect):
        add("W1p_v_minus_S", defect, (N - p) / (p - 1.0))
    else:
        rows.append({"quantity": "W1p_v_minus_S", "slope": math.nan, "target": (N - p) / (p - 1.0),
                     "rel_error": math.inf})
    for t in family.t_values:
        target, log_factor = lt_target(N, p, t)
        vals = [m.lt_v[t] for m in family.members]
        if log_factor:
            vals = [v / abs(math.log(e)) for v, e in zip(vals, eps)]
        add(f"Lt_v[{t:g}]", vals, target)
    return SlopeReport(rows)


# -- energy-level scan -------------------------------------------------------------


def beta_choices(N, p, q, s):
    """The two constraints on beta in eps = lam^beta: strict 1/m and the max-form bound."""
    m = m_exponent(N, p, q, s)
    return {"strict_lower": 1.0 / m, "max_form": max((N / p - 1.0) / m, 1.0 / m)}


def radial_breakdown(family, eps, cfg, weights=None):
    """Energy terms of v_eps from the radial engine (constant weights only)."""
    if weights is not None:
        a, b = weights
        if np.ptp(a.values) > 0 or np.ptp(b.values) > 0:
            raise SpecError("radial breakdown needs constant weights; use the grid samples")
        ca, cb = float(a.values[0]), float(b.values[0])
    else:
        ca = cb = 1.0
    prof = family.profile(eps)
    P = radial_p_energy(prof, cfg.p)
    Q = radial_gagliardo(prof, cfg.s, cfg.q)
    A = ca * radial_lt(prof, cfg.delta)
    B = cb * radial_lt(prof, cfg.r)
    return EnergyBreakdown(P, Q, A, B, assemble_energy(P, Q, A, B, cfg))


@dataclass
class SupScan:
    t_argmax: float
    sup_J: float
    level: float
    below: bool
    eps: float | None = None

    def to_dict(self):
        return {"t_argmax": self.t_argmax, "sup_J": self.sup_J, "c_inf": self.level,
                "below": self.below, "eps": self.eps}


def sup_scan(cfg, bd, S_p, C_delta, eps=None):
    """Maximum of t -> J(t v) for t >= 0 compared with the compactness level.

    The bracket is [t_max, T] with t_max the maximiser of m (J increases from
    the local minimum up to the local maximum, which lies past t_max) and T
    the first doubling of the local maximum where J turns negative; the
    maximum is found by bounded golden-section search.

    Raises:
        BracketError: J has no interior maximum along the ray.
    """
    if cfg.mode not in ("critical", "bn"):
        raise ModeError("sup_scan needs critical or bn mode")
    try:
        top, lo = falling_root(bd, cfg)
    except (EmptyBranch, NoRoots) as exc:
        raise BracketError(f"no interior maximum of the fibering map: {exc}") from exc
    hi = 2.0 * top
    while eval_gamma(bd, hi, cfg).gamma >= 0.0:
        hi *= 2.0
        if hi > 1e9:
            raise BracketError("fibering map stays positive up to t = 1e9")
    res = minimize_scalar(lambda t: -eval_gamma(bd, t, cfg).gamma,
                          bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 * hi})
    t_star, val = float(res.x), -float(res.fun)
    # the stationary point is known exactly; keep whichever is higher
    g_top = eval_gamma(bd, top, cfg).gamma
    if g_top >= val:
        t_star, val = top, g_top
    sup = max(0.0, val)
    level = c_infinity(cfg, S_p, C_delta)
    return SupScan(t_star, sup, level, sup < level, eps)
