"""Generalised eigenvalue problem: an upper-bound curve for lambda*(s) and an existence probe.

The curve parameter ``s`` here is the potential shift of the eigenvalue
problem, not the fractional order; the fractional order is always ``cfg.s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InsufficientPoints, SpecError
from .operators import assembly_for, gagliardo_energy, local_p_energy, lt_norm

MIN_CURVE_POINTS = 8
MONOTONE_SLACK = 1e-12
PROBE_T = tuple(2.0 ** (-k) for k in range(20))


def _require_order(cfg):
    if not cfg.p < cfg.q:
        raise SpecError(f"the eigenvalue problem needs p < q, got p = {cfg.p:g}, q = {cfg.q:g}")


def _nonnegative(phi):
    vals = phi.values
    top = float(vals.max())
    if top <= 0.0:
        raise DomainError("test field must be positive somewhere")
    if float(vals.min()) < -1e-12 * top:
        raise DomainError("test field must be nonnegative")
    return phi.like(np.clip(vals, 0.0, None))


@dataclass(frozen=True)
class BoundParts:
    """The s-independent pieces of the upper bound for one test field."""

    p_energy: float
    gagliardo: float
    lq: float

    def value(self, s, rho):
        if not rho > 0:
            raise DomainError(f"rho must be positive, got {rho!r}")
        return (self.p_energy / rho + self.gagliardo) / self.lq + max(0.0, -s)


def bound_parts(phi, cfg, asm=None):
    _require_order(cfg)
    phi = _nonnegative(phi)
    asm = assembly_for(phi.grid, cfg, asm)
    lifted = phi.like(phi.values ** (cfg.q / cfg.p))
    return BoundParts(
        local_p_energy(lifted, cfg.p),
        gagliardo_energy(phi, cfg.s, cfg.q, asm),
        lt_norm(phi, cfg.q),
    )


def lambda_star_upper_bound(s, phi, rho, cfg, asm=None):
    """Upper bound U(s) for lambda*(s) from one nonnegative test field.

    Raises:
        DomainError: phi is nowhere positive, has negative values, or rho <= 0.
        SpecError: p >= q.
    """
    return bound_parts(phi, cfg, asm).value(s, rho)


@dataclass(frozen=True)
class GevCurve:
    s_grid: tuple
    U: tuple
    test_field: str
    rho: float

    def __post_init__(self):
        if len(self.s_grid) != len(self.U):
            raise SpecError("s grid and bound values differ in length")
        if not all(math.isfinite(u) for u in self.U):
            raise SpecError("bound curve has non-finite values")

    def rows(self):
        return list(zip(self.s_grid, self.U))

    def to_dict(self):
        return {"s_grid": list(self.s_grid), "U": list(self.U), "test_field": self.test_field, "rho": self.rho}


def build_curve(s_values, phi, rho, cfg, test_field="phi", asm=None):
    """Bound curve over a sorted s grid of at least 8 points."""
    s_grid = tuple(sorted(float(s) for s in s_values))
    if len(s_grid) < MIN_CURVE_POINTS:
        raise InsufficientPoints(f"need at least {MIN_CURVE_POINTS} s values, got {len(s_grid)}")
    parts = bound_parts(phi, cfg, asm)
    return GevCurve(s_grid, tuple(parts.value(s, rho) for s in s_grid), test_field, float(rho))


def curve_monotonicity(curve):
    """Check that U is nonincreasing in s and U + s is nondecreasing, up to 1e-12 slack."""
    if len(curve.s_grid) < 2:
        raise InsufficientPoints("monotonicity needs at least two points")
    s, U = np.asarray(curve.s_grid), np.asarray(curve.U)
    order = np.argsort(s, kind="stable")
    s, U = s[order], U[order]
    slack = MONOTONE_SLACK * np.maximum(1.0, np.abs(U[:-1]))
    return {
        "nonincreasing": bool(np.all(np.diff(U) <= slack)),
        "shifted_nondecreasing": bool(np.all(np.diff(U + s) >= -slack)),
    }


@dataclass(frozen=True)
class ProbeResult:
    descent_found: bool
    t_used: float | None
    alpha: float
    beta: float
    values: tuple

    def to_dict(self):
        return {"descent_found": self.descent_found, "t_used": self.t_used, "alpha": self.alpha, "beta": self.beta}


def probe_norms(phi, cfg, asm=None):
    """(|phi|_p^p, [phi]_{s,q}^q, |phi|_q^q) for the first p-eigenfunction estimate."""
    asm = assembly_for(phi.grid, cfg, asm)
    return lt_norm(phi, cfg.p), gagliardo_energy(phi, cfg.s, cfg.q, asm), lt_norm(phi, cfg.q)


def existence_probe(alpha, beta, cfg, eig, norms=None, t_values=PROBE_T):
    """Look for negative energy along the ray of the first p-eigenfunction.

    Args:
        alpha, beta: coefficients of the eigenvalue problem.
        cfg: supplies p, q and the fractional order.
        eig: mapping with ``lambda_1p`` and ``phi_p`` (a field normalised in L^p).
        norms: precomputed :func:`probe_norms` of ``phi_p``.
        t_values: the scan points, dyadic in (1e-6, 1] by default.

    Returns:
        ProbeResult; ``t_used`` is the largest scanned t with negative energy.
    """
    _require_order(cfg)
    p, q = cfg.p, cfg.q
    lp, gag, lq = probe_norms(eig["phi_p"], cfg) if norms is None else norms
    c_p = (eig["lambda_1p"] - alpha) * lp / p
    c_q = (gag - beta * lq) / q
    values = tuple(t**p * c_p + t**q * c_q for t in t_values)
    hit = next((t for t, e in zip(t_values, values) if e < 0.0), None)
    return ProbeResult(hit is not None, hit, float(alpha), float(beta), values)


def mu_sweep(c1, c2, mus, cfg, eig, norms=None):
    """First mu in ``mus`` (ascending) whose pair (mu c1, mu c2) shows descent, else None."""
    norms = probe_norms(eig["phi_p"], cfg) if norms is None else norms
    for mu in sorted(mus):
        if existence_probe(mu * c1, mu * c2, cfg, eig, norms).descent_found:
            return mu
    return None
