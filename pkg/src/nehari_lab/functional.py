"""Energy functional, its four homogeneous parts, and derivative checks.

All the fibering geometry depends on a field only through the four numbers
(P, Q, A, B), so :class:`EnergyBreakdown` caches them and :func:`j_of_t`
evaluates the energy along the ray t*u in O(1).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError, SpecError
from .model import DiscreteField, grid_for, sample_weight
from .operators import assembly_for, build_nonlocal, energy_terms, residual_vector


@dataclass(frozen=True)
class EnergyBreakdown:
    """The four energy terms of a field and the assembled energy J.

    Attributes:
        P: integral of |grad u|^p.
        Q: Gagliardo energy [u]_{s,q}^q.
        A: integral of a |u|^delta.
        B: integral of b |u|^r.
        J: P/p + Q/q - lam A/delta - c_r B/r.
    """

    P: float
    Q: float
    A: float
    B: float
    J: float

    def to_dict(self):
        return asdict(self)

    def scaled(self, t, cfg):
        """Breakdown of t*u from the breakdown of u."""
        P, Q = t**cfg.p * self.P, t**cfg.q * self.Q
        A, B = t**cfg.delta * self.A, t**cfg.r * self.B
        return EnergyBreakdown(P, Q, A, B, assemble_energy(P, Q, A, B, cfg))


def assemble_energy(P, Q, A, B, cfg):
    return math.fsum((P / cfg.p, Q / cfg.q, -cfg.lam * A / cfg.delta, -cfg.c_r * B / cfg.r))


def default_weights(cfg, grid=None):
    grid = grid or grid_for(cfg)
    return sample_weight(cfg.weight_a, grid), sample_weight(cfg.weight_b, grid)


def energy_breakdown(u, cfg, weights=None, asm=None):
    """P, Q, A, B and J of an interior field."""
    if u.closed:
        raise SpecError("energy needs an interior field")
    weights = weights or default_weights(cfg, u.grid)
    asm = assembly_for(u.grid, cfg, asm)
    (P, Q, A, B), _ = energy_terms(u.values, cfg, weights, asm)
    return EnergyBreakdown(P, Q, A, B, assemble_energy(P, Q, A, B, cfg))


def j_of_t(bd, t, cfg):
    """Energy of t*u from the breakdown of u."""
    if t < 0:
        raise DomainError("fibering parameter must be nonnegative")
    if t == 0:
        return 0.0
    if t == 1:
        return bd.J
    return assemble_energy(t**cfg.p * bd.P, t**cfg.q * bd.Q, t**cfg.delta * bd.A, t**cfg.r * bd.B, cfg)


class Problem:
    """A configuration bound to its grid, sampled weights and nonlocal assembly.

    This is the object the solvers work with; it evaluates the energy and its
    gradient on raw coefficient vectors.
    """

    def __init__(self, cfg, grid=None, weights=None, asm=None):
        self.cfg = cfg
        self.grid = grid or grid_for(cfg)
        self.weights = weights or default_weights(cfg, self.grid)
        self.asm = asm or build_nonlocal(self.grid, cfg.s, cfg.q)

    def with_lambda(self, lam):
        return Problem(self.cfg.with_(lam=lam), self.grid, self.weights, self.asm)

    def field(self, values):
        return DiscreteField(self.grid, values)

    def terms(self, values, grad=False):
        return energy_terms(values, self.cfg, self.weights, self.asm, grad)

    def breakdown(self, u):
        values = u.values if isinstance(u, DiscreteField) else np.asarray(u, dtype=float)
        (P, Q, A, B), _ = self.terms(values)
        return EnergyBreakdown(P, Q, A, B, assemble_energy(P, Q, A, B, self.cfg))

    def breakdown_and_residual(self, values):
        """Breakdown plus the energy gradient (one pass over the pairs)."""
        cfg = self.cfg
        (P, Q, A, B), (dP, dQ, dA, dB) = self.terms(values, grad=True)
        bd = EnergyBreakdown(P, Q, A, B, assemble_energy(P, Q, A, B, cfg))
        res = dP / cfg.p + dQ / cfg.q - cfg.lam * dA / cfg.delta - cfg.c_r * dB / cfg.r
        return bd, res

    def energy(self, values):
        return self.breakdown(values).J

    def residual(self, values):
        return residual_vector(np.asarray(values, dtype=float), self.cfg, self.weights, self.asm)


@dataclass(frozen=True)
class GradientCheck:
    """Analytic directional derivative against central differences at h and h/2."""

    pairing: float
    fd_h: float
    fd_h2: float
    err_h: float
    err_h2: float
    rel_error: float
    ratio: float
    order: float
    h: float

    def to_dict(self):
        return asdict(self)


def gradient_check(u, phi, cfg, weights=None, h=1e-4, asm=None, relative_step=True):
    """Compare <R(u), phi> with central differences of J along phi.

    With ``relative_step`` the step is ``h * max|u| / max|phi|`` so that the
    perturbation is small relative to the field.
    """
    prob = Problem(cfg, u.grid, weights, asm or build_nonlocal(u.grid, cfg.s, cfg.q))
    x, d = u.values, phi.values
    pairing = float(np.dot(prob.residual(x), d))
    dmax = np.max(np.abs(d))
    if dmax == 0.0:
        return GradientCheck(pairing, 0.0, 0.0, 0.0, 0.0, 0.0, math.nan, math.nan, 0.0)
    step = h * (np.max(np.abs(x)) / dmax if relative_step and np.any(x) else 1.0)

    def central(hh):
        return (prob.energy(x + hh * d) - prob.energy(x - hh * d)) / (2.0 * hh)

    fd1, fd2 = central(step), central(step / 2)
    e1, e2 = abs(fd1 - pairing), abs(fd2 - pairing)
    scale = max(abs(pairing), abs(fd1), 1e-300)
    ratio = e1 / e2 if e2 > 0 else math.inf
    order = math.log2(ratio) if 0 < ratio < math.inf else math.nan
    return GradientCheck(pairing, fd1, fd2, e1, e2, e1 / scale, ratio, order, step)
