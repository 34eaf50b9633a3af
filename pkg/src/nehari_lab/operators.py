"""Quadrature of the local p-energy, the Gagliardo energy, L^t norms and the weak residual.

Fields are piecewise multilinear on the grid cells. Cell integrals use the
tensor two-point Gauss rule; the operators that map nodal values to values and
gradients at the Gauss points are sparse Kronecker products of 1D matrices and
are cached per grid.

The Gagliardo energy of a field with nodal values u_i is

    sum_{i != j} |u_i - u_j|^q w_ij + 2 sum_i |u_i|^q tau_i vol_i,

with w_ij = vol_i vol_j |x_i - x_j|^-(N+sq). The pair weights depend only on
the index offset between the two nodes, so one table of (2n-3)^N entries
replaces the M x M pair list. tau_i is the kernel integrated over the exterior
of the box and is evaluated in closed form from the node's view of the box
faces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import sparse

from . import kernels
from .errors import AssemblyError, SpecError
from .model import DiscreteField
from .special import cos_power_integral, directional_average, epstein_zeta, sphere_measure

MAX_NODES = 100_000

_GAUSS = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))


def fsum(values):
    """Exactly rounded sum; independent of evaluation order."""
    return math.fsum(np.asarray(values, dtype=float).ravel())


def signed_power(x, e):
    """[x]^e = |x|^e sign(x), with value 0 at x = 0."""
    ax = np.abs(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(ax > 0.0, ax**e, 0.0)
    return np.copysign(out, x)


# -- cell quadrature ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CellQuadrature:
    """Gauss-point operators of a grid.

    Attributes:
        interp: values at Gauss points from interior nodal values.
        interp_closed: values at Gauss points from closed-grid nodal values.
        grads: per-axis derivative operators acting on interior values.
        weight: quadrature weight of every Gauss point.
    """

    interp: sparse.csr_matrix
    interp_closed: sparse.csr_matrix
    grads: tuple
    weight: float

    def values(self, field):
        op = self.interp_closed if field.closed else self.interp
        return op @ field.values


def _gauss_1d(n, h):
    rows, cols, ev, dv = [], [], [], []
    for c in range(n):
        for k, g in enumerate(_GAUSS):
            r = 2 * c + k
            rows += [r, r]
            cols += [c, c + 1]
            ev += [1.0 - g, g]
            dv += [-1.0 / h, 1.0 / h]
    shape = (2 * n, n + 1)
    E = sparse.csr_matrix((ev, (rows, cols)), shape=shape)
    D = sparse.csr_matrix((dv, (rows, cols)), shape=shape)
    return E, D


def _kron_all(mats):
    out = mats[0]
    for m in mats[1:]:
        out = sparse.kron(out, m, format="csr")
    return sparse.csr_matrix(out)


@lru_cache(maxsize=16)
def cell_quadrature(grid):
    pairs = [_gauss_1d(grid.n, h) for h in grid.h]
    E = [e for e, _ in pairs]
    D = [d for _, d in pairs]
    interior = [e[:, 1:-1] for e in E]
    interior_d = [d[:, 1:-1] for d in D]
    interp = _kron_all(interior)
    grads = []
    for axis in range(grid.dim):
        mats = [interior_d[k] if k == axis else interior[k] for k in range(grid.dim)]
        grads.append(_kron_all(mats))
    return CellQuadrature(
        interp=interp,
        interp_closed=_kron_all(E),
        grads=tuple(grads),
        weight=grid.cell_volume / 2**grid.dim,
    )


def _check_field(u):
    if u.closed:
        raise SpecError("unknown fields must live on interior nodes")


def local_terms(values, p, quad, grad=False):
    """Integral of |grad u|^p and, optionally, its gradient with respect to the nodal values."""
    g = [G @ values for G in quad.grads]
    mag = np.sqrt(sum(gi * gi for gi in g))
    energy = quad.weight * fsum(mag**p)
    if not grad:
        return energy, None
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(mag > 0.0, mag ** (p - 2.0), 0.0) * (p * quad.weight)
    dE = sum(G.T @ (coef * gi) for G, gi in zip(quad.grads, g))
    return energy, dE


def local_p_energy(u, p):
    """Integral of |grad u|^p over the box (Dirichlet seminorm to the power p)."""
    _check_field(u)
    return local_terms(u.values, p, cell_quadrature(u.grid))[0]


def lt_norm(u, t):
    """Integral of |u|^t over the box by the tensor two-point rule on the interpolant."""
    if t < 1:
        raise SpecError("lt_norm needs t >= 1")
    quad = cell_quadrature(u.grid)
    return quad.weight * fsum(np.abs(quad.values(u)) ** t)


def l2_distance(u, v):
    """L^2 distance of two interior fields."""
    return math.sqrt(lt_norm(u.like(u.values - v.values), 2.0))


# -- nonlocal assembly ---------------------------------------------------------


def tail_coefficient(x, R, s, q, N):
    """Integral of |z|^-(N+sq) over |z| > R (independent of the centre ``x``)."""
    sq = s * q
    if sq <= 0:
        raise SpecError("tail coefficient needs s*q > 0")
    if R <= 0:
        raise SpecError("tail radius must be positive")
    return sphere_measure(N) * R ** (-sq) / sq


def exterior_coefficient(points, lo, hi, sigma):
    """Integral of |x - y|^-(N+sigma) over y outside the box [lo, hi], for x inside.

    Seen from x, the exterior is swept by rays leaving through the box faces:
    the integral equals (1/sigma) times the integral over each face of
    dist * |y - x|^-(N+sigma). In 2D the face integrals are incomplete beta
    functions; in 3D one angular direction is integrated by Gauss-Legendre.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    N = x.shape[1]
    if np.any(x <= lo) or np.any(x >= hi):
        raise AssemblyError("exterior coefficient needs points strictly inside the box")
    total = np.zeros(x.shape[0])
    for axis in range(N):
        others = [k for k in range(N) if k != axis]
        for dist in (x[:, axis] - lo[axis], hi[axis] - x[:, axis]):
            if N == 1:
                total += dist ** (-sigma)
            elif N == 2:
                b = others[0]
                a1 = np.arctan((lo[b] - x[:, b]) / dist)
                a2 = np.arctan((hi[b] - x[:, b]) / dist)
                total += dist ** (-sigma) * (
                    cos_power_integral(a2, sigma) - cos_power_integral(a1, sigma)
                )
            elif N == 3:
                b, c = others
                nodes, wts = np.polynomial.legendre.leggauss(64)
                t1 = np.arctan((lo[b] - x[:, b]) / dist)
                t2 = np.arctan((hi[b] - x[:, b]) / dist)
                mid, half = 0.5 * (t1 + t2), 0.5 * (t2 - t1)
                theta = mid[:, None] + half[:, None] * nodes[None, :]
                rad = dist[:, None] / np.cos(theta)
                lo_c = (lo[c] - x[:, c])[:, None]
                hi_c = (hi[c] - x[:, c])[:, None]
                inner = cos_power_integral(np.arctan(hi_c / rad), 1.0 + sigma) - cos_power_integral(
                    np.arctan(lo_c / rad), 1.0 + sigma
                )
                total += dist ** (-sigma) * half * np.sum(wts * np.cos(theta) ** sigma * inner, axis=1)
            else:
                raise AssemblyError("exterior coefficients implemented for N <= 3")
    return total / sigma


def near_field_coefficient(N, s, q, h):
    """Leading-order mass of the pair sum's excluded diagonal, per unit of |grad u|^q.

    For smooth u the midpoint lattice sum misses
    -c_{N,q} Z_N(N - q(1-s)) h^{q(1-s)} |grad u|^q per unit volume, where
    c_{N,q} is the directional average of |e.w|^q and Z_N the Epstein zeta
    function of the integer lattice.
    """
    a = q * (1.0 - s)
    return -directional_average(N, q) * epstein_zeta(N - a, N) * h**a


@dataclass(frozen=True, eq=False)
class NonlocalAssembly:
    """Pair weights and exterior coefficients for one (grid, s, q).

    Attributes:
        grid: the grid the assembly was built for.
        s, q: fractional order and exponent.
        table: pair weight w_ij stored by index offset (flat, C order).
        base, offset: ``table[base[i] + offset[j]]`` is the weight of (i, j).
        tau: exterior coefficient of every interior node.
        exterior_inset: the exterior is taken outside the box shrunk by
            ``exterior_inset * h`` on every side.
        near_field: coefficient of the optional diagonal correction
            (0 when disabled).
    """

    grid: object
    s: float
    q: float
    table: np.ndarray
    base: np.ndarray
    offset: np.ndarray
    tau: np.ndarray
    exterior_inset: float
    near_field: float

    def pair_weight(self, i, j):
        if i == j:
            return 0.0
        return float(self.table[self.base[i] + self.offset[j]])

    def matches(self, grid, s, q):
        return self.grid == grid and self.s == s and self.q == q


@lru_cache(maxsize=8)
def _cached_nonlocal(grid, s, q, exterior_inset, near_field):
    M = grid.interior_count
    if M > MAX_NODES:
        raise AssemblyError(f"{M} nodes exceed the pair-sum cap of {MAX_NODES}")
    N, m = grid.dim, grid.n - 1
    span = 2 * m - 1
    ks = np.arange(-(m - 1), m)
    mesh = np.meshgrid(*[ks * h for h in grid.h], indexing="ij")
    dist = np.sqrt(sum(g * g for g in mesh))
    vol = grid.cell_volume
    with np.errstate(divide="ignore"):
        table = np.where(dist > 0.0, vol * vol * dist ** (-(N + s * q)), 0.0).ravel()
    strides = np.array([span ** (N - 1 - d) for d in range(N)], dtype=np.intp)
    idx = np.stack(np.unravel_index(np.arange(M), grid.interior_shape), axis=1)
    base = np.ascontiguousarray(((m - 1 - idx) * strides).sum(axis=1), dtype=np.intp)
    offset = np.ascontiguousarray((idx * strides).sum(axis=1), dtype=np.intp)
    inset = np.asarray(grid.h) * exterior_inset
    tau = exterior_coefficient(grid.coords, inset, np.asarray(grid.lengths) - inset, s * q)
    coef = 0.0
    if near_field:
        if len(set(grid.h)) != 1:
            raise AssemblyError("near-field correction needs equal spacing on every axis")
        coef = near_field_coefficient(N, s, q, grid.h[0])
    for arr in (table, base, offset, tau):
        arr.setflags(write=False)
    return NonlocalAssembly(grid, s, q, table, base, offset, tau, exterior_inset, coef)


def build_nonlocal(grid, s, q, exterior_inset=0.5, near_field=True):
    """Pair weights and exterior coefficients for ``grid`` (cached)."""
    if not (0 < s < 1 and q > 1):
        raise SpecError("need 0 < s < 1 and q > 1")
    return _cached_nonlocal(grid, float(s), float(q), float(exterior_inset), bool(near_field))


def nonlocal_terms(values, asm, grad=False, backend=None):
    """Gagliardo energy of nodal values and, optionally, its gradient."""
    kern = kernels.get_backend(backend)
    u = np.ascontiguousarray(values, dtype=float)
    q = asm.q
    rows = np.empty_like(u)
    vol = asm.grid.cell_volume
    absq = np.abs(u) ** q
    if grad:
        g = np.empty_like(u)
        kern.pair_energy_grad_rows(u, asm.table, asm.base, asm.offset, q, rows, g)
    else:
        kern.pair_energy_rows(u, asm.table, asm.base, asm.offset, q, rows)
    energy = fsum(rows) + 2.0 * vol * fsum(absq * asm.tau)
    dE = None
    if grad:
        dE = 2.0 * q * (g + vol * asm.tau * signed_power(u, q - 1.0))
    if asm.near_field:
        quad = cell_quadrature(asm.grid)
        extra, d_extra = local_terms(u, q, quad, grad=grad)
        energy += asm.near_field * extra
        if grad:
            dE = dE + asm.near_field * d_extra
    return energy, dE


def gagliardo_energy(u, s, q, asm):
    """Discrete Gagliardo energy [u]_{s,q}^q of an interior field."""
    _check_field(u)
    if not asm.matches(u.grid, s, q):
        raise AssemblyError("assembly was built for a different grid or (s, q)")
    return nonlocal_terms(u.values, asm)[0]


# -- weak residual ---------------------------------------------------------------


def weight_values(weights, quad):
    """Quadrature-point values of the weight pair (a, b)."""
    a, b = weights
    return quad.values(a), quad.values(b)


def energy_terms(values, cfg, weights, asm, grad=False):
    """The four homogeneous terms (P, Q, A, B) and optionally their gradients."""
    grid = asm.grid
    quad = cell_quadrature(grid)
    P, dP = local_terms(values, cfg.p, quad, grad)
    Q, dQ = nonlocal_terms(values, asm, grad)
    aq, bq = weight_values(weights, quad)
    uq = quad.interp @ values
    au = np.abs(uq)
    A = quad.weight * fsum(aq * au**cfg.delta)
    B = quad.weight * fsum(bq * au**cfg.r)
    if not grad:
        return (P, Q, A, B), None
    w = quad.weight
    dA = cfg.delta * (quad.interp.T @ (w * aq * signed_power(uq, cfg.delta - 1.0)))
    dB = cfg.r * (quad.interp.T @ (w * bq * signed_power(uq, cfg.r - 1.0)))
    return (P, Q, A, B), (dP, dQ, dA, dB)


def assembly_for(grid, cfg, asm=None):
    if asm is None:
        return build_nonlocal(grid, cfg.s, cfg.q)
    if not asm.matches(grid, cfg.s, cfg.q):
        raise AssemblyError("assembly was built for a different grid or (s, q)")
    return asm


def residual_vector(values, cfg, weights, asm):
    """Gradient of the discrete energy with respect to the nodal values."""
    _, (dP, dQ, dA, dB) = energy_terms(values, cfg, weights, asm, grad=True)
    return dP / cfg.p + dQ / cfg.q - cfg.lam * dA / cfg.delta - cfg.c_r * dB / cfg.r


def residual_apply(u, cfg, weights, asm=None):
    """Derivative of the energy against every nodal hat function.

    Component k is the pairing of the weak residual with the k-th hat; the
    pairing with another field phi is the dot product with its nodal values.
    """
    _check_field(u)
    asm = assembly_for(u.grid, cfg, asm)
    return u.like(residual_vector(u.values, cfg, weights, asm))
