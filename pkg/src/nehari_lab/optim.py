"""Preconditioned L-BFGS on a manifold given by a retraction.

The Nehari branches and the Rayleigh-quotient spheres are both cones cut by
a scaling condition, and the objectives used on them are invariant along rays.
So the optimizer only needs an ``evaluate`` map that rescales any nonzero
vector onto the manifold (or raises :class:`Inadmissible`) and returns the
objective value and Euclidean gradient there.

The inverse metric is a power of the Dirichlet Laplacian of the grid, applied
exactly by a type-I sine transform.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import fft

from .errors import NehariLabError


class Inadmissible(NehariLabError):
    """A trial point has no image on the manifold."""


class SpectralPreconditioner:
    """K^-power with K the five-point (2N+1 point) Dirichlet Laplacian of the grid."""

    def __init__(self, grid, power=1.0):
        self.shape = grid.interior_shape
        self.power = power
        eig = 0.0
        n = grid.n
        for d, h in enumerate(grid.h):
            k = np.arange(1, n)
            lam = (4.0 / h**2) * np.sin(k * np.pi / (2 * n)) ** 2
            shape = [1] * grid.dim
            shape[d] = n - 1
            eig = eig + lam.reshape(shape)
        self.eig = eig**power

    def _apply(self, v, factor):
        c = fft.dstn(np.reshape(v, self.shape), type=1, norm="ortho")
        return fft.idstn(c * factor, type=1, norm="ortho").ravel()

    def solve(self, v):
        """K^-power v."""
        return self._apply(v, 1.0 / self.eig)

    def apply(self, v):
        """K^power v."""
        return self._apply(v, self.eig)

    def dual_norm(self, g):
        return math.sqrt(max(float(np.dot(g, self.solve(g))), 0.0))

    def norm(self, u):
        return math.sqrt(max(float(np.dot(u, self.apply(u))), 0.0))


@dataclass
class OptimResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    state: object
    iterations: int
    converged: bool
    measure: float
    history: list = field(default_factory=list)
    evaluations: int = 0


def lbfgs(evaluate, x0, precond, stop, max_iter=10_000, memory=8,
          first_step=None, armijo=1e-4, shrink=0.5, max_backtracks=40):
    """Minimize a ray-invariant objective over the manifold behind ``evaluate``.

    Args:
        evaluate: x -> (y, f, g, state) with y the manifold point on the ray
            through x, f the objective and g its gradient at y. Raises
            Inadmissible when the ray misses the manifold.
        x0: starting vector.
        precond: SpectralPreconditioner used as the initial inverse Hessian.
        stop: (y, f, g, state) -> measure; the loop stops once it is <= 0.
        first_step: step length of the first preconditioned gradient step.

    Returns:
        OptimResult at the last accepted point; ``converged`` is False when
        max_iter was reached or the line search stalled.
    """
    x, f, g, state = evaluate(np.asarray(x0, dtype=float))
    evals = 1
    history = [f]
    pairs = deque(maxlen=memory)
    step0 = first_step
    measure = stop(x, f, g, state)
    it = 0
    while measure > 0 and it < max_iter:
        it += 1
        d = -_two_loop(g, pairs, precond)
        slope = float(np.dot(g, d))
        if slope >= 0.0:
            pairs.clear()
            d = -precond.solve(g)
            slope = float(np.dot(g, d))
        alpha = 1.0 if pairs or step0 is None else step0
        accepted = False
        for _ in range(max_backtracks):
            try:
                xt, ft, gt, st = evaluate(x + alpha * d)
                evals += 1
            except Inadmissible:
                alpha *= shrink
                continue
            if ft <= f + armijo * alpha * slope:
                accepted = True
                break
            alpha *= shrink
        if not accepted:
            if pairs:
                pairs.clear()
                continue
            break
        s_vec, y_vec = xt - x, gt - g
        sy = float(np.dot(s_vec, y_vec))
        if sy > 1e-14 * float(np.linalg.norm(s_vec) * np.linalg.norm(y_vec)):
            pairs.append((s_vec, y_vec))
        if not pairs:
            step0 = alpha
        x, f, g, state = xt, ft, gt, st
        history.append(f)
        measure = stop(x, f, g, state)
    return OptimResult(x, f, g, state, it, measure <= 0, measure, history, evals)


def _two_loop(g, pairs, precond):
    q = g.copy()
    coeffs = []
    for s, y in reversed(pairs):
        rho = 1.0 / float(np.dot(y, s))
        a = rho * float(np.dot(s, q))
        q -= a * y
        coeffs.append((rho, a))
    r = precond.solve(q)
    if pairs:
        s, y = pairs[-1]
        r *= float(np.dot(s, y)) / float(np.dot(y, precond.solve(y)))
    for (s, y), (rho, a) in zip(pairs, reversed(coeffs)):
        b = rho * float(np.dot(y, r))
        r += (a - b) * s
    return r
