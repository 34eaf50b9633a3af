"""Special functions used by the quadratures."""

import math

import numpy as np
from scipy import integrate, special


def sphere_measure(N):
    """Surface measure of the unit sphere in R^N."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


def cos_power_integral(phi, mu):
    """Integral of cos(t)^mu over [0, phi] for |phi| < pi/2 (odd in phi)."""
    phi = np.asarray(phi, dtype=float)
    b = 0.5 * (mu + 1.0)
    full = 0.5 * special.beta(0.5, b)
    return np.sign(phi) * full * special.betainc(0.5, b, np.sin(phi) ** 2)


def directional_average(N, q):
    """Mean of |e . w|^q over unit vectors w in R^N, for a fixed unit vector e."""
    return math.gamma(N / 2.0) * math.gamma((q + 1.0) / 2.0) / (
        math.sqrt(math.pi) * math.gamma((N + q) / 2.0)
    )


def _theta_minus_one(t, N):
    k = np.arange(1, 12)
    theta = 1.0 + 2.0 * np.sum(np.exp(-math.pi * k * k * t))
    return theta**N - 1.0


def epstein_zeta(sigma, N):
    """Analytic continuation of sum over nonzero k in Z^N of |k|^-sigma.

    Uses the theta-function splitting at t = 1; valid for any sigma other
    than 0 and N. For 0 < sigma < N it equals the limit of the lattice sum
    minus the matching integral over balls of growing radius.
    """
    f = lambda t: (t ** (sigma / 2 - 1) + t ** ((N - sigma) / 2 - 1)) * _theta_minus_one(t, N)
    tail, _ = integrate.quad(f, 1.0, 60.0, epsabs=1e-15, epsrel=1e-13, limit=200)
    pref = math.pi ** (sigma / 2) / math.gamma(sigma / 2)
    return pref * (-2.0 / sigma - 2.0 / (N - sigma) + tail)


def sphere_kernel_average(tau, N, exponent):
    """Mean over unit w of |e - tau w|^-exponent for 0 <= tau < 1.

    Equals 2F1(a, a - N/2 + 1; N/2; tau^2) with a = exponent/2.
    """
    a = 0.5 * exponent
    return special.hyp2f1(a, a - 0.5 * N + 1.0, 0.5 * N, np.asarray(tau, dtype=float) ** 2)
