# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pair sums of the Gagliardo energy.

Node pairs are enumerated through the translation-invariant weight table:
the weight of the pair (i, j) is ``table[base[i] + offset[j]]``. Each
unordered pair is visited once (j > i) in a fixed order, so results are
reproducible bit for bit.
"""

from libc.math cimport exp, fabs, log


def pair_energy_rows(const double[::1] u, const double[::1] table,
                     const Py_ssize_t[::1] base, const Py_ssize_t[::1] offset,
                     double q, double[::1] rows):
    """rows[i] = 2 sum_{j>i} |u_i - u_j|^q w_ij, so that sum(rows) is the full pair sum."""
    cdef Py_ssize_t m = u.shape[0]
    cdef Py_ssize_t i, j, b
    cdef double ui, d, acc
    with nogil:
        for i in range(m):
            ui = u[i]
            b = base[i]
            acc = 0.0
            for j in range(i + 1, m):
                d = fabs(ui - u[j])
                if d != 0.0:
                    acc = acc + exp(q * log(d)) * table[b + offset[j]]
            rows[i] = 2.0 * acc


def pair_energy_grad_rows(const double[::1] u, const double[::1] table,
                          const Py_ssize_t[::1] base, const Py_ssize_t[::1] offset,
                          double q, double[::1] rows, double[::1] grad):
    """Row energies as above plus grad[i] = sum_{j != i} [u_i - u_j]^{q-1} w_ij."""
    cdef Py_ssize_t m = u.shape[0]
    cdef Py_ssize_t i, j, b
    cdef double ui, d, ad, pw, acc, accg
    cdef double qm1 = q - 1.0
    with nogil:
        for i in range(m):
            grad[i] = 0.0
        for i in range(m):
            ui = u[i]
            b = base[i]
            acc = 0.0
            accg = 0.0
            for j in range(i + 1, m):
                d = ui - u[j]
                if d != 0.0:
                    ad = fabs(d)
                    pw = exp(qm1 * log(ad)) * table[b + offset[j]]
                    acc = acc + pw * ad
                    if d < 0.0:
                        pw = -pw
                    accg = accg + pw
                    grad[j] = grad[j] - pw
            rows[i] = 2.0 * acc
            grad[i] = grad[i] + accg
