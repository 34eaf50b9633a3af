"""Numpy implementation of the pair sums, used when the extension is not built.

Same contract as the compiled module: per-row sums in fixed column order.
"""

import numpy as np

_BLOCK = 128


def _blocks(m):
    for start in range(0, m, _BLOCK):
        yield slice(start, min(start + _BLOCK, m))


def pair_energy_rows(u, table, base, offset, q, rows):
    for blk in _blocks(u.size):
        d = np.abs(u[blk, None] - u[None, :])
        w = table[base[blk, None] + offset[None, :]]
        with np.errstate(divide="ignore"):
            rows[blk] = np.sum(np.where(d != 0.0, d**q * w, 0.0), axis=1)


def pair_energy_grad_rows(u, table, base, offset, q, rows, grad):
    for blk in _blocks(u.size):
        d = u[blk, None] - u[None, :]
        ad = np.abs(d)
        w = table[base[blk, None] + offset[None, :]]
        with np.errstate(divide="ignore", invalid="ignore"):
            pw = np.where(ad != 0.0, ad ** (q - 1.0) * w, 0.0)
        rows[blk] = np.sum(pw * ad, axis=1)
        grad[blk] = np.sum(np.sign(d) * pw, axis=1)
