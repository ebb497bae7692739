"""Numpy fallback for the polynomial evaluation kernels."""

import numpy as np


def point_eval(exps, coeffs, point):
    return float((coeffs * (point[None, :] ** exps).prod(axis=1)).sum())


def interval_eval(exps, coeffs, lo, hi):
    # monotone monomials: all box corners are >= 0, so lo**e / hi**e bound them
    plo = (lo[None, :] ** exps).prod(axis=1)
    phi = (hi[None, :] ** exps).prod(axis=1)
    pos = coeffs >= 0
    acc_lo = float((coeffs * np.where(pos, plo, phi)).sum())
    acc_hi = float((coeffs * np.where(pos, phi, plo)).sum())
    w = 1e-12 * (1.0 + abs(acc_lo) + abs(acc_hi))
    return acc_lo - w, acc_hi + w
