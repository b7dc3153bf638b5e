"""Shared test helpers.

Finite-difference oracle: central differences with step 1e-6 on 64-bit
floats. `rel_err` compares against it with an absolute floor of 1e-8 so
that derivatives near zero do not inflate the relative error.
"""

import numpy as np

FD_STEP = 1e-6


def central_diff(f, x, h=FD_STEP):
    """d f / d x by central differences; f maps a float to a float."""
    return (f(x + h) - f(x - h)) / (2.0 * h)


def rel_err(got, want, floor=1e-8):
    got = np.asarray(got, dtype=float)
    want = np.asarray(want, dtype=float)
    denom = np.maximum(np.abs(want), floor)
    return np.max(np.abs(got - want) / denom)
