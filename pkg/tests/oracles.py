"""Independent reference computations shared by the test modules."""

import itertools

import numpy as np

from risbf.nn import loss_and_grads
from risbf.objective import cascaded


def grid_best_gain(ch, levels=16):
    """Best channel gain over a uniform ``levels``-point phase grid per element.

    Enumerates the two halves of the element set separately and combines them
    with one outer product, so N = 6 costs a 4096 x 4096 table.
    """
    grid = np.exp(2j * np.pi * np.arange(levels) / levels)
    C = cascaded(ch.G, ch.h_r)  # (M, N)
    N = C.shape[1]
    half = N // 2

    def partial_sums(cols):
        if not cols:
            return np.zeros((1, C.shape[0]), dtype=complex)
        combos = np.array(list(itertools.product(grid, repeat=len(cols))))
        return combos @ C[:, cols].T

    A = partial_sums(list(range(half))) + ch.h_d  # (La, M)
    B = partial_sums(list(range(half, N)))  # (Lb, M)
    total = (np.sum(np.abs(A) ** 2, axis=1)[:, None] + np.sum(np.abs(B) ** 2, axis=1)[None, :]
             + 2 * (A.conj() @ B.T).real)
    return float(total.max())


def random_search_best_gain(ch, rng, count):
    theta = np.exp(1j * rng.uniform(0, 2 * np.pi, (count, ch.N)))
    r = theta @ cascaded(ch.G, ch.h_r).T + ch.h_d
    return float(np.max(np.sum(np.abs(r) ** 2, axis=1)))


def finite_difference_check(params, x, C, h_d, h=1e-5, zero_tol=1e-8):
    """Largest relative error between analytic and central-difference gradients.

    Entries where both values are below ``zero_tol`` count as agreeing zeros.
    The FC biases feeding a BatchNorm layer have an identically zero gradient,
    and for them the difference quotient is pure round-off (about 1e-10 here),
    which no relative measure can resolve.
    """
    _, grads = loss_and_grads(params, x, C, h_d)
    worst = 0.0
    for array, grad in zip(params.trainable(), grads):
        for idx in np.ndindex(array.shape):
            orig = array[idx]
            array[idx] = orig + h
            up, _ = loss_and_grads(params, x, C, h_d)
            array[idx] = orig - h
            down, _ = loss_and_grads(params, x, C, h_d)
            array[idx] = orig
            fd = (up - down) / (2 * h)
            scale = max(abs(fd), abs(grad[idx]))
            if scale < zero_tol:
                continue
            worst = max(worst, abs(fd - grad[idx]) / scale)
    return worst
