"""Pure-numpy fallback for the coordinate-sweep kernel.

Semantics must match `_sweep_cy` exactly: same visit order, same strict-
improvement rule, same tie handling (the incumbent state wins ties, and
among equal challengers the lowest index wins).
"""

import numpy as np


def sum_rate(z: np.ndarray, noise: float) -> float:
    """Sum of log2(1 + SINR_k) over the rows of the stream-product matrix.

    Row k is user k; column k is its own stream, every other column is
    interference.
    """
    p = np.abs(z) ** 2
    k = z.shape[0]
    idx = np.arange(k)
    sig = p[idx, idx]
    interf = p.sum(axis=1) - sig
    return float(np.sum(np.log2(1.0 + sig / (interf + noise))))


def ascent_sweep(
    contrib: np.ndarray,
    bias: np.ndarray,
    z: np.ndarray,
    states: np.ndarray,
    noise: float,
) -> tuple[int, float]:
    """One full in-place coordinate pass over all elements.

    contrib[m, s] is the additive (K, J) stream-product block of element m
    in state s; z must equal the direct part plus the contributions of the
    current `states` on entry.  Each element moves to the state maximizing
    the sum rate plus its `bias[m, s]` term, holding the rest fixed; z and
    `states` are updated in place.  Returns (number of changed elements,
    sum rate of the final z).
    """
    m_count, s_count = contrib.shape[0], contrib.shape[1]
    k = z.shape[0]
    idx = np.arange(k)
    changes = 0
    for m in range(m_count):
        cur = int(states[m])
        base = z - contrib[m, cur]
        cand = base[None, :, :] + contrib[m]
        p = np.abs(cand) ** 2
        sig = p[:, idx, idx]
        interf = p.sum(axis=2) - sig
        obj = np.log2(1.0 + sig / (interf + noise)).sum(axis=1) + bias[m]
        best = cur
        best_obj = obj[cur]
        for s in range(s_count):
            if s != cur and obj[s] > best_obj:
                best = s
                best_obj = obj[s]
        if best != cur:
            states[m] = best
            changes += 1
        z[...] = base + contrib[m, best]
    return changes, sum_rate(z, noise)
