"""Pure-Python pool-adjacent-violators, used when the compiled kernels are absent.

Mirrors ``_kernels.pyx`` operation for operation so results are bit-identical.
"""
import numpy as np


def _pava_list(g):
    sums = []
    counts = []
    starts = []
    for i, v in enumerate(g):
        sums.append(v)
        counts.append(1.0)
        starts.append(i)
        while len(sums) > 1 and sums[-2] / counts[-2] > sums[-1] / counts[-1]:
            # pop first: ``sums[-2] += sums.pop()`` would store into the wrong slot
            s, c = sums.pop(), counts.pop()
            starts.pop()
            sums[-1] += s
            counts[-1] += c
    out = [0.0] * len(g)
    nb = len(sums)
    for b in range(nb):
        end = starts[b + 1] if b + 1 < nb else len(g)
        v = sums[b] / counts[b]
        for i in range(starts[b], end):
            out[i] = v
    return out


def pava(g):
    """Project a 1-D array onto the nondecreasing cone."""
    g = np.ascontiguousarray(g, dtype=np.float64)
    return np.array(_pava_list(g.tolist()), dtype=np.float64)


def pava_rows(G):
    """Row-wise :func:`pava` on a 2-D array."""
    G = np.ascontiguousarray(G, dtype=np.float64)
    out = np.empty_like(G)
    for r, row in enumerate(G.tolist()):
        out[r] = _pava_list(row)
    return out
