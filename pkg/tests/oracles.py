"""Independent reference computations used by the test-suite."""

from itertools import combinations

import numpy as np


def qp_enumerate(g, A, b, tol=1e-9):
    """Minimize ||x + g||^2 s.t. A x <= b by trying every active set.

    Returns (x, duals) with duals scaled for the unhalved objective, or None
    when no subset yields a feasible point with nonnegative multipliers.
    """
    g = np.asarray(g, float)
    A = np.asarray(A, float).reshape(-1, g.size)
    b = np.asarray(b, float)
    n, k = g.size, b.size
    best = None
    for size in range(0, min(n, k) + 1):
        for S in combinations(range(k), size):
            S = list(S)
            if S:
                AS = A[S]
                M = AS @ AS.T
                if np.linalg.matrix_rank(AS, tol=1e-10) < size:
                    continue
                lam = np.linalg.solve(M, -AS @ g - b[S])
                x = -g - AS.T @ lam
            else:
                lam = np.zeros(0)
                x = -g.copy()
            if np.any(lam < -tol) or np.any(A @ x - b > tol):
                continue
            val = np.sum((x + g) ** 2)
            if best is None or val < best[0] - 1e-12:
                duals = np.zeros(k)
                duals[S] = 2 * np.maximum(lam, 0)
                best = (val, x, duals)
    if best is None:
        return None
    return best[1], best[2]


def run_lengths(trace, alpha):
    """Lengths of maximal runs of samples strictly above alpha (plain loop)."""
    runs, cur = [], 0
    for x in trace:
        if x > alpha:
            cur += 1
        elif cur:
            runs.append(cur)
            cur = 0
    if cur:
        runs.append(cur)
    return runs


def central_difference(f, x, h=1e-6):
    x = np.asarray(x, float)
    f0 = np.atleast_1d(f(x))
    J = np.empty((f0.size, x.size))
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        J[:, k] = (np.atleast_1d(f(x + e)) - np.atleast_1d(f(x - e))) / (2 * h)
    return J


def project_disk_box(x, s_n, lo, hi):
    """Exact Euclidean projection of a 2-vector onto {|y| <= s_n} with lo <= y <= hi.

    Enumerates the interior point, the disk arc, the four box edges and the
    arc/edge crossings, keeping the nearest admissible candidate.
    """
    x = np.asarray(x, float)
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    cands = [x, x * s_n / max(np.linalg.norm(x), 1e-300)]
    for axis in (0, 1):
        other = 1 - axis
        for level in (lo[axis], hi[axis]):
            y = x.copy()
            y[axis] = level
            y[other] = np.clip(y[other], lo[other], hi[other])
            cands.append(y)
            if abs(level) <= s_n:
                w = np.sqrt(s_n**2 - level**2)
                for sgn in (-1.0, 1.0):
                    z = np.empty(2)
                    z[axis], z[other] = level, sgn * w
                    cands.append(z)
    cands += [np.clip(x, lo, hi)]
    ok = [c for c in cands if np.linalg.norm(c) <= s_n * (1 + 1e-12) and np.all(c >= lo - 1e-12) and np.all(c <= hi + 1e-12)]
    return min(ok, key=lambda c: np.linalg.norm(c - x))
