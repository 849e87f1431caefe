"""Independent reference computations used by the tests.

Plain Python loops and closed forms, deliberately sharing no code with the package.
"""

import cmath
import itertools
import math


def matpow(p, k):
    n = len(p)
    out = [[float(i == j) for j in range(n)] for i in range(n)]
    for _ in range(k):
        out = [[sum(out[i][m] * p[m][j] for m in range(n)) for j in range(n)] for i in range(n)]
    return out


def invariant_sets(p, tau, rho, atol=1e-12):
    """Bitmasks ``G`` with ``P^tau 1_G = 1_G`` on ``{x : rho(x) > atol}``."""
    n = len(p)
    q = matpow(p, tau)
    supp = [x for x in range(n) if rho[x] > atol]
    found = []
    for mask in range(1 << n):
        ind = [(mask >> i) & 1 for i in range(n)]
        if all(abs(sum(q[x][y] * ind[y] for y in range(n)) - ind[x]) <= atol for x in supp):
            found.append(mask)
    return found


def reachability(p):
    n = len(p)
    r = [[i == j or p[i][j] > 0 for j in range(n)] for i in range(n)]
    for k in range(n):
        for i in range(n):
            for j in range(n):
                r[i][j] = r[i][j] or (r[i][k] and r[k][j])
    return r


def closed_classes(p):
    """Closed communicating classes via transitive closure."""
    n = len(p)
    r = reachability(p)
    classes = []
    seen = set()
    for i in range(n):
        if i in seen:
            continue
        cls = {j for j in range(n) if r[i][j] and r[j][i]}
        seen |= cls
        if all(not r[x][y] or y in cls for x in cls for y in range(n)):
            classes.append(sorted(cls))
    return classes


def fdd_expectation(p, rho, times, phi):
    """``E[phi(x_{t_1}, ..., x_{t_k})]`` by summing over every state tuple."""
    n = len(p)
    steps = [matpow(p, b - a) for a, b in zip(times, times[1:])]
    total = 0.0
    for tup in itertools.product(range(n), repeat=len(times)):
        w = rho[tup[0]]
        for k, step in enumerate(steps):
            w *= step[tup[k]][tup[k + 1]]
        total += w * phi[tup]
    return total


def rotation_sin_average(x0, alpha, n_steps):
    """``(1/N) sum_{k<N} sin(2 pi (x0 + k alpha))`` through the geometric Weyl sum."""
    z = cmath.exp(2j * math.pi * alpha)
    s = (1 - z**n_steps) / (1 - z)
    return (cmath.exp(2j * math.pi * x0) * s).imag / n_steps


def weyl_bound(alpha, n_steps):
    return 1.0 / (n_steps * abs(math.sin(math.pi * alpha)))
