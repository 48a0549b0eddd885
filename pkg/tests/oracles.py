"""Independent reference computations used as test oracles.

Nothing here imports the library's solvers; the point is to check them
against a different route.
"""

import itertools
from fractions import Fraction

import numpy as np


def enumerate_tau0(prevalences, beta0, beta, focal="max"):
    """Exact E[Y D'] / E[D'^2] over all 2^K patterns of independent Bernoulli draws."""
    p = [Fraction(x).limit_denominator(10**9) for x in prevalences]
    num = den = Fraction(0)
    for pattern in itertools.product((0, 1), repeat=len(p)):
        prob = Fraction(1)
        for d, pk in zip(pattern, p):
            prob *= pk if d else 1 - pk
        dprime = max(pattern) if focal == "max" else sum(pattern)
        y = Fraction(beta0) * dprime + sum(Fraction(b) * d for b, d in zip(beta, pattern))
        num += prob * y * dprime
        den += prob * dprime * dprime
    return num / den


def enumerate_tau_j(prevalences, beta0, beta, j):
    """Exact E[Y | D_j = 1] - E[Y | D_j = 0, D' = 0] style target for independent draws.

    Computes beta_j + beta0 + sum_{k != j} beta_k P(D_k = 1 | D_j = 1) by
    enumerating patterns with D_j = 1.
    """
    p = [Fraction(x).limit_denominator(10**9) for x in prevalences]
    total = Fraction(0)
    mass = Fraction(0)
    for pattern in itertools.product((0, 1), repeat=len(p)):
        if pattern[j] != 1:
            continue
        prob = Fraction(1)
        for d, pk in zip(pattern, p):
            prob *= pk if d else 1 - pk
        y = Fraction(beta0) * max(pattern) + sum(Fraction(b) * d for b, d in zip(beta, pattern))
        total += prob * y
        mass += prob
    return total / mass


def joint_tau0_bruteforce(joint, beta0, beta1, beta2, focal):
    """E[Y D'] / E[D'^2] over the four outcomes of (D1, D2) in exact arithmetic."""
    num = den = Fraction(0)
    for d1, d2 in itertools.product((0, 1), repeat=2):
        pr = Fraction(joint[d1][d2])
        dprime = max(d1, d2) if focal == "max" else d1 + d2
        y = Fraction(beta0) * dprime + Fraction(beta1) * d1 + Fraction(beta2) * d2
        num += pr * y * dprime
        den += pr * dprime * dprime
    return num / den


def ols_oracle(X, y):
    """Least squares via QR, plus classical covariance sigma^2 (X'X)^-1."""
    Q, R = np.linalg.qr(X)
    beta = np.linalg.solve(R, Q.T @ y)
    resid = y - X @ beta
    n, p = X.shape
    sigma2 = float(resid @ resid) / (n - p)
    r_inv = np.linalg.inv(R)
    return beta, sigma2 * (r_inv @ r_inv.T)


def random_binary_design(rng, n, k, pattern):
    """Treatment matrix with a given overlap structure; every column occurs at least once."""
    while True:
        if pattern == "independent":
            p = rng.uniform(0.03, 0.5, size=k)
            t = (rng.random((n, k)) < p).astype(float)
        elif pattern == "exclusive":
            choice = rng.integers(0, k + 1, size=n)  # k means untreated
            t = np.zeros((n, k))
            rows = choice < k
            t[np.flatnonzero(rows), choice[rows]] = 1.0
        elif pattern == "correlated":
            latent = rng.normal(size=(n, 1))
            thresh = rng.uniform(0.5, 2.0, size=k)
            t = (latent + 0.7 * rng.normal(size=(n, k)) > thresh).astype(float)
        else:
            raise ValueError(pattern)
        dmax = t.max(axis=1)
        if t.sum(axis=0).min() > 0 and 0 < dmax.sum() < n:
            return t


def fraction_solve(A, b):
    """Gauss-Jordan elimination in exact rational arithmetic."""
    n = len(A)
    M = [[Fraction(v) for v in row] + [Fraction(rhs)] for row, rhs in zip(A, b)]
    for c in range(n):
        pivot = next(r for r in range(c, n) if M[r][c] != 0)
        M[c], M[pivot] = M[pivot], M[c]
        M[c] = [v / M[c][c] for v in M[c]]
        for r in range(n):
            if r != c and M[r][c] != 0:
                M[r] = [a - M[r][c] * p for a, p in zip(M[r], M[c])]
    return [row[-1] for row in M]


def centered_normal_equations(y, columns, lam=0):
    """Exact X'X + Lambda and X'y on mean-centered columns; first column unpenalized."""
    def center(v):
        v = [Fraction(x) for x in v]
        m = sum(v) / len(v)
        return [x - m for x in v]

    X = [center(c) for c in columns]
    yc = center(y)
    A = [[sum(a * b for a, b in zip(ci, cj)) for cj in X] for ci in X]
    for i in range(1, len(X)):
        A[i][i] += Fraction(lam)
    return A, [sum(a * b for a, b in zip(ci, yc)) for ci in X]
