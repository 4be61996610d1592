"""Independent reference computations shared by the test modules."""
from __future__ import annotations

import itertools

import numpy as np


def enumerate_qp(E, f, M, gamma, tol=1e-9):
    """Brute-force min x'Ex - 2f'x s.t. Mx <= gamma over all active subsets."""
    n = f.size
    m = gamma.size
    best_x, best_val = None, np.inf
    for k in range(0, min(n, m) + 1):
        for act in itertools.combinations(range(m), k):
            act = list(act)
            Ma = M[act]
            K = np.zeros((n + k, n + k))
            K[:n, :n] = 2 * E
            K[:n, n:] = Ma.T
            K[n:, :n] = Ma
            rhs = np.concatenate([2 * f, gamma[act]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            x, lam = sol[:n], sol[n:]
            if np.any(lam < -tol) or np.any(M @ x - gamma > tol):
                continue
            val = x @ E @ x - 2 * f @ x
            if val < best_val:
                best_x, best_val = x, val
    return best_x, best_val


def central_jacobian(fun, x, eps=1e-6):
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x))
    J = np.zeros((f0.size, x.size))
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = eps
        J[:, j] = (np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * eps)
    return J


def random_qp(rng, n=None, m=None):
    n = n or int(rng.integers(1, 9))
    m = m if m is not None else int(rng.integers(0, 13))
    G = rng.normal(size=(n, n))
    E = G @ G.T + 0.1 * np.eye(n)
    f = rng.normal(size=n) * 3
    M = rng.normal(size=(m, n))
    # x = 0 strictly feasible keeps every instance solvable
    gamma = rng.uniform(0.1, 2.0, size=m)
    return E, f, M, gamma
