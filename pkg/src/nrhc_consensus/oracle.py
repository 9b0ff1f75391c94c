"""Reference implementations used to certify the solver.

Nothing here imports from ``graph``, ``ocp``, ``sweep`` or ``sim``; every
routine is a separate, deliberately naive re-derivation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm


@dataclass(frozen=True)
class FiniteDifferenceSpec:
    h: float = 1e-6
    scheme: str = "central"
    relative: bool = True

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("finite difference step must be positive")
        if self.scheme != "central":
            raise ValueError("only central differences are supported")

    def step(self, xi: float) -> float:
        return self.h * max(1.0, abs(xi)) if self.relative else self.h


def fd_gradient(f: Callable[[np.ndarray], float], x, spec: FiniteDifferenceSpec = FiniteDifferenceSpec()) -> np.ndarray:
    x = np.array(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        hk = spec.step(x[k])
        xp = x.copy()
        xm = x.copy()
        xp[k] += hk
        xm[k] -= hk
        fp, fm = f(xp), f(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value near component {k}")
        g[k] = (fp - fm) / (xp[k] - xm[k])
    return g


def fd_jacobian(f: Callable[[np.ndarray], np.ndarray], x, spec: FiniteDifferenceSpec = FiniteDifferenceSpec()) -> np.ndarray:
    """Central-difference Jacobian ``J[i, k] = d f_i / d x_k``."""
    x = np.array(x, dtype=float)
    cols = []
    for k in range(x.size):
        hk = spec.step(x[k])
        xp = x.copy()
        xm = x.copy()
        xp[k] += hk
        xm[k] -= hk
        fp, fm = np.asarray(f(xp), dtype=float), np.asarray(f(xm), dtype=float)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise FloatingPointError(f"non-finite function value near component {k}")
        cols.append((fp - fm) / (xp[k] - xm[k]))
    return np.stack(cols, axis=-1)


def rel_err(a, b) -> float:
    """``|a - b| / max(|b|, 1)`` in the 2-norm (Frobenius for matrices)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1.0))


def riccati_reference(A0, B, C, S_T, grid) -> np.ndarray:
    """``S' = -A'S - SA + SBS - C`` backward from ``S(grid[-1]) = S_T``.

    Classic RK4 with four sub-steps per grid interval, constant coefficients.
    Returns ``S`` on every grid point, shape ``(len(grid), n, n)``.
    """
    A0, B, C = (np.array(v, dtype=float) for v in (A0, B, C))
    grid = np.asarray(grid, dtype=float)

    def rhs(S):
        return -A0.T @ S - S @ A0 + S @ B @ S - C

    S = np.array(S_T, dtype=float)
    out = np.empty((len(grid),) + S.shape)
    out[-1] = S
    for k in range(len(grid) - 1, 0, -1):
        h = (grid[k] - grid[k - 1]) / 4.0
        for _ in range(4):
            k1 = rhs(S)
            k2 = rhs(S - 0.5 * h * k1)
            k3 = rhs(S - 0.5 * h * k2)
            k4 = rhs(S - h * k3)
            S = S - (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(S)):
            raise FloatingPointError(f"Riccati solution blew up at tau={grid[k - 1]}")
        out[k - 1] = S
    return out


def lti_sweep_exact(A0, B, C, S_T, c_T, grid):
    """Closed-form ``S`` and ``c`` for constant coefficients.

    Propagates ``[X; Y]' = [[A, -B], [-C, -A']] [X; Y]`` from
    ``[X; Y](T) = [I; S_T]`` with the matrix exponential. Then
    ``S = Y X^-1`` and ``c = X^-T c_T``, which solves
    ``c' = -(A' - S B) c`` without forming differences of large terms.
    """
    A0, B, C = (np.array(v, dtype=float) for v in (A0, B, C))
    n = A0.shape[0]
    H = np.block([[A0, -B], [-C, -A0.T]])
    grid = np.asarray(grid, dtype=float)
    T = grid[-1]
    XY_T = np.vstack([np.eye(n), np.array(S_T, dtype=float)])
    c_T = np.array(c_T, dtype=float)
    S_out = np.empty((len(grid), n, n))
    c_out = np.empty((len(grid), n))
    for k, tau in enumerate(grid):
        XY = expm(H * (tau - T)) @ XY_T
        X, Y = XY[:n], XY[n:]
        S = np.linalg.solve(X.T, Y.T).T
        S_out[k] = 0.5 * (S + S.T)
        c_out[k] = np.linalg.solve(X.T, c_T)
    return S_out, c_out


def spanning_tree_bruteforce(adjacency, max_nodes: int = 12) -> bool:
    """Try every root; DFS along information-flow edges ``j -> i`` (``a_ij > 0``)."""
    a = np.asarray(getattr(adjacency, "adjacency", adjacency), dtype=float)
    m = a.shape[0]
    if m > max_nodes:
        raise ValueError(f"brute force limited to {max_nodes} nodes, got {m}")
    succ = [[i for i in range(m) if a[i][j] > 0] for j in range(m)]
    for root in range(m):
        seen = {root}
        stack = [root]
        while stack:
            j = stack.pop()
            for i in succ[j]:
                if i not in seen:
                    seen.add(i)
                    stack.append(i)
        if len(seen) == m:
            return True
    return False


def union_bruteforce(adjacencies: Sequence) -> np.ndarray:
    mats = [np.asarray(getattr(a, "adjacency", a), dtype=float) for a in adjacencies]
    m = mats[0].shape[0]
    out = np.zeros((m, m))
    for a in mats:
        for i in range(m):
            for j in range(m):
                if a[i][j] > 0:
                    out[i][j] = 1.0
    return out


def total_cost_reference(adjacency, grids, x_stars, u_stars, neighbor_states, Qs, QNs, Rs) -> float:
    """Network cost ``sum_i J_i`` re-evaluated with explicit loops.

    Terminal ``1/2 sum_j a_ij |x_i(T) - x_j|^2_QN`` plus the trapezoid rule
    on ``1/2 (sum_j a_ij |x_i - x_j|^2_Q + |u_i|^2_R)``.
    """
    a = np.asarray(getattr(adjacency, "adjacency", adjacency), dtype=float)
    m = a.shape[0]

    def quad(v, P):
        n = len(v)
        return sum(v[p] * P[p][q] * v[q] for p in range(n) for q in range(n))

    total = 0.0
    for i in range(m):
        grid, xs, us = grids[i], x_stars[i], u_stars[i]
        Q, QN, R = Qs[i], QNs[i], Rs[i]
        nbrs = [j for j in range(m) if a[i][j] > 0]
        xT = xs[-1]
        J = 0.0
        for j in nbrs:
            J += 0.5 * a[i][j] * quad(xT - neighbor_states[j], QN)
        for k in range(len(grid) - 1):
            vals = []
            for kk in (k, k + 1):
                L = quad(us[kk], R)
                for j in nbrs:
                    L += a[i][j] * quad(xs[kk] - neighbor_states[j], Q)
                vals.append(0.5 * L)
            J += 0.5 * (grid[k + 1] - grid[k]) * (vals[0] + vals[1])
        total += J
    return float(total)


def gradient_check(f: Callable[[np.ndarray], float], grad: Callable[[np.ndarray], np.ndarray],
                   points, spec: FiniteDifferenceSpec = FiniteDifferenceSpec()) -> float:
    """Worst ``rel_err(grad(x), fd_gradient(f, x))`` over ``points``."""
    worst = 0.0
    for x in points:
        worst = max(worst, rel_err(grad(x), fd_gradient(f, x, spec)))
    return worst


def scalar_riccati_tanh(T: float = 1.0) -> float:
    """``S(0)`` for ``S' = S^2 - 1``, ``S(T) = 0``, i.e. ``tanh(T)``."""
    return float(np.tanh(T))
