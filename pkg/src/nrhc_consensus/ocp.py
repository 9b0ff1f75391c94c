"""Per-agent optimal control problem pieces.

Cost for agent i with frozen neighbour states x_j:

    J_i = phi(x(T)) + int_0^T L(x, u) dtau
    L   = 1/2 (sum_j a_ij |x - x_j|^2_Q + |u|^2_R)
    phi = 1/2 sum_j a_ij |x - x_j|^2_QN

The 1/2 on ``phi`` makes ``phi_x`` equal to the terminal costate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Tuple

import numpy as np

from .dynamics import DynamicsModel


def _as_matrix(value, n: int | None, name: str) -> np.ndarray:
    a = np.array(value, dtype=float)
    if a.ndim == 1:
        if n is not None and a.size == n * n and a.size != n:
            a = a.reshape(n, n)
        else:
            a = np.diag(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if n is not None and a.shape[0] != n:
        raise ValueError(f"{name} must be {n}x{n}, got {a.shape}")
    return a


def _check_spd(a: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(a).min() <= 0:
        raise ValueError(f"{name} must be positive definite")


@dataclass(frozen=True, eq=False)
class CostWeights:
    """Running (``Q``), terminal (``QN``) and control (``R``) weights.

    Accepts diagonal vectors or full matrices; all three must be SPD.
    """

    Q: np.ndarray
    QN: np.ndarray
    R: np.ndarray
    R_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        Q = _as_matrix(self.Q, None, "Q")
        n = Q.shape[0]
        QN = _as_matrix(self.QN, n, "QN")
        R = _as_matrix(self.R, n, "R")
        for name, a in (("Q", Q), ("QN", QN), ("R", R)):
            _check_spd(a, name)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        R_inv = np.linalg.inv(R)
        R_inv = 0.5 * (R_inv + R_inv.T)
        R_inv.setflags(write=False)
        object.__setattr__(self, "R_inv", R_inv)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @classmethod
    def identity(cls, n: int = 3) -> "CostWeights":
        return cls(np.eye(n), np.eye(n), np.eye(n))

    def __eq__(self, other):
        if not isinstance(other, CostWeights):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("Q", "QN", "R"))


@dataclass(frozen=True)
class HorizonSchedule:
    """Growing horizon ``T(t) = Tf (1 - exp(-alpha t))``."""

    Tf: float = 1.0
    alpha: float = 0.01

    def __post_init__(self):
        if not self.Tf > 0:
            raise ValueError("Tf must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    def T(self, t: float) -> float:
        return self.Tf * -np.expm1(-self.alpha * t)

    def dTdt(self, t: float) -> float:
        return self.Tf * self.alpha * np.exp(-self.alpha * t)


class NeighborSnapshot:
    """Frozen neighbour states ``(j, a_ij, x_j)`` seen by one agent."""

    __slots__ = ("indices", "weights", "states", "weight_sum", "weighted_mean_sum")

    def __init__(self, entries: Iterable[Tuple[int, float, np.ndarray]] = (), n: int | None = None):
        entries = list(entries)
        self.indices = tuple(int(j) for j, _, _ in entries)
        self.weights = np.array([float(a) for _, a, _ in entries])
        if np.any(self.weights <= 0):
            raise ValueError("snapshot weights must be positive")
        if entries:
            self.states = np.array([np.asarray(x, dtype=float) for _, _, x in entries])
            if n is not None and self.states.shape[1] != n:
                raise ValueError(f"neighbour states must have dimension {n}")
        else:
            self.states = np.zeros((0, n or 0))
        self.weight_sum = float(self.weights.sum())
        # sum_j a_ij x_j, so that sum_j a_ij (x - x_j) = weight_sum x - weighted_mean_sum
        self.weighted_mean_sum = self.weights @ self.states if entries else None

    @property
    def entries(self):
        return list(zip(self.indices, self.weights.tolist(), list(self.states)))

    def __len__(self):
        return len(self.indices)

    def coupling(self, x: np.ndarray) -> np.ndarray:
        """``sum_j a_ij (x - x_j)``."""
        if not self.indices:
            return np.zeros_like(x)
        return self.weight_sum * x - self.weighted_mean_sum

    def weighted_sq(self, x: np.ndarray, P: np.ndarray) -> float:
        """``sum_j a_ij (x - x_j)^T P (x - x_j)``."""
        if not self.indices:
            return 0.0
        d = x - self.states
        return float(np.einsum("k,ki,ij,kj->", self.weights, d, P, d))


def _dim(x, n: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {x.shape}")
    return x


def _check_nb(nb: NeighborSnapshot, n: int) -> None:
    if len(nb) and nb.states.shape[1] != n:
        raise ValueError(f"neighbour states have dimension {nb.states.shape[1]}, expected {n}")


def running_cost(x, u, nb: NeighborSnapshot, w: CostWeights) -> float:
    n = w.n
    x, u = _dim(x, n, "x"), _dim(u, n, "u")
    _check_nb(nb, n)
    return 0.5 * (nb.weighted_sq(x, w.Q) + float(u @ w.R @ u))


def terminal_cost(x, nb: NeighborSnapshot, w: CostWeights) -> float:
    x = _dim(x, w.n, "x")
    _check_nb(nb, w.n)
    return 0.5 * nb.weighted_sq(x, w.QN)


def terminal_gradient(x, nb: NeighborSnapshot, w: CostWeights) -> np.ndarray:
    x = _dim(x, w.n, "x")
    _check_nb(nb, w.n)
    return w.QN @ nb.coupling(x)


def terminal_hessian(nb: NeighborSnapshot, w: CostWeights) -> np.ndarray:
    return nb.weight_sum * w.QN


def hamiltonian(x, u, lam, nb: NeighborSnapshot, w: CostWeights, model: DynamicsModel) -> float:
    lam = _dim(lam, w.n, "lam")
    u = _dim(u, w.n, "u")
    return running_cost(x, u, nb, w) + float(lam @ (model.eval_f(x) + u))


def grad_H_x(x, u, lam, nb: NeighborSnapshot, w: CostWeights, model: DynamicsModel) -> np.ndarray:
    n = w.n
    x, lam = _dim(x, n, "x"), _dim(lam, n, "lam")
    _dim(u, n, "u")
    _check_nb(nb, n)
    return w.Q @ nb.coupling(x) + model.jacobian(x).T @ lam


def grad_H_u(u, lam, w: CostWeights) -> np.ndarray:
    return w.R @ _dim(u, w.n, "u") + _dim(lam, w.n, "lam")


def control_from_costate(lam, w: CostWeights) -> np.ndarray:
    return -w.R_inv @ _dim(lam, w.n, "lam")


def residual_P(lam_T, x_T, nb: NeighborSnapshot, w: CostWeights) -> np.ndarray:
    return _dim(lam_T, w.n, "lam_T") - terminal_gradient(x_T, nb, w)


def abc_matrices(x, u, lam, nb: NeighborSnapshot, w: CostWeights, model: DynamicsModel):
    """Coefficients of the linear variational system.

    With ``f = F(x) + u``: ``f_u = I``, ``H_ux = 0`` and ``H_uu = R``, so
    ``A = F_x``, ``B = R^-1`` and ``C = H_xx``.
    """
    n = w.n
    x, lam = _dim(x, n, "x"), _dim(lam, n, "lam")
    _dim(u, n, "u")
    _check_nb(nb, n)
    A = model.jacobian(x)
    B = w.R_inv.copy()
    C = nb.weight_sum * w.Q + model.hessian_contract(x, lam)
    return A, B, 0.5 * (C + C.T)


def horizon_cost(grid: np.ndarray, x_star: np.ndarray, u_star: np.ndarray,
                 nb: NeighborSnapshot, w: CostWeights) -> float:
    """``phi(x*(T)) + int L dtau`` along a stored horizon solution (trapezoid)."""
    J = terminal_cost(x_star[-1], nb, w)
    if len(grid) > 1:
        L = np.array([running_cost(x, u, nb, w) for x, u in zip(x_star, u_star)])
        J += float(np.sum(0.5 * (L[1:] + L[:-1]) * np.diff(grid)))
    return J
