"""Agent vector fields with first and second derivative information.

Every agent obeys ``xdot = F(x) + u``; a model supplies ``F``, its Jacobian
and the costate-contracted Hessian ``sum_k lam_k d2F_k/dx2``.
"""
from __future__ import annotations

from typing import Callable, Dict

import numpy as np


def _check_dim(v, n: int, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {v.shape}")
    return v


class DynamicsModel:
    """Base class for the drift ``F`` of an agent.

    Subclasses set ``n`` and implement ``_f``, ``_jac`` and ``_hess``; the
    public methods validate shapes. ``gauss_newton=True`` zeroes the Hessian
    contraction for models without usable second derivatives.
    """

    n: int = 0
    name: str = "model"

    def __init__(self, gauss_newton: bool = False):
        self.gauss_newton = gauss_newton

    def eval_f(self, x) -> np.ndarray:
        return self._f(_check_dim(x, self.n, "x"))

    def jacobian(self, x) -> np.ndarray:
        return self._jac(_check_dim(x, self.n, "x"))

    def hessian_contract(self, x, lam) -> np.ndarray:
        x = _check_dim(x, self.n, "x")
        lam = _check_dim(lam, self.n, "lam")
        if self.gauss_newton:
            return np.zeros((self.n, self.n))
        return self._hess(x, lam)

    def _f(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _jac(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _hess(self, x: np.ndarray, lam: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class LorenzModel(DynamicsModel):
    """Lorenz system with sigma=10, rho=28, beta=8/3."""

    n = 3
    name = "lorenz"
    sigma = 10.0
    rho = 28.0
    beta = 8.0 / 3.0

    def _f(self, x):
        x1, x2, x3 = x
        return np.array([
            self.sigma * (x2 - x1),
            self.rho * x1 - x1 * x3 - x2,
            x1 * x2 - self.beta * x3,
        ])

    def _jac(self, x):
        x1, x2, x3 = x
        return np.array([
            [-self.sigma, self.sigma, 0.0],
            [self.rho - x3, -1.0, -x1],
            [x2, x1, -self.beta],
        ])

    def _hess(self, x, lam):
        # F is quadratic: only x1*x3 (row 2) and x1*x2 (row 3) survive
        h13 = -lam[1]
        h12 = lam[2]
        return np.array([
            [0.0, h12, h13],
            [h12, 0.0, 0.0],
            [h13, 0.0, 0.0],
        ])


class LinearModel(DynamicsModel):
    """``F(x) = A0 x``; mainly a test fixture for Riccati comparisons."""

    name = "linear"

    def __init__(self, A0, gauss_newton: bool = False):
        super().__init__(gauss_newton)
        self.A0 = np.array(A0, dtype=float)
        if self.A0.ndim != 2 or self.A0.shape[0] != self.A0.shape[1]:
            raise ValueError("A0 must be square")
        self.n = self.A0.shape[0]

    def _f(self, x):
        return self.A0 @ x

    def _jac(self, x):
        return self.A0.copy()

    def _hess(self, x, lam):
        return np.zeros((self.n, self.n))


class IntegratorModel(LinearModel):
    """Single integrator, ``F = 0``."""

    name = "integrator"

    def __init__(self, n: int = 3, gauss_newton: bool = False):
        super().__init__(np.zeros((n, n)), gauss_newton)


_REGISTRY: Dict[str, Callable[..., DynamicsModel]] = {
    "lorenz": LorenzModel,
    "integrator": IntegratorModel,
}


def register_model(name: str, factory: Callable[..., DynamicsModel]) -> None:
    _REGISTRY[name] = factory


def get_model(name: str, **kwargs) -> DynamicsModel:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; known: {sorted(_REGISTRY)}") from None
    return factory(**kwargs)


def available_models():
    return sorted(_REGISTRY)
