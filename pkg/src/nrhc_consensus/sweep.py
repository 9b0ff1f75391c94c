"""Non-iterative receding-horizon solver for a single agent.

One call to :func:`advance` per sampling instant:

1. integrate state and costate forward over the horizon ``[0, T(t)]``;
2. integrate the sweep matrices ``S`` and offsets ``c`` backward from
   ``tau = T`` with the continuation term ``As P`` in ``c(T)``;
3. step the costate ``Lam`` over one sample with
   ``dLam/dt = -H_x + c(0)`` and return ``u = -R^-1 Lam``.

There is no inner iteration; the optimality residual ``P`` is driven to
zero over time by the Hurwitz gain ``As``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import DynamicsModel
from .ocp import CostWeights, HorizonSchedule, NeighborSnapshot, terminal_gradient


class SolverDivergence(RuntimeError):
    """Non-finite values in the horizon solution."""

    def __init__(self, message: str, tau: Optional[float] = None,
                 agent: Optional[int] = None, t: Optional[float] = None):
        self.tau = tau
        self.agent = agent
        self.t = t
        self.detail = message
        super().__init__(self._format())

    def _format(self) -> str:
        where = []
        if self.agent is not None:
            where.append(f"agent={self.agent}")
        if self.t is not None:
            where.append(f"t={self.t:.6g}")
        if self.tau is not None:
            where.append(f"tau={self.tau:.6g}")
        return f"{self.detail} ({', '.join(where)})" if where else self.detail

    def locate(self, agent: Optional[int] = None, t: Optional[float] = None) -> "SolverDivergence":
        if agent is not None:
            self.agent = agent
        if t is not None:
            self.t = t
        self.args = (self._format(),)
        return self


@dataclass(frozen=True, eq=False)
class IntegratorConfig:
    """Step sizes, continuation gain and tau-axis scheme (``"rk4"``/``"euler"``)."""

    tau_step: float = 0.005
    ts: float = 0.01
    As: np.ndarray = field(default_factory=lambda: -50.0 * np.eye(3))
    scheme: str = "rk4"

    def __post_init__(self):
        if not self.tau_step > 0:
            raise ValueError("tau_step must be positive")
        if not self.ts > 0:
            raise ValueError("ts must be positive")
        As = np.array(self.As, dtype=float)
        if As.ndim == 0:
            As = float(As) * np.eye(3)
        elif As.ndim == 1:
            As = np.diag(As)
        if As.ndim != 2 or As.shape[0] != As.shape[1]:
            raise ValueError("As must be a square matrix")
        if np.linalg.eigvals(As).real.max() >= 0:
            raise ValueError("As must be Hurwitz (all eigenvalues in the open left half plane)")
        As.setflags(write=False)
        object.__setattr__(self, "As", As)
        scheme = self.scheme.lower()
        if scheme not in ("rk4", "euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        object.__setattr__(self, "scheme", scheme)

    def __eq__(self, other):
        if not isinstance(other, IntegratorConfig):
            return NotImplemented
        return (self.tau_step == other.tau_step and self.ts == other.ts
                and self.scheme == other.scheme and np.array_equal(self.As, other.As))


def horizon_grid(T: float, tau_step: float) -> np.ndarray:
    """Uniform grid over ``[0, T]``; the last interval may be short.

    Horizons shorter than one step collapse to the single point ``[0]``.
    """
    if T < tau_step:
        return np.zeros(1)
    N = math.ceil(T / tau_step - 1e-9)
    grid = np.arange(N + 1) * tau_step
    grid[-1] = T
    return grid


@dataclass
class AgentSolverState:
    """Costate plus the most recent horizon solution of one agent."""

    lam: np.ndarray
    grid: np.ndarray = field(default_factory=lambda: np.zeros(1))
    x_star: Optional[np.ndarray] = None
    lam_star: Optional[np.ndarray] = None
    u_star: Optional[np.ndarray] = None
    S: Optional[np.ndarray] = None
    c: Optional[np.ndarray] = None
    P: Optional[np.ndarray] = None
    lam_rate: Optional[np.ndarray] = None
    forward_calls: int = 0
    backward_calls: int = 0
    costate_updates: int = 0
    # derivatives at grid points, used for midpoint interpolation
    _xdot: Optional[np.ndarray] = field(default=None, repr=False)
    _ldot: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def initial(cls, x0, nb: NeighborSnapshot, w: CostWeights) -> "AgentSolverState":
        # T(0) = 0 so phi_x(x0) makes P(0) = 0 exactly
        lam0 = terminal_gradient(x0, nb, w)
        st = cls(lam=lam0)
        st.x_star = np.asarray(x0, dtype=float)[None, :].copy()
        st.lam_star = lam0[None, :].copy()
        st.u_star = -(st.lam_star @ w.R_inv.T)
        return st

    def counters(self):
        return (self.forward_calls, self.backward_calls, self.costate_updates)


class _Problem:
    """Unvalidated closures over one agent's data for the inner loops."""

    __slots__ = ("f", "jac", "hess", "Q", "R_inv", "d", "s", "Cq")

    def __init__(self, nb: NeighborSnapshot, w: CostWeights, model: DynamicsModel):
        self.f = model._f
        self.jac = model._jac
        self.hess = (lambda x, lam: np.zeros((w.n, w.n))) if model.gauss_newton else model._hess
        self.Q = w.Q
        self.R_inv = w.R_inv
        self.d = nb.weight_sum
        self.s = nb.weighted_mean_sum if len(nb) else np.zeros(w.n)
        self.Cq = self.d * w.Q

    def H_x(self, x, lam):
        return self.Q @ (self.d * x - self.s) + self.jac(x).T @ lam

    def rhs(self, x, lam):
        return self.f(x) - self.R_inv @ lam, -self.H_x(x, lam)

    def ABC(self, x, lam):
        A = self.jac(x)
        C = self.Cq + self.hess(x, lam)
        return A, C


def forward_horizon(state: AgentSolverState, x_now, nb: NeighborSnapshot, w: CostWeights,
                    model: DynamicsModel, T: float, tau_step: float = 0.005,
                    scheme: str = "rk4") -> AgentSolverState:
    """Integrate ``x* = F(x*) - R^-1 lam*``, ``lam*' = -H_x`` from ``(x_now, Lam)``."""
    pb = _Problem(nb, w, model)
    grid = horizon_grid(T, tau_step)
    N = len(grid) - 1
    n = w.n
    xs = np.empty((N + 1, n))
    ls = np.empty((N + 1, n))
    xd = np.empty((N + 1, n))
    ld = np.empty((N + 1, n))
    x = np.array(x_now, dtype=float)
    lam = np.array(state.lam, dtype=float)
    xs[0], ls[0] = x, lam
    xd[0], ld[0] = pb.rhs(x, lam)
    rk4 = scheme == "rk4"
    for k in range(N):
        h = grid[k + 1] - grid[k]
        k1x, k1l = xd[k], ld[k]
        if rk4:
            k2x, k2l = pb.rhs(x + 0.5 * h * k1x, lam + 0.5 * h * k1l)
            k3x, k3l = pb.rhs(x + 0.5 * h * k2x, lam + 0.5 * h * k2l)
            k4x, k4l = pb.rhs(x + h * k3x, lam + h * k3l)
            x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            lam = lam + (h / 6.0) * (k1l + 2.0 * k2l + 2.0 * k3l + k4l)
        else:
            x = x + h * k1x
            lam = lam + h * k1l
        if not (np.isfinite(x).all() and np.isfinite(lam).all()):
            raise SolverDivergence("non-finite forward solution", tau=float(grid[k + 1]))
        xs[k + 1], ls[k + 1] = x, lam
        xd[k + 1], ld[k + 1] = pb.rhs(x, lam)
    state.grid = grid
    state.x_star = xs
    state.lam_star = ls
    state._xdot = xd
    state._ldot = ld
    state.u_star = -(ls @ w.R_inv.T)
    state.forward_calls += 1
    return state


def terminal_sweep_conditions(state: AgentSolverState, nb: NeighborSnapshot, w: CostWeights,
                              model: DynamicsModel, dTdt: float, P, As):
    """``S(T) = phi_xx`` and ``c(T) = (H_x + phi_xx f)(1 + dT/dt) + As P``.

    ``f`` is evaluated with ``u*(T) = -R^-1 lam*(T)``.
    """
    pb = _Problem(nb, w, model)
    xT = state.x_star[-1]
    lT = state.lam_star[-1]
    S_T = nb.weight_sum * w.QN
    f = pb.f(xT) - w.R_inv @ lT
    c_T = (pb.H_x(xT, lT) + S_T @ f) * (1.0 + dTdt) + np.asarray(As) @ np.asarray(P, dtype=float)
    return S_T, c_T


def _hermite_mid(y0, y1, d0, d1, h):
    return 0.5 * (y0 + y1) + (h / 8.0) * (d0 - d1)


def backward_sweep(state: AgentSolverState, nb: NeighborSnapshot, w: CostWeights,
                   model: DynamicsModel, S_T, c_T, scheme: str = "rk4") -> AgentSolverState:
    """Integrate ``S' = -A'S - SA + SBS - C`` and ``c' = -(A' - SB) c`` from T to 0."""
    pb = _Problem(nb, w, model)
    grid = state.grid
    N = len(grid) - 1
    n = w.n
    B = w.R_inv
    S_all = np.empty((N + 1, n, n))
    c_all = np.empty((N + 1, n))
    S = np.array(S_T, dtype=float)
    c = np.array(c_T, dtype=float)
    S_all[N], c_all[N] = S, c
    xs, ls = state.x_star, state.lam_star
    rk4 = scheme == "rk4"

    def rhs(S, c, A, C):
        AtS = A.T @ S
        SB = S @ B
        dS = -AtS - AtS.T + SB @ S - C
        dc = -(A.T @ c) + SB @ c
        return dS, dc

    A1, C1 = pb.ABC(xs[N], ls[N])
    for k in range(N, 0, -1):
        h = grid[k] - grid[k - 1]
        A0, C0 = pb.ABC(xs[k - 1], ls[k - 1])
        if rk4:
            xm = _hermite_mid(xs[k - 1], xs[k], state._xdot[k - 1], state._xdot[k], h)
            lm = _hermite_mid(ls[k - 1], ls[k], state._ldot[k - 1], state._ldot[k], h)
            Am, Cm = pb.ABC(xm, lm)
            # integrate in the reversed variable s = T - tau
            k1S, k1c = rhs(S, c, A1, C1)
            k2S, k2c = rhs(S - 0.5 * h * k1S, c - 0.5 * h * k1c, Am, Cm)
            k3S, k3c = rhs(S - 0.5 * h * k2S, c - 0.5 * h * k2c, Am, Cm)
            k4S, k4c = rhs(S - h * k3S, c - h * k3c, A0, C0)
            S = S - (h / 6.0) * (k1S + 2.0 * k2S + 2.0 * k3S + k4S)
            c = c - (h / 6.0) * (k1c + 2.0 * k2c + 2.0 * k3c + k4c)
        else:
            dS, dc = rhs(S, c, A1, C1)
            S = S - h * dS
            c = c - h * dc
        S = 0.5 * (S + S.T)
        if not (np.isfinite(S).all() and np.isfinite(c).all()):
            raise SolverDivergence("non-finite sweep matrices (Riccati blow-up)", tau=float(grid[k - 1]))
        S_all[k - 1], c_all[k - 1] = S, c
        A1, C1 = A0, C0
    state.S = S_all
    state.c = c_all
    state.backward_calls += 1
    return state


def costate_rate(state: AgentSolverState, x_now, u_now, nb: NeighborSnapshot, w: CostWeights,
                 model: DynamicsModel) -> np.ndarray:
    """``dLam/dt = -H_x(x_now, Lam) + c(0)``. ``u_now`` does not enter H_x."""
    pb = _Problem(nb, w, model)
    return -pb.H_x(np.asarray(x_now, dtype=float), state.lam) + state.c[0]


def advance(state: AgentSolverState, x_now, nb: NeighborSnapshot, w: CostWeights,
            model: DynamicsModel, t: float, cfg: IntegratorConfig, hs: HorizonSchedule):
    """Run one sampling instant and return ``(u(t + ts), state)``.

    Exactly one forward pass, one backward pass and one costate step.
    """
    x_now = np.asarray(x_now, dtype=float)
    T = hs.T(t)
    forward_horizon(state, x_now, nb, w, model, T, cfg.tau_step, cfg.scheme)
    xT, lT = state.x_star[-1], state.lam_star[-1]
    P = lT - w.QN @ (nb.weight_sum * xT - (nb.weighted_mean_sum if len(nb) else 0.0))
    state.P = P
    S_T, c_T = terminal_sweep_conditions(state, nb, w, model, hs.dTdt(t), P, cfg.As)
    backward_sweep(state, nb, w, model, S_T, c_T, cfg.scheme)
    u_now = -w.R_inv @ state.lam
    rate = costate_rate(state, x_now, u_now, nb, w, model)
    state.lam_rate = rate
    state.lam = state.lam + cfg.ts * rate
    state.costate_updates += 1
    if not np.all(np.isfinite(state.lam)):
        raise SolverDivergence("non-finite costate", tau=0.0)
    return -w.R_inv @ state.lam, state
