"""Discrete-time tracking MPC around the steady-state cornering input.

The plant is the ZOH-discretized lateral error model. The tracker works in
deviation coordinates: the applied steering is the steady-state input for
the local reference yaw rate plus a correction move v, and the predicted
error obeys

    e_{i+1} = A_d e_i + B_d v_i - w,

where w is the one-step drift of the steady-state pair along the road
(frozen across the horizon). Input headroom is reserved for the
feedforward by the admissible move set; per-step bounds use the previewed
reference. Terminal handling is either a scaled DARE cost or a hard
membership constraint in the maximal constraint-admissible invariant set,
computed by fixed-point iteration of robust pre-images.
"""

from dataclasses import dataclass, field

import numpy as np

from .numerics import (NumericsError, Polytope, lqr_gain, polytope_reduce,
                       polytope_subset, solve_qp)
from .vehicle import discretize_zoh, lateral_matrices, steady_state_gains

TERMINAL_MODES = ("scaled_cost", "hard_set")


class MpcError(RuntimeError):
    """Tracker configuration or solve invariant failure."""


@dataclass(frozen=True)
class DiscreteModel:
    """ZOH discretization plus the steady-state gains of the same plant."""
    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    dt: float
    x_gain: np.ndarray   # steady-state error state per unit yaw rate
    u_gain: float        # steady-state steering per unit yaw rate

    @classmethod
    def from_vehicle(cls, params, dt):
        A, B, G = lateral_matrices(params)
        Ad, Bd, Gd = discretize_zoh(A, B, G, dt)
        u_gain, x_gain = steady_state_gains(params)
        return cls(Ad, Bd, Gd, dt, x_gain, u_gain)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def disturbance_direction(self):
        """b = A_d x_gain + B_d u_gain + G_d (one-step steady-state drift
        per unit yaw-rate change); computed, not assumed, so the fixed
        point identity b = x_gain stays a testable fact."""
        return self.A @ self.x_gain + self.B * self.u_gain + self.G


def steady_state_disturbance_w(model, psi_dot_now, psi_dot_next):
    """w = (next - now) * b: the error kick from the moving equilibrium."""
    return (psi_dot_next - psi_dot_now) * model.disturbance_direction


def admissible_move_set(u_gain, u_max, c_psi):
    """Correction-move interval after reserving feedforward headroom.

    [-(u_max - c_psi*u_gain), +(u_max - c_psi*u_gain)] as a 1-D polytope;
    empty reserves are a config error (the yaw-rate bound must satisfy
    c_psi < u_max / u_gain).
    """
    margin = u_max - c_psi * abs(u_gain)
    if margin <= 0.0:
        raise MpcError(
            "admissible move set empty: yaw-rate bound c_psi "
            f"{c_psi} must stay below u_max/u_gain "
            f"{u_max / abs(u_gain):.6g}")
    return Polytope(np.array([[1.0], [-1.0]]),
                    np.array([margin, margin]))


def disturbance_box(direction, c_dpsi):
    """Axis box |w_j| <= c_dpsi * |b_j| around the drift direction."""
    n = direction.shape[0]
    hw = c_dpsi * np.abs(direction)
    F = np.vstack([np.eye(n), -np.eye(n)])
    return Polytope(F, np.concatenate([hw, hw]))


@dataclass(frozen=True)
class MpcConfig:
    horizon: int
    Q: np.ndarray
    R: float
    P: np.ndarray
    beta: float
    K: np.ndarray
    dt: float
    u_max: float
    c_psi: float
    c_dpsi: float
    terminal_mode: str = "scaled_cost"

    def __post_init__(self):
        if self.horizon < 1:
            raise MpcError("horizon must be at least 1")
        if self.terminal_mode not in TERMINAL_MODES:
            raise MpcError(f"unknown terminal mode {self.terminal_mode!r}")
        if self.beta < 1.0:
            raise MpcError("terminal scale beta must be >= 1")
        if self.R <= 0.0 or self.u_max <= 0.0:
            raise MpcError("R and u_max must be positive")
        for name in ("Q", "P"):
            M = getattr(self, name)
            try:
                np.linalg.cholesky(np.atleast_2d(M))
            except np.linalg.LinAlgError:
                raise MpcError(f"{name} must be positive definite")
        if self.c_psi < 0.0 or self.c_dpsi < 0.0:
            raise MpcError("reference bounds must be nonnegative")


def terminal_ingredients(model, Q, R):
    """Riccati terminal weight and LQR gain for the discrete plant."""
    B = model.B.reshape(model.n, 1)
    try:
        P, K = lqr_gain(model.A, B, np.atleast_2d(Q),
                        np.atleast_2d(np.asarray(R, dtype=float)))
    except NumericsError as err:
        raise MpcError(f"terminal Riccati solve failed: {err}") from err
    rho = max(abs(np.linalg.eigvals(model.A - B @ K)))
    if rho >= 1.0:
        raise MpcError(f"closed loop not Schur stable (radius {rho:.6g})")
    return P, K


@dataclass
class MicaResult:
    terminal_set: Polytope
    converged: bool
    iterations: int


def _robust_pre(P, A_cl, W):
    """{e : A_cl e - w in P for all w in W} via support values of W."""
    rhs = np.empty(P.nrows)
    for i in range(P.nrows):
        # need F_i (A_cl e) <= g_i + min_w F_i w = g_i - sup_w (-F_i) w
        val, status = W.support(-P.F[i])
        if status != "optimal":
            raise MpcError("disturbance set support failed (unbounded W?)")
        rhs[i] = P.g[i] - val
    return Polytope(P.F @ A_cl, rhs)


def mica_terminal_set(model, K, v_bar, w_set, k_max=200):
    """Maximal constraint-admissible invariant set of the LQR loop.

    Fixed point of Omega_{k+1} = Omega_k ∩ pre(Omega_k) from
    Omega_0 = {e : K e in v_bar}, with the robust pre-image under
    e+ = (A_d - B_d K) e - w, w in w_set. Convergence is certified by an
    LP subset test; hitting k_max leaves converged False. The result may
    be unbounded (held in H-representation) and may be empty — emptiness
    is the caller's admissibility check, not an error here.
    """
    K = np.atleast_2d(K)
    A_cl = model.A - np.outer(model.B, K.ravel())
    omega = polytope_reduce(Polytope(v_bar.F @ K, v_bar.g.copy()))
    for k in range(1, k_max + 1):
        pre = _robust_pre(omega, A_cl, w_set)
        if polytope_subset(omega, pre):
            return MicaResult(omega, True, k)
        omega = polytope_reduce(omega.intersect(pre))
        if omega.is_empty():
            return MicaResult(omega, True, k)
    return MicaResult(omega, False, k_max)


@dataclass
class MpcStepResult:
    move: float              # first correction v_0
    u: float                 # applied steering u_s + v_0
    cost: float
    predicted_errors: np.ndarray   # N x n, e_1 .. e_N
    moves: np.ndarray
    feasible: bool


class MpcTracker:
    """Condensed-QP tracker with precomputed prediction operators."""

    def __init__(self, model, cfg, terminal_set=None):
        if cfg.terminal_mode == "hard_set" and terminal_set is None:
            raise MpcError("hard_set terminal mode needs a terminal set")
        self.model = model
        self.cfg = cfg
        self.terminal_set = terminal_set
        n, N = model.n, cfg.horizon
        A, B = model.A, model.B

        powers = [np.eye(n)]
        for _ in range(N):
            powers.append(A @ powers[-1])
        self.Lambda = np.vstack([powers[i] for i in range(1, N + 1)])
        Gamma = np.zeros((N * n, N))
        for i in range(1, N + 1):
            for j in range(i):
                Gamma[(i - 1) * n:i * n, j] = powers[i - 1 - j] @ B
        self.Gamma = Gamma
        # disturbance stacking: e_i picks up -(sum_{j<i} A^j) w
        Om = np.zeros((N * n, n))
        acc = np.zeros((n, n))
        for i in range(1, N + 1):
            acc = acc + powers[i - 1]
            Om[(i - 1) * n:i * n] = -acc
        self.Omega_w = Om

        Qbar = np.zeros((N * n, N * n))
        for i in range(1, N):
            Qbar[(i - 1) * n:i * n, (i - 1) * n:i * n] = np.atleast_2d(cfg.Q)
        Qbar[(N - 1) * n:, (N - 1) * n:] = cfg.beta * np.atleast_2d(cfg.P)
        self.Qbar = Qbar
        self.H = 2.0 * (Gamma.T @ Qbar @ Gamma + cfg.R * np.eye(N))
        self.H = 0.5 * (self.H + self.H.T)
        self._GtQ = Gamma.T @ Qbar
        self._prev_moves = None
        self.infeasible_count = 0

    def step(self, e0, psi_dot_preview):
        model, cfg = self.model, self.cfg
        n, N = model.n, cfg.horizon
        e0 = np.asarray(e0, dtype=float).ravel()
        preview = np.asarray(psi_dot_preview, dtype=float).ravel()
        if preview.size < N:
            raise MpcError(f"preview must cover the horizon ({N} steps)")
        if preview.size >= 2:
            w = steady_state_disturbance_w(model, preview[0], preview[1])
        else:
            w = np.zeros(n)

        free = self.Lambda @ e0 + self.Omega_w @ w
        q = 2.0 * (self._GtQ @ free)
        const = float(free @ self.Qbar @ free
                      + e0 @ np.atleast_2d(cfg.Q) @ e0)

        u_s = model.u_gain * preview[:N]
        F = np.vstack([np.eye(N), -np.eye(N)])
        g = np.concatenate([cfg.u_max - u_s, cfg.u_max + u_s])
        if cfg.terminal_mode == "hard_set":
            E = self.terminal_set
            tail = slice((N - 1) * n, N * n)
            F = np.vstack([F, E.F @ self.Gamma[tail]])
            g = np.concatenate([g, E.g - E.F @ free[tail]])

        sol = solve_qp(self.H, q, F, g)
        if sol.status != "optimal":
            self.infeasible_count += 1
            if self._prev_moves is not None:
                moves = np.concatenate([self._prev_moves[1:], [0.0]])
            else:
                moves = np.zeros(N)
            feasible = False
        else:
            moves = sol.z
            feasible = True
            scale_q = max(1.0, float(np.max(np.abs(q))))
            scale_g = max(1.0, float(np.max(np.abs(g))) if g.size else 1.0)
            if (sol.kkt_stationarity > 1e-7 * scale_q
                    or sol.kkt_feasibility > 1e-9 * scale_g
                    or sol.kkt_complementarity > 1e-7 * scale_q):
                raise MpcError(
                    "tracker QP violated its optimality contract: "
                    f"residuals {sol.kkt_stationarity:.3g}/"
                    f"{sol.kkt_feasibility:.3g}/"
                    f"{sol.kkt_complementarity:.3g}")
        self._prev_moves = moves.copy()

        errors = (free + self.Gamma @ moves).reshape(N, n)
        cost = float(0.5 * moves @ self.H @ moves + q @ moves + const)
        move = float(moves[0])
        return MpcStepResult(move=move, u=float(u_s[0] + move), cost=cost,
                             predicted_errors=errors, moves=moves.copy(),
                             feasible=feasible)


def solve_mpc_step(e0, psi_dot_preview, model, cfg, terminal_set=None):
    """One-shot tracker step (no warm cache); see MpcTracker.step."""
    return MpcTracker(model, cfg, terminal_set).step(e0, psi_dot_preview)
