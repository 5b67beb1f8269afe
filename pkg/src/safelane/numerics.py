"""Self-contained dense numerical kernels.

Everything here is deterministic: fixed pivoting rules, fixed iteration
orders, no randomness. Problem sizes are tiny (QPs with tens of variables,
LPs with a few hundred rows), so clarity and reproducibility win over
asymptotic speed.
"""

from dataclasses import dataclass

import numpy as np


class NumericsError(RuntimeError):
    """Raised when an iterative kernel fails to converge or diverges."""


# ---------------------------------------------------------------------------
# Linear programming: dense two-phase simplex with Bland's rule.
# ---------------------------------------------------------------------------

@dataclass
class LpSolution:
    status: str              # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    value: float | None
    dual: np.ndarray | None  # multipliers of the <= rows (>= 0 at optimum)


def solve_lp(c, F, g, maximize=True):
    """Solve max (or min) c'x subject to F x <= g with x free.

    Dense two-phase simplex on the slack form [F, -F, I] v = g, v >= 0,
    with Bland's rule (lowest eligible index enters, lowest-index basic
    variable leaves among minimal ratios), which excludes cycling.

    Returns an LpSolution. ``dual`` holds the row multipliers y >= 0 with
    F'y = c at an optimum or, for an infeasible problem, a Farkas
    certificate y >= 0 with F'y = 0 and g'y < 0.
    """
    c = np.asarray(c, dtype=float).ravel()
    F = np.atleast_2d(np.asarray(F, dtype=float))
    g = np.asarray(g, dtype=float).ravel()
    if F.size == 0:
        F = F.reshape(0, c.size)
    m, n = F.shape
    if c.size != n or g.size != m:
        raise ValueError("inconsistent LP dimensions")
    if m == 0:
        if np.any(np.abs(c) > 0):
            return LpSolution("unbounded", None, None, None)
        return LpSolution("optimal", np.zeros(n), 0.0, np.zeros(0))

    obj = -c if maximize else c        # internal convention: minimize
    # Equality form: [F, -F, I] [xp; xn; s] = g, all vars >= 0; rows with
    # a negative right-hand side are negated so phase 1 can start from an
    # artificial identity basis.
    A = np.hstack([F, -F, np.eye(m)])
    b = g.copy()
    cost = np.concatenate([obj, -obj, np.zeros(m)])
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0
    ncols = A.shape[1]

    A1 = np.hstack([A, np.eye(m)])
    cost1 = np.concatenate([np.zeros(ncols), np.ones(m)])
    basis = list(range(ncols, ncols + m))
    tab, basis, status = _simplex(A1, b, cost1, basis)
    if status != "optimal":        # phase 1 is bounded below by zero
        raise NumericsError("phase-1 simplex failed: %s" % status)
    phase1_value = float(cost1[basis] @ tab[:, -1])
    if phase1_value > 1e-8:
        y = _row_duals(A1, cost1, basis, flip, rows=list(range(m)), nrows=m)
        return LpSolution("infeasible", None, None, y)

    # Drive remaining artificials (basic at zero) out of the basis; a row
    # where that is impossible is a redundant equality and is dropped.
    for i, bi in enumerate(basis):
        if bi >= ncols:
            piv = np.nonzero(np.abs(tab[i, :ncols]) > 1e-9)[0]
            if piv.size:
                _pivot(tab, i, piv[0])
                basis[i] = piv[0]
    keep = [i for i, bi in enumerate(basis) if bi < ncols]
    rows = keep[:]                 # surviving original row indices
    tab = tab[keep][:, list(range(ncols)) + [A1.shape[1]]]
    basis = [basis[i] for i in keep]

    tab, basis, status = _simplex(tab[:, :ncols], tab[:, -1], cost, basis)
    if status == "unbounded":
        return LpSolution("unbounded", None, None, None)
    xfull = np.zeros(ncols)
    xfull[basis] = tab[:, -1]
    x = xfull[:n] - xfull[n:2 * n]
    value = float(c @ x)
    y = _row_duals(A, cost, basis, flip, rows=rows, nrows=m)
    return LpSolution("optimal", x, value, y)


def _simplex(A, b, cost, basis):
    """Bland-rule simplex on min cost'v s.t. A v = b, v >= 0.

    ``basis`` must index columns forming an invertible submatrix with the
    basic solution b already nonnegative. Returns the final tableau
    [reduced A | basic values], the basis, and a status string.
    """
    m, ncols = A.shape
    tab = np.hstack([np.asarray(A, dtype=float),
                     np.asarray(b, dtype=float).reshape(-1, 1)])
    for i, bi in enumerate(basis):
        if abs(tab[i, bi] - 1.0) > 1e-14 or np.any(np.abs(np.delete(tab[:, bi], i)) > 1e-14):
            _pivot(tab, i, bi)
    max_iter = 200 * (ncols + m) + 200
    for _ in range(max_iter):
        z = cost[basis] @ tab[:, :-1]
        reduced = cost - z
        reduced[basis] = 0.0
        entering = -1
        for j in range(ncols):                      # Bland: lowest index
            if reduced[j] < -1e-10:
                entering = j
                break
        if entering < 0:
            return tab, basis, "optimal"
        col = tab[:, entering]
        ratios = np.full(m, np.inf)
        pos = col > 1e-10
        ratios[pos] = tab[pos, -1] / col[pos]
        best = np.min(ratios)
        if not np.isfinite(best):
            return tab, basis, "unbounded"
        rows = np.nonzero(ratios <= best + 1e-12)[0]
        leave = rows[int(np.argmin([basis[r] for r in rows]))]
        _pivot(tab, leave, entering)
        basis[leave] = entering
    raise NumericsError("simplex iteration limit exceeded")


def _pivot(tab, row, col):
    tab[row] /= tab[row, col]
    for i in range(tab.shape[0]):
        if i != row and tab[i, col] != 0.0:
            tab[i] -= tab[i, col] * tab[row]


def _row_duals(A, cost, basis, flip, rows, nrows):
    """Recover <=-row multipliers y from a final basis.

    Solves B'w = c_B on the surviving rows, maps the internal minimize
    convention and the phase-0 row negations back to the original
    orientation, and pads dropped (redundant) rows with zero.
    """
    B = A[np.ix_(rows, basis)]
    try:
        w = np.linalg.solve(B.T, cost[list(basis)])
    except np.linalg.LinAlgError:
        return None
    y = np.zeros(nrows)
    for w_i, row in zip(w, rows):
        y[row] = w_i if flip[row] else -w_i
    return y


# ---------------------------------------------------------------------------
# Quadratic programming: primal active set with an LP phase 1.
# ---------------------------------------------------------------------------

@dataclass
class QpSolution:
    status: str                     # "optimal" | "infeasible"
    z: np.ndarray | None
    active: tuple = ()
    multipliers: np.ndarray | None = None   # one per row, 0 when inactive
    iterations: int = 0
    certificate: np.ndarray | None = None   # Farkas row combination
    kkt_stationarity: float = np.nan
    kkt_feasibility: float = np.nan
    kkt_complementarity: float = np.nan


def solve_qp(H, q, F=None, g=None):
    """Solve min 0.5 z'H z + q'z subject to F z <= g.

    Primal active-set method for (regularized) positive-definite H: a
    feasible start comes from clipping when every row is a simple bound,
    otherwise from an LP phase 1 whose dual doubles as the Farkas
    certificate on infeasible input. Equality subproblems are then solved
    on the working set, adding the lowest-index blocking row on partial
    steps and dropping the most negative multiplier otherwise. All
    tie-breaks are lowest-index, so repeated calls are bit-identical.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    n = H.shape[0]
    q = np.asarray(q, dtype=float).ravel()
    if F is None or g is None or np.size(g) == 0:
        F = np.zeros((0, n))
        g = np.zeros(0)
    F = np.atleast_2d(np.asarray(F, dtype=float))
    g = np.asarray(g, dtype=float).ravel()
    m = F.shape[0]

    H = 0.5 * (H + H.T)
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        H = H + 1e-9 * np.eye(n)     # PSD input: nudge to PD

    feas_tol = 1e-9
    z = np.linalg.solve(H, -q)
    if m == 0 or np.all(F @ z <= g + feas_tol):
        return _finish_qp(H, q, F, g, z, [], 0)

    z0 = _box_feasible_start(F, g, z)
    if z0 is None:
        ct = np.concatenate([np.zeros(n), np.ones(m)])
        F1 = np.block([[F, -np.eye(m)], [np.zeros((m, n)), -np.eye(m)]])
        g1 = np.concatenate([g, np.zeros(m)])
        lp = solve_lp(ct, F1, g1, maximize=False)
        if lp.status != "optimal" or lp.value > 1e-7:
            cert = lp.dual[:m] if lp.dual is not None else None
            return QpSolution("infeasible", None, certificate=cert)
        z0 = lp.x[:n]
        overshoot = np.max(F @ z0 - g)
        if overshoot > feas_tol:
            return QpSolution("infeasible", None, certificate=None)
    z = z0

    work = []
    max_iter = 50 * (n + m)
    for it in range(1, max_iter + 1):
        p, lam_w = _eqp_step(H, q, F, z, work)
        if np.linalg.norm(p, np.inf) <= 1e-11 * max(
                1.0, np.linalg.norm(z, np.inf)):
            drop = _negative_multiplier(lam_w)
            if drop is None:
                return _finish_qp(H, q, F, g, z, list(zip(work, lam_w)), it)
            work.pop(drop)
            continue
        alpha, blocking = 1.0, -1
        for i in range(m):                      # lowest-index tie-break
            if i in work:
                continue
            fp = F[i] @ p
            if fp > 1e-12:
                a = (g[i] - F[i] @ z) / fp
                if a < alpha - 1e-12:
                    alpha, blocking = max(a, 0.0), i
        z = z + alpha * p
        if blocking >= 0:
            work.append(blocking)
            work.sort()
        elif alpha == 1.0:
            # the full Newton step solves the working-set subproblem and
            # its multipliers carry over to the new point, so optimality
            # is decided here; re-solving instead can stall on roundoff
            # steps when the KKT system is ill-conditioned
            drop = _negative_multiplier(lam_w)
            if drop is None:
                return _finish_qp(H, q, F, g, z, list(zip(work, lam_w)), it)
            work.pop(drop)
    raise NumericsError("active-set QP iteration limit exceeded")


def _negative_multiplier(lam_w):
    """Index to drop: lowest clearly-negative multiplier, or None.

    Lowest-index (Bland-style) keeps cycling at degenerate vertices out;
    the tolerance scales with the multipliers so large-weight problems do
    not misread roundoff as negativity.
    """
    if len(lam_w) == 0:
        return None
    tol = 1e-9 * max(1.0, float(np.linalg.norm(lam_w, np.inf)))
    for j, lam in enumerate(lam_w):
        if lam < -tol:
            return j
    return None


def _box_feasible_start(F, g, z):
    """Feasible point by clipping when every row is a signed unit bound."""
    n = F.shape[1]
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    for row, gi in zip(F, g):
        j = np.nonzero(row)[0]
        if j.size != 1 or abs(abs(row[j[0]]) - 1.0) > 1e-12:
            return None
        j = j[0]
        if row[j] > 0:
            hi[j] = min(hi[j], gi)
        else:
            lo[j] = max(lo[j], -gi)
    if np.any(lo > hi):
        return None                  # contradictory bounds: let phase 1 rule
    return np.clip(z, lo, hi)


def _eqp_step(H, q, F, z, work):
    """Newton step and multipliers for the working-set equality QP."""
    n = H.shape[0]
    k = len(work)
    if k == 0:
        return np.linalg.solve(H, -(H @ z + q)), np.zeros(0)
    Fw = F[list(work)]
    K = np.block([[H, Fw.T], [Fw, np.zeros((k, k))]])
    rhs = np.concatenate([-(H @ z + q), np.zeros(k)])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:n], sol[n:]


def _finish_qp(H, q, F, g, z, work_lams, iterations):
    m = F.shape[0]
    lam = np.zeros(m)
    for i, li in work_lams:
        lam[i] = max(li, 0.0)
    r_stat = np.linalg.norm(H @ z + q + F.T @ lam, np.inf)
    slack = F @ z - g if m else np.zeros(0)
    r_feas = float(np.max(slack)) if m else 0.0
    r_comp = float(np.max(np.abs(lam * slack))) if m else 0.0
    return QpSolution(
        status="optimal",
        z=z,
        active=tuple(sorted(i for i, _ in work_lams)),
        multipliers=lam,
        iterations=iterations,
        kkt_stationarity=float(r_stat),
        kkt_feasibility=max(r_feas, 0.0),
        kkt_complementarity=r_comp,
    )


# ---------------------------------------------------------------------------
# Matrix exponential, discrete Riccati, RK4.
# ---------------------------------------------------------------------------

def matrix_exponential(M, tol=1e-12):
    """exp(M) by scaling and squaring with a truncated Taylor series.

    The argument is scaled by 2^-s so its infinity norm is below 0.5, the
    series is summed until the term norm falls well below ``tol``, and the
    result is squared s times.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    norm = np.linalg.norm(M, np.inf)
    s = max(0, int(np.ceil(np.log2(norm / 0.5)))) if norm > 0.5 else 0
    T = M / (2.0 ** s)
    E = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, 60):
        term = term @ T / k
        E = E + term
        if np.linalg.norm(term, np.inf) < tol * 1e-4:
            break
    else:
        raise NumericsError("matrix exponential series did not converge")
    for _ in range(s):
        E = E @ E
    return E


def solve_dare(A, B, Q, R, tol=1e-12, max_iter=200):
    """Solve the discrete algebraic Riccati equation by doubling iteration.

    Structure-preserving doubling: with A_0 = A, G_0 = B R^-1 B',
    H_0 = Q, iterate

        M       = (I + G_k H_k)^-1
        A_{k+1} = A_k M A_k
        G_{k+1} = G_k + A_k M G_k A_k'
        H_{k+1} = H_k + A_k' H_k M A_k

    H_k converges quadratically to the stabilizing solution. Divergence
    (unstabilizable input) raises NumericsError, as does a final residual
    above 1e-10 relative.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    Ak = A.copy()
    G = B @ np.linalg.solve(R, B.T)
    H = Q.copy()
    for _ in range(max_iter):
        M = np.linalg.inv(np.eye(n) + G @ H)
        An = Ak @ M @ Ak
        Gn = G + Ak @ M @ G @ Ak.T
        Hn = H + Ak.T @ H @ M @ Ak
        Hn = 0.5 * (Hn + Hn.T)
        delta = np.linalg.norm(Hn - H, np.inf)
        scale = max(1.0, np.linalg.norm(Hn, np.inf))
        if not np.isfinite(delta) or scale > 1e140:
            raise NumericsError("Riccati doubling iteration diverged")
        Ak, G, H = An, 0.5 * (Gn + Gn.T), Hn
        if delta <= tol * scale:
            break
    else:
        raise NumericsError("Riccati doubling iteration did not converge")
    # Newton (Kleinman) polish: one Stein solve per step wipes out the
    # doubling tail and lands at machine-level residual.
    for _ in range(3):
        K = np.linalg.solve(R + B.T @ H @ B, B.T @ H @ A)
        H = _stein_doubling(A - B @ K, Q + K.T @ R @ K)
    res = dare_residual(A, B, Q, R, H)
    if res > 1e-10 * max(1.0, np.linalg.norm(H, np.inf)):
        raise NumericsError("Riccati solution residual too large: %g" % res)
    return H


def _stein_doubling(A, Q, max_iter=100):
    """Solve P = Q + A'PA for stable A by doubling the matrix power."""
    H = Q.copy()
    Ak = A.copy()
    for _ in range(max_iter):
        Hn = H + Ak.T @ H @ Ak
        Hn = 0.5 * (Hn + Hn.T)
        if np.linalg.norm(Hn - H, np.inf) <= 1e-15 * max(1.0, np.linalg.norm(Hn, np.inf)):
            return Hn
        H = Hn
        Ak = Ak @ Ak
        if not np.isfinite(H).all():
            raise NumericsError("Stein doubling diverged")
    raise NumericsError("Stein doubling did not converge")


def dare_residual(A, B, Q, R, P):
    """Infinity norm of the DARE residual at P."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    BtP = B.T @ P
    gain = np.linalg.solve(np.atleast_2d(R) + BtP @ B, BtP @ A)
    return float(np.linalg.norm(np.atleast_2d(Q) + A.T @ P @ (A - B @ gain) - P,
                                np.inf))


def lqr_gain(A, B, Q, R):
    """Riccati solution and the associated state-feedback gain K."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    P = solve_dare(A, B, Q, R)
    K = np.linalg.solve(np.atleast_2d(R) + B.T @ P @ B, B.T @ P @ A)
    return P, K


def rk4_step(f, t, x, dt):
    """One classical Runge-Kutta step for x' = f(t, x)."""
    k1 = f(t, x)
    k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = f(t + dt, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# ---------------------------------------------------------------------------
# Polytopes in halfspace form.
# ---------------------------------------------------------------------------

@dataclass
class Polytope:
    """{x : F x <= g} in dense halfspace representation."""
    F: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        self.F = np.atleast_2d(np.asarray(self.F, dtype=float))
        self.g = np.asarray(self.g, dtype=float).ravel()
        if self.F.shape[0] != self.g.size:
            raise ValueError("row count mismatch between F and g")

    @property
    def dim(self):
        return self.F.shape[1]

    @property
    def nrows(self):
        return self.F.shape[0]

    def contains(self, x, tol=1e-9):
        return bool(np.all(self.F @ np.asarray(x, dtype=float) <= self.g + tol))

    def support(self, f):
        """max f'x over the polytope; returns (value, status)."""
        sol = solve_lp(f, self.F, self.g, maximize=True)
        if sol.status == "optimal":
            return sol.value, "optimal"
        return (np.inf, sol.status) if sol.status == "unbounded" \
            else (-np.inf, sol.status)

    def is_empty(self):
        sol = solve_lp(np.zeros(self.dim), self.F, self.g, maximize=True)
        return sol.status == "infeasible"

    def intersect(self, other):
        return Polytope(np.vstack([self.F, other.F]),
                        np.concatenate([self.g, other.g]))


def polytope_subset(P, Q, tol=1e-9):
    """True when P is contained in Q (certified row by row via LPs)."""
    if P.is_empty():
        return True
    for f, gamma in zip(Q.F, Q.g):
        value, status = P.support(f)
        if status == "unbounded" or value > gamma + tol * max(1.0, abs(gamma)):
            return False
    return True


def polytope_reduce(P, tol=1e-9):
    """Drop redundant rows; the result is certified irredundant by LPs."""
    F, g = P.F.copy(), P.g.copy()
    keep = list(range(F.shape[0]))
    # Cheap pass: vacuous rows, duplicates, dominated parallel rows.
    seen = {}
    for i in list(keep):
        fi = F[i]
        norm = np.linalg.norm(fi)
        if norm < 1e-14:
            if g[i] >= -tol:
                keep.remove(i)
            continue
        key = tuple(np.round(fi / norm, 12))
        gi = g[i] / norm
        if key in seen:
            j, gj = seen[key]
            if gi >= gj - 1e-15:
                keep.remove(i)
                continue
            keep.remove(j)
        seen[key] = (i, gi)
    # LP pass: row i is redundant iff the others cannot be pushed past g_i.
    i = 0
    while i < len(keep):
        idx = keep[i]
        others = [j for j in keep if j != idx]
        if not others:
            break
        sol = solve_lp(F[idx], F[others], g[others], maximize=True)
        if sol.status == "optimal" and sol.value <= g[idx] + tol * max(
                1.0, abs(g[idx])):
            keep.pop(i)
        else:
            i += 1
    return Polytope(F[keep], g[keep])


def polytope_robust_pre(P, A, w_halfwidth):
    """Robust preimage {e : A e - w in P for every w in the box W}.

    W is the axis-aligned box |w_j| <= w_halfwidth[j]; the worst case per
    row is the box support function, a closed-form absolute sum.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    r = np.asarray(w_halfwidth, dtype=float).ravel()
    tighten = np.abs(P.F) @ r
    return Polytope(P.F @ A, P.g - tighten)
