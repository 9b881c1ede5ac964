"""Dense convex QP solver for small scheduling problems.

    minimise    0.5 x'Px + q'x + constant
    subject to  lb <= x <= ub,   l <= A x <= u

Operator splitting (ADMM in the OSQP form) on the stacked constraint matrix
``[I; A]``, followed by an active-set polish that solves the reduced KKT
system to machine precision. Variables with ``lb == ub`` are eliminated
before iterating. Problems here have at most a few hundred variables, so the
KKT matrix is inverted densely once per penalty update.

Degenerate problems with nearly linear costs can leave ADMM drifting along a
flat face for tens of thousands of iterations. Past ``STALL_ITER`` the solver
hands over to a dual active-set method (quadprog), whose linearly
independent working set seeds the same verified polish.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from ._accel import USE_NUMBA, njit

log = logging.getLogger(__name__)

MAX_ITER = 50_000
CHECK_EVERY = 25
SIGMA = 1e-6
RELAX = 1.6
RHO_EQ_FACTOR = 1e3
EPS_FLOOR = 1e-2        # tightest ADMM tolerance, relative to the requested tol
STALL_ITER = 5_000      # ADMM iterations before the active-set fallback


class QpInfeasible(RuntimeError):
    """Primal infeasibility certificate ``dual_ray`` found (rows of [I; A])."""

    def __init__(self, message, dual_ray=None):
        super().__init__(message)
        self.dual_ray = dual_ray


class QpNotConverged(RuntimeError):
    def __init__(self, message, x=None, residual=None):
        super().__init__(message)
        self.x = x
        self.residual = residual


@dataclass
class QpProblem:
    P: np.ndarray
    q: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    A: np.ndarray
    l: np.ndarray
    u: np.ndarray
    constant: float = 0.0
    row_labels: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.P @ x + self.q @ x + self.constant)

    def residual(self, x: np.ndarray) -> float:
        """Largest bound or row violation at ``x``."""
        ax = self.A @ x
        parts = [self.lb - x, x - self.ub, self.l - ax, ax - self.u]
        return float(max(0.0, max((p.max() if p.size else 0.0) for p in parts)))

    def dump(self, stream) -> None:
        """Write a plain-text matrix dump for offline checking."""
        for name in ("P", "q", "lb", "ub", "A", "l", "u"):
            arr = np.atleast_2d(getattr(self, name))
            stream.write(f"# {name} {arr.shape[0]} {arr.shape[1]}\n")
            np.savetxt(stream, arr, fmt="%.17g")
        stream.write(f"# constant\n{self.constant!r}\n")


@dataclass
class QpResult:
    x: np.ndarray
    y_box: np.ndarray
    y_rows: np.ndarray
    objective: float
    iterations: int
    primal_residual: float
    dual_residual: float
    polished: bool


# ---------------------------------------------------------------------------
# ADMM kernels: identical iteration, loop form for numba and array form for numpy

@njit
def _admm_loop_nb(Kinv, P, q, A, l, u, rho, sigma, relax, x, z, y,
                  n_iter, eps_abs, eps_rel, check_every, eps_pinf):
    n = x.shape[0]
    m = z.shape[0]
    rhs = np.empty(n)
    xt = np.empty(n)
    zt = np.empty(m)
    dy = np.empty(m)
    r_prim = np.inf
    r_dual = np.inf
    for k in range(1, n_iter + 1):
        for i in range(n):
            rhs[i] = sigma * x[i] - q[i]
        for j in range(m):
            w = rho[j] * z[j] - y[j]
            for i in range(n):
                rhs[i] += A[j, i] * w
        for i in range(n):
            s = 0.0
            for c in range(n):
                s += Kinv[i, c] * rhs[c]
            xt[i] = s
        for j in range(m):
            s = 0.0
            for i in range(n):
                s += A[j, i] * xt[i]
            zt[j] = s
        for i in range(n):
            x[i] = relax * xt[i] + (1.0 - relax) * x[i]
        for j in range(m):
            zr = relax * zt[j] + (1.0 - relax) * z[j]
            zn = zr + y[j] / rho[j]
            if zn < l[j]:
                zn = l[j]
            elif zn > u[j]:
                zn = u[j]
            dy[j] = rho[j] * (zr - zn)
            y[j] += dy[j]
            z[j] = zn
        if k % check_every == 0 or k == n_iter:
            r_prim = 0.0
            ax_max = 0.0
            z_max = 0.0
            for j in range(m):
                s = 0.0
                for i in range(n):
                    s += A[j, i] * x[i]
                r_prim = max(r_prim, abs(s - z[j]))
                ax_max = max(ax_max, abs(s))
                z_max = max(z_max, abs(z[j]))
            r_dual = 0.0
            px_max = 0.0
            aty_max = 0.0
            q_max = 0.0
            for i in range(n):
                px = 0.0
                for c in range(n):
                    px += P[i, c] * x[c]
                aty = 0.0
                for j in range(m):
                    aty += A[j, i] * y[j]
                r_dual = max(r_dual, abs(px + q[i] + aty))
                px_max = max(px_max, abs(px))
                aty_max = max(aty_max, abs(aty))
                q_max = max(q_max, abs(q[i]))
            if (r_prim <= eps_abs + eps_rel * max(ax_max, z_max)
                    and r_dual <= eps_abs + eps_rel * max(px_max, max(aty_max, q_max))):
                return k, 1, r_prim, r_dual
            dy_norm = 0.0
            for j in range(m):
                dy_norm = max(dy_norm, abs(dy[j]))
            if dy_norm > 1e-12:
                at_dy = 0.0
                for i in range(n):
                    s = 0.0
                    for j in range(m):
                        s += A[j, i] * dy[j]
                    at_dy = max(at_dy, abs(s))
                support = 0.0
                for j in range(m):
                    if dy[j] > 0:
                        support += u[j] * dy[j]
                    else:
                        support += l[j] * dy[j]
                if at_dy <= eps_pinf * dy_norm and support <= -eps_pinf * dy_norm:
                    return k, 2, r_prim, r_dual
    return n_iter, 0, r_prim, r_dual


def _admm_loop_np(Kinv, P, q, A, l, u, rho, sigma, relax, x, z, y,
                  n_iter, eps_abs, eps_rel, check_every, eps_pinf):
    r_prim = r_dual = np.inf
    AT = A.T
    for k in range(1, n_iter + 1):
        xt = Kinv @ (sigma * x - q + AT @ (rho * z - y))
        zt = A @ xt
        x[:] = relax * xt + (1.0 - relax) * x
        zr = relax * zt + (1.0 - relax) * z
        zn = np.clip(zr + y / rho, l, u)
        dy = rho * (zr - zn)
        y += dy
        z[:] = zn
        if k % check_every == 0 or k == n_iter:
            ax = A @ x
            px = P @ x
            aty = AT @ y
            r_prim = float(np.max(np.abs(ax - z)))
            r_dual = float(np.max(np.abs(px + q + aty)))
            if (r_prim <= eps_abs + eps_rel * max(np.max(np.abs(ax)), np.max(np.abs(z)))
                    and r_dual <= eps_abs + eps_rel * max(np.max(np.abs(px)), np.max(np.abs(aty)),
                                                          np.max(np.abs(q)))):
                return k, 1, r_prim, r_dual
            dy_norm = np.max(np.abs(dy))
            if dy_norm > 1e-12:
                support = u @ np.maximum(dy, 0) + l @ np.minimum(dy, 0)
                if (np.max(np.abs(AT @ dy)) <= eps_pinf * dy_norm
                        and support <= -eps_pinf * dy_norm):
                    return k, 2, r_prim, r_dual
    return n_iter, 0, r_prim, r_dual


def admm_loop(*args):
    """Run ADMM iterations in place; returns ``(iters, status, r_prim, r_dual)``.

    status: 1 converged, 2 infeasibility certificate, 0 iteration budget used.
    """
    if USE_NUMBA:
        return _admm_loop_nb(*args)
    return _admm_loop_np(*args)


# ---------------------------------------------------------------------------

def _kkt_inverse(P, A, rho, sigma):
    K = P + sigma * np.eye(P.shape[0]) + A.T @ (rho[:, None] * A)
    c, low = scipy.linalg.cho_factor(K)
    return scipy.linalg.cho_solve((c, low), np.eye(K.shape[0]))


def _polish(P, q, A, l, u, x, z, y, tol, delta=1e-7, refine=12):
    """Solve the KKT system on the active set guessed from (z, y)."""
    lower = (z - l < -y) | (l == u)
    upper = (u - z < y) & ~lower
    active = np.flatnonzero(lower | upper)
    b = np.where(lower, l, u)[active]
    Aa = A[active]
    n, k = P.shape[0], active.size
    K = np.zeros((n + k, n + k))
    K[:n, :n] = P + delta * np.eye(n)
    K[:n, n:] = Aa.T
    K[n:, :n] = Aa
    K[n:, n:] = -delta * np.eye(k)
    try:
        lu = scipy.linalg.lu_factor(K, check_finite=False)
    except (ValueError, np.linalg.LinAlgError):
        return None
    xs, ys = x.copy(), y[active].copy()
    for _ in range(refine):
        sol = scipy.linalg.lu_solve(lu, np.concatenate([-q + delta * xs, b - delta * ys]),
                                    check_finite=False)
        step = np.max(np.abs(sol[:n] - xs))
        xs, ys = sol[:n], sol[n:]
        if step < 1e-13 * max(1.0, np.max(np.abs(xs))):
            break
    if not np.all(np.isfinite(xs)):
        return None
    yf = np.zeros_like(y)
    yf[active] = ys
    ax = A @ xs
    scale = max(1.0, np.max(np.abs(ax)))
    if np.max(np.maximum(l - ax, ax - u)) > tol * scale:
        return None
    free_rows = l != u
    if np.any(yf[lower & free_rows] > tol) or np.any(yf[upper] < -tol):
        # degenerate active set: multipliers are not unique, look for a sign-consistent set
        yf = _signed_multipliers(P, q, A, xs, active, lower & free_rows, upper)
        if yf is None:
            return None
    stat = np.max(np.abs(P @ xs + q + A.T @ yf))
    if stat > tol * max(1.0, np.max(np.abs(q))):
        return None
    return xs, yf, ax, stat


def _signed_multipliers(P, q, A, xs, active, lower, upper):
    """Least-squares multipliers for ``xs`` with y <= 0 on lower and y >= 0 on
    upper bounds (equality rows free)."""
    lo = np.where(upper[active], 0.0, -np.inf)
    hi = np.where(lower[active], 0.0, np.inf)
    res = scipy.optimize.lsq_linear(A[active].T, -(P @ xs + q), bounds=(lo, hi),
                                    method="bvls", tol=1e-14)
    if not res.success:
        return None
    yf = np.zeros(A.shape[0])
    yf[active] = res.x
    return yf


def _active_set(P, q, A, l, u, tol):
    """Goldfarb-Idnani on a slightly regularised copy, then an exact polish.

    The regularisation only steers the choice among optimal vertices; the
    returned point must pass the same KKT check as an ADMM polish.
    """
    import quadprog

    n = P.shape[0]
    eq = l == u
    lo = np.isfinite(l) & ~eq
    hi = np.isfinite(u) & ~eq
    C = np.vstack([A[eq], A[lo], -A[hi]]).T
    b = np.concatenate([l[eq], l[lo], -u[hi]])
    reg = 1e-9 * max(1.0, float(np.max(np.abs(np.diag(P)))))
    try:
        x, _, _, _, lag, _ = quadprog.solve_qp(P + reg * np.eye(n), -q, C, b, int(eq.sum()))
    except ValueError:
        return None
    rows = np.concatenate([np.flatnonzero(eq), np.flatnonzero(lo), np.flatnonzero(hi)])
    # quadprog multipliers are >= 0 for C'x >= b; ours are negative on lower bounds
    sign = np.concatenate([-np.ones(eq.sum()), -np.ones(lo.sum()), np.ones(hi.sum())])
    y = np.zeros(A.shape[0])
    np.add.at(y, rows, sign * lag)
    return _polish(P, q, A, l, u, x, np.clip(A @ x, l, u), y, tol)


def solve_qp(problem: QpProblem, tol: float = 1e-8, max_iter: int = MAX_ITER,
             warm_start: np.ndarray | None = None) -> QpResult:
    """Solve ``problem`` to KKT residual ``tol`` (scaled units).

    Raises:
        QpInfeasible: with a dual ray certifying infeasibility.
        QpNotConverged: iteration cap reached; carries the best iterate.
    """
    n = problem.n
    fixed = problem.lb >= problem.ub
    free = np.flatnonzero(~fixed)
    x_full = np.where(fixed, problem.lb, 0.0).astype(float)
    if np.any(problem.lb > problem.ub + 1e-12):
        raise QpInfeasible("box bounds cross", None)

    if free.size == 0:
        res = problem.residual(x_full)
        if res > 1e-9:
            raise QpInfeasible("all variables fixed and rows violated", None)
        m = problem.A.shape[0]
        return QpResult(x_full, np.zeros(n), np.zeros(m), problem.objective(x_full), 0, res, 0.0, True)

    Pf = problem.P[np.ix_(free, free)]
    qf = problem.q[free] + problem.P[np.ix_(free, np.flatnonzero(fixed))] @ x_full[fixed]
    Af = problem.A[:, free]
    shift = problem.A[:, fixed] @ x_full[fixed]
    lr, ur = problem.l - shift, problem.u - shift

    # zero rows cannot be satisfied by moving x
    nz = np.any(Af != 0.0, axis=1)
    if np.any((lr[~nz] > 1e-9) | (ur[~nz] < -1e-9)):
        bad = np.flatnonzero(~nz & ((lr > 1e-9) | (ur < -1e-9)))
        raise QpInfeasible(f"constant rows violated: {bad.tolist()}", None)
    rows = np.flatnonzero(nz)
    # identical rows (e.g. SOC while away) collapse to their tightest bounds
    keys: dict = {}
    group = np.empty(rows.size, dtype=np.int64)
    for i, r in enumerate(rows):
        group[i] = keys.setdefault(Af[r].tobytes(), len(keys))
    first = rows[np.unique(group, return_index=True)[1]]
    uniq = Af[first]
    lg = np.full(len(keys), -np.inf)
    ug = np.full(len(keys), np.inf)
    np.maximum.at(lg, group, lr[rows])
    np.minimum.at(ug, group, ur[rows])
    if np.any(lg > ug + 1e-9):
        g = int(np.flatnonzero(lg > ug + 1e-9)[0])
        bad = rows[group == g]
        raise QpInfeasible(f"conflicting bounds on rows {bad.tolist()}", None)
    ug = np.maximum(ug, lg)

    nf = free.size
    A = np.vstack([np.eye(nf), uniq])
    l = np.concatenate([problem.lb[free], lg])
    u = np.concatenate([problem.ub[free], ug])

    # cost scaling keeps residual tolerances meaningful across price levels
    cscale = max(np.max(np.abs(qf)) if nf else 0.0, np.max(np.abs(Pf)) if nf else 0.0, 1e-12)
    P = np.ascontiguousarray(Pf / cscale)
    q = np.ascontiguousarray(qf / cscale)
    A = np.ascontiguousarray(A)

    x = np.clip(warm_start[free], l[:nf], u[:nf]) if warm_start is not None else np.zeros(nf)
    x = np.ascontiguousarray(x, dtype=float)
    z = np.clip(A @ x, l, u)
    y = np.zeros(A.shape[0])

    rho_bar = 0.1
    eq = l == u
    rho = np.where(eq, RHO_EQ_FACTOR * rho_bar, rho_bar)
    Kinv = _kkt_inverse(P, A, rho, SIGMA)

    total = 0
    eps = 1e-5
    polished = None
    handed_over = False
    r_prim = r_dual = np.inf
    while total < max_iter:
        budget = min(CHECK_EVERY * 8, max_iter - total)
        k, status, r_prim, r_dual = admm_loop(Kinv, P, q, A, l, u, rho, SIGMA, RELAX, x, z, y,
                                              budget, eps, eps, CHECK_EVERY, 1e-6)
        total += k
        if status == 2:
            ray = _recover_ray(A, l, u, x, z, y, rho, Kinv, P, q)
            raise QpInfeasible("primal infeasible", ray)
        if status == 1:
            polished = _polish(P, q, A, l, u, x, z, y, tol)
            if polished is not None:
                break
            # no clean active set yet: tighten past tol so the raw iterate qualifies
            if eps <= EPS_FLOOR * tol:
                break
            eps = max(eps * 1e-2, EPS_FLOOR * tol)
            continue
        # nearly linear costs make ADMM crawl, but the active set often settles
        # long before the residuals do; a verified polish is already optimal
        polished = _polish(P, q, A, l, u, x, z, y, tol)
        if polished is not None:
            break
        if total >= STALL_ITER and not handed_over:
            handed_over = True
            polished = _active_set(P, q, A, l, u, tol)
            if polished is not None:
                break
        # rebalance the penalty from the residual ratio
        ax = A @ x
        prim_n = r_prim / max(np.max(np.abs(ax)), np.max(np.abs(z)), 1e-12)
        dual_n = r_dual / max(np.max(np.abs(P @ x)), np.max(np.abs(A.T @ y)), np.max(np.abs(q)), 1e-12)
        new_rho = rho_bar * np.sqrt(prim_n / max(dual_n, 1e-30))
        new_rho = float(np.clip(new_rho, 1e-6, 1e6))
        if new_rho > 5 * rho_bar or new_rho < rho_bar / 5:
            rho_bar = new_rho
            rho = np.where(eq, RHO_EQ_FACTOR * rho_bar, rho_bar)
            Kinv = _kkt_inverse(P, A, rho, SIGMA)

    if polished is not None:
        xs, ys, ax, stat = polished
        r_prim_f = float(np.max(np.maximum(0.0, np.maximum(l - ax, ax - u))))
        r_dual_f = float(stat)
        ok = True
    else:
        xs, ys = x, y
        ax = A @ xs
        r_prim_f = float(np.max(np.maximum(0.0, np.maximum(l - ax, ax - u))))
        r_dual_f = float(np.max(np.abs(P @ xs + q + A.T @ ys)))
        ok = r_prim_f <= tol * max(1.0, np.max(np.abs(ax))) and r_dual_f <= tol
        if not ok:
            xo = x_full.copy()
            xo[free] = np.clip(xs, l[:nf], u[:nf])
            raise QpNotConverged(f"no convergence after {total} iterations "
                                 f"(primal {r_prim_f:.2e}, dual {r_dual_f:.2e})",
                                 x=xo, residual=max(r_prim_f, r_dual_f))

    x_full[free] = np.clip(xs, l[:nf], u[:nf])
    y_box = np.zeros(n)
    y_box[free] = ys[:nf] * cscale
    # report each merged multiplier on the member row whose bound binds
    y_rows = np.zeros(problem.A.shape[0])
    yg = ys[nf:] * cscale
    for g in range(len(yg)):
        if yg[g] == 0.0:
            continue
        members = rows[group == g]
        target = lr[members] if yg[g] < 0 else ur[members]
        pick = members[np.argmax(target) if yg[g] < 0 else np.argmin(target)]
        y_rows[pick] = yg[g]
    return QpResult(
        x=x_full, y_box=y_box, y_rows=y_rows, objective=problem.objective(x_full),
        iterations=total, primal_residual=r_prim_f, dual_residual=r_dual_f * cscale,
        polished=polished is not None,
    )


def _recover_ray(A, l, u, x, z, y, rho, Kinv, P, q):
    y0 = y.copy()
    _admm_loop_np(Kinv, P, q, A, l, u, rho, SIGMA, RELAX, x.copy(), z.copy(), y, 1, 0.0, 0.0, 1, 0.0)
    ray = y - y0
    return ray / max(np.max(np.abs(ray)), 1e-300)
