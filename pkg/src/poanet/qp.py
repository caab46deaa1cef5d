"""Convex quadratic-program subsolver.

Solves  min 0.5 x'Qx + b'x  subject to  Ex = e,  Gx <= h,  lb <= x <= ub.
The primary engine is a predictor-corrector interior-point method; when it
stalls, an operator-splitting (ADMM) pass on the stacked form l <= Ax <= u
takes over, which also supplies certificates for infeasible or unbounded
problems. An active-set polish pass sharpens whichever point wins. The whole
pipeline is seedless and deterministic: fixed inputs give identical iterates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import Infeasible, MaxIterations, Unbounded

__all__ = ["QuadraticProgram", "QPResult", "solve_qp", "solve_feasibility"]

_ALPHA = 1.6           # over-relaxation
_SIGMA = 1e-6          # primal regularization
_RHO_EQ_SCALE = 1e3    # extra step weight on equality rows
_CHECK_EVERY = 25
_RHO_UPDATE_EVERY = 200
_EPS_CERT = 1e-9       # infeasibility certificate tolerance


def _as_csc(M, shape=None):
    if M is None:
        return None
    if sp.issparse(M):
        out = M.tocsc().astype(float)
    else:
        out = sp.csc_matrix(np.atleast_2d(np.asarray(M, dtype=float)))
    if shape is not None and out.shape != shape:
        raise ValueError(f"matrix shape {out.shape} does not match expected {shape}")
    return out


@dataclass(frozen=True, eq=False)
class QuadraticProgram:
    """Container for one convex QP.

    Objective is 0.5 x'Qx + b'x. ``equalities`` is (E, e) with Ex = e,
    ``inequalities`` is (G, h) with Gx <= h; either may be None. Bounds are
    elementwise with +-inf allowed. Q is symmetrized on construction.
    """

    Q: object
    b: np.ndarray
    E: object = None
    e: np.ndarray = None
    G: object = None
    h: np.ndarray = None
    lb: np.ndarray = None
    ub: np.ndarray = None
    _n: int = field(init=False, repr=False)

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float).ravel()
        n = b.size
        Q = _as_csc(self.Q, (n, n))
        Qs = ((Q + Q.T) * 0.5).tocsc()
        object.__setattr__(self, "Q", Qs)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "_n", n)

        def fix_side(M, v, name):
            if M is None:
                if v is not None and np.size(v):
                    raise ValueError(f"{name}: right-hand side given without a matrix")
                return None, None
            Mc = _as_csc(M)
            if Mc.shape[1] != n:
                raise ValueError(f"{name}: expected {n} columns, got {Mc.shape[1]}")
            vv = np.asarray(v, dtype=float).ravel()
            if vv.size != Mc.shape[0]:
                raise ValueError(f"{name}: {Mc.shape[0]} rows but {vv.size} right-hand sides")
            return Mc, vv

        E, e = fix_side(self.E, self.e, "equalities")
        G, h = fix_side(self.G, self.h, "inequalities")
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", h)

        lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel()
        if lb.size != n or ub.size != n:
            raise ValueError("bound vectors must have one entry per variable")
        if np.any(lb > ub):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)

    @property
    def n(self) -> int:
        return self._n

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ (self.Q @ x) + self.b @ x)

    def stacked(self):
        """(A, l, u) with rows [equalities; inequalities; variable bounds]."""
        blocks = []
        lows = []
        ups = []
        if self.E is not None:
            blocks.append(self.E)
            lows.append(self.e)
            ups.append(self.e)
        if self.G is not None:
            blocks.append(self.G)
            lows.append(np.full(self.G.shape[0], -np.inf))
            ups.append(self.h)
        blocks.append(sp.identity(self.n, format="csc"))
        lows.append(self.lb)
        ups.append(self.ub)
        A = sp.vstack(blocks, format="csc")
        return A, np.concatenate(lows), np.concatenate(ups)


@dataclass
class QPResult:
    x: np.ndarray
    objective: float
    status: str
    iterations: int
    residuals: dict
    duals: np.ndarray
    notes: tuple[str, ...] = ()


def _ruiz_equilibrate(P, A, q, iters=10):
    """Symmetric diagonal scaling of [[P, A'], [A, 0]] plus one cost scaling.

    The cost scalar is applied once, after equilibration, over the nonzero
    quadratic columns only, and clamped; applying it inside the loop can
    compound without bound when most quadratic columns are zero.
    """
    n = P.shape[0]
    m = A.shape[0]
    d = np.ones(n)
    ec = np.ones(m)
    Ps, As, qs = P.copy(), A.copy(), q.copy()
    for _ in range(iters):
        col_p = np.abs(Ps).max(axis=0).toarray().ravel() if Ps.nnz else np.zeros(n)
        col_a = np.abs(As).max(axis=0).toarray().ravel() if As.nnz else np.zeros(n)
        norm_x = np.maximum(col_p, col_a)
        norm_r = np.abs(As).max(axis=1).toarray().ravel() if As.nnz else np.zeros(m)
        norm_x[norm_x == 0] = 1.0
        norm_r[norm_r == 0] = 1.0
        dk = 1.0 / np.sqrt(norm_x)
        ek = 1.0 / np.sqrt(norm_r)
        Dk = sp.diags(dk)
        Ek = sp.diags(ek)
        Ps = (Dk @ Ps @ Dk).tocsc()
        As = (Ek @ As @ Dk).tocsc()
        qs = dk * qs
        d *= dk
        ec *= ek
    col_p = np.abs(Ps).max(axis=0).toarray().ravel() if Ps.nnz else np.zeros(n)
    nonzero = col_p > 0
    terms = []
    if nonzero.any():
        terms.append(float(np.mean(col_p[nonzero])))
    if n and np.abs(qs).max(initial=0.0) > 0:
        terms.append(float(np.abs(qs).max()))
    c = 1.0
    if terms:
        c = float(np.clip(1.0 / max(terms), 1e-4, 1e4))
        Ps = Ps * c
        qs = qs * c
    return Ps.tocsc(), As.tocsc(), qs, d, ec, c


def _factor(Ps, As, sigma, rho_vec):
    n = Ps.shape[0]
    K = sp.bmat(
        [[Ps + sigma * sp.identity(n), As.T],
         [As, -sp.diags(1.0 / rho_vec)]],
        format="csc",
    )
    return splu(K)


def _kkt_residuals(qp, A, l, u, x, y):
    """Normalized stationarity / primal / dual-sign / complementarity residuals."""
    ax = A @ x
    qx = qp.Q @ x
    aty = A.T @ y
    stat = np.abs(qx + qp.b + aty).max() if qp.n else 0.0
    stat_scale = max(1.0, np.abs(qx).max(initial=0.0), np.abs(aty).max(initial=0.0),
                     np.abs(qp.b).max(initial=0.0))
    prim = float(np.maximum(ax - u, 0.0).max(initial=0.0))
    prim = max(prim, float(np.maximum(l - ax, 0.0).max(initial=0.0)))
    prim_scale = max(1.0, np.abs(ax).max(initial=0.0))
    # Sign conditions: a positive multiplier needs a finite upper bound and a
    # negative one a finite lower bound; rows with neither bound need zero.
    dual = 0.0
    bad_pos = (y > 0) & np.isinf(u)
    bad_neg = (y < 0) & np.isinf(l)
    if bad_pos.any():
        dual = max(dual, float(y[bad_pos].max()))
    if bad_neg.any():
        dual = max(dual, float((-y[bad_neg]).max()))
    dual_scale = max(1.0, np.abs(y).max(initial=0.0))
    # Complementarity: slack at the finite bound the multiplier sign points to.
    u_safe = np.where(np.isfinite(u), u, 0.0)
    l_safe = np.where(np.isfinite(l), l, 0.0)
    up_term = np.where((y > 0) & np.isfinite(u), np.maximum(y, 0.0) * np.abs(u_safe - ax), 0.0)
    lo_term = np.where((y < 0) & np.isfinite(l), np.maximum(-y, 0.0) * np.abs(ax - l_safe), 0.0)
    comp_terms = (up_term + lo_term) / ((1.0 + np.abs(y)) * (1.0 + np.abs(ax)))
    comp = float(comp_terms.max(initial=0.0))
    return {
        "stationarity": float(stat / stat_scale),
        "primal": float(prim / prim_scale),
        "dual": float(dual / dual_scale),
        "complementarity": comp,
    }


def _polish(qp, A, l, u, x, y):
    """Solve the equality-constrained problem on the active set guessed from y."""
    act_lo = (y < 0) & np.isfinite(l)
    act_up = (y > 0) & np.isfinite(u)
    active = act_lo | act_up
    rhs_bounds = np.where(act_lo, l, u)[active]
    A_act = A[active]
    n = qp.n
    ma = A_act.shape[0]
    delta = 1e-9
    K = sp.bmat(
        [[qp.Q + delta * sp.identity(n), A_act.T],
         [A_act, -delta * sp.identity(ma) if ma else None]],
        format="csc",
    ) if ma else (qp.Q + delta * sp.identity(n)).tocsc()
    rhs = np.concatenate([-qp.b, rhs_bounds]) if ma else -qp.b
    try:
        lu = splu(K)
    except RuntimeError:
        return None
    sol = lu.solve(rhs)
    # A few rounds of iterative refinement against the unregularized system.
    for _ in range(3):
        if ma:
            r1 = -qp.b - (qp.Q @ sol[:n]) - (A_act.T @ sol[n:])
            r2 = rhs_bounds - (A_act @ sol[:n])
            resid = np.concatenate([r1, r2])
        else:
            resid = -qp.b - (qp.Q @ sol[:n])
        sol = sol + lu.solve(resid)
    x_new = sol[:n]
    y_new = np.zeros(A.shape[0])
    if ma:
        y_new[active] = sol[n:]
    return x_new, y_new


def _admm(Q, b, A, l, u, lb, ub, tol, max_iter, scale):
    """One operator-splitting run; returns (x, y, solved, iterations)."""
    n = Q.shape[0]
    m = A.shape[0]
    if scale:
        Ps, As, qs, d, ec, c = _ruiz_equilibrate(Q, A, b, iters=10)
    else:
        Ps, As, qs = Q, A, b
        d = np.ones(n)
        ec = np.ones(m)
        c = 1.0
    ls = ec * l
    us = ec * u

    eq_rows = np.isfinite(l) & np.isfinite(u) & (l == u)
    loose_rows = np.isinf(l) & np.isinf(u)
    rho_base = 0.1
    rho_mult = np.where(eq_rows, _RHO_EQ_SCALE, 1.0) * np.where(loose_rows, 1e-6, 1.0)
    rho_vec = rho_base * rho_mult
    lu_fac = _factor(Ps, As, _SIGMA, rho_vec)

    # Seedless start: regularized unconstrained minimizer, projected to bounds.
    x0 = splu((Ps + _SIGMA * sp.identity(n)).tocsc()).solve(-qs)
    x = np.clip(d * x0, lb, ub) / d
    z = np.clip(As @ x, ls, us)
    y = np.zeros(m)

    def unscaled_residuals(xs, ys, zs):
        x_u = d * xs
        y_u = ec * ys / c
        ax = A @ x_u
        z_u = zs / ec
        r_prim = float(np.abs(ax - z_u).max(initial=0.0))
        qx = Q @ x_u
        aty = A.T @ y_u
        r_dual = float(np.abs(qx + b + aty).max(initial=0.0))
        prim_ref = max(1.0, np.abs(ax).max(initial=0.0), np.abs(z_u).max(initial=0.0))
        dual_ref = max(1.0, np.abs(qx).max(initial=0.0), np.abs(aty).max(initial=0.0),
                       np.abs(b).max(initial=0.0))
        return r_prim, r_dual, prim_ref, dual_ref

    solved = False
    iterations = max_iter
    for it in range(1, max_iter + 1):
        rhs = np.concatenate([_SIGMA * x - qs, z - y / rho_vec])
        sol = lu_fac.solve(rhs)
        xt = sol[:n]
        nu = sol[n:]
        zt = z + (nu - y) / rho_vec
        x_prev, y_prev = x, y
        x = _ALPHA * xt + (1.0 - _ALPHA) * x_prev
        z_bar = _ALPHA * zt + (1.0 - _ALPHA) * z
        z_new = np.clip(z_bar + y / rho_vec, ls, us)
        y = y + rho_vec * (z_bar - z_new)
        z = z_new

        if it % _CHECK_EVERY == 0 or it == max_iter:
            r_prim, r_dual, prim_ref, dual_ref = unscaled_residuals(x, y, z)
            if r_prim <= tol * prim_ref and r_dual <= tol * dual_ref:
                solved = True
                iterations = it
                break

            # Infeasibility certificates from the iterate differences.
            dy = (ec * (y - y_prev)) / c
            dy_norm = float(np.abs(dy).max(initial=0.0))
            if dy_norm > 0:
                sup = np.where(np.isinf(u), 0.0, u) @ np.maximum(dy, 0.0) \
                    + np.where(np.isinf(l), 0.0, l) @ np.minimum(dy, 0.0)
                bounded_dir = (
                    np.all(np.maximum(dy, 0.0)[np.isinf(u)] <= _EPS_CERT * dy_norm)
                    and np.all(np.minimum(dy, 0.0)[np.isinf(l)] >= -_EPS_CERT * dy_norm)
                )
                if (bounded_dir
                        and float(np.abs(A.T @ dy).max(initial=0.0)) <= _EPS_CERT * dy_norm
                        and sup < -_EPS_CERT * dy_norm):
                    raise Infeasible("constraints certified infeasible")
            dx = d * (x - x_prev)
            dx_norm = float(np.abs(dx).max(initial=0.0))
            if dx_norm > 0:
                adx = A @ dx
                up_ok = np.all(adx[np.isfinite(u)] <= _EPS_CERT * dx_norm)
                lo_ok = np.all(adx[np.isfinite(l)] >= -_EPS_CERT * dx_norm)
                if (up_ok and lo_ok
                        and float(np.abs(Q @ dx).max(initial=0.0)) <= _EPS_CERT * dx_norm
                        and float(b @ dx) < -_EPS_CERT * dx_norm):
                    raise Unbounded("objective certified unbounded below")

        if it % _RHO_UPDATE_EVERY == 0:
            r_prim, r_dual, prim_ref, dual_ref = unscaled_residuals(x, y, z)
            rp = r_prim / prim_ref
            rd = r_dual / dual_ref
            if rd > 0 and rp > 0:
                new_base = float(np.clip(rho_base * np.sqrt(rp / rd), 1e-6, 1e6))
                if new_base >= 5.0 * rho_base or new_base <= rho_base / 5.0:
                    rho_base = new_base
                    rho_vec = rho_base * rho_mult
                    lu_fac = _factor(Ps, As, _SIGMA, rho_vec)

    return d * x, ec * y / c, solved, iterations


def _one_sided_rows(A, l, u):
    """Split stacked two-sided rows into one-sided Gx <= h rows.

    Returns (E, e, G, h, up_idx, lo_idx) where up_idx/lo_idx give, for each G
    row, the stacked row it came from (or -1), letting the caller fold the
    barrier multipliers back into two-sided duals.
    """
    eq = np.isfinite(l) & np.isfinite(u) & (l == u)
    Acsr = A.tocsr()
    E = Acsr[eq].tocsr()
    e = l[eq]
    blocks = []
    hs = []
    origin = []
    sign_up = []
    ineq = ~eq
    idx = np.flatnonzero(ineq)
    fin_up = idx[np.isfinite(u[idx])]
    if fin_up.size:
        blocks.append(Acsr[fin_up])
        hs.append(u[fin_up])
        origin.extend(fin_up.tolist())
        sign_up.extend([True] * fin_up.size)
    fin_lo = idx[np.isfinite(l[idx])]
    if fin_lo.size:
        blocks.append(-Acsr[fin_lo])
        hs.append(-l[fin_lo])
        origin.extend(fin_lo.tolist())
        sign_up.extend([False] * fin_lo.size)
    if blocks:
        G = sp.vstack(blocks).tocsr()
        h = np.concatenate(hs)
    else:
        G = sp.csr_matrix((0, A.shape[1]))
        h = np.zeros(0)
    eq_idx = np.flatnonzero(eq)
    return E, e, G, h, np.asarray(origin, dtype=np.int64), np.asarray(sign_up, dtype=bool), eq_idx


_IPM_MAX_ITER = 100
_IPM_W_CAP = 1e16


def _ipm(Q, b, A, l, u, tol):
    """Predictor-corrector interior-point pass on the stacked form.

    Returns (x, y_stacked, converged, iterations); never raises on numerical
    trouble, just reports non-convergence so the caller can fall back.
    """
    E, e, G, h, origin, sign_up, eq_idx = _one_sided_rows(A, l, u)
    n = Q.shape[0]
    me = E.shape[0]
    mg = G.shape[0]
    m = A.shape[0]
    dense = (n + me) <= 1200

    def assemble_y(lam, mu):
        y = np.zeros(m)
        if mu.size:
            np.add.at(y, origin[sign_up], mu[sign_up])
            np.add.at(y, origin[~sign_up], -mu[~sign_up])
        y[eq_idx] = lam
        return y

    if mg == 0:
        # Equality-constrained (or unconstrained): one regularized KKT solve.
        delta = 1e-12
        K = sp.bmat([[Q + delta * sp.identity(n), E.T],
                     [E, -delta * sp.identity(me)]], format="csc") if me else \
            (Q + delta * sp.identity(n)).tocsc()
        rhs = np.concatenate([-b, e]) if me else -b
        try:
            fac = splu(K)
        except RuntimeError:
            return np.zeros(n), np.zeros(m), False, 0
        sol = fac.solve(rhs)
        for _ in range(3):
            if me:
                resid = np.concatenate([-b - Q @ sol[:n] - E.T @ sol[n:], e - E @ sol[:n]])
            else:
                resid = -b - Q @ sol[:n]
            sol = sol + fac.solve(resid)
        x = sol[:n]
        lam = sol[n:] if me else np.zeros(0)
        if not np.all(np.isfinite(sol)):
            return np.zeros(n), np.zeros(m), False, 1
        return x, assemble_y(lam, np.zeros(0)), True, 1

    Ed = E.toarray() if me else np.zeros((0, n))
    try:
        x = np.asarray(splu((Q + sp.identity(n)).tocsc()).solve(-b))
    except RuntimeError:
        x = np.zeros(n)
    lam = np.zeros(me)
    s = np.maximum(h - G @ x, 1.0)
    mu = np.ones(mg)

    def max_step(v, dv):
        neg = dv < 0
        if not neg.any():
            return 1.0
        return min(1.0, float(np.min(-v[neg] / dv[neg])))

    for it in range(1, _IPM_MAX_ITER + 1):
        rQ = Q @ x + b + Ed.T @ lam + G.T @ mu
        rE = (Ed @ x - e) if me else np.zeros(0)
        rG = G @ x + s - h
        gap = float(s @ mu) / mg
        dref = max(1.0, np.abs(Q @ x).max(initial=0.0), np.abs(b).max(initial=0.0),
                   np.abs(Ed.T @ lam).max(initial=0.0), np.abs(G.T @ mu).max(initial=0.0))
        pref = max(1.0, np.abs(G @ x).max(initial=0.0), np.abs(Ed @ x).max(initial=0.0))
        obj_ref = max(1.0, abs(float(0.5 * x @ (Q @ x) + b @ x)))
        if (np.abs(rQ).max(initial=0.0) <= tol * dref
                and np.abs(rE).max(initial=0.0) <= tol * pref
                and np.abs(rG).max(initial=0.0) <= tol * pref
                and gap <= tol * obj_ref):
            return x, assemble_y(lam, mu), True, it

        with np.errstate(over="ignore"):
            W = np.minimum(mu / s, _IPM_W_CAP)
        GWG = (G.multiply(W[:, None]).T @ G)
        if dense:
            K = np.zeros((n + me, n + me))
            K[:n, :n] = Q.toarray() + GWG.toarray()
            if me:
                K[:n, n:] = Ed.T
                K[n:, :n] = Ed
                K[n:, n:] = -1e-12 * np.eye(me)
            try:
                with warnings.catch_warnings():
                    # endgame factors get ill-conditioned by design; failures
                    # surface through the non-finite direction checks below
                    warnings.simplefilter("ignore", sla.LinAlgWarning)
                    fac = sla.lu_factor(K + 1e-12 * np.eye(n + me))
            except ValueError:
                return x, assemble_y(lam, mu), False, it
            solve = lambda r: sla.lu_solve(fac, r)  # noqa: E731
        else:
            Ksp = sp.bmat([[Q + GWG + 1e-12 * sp.identity(n), E.T],
                           [E, -1e-12 * sp.identity(me)]], format="csc") if me else \
                (Q + GWG + 1e-12 * sp.identity(n)).tocsc()
            try:
                fac = splu(Ksp)
            except RuntimeError:
                return x, assemble_y(lam, mu), False, it
            solve = fac.solve

        def newton(rC):
            rhs = np.concatenate([-(rQ + G.T @ (W * rG - rC / s)), -rE])
            sol = solve(rhs)
            dx = sol[:n]
            dlam = sol[n:]
            dmu = W * (G @ dx + rG) - rC / s
            ds = -(rC + s * dmu) / mu
            return dx, dlam, dmu, ds

        dx_a, _, dmu_a, ds_a = newton(s * mu)
        if not (np.all(np.isfinite(dx_a)) and np.all(np.isfinite(dmu_a))):
            return x, assemble_y(lam, mu), False, it
        ap = max_step(s, ds_a)
        ad = max_step(mu, dmu_a)
        gap_aff = float((s + ap * ds_a) @ (mu + ad * dmu_a)) / mg
        sigma = (gap_aff / gap) ** 3 if gap > 0 else 0.0
        dx, dlam, dmu, ds = newton(s * mu + ds_a * dmu_a - sigma * gap)
        if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dmu))):
            return x, assemble_y(lam, mu), False, it
        alpha = min(1.0, 0.9995 * max_step(s, ds), 0.9995 * max_step(mu, dmu))
        x = x + alpha * dx
        lam = lam + alpha * dlam
        mu = np.maximum(mu + alpha * dmu, 1e-300)
        s = np.maximum(s + alpha * ds, 1e-300)

    return x, assemble_y(lam, mu), False, _IPM_MAX_ITER


def solve_qp(qp: QuadraticProgram, tol: float = 1e-6, max_iter: int = 50000) -> QPResult:
    """Solve a convex QP to normalized KKT residuals at or below ``tol``.

    The interior-point pass runs first; if it stalls, operator splitting takes
    over (raw data, then a Ruiz-equilibrated retry), and the point with the
    smallest worst residual wins. Raises :class:`Infeasible` or
    :class:`Unbounded` on certified failures and :class:`MaxIterations`
    (result attached) when everything exhausts its budget above tolerance.
    """
    n = qp.n
    notes = []

    Q = qp.Q
    Q_reg = Q
    if n <= 1500:
        eigs = np.linalg.eigvalsh(Q.toarray())
        top = max(1.0, float(eigs[-1]))
        if eigs[0] < -1e-8 * top:
            raise ValueError("quadratic term is not positive semidefinite")
        if eigs[0] < 1e-12 * top:
            # Stabilizes the splitting fallback; the barrier method handles
            # singular quadratics natively, so it keeps the raw matrix.
            ridge = 1e-10 * float(Q.diagonal().sum()) / n
            if ridge > 0:
                Q_reg = (Q + ridge * sp.identity(n)).tocsc()
                notes.append(f"ridge_applied:{ridge:.3e}")

    A, l, u = qp.stacked()

    x_u, y_u, solved, iterations = _ipm(Q, qp.b, A, l, u, tol)
    if not solved:
        notes.append("splitting_fallback")
        x_a, y_a, solved_a, it_a = _admm(Q_reg, qp.b, A, l, u, qp.lb, qp.ub, tol, max_iter,
                                         scale=False)
        iterations += it_a
        res_best = _kkt_residuals(qp, A, l, u, x_u, y_u)
        res_a = _kkt_residuals(qp, A, l, u, x_a, y_a)
        if solved_a or max(res_a.values()) < max(res_best.values()):
            x_u, y_u, solved = x_a, y_a, solved_a
        if not solved:
            x_s, y_s, solved_s, it_s = _admm(Q_reg, qp.b, A, l, u, qp.lb, qp.ub, tol,
                                             max_iter, scale=True)
            iterations += it_s
            res_best = _kkt_residuals(qp, A, l, u, x_u, y_u)
            res_s = _kkt_residuals(qp, A, l, u, x_s, y_s)
            if solved_s or max(res_s.values()) < max(res_best.values()):
                x_u, y_u, solved = x_s, y_s, solved_s

    polished = _polish(qp, A, l, u, x_u, y_u)
    if polished is not None:
        res_old = _kkt_residuals(qp, A, l, u, x_u, y_u)
        res_new = _kkt_residuals(qp, A, l, u, *polished)
        if max(res_new.values()) < max(res_old.values()):
            x_u, y_u = polished
            notes.append("polished")

    residuals = _kkt_residuals(qp, A, l, u, x_u, y_u)
    status = "solved" if solved or max(residuals.values()) <= tol else "max_iterations"
    result = QPResult(
        x=x_u,
        objective=qp.objective(x_u),
        status=status,
        iterations=iterations,
        residuals=residuals,
        duals=y_u,
        notes=tuple(notes),
    )
    if status != "solved":
        raise MaxIterations(
            f"QP stopped after {max_iter} iterations with residuals {residuals}",
            result=result,
        )
    return result


def solve_feasibility(E=None, e=None, G=None, h=None, bounds=None,
                      tol: float = 1e-6, max_iter: int = 50000) -> np.ndarray:
    """Return any point satisfying the given linear system, or raise Infeasible.

    Implemented as a zero-objective QP solve.
    """
    n = None
    for M in (E, G):
        if M is not None:
            n = np.atleast_2d(np.asarray(M.toarray() if sp.issparse(M) else M)).shape[1]
            break
    if n is None and bounds is not None:
        n = len(bounds[0])
    if n is None:
        raise ValueError("cannot infer the variable dimension from empty constraints")
    lb, ub = (None, None) if bounds is None else bounds
    qp = QuadraticProgram(
        Q=sp.csc_matrix((n, n)), b=np.zeros(n), E=E, e=e, G=G, h=h, lb=lb, ub=ub
    )
    return solve_qp(qp, tol=tol, max_iter=max_iter).x
