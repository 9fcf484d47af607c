"""Small dense LP / QP solvers.

``linprog_bounded`` is a two-phase bounded-variable primal simplex with Bland's
rule; ``qp_active_set`` is a primal active-set method for convex quadratic
programs started from an LP-feasible point.  Problem sizes here are tens of
variables and a handful of rows, so bases are refactorized with a dense solve
at every pivot.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InfeasibleError, SolverError


@dataclass
class LPResult:
    x: np.ndarray
    fun: float
    iterations: int


def _standard_form(c, a_eq, b_eq, a_ub, b_ub, lo, hi):
    c = np.asarray(c, dtype=float)
    n = c.size
    a_eq = np.zeros((0, n)) if a_eq is None else np.atleast_2d(np.asarray(a_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    a_ub = np.zeros((0, n)) if a_ub is None else np.atleast_2d(np.asarray(a_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).reshape(-1)
    m_ub = a_ub.shape[0]
    a = np.block([[a_eq, np.zeros((a_eq.shape[0], m_ub))], [a_ub, np.eye(m_ub)]])
    b = np.concatenate([b_eq, b_ub])
    lo_full = np.concatenate([np.asarray(lo, dtype=float), np.zeros(m_ub)])
    hi_full = np.concatenate([np.asarray(hi, dtype=float), np.full(m_ub, np.inf)])
    c_full = np.concatenate([c, np.zeros(m_ub)])
    return c_full, a, b, lo_full, hi_full, n


def _simplex(c, a, b, lo, hi, basis, x, tol, max_iter):
    """Bounded primal simplex from a feasible basis. Mutates ``basis`` and ``x``."""
    m, n = a.shape
    it = 0
    while True:
        it += 1
        if it > max_iter:
            raise SolverError("simplex iteration limit reached")
        bmat = a[:, basis]
        y = np.linalg.solve(bmat.T, c[basis])
        red = c - a.T @ y
        in_basis = np.zeros(n, dtype=bool)
        in_basis[basis] = True
        entering, direction = -1, 0
        for j in range(n):
            if in_basis[j] or lo[j] == hi[j]:
                continue
            at_upper = np.isfinite(hi[j]) and x[j] >= hi[j] - tol
            if not at_upper and red[j] < -tol:
                entering, direction = j, 1
                break
            if at_upper and red[j] > tol:
                entering, direction = j, -1
                break
        if entering < 0:
            return it
        col = np.linalg.solve(bmat, a[:, entering])
        # x_B changes by -direction * t * col
        step = hi[entering] - lo[entering]
        leave_pos, leave_to_upper = -1, False
        for i in range(m):
            rate = -direction * col[i]
            k = basis[i]
            if rate < -tol:
                cand = (x[k] - lo[k]) / -rate
                to_upper = False
            elif rate > tol and np.isfinite(hi[k]):
                cand = (hi[k] - x[k]) / rate
                to_upper = True
            else:
                continue
            cand = max(cand, 0.0)
            if cand < step - 1e-15 or (
                leave_pos >= 0 and abs(cand - step) <= 1e-15 and k < basis[leave_pos]
            ):
                step, leave_pos, leave_to_upper = cand, i, to_upper
        if not np.isfinite(step):
            raise SolverError("linear program is unbounded")
        x[basis] -= direction * step * col
        x[entering] += direction * step
        if leave_pos >= 0:
            k = basis[leave_pos]
            x[k] = hi[k] if leave_to_upper else lo[k]
            basis[leave_pos] = entering


def linprog_bounded(
    c,
    a_eq=None,
    b_eq=None,
    a_ub=None,
    b_ub=None,
    lo=None,
    hi=None,
    tol: float = 1e-11,
    max_iter: int = 10_000,
) -> LPResult:
    """Minimize ``c'x`` s.t. ``a_eq x = b_eq``, ``a_ub x <= b_ub``, ``lo <= x <= hi``.

    Every variable needs a finite lower bound.  Raises :class:`InfeasibleError`
    when phase one cannot drive the artificial variables to zero.
    """
    n0 = np.asarray(c).size
    lo = np.zeros(n0) if lo is None else np.asarray(lo, dtype=float)
    hi = np.full(n0, np.inf) if hi is None else np.asarray(hi, dtype=float)
    if not np.all(np.isfinite(lo)):
        raise SolverError("linprog_bounded needs finite lower bounds")
    if np.any(lo > hi + tol):
        raise InfeasibleError("inconsistent variable bounds")
    hi = np.maximum(hi, lo)
    c_full, a, b, lo_f, hi_f, n = _standard_form(c, a_eq, b_eq, a_ub, b_ub, lo, hi)
    m, nv = a.shape
    x = lo_f.copy()
    scale = max(1.0, float(np.abs(b).max(initial=0.0)), float(np.abs(a).max(initial=0.0)))
    if m == 0:
        x = np.where(c_full < 0, hi_f, lo_f)
        if np.any(~np.isfinite(x)):
            raise SolverError("linear program is unbounded")
        return LPResult(x[:n], float(c_full[:n] @ x[:n]), 0)

    resid = b - a @ x
    sign = np.where(resid >= 0, 1.0, -1.0)
    a1 = np.hstack([a, np.diag(sign)])
    lo1 = np.concatenate([lo_f, np.zeros(m)])
    hi1 = np.concatenate([hi_f, np.full(m, np.inf)])
    x1 = np.concatenate([x, np.abs(resid)])
    c1 = np.concatenate([np.zeros(nv), np.ones(m)])
    basis = list(range(nv, nv + m))
    it1 = _simplex(c1, a1, b, lo1, hi1, basis, x1, tol, max_iter)
    if x1[nv:].sum() > 1e-9 * scale:
        raise InfeasibleError(f"no feasible point (phase-one residual {x1[nv:].sum():.3g})")

    # pivot degenerate artificials out; rows where that is impossible are redundant
    keep_rows = list(range(m))
    for pos in range(m):
        k = basis[pos]
        if k < nv:
            continue
        row = np.linalg.inv(a1[:, basis])[pos]
        cands = [j for j in range(nv) if j not in basis and abs(row @ a1[:, j]) > 1e-9]
        if cands:
            basis[pos] = cands[0]
        else:
            keep_rows.remove(pos)
    x = x1[:nv]
    basis = [basis[i] for i in keep_rows]
    a, b = a[keep_rows], b[keep_rows]
    if len(basis) == 0:
        x = np.where(c_full < 0, hi_f, lo_f)
        if np.any(~np.isfinite(x)):
            raise SolverError("linear program is unbounded")
        return LPResult(x[:n], float(c_full[:n] @ x[:n]), it1)
    it2 = _simplex(c_full, a, b, lo_f, hi_f, basis, x, tol, max_iter)
    xs = x[:n]
    return LPResult(xs, float(np.asarray(c, dtype=float) @ xs), it1 + it2)


# ---------------------------------------------------------------------------
# Quadratic programming


@dataclass
class QPResult:
    x: np.ndarray
    fun: float
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray
    iterations: int
    kkt_residual: float


def kkt_residual(q, p, a_eq, b_eq, g, h, x, nu, lam) -> float:
    """Max of stationarity, primal feasibility, dual feasibility and complementarity
    violations, relative to the scale of ``q`` and ``p``."""
    scale = max(float(np.abs(q).max(initial=0.0)), float(np.abs(p).max(initial=0.0)), 1e-300)
    grad = q @ x + p - a_eq.T @ nu - g.T @ lam
    slack = g @ x - h
    parts = [
        np.abs(grad).max(initial=0.0) / scale,
        np.abs(a_eq @ x - b_eq).max(initial=0.0),
        np.maximum(-slack, 0.0).max(initial=0.0),
        np.maximum(-lam, 0.0).max(initial=0.0) / scale,
        np.abs(lam * slack).max(initial=0.0) / scale,
    ]
    return float(max(parts))


def qp_active_set(
    q,
    p=None,
    a_eq=None,
    b_eq=None,
    g=None,
    h=None,
    x0: Optional[np.ndarray] = None,
    tol: float = 1e-12,
    max_iter: int = 2000,
) -> QPResult:
    """Minimize ``0.5 x'Qx + p'x`` s.t. ``a_eq x = b_eq`` and ``g x >= h``.

    ``x0`` must be feasible; when omitted one is found with :func:`linprog_bounded`
    (which requires ``x >= 0`` to be implied by the rows of ``g``, as in every
    caller of this package).  Constraint rows are normalized internally.  Zero
    steps switch to Bland's rule, and a persistent stall triggers one tiny
    lexicographic loosening of the inequalities to break degeneracy.
    """
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    p = np.zeros(n) if p is None else np.asarray(p, dtype=float)
    a_eq = np.zeros((0, n)) if a_eq is None else np.atleast_2d(np.asarray(a_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    g = np.zeros((0, n)) if g is None else np.atleast_2d(np.asarray(g, dtype=float))
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float).reshape(-1)
    if x0 is None:
        x0 = _feasible_point(n, a_eq, b_eq, g, h)
    x = np.array(x0, dtype=float)
    if np.any(g @ x - h < -1e-9) or np.any(np.abs(a_eq @ x - b_eq) > 1e-9):
        raise SolverError("qp_active_set: starting point is infeasible")

    qs = max(float(np.abs(q).max(initial=0.0)), float(np.abs(p).max(initial=0.0)), 1e-300)
    qn, pn = q / qs, p / qs
    e_norm = np.maximum(np.linalg.norm(a_eq, axis=1), 1e-300)
    g_norm = np.maximum(np.linalg.norm(g, axis=1), 1e-300)
    ae, be = a_eq / e_norm[:, None], b_eq / e_norm
    gn, hn = g / g_norm[:, None], h / g_norm
    m_eq, m_in = ae.shape[0], gn.shape[0]

    def independent(rows: list[int], extra: int) -> bool:
        mat = np.vstack([ae, gn[rows + [extra]]])
        return np.linalg.matrix_rank(mat, tol=1e-10) == mat.shape[0]

    work: list[int] = []
    for i in np.flatnonzero(np.abs(gn @ x - hn) <= 1e-12 * max(1.0, np.abs(x).max(initial=0.0))):
        if independent(work, int(i)):
            work.append(int(i))

    x_scale = max(np.abs(x).max(initial=0.0), 1e-300)
    stalled, perturbed, at_min = 0, False, False
    for it in range(1, max_iter + 1):
        if stalled > 3 * (n + m_in) and not perturbed:
            # loosen each row by a distinct tiny amount; x becomes strictly interior
            hn = hn - 1e-11 * x_scale * np.arange(1, m_in + 1) / max(m_in, 1)
            work = []
            perturbed, stalled = True, 0
        bland = stalled > 0
        aw = np.vstack([ae, gn[work]]) if work else ae
        k = aw.shape[0]
        kkt = np.block([[qn, -aw.T], [aw, np.zeros((k, k))]])
        rhs = np.concatenate([-(qn @ x + pn), np.zeros(k)])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        s, mult = sol[:n], sol[n:]
        blocked = -1
        step = 1.0
        # a full-rank square working set pins x to a vertex; after an unblocked
        # full step x already minimizes over the current working set
        if k >= n or at_min:
            s = np.zeros(n)
        elif np.abs(s).max(initial=0.0) > 1e-13 * x_scale:
            gs = gn @ s
            for i in range(m_in):
                if i in work or gs[i] >= -1e-14 * np.abs(s).max():
                    continue
                t = max((hn[i] - gn[i] @ x) / gs[i], 0.0)
                if t < step or (bland and t == step and blocked >= 0 and i < blocked):
                    step, blocked = t, i
            if blocked >= 0 and not independent(work, blocked):
                # dependent blocker means s is round-off; treat the step as null
                s = np.zeros(n)
        else:
            s = np.zeros(n)
        if not s.any():
            at_min = False
            if k >= n:
                mult = np.linalg.lstsq(aw.T, qn @ x + pn, rcond=None)[0]
            lam_w = mult[m_eq:]
            if lam_w.size == 0 or lam_w.min() >= -tol:
                nu = mult[:m_eq] / e_norm * qs
                lam_full = np.zeros(m_in)
                lam_full[work] = np.maximum(lam_w, 0.0)
                lam_full = lam_full / g_norm * qs
                res = kkt_residual(q, p, a_eq, b_eq, g, h, x, nu, lam_full)
                return QPResult(x, float(0.5 * x @ q @ x + p @ x), nu, lam_full, it, res)
            neg = np.flatnonzero(lam_w < -tol)
            drop = int(neg[np.argmin([work[j] for j in neg])]) if bland else int(np.argmin(lam_w))
            work.pop(drop)
            stalled += 1
            continue
        x = x + step * s
        stalled = stalled + 1 if step == 0.0 else 0
        if blocked >= 0:
            work.append(blocked)
        else:
            at_min = True
    raise SolverError("active-set iteration limit reached")


def _feasible_point(n, a_eq, b_eq, g, h) -> np.ndarray:
    """Phase-one point via the LP solver; ``x >= 0`` is assumed to be implied."""
    res = linprog_bounded(
        np.zeros(n), a_eq=a_eq, b_eq=b_eq, a_ub=-g, b_ub=-h, lo=np.zeros(n), hi=np.full(n, np.inf)
    )
    return res.x
