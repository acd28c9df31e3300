"""Compiled inner loops shared by the solvers.

Three kernels live here:

* ``cd_gram``: cyclic coordinate descent for ``0.5 b'Gb - c'b + sum(lam*|b|)``.
* ``logistic_prox_newton``: l1-penalised logistic regression by proximal Newton.
* ``l1_box_simplex``: bounded dual simplex for ``min |theta|_1  s.t. l <= M theta <= u``.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def cd_gram(G, c, lam, beta, max_iter, tol):
    """Coordinate descent on the Gram form of an l1-penalised quadratic.

    ``beta`` is updated in place and also returned. Sweeps alternate between
    the full coordinate set and the current support; convergence is declared
    after a full sweep whose largest coordinate move is below ``tol``.
    """
    p = c.shape[0]
    grad = c.copy()
    for j in range(p):
        bj = beta[j]
        if bj != 0.0:
            for k in range(p):
                grad[k] -= G[k, j] * bj
    active_only = False
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        max_change = 0.0
        for j in range(p):
            old = beta[j]
            if active_only and old == 0.0:
                continue
            gjj = G[j, j]
            if gjj <= 0.0:
                continue
            new = _soft(grad[j] + gjj * old, lam[j]) / gjj
            if new != old:
                delta = new - old
                for k in range(p):
                    grad[k] -= G[k, j] * delta
                beta[j] = new
                if abs(delta) > max_change:
                    max_change = abs(delta)
        if max_change < tol:
            if active_only:
                active_only = False
            else:
                converged = True
                break
        else:
            active_only = True
    return beta, it, converged


@njit(cache=True)
def _log1pexp(u):
    if u > 0.0:
        return u + math.log1p(math.exp(-u))
    return math.log1p(math.exp(u))


@njit(cache=True)
def _sigmoid(u):
    if u >= 0.0:
        return 1.0 / (1.0 + math.exp(-u))
    e = math.exp(u)
    return e / (1.0 + e)


@njit(cache=True)
def _logistic_objective(eta, y, beta, lam):
    n = eta.shape[0]
    acc = 0.0
    for i in range(n):
        acc += _log1pexp(eta[i]) - y[i] * eta[i]
    pen = 0.0
    for j in range(beta.shape[0]):
        pen += lam[j] * abs(beta[j])
    return acc / n + pen


@njit(cache=True)
def logistic_prox_newton(X, y, lam, beta, max_newton, max_inner, tol):
    """Proximal Newton for the mean logistic loss plus ``sum(lam*|beta|)``.

    ``X`` should be Fortran-ordered so column access is contiguous. Each
    outer step minimises the local quadratic model by coordinate descent in
    residual form and then backtracks along the resulting direction.
    Returns ``(beta, newton_steps, converged)``.
    """
    n, p = X.shape
    beta = beta.copy()
    eta = np.zeros(n)
    for j in range(p):
        bj = beta[j]
        if bj != 0.0:
            for i in range(n):
                eta[i] += X[i, j] * bj
    obj = _logistic_objective(eta, y, beta, lam)
    w = np.empty(n)
    r = np.empty(n)
    grad = np.empty(p)
    curv = np.empty(p)
    u = np.empty(n)
    eta_new = np.empty(n)
    converged = False
    step = 0
    for step in range(1, max_newton + 1):
        for i in range(n):
            e = math.exp(-abs(eta[i]))
            w[i] = e / ((1.0 + e) * (1.0 + e))
            r[i] = _sigmoid(eta[i]) - y[i]
        for j in range(p):
            g = 0.0
            h = 0.0
            for i in range(n):
                xij = X[i, j]
                g += xij * r[i]
                h += w[i] * xij * xij
            grad[j] = g / n
            curv[j] = h / n
        b = beta.copy()
        u[:] = 0.0
        active_only = False
        for _ in range(max_inner):
            max_change = 0.0
            for j in range(p):
                old = b[j]
                if active_only and old == 0.0:
                    continue
                a = curv[j]
                if a <= 1e-300:
                    continue
                gj = 0.0
                for i in range(n):
                    gj += X[i, j] * w[i] * u[i]
                gj = grad[j] + gj / n
                new = _soft(a * old - gj, lam[j]) / a
                if new != old:
                    delta = new - old
                    for i in range(n):
                        u[i] += X[i, j] * delta
                    b[j] = new
                    if abs(delta) > max_change:
                        max_change = abs(delta)
            if max_change < tol * 0.1:
                if active_only:
                    active_only = False
                else:
                    break
            else:
                active_only = True
        # predicted decrease of the composite objective along d = b - beta
        decrease = 0.0
        dmax = 0.0
        for j in range(p):
            d = b[j] - beta[j]
            decrease += grad[j] * d + lam[j] * (abs(b[j]) - abs(beta[j]))
            if abs(d) > dmax:
                dmax = abs(d)
        if dmax < tol:
            converged = True
            break
        t = 1.0
        while True:
            for i in range(n):
                eta_new[i] = eta[i] + t * u[i]
            trial = beta + t * (b - beta)
            obj_new = _logistic_objective(eta_new, y, trial, lam)
            if obj_new <= obj + 1e-4 * t * decrease or t < 1e-10:
                break
            t *= 0.5
        beta = trial
        eta[:] = eta_new
        obj = obj_new
        if t * dmax < tol:
            converged = True
            break
    return beta, step, converged


@njit(cache=True)
def _refactor(M, trow, kidx, q, E):
    B = np.empty((q, q))
    for b in range(q):
        for a in range(q):
            B[b, a] = M[trow[b], kidx[a]]
    Binv = np.linalg.inv(B)
    for a in range(q):
        for b in range(q):
            E[a, b] = Binv[a, b]


@njit(cache=True)
def l1_box_simplex(M, lower, upper, max_iter, feas_tol, refactor_every):
    """Bounded dual simplex for ``min |theta|_1`` subject to ``lower <= M theta <= upper``.

    The start is the dual feasible point ``theta = 0`` and primal violations
    are removed one pivot at a time. The basis is a set of structural columns
    ``K`` (each with a sign) paired with the same number of tight rows ``T``; its inverse is
    carried in ``E`` through rank-one updates and refactorised periodically.

    Returns ``(theta, status, iterations, max_violation)`` where status is
    0 for optimal, 1 for infeasible and 2 for the iteration limit.
    """
    R, p = M.shape
    qmax = min(R, p)
    kidx = np.empty(qmax, np.int64)
    ksgn = np.empty(qmax)
    trow = np.empty(qmax, np.int64)
    tval = np.empty(qmax)
    tside = np.empty(qmax, np.int64)
    kpos = np.full(p, -1, np.int64)
    tight = np.zeros(R, np.bool_)
    E = np.zeros((qmax, qmax))
    thK = np.zeros(qmax)
    s = np.zeros(R)
    yT = np.zeros(qmax)
    rhoT = np.zeros(qmax)
    w = np.zeros(p)
    g = np.zeros(p)
    z = np.zeros(qmax)
    zr = np.zeros(qmax)
    q = 0
    updates = 0
    status = 2
    it = 0
    dtol = 1e-12
    ptol = 1e-9
    fresh = True
    while it < max_iter:
        # primal values of the basic solution
        for a in range(q):
            acc = 0.0
            for b in range(q):
                acc += E[a, b] * tval[b]
            thK[a] = acc
        s[:] = 0.0
        for a in range(q):
            col = kidx[a]
            v = thK[a]
            for i in range(R):
                s[i] += M[i, col] * v
        best = feas_tol
        lkind = -1
        lpos = -1
        ldir = 0
        for i in range(R):
            if tight[i]:
                continue
            v = lower[i] - s[i]
            if v > best:
                best = v
                lkind = 0
                lpos = i
                ldir = 1
            v = s[i] - upper[i]
            if v > best:
                best = v
                lkind = 0
                lpos = i
                ldir = -1
        for a in range(q):
            v = -ksgn[a] * thK[a]
            if v > best:
                best = v
                lkind = 1
                lpos = a
                ldir = 1
        if lkind < 0:
            if fresh:
                status = 0
                break
            # confirm on a freshly factorised basis before declaring optimality
            if q > 0:
                _refactor(M, trow, kidx, q, E)
            updates = 0
            fresh = True
            continue
        it += 1
        # dual values and reduced costs
        for b in range(q):
            acc = 0.0
            for a in range(q):
                acc += E[a, b] * ksgn[a]
            yT[b] = acc
        w[:] = 0.0
        for b in range(q):
            rr = trow[b]
            v = yT[b]
            for k in range(p):
                w[k] += M[rr, k] * v
        # pivot row
        if lkind == 1:
            sg = ksgn[lpos]
            for b in range(q):
                rhoT[b] = sg * E[lpos, b]
        else:
            for b in range(q):
                acc = 0.0
                for a in range(q):
                    acc += E[a, b] * M[lpos, kidx[a]]
                rhoT[b] = acc
        g[:] = 0.0
        for b in range(q):
            rr = trow[b]
            v = rhoT[b]
            for k in range(p):
                g[k] += M[rr, k] * v
        if lkind == 0:
            for k in range(p):
                g[k] -= M[lpos, k]
        # Harris ratio test, pass one. The sign twin of a basic column has a
        # zero pivot unless that column is the one leaving, so it is skipped.
        tmax = np.inf
        for k in range(p):
            pk = kpos[k]
            for sgi in range(2):
                sg = 1.0 if sgi == 0 else -1.0
                if pk >= 0 and (ksgn[pk] == sg or lkind == 0 or pk != lpos):
                    continue
                alpha = sg * g[k]
                if ldir * alpha < -ptol:
                    d = 1.0 - sg * w[k]
                    rt = (max(d, 0.0) + dtol) / abs(alpha)
                    if rt < tmax:
                        tmax = rt
        for b in range(q):
            alpha = -rhoT[b]
            if tside[b] == 0:
                if ldir * alpha < -ptol:
                    rt = (max(yT[b], 0.0) + dtol) / abs(alpha)
                    if rt < tmax:
                        tmax = rt
            else:
                if ldir * alpha > ptol:
                    rt = (max(-yT[b], 0.0) + dtol) / abs(alpha)
                    if rt < tmax:
                        tmax = rt
        if tmax == np.inf:
            if fresh:
                status = 1
                break
            _refactor(M, trow, kidx, q, E)
            updates = 0
            fresh = True
            continue
        # pass two: largest pivot among candidates within the relaxed ratio
        ekind = -1
        epos = -1
        esg = 0.0
        bestalpha = 0.0
        for k in range(p):
            pk = kpos[k]
            for sgi in range(2):
                sg = 1.0 if sgi == 0 else -1.0
                if pk >= 0 and (ksgn[pk] == sg or lkind == 0 or pk != lpos):
                    continue
                alpha = sg * g[k]
                if ldir * alpha < -ptol:
                    d = 1.0 - sg * w[k]
                    if max(d, 0.0) / abs(alpha) <= tmax and abs(alpha) > bestalpha:
                        bestalpha = abs(alpha)
                        ekind = 0
                        epos = k
                        esg = sg
        for b in range(q):
            alpha = -rhoT[b]
            ok = False
            if tside[b] == 0:
                if ldir * alpha < -ptol and max(yT[b], 0.0) / abs(alpha) <= tmax:
                    ok = True
            else:
                if ldir * alpha > ptol and max(-yT[b], 0.0) / abs(alpha) <= tmax:
                    ok = True
            if ok and abs(alpha) > bestalpha:
                bestalpha = abs(alpha)
                ekind = 1
                epos = b
        # basis change with rank-one update of E = inv(M[T, K])
        if lkind == 1 and ekind == 0:
            a0 = lpos
            for a in range(q):
                acc = 0.0
                for b in range(q):
                    acc += E[a, b] * M[trow[b], epos]
                z[a] = acc
            piv = z[a0]
            z[a0] -= 1.0
            for b in range(q):
                zr[b] = E[a0, b]
            for a in range(q):
                f = z[a] / piv
                if f != 0.0:
                    for b in range(q):
                        E[a, b] -= f * zr[b]
            kpos[kidx[a0]] = -1
            kidx[a0] = epos
            ksgn[a0] = esg
            kpos[epos] = a0
        elif lkind == 1:
            a0 = lpos
            b0 = epos
            piv = E[a0, b0]
            for a in range(q):
                z[a] = E[a, b0]
            for b in range(q):
                zr[b] = E[a0, b]
            for a in range(q):
                f = z[a] / piv
                if f != 0.0:
                    for b in range(q):
                        E[a, b] -= f * zr[b]
            # drop row a0 and column b0
            for a in range(a0, q - 1):
                for b in range(q):
                    E[a, b] = E[a + 1, b]
            for b in range(b0, q - 1):
                for a in range(q - 1):
                    E[a, b] = E[a, b + 1]
            kpos[kidx[a0]] = -1
            tight[trow[b0]] = False
            for a in range(a0, q - 1):
                kidx[a] = kidx[a + 1]
                ksgn[a] = ksgn[a + 1]
                kpos[kidx[a]] = a
            for b in range(b0, q - 1):
                trow[b] = trow[b + 1]
                tval[b] = tval[b + 1]
                tside[b] = tside[b + 1]
            q -= 1
        elif ekind == 0:
            i0 = lpos
            k0 = epos
            # z = E M[T, k0], zr = M[i0, K] E
            for a in range(q):
                acc = 0.0
                for b in range(q):
                    acc += E[a, b] * M[trow[b], k0]
                z[a] = acc
            for b in range(q):
                acc = 0.0
                for a in range(q):
                    acc += M[i0, kidx[a]] * E[a, b]
                zr[b] = acc
            sch = M[i0, k0]
            for a in range(q):
                sch -= M[i0, kidx[a]] * z[a]
            for a in range(q):
                f = z[a] / sch
                for b in range(q):
                    E[a, b] += f * zr[b]
                E[a, q] = -f
            for b in range(q):
                E[q, b] = -zr[b] / sch
            E[q, q] = 1.0 / sch
            kidx[q] = k0
            ksgn[q] = esg
            kpos[k0] = q
            trow[q] = i0
            tval[q] = lower[i0] if ldir == 1 else upper[i0]
            tside[q] = 0 if ldir == 1 else 1
            tight[i0] = True
            q += 1
        else:
            i0 = lpos
            b0 = epos
            for b in range(q):
                acc = 0.0
                for a in range(q):
                    acc += M[i0, kidx[a]] * E[a, b]
                zr[b] = acc
            piv = zr[b0]
            zr[b0] -= 1.0
            for a in range(q):
                z[a] = E[a, b0]
            for a in range(q):
                f = z[a] / piv
                if f != 0.0:
                    for b in range(q):
                        E[a, b] -= f * zr[b]
            tight[trow[b0]] = False
            trow[b0] = i0
            tval[b0] = lower[i0] if ldir == 1 else upper[i0]
            tside[b0] = 0 if ldir == 1 else 1
            tight[i0] = True
        updates += 1
        fresh = False
        if updates >= refactor_every and q > 0:
            _refactor(M, trow, kidx, q, E)
            updates = 0
            fresh = True
    theta = np.zeros(p)
    for a in range(q):
        acc = 0.0
        for b in range(q):
            acc += E[a, b] * tval[b]
        theta[kidx[a]] = acc
    viol = 0.0
    for i in range(R):
        acc = 0.0
        for k in range(p):
            acc += M[i, k] * theta[k]
        v = max(lower[i] - acc, acc - upper[i])
        if v > viol:
            viol = v
    return theta, status, it, viol
