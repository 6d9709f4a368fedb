"""Numerical kernels for penalized linear fitting and fold scoring.

These functions are jitted with numba when it is available; otherwise the
same code objects run as plain Python (slow but identical results, since
nopython mode keeps IEEE float semantics and the loops are written in the
exact order the fallback executes them). The hot path is kfold_cv_mse,
which the sequential feature search calls thousands of times per fold.

Family codes: 0 = ols (minimum-norm least squares), 1 = ridge (closed
form on the 1/(2n) loss scale), 2 = coordinate descent for the l1/l2
composite penalty (lasso and elastic net).
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(f):
            return f

        return deco


FAMILY_OLS = 0
FAMILY_RIDGE = 1
FAMILY_CD = 2

_EPS = 2.220446049250313e-16  # float64 machine epsilon


@njit(cache=True)
def cd_solve(xs, yc, l1, l2, tol, max_sweeps, track):
    """Cyclic coordinate descent for the standardized composite objective.

        f(b) = (1/(2n)) ||yc - xs b||^2 + l1 ||b||_1 + (l2/2) ||b||^2

    Columns with zero norm are skipped and keep coefficient 0. Convergence:
    largest absolute coefficient change in a sweep < tol.

    Returns (beta, n_sweeps, converged, objective_history) where the history
    has one entry per completed sweep when track is true, else length 1.
    """
    n, p = xs.shape
    beta = np.zeros(p)
    r = yc.copy()
    col_nrm = np.empty(p)
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += xs[i, j] * xs[i, j]
        col_nrm[j] = s / n
    hist_len = max_sweeps if track else 1
    hist = np.zeros(hist_len)
    n_sweeps = 0
    converged = False
    for sweep in range(max_sweeps):
        max_delta = 0.0
        for j in range(p):
            cj = col_nrm[j]
            if cj == 0.0:
                continue
            bj = beta[j]
            rho = 0.0
            for i in range(n):
                rho += xs[i, j] * r[i]
            rho = rho / n + cj * bj
            if rho > l1:
                bnew = (rho - l1) / (cj + l2)
            elif rho < -l1:
                bnew = (rho + l1) / (cj + l2)
            else:
                bnew = 0.0
            d = bnew - bj
            if d != 0.0:
                for i in range(n):
                    r[i] -= d * xs[i, j]
                beta[j] = bnew
                ad = abs(d)
                if ad > max_delta:
                    max_delta = ad
        n_sweeps = sweep + 1
        if track:
            sse = 0.0
            for i in range(n):
                sse += r[i] * r[i]
            pen = 0.0
            for j in range(p):
                pen += l1 * abs(beta[j]) + 0.5 * l2 * beta[j] * beta[j]
            hist[sweep] = 0.5 * sse / n + pen
        if max_delta < tol:
            converged = True
            break
    return beta, n_sweeps, converged, hist[:n_sweeps] if track else hist


@njit(cache=True)
def ols_minnorm(xs, yc):
    """Minimum-norm least squares via SVD with an lstsq-style cutoff."""
    n, p = xs.shape
    u, s, vt = np.linalg.svd(xs, full_matrices=False)
    beta = np.zeros(p)
    if s.size == 0:
        return beta
    cut = s[0] * max(n, p) * _EPS
    for k in range(s.size):
        if s[k] > cut:
            c = 0.0
            for i in range(n):
                c += u[i, k] * yc[i]
            c /= s[k]
            for j in range(p):
                beta[j] += vt[k, j] * c
    return beta


@njit(cache=True)
def ridge_solve(xs, yc, alpha):
    """Closed-form ridge on the 1/(2n) loss scale: (X'X/n + aI) b = X'y/n."""
    n, p = xs.shape
    xt = np.ascontiguousarray(xs.T)
    g = np.dot(xt, xs) / n
    for j in range(p):
        g[j, j] += alpha
    q = np.dot(xt, yc) / n
    return np.linalg.solve(g, q)


@njit(cache=True, fastmath=True)
def _sym_solve(a, b):
    """Solve a small symmetric positive (semi)definite system in place.

    A hand-rolled Cholesky factorization covers the ordinary case without
    LAPACK call overhead, which dominates at these sizes. A negligible or
    negative pivot means the system is close to singular, and the solve
    falls back to SVD least squares with an lstsq-style cutoff. Two rounds
    of iterative refinement against the original matrix keep the residual
    near machine precision on either path.
    """
    na = a.shape[0]
    x = np.zeros(na)
    if na == 0:
        return x
    dmax = 0.0
    for i in range(na):
        if a[i, i] > dmax:
            dmax = a[i, i]
    # Pivots shrink with the condition number, not with eps, so the
    # threshold is far above the SVD cutoff; refinement absorbs the
    # accuracy loss of the conditions this still lets through.
    piv_tol = dmax * 1e-12
    ok = dmax > 0.0
    ch = np.empty((na, na))
    if ok:
        for i in range(na):
            for j in range(i + 1):
                acc = a[i, j]
                for k in range(j):
                    acc -= ch[i, k] * ch[j, k]
                if i == j:
                    if acc <= piv_tol:
                        ok = False
                        break
                    ch[i, i] = np.sqrt(acc)
                else:
                    ch[i, j] = acc / ch[j, j]
            if not ok:
                break
    if ok:
        r = b.copy()
        d = np.empty(na)
        for _ in range(2):
            for i in range(na):
                acc = r[i]
                for k in range(i):
                    acc -= ch[i, k] * d[k]
                d[i] = acc / ch[i, i]
            for i in range(na - 1, -1, -1):
                acc = d[i]
                for k in range(i + 1, na):
                    acc -= ch[k, i] * d[k]
                d[i] = acc / ch[i, i]
                x[i] += d[i]
            for i in range(na):
                acc = b[i]
                for k in range(na):
                    acc -= a[i, k] * x[k]
                r[i] = acc
        return x
    u, s, vt = np.linalg.svd(a)
    if s.size == 0:
        return x
    cut = s[0] * na * _EPS
    r = b.copy()
    for _ in range(2):
        for k in range(s.size):
            if s[k] > cut:
                c = 0.0
                for i in range(na):
                    c += u[i, k] * r[i]
                c /= s[k]
                for i in range(na):
                    x[i] += vt[k, i] * c
        for i in range(na):
            acc = b[i]
            for j in range(na):
                acc -= a[i, j] * x[j]
            r[i] = acc
    return x


@njit(cache=True, fastmath=True)
def _polish_local(g, q, beta, sv, skip, l1, l2):
    """Exact active-set solve attempt from the current iterate.

    Coordinate descent converges slowly when active columns are strongly
    correlated on a fold's few training rows, but the minimizer satisfies
    a linear stationarity system on its active set. Starting from the
    iterate's nonzero coordinates, this solves that system, drops
    coordinates whose solved sign flips, grows the set by the worst
    subgradient violator, and accepts only a solution that verifies the
    full KKT conditions. On success beta and sv are overwritten with the
    exact minimizer and True is returned, otherwise nothing changes and
    the caller's sweeps continue. g and q are the subset Gram block and
    moment vector in local coordinates; sv must hold g @ beta.
    """
    s = beta.size
    cap = 64
    idx = np.empty(cap, np.int64)
    sg = np.empty(cap)
    mem = np.zeros(s, np.uint8)
    na = 0
    for j in range(s):
        if j != skip and beta[j] != 0.0:
            if na == cap:
                return False
            idx[na] = j
            sg[na] = 1.0 if beta[j] > 0.0 else -1.0
            mem[j] = 1
            na += 1
    if na == 0:
        return False
    slack = 1e-8 * (1.0 + l1)
    bnew = np.zeros(s)
    svn = np.zeros(s)
    for _ in range(48):
        a = np.empty((na, na))
        b = np.empty(na)
        for ii in range(na):
            gi = g[idx[ii]]
            for jj in range(na):
                a[ii, jj] = gi[idx[jj]]
            a[ii, ii] += l2
            b[ii] = q[idx[ii]] - l1 * sg[ii]
        sol = _sym_solve(a, b)
        nkeep = 0
        for ii in range(na):
            if sol[ii] * sg[ii] >= 0.0:
                idx[nkeep] = idx[ii]
                sg[nkeep] = sg[ii]
                sol[nkeep] = sol[ii]
                nkeep += 1
            else:
                mem[idx[ii]] = 0
        if nkeep == 0:
            return False
        if nkeep < na:
            na = nkeep
            continue
        for j in range(s):
            bnew[j] = 0.0
            svn[j] = 0.0
        for ii in range(na):
            c = sol[ii]
            bnew[idx[ii]] = c
            if c != 0.0:
                row = g[idx[ii]]
                for j in range(s):
                    svn[j] += row[j] * c
        worst = -1
        wv = l1 + slack
        ok = True
        for j in range(s):
            if j == skip or g[j, j] == 0.0:
                continue
            r = q[j] - svn[j] - l2 * bnew[j]
            if bnew[j] > 0.0:
                if abs(r - l1) > slack:
                    ok = False
                    break
            elif bnew[j] < 0.0:
                if abs(r + l1) > slack:
                    ok = False
                    break
            elif mem[j] == 0:
                av = abs(r)
                if av > wv:
                    wv = av
                    worst = j
        if not ok:
            return False
        if worst < 0:
            for j in range(s):
                beta[j] = bnew[j]
                sv[j] = svn[j]
            return True
        if na == cap:
            return False
        r = q[worst] - svn[worst]
        idx[na] = worst
        sg[na] = 1.0 if r > 0.0 else -1.0
        mem[worst] = 1
        na += 1
    return False


# Pass count at which the first exact active-set solve is attempted.
# Strongly correlated columns can stretch coordinate descent into
# thousands of passes, so after a few passes have identified a starting
# set the solve takes over; failed attempts back off geometrically.
_POLISH_FIRST = 4


@njit(cache=True)
def fold_prepare(x, y, fold_ids, n_folds):
    """Per-fold standardized train/test blocks, computed once per search.

    Splitting and standardizing dominate the cost of scoring one candidate
    subset, and a sequential search scores thousands of subsets against the
    same folds. This precomputes, for every fold: the standardized training
    columns (population std over the fold's training rows, zero variance
    mapped to scale 1), the centered training target, the test columns in
    the same standardized coordinates, the per-column mean square norms the
    coordinate-descent updates need, and the Gram matrix X'X/n plus X'y/n
    that let a subset fit run in covariance form (sweep cost independent of
    the row count). Matrices are stored transposed (column, row) so a
    column walk is contiguous.

    Returns (xtr_t, ytr_c, n_tr, xte_t, yte, n_te, ymean, col_nrm, y_const,
    valid, base_mse, gram, xy) where base_mse is the mean-predictor test
    MSE used for degenerate (constant target) folds.
    """
    n, p = x.shape
    n_te = np.zeros(n_folds, np.int64)
    for i in range(n):
        f = fold_ids[i]
        if 0 <= f < n_folds:
            n_te[f] += 1
    n_tr = np.empty(n_folds, np.int64)
    max_tr = 1
    max_te = 1
    for f in range(n_folds):
        n_tr[f] = n - n_te[f]
        if n_tr[f] > max_tr:
            max_tr = n_tr[f]
        if n_te[f] > max_te:
            max_te = n_te[f]
    xtr_t = np.zeros((n_folds, p, max_tr))
    ytr_c = np.zeros((n_folds, max_tr))
    xte_t = np.zeros((n_folds, p, max_te))
    yte = np.zeros((n_folds, max_te))
    ymean = np.zeros(n_folds)
    col_nrm = np.zeros((n_folds, p))
    y_const = np.zeros(n_folds, np.uint8)
    valid = np.zeros(n_folds, np.uint8)
    base_mse = np.zeros(n_folds)
    gram = np.zeros((n_folds, p, p))
    xy = np.zeros((n_folds, p))
    for f in range(n_folds):
        if n_te[f] == 0 or n_tr[f] == 0:
            continue
        valid[f] = 1
        a = 0
        b = 0
        for i in range(n):
            if fold_ids[i] == f:
                for j in range(p):
                    xte_t[f, j, b] = x[i, j]
                yte[f, b] = y[i]
                b += 1
            else:
                for j in range(p):
                    xtr_t[f, j, a] = x[i, j]
                ytr_c[f, a] = y[i]
                a += 1
        nt = n_tr[f]
        m = 0.0
        for i in range(nt):
            m += ytr_c[f, i]
        m /= nt
        ymean[f] = m
        yvar = 0.0
        for i in range(nt):
            ytr_c[f, i] -= m
            yvar += ytr_c[f, i] * ytr_c[f, i]
        sse = 0.0
        for i in range(n_te[f]):
            d = yte[f, i] - m
            sse += d * d
        base_mse[f] = sse / n_te[f]
        if yvar == 0.0:
            y_const[f] = 1
            continue
        for j in range(p):
            s = 0.0
            for i in range(nt):
                s += xtr_t[f, j, i]
            mu = s / nt
            v = 0.0
            for i in range(nt):
                d = xtr_t[f, j, i] - mu
                v += d * d
            v /= nt
            sd = np.sqrt(v) if v > 0.0 else 1.0
            for i in range(nt):
                xtr_t[f, j, i] = (xtr_t[f, j, i] - mu) / sd
            for i in range(n_te[f]):
                xte_t[f, j, i] = (xte_t[f, j, i] - mu) / sd
            c = 0.0
            for i in range(nt):
                c += xtr_t[f, j, i] * xtr_t[f, j, i]
            col_nrm[f, j] = c / nt
        # Padding columns are zero, so the dot over max_tr equals the dot
        # over the fold's own rows.
        gram[f] = np.dot(xtr_t[f], xtr_t[f].T) / nt
        xy[f] = np.dot(xtr_t[f], ytr_c[f]) / nt
    return (
        xtr_t,
        ytr_c,
        n_tr,
        xte_t,
        yte,
        n_te,
        ymean,
        col_nrm,
        y_const,
        valid,
        base_mse,
        gram,
        xy,
    )


@njit(cache=True, fastmath=True)
def _cd_from_warm(gram_f, xy_f, cols, warm_f, l1, l2, tol, max_sweeps):
    """Covariance-form coordinate descent on a column subset, warm-started.

    Works entirely from the fold's Gram matrix X'X/n and moment vector
    X'y/n, maintaining s_j = sum_l G[j, l] beta_l, so a sweep costs O(k)
    plus O(k) per changed coefficient instead of O(k * n). warm_f holds
    the parent subset's coefficients in full-column coordinates; the
    candidate differs from the parent by one column, so only a few
    coordinates move. Between full sweeps the loop revisits only
    currently-nonzero coordinates; the convergence test (largest
    coefficient change below tol) is always taken on a full sweep, so the
    fixed point is the one an all-coordinate cyclic scan reaches. Passes
    crawling through the geometric tail trigger an exact active-set solve
    whose success ends the call early with the verified minimizer.
    Zero-variance columns have a zero Gram diagonal and keep coefficient 0.
    """
    k = cols.size
    beta = np.empty(k)
    s = np.zeros(k)
    for jj in range(k):
        c = cols[jj]
        beta[jj] = warm_f[c] if gram_f[c, c] > 0.0 else 0.0
    for mm in range(k):
        bm = beta[mm]
        if bm != 0.0:
            grow = gram_f[cols[mm]]
            for jj in range(k):
                s[jj] += grow[cols[jj]] * bm
    gl = np.empty((0, 0))
    ql = np.empty(0)
    have_local = False
    next_polish = _POLISH_FIRST
    n_sweeps = 0
    converged = False
    while n_sweeps < max_sweeps:
        max_delta = 0.0
        for jj in range(k):
            c = cols[jj]
            cj = gram_f[c, c]
            if cj == 0.0:
                continue
            bj = beta[jj]
            rho = xy_f[c] - s[jj] + cj * bj
            if rho > l1:
                bnew = (rho - l1) / (cj + l2)
            elif rho < -l1:
                bnew = (rho + l1) / (cj + l2)
            else:
                bnew = 0.0
            d = bnew - bj
            if d != 0.0:
                grow = gram_f[c]
                for ll in range(k):
                    s[ll] += grow[cols[ll]] * d
                beta[jj] = bnew
                ad = abs(d)
                if ad > max_delta:
                    max_delta = ad
        n_sweeps += 1
        if max_delta < tol:
            converged = True
            break
        polished = False
        while n_sweeps < max_sweeps:
            max_delta = 0.0
            for jj in range(k):
                if beta[jj] == 0.0:
                    continue
                c = cols[jj]
                cj = gram_f[c, c]
                bj = beta[jj]
                rho = xy_f[c] - s[jj] + cj * bj
                if rho > l1:
                    bnew = (rho - l1) / (cj + l2)
                elif rho < -l1:
                    bnew = (rho + l1) / (cj + l2)
                else:
                    bnew = 0.0
                d = bnew - bj
                if d != 0.0:
                    grow = gram_f[c]
                    for ll in range(k):
                        s[ll] += grow[cols[ll]] * d
                    beta[jj] = bnew
                    ad = abs(d)
                    if ad > max_delta:
                        max_delta = ad
            n_sweeps += 1
            if max_delta < tol:
                break
            if n_sweeps >= next_polish:
                if not have_local:
                    gl = np.empty((k, k))
                    ql = np.empty(k)
                    for ii in range(k):
                        gi = gram_f[cols[ii]]
                        for jj in range(k):
                            gl[ii, jj] = gi[cols[jj]]
                        ql[ii] = xy_f[cols[ii]]
                    have_local = True
                if _polish_local(gl, ql, beta, s, -1, l1, l2):
                    polished = True
                    break
                next_polish = n_sweeps * 2
        if polished:
            converged = True
            break
    return beta, n_sweeps, converged


@njit(cache=True, fastmath=True)
def batch_fold_scores(
    xtr_t,
    ytr_c,
    n_tr,
    xte_t,
    yte,
    n_te,
    ymean,
    col_nrm,
    y_const,
    valid,
    base_mse,
    gram,
    xy,
    cand,
    warm,
    family,
    p1,
    p2,
    tol,
    max_sweeps,
    best_init,
):
    """Mean per-fold held-out MSE for every candidate subset in one call.

    cand is (n_candidates, subset_size) of column indices; warm is
    (n_folds, n_columns) of parent coefficients used to start the
    coordinate descent (ignored by the closed-form families). Scoring
    matches kfold_cv_mse fold for fold: constant-target folds fall back to
    the mean predictor and are counted as degenerate.

    A candidate whose running MSE sum already exceeds the best mean seen
    so far (seeded by best_init) cannot end up as the batch minimum, so
    its remaining folds are skipped; such a candidate reports an infinite
    score and a zero flag in the full mask. Degenerate counts are what a
    complete evaluation would report either way.

    Returns (scores, degenerate_counts, fully_scored), one entry each per
    candidate.
    """
    n_cand, k = cand.shape
    n_folds = n_tr.shape[0]
    scores = np.empty(n_cand)
    degen = np.zeros(n_cand, np.int64)
    full = np.zeros(n_cand, np.uint8)
    n_scored = 0
    degen_const = 0
    for f in range(n_folds):
        if valid[f] == 1:
            n_scored += 1
            if y_const[f] == 1:
                degen_const += 1
    best = best_init
    for ci in range(n_cand):
        cols = cand[ci]
        degen[ci] = degen_const
        mse_sum = 0.0
        aborted = False
        for f in range(n_folds):
            if valid[f] == 0:
                continue
            if y_const[f] == 1 or k == 0:
                mse_sum += base_mse[f]
            else:
                nt = n_tr[f]
                if family == FAMILY_CD:
                    beta, _, _ = _cd_from_warm(
                        gram[f], xy[f], cols, warm[f], p1, p2, tol, max_sweeps
                    )
                elif family == FAMILY_RIDGE:
                    a = np.empty((k, k))
                    b = np.empty(k)
                    for jj in range(k):
                        grow = gram[f, cols[jj]]
                        for ll in range(k):
                            a[jj, ll] = grow[cols[ll]]
                        a[jj, jj] += p2
                        b[jj] = xy[f, cols[jj]]
                    beta = np.linalg.solve(a, b)
                else:
                    xs = np.empty((nt, k))
                    yc = np.empty(nt)
                    for jj in range(k):
                        c = cols[jj]
                        for i in range(nt):
                            xs[i, jj] = xtr_t[f, c, i]
                    for i in range(nt):
                        yc[i] = ytr_c[f, i]
                    beta = ols_minnorm(xs, yc)
                sse = 0.0
                m = n_te[f]
                for i in range(m):
                    pred = ymean[f]
                    for jj in range(k):
                        pred += beta[jj] * xte_t[f, cols[jj], i]
                    d = yte[f, i] - pred
                    sse += d * d
                mse_sum += sse / m
            if mse_sum > best * n_scored:
                aborted = True
                break
        if aborted:
            scores[ci] = np.inf
        else:
            sc = mse_sum / n_scored
            scores[ci] = sc
            full[ci] = 1
            if sc < best:
                best = sc
    return scores, degen, full


@njit(cache=True, fastmath=True)
def _cd_local(g, q, beta, sv, skip, l1, l2, tol, max_sweeps):
    """Coordinate descent in batch-local coordinates, in place.

    g is the parent subset's Gram block (contiguous), q the matching X'y/n,
    beta the start point, and sv must hold g @ beta on entry. Coordinate
    `skip` is excluded (pass -1 to use all); callers zero its beta and fold
    that change into sv beforehand. Same sweep structure and convergence
    rule as _cd_from_warm.
    """
    s = beta.size
    next_polish = _POLISH_FIRST
    n_sweeps = 0
    while n_sweeps < max_sweeps:
        max_delta = 0.0
        for j in range(s):
            if j == skip:
                continue
            cj = g[j, j]
            if cj == 0.0:
                continue
            bj = beta[j]
            rho = q[j] - sv[j] + cj * bj
            if rho > l1:
                bnew = (rho - l1) / (cj + l2)
            elif rho < -l1:
                bnew = (rho + l1) / (cj + l2)
            else:
                bnew = 0.0
            d = bnew - bj
            if d != 0.0:
                row = g[j]
                for ll in range(s):
                    sv[ll] += row[ll] * d
                beta[j] = bnew
                ad = abs(d)
                if ad > max_delta:
                    max_delta = ad
        n_sweeps += 1
        if max_delta < tol:
            return
        while n_sweeps < max_sweeps:
            max_delta = 0.0
            for j in range(s):
                if beta[j] == 0.0:
                    continue
                cj = g[j, j]
                bj = beta[j]
                rho = q[j] - sv[j] + cj * bj
                if rho > l1:
                    bnew = (rho - l1) / (cj + l2)
                elif rho < -l1:
                    bnew = (rho + l1) / (cj + l2)
                else:
                    bnew = 0.0
                d = bnew - bj
                if d != 0.0:
                    row = g[j]
                    for ll in range(s):
                        sv[ll] += row[ll] * d
                    beta[j] = bnew
                    ad = abs(d)
                    if ad > max_delta:
                        max_delta = ad
            n_sweeps += 1
            if max_delta < tol:
                break
            if n_sweeps >= next_polish:
                if _polish_local(g, q, beta, sv, skip, l1, l2):
                    return
                next_polish = n_sweeps * 2


@njit(cache=True, fastmath=True)
def _cd_local_plus(g, q, ge, gee, qe, beta, sv, se_init, l1, l2, tol, max_sweeps):
    """Like _cd_local but with one extra column appended after the parent.

    ge holds the extra column's Gram row against the parent columns, gee
    its diagonal entry, qe its X'y/n moment, and se_init must equal
    ge @ beta on entry. The extra coefficient starts at zero and is updated
    last in each sweep. Returns the extra coefficient; beta is updated in
    place.
    """
    s = beta.size
    se = se_init
    be = 0.0
    next_polish = _POLISH_FIRST
    n_sweeps = 0
    while n_sweeps < max_sweeps:
        max_delta = 0.0
        for j in range(s):
            cj = g[j, j]
            if cj == 0.0:
                continue
            bj = beta[j]
            rho = q[j] - (sv[j] + ge[j] * be) + cj * bj
            if rho > l1:
                bnew = (rho - l1) / (cj + l2)
            elif rho < -l1:
                bnew = (rho + l1) / (cj + l2)
            else:
                bnew = 0.0
            d = bnew - bj
            if d != 0.0:
                row = g[j]
                for ll in range(s):
                    sv[ll] += row[ll] * d
                se += ge[j] * d
                beta[j] = bnew
                ad = abs(d)
                if ad > max_delta:
                    max_delta = ad
        if gee > 0.0:
            rho = qe - se
            if rho > l1:
                bnew = (rho - l1) / (gee + l2)
            elif rho < -l1:
                bnew = (rho + l1) / (gee + l2)
            else:
                bnew = 0.0
            d = bnew - be
            if d != 0.0:
                for ll in range(s):
                    sv[ll] += ge[ll] * d
                be = bnew
                ad = abs(d)
                if ad > max_delta:
                    max_delta = ad
        n_sweeps += 1
        if max_delta < tol:
            return be
        while n_sweeps < max_sweeps:
            max_delta = 0.0
            for j in range(s):
                if beta[j] == 0.0:
                    continue
                cj = g[j, j]
                bj = beta[j]
                rho = q[j] - (sv[j] + ge[j] * be) + cj * bj
                if rho > l1:
                    bnew = (rho - l1) / (cj + l2)
                elif rho < -l1:
                    bnew = (rho + l1) / (cj + l2)
                else:
                    bnew = 0.0
                d = bnew - bj
                if d != 0.0:
                    row = g[j]
                    for ll in range(s):
                        sv[ll] += row[ll] * d
                    se += ge[j] * d
                    beta[j] = bnew
                    ad = abs(d)
                    if ad > max_delta:
                        max_delta = ad
            if be != 0.0 and gee > 0.0:
                rho = qe - se
                if rho > l1:
                    bnew = (rho - l1) / (gee + l2)
                elif rho < -l1:
                    bnew = (rho + l1) / (gee + l2)
                else:
                    bnew = 0.0
                d = bnew - be
                if d != 0.0:
                    for ll in range(s):
                        sv[ll] += ge[ll] * d
                    be = bnew
                    ad = abs(d)
                    if ad > max_delta:
                        max_delta = ad
            n_sweeps += 1
            if max_delta < tol:
                break
            if n_sweeps >= next_polish:
                # exact solve on the combined parent+extra system
                gg = np.empty((s + 1, s + 1))
                qq = np.empty(s + 1)
                bb = np.empty(s + 1)
                ss = np.empty(s + 1)
                for i in range(s):
                    row = g[i]
                    for j in range(s):
                        gg[i, j] = row[j]
                    gg[i, s] = ge[i]
                    gg[s, i] = ge[i]
                    qq[i] = q[i]
                    bb[i] = beta[i]
                    ss[i] = sv[i] + ge[i] * be
                gg[s, s] = gee
                qq[s] = qe
                bb[s] = be
                ss[s] = se + gee * be
                if _polish_local(gg, qq, bb, ss, -1, l1, l2):
                    be = bb[s]
                    for i in range(s):
                        beta[i] = bb[i]
                        sv[i] = ss[i] - ge[i] * be
                    return be
                next_polish = n_sweeps * 2
    return be


@njit(cache=True, fastmath=True)
def _parent_prepare(gram, xy, xte_t, yte, n_te, ymean, y_const, valid, base_mse, par, warm):
    """Shared per-fold state for a batch of one-column edits of one parent.

    Gathers the parent subset's Gram block into contiguous local
    coordinates, restores the parent coefficients from warm, accumulates
    sv = G beta, and scores the parent itself on each fold's test rows.

    Returns (gsub, xys, bpar, spar, pmse, n_scored, degen_const).
    """
    n_folds = gram.shape[0]
    s = par.size
    gsub = np.zeros((n_folds, s, s))
    xys = np.zeros((n_folds, s))
    bpar = np.zeros((n_folds, s))
    spar = np.zeros((n_folds, s))
    pmse = np.zeros(n_folds)
    n_scored = 0
    degen_const = 0
    for f in range(n_folds):
        if valid[f] == 0:
            continue
        n_scored += 1
        if y_const[f] == 1:
            degen_const += 1
            pmse[f] = base_mse[f]
            continue
        for a in range(s):
            ga = gram[f, par[a]]
            row = gsub[f, a]
            for b in range(s):
                row[b] = ga[par[b]]
            xys[f, a] = xy[f, par[a]]
            bpar[f, a] = warm[f, par[a]] if ga[par[a]] > 0.0 else 0.0
        for a in range(s):
            ba = bpar[f, a]
            if ba != 0.0:
                row = gsub[f, a]
                for b in range(s):
                    spar[f, b] += row[b] * ba
        sse = 0.0
        m = n_te[f]
        for i in range(m):
            pred = ymean[f]
            for a in range(s):
                pred += bpar[f, a] * xte_t[f, par[a], i]
            d = yte[f, i] - pred
            sse += d * d
        pmse[f] = sse / m
    return gsub, xys, bpar, spar, pmse, n_scored, degen_const


@njit(cache=True, fastmath=True)
def sfs_remove_scores(
    gram,
    xy,
    xte_t,
    yte,
    n_te,
    ymean,
    y_const,
    valid,
    base_mse,
    par,
    todo,
    warm,
    l1,
    l2,
    tol,
    max_sweeps,
    best_init,
):
    """Score parent-minus-one-column candidates (CD families only).

    todo lists local parent positions to drop, one candidate each. A fold
    where the dropped coefficient is already zero keeps the parent's
    solution exactly (removing an inactive column changes no optimality
    condition), so that fold reuses the parent's test MSE. Abandonment and
    returns match batch_fold_scores.
    """
    n_folds = gram.shape[0]
    s = par.size
    gsub, xys, bpar, spar, pmse, n_scored, degen_const = _parent_prepare(
        gram, xy, xte_t, yte, n_te, ymean, y_const, valid, base_mse, par, warm
    )
    n_todo = todo.size
    scores = np.empty(n_todo)
    degen = np.full(n_todo, degen_const, np.int64)
    full = np.zeros(n_todo, np.uint8)
    best = best_init
    beta = np.empty(s)
    sv = np.empty(s)
    for t in range(n_todo):
        i = todo[t]
        mse_sum = 0.0
        aborted = False
        for f in range(n_folds):
            if valid[f] == 0:
                continue
            if y_const[f] == 1:
                mse_sum += base_mse[f]
            elif bpar[f, i] == 0.0:
                mse_sum += pmse[f]
            else:
                for a in range(s):
                    beta[a] = bpar[f, a]
                    sv[a] = spar[f, a]
                d0 = -beta[i]
                row = gsub[f, i]
                for a in range(s):
                    sv[a] += row[a] * d0
                beta[i] = 0.0
                _cd_local(gsub[f], xys[f], beta, sv, i, l1, l2, tol, max_sweeps)
                sse = 0.0
                m = n_te[f]
                for ii in range(m):
                    pred = ymean[f]
                    for a in range(s):
                        pred += beta[a] * xte_t[f, par[a], ii]
                    d = yte[f, ii] - pred
                    sse += d * d
                mse_sum += sse / m
            if mse_sum > best * n_scored:
                aborted = True
                break
        if aborted:
            scores[t] = np.inf
        else:
            sc = mse_sum / n_scored
            scores[t] = sc
            full[t] = 1
            if sc < best:
                best = sc
    return scores, degen, full


@njit(cache=True, fastmath=True)
def sfs_add_scores(
    gram,
    xy,
    xte_t,
    yte,
    n_te,
    ymean,
    y_const,
    valid,
    base_mse,
    par,
    extras,
    warm,
    l1,
    l2,
    tol,
    max_sweeps,
    best_init,
):
    """Score parent-plus-one-column candidates (CD families only).

    extras lists the global column to append, one candidate each. A fold
    where the extra column's subgradient condition already holds at the
    parent solution (|X_e' r| / n <= l1) keeps that solution exactly with
    a zero extra coefficient, so the fold reuses the parent's test MSE.
    Abandonment and returns match batch_fold_scores.
    """
    n_folds = gram.shape[0]
    s = par.size
    gsub, xys, bpar, spar, pmse, n_scored, degen_const = _parent_prepare(
        gram, xy, xte_t, yte, n_te, ymean, y_const, valid, base_mse, par, warm
    )
    n_ext = extras.size
    scores = np.empty(n_ext)
    degen = np.full(n_ext, degen_const, np.int64)
    full = np.zeros(n_ext, np.uint8)
    best = best_init
    beta = np.empty(s)
    sv = np.empty(s)
    ge = np.empty(s)
    for t in range(n_ext):
        e = extras[t]
        mse_sum = 0.0
        aborted = False
        for f in range(n_folds):
            if valid[f] == 0:
                continue
            if y_const[f] == 1:
                mse_sum += base_mse[f]
            else:
                grow = gram[f, e]
                se = 0.0
                for a in range(s):
                    ge[a] = grow[par[a]]
                    se += ge[a] * bpar[f, a]
                viol = xy[f, e] - se
                if grow[e] == 0.0 or (-l1 <= viol <= l1):
                    mse_sum += pmse[f]
                else:
                    for a in range(s):
                        beta[a] = bpar[f, a]
                        sv[a] = spar[f, a]
                    be = _cd_local_plus(
                        gsub[f],
                        xys[f],
                        ge,
                        grow[e],
                        xy[f, e],
                        beta,
                        sv,
                        se,
                        l1,
                        l2,
                        tol,
                        max_sweeps,
                    )
                    sse = 0.0
                    m = n_te[f]
                    for ii in range(m):
                        pred = ymean[f]
                        for a in range(s):
                            pred += beta[a] * xte_t[f, par[a], ii]
                        pred += be * xte_t[f, e, ii]
                        d = yte[f, ii] - pred
                        sse += d * d
                    mse_sum += sse / m
            if mse_sum > best * n_scored:
                aborted = True
                break
        if aborted:
            scores[t] = np.inf
        else:
            sc = mse_sum / n_scored
            scores[t] = sc
            full[t] = 1
            if sc < best:
                best = sc
    return scores, degen, full


@njit(cache=True, fastmath=True)
def refit_warm(gram, xy, y_const, valid, cols, warm, p1, p2, tol, max_sweeps):
    """Fit the chosen subset per fold and store it as the new parent."""
    n_folds = gram.shape[0]
    k = cols.size
    for f in range(n_folds):
        if valid[f] == 0 or y_const[f] == 1:
            for c in range(warm.shape[1]):
                warm[f, c] = 0.0
            continue
        beta, _, _ = _cd_from_warm(
            gram[f], xy[f], cols, warm[f], p1, p2, tol, max_sweeps
        )
        for c in range(warm.shape[1]):
            warm[f, c] = 0.0
        for jj in range(k):
            warm[f, cols[jj]] = beta[jj]


@njit(cache=True)
def kfold_cv_fold_mses(x, y, fold_ids, n_folds, cols, family, p1, p2, tol, max_sweeps):
    """Per-fold held-out MSEs of one feature subset under one model.

    Fold handling matches kfold_cv_mse exactly; this variant keeps the
    individual fold values so a caller can look at the spread behind the
    mean. Returns (mses, scored, degenerate) where scored marks folds that
    produced a value (nonempty train and test splits).
    """
    n = x.shape[0]
    k = cols.size
    mses = np.full(n_folds, np.nan)
    scored = np.zeros(n_folds, np.uint8)
    degenerate = 0
    for f in range(n_folds):
        n_te = 0
        for i in range(n):
            if fold_ids[i] == f:
                n_te += 1
        n_tr = n - n_te
        if n_te == 0 or n_tr == 0:
            continue
        xtr = np.empty((n_tr, k))
        ytr = np.empty(n_tr)
        xte = np.empty((n_te, k))
        yte = np.empty(n_te)
        a = 0
        b = 0
        for i in range(n):
            if fold_ids[i] == f:
                for j in range(k):
                    xte[b, j] = x[i, cols[j]]
                yte[b] = y[i]
                b += 1
            else:
                for j in range(k):
                    xtr[a, j] = x[i, cols[j]]
                ytr[a] = y[i]
                a += 1
        ymean = 0.0
        for i in range(n_tr):
            ymean += ytr[i]
        ymean /= n_tr
        yvar = 0.0
        for i in range(n_tr):
            d = ytr[i] - ymean
            yvar += d * d
        sse = 0.0
        if yvar == 0.0 or k == 0:
            if yvar == 0.0:
                degenerate += 1
            for i in range(n_te):
                d = yte[i] - ymean
                sse += d * d
        else:
            mu = np.empty(k)
            sd = np.empty(k)
            for j in range(k):
                s = 0.0
                for i in range(n_tr):
                    s += xtr[i, j]
                m = s / n_tr
                v = 0.0
                for i in range(n_tr):
                    d = xtr[i, j] - m
                    v += d * d
                v /= n_tr
                mu[j] = m
                sd[j] = np.sqrt(v) if v > 0.0 else 1.0
            xs = np.empty((n_tr, k))
            for j in range(k):
                for i in range(n_tr):
                    xs[i, j] = (xtr[i, j] - mu[j]) / sd[j]
            yc = np.empty(n_tr)
            for i in range(n_tr):
                yc[i] = ytr[i] - ymean
            if family == FAMILY_OLS:
                beta = ols_minnorm(xs, yc)
            elif family == FAMILY_RIDGE:
                beta = ridge_solve(xs, yc, p2)
            else:
                beta, _, _, _ = cd_solve(xs, yc, p1, p2, tol, max_sweeps, False)
            for i in range(n_te):
                pred = ymean
                for j in range(k):
                    pred += beta[j] * (xte[i, j] - mu[j]) / sd[j]
                d = yte[i] - pred
                sse += d * d
        mses[f] = sse / n_te
        scored[f] = 1
    return mses, scored, degenerate


@njit(cache=True)
def kfold_cv_mse(x, y, fold_ids, n_folds, cols, family, p1, p2, tol, max_sweeps):
    """Mean per-fold held-out MSE of one feature subset under one model.

    Each fold standardizes its own training columns (population std, zero
    variance mapped to scale 1) and centers its training target; a fold
    whose training target is constant falls back to the mean predictor and
    is counted in the second return value.

    Args:
        x: (n, P) full feature matrix.
        y: (n,) target.
        fold_ids: (n,) fold assignment.
        n_folds: number of folds.
        cols: int64 indices of the candidate subset's columns.
        family: FAMILY_OLS, FAMILY_RIDGE, or FAMILY_CD.
        p1, p2: l1 and l2 penalty weights (ridge uses p2 only).

    Returns:
        (mean fold MSE, number of degenerate folds).
    """
    n = x.shape[0]
    k = cols.size
    mse_sum = 0.0
    n_scored = 0
    degenerate = 0
    for f in range(n_folds):
        n_te = 0
        for i in range(n):
            if fold_ids[i] == f:
                n_te += 1
        n_tr = n - n_te
        if n_te == 0 or n_tr == 0:
            continue
        xtr = np.empty((n_tr, k))
        ytr = np.empty(n_tr)
        xte = np.empty((n_te, k))
        yte = np.empty(n_te)
        a = 0
        b = 0
        for i in range(n):
            if fold_ids[i] == f:
                for j in range(k):
                    xte[b, j] = x[i, cols[j]]
                yte[b] = y[i]
                b += 1
            else:
                for j in range(k):
                    xtr[a, j] = x[i, cols[j]]
                ytr[a] = y[i]
                a += 1
        ymean = 0.0
        for i in range(n_tr):
            ymean += ytr[i]
        ymean /= n_tr
        yvar = 0.0
        for i in range(n_tr):
            d = ytr[i] - ymean
            yvar += d * d
        sse = 0.0
        if yvar == 0.0 or k == 0:
            if yvar == 0.0:
                degenerate += 1
            for i in range(n_te):
                d = yte[i] - ymean
                sse += d * d
        else:
            mu = np.empty(k)
            sd = np.empty(k)
            for j in range(k):
                s = 0.0
                for i in range(n_tr):
                    s += xtr[i, j]
                m = s / n_tr
                v = 0.0
                for i in range(n_tr):
                    d = xtr[i, j] - m
                    v += d * d
                v /= n_tr
                mu[j] = m
                sd[j] = np.sqrt(v) if v > 0.0 else 1.0
            xs = np.empty((n_tr, k))
            for j in range(k):
                for i in range(n_tr):
                    xs[i, j] = (xtr[i, j] - mu[j]) / sd[j]
            yc = np.empty(n_tr)
            for i in range(n_tr):
                yc[i] = ytr[i] - ymean
            if family == FAMILY_OLS:
                beta = ols_minnorm(xs, yc)
            elif family == FAMILY_RIDGE:
                beta = ridge_solve(xs, yc, p2)
            else:
                beta, _, _, _ = cd_solve(xs, yc, p1, p2, tol, max_sweeps, False)
            for i in range(n_te):
                pred = ymean
                for j in range(k):
                    pred += beta[j] * (xte[i, j] - mu[j]) / sd[j]
                d = yte[i] - pred
                sse += d * d
        mse_sum += sse / n_te
        n_scored += 1
    return mse_sum / n_scored, degenerate
