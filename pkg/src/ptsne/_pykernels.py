"""Pure numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
Reductions avoid BLAS so that results do not depend on the BLAS thread
count.
"""
import numpy as np

# beta search status codes
OK = 0
DEGENERATE = 1
NOT_CONVERGED = 2

# log-precision bracket, in natural-log units of beta
LOG_BETA_LO = -30.0 * np.log(2.0)
LOG_BETA_HI = 30.0 * np.log(2.0)
MAX_EXPANSIONS = 64
# internal stopping tolerance; the caller's tol only decides success
STOP_TOL = 1e-13


def sqdist(X):
    """Squared Euclidean distances by explicit differences (exactly symmetric)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, m = X.shape
    D = np.zeros((n, n))
    for k in range(m):
        diff = X[:, k, None] - X[None, :, k]
        D += diff * diff
    return D


def tsne_gradient(P, Y):
    P = np.asarray(P, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    diff = Y[:, None, :] - Y[None, :, :]
    W = 1.0 / (1.0 + np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(W, 0.0)
    Z = W.sum()
    M = (P - W / Z) * W
    return 4.0 * np.einsum("ij,ijk->ik", M, diff)


def cross_entropy(P, Y):
    """-sum_{i != j} p_ij ln q_ij under Cauchy similarities."""
    P = np.asarray(P, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    diff = Y[:, None, :] - Y[None, :, :]
    L = np.log1p(np.einsum("ijk,ijk->ij", diff, diff))
    W = np.exp(-L)
    np.fill_diagonal(W, 0.0)
    np.fill_diagonal(L, 0.0)
    Z = W.sum()
    Pz = P.copy()
    np.fill_diagonal(Pz, 0.0)
    return float((Pz * L).sum() + np.log(Z) * Pz.sum())


def _entropy_and_slope(D, log_beta):
    """Row entropies (nats) of exp(-beta*D) and their derivative in log(beta)."""
    beta = np.exp(log_beta)[:, None]
    E = np.exp(-beta * D)
    C = E.sum(axis=1)
    m1 = (D * E).sum(axis=1) / C
    m2 = (D * D * E).sum(axis=1) / C
    H = np.log(C) + beta[:, 0] * m1
    slope = -(beta[:, 0] ** 2) * (m2 - m1 * m1)
    return H, slope


def beta_search(D2, target_ln, tol, max_iters, skip_diag):
    """Find per-row precisions whose Gaussian rows have perplexity exp(target_ln).

    Bracketing bisection in log(beta), accelerated by Newton steps that land
    inside the bracket. Entropy uses ln C + beta * <d2>, the closed form for
    the entropy of a normalized Gaussian row.

    Returns ``(betas, ln_ppx, status)``.
    """
    D2 = np.asarray(D2, dtype=np.float64)
    if skip_diag:
        r = D2.shape[0]
        D = D2[~np.eye(r, dtype=bool)].reshape(r, r - 1)
    else:
        D = D2
    r, k = D.shape
    D = D - D.min(axis=1, keepdims=True)
    betas = np.zeros(r)
    ln_ppx = np.full(r, np.log(k))
    status = np.zeros(r, dtype=np.int8)

    flat = D.max(axis=1) == 0.0
    if flat.any():
        reach = abs(np.log(k) - target_ln) <= tol
        betas[flat] = 1.0 if reach else 0.0
        status[flat] = OK if reach else DEGENERATE
    act = np.flatnonzero(~flat)
    if act.size == 0:
        return betas, ln_ppx, status
    D = D[act]

    lo = np.full(act.size, LOG_BETA_LO)
    hi = np.full(act.size, LOG_BETA_HI)
    for _ in range(MAX_EXPANSIONS):
        h_lo, _ = _entropy_and_slope(D, lo)
        grow = h_lo < target_ln
        if not grow.any():
            break
        lo[grow] -= np.log(2.0)
    for _ in range(MAX_EXPANSIONS):
        h_hi, _ = _entropy_and_slope(D, hi)
        grow = h_hi > target_ln
        if not grow.any():
            break
        hi[grow] += np.log(2.0)

    u = np.clip(np.zeros(act.size), lo, hi)
    H, slope = _entropy_and_slope(D, u)
    live = np.ones(act.size, dtype=bool)
    for _ in range(max_iters):
        f = H - target_ln
        live &= (np.abs(f) > STOP_TOL) & (hi - lo > 1e-14 * np.maximum(1.0, np.abs(u)))
        if not live.any():
            break
        lo = np.where(live & (f > 0), u, lo)
        hi = np.where(live & (f <= 0), u, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = u - f / slope
        ok = np.isfinite(newton) & (newton > lo) & (newton < hi)
        nxt = np.where(ok, newton, 0.5 * (lo + hi))
        u = np.where(live, nxt, u)
        idx = np.flatnonzero(live)
        H[idx], slope[idx] = _entropy_and_slope(D[idx], u[idx])

    betas[act] = np.exp(u)
    ln_ppx[act] = H
    status[act] = np.where(np.abs(H - target_ln) <= tol, OK, NOT_CONVERGED)
    return betas, ln_ppx, status


def kde_grid(points, betas, xc, yc, trunc):
    """Unscaled sum_j (beta_j/pi) exp(-beta_j |c - y_j|^2) at cell centres.

    ``trunc`` is the truncation radius in bandwidths (inf = none). Points are
    accumulated in index order.
    """
    points = np.asarray(points, dtype=np.float64)
    xc = np.asarray(xc, dtype=np.float64)
    yc = np.asarray(yc, dtype=np.float64)
    out = np.zeros((yc.size, xc.size))
    truncated = np.isfinite(trunc)
    for (px, py), b in zip(points, betas):
        dx2 = (xc - px) ** 2
        dy2 = (yc - py) ** 2
        ex = np.exp(-b * dx2)
        ey = np.exp(-b * dy2) * (b / np.pi)
        block = ey[:, None] * ex[None, :]
        if truncated:
            block[dy2[:, None] + dx2[None, :] > trunc * trunc / b] = 0.0
        out += block
    return out


def water_track(values, order):
    """Label cells of ``values`` (2-D) visiting them in ``order`` (linear ids).

    Returns ``(labels, peaks)`` with 1-based labels and peak linear ids in
    label order.
    """
    ny, nx = values.shape
    v = values.ravel().tolist()
    labels = [0] * (ny * nx)
    peaks = []
    order = order.tolist()

    def neighbours(c):
        iy, ix = divmod(c, nx)
        for dy in (-1, 0, 1):
            y = iy + dy
            if y < 0 or y >= ny:
                continue
            for dx in (-1, 0, 1):
                x = ix + dx
                if (dy or dx) and 0 <= x < nx:
                    yield y * nx + x

    def try_label(c):
        best = -1
        for q in neighbours(c):
            lq = labels[q]
            if lq and (best < 0 or v[q] > v[best] or (v[q] == v[best] and lq < labels[best])):
                best = q
        if best >= 0:
            labels[c] = labels[best]
            return True
        # strict maximum: every neighbour lower (unlabelled neighbours are never higher)
        vc = v[c]
        if all(v[q] < vc for q in neighbours(c)):
            peaks.append(c)
            labels[c] = len(peaks)
            return True
        return False

    pos = 0
    total = len(order)
    while pos < total:
        end = pos + 1
        while end < total and v[order[end]] == v[order[pos]]:
            end += 1
        queue = order[pos:end]
        head = 0
        stalled = 0
        while head < len(queue):
            c = queue[head]
            head += 1
            if try_label(c):
                stalled = 0
                continue
            queue.append(c)
            stalled += 1
            if stalled == len(queue) - head:
                # nothing in the run can be resolved: seed the first deferred cell
                c = queue[head]
                head += 1
                peaks.append(c)
                labels[c] = len(peaks)
                stalled = 0
        pos = end
    return np.asarray(labels, dtype=np.int32).reshape(ny, nx), np.asarray(peaks, dtype=np.int64)
