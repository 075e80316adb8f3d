"""Reference computations that share no code with the package under test."""

import itertools

import numpy as np


# ---- so(n) via skew matrices -------------------------------------------------


def skew_basis(n):
    out = []
    for i, j in itertools.combinations(range(n), 2):
        m = np.zeros((n, n))
        m[i, j], m[j, i] = 1.0, -1.0
        out.append(m)
    return out


def skew_inner(a, b):
    return -0.5 * np.trace(a @ b)


def operator_on_skew(M, basis, X):
    """Apply a bivector-basis matrix to a skew matrix."""
    c = np.array([skew_inner(X, e) for e in basis])
    return sum(v * e for v, e in zip(M @ c, basis))


def sharp_reference(A, B, n):
    """<(A#B) w, z> = 1/2 sum_{a,b} <[A e_a, B e_b], w> <[e_a, e_b], z>."""
    basis = skew_basis(n)
    nb = len(basis)
    Ae = [operator_on_skew(A, basis, e) for e in basis]
    Be = [operator_on_skew(B, basis, e) for e in basis]
    out = np.zeros((nb, nb))
    for a in range(nb):
        for b in range(nb):
            c1 = Ae[a] @ Be[b] - Be[b] @ Ae[a]
            c2 = basis[a] @ basis[b] - basis[b] @ basis[a]
            u = np.array([skew_inner(c1, w) for w in basis])
            v = np.array([skew_inner(c2, z) for z in basis])
            out += np.outer(u, v)
    out *= 0.5
    return 0.5 * (out + out.T)


def four_tensor(M, n):
    """T[i,j,k,l] = <M(e_i ^ e_j), e_k ^ e_l> using explicit antisymmetrization."""
    pairs = list(itertools.combinations(range(n), 2))
    pos = {p: a for a, p in enumerate(pairs)}
    T = np.zeros((n,) * 4)
    for i, j, k, l in itertools.product(range(n), repeat=4):
        if i == j or k == l:
            continue
        s = 1.0
        a, b = (i, j), (k, l)
        if i > j:
            a, s = (j, i), -s
        if k > l:
            b, s = (l, k), -s
        T[i, j, k, l] = s * M[pos[a], pos[b]]
    return T


def ricci_reference(M, n):
    T = four_tensor(M, n)
    return np.einsum("ikjk->ij", T)


def gauss_operator(shape):
    """Operator of a hypersurface from its shape operator (Gauss equation), doubled."""
    n = shape.shape[0]
    pairs = list(itertools.combinations(range(n), 2))
    M = np.zeros((len(pairs), len(pairs)))
    for a, (i, j) in enumerate(pairs):
        for b, (k, l) in enumerate(pairs):
            M[a, b] = 2 * (shape[i, k] * shape[j, l] - shape[i, l] * shape[j, k])
    return M


# ---- coordinate curvature -------------------------------------------------------


def christoffel(metric, x, eps=1e-4):
    """Gamma^k_ij at x for a metric given as a callable returning an (n, n) array."""
    x = np.asarray(x, dtype=float)
    n = x.size
    g = metric(x)
    ginv = np.linalg.inv(g)
    dg = np.zeros((n, n, n))  # dg[k, i, j] = d_k g_ij
    for k in range(n):
        e = np.zeros(n)
        e[k] = eps
        dg[k] = (-metric(x + 2 * e) + 8 * metric(x + e) - 8 * metric(x - e) + metric(x - 2 * e)) / (12 * eps)
    gam = np.zeros((n, n, n))
    for k, i, j in itertools.product(range(n), repeat=3):
        gam[k, i, j] = 0.5 * sum(ginv[k, l] * (dg[i, l, j] + dg[j, l, i] - dg[l, i, j]) for l in range(n))
    return gam


def riemann_down(metric, x, eps=1e-3):
    """Rm(d_i, d_j, d_k, d_l) = g(R(d_i, d_j) d_l, d_k) with R(X,Y) = [D_X, D_Y] - D_[X,Y]."""
    x = np.asarray(x, dtype=float)
    n = x.size
    gam = christoffel(metric, x)
    dgam = np.zeros((n, n, n, n))  # dgam[m, k, i, j] = d_m Gamma^k_ij
    for m in range(n):
        e = np.zeros(n)
        e[m] = eps
        dgam[m] = (
            -christoffel(metric, x + 2 * e) + 8 * christoffel(metric, x + e)
            - 8 * christoffel(metric, x - e) + christoffel(metric, x - 2 * e)
        ) / (12 * eps)
    # R^a_{l i j}: (R(d_i, d_j) d_l)^a
    Rup = np.zeros((n, n, n, n))
    for a, l, i, j in itertools.product(range(n), repeat=4):
        Rup[a, l, i, j] = (
            dgam[i, a, j, l] - dgam[j, a, i, l]
            + sum(gam[a, i, p] * gam[p, j, l] - gam[a, j, p] * gam[p, i, l] for p in range(n))
        )
    g = metric(x)
    out = np.zeros((n,) * 4)
    for i, j, k, l in itertools.product(range(n), repeat=4):
        out[i, j, k, l] = sum(g[k, a] * Rup[a, l, i, j] for a in range(n))
    return out


def sectional(metric, x, i, j):
    Rm = riemann_down(metric, x)
    g = metric(np.asarray(x, dtype=float))
    return Rm[i, j, i, j] / (g[i, i] * g[j, j] - g[i, j] ** 2)


def warped_metric(phi, n):
    """dr^2 + phi(r)^2 g_{S^{n-1}} in coordinates (r, t_1, ..., t_{n-1})."""

    def metric(x):
        r, t = x[0], x[1:]
        g = np.zeros((n, n))
        g[0, 0] = 1.0
        w = phi(r) ** 2
        for a in range(n - 1):
            g[a + 1, a + 1] = w
            w = w * np.sin(t[a]) ** 2
        return g

    return metric
