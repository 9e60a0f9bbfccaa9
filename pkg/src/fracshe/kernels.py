"""Hot numerical loops, each with a numba loop version and a numpy version.

The module-level names (``volterra_product``, ``lattice_image_sum``,
``ball_fractions_2d``, ``mardia_skewness``) dispatch to the loop version when
numba acceleration is enabled and to the vectorised numpy version otherwise.
Both versions are importable under ``*_loop`` / ``*_numpy`` for testing and
benchmarking.
"""
import numpy as np

from ._accel import USE_NUMBA, optional_njit

# ---------------------------------------------------------------------------
# Discrete Volterra convolution used by the product-trapezoid time integrals.
# out[m] = sum_{j<m} w0[m-1-j] h[j] + w1[m-1-j] h[j+1],   out[0] = 0


@optional_njit(cache=True)
def volterra_product_loop(w0, w1, h):
    M = h.shape[0] - 1
    out = np.zeros(M + 1)
    for m in range(1, M + 1):
        acc = 0.0
        for j in range(m):
            acc += w0[m - 1 - j] * h[j] + w1[m - 1 - j] * h[j + 1]
        out[m] = acc
    return out


def volterra_product_numpy(w0, w1, h):
    h = np.asarray(h, dtype=float)
    M = h.shape[0] - 1
    out = np.zeros(M + 1)
    if M == 0:
        return out
    c0 = np.convolve(w0[:M], h[:M])[:M]
    c1 = np.convolve(w1[:M], h[1:M + 1])[:M]
    out[1:] = c0 + c1
    return out


# ---------------------------------------------------------------------------
# Periodic-image sums on the square lattice (2 * half_length) Z^2 \ {0}:
#   out[p] = sum_n sum_k coeffs[k] * |x_p + P n|^{-powers[k]},  |n_i| <= M


@optional_njit(cache=True)
def lattice_image_sum_loop(points, period, coeffs, powers, M):
    P = points.shape[0]
    K = coeffs.shape[0]
    out = np.zeros(P)
    for p in range(P):
        x0 = points[p, 0]
        x1 = points[p, 1]
        acc = 0.0
        for n0 in range(-M, M + 1):
            y0 = x0 + period * n0
            for n1 in range(-M, M + 1):
                if n0 == 0 and n1 == 0:
                    continue
                y1 = x1 + period * n1
                r = np.sqrt(y0 * y0 + y1 * y1)
                lr = np.log(r)
                for k in range(K):
                    acc += coeffs[k] * np.exp(-powers[k] * lr)
        out[p] = acc
    return out


def lattice_image_sum_numpy(points, period, coeffs, powers, M):
    n = np.arange(-M, M + 1)
    n0, n1 = np.meshgrid(n, n, indexing="ij")
    keep = (n0 != 0) | (n1 != 0)
    shifts = period * np.stack([n0[keep], n1[keep]], axis=1).astype(float)
    out = np.empty(points.shape[0])
    for start in range(0, points.shape[0], 64):
        pts = points[start:start + 64]
        y = pts[:, None, :] + shifts[None, :, :]
        lr = 0.5 * np.log(np.einsum("pqi,pqi->pq", y, y))
        acc = np.zeros(lr.shape)
        for c, s in zip(coeffs, powers):
            acc += c * np.exp(-s * lr)
        out[start:start + 64] = acc.sum(axis=1)
    return out


# ---------------------------------------------------------------------------
# Area fraction of each grid cell inside the disc |x| <= R (cells centred on
# the nodes).  Cut cells are supersampled on a sub x sub midpoint lattice.


@optional_njit(cache=True)
def ball_fractions_2d_loop(nodes, dx, R, sub):
    N = nodes.shape[0]
    out = np.zeros((N, N))
    h = 0.5 * dx
    R2 = R * R
    for i in range(N):
        xi = nodes[i]
        ax = max(abs(xi) - h, 0.0)
        bx = abs(xi) + h
        for j in range(N):
            yj = nodes[j]
            ay = max(abs(yj) - h, 0.0)
            by = abs(yj) + h
            if bx * bx + by * by <= R2:
                out[i, j] = 1.0
            elif ax * ax + ay * ay >= R2:
                out[i, j] = 0.0
            else:
                cnt = 0
                for a in range(sub):
                    px = xi - h + (a + 0.5) * dx / sub
                    for b in range(sub):
                        py = yj - h + (b + 0.5) * dx / sub
                        if px * px + py * py <= R2:
                            cnt += 1
                out[i, j] = cnt / (sub * sub)
    return out


def ball_fractions_2d_numpy(nodes, dx, R, sub):
    h = 0.5 * dx
    X, Y = np.meshgrid(nodes, nodes, indexing="ij")
    ax = np.maximum(np.abs(X) - h, 0.0)
    ay = np.maximum(np.abs(Y) - h, 0.0)
    bx = np.abs(X) + h
    by = np.abs(Y) + h
    out = np.where(bx**2 + by**2 <= R * R, 1.0, 0.0)
    cut = (bx**2 + by**2 > R * R) & (ax**2 + ay**2 < R * R)
    if np.any(cut):
        off = -h + (np.arange(sub) + 0.5) * dx / sub
        ox, oy = np.meshgrid(off, off, indexing="ij")
        px = X[cut][:, None] + ox.ravel()[None, :]
        py = Y[cut][:, None] + oy.ravel()[None, :]
        out[cut] = np.mean(px**2 + py**2 <= R * R, axis=1)
    return out


# ---------------------------------------------------------------------------
# Mardia's multivariate skewness b_{1,k} = n^{-2} sum_{i,j} (z_i' S^{-1} z_j)^3
# for already-centred rows z_i.


@optional_njit(cache=True)
def mardia_skewness_loop(Z, S_inv):
    n, k = Z.shape
    Y = Z @ S_inv
    acc = 0.0
    for i in range(n):
        diag = 0.0
        for a in range(k):
            diag += Y[i, a] * Z[i, a]
        acc += diag**3
        for j in range(i + 1, n):
            g = 0.0
            for a in range(k):
                g += Y[i, a] * Z[j, a]
            acc += 2.0 * g**3
    return acc / (n * n)


def mardia_skewness_numpy(Z, S_inv):
    n = Z.shape[0]
    Y = Z @ S_inv
    acc = 0.0
    for start in range(0, n, 512):
        G = Y[start:start + 512] @ Z.T
        acc += float(np.sum(G**3))
    return acc / (n * n)


if USE_NUMBA:
    volterra_product = volterra_product_loop
    lattice_image_sum = lattice_image_sum_loop
    ball_fractions_2d = ball_fractions_2d_loop
    mardia_skewness = mardia_skewness_loop
else:
    volterra_product = volterra_product_numpy
    lattice_image_sum = lattice_image_sum_numpy
    ball_fractions_2d = ball_fractions_2d_numpy
    mardia_skewness = mardia_skewness_numpy
