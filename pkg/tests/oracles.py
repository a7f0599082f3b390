"""Independent reference computations for the test suite.

Everything here is derived from first principles (closed forms, exhaustive
grids, scipy reference routines) and deliberately avoids the package's own
building blocks, so agreement between the two is meaningful evidence.
"""

import numpy as np
from scipy.optimize import minimize_scalar


# ---------------------------------------------------------------------------
# loop-based SINR references (no vectorization shared with the package)


def ref_sinr_center(hc_list, w_list, alpha, sigma2, k):
    num = alpha[k] * abs(np.vdot(hc_list[k], w_list[k])) ** 2
    den = sigma2
    for i in range(len(w_list)):
        if i != k:
            den += abs(np.vdot(hc_list[k], w_list[i])) ** 2
    return num / den


def ref_sinr_edge(z_list, w_list, alpha, sigma2, k):
    sig = abs(np.vdot(z_list[k], w_list[k])) ** 2
    den = alpha[k] * sig + sigma2
    for i in range(len(w_list)):
        if i != k:
            den += abs(np.vdot(z_list[k], w_list[i])) ** 2
    return (1.0 - alpha[k]) * sig / den


def ref_sinr_center_decoding_edge(hc_list, w_list, alpha, sigma2, k):
    sig = abs(np.vdot(hc_list[k], w_list[k])) ** 2
    den = alpha[k] * sig + sigma2
    for i in range(len(w_list)):
        if i != k:
            den += abs(np.vdot(hc_list[k], w_list[i])) ** 2
    return (1.0 - alpha[k]) * sig / den


def ref_effective_edge_channel(G, he, e):
    # z^H = e^H diag(he^H) G, i.e. z = G^H (he * e)
    N = he.shape[0]
    z = np.zeros(G.shape[1], dtype=complex)
    for n in range(N):
        z += np.conj(G[n, :]) * he[n] * e[n]
    return z


# ---------------------------------------------------------------------------
# single-cluster minimum-power closed form
#
# K=1: constraints on X = |h^H w|^2 and U = |z^H w|^2 are
#   alpha X >= r_c sigma2
#   (1 - (1+r_e) alpha) X >= r_e sigma2     (center user decoding edge signal)
#   (1 - (1+r_e) alpha) U >= r_e sigma2     (edge user)
# Restricting w to span{h, z} loses nothing; with b1 = h/|h| and b2 the unit
# complement of z in that span, power x^2 + u^2 is minimized subject to
#   x >= sqrt(A)/|h|,   |z1| x + |z2| u >= sqrt(B)
# whose solution is the min-norm point of the half-plane or its corner.


def min_power_fixed_alpha(h, z, alpha, sigma2, r_c, r_e):
    """Exact minimum of |w|^2 at a fixed power split; np.inf if unattainable."""
    slack = 1.0 - (1.0 + r_e) * alpha
    if alpha <= 0.0 or slack <= 0.0:
        return np.inf
    A = max(r_c * sigma2 / alpha, r_e * sigma2 / slack)
    B = r_e * sigma2 / slack
    hn = np.linalg.norm(h)
    if hn == 0.0:
        return np.inf
    b1 = h / hn
    z1 = np.vdot(b1, z)
    zperp = z - z1 * b1
    z2 = np.linalg.norm(zperp)
    a1, a2 = abs(z1), z2
    x_min = np.sqrt(A) / hn
    rootB = np.sqrt(B)
    if a1 * x_min >= rootB:
        return x_min ** 2
    if a2 == 0.0:
        if a1 == 0.0:
            return np.inf
        return max(x_min, rootB / a1) ** 2
    zn2 = a1 ** 2 + a2 ** 2
    x_star = a1 * rootB / zn2
    if x_star >= x_min:
        return B / zn2
    u = (rootB - a1 * x_min) / a2
    return x_min ** 2 + u ** 2


def min_power_single_cluster(h, z, sigma2, r_c, r_e, grid=400):
    """Minimum over the admissible power splits; returns (power, alpha)."""
    hi = 1.0 / (1.0 + r_e)
    alphas = np.linspace(hi * 1e-4, hi * (1.0 - 1e-9), grid)
    vals = np.array([min_power_fixed_alpha(h, z, a, sigma2, r_c, r_e)
                     for a in alphas])
    j = int(np.argmin(vals))
    lo = alphas[max(j - 1, 0)]
    up = alphas[min(j + 1, grid - 1)]
    res = minimize_scalar(
        lambda a: min_power_fixed_alpha(h, z, a, sigma2, r_c, r_e),
        bounds=(lo, up), method="bounded",
        options={"xatol": 1e-12})
    if res.fun <= vals[j]:
        return float(res.fun), float(res.x)
    return float(vals[j]), float(alphas[j])


# ---------------------------------------------------------------------------
# exhaustive phase grid (tiny N only)


def phase_grid_search(G, he, w_list, alpha, sigma2, r_e, points=16):
    """Best edge-SINR margin over the full phase grid for one cluster.

    Enumerates e_n = exp(-i theta_n) over `points` equispaced angles per
    element; returns (feasible, best_margin, best_e) where margin is
    sinr_edge - r_e and the single cluster uses w_list[0] as its own beam
    with the rest as interference.
    """
    N = he.shape[0]
    thetas = 2.0 * np.pi * np.arange(points) / points
    best = (-np.inf, None)
    idx = np.zeros(N, dtype=int)
    total = points ** N
    for flat in range(total):
        rem = flat
        for n in range(N):
            idx[n] = rem % points
            rem //= points
        e = np.exp(-1j * thetas[idx])
        z = ref_effective_edge_channel(G, he, e)
        sig = abs(np.vdot(z, w_list[0])) ** 2
        den = alpha * sig + sigma2
        for i in range(1, len(w_list)):
            den += abs(np.vdot(z, w_list[i])) ** 2
        sinr = (1.0 - alpha) * sig / den
        margin = sinr - r_e
        if margin > best[0]:
            best = (margin, e.copy())
    return best[0] >= 0.0, best[0], best[1]


# ---------------------------------------------------------------------------
# solver-suite instance generators (truth values computed locally)


def random_hermitian(rng, n):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (A + A.conj().T) / 2.0


def eig_instance(rng, n):
    """Data for: min Tr(X) s.t. Tr(A X) >= 1, X PSD; optimum 1/lam_max(A)."""
    while True:
        A = random_hermitian(rng, n)
        lam = float(np.linalg.eigvalsh(A)[-1])
        if lam > 0.2:
            return A, 1.0 / lam


def single_cluster_instance(rng, m):
    """Random fixed-split cluster whose SDR is tight (two trace constraints).

    Returns (h, z, alpha, sigma2, r_c, r_e, truth) where truth is the exact
    minimum of Tr(W) over W PSD with Tr(h h^H W) >= A and Tr(z z^H W) >= B,
    equal to the rank-one closed form above.
    """
    h = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) / np.sqrt(2)
    z = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) / np.sqrt(2)
    z *= rng.uniform(0.05, 1.0)
    r_c = 2.0 ** rng.uniform(0.5, 1.5) - 1.0
    r_e = 2.0 ** rng.uniform(0.5, 1.5) - 1.0
    alpha = rng.uniform(0.15, 0.85) / (1.0 + r_e)
    sigma2 = 10.0 ** rng.uniform(-4, -1)
    truth = min_power_fixed_alpha(h, z, alpha, sigma2, r_c, r_e)
    return h, z, alpha, sigma2, r_c, r_e, truth
