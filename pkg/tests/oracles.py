"""Finite-difference reference computations, independent of the symbolic engine.

Metrics are given as plain Python callables x -> covariant matrix.
"""

import numpy as np


def fd_christoffel(metric, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    n = len(x)
    g = metric(x)
    ginv = np.linalg.inv(g)
    dg = np.empty((n, n, n))  # dg[l, i, j] = ∂_l g_ij
    for l in range(n):
        e = np.zeros(n)
        e[l] = h
        dg[l] = (metric(x + e) - metric(x - e)) / (2 * h)
    first = 0.5 * (np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg)
    return np.einsum("kl,lij->kij", ginv, first)


def fd_riemann(metric, x, h=1e-4):
    """R^l_kij = ∂_iΓ^l_jk − ∂_jΓ^l_ik + Γ^l_isΓ^s_jk − Γ^l_jsΓ^s_ik."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    G = fd_christoffel(metric, x)
    dG = np.empty((n, n, n, n))  # dG[m, l, i, j] = ∂_m Γ^l_ij
    for m in range(n):
        e = np.zeros(n)
        e[m] = h
        dG[m] = (fd_christoffel(metric, x + e) - fd_christoffel(metric, x - e)) / (2 * h)
    R = (np.einsum("iljk->lkij", dG) - np.einsum("jlik->lkij", dG)
         + np.einsum("lis,sjk->lkij", G, G) - np.einsum("ljs,sik->lkij", G, G))
    return R


def polar(x):
    return np.diag([1.0, x[0] ** 2])


def sphere(x):
    return np.diag([1.0, np.sin(x[0]) ** 2])
