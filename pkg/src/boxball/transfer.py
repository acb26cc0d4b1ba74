"""Carrier transfer matrix and the equal-time integrated current variance.

Row ``n`` of the matrix is indexed by the load entering a site and column by
the load leaving it; a ball costs ``z`` and a bond carrying ``n`` balls costs
``y**n``.  Log-derivatives of the leading eigenvalue at ``y = 1`` give the
current cumulants per site.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLeadingEigenvalue, DomainError

GAP_TOL = 1e-12

__all__ = [
    "CarrierMatrix",
    "build_carrier_matrix",
    "stationary_current",
    "equal_time_variance",
    "conjectured_f",
    "c2_via_tm",
    "log_lambda_max",
]


@dataclass(frozen=True)
class CarrierMatrix:
    l: int
    z: float
    y: float
    entries: np.ndarray

    def up_part(self) -> np.ndarray:
        """Entries that carry a factor z (a ball on the site)."""
        up = np.zeros_like(self.entries)
        for n in range(self.l + 1):
            m = min(n + 1, self.l)
            up[n, m] = self.entries[n, m]
        return up


def _check(l: int, z: float, y: float = 1.0) -> int:
    if isinstance(l, bool) or int(l) != l or l < 1:
        raise DomainError(f"capacity must be a positive integer, got {l!r}")
    if not (z > 0 and y > 0):
        raise DomainError(f"need z > 0 and y > 0, got z={z}, y={y}")
    return int(l)


def build_carrier_matrix(l: int, z: float, y: float = 1.0) -> CarrierMatrix:
    l = _check(l, z, y)
    M = np.zeros((l + 1, l + 1))
    M[0, 0] = 1.0
    M[0, 1] = z
    for n in range(1, l + 1):
        yn = y**n
        M[n, n - 1] = yn
        M[n, min(n + 1, l)] += z * yn
    M.setflags(write=False)
    return CarrierMatrix(l, float(z), float(y), M)


def stationary_current(l: int, z: float) -> float:
    """Mean carrier load under the stationary weights z^k, k = 0..l."""
    l = _check(l, z)
    k = np.arange(l + 1, dtype=float)
    w = z**k
    return float(k @ w / w.sum())


def _spectral(M: np.ndarray):
    vals, W = np.linalg.eigh(M)
    vals, W = vals[::-1], W[:, ::-1]
    if vals.size > 1 and vals[0] - vals[1] < GAP_TOL * abs(vals[0]):
        raise DegenerateLeadingEigenvalue(f"Perron gap {vals[0] - vals[1]} below tolerance")
    return vals, W


def log_lambda_max(l: int, z: float, y: float = 1.0) -> float:
    vals = np.linalg.eigvals(build_carrier_matrix(l, z, y).entries)
    return float(np.log(vals.real.max()))


def _derivatives(l: int, z: float):
    """First and second derivatives of ln lambda_max in theta = ln y and psi = ln z at y = 1.

    At y = 1 the matrix is tridiagonal with z above and 1 below the diagonal;
    conjugating by diag(z^{k/2}) makes it symmetric, so eigh gives orthonormal
    eigenvectors and the perturbation sums stay well conditioned.
    """
    cm = build_carrier_matrix(l, z, 1.0)
    k = np.arange(l + 1, dtype=float)
    h = np.sqrt(z) ** k

    def sym(X):
        return X * h[:, None] / h[None, :]

    M = cm.entries
    N = np.diag(k)
    Mt = N @ M            # d/dtheta
    Mtt = N @ Mt
    Mp = cm.up_part()     # d/dpsi
    Mtp = N @ Mp
    vals, W = _spectral(sym(M))
    lam = vals[0]
    w = W[:, 0]

    def first(X):
        return w @ sym(X) @ w

    def second(X, Y, XY):
        # lambda_XY = w XY w + sum_{k>0} 2 (w X w_k)(w_k Y w) / (lam - lam_k), X, Y symmetric in effect
        Xs, Ys = sym(X), sym(Y)
        tot = w @ sym(XY) @ w
        for j in range(1, l + 1):
            wj = W[:, j]
            tot += ((w @ Xs @ wj) * (wj @ Ys @ w) + (w @ Ys @ wj) * (wj @ Xs @ w)) / (lam - vals[j])
        return tot

    lt, lp = first(Mt), first(Mp)
    ltt = second(Mt, Mt, Mtt)
    ltp = second(Mt, Mp, Mtp)
    return lam, lt, lp, ltt, ltp


def _second_log(lam, a, b, ab):
    return ab / lam - a * b / lam**2


def equal_time_variance(l: int, z: float) -> float:
    """f = (y d/dy)^2 ln lambda_max at y = 1, by eigenvalue perturbation."""
    l = _check(l, z)
    lam, lt, _lp, ltt, _ltp = _derivatives(l, z)
    return float(_second_log(lam, lt, lt, ltt))


def c2_via_tm(l: int, z: float) -> float:
    """c2 = (z d/dz)(y d/dy) ln lambda_max at y = 1."""
    l = _check(l, z)
    lam, lt, lp, _ltt, ltp = _derivatives(l, z)
    return float(_second_log(lam, lt, lp, ltp))


def conjectured_f(l: int, z: float) -> float:
    """Closed form for f conjectured from the transfer-matrix values, g_j = 1 + z^j."""
    l = _check(l, z)
    if not z < 1:
        raise DomainError(f"need z < 1, got {z}")

    def g(j):
        return 1 + z**j

    q = 1 - z
    r3 = (1 - z ** (l + 1)) ** 3
    return float(z * (1 + 6 * z + z * z) * (1 - z ** (3 * l + 3)) / (q**4 * r3)
                 - 24 * z ** (l + 5) * (1 - z ** (l - 3)) / (q**4 * r3)
                 - 3 * z ** (l + 2) * (g(l + 2) + 7 * z * g(l) + 8 * z * z * g(l - 2)) / (q**3 * r3)
                 - (l + 1) ** 2 * z ** (l + 1) * (g(l + 2) + 2 * l * (1 + z) * g(l + 1) + 3 * z * g(l)) / (q * r3))
