"""Exact hydrodynamic (TBA) quantities for i.i.d. and two-temperature states.

States are labelled by ``(a, z)`` with ``0 < a, z < 1``; the i.i.d. state of
ball density ``p`` has ``a = z = p / (1 - p)``.  Capacities are positive
integers or ``INF`` for the infinite-capacity limit.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import DivergentQuantity, DomainError, SingularSystem

INF = math.inf
REL_TOL = 1e-14
MAX_TERMS = 10_000_000

__all__ = [
    "INF",
    "TbaProfile",
    "VelocityTable",
    "TruncatedMatrix",
    "MeanCurrents",
    "fugacity",
    "density",
    "profile",
    "velocities",
    "velocities_hole_form",
    "velocity_residual",
    "mean_currents",
    "eta_mean",
    "c2_analytic",
    "drude_analytic",
    "drude_one",
    "partial_w_sum",
    "tail_weight",
    "four_index_correlation",
    "dressing_matrix",
    "flux_jacobian",
    "flux_jacobian_sigma",
    "correlation_matrices",
    "pseudoenergy_cov_prediction",
]


def fugacity(p: float) -> float:
    """z = p / (1 - p) for ball density p in [0, 1/2)."""
    if not 0 <= p < 0.5:
        raise DomainError(f"ball density must lie in [0, 1/2), got {p}")
    return p / (1 - p)


def density(a: float) -> float:
    """Ball density a / (1 + a) of the state labelled by a."""
    return a / (1 + a)


def _check_state(a: float, z: float) -> None:
    if not (0 < a < 1 and 0 < z < 1):
        raise DomainError(f"need 0 < a < 1 and 0 < z < 1, got a={a}, z={z}")


def _check_index(l, name: str = "capacity"):
    if l == INF:
        return INF
    if isinstance(l, bool) or int(l) != l or l < 1:
        raise DomainError(f"{name} must be a positive integer or INF, got {l!r}")
    return int(l)


def _zpow(z: float, l) -> float:
    return 0.0 if l == INF else z**l


def _lzpow(z: float, l) -> float:
    """l * z**l, with the l = INF limit 0."""
    return 0.0 if l == INF else l * z**l


@dataclass(frozen=True)
class TbaProfile:
    """Soliton densities rho_k, hole densities sigma_k and y_k = rho_k / sigma_k."""

    a: float
    z: float
    K: int
    rho: np.ndarray
    sigma: np.ndarray
    y: np.ndarray

    @property
    def iid(self) -> bool:
        return self.a == self.z

    @property
    def ball_density(self) -> float:
        return density(self.a)

    @property
    def pseudoenergies(self) -> np.ndarray:
        """Mean pseudoenergies -ln(rho_k / sigma_k)."""
        return -np.log(self.y)

    def free_energy(self) -> float:
        """Auxiliary: -sum_k ln(1 + y_k) over the truncation."""
        return float(-np.sum(np.log1p(self.y)))

    def occupations(self) -> np.ndarray:
        """Auxiliary: mode occupancies 1 / (1 + 1/y_k)."""
        return self.y / (1 + self.y)


def _rho_sigma(a: float, z: float, k: np.ndarray):
    zk = z**k
    rho = (a * z ** (k - 1) * (1 - a) * (1 - z) ** 2 * (1 + a * zk)
           / ((1 + a) * (1 - a * z ** (k - 1)) * (1 - a * zk) * (1 - a * zk * z)))
    sigma = (1 - a) * (1 + a * zk) / ((1 + a) * (1 - a * zk))
    return rho, sigma


def profile(a: float, z: float, K: int = 60) -> TbaProfile:
    """Closed-form densities for k = 1..K."""
    _check_state(a, z)
    if K < 1:
        raise DomainError("truncation K must be at least 1")
    k = np.arange(1, K + 1, dtype=float)
    rho, sigma = _rho_sigma(a, z, k)
    for arr in (rho, sigma):
        arr.setflags(write=False)
    y = rho / sigma
    y.setflags(write=False)
    return TbaProfile(float(a), float(z), int(K), rho, sigma, y)


def _vbar(a: float, z: float, k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    zk = z**k
    return (1 + a) * k / (1 - a) - 2 * a * (1 + z) * (1 - zk) / ((1 - a) * (1 - z) * (1 + a * zk))


def _vl(a: float, z: float, l, k) -> np.ndarray:
    """v^{(l)}_k for an array of k."""
    k = np.asarray(k, dtype=float)
    if l == INF:
        return _vbar(a, z, k)
    zl = z**l
    return (1 + a * zl) / (1 - a * zl) * _vbar(a, z, np.minimum(k, l))


@dataclass(frozen=True)
class VelocityTable:
    """Effective velocities v^{(l)}_1..v^{(l)}_K."""

    l: float
    v: np.ndarray


def velocities(prof: TbaProfile, l) -> VelocityTable:
    """Closed-form effective velocities for dynamics T_l."""
    l = _check_index(l)
    v = _vl(prof.a, prof.z, l, np.arange(1, prof.K + 1))
    v.setflags(write=False)
    return VelocityTable(l, v)


def velocities_hole_form(prof: TbaProfile, l: int) -> np.ndarray:
    """v^{(l)}_i = sum_{k <= min(l,i)} sigma_l / (sigma_{k-1} sigma_k), sigma_0 = 1."""
    l = _check_index(l)
    if l == INF or l > prof.K:
        raise DomainError("hole form needs a finite l within the truncation")
    s = np.concatenate(([1.0], prof.sigma))
    terms = s[l] / (s[:-1] * s[1:])
    part = np.cumsum(terms)
    idx = np.minimum(np.arange(1, prof.K + 1), l)
    return part[idx - 1]


def velocity_residual(prof: TbaProfile, l) -> np.ndarray:
    """Residual of v_i - min(i,l) - sum_k 2 min(i,k) (v_i - v_k) rho_k for i <= K/2."""
    v = velocities(prof, l).v
    K = prof.K
    i = np.arange(1, K + 1)
    M = 2 * np.minimum.outer(i, i)
    kappa = i if l == INF else np.minimum(i, l)
    res = v - kappa - (M * (v[:, None] - v[None, :])) @ prof.rho
    return res[: K // 2]


@dataclass(frozen=True)
class MeanCurrents:
    ball: float
    soliton: float


def mean_currents(a: float, z: float, l) -> MeanCurrents:
    """Mean ball and soliton currents under T_l."""
    _check_state(a, z)
    l = _check_index(l)
    zl = _zpow(z, l)
    ball = a * (1 + z) * (1 - zl) / ((1 + a) * (1 - z) * (1 - a * zl)) - a * _lzpow(z, l) / (1 - a * zl)
    sol = a * (1 - zl) / ((1 + a) * (1 - a * zl))
    return MeanCurrents(float(ball), float(sol))


def iid_current(z: float, l) -> float:
    """Mean ball current z/(1-z) - (l+1) z^{l+1} / (1 - z^{l+1})."""
    if not 0 <= z < 1:
        raise DomainError(f"need 0 <= z < 1, got {z}")
    l = _check_index(l)
    if l == INF:
        return z / (1 - z)
    return z / (1 - z) - (l + 1) * z ** (l + 1) / (1 - z ** (l + 1))


def eta_mean(a: float, z: float, l, j) -> float:
    """Mean generalized current eta^{(l)}_j (symmetric in l and j)."""
    _check_state(a, z)
    l = _check_index(l)
    j = _check_index(j, "index")
    lo, hi = min(j, l), max(j, l)
    zj, zl = _zpow(z, j), _zpow(z, l)
    den = (1 - a * zj) * (1 - a * zl)
    first = a * (1 + z) * (1 - _zpow(z, lo)) * (1 + a * _zpow(z, hi)) / ((1 + a) * (1 - z) * den)
    if lo == INF:
        second = 0.0
    elif hi == INF:
        second = a * _lzpow(z, lo) / den
    else:
        second = lo * a * (zj + zl) / den
    return float(first - second)


def c2_analytic(a: float, z: float, l) -> float:
    """Scaled variance of the number of balls crossing a bond under T_l."""
    _check_state(a, z)
    l = _check_index(l)
    zl = _zpow(z, l)
    lzl = _lzpow(z, l)
    if a == z:
        zl1 = z * zl
        return float(z / (1 - z) ** 2 - (0.0 if l == INF else (l + 1) ** 2 * zl1 / (1 - zl1) ** 2))
    t1 = a * (1 - a) * (1 + z) ** 2 * (1 - zl) * (1 + a * a * zl) / ((1 + a) ** 3 * (1 - z) ** 2 * (1 - a * zl) ** 2)
    t2 = 2 * a * z * (1 - zl) / ((1 + a) * (1 - z) ** 2 * (1 - a * zl))
    if l == INF:
        t3 = 0.0
    else:
        t3 = a * lzl / (1 - a * zl) ** 2 * (l + 2 * (1 - a) * (1 + z) / ((1 + a) * (1 - z)))
    return float(t1 + t2 - t3)


def drude_one(a: float, z: float) -> float:
    """D^{(1)} = sum_i W_i."""
    _check_state(a, z)
    if a == z:
        return z / (1 + z) ** 2
    return a * (1 - a) * (1 + z) / ((1 + a) ** 3 * (1 - z))


def _w(a: float, z: float, i) -> np.ndarray:
    rho, sigma = _rho_sigma(a, z, np.asarray(i, dtype=float))
    return rho * sigma * (rho + sigma) * _vbar(a, z, i) ** 2


CLOSED_FORM_MAX_Z = 0.9


def partial_w_sum(a: float, z: float, l: int, method: str = "auto") -> float:
    """sum_{i<l} W_i by the closed A_l expression or by direct summation.

    ``auto`` takes the closed form for z <= 0.9 and sums directly above,
    where the closed form loses digits to cancellation.
    """
    _check_state(a, z)
    l = _check_index(l)
    if l == INF:
        return drude_one(a, z)
    if l == 1:
        return 0.0
    if method == "auto":
        method = "closed" if z <= CLOSED_FORM_MAX_Z else "direct"
    if method == "direct":
        return float(np.sum(_w(a, z, np.arange(1, l))))
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    if a == z:
        A = (1 + 3 * z ** (2 * l) + 8 * z ** (2 * l + 1) + 3 * z ** (2 * l + 2) + z ** (4 * l + 2)
             - (l + 1) ** 2 * (z ** (l + 2) + z ** (3 * l))
             + (l * l - 4) * (z ** (l + 1) + z ** (3 * l + 1))
             + (l - 1) * (l + 3) * (z**l + z ** (3 * l + 2))
             - l * l * (z ** (l - 1) + z ** (3 * l + 3)))
        return float(z * A / ((1 + z) ** 2 * (1 - z**l) ** 2 * (1 - z ** (l + 1)) ** 2))

    def g(w):
        return (w + (1 - l * (1 - w)) ** 2) / (1 + w)

    def h(w):
        return (1 + l) ** 2 + l * l * w + (1 - 2 * l + w) * (3 + w + 2 * l * w) / (1 + w)

    A = (1 + 2 * a * (1 + a * a) * z ** (2 * l - 1) + a**4 * z ** (4 * l - 2)
         + a * a * z ** (2 * l - 2) * (1 + 8 * z + z * z)
         - a * z ** (l - 1) * (2 + a**3 * z ** (2 * l - 1)) * g(z)
         - z**l * (1 + 2 * a**3 * z ** (2 * l - 1)) * g(1 / z)
         - a * a * z ** (l - 1) * h(z) - a * a * z ** (3 * l - 1) * h(1 / z))
    return float(a * (1 - a) * (1 + z) * A
                 / ((1 + a) ** 3 * (1 - z) * (1 - a * z ** (l - 1)) ** 2 * (1 - a * z**l) ** 2))


def _series(term, start: int = 1) -> float:
    """Sum term(k) for k >= start until the running term is negligible."""
    total = 0.0
    k0 = start
    n = 64
    while True:
        k = np.arange(k0, k0 + n, dtype=float)
        t = term(k)
        if not np.all(np.isfinite(t)):
            raise DivergentQuantity("non-finite term in series")
        total += float(np.sum(t))
        last = float(np.max(np.abs(t[-8:])))
        if last <= REL_TOL * abs(total) or (total == 0.0 and last == 0.0):
            return total
        k0 += n
        n = min(2 * n, 1 << 20)
        if k0 > MAX_TERMS:
            raise DivergentQuantity("series did not converge")


def drude_analytic(a: float, z: float, l, method: str = "auto") -> float:
    """Drude weight of the ball current under T_l."""
    _check_state(a, z)
    l = _check_index(l)
    if l == INF:
        if z >= 1:
            raise DivergentQuantity("D^(inf) diverges at half filling")
        return _series(lambda k: _w(a, z, k) * _vbar(a, z, k) ** 2)
    if l == 1:
        return drude_one(a, z)
    i = np.arange(1, l)
    vl = _vl(a, z, l, np.arange(1, l + 1))
    head = float(np.sum(_w(a, z, i) * vl[:-1] ** 2))
    tail = drude_one(a, z) - partial_w_sum(a, z, l, method)
    return head + vl[-1] ** 2 * tail


def tail_weight(a: float, z: float, r: int) -> float:
    """sum_{i >= r} rho_i sigma_i (rho_i + sigma_i)."""
    _check_state(a, z)
    return (a * (1 - a) ** 3 * (1 - z) * z ** (r - 1) * (1 + a * a * z ** (2 * r - 1))
            / ((1 + a) ** 3 * (1 - a * z ** (r - 1)) ** 2 * (1 - a * z**r) ** 2))


def _base_weight(a: float, z: float, k) -> np.ndarray:
    rho, sigma = _rho_sigma(a, z, np.asarray(k, dtype=float))
    return rho * sigma * (rho + sigma)


def four_index_correlation(a: float, z: float, i, j, l, m, inf_proxy: int | None = None) -> float:
    """C^{l,m}_{i,j}: sum_k rho sigma (rho + sigma) v^{(i)} v^{(j)} v^{(l)} v^{(m)}.

    Finite indices use the exact tail beyond r = max(i, j, l, m).  An INF
    index is summed as a convergent series, or replaced by ``inf_proxy``.
    """
    _check_state(a, z)
    idx = [_check_index(x, "index") for x in (i, j, l, m)]
    if inf_proxy is not None:
        idx = [inf_proxy if x == INF else x for x in idx]
    r = max(idx)

    def term(k):
        out = _base_weight(a, z, k)
        for x in idx:
            out = out * _vl(a, z, x, k)
        return out

    if r == INF:
        if z >= 1:
            raise DivergentQuantity("series diverges at half filling")
        return _series(term)
    head = float(np.sum(term(np.arange(1, r)))) if r > 1 else 0.0
    corner = 1.0
    for x in idx:
        corner *= float(_vl(a, z, x, x))
    return head + tail_weight(a, z, r) * corner


@dataclass(frozen=True)
class TruncatedMatrix:
    """K x K truncation of an infinite matrix indexed from 1."""

    role: str
    values: np.ndarray

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def labels(self) -> np.ndarray:
        return np.arange(1, self.K + 1)


def dressing_matrix(prof: TbaProfile, K: int | None = None) -> TruncatedMatrix:
    """G = (Id + M diag(y))^{-1} with M_ij = 2 min(i, j)."""
    K = prof.K if K is None else K
    if not 1 <= K <= prof.K:
        raise DomainError(f"K must lie in [1, {prof.K}]")
    i = np.arange(1, K + 1)
    M = 2.0 * np.minimum.outer(i, i)
    try:
        G = np.linalg.solve(np.eye(K) + M * prof.y[:K][None, :], np.eye(K))
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(G)):
        raise SingularSystem("non-finite dressing matrix")
    return TruncatedMatrix("dressing", G)


def flux_jacobian_sigma(sigma, l: int) -> np.ndarray:
    """A^{(l)}_{ij} = d(sigma_i v^{(l)}_i)/d sigma_j for given sigma_1..sigma_K.

    sigma_i v^{(l)}_i = sum_{k <= min(l,i)} sigma_i sigma_l / (sigma_{k-1} sigma_k)
    with sigma_0 = 1 held fixed; each term is a monomial, so its derivative is
    exponent * term / sigma_j.
    """
    s = np.concatenate(([1.0], np.asarray(sigma, dtype=float)))
    K = len(s) - 1
    l = int(l)
    if not 1 <= l <= K:
        raise DomainError(f"need 1 <= l <= K, got l={l}, K={K}")
    A = np.zeros((K, K))
    for i in range(1, K + 1):
        for k in range(1, min(l, i) + 1):
            powers = Counter({i: 1})
            powers[l] += 1
            powers[k - 1] -= 1
            powers[k] -= 1
            powers = {j: e for j, e in powers.items() if j >= 1 and e}
            term = math.prod(s[j] ** e for j, e in powers.items())
            for j, e in powers.items():
                A[i - 1, j - 1] += e * term / s[j]
    return A


def flux_jacobian(prof: TbaProfile, l: int, K: int | None = None) -> TruncatedMatrix:
    K = prof.K if K is None else K
    l = _check_index(l)
    if l == INF or l > K or K > prof.K:
        raise DomainError(f"need l <= K <= {prof.K}")
    return TruncatedMatrix(f"flux_jacobian[{l}]", flux_jacobian_sigma(prof.sigma[:K], l))


def correlation_matrices(prof: TbaProfile, l, m, K: int) -> TruncatedMatrix:
    """C^{(l,m)}_{ij} = C^{l,m}_{i,j} for i, j = 1..K with exact tails."""
    l = _check_index(l)
    m = _check_index(m)
    if K < 1:
        raise DomainError("K must be positive")
    if l != INF and m != INF and K < max(l, m):
        raise DomainError("K must be at least max(l, m)")
    a, z = prof.a, prof.z
    if l == INF or m == INF:
        C = np.array([[four_index_correlation(a, z, i, j, l, m) for j in range(1, K + 1)]
                      for i in range(1, K + 1)])
        return TruncatedMatrix(f"correlation[{l},{m}]", C)
    R = max(K, l, m)
    k = np.arange(1, R + 1)
    w = _base_weight(a, z, k)
    V = np.array([_vl(a, z, x, k) for x in range(1, R + 1)])  # V[x-1, k-1]
    wlm = w * V[l - 1] * V[m - 1]
    C = np.empty((K, K))
    for i in range(1, K + 1):
        for j in range(i, K + 1):
            r = max(i, j, l, m)
            head = float(np.dot(wlm[: r - 1], V[i - 1, : r - 1] * V[j - 1, : r - 1]))
            corner = V[i - 1, i - 1] * V[j - 1, j - 1] * V[l - 1, l - 1] * V[m - 1, m - 1]
            C[i - 1, j - 1] = C[j - 1, i - 1] = head + tail_weight(a, z, r) * corner
    return TruncatedMatrix(f"correlation[{l},{m}]", C)


def pseudoenergy_cov_prediction(prof: TbaProfile, i: int) -> float:
    """L <d eps_i d eps_i> = (1 + sigma_i / rho_i) / sigma_i."""
    if not 1 <= i <= prof.K:
        raise DomainError(f"index {i} outside the truncation 1..{prof.K}")
    r, s = prof.rho[i - 1], prof.sigma[i - 1]
    return float((1 + s / r) / s)
