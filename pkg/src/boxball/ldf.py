"""Scaled cumulant generating functions and rate functions of transferred balls.

For finite capacity the SCGF is the log-partition function of a carrier load
distributed as ``zeta**k`` on ``k = 0..l`` with ``zeta = z e**lambda``, so its
derivatives are the cumulants of that truncated geometric law.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tba
from .errors import DomainError, OutsideScgfDomain, RootNotBracketed

INF = math.inf
J_TOL = 1e-13

__all__ = [
    "INF",
    "ScgfPoint",
    "RatePoint",
    "scgf",
    "scgf_derivatives",
    "rate",
    "alpha_of",
    "scgf_2t",
    "joint_cumulants_2t",
    "rate_2t_inf",
    "multipliers_2t_inf",
]


@dataclass(frozen=True)
class ScgfPoint:
    """F at (lambda[, mu]) with its analytic gradient."""

    lam: float
    value: float
    derivative: float
    mu: float = 0.0
    d_mu: float = 0.0


@dataclass(frozen=True)
class RatePoint:
    j: float
    value: float
    lam: float


def _check_z(z: float) -> None:
    if not 0 < z < 1:
        raise DomainError(f"need 0 < z < 1, got {z}")


def _check_l(l):
    if l == INF:
        return INF
    if isinstance(l, bool) or int(l) != l or l < 1:
        raise DomainError(f"capacity must be a positive integer or INF, got {l!r}")
    return int(l)


def _moments(z: float, l: int, lam: float, order: int):
    """log-partition and central moments 1..order of k ~ (z e^lam)^k, k = 0..l."""
    k = np.arange(l + 1, dtype=float)
    w = k * (math.log(z) + lam)
    wmax = w.max()
    p = np.exp(w - wmax)
    s = p.sum()
    logz = wmax + math.log(s)
    p /= s
    mean = float(p @ k)
    d = k - mean
    out = [logz, mean]
    for n in range(2, order + 1):
        out.append(float(p @ d**n))
    return out


def _log_norm(z: float, l: int) -> float:
    return _moments(z, l, 0.0, 1)[0]


def scgf_derivatives(z: float, l, lam: float = 0.0, order: int = 3) -> tuple[float, ...]:
    """(F, F', F'', ...) up to ``order`` (at most 3), analytic."""
    _check_z(z)
    l = _check_l(l)
    if not 1 <= order <= 3:
        raise DomainError("order must be 1, 2 or 3")
    if l == INF:
        zeta = z * math.exp(lam)
        if zeta >= 1:
            raise OutsideScgfDomain(f"z e^lambda = {zeta} >= 1: SCGF diverges")
        q = 1 - zeta
        vals = [math.log((1 - z) / q), zeta / q, zeta / q**2, zeta * (1 + zeta) / q**3]
        return tuple(vals[: order + 1])
    m = _moments(z, l, lam, order)
    return (m[0] - _log_norm(z, l), *m[1:])


def scgf(z: float, l, lam: float) -> ScgfPoint:
    """F^{(l)}(lambda) = ln((1-zeta^{l+1})/(1-zeta)) - ln((1-z^{l+1})/(1-z)), zeta = z e^lambda."""
    F, dF = scgf_derivatives(z, l, lam, 1)
    return ScgfPoint(float(lam), float(F), float(dF))


def _solve_lambda(z: float, l: int, j: float) -> float:
    """lambda with F'(lambda) = j, by geometric bracketing, bisection and Newton."""

    def g(lam):
        return _moments(z, l, lam, 1)[1] - j

    g0 = g(0.0)
    if g0 == 0:
        return 0.0
    step = 1.0 if g0 < 0 else -1.0
    lo, hi = 0.0, step
    while g(hi) * (1 if step > 0 else -1) < 0:
        lo = hi
        step *= 2
        hi += step
        if abs(hi) > 1e6:
            raise RootNotBracketed(f"could not bracket F'(lambda) = {j}")
    a, b = (lo, hi) if lo < hi else (hi, lo)
    for _ in range(200):
        if b - a < 1e-3:
            break
        mid = 0.5 * (a + b)
        if g(mid) < 0:
            a = mid
        else:
            b = mid
    lam = 0.5 * (a + b)
    for _ in range(100):
        _, mean, var = _moments(z, l, lam, 2)
        r = mean - j
        if abs(r) <= J_TOL * max(1.0, abs(j)):
            return lam
        if r < 0:
            a = lam
        else:
            b = lam
        nxt = lam - r / var if var > 0 else 0.5 * (a + b)
        if not a < nxt < b:
            nxt = 0.5 * (a + b)
        if nxt == lam:
            return lam
        lam = nxt
    if b - a <= 4 * math.ulp(max(abs(a), abs(b), 1.0)):
        return lam
    raise RootNotBracketed(f"Newton polish did not reach |F' - j| < {J_TOL}")


def rate(z: float, l, j: float) -> RatePoint:
    """Legendre transform G(j) = j lambda* - F(lambda*) with F'(lambda*) = j.

    The endpoints j = 0 and j = l are included via their limits, with
    lambda* = -inf and +inf respectively.
    """
    _check_z(z)
    l = _check_l(l)
    if l == INF:
        if j < 0:
            raise DomainError(f"need j >= 0 for l = INF, got {j}")
        if j == 0:
            return RatePoint(0.0, -math.log1p(-z), -INF)
        g = -math.log1p(-z) - j * math.log(z) - (1 + j) * math.log1p(j) + j * math.log(j)
        return RatePoint(float(j), g, math.log(j / ((1 + j) * z)))
    if not 0 <= j <= l:
        raise DomainError(f"need 0 <= j <= {l}, got {j}")
    norm = _log_norm(z, l)
    if j == 0:
        return RatePoint(0.0, norm, -INF)
    if j == l:
        return RatePoint(float(j), norm - l * math.log(z), INF)
    lam = _solve_lambda(z, l, j)
    F = scgf_derivatives(z, l, lam, 1)[0]
    return RatePoint(float(j), float(j * lam - F), float(lam))


def alpha_of(lam: float, mu: float, a: float, z: float) -> tuple[float, float]:
    """(alpha, zeta) of the ensemble shifted by (lambda, mu).

    zeta = z e^lambda and alpha is the positive root of
    (alpha^1/2 - alpha^-1/2) / (zeta^1/2 - zeta^-1/2) = e^{(beta1 - mu)/2}.
    """
    tba._check_state(a, z)
    zeta = z * math.exp(lam)
    if not zeta > 0 or not math.isfinite(zeta):
        raise DomainError(f"invalid shifted fugacity {zeta}")
    if zeta == 1:
        raise DomainError("zeta = 1: the two-temperature parameterization degenerates")
    ratio = (math.sqrt(a) - 1 / math.sqrt(a)) / (math.sqrt(z) - 1 / math.sqrt(z))
    c = ratio * math.exp(-0.5 * mu) * (math.sqrt(zeta) - 1 / math.sqrt(zeta))
    # s - 1/s = c with s = alpha^1/2 > 0; pick the cancellation-free form
    disc = math.sqrt(c * c + 4)
    s = (c + disc) / 2 if c >= 0 else 2 / (disc - c)
    return s * s, zeta


def _geom(x: float, n: int) -> float:
    """(1 - x^n) / (1 - x), stable near x = 1."""
    if abs(1 - x) < 1e-6:
        return float(np.sum(x ** np.arange(n, dtype=float)))
    return (1 - x**n) / (1 - x)


def _currents_2t(alpha: float, zeta: float, l) -> tuple[float, float]:
    if l == INF:
        return (alpha * (1 + zeta) / ((1 + alpha) * (1 - zeta)), alpha / (1 + alpha))
    zl = zeta**l
    den = 1 - alpha * zl
    ball = alpha * (1 + zeta) * _geom(zeta, l) / ((1 + alpha) * den) - l * alpha * zl / den
    sol = alpha * (1 - zl) / ((1 + alpha) * den)
    return ball, sol


def scgf_2t(a: float, z: float, l, lam: float, mu: float) -> ScgfPoint:
    """Joint SCGF of (balls, solitons) crossing a bond, with its gradient."""
    tba._check_state(a, z)
    l = _check_l(l)
    alpha, zeta = alpha_of(lam, mu, a, z)
    if l == INF:
        if zeta >= 1 or alpha >= 1:
            raise OutsideScgfDomain("l = INF needs zeta < 1 and alpha < 1")
        F = math.log((1 - a) / (1 - alpha))
    else:
        num = 1 - alpha * zeta**l
        if alpha == 1 or num / (1 - alpha) <= 0:
            raise DomainError(f"F undefined at alpha={alpha}, zeta={zeta}")
        F = math.log(num / (1 - alpha)) - math.log((1 - a * z**l) / (1 - a))
    dl, dm = _currents_2t(alpha, zeta, l)
    return ScgfPoint(float(lam), float(F), float(dl), float(mu), float(dm))


def joint_cumulants_2t(a: float, z: float, l) -> tuple[float, float, float]:
    """Scaled second cumulants (<N_inf^2>, <N_inf N_1>, <N_1^2>) per unit time."""
    tba._check_state(a, z)
    l = _check_l(l)
    zl = 0.0 if l == INF else z**l
    lzl = 0.0 if l == INF else l * zl
    q = (1 + a) ** 3 * (1 - a * zl) ** 2
    cross = a * (1 - a) * ((1 + z) * (1 - zl) * (1 + a * a * zl) - (1 + a) ** 2 * (1 - z) * lzl) / (q * (1 - z))
    c11 = a * (1 - a) * (1 - zl) * (1 + a * a * zl) / q
    return tba.c2_analytic(a, z, l), float(cross), float(c11)


def _check_wedge(J_inf: float, J_1: float) -> None:
    if not 0 < J_1 < min(1.0, J_inf):
        raise DomainError(f"need 0 < J_1 < min(1, J_inf), got J_inf={J_inf}, J_1={J_1}")


def multipliers_2t_inf(a: float, z: float, J_inf: float, J_1: float) -> tuple[float, float]:
    """(lambda*, mu*) conjugate to the currents (J_inf, J_1) at l = INF."""
    tba._check_state(a, z)
    _check_wedge(J_inf, J_1)
    if J_1 == 0.5:
        raise DomainError("mu* diverges at J_1 = 1/2")
    lam = math.log((J_inf - J_1) / (z * (J_inf + J_1)))
    mu = math.log(4 * (1 - J_1) * J_1**3 * (a + 1 / a - 2)
                  / ((J_inf**2 - J_1**2) * (1 - 2 * J_1) ** 2 * (z + 1 / z - 2)))
    return lam, mu


def rate_2t_inf(a: float, z: float, J_inf: float, J_1: float) -> float:
    """Joint rate function of (ball, soliton) currents at infinite capacity.

    The ln|1 - 2 J_1| pieces of the closed form are collected into
    (1 - 2 J_1) ln|1 - 2 J_1|, which is continuous (zero) at J_1 = 1/2.
    """
    tba._check_state(a, z)
    _check_wedge(J_inf, J_1)
    d = 1 - 2 * J_1
    corr = d * math.log(abs(d)) if d != 0 else 0.0
    return (J_inf * math.log((J_inf - J_1) / (z * (J_inf + J_1)))
            + J_1 * math.log(4 * (1 - J_1) * J_1**3 * (a + 1 / a - 2)
                             / ((J_inf**2 - J_1**2) * (z + 1 / z - 2)))
            + corr - math.log((1 - a) * (1 - J_1)))
