import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from boxball import tba
from boxball.errors import DomainError

INF = tba.INF


def z_of(p):
    return p / (1 - p)


def neville_at_zero(xs, ys):
    p = list(ys)
    for m in range(1, len(xs)):
        for i in range(len(xs) - m):
            p[i] = (-xs[i + m] * p[i] + xs[i] * p[i + 1]) / (xs[i] - xs[i + m])
    return p[0]


# closed rational forms of D^(2..5) at a = z
def d2(z):
    return z * (1 - z) * (1 - z**2) ** 3 * (1 + 11 * z + 11 * z**3 + z**4) / ((1 - z**3) ** 3 * (1 - z**4))


def d3(z):
    poly = np.polyval([1, 11, 44, 29, 30, 29, 44, 11, 1][::-1], z)
    return z * (1 - z) * (1 - z**2) ** 2 * (1 - z**3) / ((1 - z**4) ** 3 * (1 - z**6)) * poly


def d4(z):
    c = [1, 10, 35, 117, 68, 254, 95, 357, 126, 357, 95, 254, 68, 117, 35, 10, 1]
    return z * (1 - z**2) ** 4 * (1 - z**3) / ((1 - z**5) ** 3 * (1 - z**6) * (1 - z**8)) * np.polyval(c[::-1], z)


def d5(z):
    c = [1, 11, 44, 140, 355, 406, 480, 443, 633, 714, 896, 714, 633, 443, 480, 406, 355, 140, 44, 11, 1]
    return (z * (1 - z) * (1 - z**2) ** 2 * (1 - z**4) * (1 - z**5)
            / ((1 - z**6) ** 3 * (1 - z**8) * (1 - z**10)) * np.polyval(c[::-1], z))


RATIONALS = {2: d2, 3: d3, 4: d4, 5: d5}


# ---------------------------------------------------------------- goldens

@pytest.mark.parametrize("p, l, expected", [(0.2, 4, 0.41998), (0.4, 4, 1.63352), (0.3, 10, 1.30166)])
def test_c2_table(p, l, expected):
    z = z_of(p)
    assert tba.c2_analytic(z, z, l) == pytest.approx(expected, abs=6e-6)


@pytest.mark.parametrize("p, l, expected", [
    (0.2, 2, 0.6383506), (0.2, 5, 1.744263), (0.2, 10, 1.901627),
    (0.4, 2, 1.606536), (0.4, 5, 22.570957), (0.4, 10, 117.6194)])
def test_drude_table(p, l, expected):
    z = z_of(p)
    digits = len(f"{expected}".split(".")[1])
    assert tba.drude_analytic(z, z, l) == pytest.approx(expected, abs=0.6 * 10**-digits)


def test_drude_one_is_binomial_variance():
    for p in (0.05, 0.2, 0.37, 0.49):
        z = z_of(p)
        assert tba.drude_analytic(z, z, 1) == pytest.approx(p * (1 - p), rel=1e-14)


def test_profile_golden():
    prof = tba.profile(z_of(0.4), z_of(0.4), 3)
    assert prof.sigma[0] == pytest.approx(0.52, rel=1e-14)
    assert prof.rho[0] == pytest.approx(78 / 475, rel=1e-14)
    assert prof.ball_density == pytest.approx(0.4)


def test_mean_current_golden():
    z = z_of(0.3)
    assert tba.mean_currents(z, z, 10).ball == pytest.approx(0.7490144, abs=6e-8)
    assert tba.iid_current(z, 10) == pytest.approx(tba.mean_currents(z, z, 10).ball, rel=1e-14)
    assert tba.iid_current(z, INF) == pytest.approx(z / (1 - z))


@pytest.mark.parametrize("l", range(1, 9))
def test_half_filling_limit(l):
    hs = [0.04 / 2**j for j in range(6)]
    ys = [tba.drude_analytic(1 - h, 1 - h, l, method="direct") for h in hs]
    assert neville_at_zero(hs, ys) == pytest.approx((l * (l + 2) / 6) ** 2, rel=1e-6)


# ---------------------------------------------------------------- cross-formula

@pytest.mark.parametrize("l", [2, 3, 4, 5])
def test_printed_rationals(l):
    rng = np.random.default_rng(l)
    for z in rng.uniform(0.01, 0.95, 20):
        assert tba.drude_analytic(z, z, l) == pytest.approx(RATIONALS[l](z), rel=1e-9)
        assert tba.drude_analytic(z, z, l, method="direct") == pytest.approx(RATIONALS[l](z), rel=1e-12)


def test_partial_sum_closed_matches_direct():
    for a, z in [(0.3, 0.3), (0.5, 0.25), (0.1, 0.8), (0.7, 0.6), (0.85, 0.85)]:
        for l in range(1, 25):
            c = tba.partial_w_sum(a, z, l, method="closed")
            d = tba.partial_w_sum(a, z, l, method="direct")
            assert c == pytest.approx(d, rel=1e-9, abs=1e-15)


def test_partial_sum_rejects_unknown_method():
    with pytest.raises(ValueError):
        tba.partial_w_sum(0.3, 0.3, 4, method="magic")


@pytest.mark.parametrize("a, z", [(0.25, 0.25), (0.5, 0.25), (0.1, 0.6)])
def test_weights_sum_to_drude_one(a, z):
    total = tba.partial_w_sum(a, z, 2000, method="direct")
    assert total == pytest.approx(tba.drude_one(a, z), rel=1e-12)
    if a == z:
        p = tba.density(a)
        assert total == pytest.approx(p * (1 - p), rel=1e-12)


@pytest.mark.parametrize("a, z", [(0.3, 0.3), (0.5, 0.25), (0.2, 0.7)])
def test_velocities_closed_vs_hole_form(a, z):
    prof = tba.profile(a, z, 120)
    for l in range(1, 15):
        assert np.allclose(tba.velocities(prof, l).v, tba.velocities_hole_form(prof, l), rtol=1e-12, atol=0)
        assert np.max(np.abs(tba.velocity_residual(prof, l))) < 1e-9
    assert np.max(np.abs(tba.velocity_residual(prof, INF))) < 1e-9


def test_velocity_limits():
    prof = tba.profile(0.4, 0.2, 20)
    assert np.allclose(tba.velocities(prof, 1).v, 1.0, rtol=1e-14)
    k = np.arange(1, 21)
    small = tba.profile(1e-9, 1e-9, 20)
    for l in (1, 3, INF):
        expect = k if l == INF else np.minimum(k, l)
        assert np.allclose(tba.velocities(small, l).v, expect, rtol=1e-6)
    with pytest.raises(DomainError):
        tba.velocities_hole_form(prof, INF)


def test_sigma_consistency():
    for a, z in [(0.3, 0.3), (0.5, 0.25)]:
        prof = tba.profile(a, z, 200)
        k = np.arange(1, 201)
        M = 2 * np.minimum.outer(k, k)
        assert np.allclose(prof.sigma[:50], 1 - (M @ prof.rho)[:50], rtol=1e-12)


def test_eta_mean_against_profile_sum():
    for a, z in [(0.3, 0.3), (0.5, 0.25)]:
        prof = tba.profile(a, z, 300)
        k = np.arange(1, 301)
        for l, j in itertools.product([1, 2, 5, INF], [1, 3, 4, INF]):
            charge = k if j == INF else np.minimum(k, j)
            direct = float(np.sum(prof.rho * charge * tba.velocities(prof, l).v))
            assert tba.eta_mean(a, z, l, j) == pytest.approx(direct, rel=1e-12)
            assert tba.eta_mean(a, z, l, j) == pytest.approx(tba.eta_mean(a, z, j, l), rel=1e-14)
        for l in (1, 4, INF):
            cur = tba.mean_currents(a, z, l)
            assert tba.eta_mean(a, z, l, INF) == pytest.approx(cur.ball, rel=1e-13)
            assert tba.eta_mean(a, z, l, 1) == pytest.approx(cur.soliton, rel=1e-13)


@given(st.floats(0.01, 0.97), st.integers(1, 30))
def test_c2_is_derivative_of_current(z, l):
    # i.i.d.: c2 = z d/dz <J>
    h = 1e-5
    fd = (tba.iid_current(z * math.exp(h), l) - tba.iid_current(z * math.exp(-h), l)) / (2 * h)
    assert tba.c2_analytic(z, z, l) == pytest.approx(fd, rel=1e-7, abs=1e-12)


@pytest.mark.parametrize("z", [0.1, 0.4, 0.8])
def test_two_temperature_reduces_to_iid(z):
    a = z * (1 + 1e-12)
    for l in (1, 2, 3, 7, INF):
        assert tba.c2_analytic(a, z, l) == pytest.approx(tba.c2_analytic(z, z, l), rel=1e-9)
        assert tba.drude_analytic(a, z, l) == pytest.approx(tba.drude_analytic(z, z, l), rel=1e-9)
    assert tba.drude_one(a, z) == pytest.approx(tba.drude_one(z, z), rel=1e-9)
    for l in range(1, 6):
        assert tba.partial_w_sum(a, z, l, "closed") == pytest.approx(
            tba.partial_w_sum(z, z, l, "closed"), rel=1e-9, abs=1e-12)


# ---------------------------------------------------------------- four-index correlations

@pytest.mark.parametrize("p", [0.2, 0.3, 0.4])
def test_four_index_special_cases(p):
    z = z_of(p)
    C = tba.four_index_correlation
    assert C(z, z, INF, INF, 1, 1) == pytest.approx(p * (1 - p), rel=1e-12)
    for l in (2, 5, 10):
        assert C(z, z, INF, INF, 1, l) == pytest.approx(tba.c2_analytic(z, z, l), rel=1e-12)
        assert C(z, z, INF, INF, l, l) == pytest.approx(tba.drude_analytic(z, z, l), rel=1e-12)
        assert C(z, z, 99, 99, l, l) == pytest.approx(C(z, z, INF, INF, l, l), rel=1e-12)


def test_four_index_symmetry():
    a, z = 0.5, 0.25
    for idx in [(1, 2, 3, 4), (2, 2, 5, 7), (1, 3, 3, INF)]:
        vals = {tba.four_index_correlation(a, z, *perm) for perm in itertools.permutations(idx)}
        assert max(vals) - min(vals) <= 1e-12 * max(vals)


def test_four_index_tail_is_exact():
    a, z = 0.4, 0.5
    prof = tba.profile(a, z, 400)
    w = prof.rho * prof.sigma * (prof.rho + prof.sigma)
    for idx in [(1, 2, 3, 4), (3, 3, 6, 2)]:
        brute = float(np.sum(w * np.prod([tba.velocities(prof, x).v for x in idx], axis=0)))
        assert tba.four_index_correlation(a, z, *idx) == pytest.approx(brute, rel=1e-12)


# ---------------------------------------------------------------- matrix layer

def printed_a3(s1, s2, s3):
    return np.array([
        [0, 0, 1],
        [-(s2 + 1) * s3 / s1**2, s3 / s1, (s2 + 1) / s1],
        [-(s2 + 1) * s3**2 / (s1**2 * s2), -s3 * (s1 + s3) / (s1 * s2**2), (s1 + 2 * s2 * s3 + 2 * s3) / (s1 * s2)],
    ])


def test_flux_jacobian_printed_block():
    rng = np.random.default_rng(3)
    for _ in range(50):
        sigma = rng.uniform(0.1, 2.0, 6)
        A = tba.flux_jacobian_sigma(sigma, 3)
        assert np.allclose(A[:3, :3], printed_a3(*sigma[:3]), rtol=1e-13, atol=1e-13)
        assert not A[:3, 3:].any()


def test_flux_jacobian_matches_finite_differences():
    rng = np.random.default_rng(4)
    sigma = rng.uniform(0.3, 1.5, 8)

    def flux(s, l):
        full = np.concatenate(([1.0], s))
        return np.array([sum(full[i] * full[l] / (full[k - 1] * full[k]) for k in range(1, min(l, i) + 1))
                         for i in range(1, len(s) + 1)])

    for l in (1, 2, 4):
        h = 1e-6
        fd = np.column_stack([(flux(sigma + h * e, l) - flux(sigma - h * e, l)) / (2 * h) for e in np.eye(8)])
        assert np.allclose(tba.flux_jacobian_sigma(sigma, l), fd, atol=1e-8)


@pytest.mark.parametrize("a, z", [(0.3, 0.3), (0.5, 0.25)])
def test_flux_jacobian_spectrum_and_commutation(a, z):
    prof = tba.profile(a, z, 30)
    A = {l: tba.flux_jacobian(prof, l).values for l in range(1, 6)}
    assert np.array_equal(A[1], np.eye(30))
    for l in range(1, 6):
        ev = np.sort(np.linalg.eigvals(A[l]).real)
        assert np.allclose(ev, np.sort(tba.velocities(prof, l).v), rtol=1e-10)
    for l, m in itertools.combinations(range(1, 6), 2):
        assert np.allclose(A[l] @ A[m], A[m] @ A[l], atol=1e-10)


def test_flux_jacobian_normal_modes():
    # rows of V = [v^(k)_j] diagonalize every A^(l)
    prof = tba.profile(0.4, 0.4, 12)
    V = np.array([tba.velocities(prof, k).v for k in range(1, 13)])
    for l in (2, 3, 5):
        A = tba.flux_jacobian(prof, l).values
        vl = tba.velocities(prof, l).v
        assert np.allclose(A @ V, V * vl[None, :], rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("a, z", [(0.3, 0.3), (0.5, 0.25), (0.6, 0.4)])
def test_correlation_matrices_from_flux_jacobian(a, z):
    K = 40
    prof = tba.profile(a, z, 60)
    C = tba.correlation_matrices(prof, 1, 1, K).values
    for l in (1, 2, 3, 5, 8):
        A = tba.flux_jacobian(prof, l, K).values
        B = tba.correlation_matrices(prof, 1, l, K).values
        D = tba.correlation_matrices(prof, l, l, K).values
        scale = np.abs(D).max()
        assert np.max(np.abs(A @ C - B)) < 1e-9 * scale
        assert np.max(np.abs(A @ C @ A.T - D)) < 1e-9 * scale
        assert np.max(np.abs(A @ C - C @ A.T)) < 1e-9 * scale
    C23 = tba.correlation_matrices(prof, 2, 3, K).values
    assert np.allclose(C23, tba.correlation_matrices(prof, 3, 2, K).values.T, rtol=1e-14)


def test_correlation_matrix_entries():
    prof = tba.profile(0.3, 0.3, 20)
    M = tba.correlation_matrices(prof, 2, 4, 6).values
    assert M[2, 4] == pytest.approx(tba.four_index_correlation(0.3, 0.3, 3, 5, 2, 4), rel=1e-14)
    with pytest.raises(DomainError):
        tba.correlation_matrices(prof, 2, 8, 6)


# ---------------------------------------------------------------- dressing

@pytest.mark.parametrize("a, z", [(0.3 / 0.7, 0.3 / 0.7), (0.5, 0.25)])
def test_dressing_identities(a, z):
    K = 80
    prof = tba.profile(a, z, K)
    G = tba.dressing_matrix(prof).values
    k = np.arange(1, K + 1)
    M = 2.0 * np.minimum.outer(k, k)
    GM = G @ M
    assert np.allclose(GM, GM.T, atol=1e-12)
    assert np.allclose(G.sum(axis=1), prof.sigma, rtol=1e-12)
    for l in (1, 2, 3, 6):
        assert np.allclose(GM[:40, l - 1], 2 * prof.sigma[:40] * tba.velocities(prof, l).v[:40], rtol=1e-10)


def test_pseudoenergy_derivative_identities():
    a = z = 0.3 / 0.7
    K, l = 80, 3
    prof = tba.profile(a, z, K)
    k = np.arange(1, K + 1)
    M = 2.0 * np.minimum.outer(k, k)

    def currents(y):
        G = np.linalg.inv(np.eye(K) + M * y[None, :])
        sig = G @ np.ones(K)
        rho = y * sig
        v = (G @ np.minimum(k, l)) / sig
        return float(k @ rho), float((k * rho) @ v)

    vinf = tba.velocities(prof, INF).v
    vl = tba.velocities(prof, l).v
    h = 1e-5
    for i in (1, 2, 5):
        up, down = prof.y.copy(), prof.y.copy()
        up[i - 1] *= math.exp(-h)
        down[i - 1] *= math.exp(h)
        (bp, jp), (bm, jm) = currents(up), currents(down)
        rs = prof.rho[i - 1] * prof.sigma[i - 1]
        assert (bp - bm) / (2 * h) == pytest.approx(-rs * vinf[i - 1], rel=1e-7)
        assert (jp - jm) / (2 * h) == pytest.approx(-rs * vinf[i - 1] * vl[i - 1], rel=1e-7)


def test_pseudoenergy_prediction():
    prof = tba.profile(z_of(0.4), z_of(0.4), 10)
    expected = [8.01282, 27.2183, 65.5367, 131.789, 238.454]
    for i, e in enumerate(expected, 1):
        assert tba.pseudoenergy_cov_prediction(prof, i) == pytest.approx(e, rel=1e-5)


def test_domain_errors():
    with pytest.raises(DomainError):
        tba.profile(1.0, 0.5)
    with pytest.raises(DomainError):
        tba.c2_analytic(0.3, 0.3, 0)
    with pytest.raises(DomainError):
        tba.c2_analytic(0.3, 0.3, 2.5)
    with pytest.raises(DomainError):
        tba.fugacity(0.5)
