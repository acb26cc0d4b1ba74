"""Acceptance suite: one PASS/FAIL line per criterion.

Run with pytest (lines are printed in the terminal summary) or directly as
``python tests/test_acceptance.py``.  The Monte Carlo part takes several minutes
on one core.
"""
import math
import sys
import time

import numpy as np

from boxball import ldf, tba, transfer
from boxball.ensembles import IidSpec
from boxball.measure import (MeasurementPlan, histogram_theory, measure_cumulants,
                             measure_generalized_correlation, measure_histogram,
                             measure_pseudoenergy_covariance, sum_rule_check)

import test_dynamics as tdyn
import test_ldf as tldf
import test_tba as ttba

RESULTS = []
SEED = 1


def z_of(p):
    return p / (1 - p)


def record(crit, name, ok, detail=""):
    RESULTS.append((crit, name, bool(ok), detail))
    line = f"{'PASS' if ok else 'FAIL'}  [{crit}] {name}" + (f"  ({detail})" if detail else "")
    if __name__ == "__main__":
        print(line, flush=True)
    return ok


def run_check(crit, name, fn, *args):
    try:
        fn(*args)
    except AssertionError as exc:
        return record(crit, name, False, str(exc).splitlines()[0][:160] if str(exc) else "assertion failed")
    return record(crit, name, True)


def group_ok(crit):
    bad = [name for c, name, ok, _ in RESULTS if c == crit and not ok]
    assert not bad, f"criterion {crit} failed: {bad}"


def printed_tol(printed: str) -> float:
    """Half a unit in the last printed digit."""
    return 0.5 * 10.0 ** -len(printed.split(".")[1])


def golden(crit, name, value, printed: str):
    target = float(printed)
    tol = max(1e-6 * abs(target), printed_tol(printed))
    err = abs(value - target)
    return record(crit, name, err <= tol, f"{value:.10g} vs {printed}, |diff| {err:.2g} <= {tol:.2g}")


# ---------------------------------------------------------------- 1. golden analytics

def test_1_golden_analytics():
    c = "1"
    for p, l, printed in [(0.2, 4, "0.41998"), (0.4, 4, "1.63352"), (0.3, 10, "1.30166")]:
        z = z_of(p)
        golden(c, f"c2 p={p} l={l}", tba.c2_analytic(z, z, l), printed)
        tm = transfer.c2_via_tm(l, z)
        record(c, f"c2 p={p} l={l} analytic vs transfer matrix",
               abs(tm - tba.c2_analytic(z, z, l)) <= 1e-6 * tm)
    table = {0.2: [(2, "0.6383506", "0.672498"), (5, "1.744263", "1.857532"), (10, "1.901627", "2.023662")],
             0.4: [(2, "1.606536", "1.790640"), (5, "22.570957", "26.04813"), (10, "117.6194", "134.2497390")]}
    for p, rows in table.items():
        z = z_of(p)
        for l, D, f in rows:
            golden(c, f"Drude p={p} l={l}", tba.drude_analytic(z, z, l), D)
            golden(c, f"f p={p} l={l}", transfer.equal_time_variance(l, z), f)
    prof = tba.profile(z_of(0.4), z_of(0.4), 60)
    for i, printed in enumerate(["8.01282", "27.2183", "65.5367", "131.789", "238.454"], start=1):
        golden(c, f"pseudoenergy variance i={i} p=0.4", tba.pseudoenergy_cov_prediction(prof, i), printed)
    _, d1, d2 = ldf.scgf_derivatives(z_of(0.3), 10, 0.0, order=2)
    golden(c, "F'(0) p=0.3 l=10", d1, "0.7490144")
    golden(c, "F''(0) p=0.3 l=10", d2, "1.3016578")
    for l in range(1, 9):
        hs = [0.04 / 2**j for j in range(6)]
        ys = [tba.drude_analytic(1 - h, 1 - h, l, method="direct") for h in hs]
        lim = ttba.neville_at_zero(hs, ys)
        target = (l * (l + 2) / 6) ** 2
        record(c, f"half-filling limit l={l}", abs(lim - target) <= 1e-6 * target, f"{lim:.10g} vs {target:.10g}")
    group_ok(c)


# ---------------------------------------------------------------- 2. cross-formula identities

def test_2_cross_identities():
    c = "2"
    for l in (2, 3, 4, 5):
        run_check(c, f"printed D^({l}) rational vs W sum, 20 random z, rel 1e-9", ttba.test_printed_rationals, l)
    for l in range(1, 13):
        run_check(c, f"f vs conjectured closed form and c2 via transfer matrix, l={l}",
                  transfer_check, l)
    for a, z in [(0.3, 0.3), (0.5, 0.25), (0.2, 0.7)]:
        run_check(c, f"velocities closed vs hole form a={a} z={z}", ttba.test_velocities_closed_vs_hole_form, a, z)
    for a, z in [(0.25, 0.25), (0.5, 0.25), (0.1, 0.6)]:
        run_check(c, f"sum of W_i equals D^(1) a={a} z={z}", ttba.test_weights_sum_to_drude_one, a, z)
    for z in (0.1, 0.4, 0.8):
        run_check(c, f"two-temperature TBA reduces to i.i.d. z={z}", ttba.test_two_temperature_reduces_to_iid, z)
    for l in (1, 3, 8, tba.INF):
        run_check(c, f"two-temperature SCGF reduces to i.i.d. l={l}", tldf.test_scgf_2t_reduces, l)
    group_ok(c)


def transfer_check(l):
    for z in (0.05, 0.25, z_of(0.3), 0.6, 0.85):
        f = transfer.equal_time_variance(l, z)
        assert abs(transfer.conjectured_f(l, z) - f) <= 1e-9 * f, (l, z)
        c2 = tba.c2_analytic(z, z, l)
        assert abs(transfer.c2_via_tm(l, z) - c2) <= 1e-9 * c2, (l, z)


# ---------------------------------------------------------------- 3. matrix layer

def test_3_matrix_layer():
    c = "3"
    run_check(c, "A^(3) printed block at random sigma", ttba.test_flux_jacobian_printed_block)
    for a, z in [(0.3, 0.3), (0.5, 0.25)]:
        run_check(c, f"A^(1)=Id, spectrum = velocities, commutation a={a} z={z}",
                  ttba.test_flux_jacobian_spectrum_and_commutation, a, z)
    for a, z in [(0.3, 0.3), (0.5, 0.25), (0.6, 0.4)]:
        run_check(c, f"B = A C and D = A C A^T at K=40, a={a} z={z}",
                  ttba.test_correlation_matrices_from_flux_jacobian, a, z)
    group_ok(c)


# ---------------------------------------------------------------- 4. microscopic structure

def test_4_microscopic():
    c = "4"
    fig = "00011100110"
    t0 = time.time()
    for L in range(1, 13):
        run_check(c, f"conservation and commutativity, all rings L={L}, l,i <= 4",
                  tdyn.test_exhaustive_conservation_and_commutativity, L)
    run_check(c, "R inversion, capacities <= 5", tdyn.test_r_inversion_exhaustive)
    run_check(c, "Yang-Baxter, capacities <= 4", tdyn.test_yang_baxter_exhaustive)
    run_check(c, "current field index symmetry, 1e4 random cases", tdyn.test_current_field_symmetric_randomized)
    run_check(c, "worked example: open sweep trace", tdyn.test_open_sweep_golden, fig)
    run_check(c, "worked example: periodic sweep", tdyn.test_periodic_golden, fig)
    run_check(c, "worked example: current field", tdyn.test_current_field_golden, fig)
    record(c, "exhaustive checks finish in seconds", time.time() - t0 < 300, f"{time.time() - t0:.1f} s")
    group_ok(c)


# ---------------------------------------------------------------- 5. Monte Carlo

def test_5a_c2_monte_carlo():
    c = "5"
    for p, l in [(0.2, 4), (0.4, 4), (0.3, 10)]:
        z = z_of(p)
        probe = MeasurementPlan(IidSpec(10_000, p), l=l, t=500)
        L = max(10_000, probe.min_length(l))
        res = measure_cumulants(MeasurementPlan(IidSpec(L, p, seed=SEED), l=l, t=500, samples=100_000))
        theory = tba.c2_analytic(z, z, l)
        zs = abs(res[2].value - theory) / res[2].stderr
        record(c, f"c2 Monte Carlo p={p} l={l} t=500 L={L}", zs < 3,
               f"{res[2].value:.5f} +- {res[2].stderr:.5f} vs {theory:.5f}, {zs:.2f} sigma")
    group_ok(c)


def test_5b_pseudoenergy_covariance():
    c = "5"
    z = z_of(0.4)
    prof = tba.profile(z, z, 60)
    plan = MeasurementPlan(IidSpec(20_000, 0.4, seed=SEED), l=1, t=0, samples=1_000_000)
    val, err, _ = measure_pseudoenergy_covariance(plan, 5)
    for i in range(1, 6):
        pred = tba.pseudoenergy_cov_prediction(prof, i)
        rel = val[i - 1, i - 1] / pred - 1
        record(c, f"pseudoenergy variance i={i} p=0.4 within 2%", abs(rel) < 0.02,
               f"{val[i - 1, i - 1]:.4f} +- {err[i - 1, i - 1]:.4f} vs {pred:.4f}, {100 * rel:+.2f}%")
    group_ok(c)


def test_5c_generalized_correlation():
    c = "5"
    z = z_of(0.3)
    drude = tba.drude_analytic(z, z, 5)
    for n, equal in [(2, False), (5, True), (7, True)]:
        probe = MeasurementPlan(IidSpec(1000, 0.3), l=5, t=200, n=n)
        plan = MeasurementPlan(IidSpec(probe.min_length(n), 0.3, seed=SEED), l=5, t=200, n=n, m=5, i=99, j=99,
                               samples=64_000)
        est = measure_generalized_correlation(plan)
        zs = abs(est.value - drude) / est.stderr
        ok = zs < 3 if equal else zs > 3
        record(c, f"C^(5,5,{n})_(99,99) {'equals' if equal else 'differs from'} D^(5)", ok,
               f"{est.value:.4f} +- {est.stderr:.4f} vs {drude:.4f}, {zs:.2f} sigma")
    group_ok(c)


def test_5d_sum_rule():
    c = "5"
    probe = MeasurementPlan(IidSpec(100, 0.2), l=3, t=20)
    plan = MeasurementPlan(IidSpec(probe.min_length(3), 0.2, seed=SEED), l=3, t=20, samples=1_000_000)
    res = sum_rule_check(plan, "abs")
    record(c, "sum rule p=0.2 l=3 t=20 f=|x|, z-score < 3", res.z_score < 3,
           f"lhs {res.lhs:.6f} rhs {res.rhs:.6f} z {res.z_score:.2f}")
    group_ok(c)


# ---------------------------------------------------------------- 6. large deviations

def _chi2_sf(x, k):
    # Wilson-Hilferty normal approximation to the chi-square tail
    s = ((x / k) ** (1 / 3) - (1 - 2 / (9 * k))) / math.sqrt(2 / (9 * k))
    return 0.5 * math.erfc(s / math.sqrt(2))


def _window_chi2(counts, expected):
    """Pearson chi-square with neighbouring bins merged until each expects >= 5."""
    obs, exp = [], []
    o = e = 0.0
    for ov, ev in zip(counts, expected):
        o, e = o + ov, e + ev
        if e >= 5:
            obs.append(o)
            exp.append(e)
            o = e = 0.0
    if e > 0:
        obs[-1] += o
        exp[-1] += e
    obs, exp = np.array(obs), np.array(exp)
    return float(np.sum((obs - exp) ** 2 / exp)), obs.size


def _gauss_mass(values, mean, var):
    w = np.exp(-((values - mean) ** 2) / (2 * var))
    return w / w.sum()


def test_6_histogram_rate_function():
    c = "6"
    p, l, t, n = 0.3, 10, 400, 100_000
    z = z_of(p)
    probe = MeasurementPlan(IidSpec(1000, p), l=l, t=t)
    h = measure_histogram(MeasurementPlan(IidSpec(probe.min_length(l), p, seed=SEED), l=l, t=t, samples=n))
    values = np.arange(h.values.min(), h.values.max() + 1)
    counts = np.zeros(values.size)
    counts[h.values - values[0]] = h.counts
    theory = histogram_theory(z, l, t, values) * n
    refined = histogram_theory(z, l, t, values, prefactor=True) * n
    centre = t * tba.iid_current(z, l)
    sd = math.sqrt(t * tba.c2_analytic(z, z, l))
    inside = np.abs(values - centre) <= 4 * sd
    for label, curve in [("-t G(N/t)", theory), ("-t G(N/t) + (1/2) ln G''(N/t)", refined)]:
        chi2, bins = _window_chi2(counts[inside], curve[inside])
        pval = _chi2_sf(chi2, bins)
        record(c, f"log-probability follows {label} over the central 4 sigma window", pval > 1e-3,
               f"chi2 {chi2:.1f} on {bins} bins, p {pval:.3g}")

    mean = float(values @ counts / n)
    var = float(((values - mean) ** 2) @ counts / (n - 1))
    gauss = _gauss_mass(values, mean, var) * n
    s = math.sqrt(var)
    for side, mask in [("right", values >= mean + 2.5 * s), ("left", values <= mean - 2.5 * s)]:
        excess_obs = counts[mask].sum() - gauss[mask].sum()
        excess_th = theory[mask].sum() - gauss[mask].sum()
        zs = excess_obs / math.sqrt(gauss[mask].sum())
        record(c, f"{side} tail deviation from the Gaussian fit has the rate-function sign",
               np.sign(excess_obs) == np.sign(excess_th) and abs(zs) > 2,
               f"observed {excess_obs:+.0f} ({zs:+.1f} sigma), rate function {excess_th:+.0f}")
    group_ok(c)


if __name__ == "__main__":
    failed = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn()
            except AssertionError:
                failed += 1
    print(f"{sum(ok for *_, ok, _ in RESULTS)} of {len(RESULTS)} checks passed")
    sys.exit(1 if failed else 0)
