"""Acceptance suite: every release criterion at its stated tolerance.

Each test prints one pass/fail line (collected into the terminal summary)
and then asserts, so a red criterion is visible both ways. Criteria 3, 4,
and 8 share one desk-scale Monte Carlo study.
"""

import json
import time

import numpy as np
import pytest
from scipy import integrate

from expertkm.bandwidth import cv_score_at_t
from expertkm.cli import main as cli_main
from expertkm.curves import StepCurve
from expertkm.estimator import fit_conditional_km, product_integral
from expertkm.experts import JudgmentBias, bias_functional, biased_limit
from expertkm.kernels import default_kernel, univariate_truncated_gaussian
from expertkm.simulation import (
    DisabilityScenario,
    McExpertSpec,
    run_mc_study,
    true_biased_center,
    true_sigma_z,
    true_survival_disability,
)

from .conftest import ACCEPTANCE_LINES
from .oracles import direct_loo_cv, km_survival_at, textbook_km

TABLE_CELLS_100 = {
    (45.0, 2.0): 0.9510,
    (45.0, 5.0): 0.8787,
    (45.0, 10.0): 0.7616,
    (50.0, 2.0): 0.9460,
    (50.0, 5.0): 0.8668,
    (50.0, 10.0): 0.7401,
    (55.0, 2.0): 0.9405,
    (55.0, 5.0): 0.8539,
    (55.0, 10.0): 0.7171,
}
TABLE_CELLS_85 = {
    (45.0, 2.0): 0.9480,
    (45.0, 5.0): 0.8716,
    (45.0, 10.0): 0.7498,
    (50.0, 2.0): 0.9430,
    (50.0, 5.0): 0.8599,
    (50.0, 10.0): 0.7284,
    (55.0, 2.0): 0.9375,
    (55.0, 5.0): 0.8470,
    (55.0, 10.0): 0.7059,
}

DESK_Z = np.unique(np.concatenate([np.arange(40.0, 60.1, 2.0), [45.0, 50.0, 55.0]]))
DESK_T = np.unique(np.concatenate([np.arange(0.0, 30.1, 2.0), [2.0, 5.0, 10.0]]))
CHECK_Z = (45.0, 50.0, 55.0)
CHECK_T = (2.0, 5.0, 10.0)


def report(criterion: str, passed: bool, detail: str):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)


@pytest.fixture(scope="module")
def desk_study():
    scenario = DisabilityScenario(n=2_000)
    return run_mc_study(
        scenario,
        [
            McExpertSpec.naive(),
            McExpertSpec.partial(scenario, 0.85),
            McExpertSpec.partial(scenario, 1.0),
        ],
        z_values=DESK_Z,
        t_values=DESK_T,
        replications=100,
        rho=0.3,
        seed=20_240 ,
        threads=4,
    )


def _cell(study, label, z, t):
    e = study.expert_index(label)
    i = int(np.flatnonzero(study.z_values == z)[0])
    j = int(np.flatnonzero(study.t_values == t)[0])
    return e, i, j


def test_criterion_1_classical_km_reduction():
    started = time.monotonic()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 201))
        w = np.round(rng.uniform(0.0, 8.0, n), 1)  # heavy ties
        d = rng.integers(0, 2, n)
        fit = fit_conditional_km(w, d, np.zeros((n, 1)), [0.0], 1.0)
        distinct, surv = textbook_km(w, d)
        grid = np.concatenate([[0.0], distinct, distinct + 0.05])
        diff = np.max(np.abs(fit.survival(grid) - km_survival_at(distinct, surv, grid)))
        worst = max(worst, float(diff))
    elapsed = time.monotonic() - started
    ok = worst <= 1e-12 and elapsed < 10.0
    report("1", ok, f"classical reduction max diff {worst:.2e} over 200 datasets in {elapsed:.1f}s")
    assert worst <= 1e-12
    assert elapsed < 10.0


def test_criterion_2_true_center_reproduction():
    started = time.monotonic()
    worst_100 = max(
        abs(true_survival_disability(t, z) - target)
        for (z, t), target in TABLE_CELLS_100.items()
    )
    worst_85 = max(
        abs(true_biased_center(t, z, 0.85) - target)
        for (z, t), target in TABLE_CELLS_85.items()
    )
    elapsed = time.monotonic() - started
    ok = worst_100 <= 5e-4 and worst_85 <= 1e-3 and elapsed < 60.0
    report(
        "2",
        ok,
        f"true centers: full-effectiveness max err {worst_100:.1e} (tol 5e-4), "
        f"partial max err {worst_85:.1e} (tol 1e-3) in {elapsed:.1f}s",
    )
    assert worst_100 <= 5e-4
    assert worst_85 <= 1e-3
    assert elapsed < 60.0


def test_criterion_3_mc_mean_convergence_desk(desk_study):
    worst = 0.0
    for label, eff in (("partial_0.85", 0.85), ("partial_1", 1.0)):
        for z in CHECK_Z:
            for t in CHECK_T:
                e, i, j = _cell(desk_study, label, z, t)
                center = (
                    true_survival_disability(t, z)
                    if eff == 1.0
                    else true_biased_center(t, z, eff)
                )
                worst = max(worst, abs(float(desk_study.means[e, i, j]) - center))
    ok = worst <= 0.015
    report("3", ok, f"desk-scale MC mean error {worst:.4f} (tol 0.015, R=100, n=2000)")
    assert worst <= 0.015


@pytest.mark.full_scale
def test_criterion_3_full_scale_opt_in():
    scenario = DisabilityScenario(n=10_000)
    study = run_mc_study(
        scenario,
        [McExpertSpec.partial(scenario, 0.85), McExpertSpec.partial(scenario, 1.0)],
        z_values=list(CHECK_Z),
        t_values=list(CHECK_T),
        replications=300,
        rho=0.3,
        seed=77_000,
        threads=4,
    )
    worst = 0.0
    for label, eff in (("partial_0.85", 0.85), ("partial_1", 1.0)):
        for z in CHECK_Z:
            for t in CHECK_T:
                e, i, j = _cell(study, label, z, t)
                center = (
                    true_survival_disability(t, z)
                    if eff == 1.0
                    else true_biased_center(t, z, eff)
                )
                worst = max(worst, abs(float(study.means[e, i, j]) - center))
    ok = worst <= 0.006
    report("3 (full scale)", ok, f"full-scale MC mean error {worst:.4f} (tol 0.006, R=300, n=10000)")
    assert worst <= 0.006


def test_criterion_4_variance_sanity(desk_study):
    scenario = desk_study.scenario
    n_bw = scenario.n * desk_study.bandwidth.det
    worst_ratio = 1.0
    for label in ("partial_0.85", "partial_1"):
        for z in CHECK_Z:
            for t in CHECK_T:
                e, i, j = _cell(desk_study, label, z, t)
                empirical = float(desk_study.stds[e, i, j])
                plug = true_sigma_z(t, z, scenario.n, desk_study.bandwidth.det, scenario)
                ratio = max(plug / empirical, empirical / plug)
                worst_ratio = max(worst_ratio, ratio)
    ok = worst_ratio <= 2.0
    report("4", ok, f"plug-in vs empirical dispersion worst ratio {worst_ratio:.2f} (tol 2.0)")
    assert worst_ratio <= 2.0


def test_criterion_5_cv_shortcut_identity():
    started = time.monotonic()
    rng = np.random.default_rng(505)
    worst = 0.0
    parity_failures = 0
    for _ in range(100):
        n = int(rng.integers(4, 31))
        w = np.round(rng.uniform(0.0, 5.0, n), 1)
        d = rng.integers(0, 2, n).astype(float)
        eta = d * rng.integers(0, 2, n)
        Z = rng.normal(scale=rng.uniform(0.3, 2.0), size=(n, 1))
        for _ in range(5):
            t = float(rng.uniform(0.0, 5.0))
            b = float(rng.uniform(0.05, 2.5))
            shortcut, excluded_s = cv_score_at_t(t, w, eta, Z, b, use_judgments=True)
            responses = (w <= t).astype(float) * eta
            oracle, excluded_o = direct_loo_cv(t, w, responses, Z, [b])
            if excluded_s != excluded_o:
                parity_failures += 1
                continue
            if np.isnan(shortcut) and np.isnan(oracle):
                continue
            worst = max(worst, abs(shortcut - oracle))
    elapsed = time.monotonic() - started
    ok = worst <= 1e-10 and parity_failures == 0 and elapsed < 30.0
    report(
        "5",
        ok,
        f"shortcut vs direct LOO max diff {worst:.2e} (tol 1e-10), "
        f"{parity_failures} exclusion mismatches in {elapsed:.1f}s",
    )
    assert parity_failures == 0
    assert worst <= 1e-10
    assert elapsed < 30.0


def test_criterion_6_bias_functional_properties():
    observed = StepCurve(np.array([1.0, 2.0, 3.0]), np.array([0.3, 0.3, 0.2]), monotone=True)
    events = StepCurve(np.array([1.0, 2.0, 3.0]), np.array([0.3, 0.2, 0.1]), monotone=True)
    p_hat = lambda w, z: np.full(len(w), 0.6)

    full = bias_functional(p_hat, 1.0, observed, events, [0.0])
    exact_zero = np.all(full.curve.sizes == 0.0)

    values = [
        bias_functional(p_hat, eff, observed, events, [0.0]).curve.value(3.0)
        for eff in (0.0, 0.25, 0.5, 0.85, 1.0)
    ]
    strictly_decreasing = all(a > b for a, b in zip(values, values[1:]))

    lam = StepCurve(np.array([1.0, 2.5]), np.array([0.25, 0.5]), monotone=True)
    zero_bias = JudgmentBias(
        curve=StepCurve(np.array([]), np.array([])), effectiveness=1.0, components={}
    )
    bit_equal = np.array_equal(
        biased_limit(lam, zero_bias).sizes, product_integral(lam).sizes
    ) and np.array_equal(biased_limit(lam, zero_bias).times, product_integral(lam).times)

    ok = exact_zero and strictly_decreasing and bit_equal
    report(
        "6",
        ok,
        f"bias functional: zero at full effectiveness {exact_zero}, "
        f"strictly decreasing {strictly_decreasing}, zero-bias limit bit-equal {bit_equal}",
    )
    assert exact_zero
    assert strictly_decreasing
    assert bit_equal


def test_criterion_7a_kernel_unit_mass():
    mass, _ = integrate.quad(univariate_truncated_gaussian, -2, 2, limit=200)
    ok = abs(mass - 1.0) <= 1e-6
    report("7a", ok, f"kernel mass {mass:.8f} within 1e-6 of 1")
    assert abs(mass - 1.0) <= 1e-6


def test_criterion_7b_kernel_squared_integral_constant():
    # The stated constant 0.3095 equals the squared integral of the
    # normalized Gaussian over the whole real line (1 / (2 sqrt(pi)) / c^2
    # = 0.30963); the kernel at hand is zero outside [-2, 2], where the
    # squared integral is 0.30818. The quadrature oracle below evaluates
    # the actual compact-support kernel, so this check cannot meet the
    # stated constant at the stated tolerance. It is asserted as stated
    # rather than loosened; see also test_criterion_7b_reference below.
    value, _ = integrate.quad(lambda u: univariate_truncated_gaussian(u) ** 2, -2, 2, limit=200)
    implementation = default_kernel(1).l2_norm()
    ok = abs(value - 0.3095) <= 5e-4 and abs(implementation - value) <= 1e-8
    report(
        "7b",
        ok,
        f"squared-kernel integral {value:.6f} vs stated 0.3095 (tol 5e-4); "
        f"known discrepancy: stated value matches the untruncated integral 0.30963",
    )
    assert abs(implementation - value) <= 1e-8
    assert abs(value - 0.3095) <= 5e-4


def test_criterion_7b_reference_squared_integral_against_oracle():
    # the constructive check: implementation agrees with quadrature of the
    # actual kernel, and the product form powers up exactly
    value, _ = integrate.quad(lambda u: univariate_truncated_gaussian(u) ** 2, -2, 2, limit=200)
    assert default_kernel(1).l2_norm() == pytest.approx(value, abs=1e-8)
    assert value == pytest.approx(0.308182, abs=5e-4)


def test_criterion_7c_product_kernel_powers():
    u = 0.37
    one = float(univariate_truncated_gaussian(u))
    worst = 0.0
    for k in (2, 3):
        spec = default_kernel(k)
        worst = max(worst, abs(float(spec.evaluate([u] * k)) - one**k))
    ok = worst <= 1e-12
    report("7c", ok, f"product-kernel powers max diff {worst:.2e} (tol 1e-12)")
    assert worst <= 1e-12


def test_criterion_8_naive_bias_direction(desk_study):
    naive = desk_study.mean_grid("naive")
    expert = desk_study.mean_grid("partial_1")
    truth = desk_study.true_survival
    over = float(np.max(naive.values - truth))
    sup_naive = float(np.max(np.abs(naive.values - truth)))
    sup_expert = float(np.max(np.abs(expert.values - truth)))
    ok = over <= 0.005 and sup_expert < sup_naive
    report(
        "8",
        ok,
        f"naive mean exceeds truth by at most {over:.4f} (tol 0.005); "
        f"sup errors: expert {sup_expert:.4f} < naive {sup_naive:.4f}",
    )
    assert over <= 0.005
    assert sup_expert < sup_naive


def test_criterion_9_determinism(tmp_path):
    config = tmp_path / "mc.ini"
    config.write_text(
        "[mc_study]\nn = 150\nreplications = 4\nexperts = naive partial:0.85\n"
        "z_points = 48 52\nt_points = 2 5\n",
        encoding="utf-8",
    )
    fit_data = tmp_path / "data.csv"
    rng = np.random.default_rng(9)
    rows = "".join(
        f"{float(rng.uniform(0, 5))!r},{rng.integers(0, 2)},{float(rng.normal())!r}\n"
        for _ in range(60)
    )
    fit_data.write_text("w,delta,z_1\n" + rows, encoding="utf-8")
    fit_config = tmp_path / "fit.ini"
    fit_config.write_text(
        f"[fit]\ndata = {fit_data}\njudgments = uniform:0.9\nbandwidth = 1.0\n"
        "t_max = 5\nt_grid = 0:5:0.5\nquery = 0.0\n",
        encoding="utf-8",
    )

    def run_all(name, threads):
        out = tmp_path / name
        assert cli_main(
            ["mc-study", "--config", str(config), "--out", str(out), "--seed", "11",
             "--threads", str(threads)]
        ) == 0
        assert cli_main(
            ["fit", "--config", str(fit_config), "--out", str(out / "fit"), "--seed", "11"]
        ) == 0
        payload = b""
        for f in sorted(out.rglob("*.csv")) + sorted(out.rglob("*.json")):
            payload += f.name.encode() + f.read_bytes()
        return payload

    first = run_all("run1", threads=1)
    second = run_all("run2", threads=1)
    threaded = run_all("run4", threads=4)
    ok = first == second == threaded
    report("9", ok, f"bit-identical outputs across reruns and thread counts: {ok}")
    assert first == second
    assert first == threaded
