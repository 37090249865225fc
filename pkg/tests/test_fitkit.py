import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qptrap.dynamics import synth_histogram, synth_rabi_trace
from qptrap.fitkit import (
    DegenerateFitError,
    FitError,
    binned_double_gaussian,
    fit_binned_double_gaussian,
    GridMismatchError,
    decaying_cosine,
    delta_gamma,
    fit_decaying_cosine,
    fit_double_gaussian,
    fit_exp_decay,
    fit_recovery,
    levenberg_marquardt,
    loss_ratios,
    recovery_exponential,
    recovery_recombination,
)


def close(a, b, rel):
    return abs(a - b) <= rel * abs(b)


# --- exponential decay -------------------------------------------------------


def test_exp_decay_noiseless():
    t = np.linspace(0, 15, 40)
    res = fit_exp_decay(t, np.exp(-t / 3.8))
    assert close(res["tau"], 3.8, 1e-6) and close(res["A"], 1.0, 1e-6)
    assert abs(res["offset"]) < 1e-6
    assert all(s >= 0 for s in res.stderr.values()) and res.residual_norm >= 0


def test_exp_decay_constant_is_degenerate():
    with pytest.raises(DegenerateFitError):
        fit_exp_decay(np.arange(10.0), np.full(10, 2.0))


def test_exp_decay_too_few_points():
    with pytest.raises(ValueError):
        fit_exp_decay([0, 1, 2], [3, 2, 1])


def test_exp_decay_noise_band():
    # 2% relative noise, 50 points over three time constants
    t = np.linspace(0, 3 * 3.8, 50)
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(100):
        y = np.exp(-t / 3.8) * (1 + 0.02 * rng.standard_normal(t.size))
        hits += close(fit_exp_decay(t, y)["tau"], 3.8, 0.05)
    assert hits >= 95


def test_exp_decay_stderr_matches_spread():
    # additive noise: the reported standard error tracks the actual scatter
    t = np.linspace(0, 3 * 3.8, 50)
    rng = np.random.default_rng(1)
    fits = [fit_exp_decay(t, np.exp(-t / 3.8) + 0.02 * rng.standard_normal(t.size)) for _ in range(200)]
    taus = np.array([f["tau"] for f in fits])
    se = np.mean([f.stderr["tau"] for f in fits])
    assert abs(taus.mean() - 3.8) < 3 * taus.std() / math.sqrt(taus.size)
    assert se == pytest.approx(taus.std(), rel=0.2)


def test_exp_decay_reorder_and_rescale():
    t = np.linspace(0, 12, 30)
    y = 2.0 * np.exp(-t / 3.0) + 0.1
    base = fit_exp_decay(t, y)
    perm = np.random.default_rng(1).permutation(t.size)
    shuffled = fit_exp_decay(t[perm], y[perm])
    assert shuffled["tau"] == pytest.approx(base["tau"], rel=1e-9)
    ms = fit_exp_decay(t / 1000.0, y)  # the same data in ms
    assert ms["tau"] * 1000.0 == pytest.approx(base["tau"], rel=1e-6)


# --- decaying cosine -----------------------------------------------------------


def test_decaying_cosine_noiseless():
    t = np.linspace(0, 2.0, 200)  # us; f in MHz
    y = decaying_cosine(t, 0.86, 5.0, 0.3, 2.0, 0.1)
    res = fit_decaying_cosine(t, y)
    for k, v in dict(A=0.86, f=5.0, phase=0.3, tau=2.0, offset=0.1).items():
        assert res[k] == pytest.approx(v, rel=1e-6, abs=1e-9)


def test_decaying_cosine_no_peak():
    t = np.linspace(0, 2.0, 200)
    with pytest.raises(FitError):
        fit_decaying_cosine(t, synth_rabi_trace(0.0, 2.0, 5.0, t))


def test_rabi_amplitude_ratio():
    t = np.linspace(0, 2.0, 200)
    rng = np.random.default_rng(4)
    a1 = fit_decaying_cosine(t, synth_rabi_trace(0.86, 2.0, 5.0, t) + 0.005 * rng.standard_normal(t.size))["A"]
    a2 = fit_decaying_cosine(t, synth_rabi_trace(0.86 * 0.349, 2.0, 5.0, t) + 0.005 * rng.standard_normal(t.size))["A"]
    assert close(a2 / a1, 0.349, 0.02)


def test_decaying_cosine_time_rescale():
    t = np.linspace(0, 2.0, 200)
    y = decaying_cosine(t, 0.5, 4.0, -0.7, 1.5, 0.0)
    us = fit_decaying_cosine(t, y)
    ns = fit_decaying_cosine(t * 1000.0, y)
    assert ns["f"] * 1000.0 == pytest.approx(us["f"], rel=1e-6)
    assert ns["tau"] / 1000.0 == pytest.approx(us["tau"], rel=1e-6)


# --- recovery ------------------------------------------------------------------


DELAYS = np.array([0, 10, 20, 40, 60, 80, 120, 160, 200, 250, 300, 400], dtype=float)


def test_recovery_exponential_selected():
    res = fit_recovery(DELAYS, recovery_exponential(DELAYS, 0.8, 80.0))
    assert res.model_choice == "exponential"
    assert close(res.exponential["tau"], 80.0, 1e-6)
    assert res.recombination is not None  # both branches reported


def test_recovery_recombination_selected():
    res = fit_recovery(DELAYS, recovery_recombination(DELAYS, 0.8, 0.05))
    assert res.model_choice == "recombination"
    assert close(res.recombination["rho"], 0.05, 1e-6)
    assert close(res.recombination["gamma0"], 0.8, 1e-6)


def test_recovery_noisy_67us():
    rng = np.random.default_rng(2)
    ok = 0
    for _ in range(50):
        g = recovery_exponential(DELAYS, 0.8, 67.0)
        g = g * (1 + 0.05 * rng.standard_normal(g.size))
        ok += close(fit_recovery(DELAYS, g).exponential["tau"], 67.0, 0.10)
    assert ok >= 48


def test_recovery_needs_five_points():
    with pytest.raises(ValueError):
        fit_recovery(DELAYS[:4], recovery_exponential(DELAYS[:4], 1.0, 80.0))


# --- double Gaussian ----------------------------------------------------------------


@pytest.mark.parametrize("p_g", [0.93, 0.35])
def test_double_gaussian_round_trip(p_g):
    shots = synth_histogram(p_g, (0.0, 6.0, 1.0), 10_000, seed=7)
    res = fit_double_gaussian(shots)
    assert abs(res["p_g"] - p_g) < 0.02
    assert not res.flags["unresolved"]


def test_double_gaussian_quantile_samples():
    # deterministic, noise-free samples of the mixture via normal quantiles
    from scipy.stats import norm

    def q(n, mu):
        return norm.ppf((np.arange(n) + 0.5) / n, mu, 1.0)

    res = fit_double_gaussian(np.concatenate([q(28_000, 0.0), q(12_000, 6.0)]))
    assert res["p_g"] == pytest.approx(0.7, abs=5e-3)
    assert res["mu_e"] - res["mu_g"] == pytest.approx(6.0, rel=5e-3)
    assert res["sigma"] == pytest.approx(1.0, rel=0.02)


def test_binned_double_gaussian_noiseless():
    edges = np.linspace(-4.0, 10.0, 80)
    counts = binned_double_gaussian(edges, 1e4, 0.93, 0.5, 6.0, 1.2)
    res = fit_binned_double_gaussian(edges, counts)
    for k, v in dict(p_g=0.93, mu_g=0.5, mu_e=6.0, sigma=1.2).items():
        assert close(res[k], v, 1e-6)


def test_binned_double_gaussian_bad_edges():
    with pytest.raises(ValueError):
        fit_binned_double_gaussian(np.arange(5.0), np.ones(5))


@pytest.mark.parametrize("p_g", [0.99, 0.5, 0.01])
def test_double_gaussian_extreme_weights(p_g):
    for seed in range(5):
        res = fit_double_gaussian(synth_histogram(p_g, (0.0, 6.0, 1.0), 10_000, seed=seed))
        assert abs(res["p_g"] - p_g) < 0.02


def test_double_gaussian_single_mode():
    shots = synth_histogram(1.0, (0.0, 6.0, 1.0), 5000, seed=1)
    res = fit_double_gaussian(shots)
    assert res["p_g"] > 0.98 or res.flags["unresolved"]


def test_double_gaussian_needs_shots():
    with pytest.raises(ValueError):
        fit_double_gaussian(np.zeros(10))


# --- engine ------------------------------------------------------------------------


@given(st.floats(0.5, 50.0), st.floats(0.1, 10.0), st.integers(0, 1000))
def test_cost_never_increases(tau, amp, seed):
    t = np.linspace(0, 3 * tau, 25)
    y = amp * np.exp(-t / tau) + 0.01 * amp * np.random.default_rng(seed).standard_normal(t.size)
    res = levenberg_marquardt(lambda p: p[0] * np.exp(-t / p[1]) - y, [1.0, 1.0], ["A", "tau"], lower=[-np.inf, 1e-6])
    h = np.array(res.cost_history)
    assert np.all(np.diff(h) <= 0)


def test_engine_rejects_underdetermined():
    with pytest.raises(DegenerateFitError):
        levenberg_marquardt(lambda p: np.array([p[0] + p[1]]), [0.0, 0.0], ["a", "b"])


def test_engine_respects_bounds():
    res = levenberg_marquardt(lambda p: np.array([p[0] - 5.0, 0.0]), [0.0], ["a"], upper=[2.0])
    assert res["a"] == 2.0 and res.converged


# --- ratios ----------------------------------------------------------------------------


BIAS = np.linspace(0.0, 3.0, 7)


def test_loss_ratios_scaled_curves():
    base = np.linspace(0.0, 1.0, 7)
    curves = {
        "Near_NbTiN": (BIAS, 2.5 * base),
        "Near_Al": (BIAS, base),
        "Far_NbTiN": (BIAS, 5.0 * base),
        "Far_Al": (BIAS, base),
    }
    rt = loss_ratios(curves, noise_floor=1e-9)
    assert len(rt.ratios) == 6
    near = rt.ratios[("Near_NbTiN", "Near_Al")]
    assert math.isnan(near[0]) and np.allclose(near[1:], 2.5)
    assert np.allclose(rt.ratios[("Far_NbTiN", "Far_Al")][1:], 5.0)
    rows = list(rt.as_rows())
    assert len(rows) == 7 and len(rows[0]) == 7


def test_delta_gamma_identical_curves():
    d = delta_gamma((BIAS, np.sin(BIAS)), (BIAS, np.sin(BIAS)))
    assert np.all(d.delta == 0) and d.mean == 0.0


def test_grid_mismatch():
    with pytest.raises(GridMismatchError):
        loss_ratios({"a": (BIAS, BIAS), "b": (BIAS + 0.1, BIAS)})
    with pytest.raises(GridMismatchError):
        delta_gamma((BIAS, BIAS), (BIAS[:-1], BIAS[:-1]))
