"""Acceptance criteria, one test per criterion.

Each test is marked ``acceptance(number, title, limit_s=...)``; the summary
hook in ``conftest.py`` prints one PASS/FAIL line per criterion with its
runtime. Run alone with ``pytest -m acceptance -v``.
"""
import dataclasses
import math

import numpy as np
import pytest

from qptrap.cascade import downconvert
from qptrap.chip import FilmMaterial
from qptrap.dynamics import synth_histogram
from qptrap.fitkit import (
    binned_double_gaussian,
    decaying_cosine,
    fit_binned_double_gaussian,
    fit_decaying_cosine,
    fit_double_gaussian,
    fit_exp_decay,
    fit_recovery,
    recovery_exponential,
    recovery_recombination,
)
from qptrap.injector import InjectorParams, emission_spectrum, iv_current
from qptrap.rng import PacketStream
from qptrap.scenario import (
    FieldToggle,
    cascade_at,
    curves_from_table,
    default_scenario,
    run_dc_sweep,
    run_field_toggle,
    run_population_sweep,
    run_pulse_recovery,
)
from qptrap.transmon import (
    Cosine,
    ResonantABS,
    TransmonParams,
    charge_dispersion,
    diagonalize,
    effective_EJ,
    fit_dispersion,
    qp_sensitivity_D,
    spectrum_vs_ng,
)
from qptrap.units import ELECTRONS_PER_US_PER_NA

pytestmark = pytest.mark.acceptance

NW_GAP = 270.0  # µeV, nanowire gap of every qubit
ONSET_MV = 2 * NW_GAP / 1000.0


def rel(a, b):
    return abs(a - b) / abs(b)


@pytest.mark.acceptance(1, "quasiparticle sensitivity D for the four qubits", limit_s=1)
def test_c01_sensitivity_table():
    rows = [  # E_J^eff (GHz), E_J^eff/Ec, f01 (GHz), D (1/ns)
        ("Near_Al", 5.26, 13.1, 3.948, 7.5),
        ("Near_NbTiN", 5.07, 12.8, 3.864, 7.4),
        ("Far_NbTiN", 5.15, 13.8, 3.784, 7.3),
        ("Far_Al", 4.92, 11.7, 3.892, 7.5),
    ]
    got = {}
    for label, ej, ratio, f01, expected in rows:
        got[label] = qp_sensitivity_D(TransmonParams(ej / ratio, Cosine(ej), NW_GAP), f01)
        assert rel(got[label], expected) < 0.02, (label, got[label])


@pytest.mark.acceptance(2, "transmon solver: f01, symmetry, ABS suppression", limit_s=5)
def test_c02_transmon_solver():
    cos = TransmonParams(0.4, Cosine(20.0))
    assert rel(diagonalize(cos, 0.0).f01, 7.6) < 0.01

    ngs = np.linspace(-1.0, 1.0, 41)
    for p in (cos, TransmonParams(0.4, ResonantABS(21.0, 0.9))):
        f01, f02h = spectrum_vs_ng(p, ngs)
        shifted = spectrum_vs_ng(p, ngs + 1.0)
        mirrored = spectrum_vs_ng(p, -ngs)
        for a, b in ((f01, shifted[0]), (f02h, shifted[1]), (f01, mirrored[0]), (f02h, mirrored[1])):
            assert np.max(np.abs(a - b)) < 1e-9

    abs_ = TransmonParams(0.4, ResonantABS(21.0, 0.999))
    same_ej = TransmonParams(0.4, Cosine(effective_EJ(abs_.junction)))
    assert charge_dispersion(same_ej) > 10 * charge_dispersion(abs_)


@pytest.mark.acceptance(3, "dispersion fit round trip", limit_s=30)
def test_c03_dispersion_fit():
    truth = TransmonParams(0.40, ResonantABS(21.0, 0.99))
    init = TransmonParams(0.37, ResonantABS(19.0, 0.95))
    ng = np.linspace(-0.5, 0.5, 21)
    f01, f02h = spectrum_vs_ng(truth, ng)

    def check(fit, tol):
        p = fit.params
        assert rel(p.ec, 0.40) < tol
        assert rel(p.junction.eff_gap, 21.0) < tol
        assert rel(p.junction.transmission, 0.99) < tol

    check(fit_dispersion(ng, f01, f02h, init), 0.01)
    rng = np.random.default_rng(3)
    noise = 1e-3  # 1 MHz in GHz
    check(
        fit_dispersion(ng, f01 + noise * rng.standard_normal(ng.size), f02h + noise * rng.standard_normal(ng.size), init),
        0.05,
    )


@pytest.mark.acceptance(4, "injector current, conductance peak, power bookkeeping", limit_s=30)
def test_c04_injector():
    p = InjectorParams()
    i1 = iv_current(p, 1.0)
    inside = iv_current(p, np.linspace(0.0, ONSET_MV - 0.005, 108))  # whole sub-gap range
    assert np.max(np.abs(inside)) < 1e-3 * i1

    v = np.linspace(0.3, 1.0, 141)
    g = np.gradient(iv_current(p, v), v)
    assert abs(v[np.argmax(g)] - ONSET_MV) <= (v[1] - v[0]) + 1e-12

    src = emission_spectrum(p, 2.0)
    e, _ = src.sample_pairs(1_000_000, seed=11)
    sampled = e.sum() / 1_000_000 * src.pair_rate
    assert rel(sampled, src.current * ELECTRONS_PER_US_PER_NA * 2000.0) < 0.01
    assert rel(sampled, src.emitted_power) < 0.01


@pytest.mark.acceptance(5, "cascade ledger, threshold and worker determinism", limit_s=120)
def test_c05_cascade_conservation():
    cfg = default_scenario()
    assert cfg.cascade.n_packets == 100_000
    thresholds = {q.label: 2 * q.nanowire_gap for q in cfg.layout.qubits}
    for v in cfg.dc_bias:
        stats = cascade_at(cfg, v).stats
        assert stats.ledger_residual() < 1e-9, v
        for label, thr in thresholds.items():
            assert stats.qubit_min_event_energy[label] >= thr, (v, label)

    runs = []
    for w in (1, 4, 8):
        c = dataclasses.replace(cfg, cascade=dataclasses.replace(cfg.cascade, workers=w))
        runs.append(cascade_at(c, 2.5).stats)
    for other in runs[1:]:
        assert runs[0].fields_equal(other)
        assert runs[0].per_packet_qubit.tobytes() == other.per_packet_qubit.tobytes()


@pytest.mark.acceptance(6, "downconversion unit case", limit_s=1)
def test_c06_downconvert_unit_case():
    film = FilmMaterial("Al", gap=180.0, thickness=100.0, absorb_prob=0.5, recombine_reemit_prob=1.0)
    phonons, retained = downconvert(1000.0, film, PacketStream.for_packet(1, 0))
    assert sorted(phonons) == [320.0, 320.0, 360.0] and retained == 0.0


@pytest.mark.acceptance(7, "dc sweep: trap ratios, onset and kink", limit_s=600)
def test_c07_dc_sweep():
    cfg = default_scenario()
    assert len(cfg.dc_bias) == 15 and cfg.cascade.n_packets == 100_000
    curves = curves_from_table(run_dc_sweep(cfg))
    bias = np.asarray(curves["Near_Al"][0])
    g = {k: np.asarray(v[1]) for k, v in curves.items()}

    high = bias >= 1.5
    near = g["Near_NbTiN"][high] / g["Near_Al"][high]
    far = g["Far_NbTiN"][high] / g["Far_Al"][high]
    assert np.all((near >= 2) & (near <= 3)), near
    assert np.all((far >= 4) & (far <= 6)), far

    i_onset = int(np.argmin(np.abs(bias - ONSET_MV)))
    for label, y in g.items():
        assert np.all(y[bias < ONSET_MV - 1e-9] == 0.0), label
        assert np.all(y[bias >= ONSET_MV - 1e-9] > 0.0), label
        slope = np.diff(y) / np.diff(bias)
        kink = int(np.argmax(np.abs(np.diff(slope)))) + 1
        assert abs(kink - i_onset) <= 1, (label, bias[kink])


@pytest.mark.acceptance(8, "pulse recovery times", limit_s=300)
def test_c08_pulse_recovery():
    res = run_pulse_recovery(default_scenario())
    expected = {"Near_NbTiN": 80.0, "Far_NbTiN": 80.0, "Near_Al": 67.0, "Far_Al": 67.0}
    for label, tau in expected.items():
        fit = res.fits[label]
        assert fit.model_choice == "exponential", label
        assert rel(fit.exponential["tau"], tau) < 0.05, (label, fit.exponential["tau"])


@pytest.mark.acceptance(9, "histogram round trips and population sweep", limit_s=60)
def test_c09_populations():
    for p_g in (0.93, 0.35):
        res = fit_double_gaussian(synth_histogram(p_g, (0.0, 6.0, 1.0), 10_000, seed=7))
        assert abs(res["p_g"] - p_g) < 0.02

    table = run_population_sweep(default_scenario())
    for label in ("Near_Al", "Near_NbTiN", "Far_Al", "Far_NbTiN"):
        rows = [r for r in table.rows if r[1] == label]
        amp = [r[5] for r in rows]
        assert rows[0][0] == 0.0 and amp[0] == 1.0
        assert all(a >= b for a, b in zip(amp, amp[1:])), label
        assert amp[-1] < amp[0]


@pytest.mark.acceptance(10, "field toggle null and absorption control", limit_s=600)
def test_c10_field_toggle():
    cfg = default_scenario()
    null = run_field_toggle(cfg).summaries[0]
    assert cfg.field_toggle.overrides[0]["gap_ueV"] == 180.0 and null.gap == 0.0

    control_cfg = dataclasses.replace(
        cfg,
        field_toggle=FieldToggle(
            cfg.field_toggle.material, ({"gap_ueV": 0.0}, {"gap_ueV": 0.0, "absorb_scale": 2.0}), cfg.field_toggle.qubits
        ),
    )
    control = run_field_toggle(control_cfg).summaries[0]

    control_ok = abs(control.mean_delta) > 2 * control.se_paired
    null_ok = abs(null.mean_delta) < 2 * null.se_paired
    assert control_ok and null_ok, (
        f"null: mean {null.mean_delta:.4g}/us, z_paired {null.z_paired:.2f}, z_unpaired {null.z_unpaired:.2f}; "
        f"control: z_paired {control.z_paired:.2f}"
    )


@pytest.mark.acceptance(11, "fit kernels: noiseless and noisy round trips", limit_s=120)
def test_c11_fit_kernels():
    t = np.linspace(0, 15, 40)
    r = fit_exp_decay(t, 0.9 * np.exp(-t / 3.8) + 0.05)
    assert rel(r["tau"], 3.8) < 1e-6 and rel(r["A"], 0.9) < 1e-6 and rel(r["offset"], 0.05) < 1e-6

    tr = np.linspace(0, 2.0, 200)
    r = fit_decaying_cosine(tr, decaying_cosine(tr, 0.86, 5.0, 0.3, 2.0, 0.1))
    for k, v in dict(A=0.86, f=5.0, phase=0.3, tau=2.0, offset=0.1).items():
        assert rel(r[k], v) < 1e-6, k

    d = np.array([0, 10, 20, 40, 60, 80, 120, 160, 200, 250, 300, 400], dtype=float)
    r = fit_recovery(d, recovery_exponential(d, 0.8, 80.0))
    assert r.model_choice == "exponential" and rel(r.exponential["tau"], 80.0) < 1e-6
    r = fit_recovery(d, recovery_recombination(d, 0.8, 0.05))
    assert r.model_choice == "recombination" and rel(r.recombination["rho"], 0.05) < 1e-6

    edges = np.linspace(-4.0, 10.0, 80)
    r = fit_binned_double_gaussian(edges, binned_double_gaussian(edges, 1e4, 0.93, 0.5, 6.0, 1.2))
    for k, v in dict(p_g=0.93, mu_g=0.5, mu_e=6.0, sigma=1.2).items():
        assert rel(r[k], v) < 1e-6, k

    rng = np.random.default_rng(0)
    te = np.linspace(0, 3 * 3.8, 50)
    hits = sum(
        rel(fit_exp_decay(te, np.exp(-te / 3.8) * (1 + 0.02 * rng.standard_normal(te.size)))["tau"], 3.8) < 0.05
        for _ in range(100)
    )
    assert hits >= 95

    hits = 0
    for _ in range(50):
        g = recovery_exponential(d, 0.8, 67.0) * (1 + 0.05 * rng.standard_normal(d.size))
        hits += rel(fit_recovery(d, g).exponential["tau"], 67.0) < 0.10
    assert hits >= 48

    a_ref = None
    for amp in (0.86, 0.86 * 0.349):
        y = decaying_cosine(tr, amp, 5.0, 0.0, 2.0, 0.0) + 0.005 * rng.standard_normal(tr.size)
        a = fit_decaying_cosine(tr, y)["A"]
        a_ref = a if a_ref is None else a_ref
    assert rel(a / a_ref, 0.349) < 0.02

    for seed in range(10):
        r = fit_double_gaussian(synth_histogram(0.35, (0.0, 6.0, 1.0), 10_000, seed=seed))
        assert abs(r["p_g"] - 0.35) < 0.02
