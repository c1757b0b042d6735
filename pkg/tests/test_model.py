"""Closed-form model: singles, coincidences, correlations and retrieval."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from dlczsim import model
from dlczsim.model import ModelParams

from conftest import split_layout, two_detector_layout

REF = ModelParams.defaults  # calibrated source parameters


def test_defaults_carry_calibrated_values():
    params = REF(0.03)
    assert (params.kappa1, params.kappa2) == (0.034, 1.91)
    assert (params.alpha1, params.alpha2, params.eta2) == (0.16, 0.035, 0.14)
    assert (params.b1, params.b2) == (5.1e-5, 1.6e-4)


def test_mean_photon_numbers():
    params = REF(0.03)
    assert params.mean_n1 == pytest.approx(0.0322665850515464, rel=1e-12)
    assert params.mean_n2 == pytest.approx(0.0927992636229750, rel=1e-12)


def test_singles_reference_point():
    p1, p2 = model.singles(REF(0.03))
    assert p1 == pytest.approx(5.162653608247e-3, rel=1e-12)
    assert p2 == pytest.approx(3.247974226804e-3, rel=1e-12)


def test_joint_reference_point():
    assert model.joint(REF(0.03)) == pytest.approx(1.953206156436e-4, rel=1e-12)


def test_correlation_and_retrieval_reference_point():
    params = REF(0.03)
    assert model.cross_correlation(params) == pytest.approx(11.648299358, rel=1e-9)
    pc, qc = model.retrieval(params)
    assert pc == pytest.approx(0.0378333761017, rel=1e-9)
    assert qc == pytest.approx(0.2702384007264, rel=1e-9)


@pytest.mark.parametrize("p", [1e-3, 0.01, 0.1, 0.5, 0.9])
def test_ideal_correlation_closed_form(p):
    params = ModelParams(p=p, alpha1=0.3, alpha2=0.2, eta2=0.5)
    assert model.cross_correlation(params) == pytest.approx((1 + p) / p, rel=1e-12)
    assert model.cross_correlation(params) > 2.0


@pytest.mark.parametrize("p", np.geomspace(1e-4, 0.3, 7).tolist())
@pytest.mark.parametrize("kappa2", [0.0, 1.91])
def test_closed_forms_match_linearized_enumeration(p, kappa2):
    params = ModelParams(p=p, kappa1=0.034, kappa2=kappa2, alpha1=0.16,
                         alpha2=0.035, eta2=0.14, b1=5.1e-5, b2=1.6e-4)
    probs = two_detector_layout(params, n_max=60)
    fom = model.figure_of_merit(params)
    assert probs["p1"] == pytest.approx(fom.p1, rel=1e-9)
    assert probs["p2"] == pytest.approx(fom.p2, rel=1e-9)
    assert probs["p12"] == pytest.approx(fom.p12, rel=1e-9)


@pytest.mark.parametrize("scale", [0.5, 2.0, 10.0])
def test_qc_invariant_under_field1_rescaling(scale):
    base = REF(0.02)
    scaled = ModelParams(p=base.p, kappa1=base.kappa1, kappa2=base.kappa2,
                         alpha1=min(base.alpha1 * scale, 1.0) if scale > 1 else base.alpha1 * scale,
                         alpha2=base.alpha2, eta2=base.eta2,
                         b1=base.b1 * (min(base.alpha1 * scale, 1.0) / base.alpha1 if scale > 1 else scale),
                         b2=base.b2)
    assert model.retrieval(scaled)[1] == pytest.approx(model.retrieval(base)[1], rel=1e-12)


def test_qc_plateau_value():
    assert model.qc_plateau(REF(0.03)) == 0.25
    params = ModelParams(p=0.01, alpha2=0.2, eta2=0.5)
    assert model.qc_plateau(params) == pytest.approx(0.4, rel=1e-15)


@pytest.mark.parametrize("kappa,b", [(0.0, 0.0), (0.005, 1e-9)])
def test_retrieval_reaches_plateau_in_single_excitation_regime(kappa, b):
    # backgrounds below 1% of each mode occupation and p small enough that
    # multiple excitations stay negligible
    for p in np.geomspace(1e-4, 4e-3, 5):
        params = ModelParams(p=p, kappa1=kappa, kappa2=kappa, alpha1=0.16,
                             alpha2=0.035, eta2=0.14, b1=b, b2=b)
        assert params.background1 < 0.01 * params.mean_n1
        assert params.background2 < 0.01 * params.mean_n2
        _, qc = model.retrieval(params)
        assert qc == pytest.approx(model.qc_plateau(params), rel=0.01)


def test_retrieval_drops_at_low_excitation():
    # the incoherent floor dilutes heralds once p1 approaches b1
    _, qc_low = model.retrieval(REF(1e-5))
    _, qc_mid = model.retrieval(REF(1e-3))
    assert qc_low < qc_mid


def test_antibunching_ideal():
    assert model.antibunching_ideal(45.0) == pytest.approx(4.0 / 45.0, rel=1e-15)
    assert model.antibunching_ideal(45.0) == pytest.approx(0.0889, abs=5e-5)
    with pytest.raises(ValueError):
        model.antibunching_ideal(0.0)


def test_antibunching_model_bare_source():
    # frozen from the triple-coincidence enumeration; the closed form for a
    # pure two-mode squeezed state is 2p(2+p)/(1+p)^2
    params = ModelParams(p=0.01, alpha1=0.16, alpha2=0.035, eta2=0.14)
    w = model.antibunching_model(params, n_max=40)
    assert w == pytest.approx(0.0394079011862, rel=1e-9)
    assert w == pytest.approx(4 * 0.01 / 1.01, rel=5e-3)


@pytest.mark.parametrize("p", [0.005, 0.01, 0.02, 0.05])
def test_antibunching_tracks_ideal_line_at_small_p(p):
    params = ModelParams(p=p, alpha1=0.16, alpha2=0.035, eta2=0.14)
    w = model.antibunching_model(params, n_max=50)
    expect = 2 * p * (2 + p) / (1 + p) ** 2
    assert w == pytest.approx(expect, rel=1e-9)
    assert w * model.cross_correlation(params) / 4 == pytest.approx(1.0, abs=0.05)


def test_antibunching_with_backgrounds_near_g12_45():
    # excitation chosen so the full model sits at g12 = 45
    p = 0.005622651710981712
    params = REF(p)
    assert model.cross_correlation(params) == pytest.approx(45.0, rel=1e-9)
    w = model.antibunching_model(params, n_max=60)
    assert w == pytest.approx(0.0647922608791, rel=1e-9)
    assert 0.01 <= w <= 0.19
    w_thr = model.antibunching_model(params, n_max=60, kind="threshold")
    assert 0.01 <= w_thr <= 0.19


def test_antibunching_model_agrees_with_split_enumeration():
    params = REF(0.01)
    probs = split_layout(params, n_max=50, kind="linearized", tail_tol=1e-10)
    expect = probs["p1"] * probs["p1_2a_2b"] / (probs["p1_2a"] * probs["p1_2b"])
    assert model.antibunching_model(params, n_max=50) == pytest.approx(expect, rel=1e-10)


@pytest.mark.parametrize("g12,label", [
    (1.5, "classical"),
    (2.0, "classical"),
    (5.0, "nonclassical"),
    (7.0, "nonclassical"),
    (10.0, "bell_capable"),
    (25.0, "bell_capable"),
    (45.0, "repeater_capable"),
])
def test_classicality_boundaries(g12, label):
    assert model.classicality(g12) == label


def test_classicality_rejects_negative():
    with pytest.raises(ValueError):
        model.classicality(-1.0)


def test_sweep_orders_and_peaks():
    grid = np.geomspace(1e-4, 0.2, 400)
    points = model.sweep(REF(0.03), grid)
    p1 = np.array([q.p1 for q in points])
    g12 = np.array([q.g12 for q in points])
    assert np.all(np.diff(p1) > 0)
    assert g12.max() == pytest.approx(102.6895337780, rel=1e-9)
    assert grid[g12.argmax()] == pytest.approx(6.980271736870e-4, rel=1e-9)
    # decorrelation below the turnover, then a monotone fall
    falling = g12[np.searchsorted(grid, 1e-3):]
    assert np.all(np.diff(falling) < 0)
    assert g12[0] < g12.max()


def test_sweep_stays_nonclassical_over_measured_range():
    grid = np.geomspace(1e-4, 0.2, 400)
    points = model.sweep(REF(0.03), grid)
    p1 = np.array([q.p1 for q in points])
    g12 = np.array([q.g12 for q in points])
    in_range = (p1 >= 1e-4) & (p1 <= 2e-2)
    assert np.all(g12[in_range] > 2.0)


def test_plateau_estimate_reference_curve():
    grid = np.geomspace(1e-4, 0.2, 400)
    points = model.sweep(REF(0.03), grid)
    p1 = np.array([q.p1 for q in points])
    qc = np.array([q.qc for q in points])
    plateau = model.plateau_estimate(p1, qc)
    assert plateau == pytest.approx(0.2427296905964, rel=1e-9)
    assert abs(plateau - 0.25) <= 0.01


def test_plateau_estimate_needs_enough_points():
    with pytest.raises(ValueError):
        model.plateau_estimate(np.array([1e-3, 2e-3]), np.array([0.2, 0.21]))


def test_figure_of_merit_fields_consistent():
    fom = model.figure_of_merit(REF(0.02))
    assert fom.g12 == pytest.approx(fom.p12 / (fom.p1 * fom.p2), rel=1e-12)
    assert fom.qc == pytest.approx(fom.pc / 0.14, rel=1e-12)
    for value in (fom.p1, fom.p2, fom.p12, fom.g12, fom.pc, fom.qc):
        assert np.isfinite(value) and value > 0


@pytest.mark.parametrize("kwargs", [
    {"p": -0.1}, {"p": 1.0},
    {"p": 0.1, "kappa1": -1.0},
    {"p": 0.1, "alpha1": 0.0},
    {"p": 0.1, "alpha2": 1.5},
    {"p": 0.1, "eta2": 0.0},
    {"p": 0.1, "b1": -1e-6},
])
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        ModelParams(**kwargs)
