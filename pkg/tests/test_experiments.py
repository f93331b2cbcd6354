import numpy as np
import pytest
from numpy.testing import assert_allclose

from smf.experiments import (
    HsiSpec,
    PhantomSpec,
    benchmark_condition,
    gen_phantom,
    hsi_init,
    hsi_problem,
    hsi_simulate,
    phantom_condition,
    phantom_problem,
    recovery_error,
)
from smf.regularizers import ThetaForm


# ------------------------------------------------------------ phantom

def test_phantom_is_reproducible():
    spec = PhantomSpec(seed=5)
    a = gen_phantom(spec)
    b = gen_phantom(spec)
    assert_allclose(a.y, b.y, rtol=0, atol=0)
    assert np.array_equal(a.labels, b.labels)
    c = gen_phantom(PhantomSpec(seed=6))
    assert not np.allclose(a.y, c.y)


def test_phantom_shapes_and_ground_truth():
    spec = PhantomSpec(height=24, width=20, frames=40, n_regions=4,
                       spikes_per_region=2, seed=1)
    data = gen_phantom(spec)
    p = 24 * 20
    assert data.y.shape == (40, p)
    assert data.u_true.shape == (40, 4)
    assert data.v_true.shape == (p, 4)
    assert data.labels.shape == (24, 20)
    # unit spikes, the requested number per region
    assert_allclose(data.u_true.sum(axis=0), np.full(4, 2.0))
    assert set(np.unique(data.u_true)) <= {0.0, 1.0}
    # labels and indicator columns describe the same regions
    for k in range(4):
        assert_allclose(data.v_true[:, k], (data.labels == k + 1).ravel().astype(float))


def test_phantom_regions_are_disjoint():
    data = gen_phantom(PhantomSpec(seed=2))
    gram = data.v_true.T @ data.v_true
    # each pixel belongs to at most one region
    assert np.all(data.v_true.sum(axis=1) <= 1.0)
    assert_allclose(gram - np.diag(np.diag(gram)), 0.0)
    for k in range(6):
        assert data.v_true[:, k].sum() >= 4  # regions are at least 2x2


def test_phantom_noise_matches_requested_snr():
    spec = PhantomSpec(snr_db=-16.0, seed=3)
    data = gen_phantom(spec)
    clean = data.op.apply(data.u_true) @ data.v_true.T
    noise = data.y - clean
    measured_snr = 10 * np.log10(np.mean(clean**2) / np.var(noise))
    assert measured_snr == pytest.approx(-16.0, abs=0.15)
    # sigma is the requested population value, not the sample estimate
    expected_sigma = np.sqrt(np.mean(clean**2) * 10 ** (1.6))
    assert data.noise_sigma == pytest.approx(expected_sigma, rel=1e-12)


def test_phantom_noiseless_mode():
    data = gen_phantom(PhantomSpec(snr_db=np.inf, seed=4))
    clean = data.op.apply(data.u_true) @ data.v_true.T
    assert_allclose(data.y, clean, rtol=0, atol=0)
    assert data.noise_sigma == 0.0


def test_phantom_rejects_impossible_packing():
    with pytest.raises(ValueError):
        gen_phantom(PhantomSpec(height=8, width=8, n_regions=9))


def test_phantom_conditions():
    reg, lam = phantom_condition("sparse_lowrank", sigma=2.0, height=8, width=8)
    assert lam == pytest.approx(3.0)
    assert reg.form is ThetaForm.PRODUCT
    assert reg.v_gauge.nu_tv == 0.0

    reg, lam = phantom_condition("slrtv", sigma=2.0, height=8, width=8)
    assert lam == pytest.approx(0.8)
    assert reg.v_gauge.nu_tv == 1.0
    assert reg.v_gauge.graph.node_count == 64

    with pytest.raises(ValueError):
        phantom_condition("lowrank", 1.0, 8, 8)


def test_benchmark_conditions():
    reg, lam = benchmark_condition("sparse", data_std=1.5, height=8, width=8)
    assert lam == pytest.approx(3.0)
    assert reg.u_gauge.nu2 == 0.0

    reg, lam = benchmark_condition("sparse_lowrank", 2.0, 8, 8)
    assert lam == pytest.approx(3.5)

    reg, lam = benchmark_condition("slrtv", 2.0, 8, 8)
    assert lam == pytest.approx(1.0)
    assert reg.u_gauge.nu2 == 2.5
    assert reg.v_gauge.nu_tv == 0.5

    with pytest.raises(ValueError):
        benchmark_condition("tv", 1.0, 8, 8)


def test_phantom_problem_assembly():
    data = gen_phantom(PhantomSpec(seed=7))
    p = phantom_problem(data, condition="slrtv")
    assert p.y is data.y
    assert p.lam == pytest.approx(0.4 * data.noise_sigma)
    assert p.factor_shape() == (60, 32 * 32)

    noiseless = gen_phantom(PhantomSpec(snr_db=np.inf, seed=7))
    p0 = phantom_problem(noiseless, condition="sparse_lowrank")
    assert p0.lam == pytest.approx(1.5 * noiseless.y.std())


# ------------------------------------------------------------ hyperspectral

def test_hsi_cube_has_exact_rank_and_is_nonneg():
    spec = HsiSpec(height=12, width=10, bands=8, true_rank=3, seed=9)
    data = hsi_simulate(spec)
    assert data.x_true.shape == (8, 120)
    assert np.linalg.matrix_rank(data.x_true, tol=1e-10) == 3
    assert np.all(data.maps >= 0) and np.all(data.spectra >= 0)
    assert data.maps.max() <= 1.0 + 1e-12


def test_hsi_measurement_count_follows_sample_ratio():
    spec = HsiSpec(height=12, width=10, bands=8, true_rank=3,
                   sample_ratio=4.0, seed=9)
    data = hsi_simulate(spec)
    assert data.op.keep_count == 30
    assert data.y.shape == (8, 30)
    assert_allclose(data.y, data.op.apply(data.x_true))
    assert data.noise_sigma == 0.0


def test_hsi_noise_level():
    spec = HsiSpec(height=12, width=10, bands=8, true_rank=3,
                   snr_db=20.0, seed=10)
    data = hsi_simulate(spec)
    clean = data.op.apply(data.x_true)
    rms = np.sqrt(np.mean(clean**2))
    assert data.noise_sigma == pytest.approx(rms / 10.0, rel=1e-12)
    assert not np.allclose(data.y, clean)


def test_hsi_is_reproducible():
    spec = HsiSpec(seed=11)
    assert_allclose(hsi_simulate(spec).y, hsi_simulate(spec).y, rtol=0, atol=0)


def test_hsi_rejects_bad_rank():
    with pytest.raises(ValueError):
        hsi_simulate(HsiSpec(bands=4, true_rank=5))


def test_hsi_problem_gauges():
    data = hsi_simulate(HsiSpec(height=8, width=8, bands=6, true_rank=2, seed=0))
    p = hsi_problem(data, lam=0.1, nu_tv=0.7, nu2_v=1.3)
    assert p.reg.u_gauge.nu2 == 1.0
    assert p.reg.u_gauge.nu1 == 0.0
    assert p.reg.u_gauge.nonneg
    assert p.reg.v_gauge.nu_tv == 0.7
    assert p.reg.v_gauge.nu2 == 1.3
    assert p.reg.v_gauge.graph.node_count == 64
    assert p.factor_shape() == (6, 64)


def test_hsi_init_places_distinct_unit_pixels():
    data = hsi_simulate(HsiSpec(height=8, width=8, bands=6, true_rank=2, seed=0))
    p = hsi_problem(data, lam=0.1)
    m = hsi_init(p, columns=5, seed=3)
    assert m.U.shape == (6, 5) and not np.any(m.U)
    assert m.V.shape == (64, 5)
    assert_allclose(m.V.sum(axis=0), np.ones(5))
    rows = np.argmax(m.V, axis=0)
    assert len(set(rows.tolist())) == 5
    m2 = hsi_init(p, columns=5, seed=3)
    assert_allclose(m.V, m2.V)


# ------------------------------------------------------------ scoring

def test_recovery_error_values():
    x = np.array([[2.0, 0.0], [0.0, 0.0]])
    u = np.array([[2.0], [0.0]])
    v = np.array([[1.0], [0.0]])
    assert recovery_error(x, u, v) == 0.0
    assert recovery_error(x, 0 * u, v) == 1.0
    assert recovery_error(np.zeros((2, 2)), u, v) == pytest.approx(2.0)
