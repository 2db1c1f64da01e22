import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from spectramix import rmt
from spectramix.numerics import ContractError, InsufficientDataError, RngStream, ks_distance
from spectramix.qkr import QkrConfig, build_floquet, floquet_eigensystem


# same stream layout as the command-line tool: samples on sub-stream 1, rotations on 2
ROOT = RngStream(0)


@pytest.fixture(scope="module")
def goe8():
    return rmt.sample_batch("goe", 8, 10_000, ROOT.substream(1))


@pytest.mark.parametrize("kind", ["goe", "gue", "gse"])
def test_symmetry_class(kind):
    H = rmt.sample_ensemble(kind, 4, RngStream(1)).H
    assert np.max(np.abs(H - H.conj().T)) == 0
    if kind == "goe":
        assert np.isrealobj(H)
    if kind == "gse":
        n = 4
        A, B = H[:n, :n], H[:n, n:]
        assert np.array_equal(H[n:, n:], A.conj()) and np.array_equal(H[n:, :n], -B.conj())
        assert np.array_equal(B, -B.T)


def test_sample_validation():
    with pytest.raises(ContractError):
        rmt.sample_ensemble("goe", 1, RngStream(0))
    with pytest.raises(ContractError):
        rmt.ensemble_kind("poe")


def test_entry_variances(goe8):
    H = np.stack([s.H for s in goe8])
    assert abs(H[:, 0, 0].var() - 1) < 0.05
    assert abs(H[:, 0, 1].var() - 0.5) < 0.03


def test_batch_substreams_are_stable():
    a = rmt.sample_batch("gue", 3, 5, RngStream(4))
    b = rmt.sample_batch("gue", 3, 2, RngStream(4))
    assert all(np.array_equal(x.H, y.H) for x, y in zip(a, b))


def test_kramers_pairs():
    ev = np.linalg.eigvalsh(rmt.sample_ensemble("gse", 4, RngStream(2)).H)
    assert np.max(np.abs(ev[0::2] - ev[1::2])) < 1e-8


@pytest.mark.parametrize("kind", ["orthogonal", "unitary"])
def test_haar_unitarity(kind):
    U = rmt.haar_transform(kind, 16, RngStream(3))
    assert np.max(np.abs(U.conj().T @ U - np.eye(16))) < 1e-12


def test_haar_symplectic():
    U = rmt.haar_transform("gse", 4, RngStream(5))
    J = rmt.symplectic_form(4)
    assert np.max(np.abs(U.conj().T @ U - np.eye(8))) < 1e-12
    assert np.max(np.abs(U.T @ J @ U - J)) < 1e-12
    H = rmt.sample_ensemble("gse", 4, RngStream(6)).H
    Hp = U @ H @ U.conj().T
    n = 4
    assert np.allclose(Hp[n:, n:], Hp[:n, :n].conj()) and np.allclose(Hp[:n, n:], -Hp[:n, n:].T)


def _eigenphase_ks(correction):
    U = rmt.haar_batch("unitary", 64, 500, RngStream(7), phase_correction=correction)
    phases = np.angle(np.linalg.eigvals(U)).ravel()
    return ks_distance(phases, lambda x: (x + np.pi) / (2 * np.pi)), phases.size


def test_haar_eigenphases_uniform():
    ks, n = _eigenphase_ks(True)
    assert ks < 1.63 / np.sqrt(n)


def test_haar_without_phase_correction_is_biased():
    ks, n = _eigenphase_ks(False)
    assert ks > 1.63 / np.sqrt(n)


def test_randomness_goe_passes(goe8):
    r = rmt.randomness_test(goe8)
    assert r.passed and r.statistic < 0.04
    assert set(r.to_dict()) == {"test", "statistic", "threshold", "pass", "samples", "seed"}


def test_randomness_copied_entry_fails():
    r = rmt.randomness_test(rmt.copied_entry_batch(8, 10_000, RngStream(0)))
    assert not r.passed and r.statistic > 0.999


def test_randomness_too_few_samples():
    with pytest.raises(InsufficientDataError):
        rmt.randomness_test(rmt.sample_batch("goe", 8, 1, RngStream(0)))


def test_invariance_goe_passes(goe8):
    assert rmt.invariance_test(goe8, "goe", ROOT.substream(2)).passed


def test_invariance_identity_transform(goe8):
    r = rmt.invariance_test(goe8, "goe", RngStream(1), transform="identity")
    assert r.passed and r.statistic == 0.0


def test_invariance_uniform_fails():
    r = rmt.invariance_test(rmt.uniform_symmetric_batch(8, 10_000, RngStream(0)), "goe", RngStream(1))
    assert not r.passed


def test_invariance_gue_and_gse():
    for kind in ("gue", "gse"):
        n = 4 if kind == "gse" else 8
        samples = rmt.sample_batch(kind, n, 2000, RngStream(2))
        assert rmt.invariance_test(samples, kind, RngStream(3), rotations_per_matrix=4).passed


def test_invariance_too_few():
    with pytest.raises(InsufficientDataError):
        rmt.invariance_test(rmt.sample_batch("goe", 8, 10, RngStream(0)), "goe")


@pytest.mark.slow
def test_randomness_calibration():
    passes = fails = 0
    for seed in range(100):
        passes += rmt.randomness_test(rmt.sample_batch("goe", 8, 10_000, RngStream(seed)), seed=seed).passed
        fails += not rmt.randomness_test(rmt.copied_entry_batch(8, 10_000, RngStream(seed)), seed=seed).passed
    assert passes >= 95 and fails == 100


@pytest.mark.slow
def test_invariance_calibration():
    passes = fails = 0
    for seed in range(100):
        null = rmt.sample_batch("goe", 8, 1000, RngStream(seed))
        adv = rmt.uniform_symmetric_batch(8, 1000, RngStream(seed))
        passes += rmt.invariance_test(null, "goe", RngStream(seed, 7)).passed
        fails += not rmt.invariance_test(adv, "goe", RngStream(seed, 7)).passed
    assert passes >= 95 and fails == 100


def test_unfold_equally_spaced():
    s = rmt.unfold_spectrum(np.arange(40.0), method="polynomial", degree=1)
    assert np.allclose(s, 1, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(16, 200), st.sampled_from(["semicircle", "polynomial"]), st.integers(0, 10**6))
def test_unfold_mean_is_one(n, method, seed):
    ev = np.sort(np.random.default_rng(seed).standard_normal(n))
    assert abs(rmt.unfold_spectrum(ev, method=method).mean() - 1) < 1e-12


def test_unfold_errors():
    with pytest.raises(ContractError):
        rmt.unfold_spectrum(np.arange(20.0)[::-1])
    with pytest.raises(InsufficientDataError):
        rmt.unfold_spectrum(np.arange(5.0))
    with pytest.raises(ContractError):
        rmt.unfold_spectrum(np.arange(20.0), method="spline")


@pytest.mark.parametrize("beta", [1, 2, 4])
def test_surmise_moments(beta):
    norm = integrate.quad(lambda s: rmt.wigner_surmise(beta, s), 0, np.inf)[0]
    mean = integrate.quad(lambda s: s * rmt.wigner_surmise(beta, s), 0, np.inf)[0]
    assert abs(norm - 1) < 1e-10 and abs(mean - 1) < 1e-10
    assert rmt.wigner_surmise(beta, 0.0) == 0
    assert rmt.surmise_cdf(beta, 50.0) == pytest.approx(1.0)


def test_surmise_value_and_errors():
    assert rmt.wigner_surmise(1, 1.0) == pytest.approx(np.pi / 2 * np.exp(-np.pi / 4), abs=1e-15)
    assert abs(rmt.wigner_surmise(1, 1.0) - 0.7161) < 5e-4
    with pytest.raises(ContractError):
        rmt.wigner_surmise(3, 1.0)
    with pytest.raises(ContractError):
        rmt.wigner_surmise(1, -1.0)


def test_surmise_against_two_by_two_monte_carlo():
    gen = np.random.default_rng(11)
    a, b = gen.standard_normal((2, 10**6))
    c = gen.standard_normal(10**6) * np.sqrt(0.5)
    s = np.sqrt((a - b) ** 2 + 4 * c**2)
    s /= s.mean()
    hist, edges = np.histogram(s, bins=200, range=(0, 4), density=True)
    k = np.searchsorted(edges, 1.0) - 1
    assert abs(hist[k] - rmt.wigner_surmise(1, 0.5 * (edges[k] + edges[k + 1]))) < 0.01


def test_goe_bulk_spacings():
    samples = rmt.sample_batch("goe", 200, 250, RngStream(1))
    s = rmt.ensemble_spacings(samples, bulk=0.5)
    assert s.size >= 20_000
    assert rmt.spacing_test(s, 1).passed


def test_poisson_spacings_fail():
    s = np.random.default_rng(0).exponential(size=20_000)
    r = rmt.spacing_test(s, 1)
    assert not r.passed and r.statistic > 0.1


def test_spacing_errors():
    with pytest.raises(InsufficientDataError):
        rmt.spacing_test([], 1)
    with pytest.raises(ContractError):
        rmt.spacing_test(-np.ones(2000), 1)


def test_gse_spacings_deduplicated():
    s = rmt.ensemble_spacings(rmt.sample_batch("gse", 100, 40, RngStream(2)), bulk=0.5)
    assert s.min() > 1e-3
    assert rmt.spacing_test(s, 4).passed


def test_worked_construction():
    c = rmt.weak_limit_construction([0.3], 0.3, 3, alpha=0.2, beta=0.5)
    assert c.u**2 == 2 / 3 and c.v**2 == 1 / 3
    assert np.trace(c.rho_star @ c.pi).real == pytest.approx(0.3, abs=1e-15)
    assert c.gamma == pytest.approx(0.3)


def test_construction_limit():
    c = rmt.weak_limit_construction([0.2 + 1e-12], 0.2 + 1e-12, 3, alpha=0.2, beta=0.5)
    assert c.v**2 < 1e-10
    e1 = np.eye(3)[0]
    assert np.max(np.abs(c.pi - np.outer(e1, e1))) < 1e-5


def test_construction_errors():
    with pytest.raises(ContractError):
        rmt.weak_limit_construction([0.6], 0.3, 3)
    with pytest.raises(ContractError):
        rmt.weak_limit_construction([0.3], 0.0, 3)
    with pytest.raises(ContractError):
        rmt.weak_limit_construction([0.3], 0.3, 2)
    with pytest.raises(ContractError):
        rmt.weak_limit_construction([0.3], 0.3, 3, alpha=0.35)


def test_construction_random_inputs():
    gen = np.random.default_rng(8)
    for _ in range(100):
        k = int(gen.integers(1, 10))
        p = gen.uniform(0.01, 0.49, k)
        c = rmt.weak_limit_construction(p, float(gen.uniform(0.01, 0.49)), int(gen.integers(3, 8)))
        assert max(c.trace_defects()) < 1e-12
        assert c.idempotency_defect() < 1e-12
        assert c.alpha < min(p.min(), c.p_joint) and max(p.max(), c.p_joint) < c.beta <= 0.5
        assert c.alpha + c.beta + c.gamma == pytest.approx(1)
        assert np.all(np.linalg.eigvalsh(c.rho_star) >= -1e-15)
        assert c.product_defect() >= 0


def test_construction_unitary_invariance():
    c = rmt.weak_limit_construction([0.1, 0.4], 0.25, 4)
    U = rmt.haar_transform("unitary", 4, RngStream(0))
    assert c.invariance_defect(U) < 1e-12


def test_quasienergy_spacings_equally_spaced():
    s = rmt.quasienergy_spacings(np.linspace(-np.pi, np.pi, 300, endpoint=False))
    assert np.allclose(s, 1)


def test_bgs_uniform_phases_poisson():
    rng = RngStream(9)
    reports = rmt.bgs_spacing_check([rmt.uniform_phases(512, rng.substream(i)) for i in range(4)], rng)
    assert rmt.bgs_verdict(reports) == "poisson"


def test_bgs_too_few_phases():
    with pytest.raises(InsufficientDataError):
        rmt.bgs_spacing_check(np.zeros(10))


@pytest.mark.slow
@pytest.mark.parametrize("lam, verdict", [(10.0, "goe"), (0.0, "poisson")])
def test_bgs_kicked_rotor(lam, verdict):
    spectra = []
    for tau in (0.7, 1.0, 1.3):
        cfg = QkrConfig(512, lam, tau, 0.1, kick_shift=0.3 * 2 * np.pi / 512)
        spectra.append(floquet_eigensystem(build_floquet(cfg)).phases)
    assert rmt.bgs_verdict(rmt.bgs_spacing_check(spectra)) == verdict
