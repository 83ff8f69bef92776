import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from wegnerlab.hamiltonian import PotentialField, assemble, contact_interaction
from wegnerlab.lattice import NonRegularDomainError, Rectangle, RectangularDomain
from wegnerlab.randomness import sample_potential, triangular, uniform
from wegnerlab.spectral import Spectrum, eigen_symmetric
from wegnerlab.verify import (
    InapplicableCheck,
    QuadratureError,
    adaptive_simpson,
    chain_check,
    chain_rule_check,
    fd_derivative,
    fd_derivatives,
    fh_derivative,
    fh_derivatives,
    interlacing_check,
    lemma31_check,
    lemma32_oracle,
    random_lemma32_instance,
    run_suite,
    smooth_switch,
    tight_lemma32_instance,
)


def I(a, b):
    return Rectangle.interval(a, b)


# -- smooth switch ----------------------------------------------------------

@pytest.mark.parametrize("kappa", [1e-3, 0.1, 1.0, 7.5])
def test_switch_shape(kappa):
    phi = smooth_switch(kappa)
    assert phi(0.0) == pytest.approx(0.5, abs=1e-14)
    assert phi(-kappa) == 0.0 and phi(kappa) == 1.0
    assert phi(-3 * kappa) == 0.0 and phi(2 * kappa) == 1.0
    t = np.linspace(-1.2 * kappa, 1.2 * kappa, 401)
    vals = phi(t)
    assert np.all(np.diff(vals) >= -1e-15)
    assert np.all((vals >= 0) & (vals <= 1))
    d = phi.derivative(t)
    assert np.all(d >= 0)
    assert np.all(d[np.abs(t) >= kappa] == 0)


@pytest.mark.parametrize("kappa", [1e-3, 0.1, 1.0])
def test_switch_derivative_integrates_to_one(kappa):
    phi = smooth_switch(kappa)
    total = adaptive_simpson(lambda t: float(phi.derivative(t)), -kappa, kappa, tol=1e-10)
    assert abs(total - 1.0) <= 1e-8


def test_switch_value_is_integral_of_derivative():
    phi = smooth_switch(0.5)
    for t in [-0.4, -0.1, 0.2, 0.45]:
        ref = adaptive_simpson(lambda s: float(phi.derivative(s)), -0.5, t, tol=1e-12)
        assert phi(t) == pytest.approx(ref, abs=1e-10)


def test_switch_rejects_nonpositive_kappa():
    with pytest.raises(ValueError):
        smooth_switch(0.0)


def test_adaptive_simpson_against_closed_forms():
    assert adaptive_simpson(np.sin, 0, np.pi) == pytest.approx(2.0, abs=1e-8)
    assert adaptive_simpson(lambda x: x**3 - x, -1, 2) == pytest.approx(2.25, abs=1e-12)
    ref = integrate.quad(lambda x: np.exp(-x * x), -3, 1)[0]
    assert adaptive_simpson(lambda x: np.exp(-x * x), -3, 1) == pytest.approx(ref, abs=1e-8)
    with pytest.raises(QuadratureError):
        adaptive_simpson(lambda x: np.sign(x - 0.1234567), -1, 1, tol=1e-14, max_depth=5)


# -- derivatives ---------------------------------------------------------------

def test_fh_single_particle_is_squared_amplitude():
    dom = RectangularDomain.of(I(0, 6))
    S = eigen_symmetric(assemble(dom, sample_potential(dom, uniform(), 2)))
    for n in (0, 3, 6):
        assert fh_derivative(S, dom, n, (4,)) == pytest.approx(S.eigenvectors[4, n] ** 2)


def test_fh_sums_to_particle_number():
    dom = RectangularDomain.of(I(0, 3), I(6, 8), I(0, 3))
    S = eigen_symmetric(assemble(dom, sample_potential(dom, uniform(), 4), contact_interaction(0.5, 1)))
    all_sites = fh_derivatives(S, dom, dom.particle_sites())
    np.testing.assert_allclose(all_sites.sum(axis=1), dom.N, atol=1e-12)


def test_fd_single_site():
    dom = RectangularDomain.of(I(2, 2), I(2, 2), I(2, 2))
    v = PotentialField.from_mapping({2: 0.4})
    assert fd_derivative(dom, v, None, (2,), 0) == pytest.approx(3.0, abs=1e-10)


def test_constant_shift_moves_spectrum_by_n_c():
    dom = RectangularDomain.of(I(0, 4), I(0, 4))
    v = sample_potential(dom, uniform(), 9)
    c = 0.37
    w0 = np.linalg.eigvalsh(assemble(dom, v).dense())
    w1 = np.linalg.eigvalsh(assemble(dom, PotentialField(v.sites, v.values + c)).dense())
    np.testing.assert_allclose(w1 - w0, 2 * c, atol=1e-12)


def test_fd_agrees_with_fh():
    dom = RectangularDomain.of(I(1, 6), I(1, 6))
    U = contact_interaction(1.0, 1)
    v = sample_potential(dom, uniform(), 17)
    S = eigen_symmetric(assemble(dom, v, U))
    checked = 0
    for xi in [(1,), (4,)]:
        fd, ok = fd_derivatives(dom, v, U, xi, h=1e-4)
        for n in np.flatnonzero(ok):
            assert abs(fd[n] - fh_derivative(S, dom, n, xi)) <= 1e-6
            checked += 1
    assert checked > 40


def test_fd_refuses_degenerate_eigenvalue():
    dom = RectangularDomain.of(I(0, 1), I(0, 1))
    v = PotentialField.from_mapping({0: 0.0, 1: 0.0})
    with pytest.raises(InapplicableCheck):
        fd_derivative(dom, v, None, (0,), 1)  # eigenvalue 0 is doubly degenerate


# -- lemma on derivative sums ------------------------------------------------------

@pytest.mark.parametrize(
    "dom, K",
    [
        (RectangularDomain.of(I(0, 4), I(0, 4)), 2),
        (RectangularDomain.of(I(0, 2), I(0, 2), I(0, 2)), 3),
        (RectangularDomain.of(I(0, 4), I(7, 9)), 1),
        (RectangularDomain.of(I(7, 9), I(0, 3), I(7, 9)), 2),
    ],
)
@pytest.mark.parametrize("U", [None, contact_interaction(1.3, 1)])
def test_lemma31(dom, K, U):
    rep = lemma31_check(dom, sample_potential(dom, uniform(), 1), U)
    assert rep.K == K
    assert rep.passed and rep.max_deviation <= 1e-9


def test_lemma31_degenerate_spectrum():
    dom = RectangularDomain.of(I(0, 3), I(0, 3))
    rep = lemma31_check(dom, PotentialField.zeros(dom))
    w = rep.sums  # sum for every eigenvector of a highly degenerate spectrum
    np.testing.assert_allclose(w, 2.0, atol=1e-9)


def test_lemma31_rejects_irregular():
    dom = RectangularDomain.of(I(0, 3), I(2, 5))
    with pytest.raises(NonRegularDomainError):
        lemma31_check(dom, sample_potential(dom, uniform(), 0))


# -- interlacing ---------------------------------------------------------------

def test_interlacing_single_particle_rank_one():
    dom = RectangularDomain.of(I(0, 7))
    rep = interlacing_check(dom, sample_potential(dom, uniform(), 3), None, uniform(), (3,))
    assert rep.M == rep.rank == 1
    assert rep.passed and rep.top_edge == 1


def test_interlacing_lower_inequality_positive_perturbation():
    dom = RectangularDomain.of(I(0, 2), I(0, 2))
    dens = triangular(-1, 1)
    for seed in range(20):
        rep = interlacing_check(dom, sample_potential(dom, dens, seed), None, dens, (1,))
        assert rep.lower_slack >= -1e-9


def test_interlacing_small_pair_domain_100_seeds():
    dom = RectangularDomain.of(I(0, 2), I(0, 2))
    for seed in range(100):
        v = sample_potential(dom, uniform(), seed)
        for xi in [(0,), (1,), (2,)]:
            rep = interlacing_check(dom, v, None, uniform(), xi)
            assert rep.passed, (seed, xi, rep)
            assert rep.M == 6 and rep.rank == 5 and rep.top_edge == 6


def test_interlacing_whole_spectrum_past_top():
    dom = RectangularDomain.of(I(0, 0), I(0, 0))
    rep = interlacing_check(dom, PotentialField.from_mapping({0: 0.2}), None, uniform(), (0,))
    assert rep.M == 2 and rep.top_edge == 1 and rep.upper_slack == np.inf


# -- sandwich-sum oracle ---------------------------------------------------------

def test_lemma32_examples():
    assert lemma32_oracle([0, 1, 2], [0, 1, 2], 1, lambda t: np.clip(t, 0, 1)).total == 0.0
    res = lemma32_oracle([0, 1, 2], [0.5, 1.5, 2.5], 1, lambda t: np.clip(np.asarray(t), 0, 1))
    assert res.total == pytest.approx(0.5) and res.holds
    a = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
    b = np.r_[a[2:], 5.0, 6.0]
    step = lambda t: (np.asarray(t) >= 2.5).astype(float)
    assert lemma32_oracle(a, b, 2, step).total == 2.0


def test_lemma32_precondition_reported():
    with pytest.raises(InapplicableCheck):
        lemma32_oracle([0, 1, 2], [0.5, 2.5, 3.0], 1, np.tanh)  # b_1 > a_2
    with pytest.raises(InapplicableCheck):
        lemma32_oracle([1, 0], [1, 1], 1, np.tanh)
    with pytest.raises(InapplicableCheck):
        lemma32_oracle([0, 1], [0.5, 0.6], 0, np.tanh)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lemma32_random_instances(seed):
    a, b, M, phi = random_lemma32_instance(np.random.default_rng(seed))
    res = lemma32_oracle(a, b, M, phi)
    assert res.total <= M + 1e-12


@pytest.mark.parametrize("smooth", [False, True])
def test_lemma32_tight(smooth):
    rng = np.random.default_rng(5)
    for _ in range(20):
        a, b, M, phi = tight_lemma32_instance(rng, smooth=smooth)
        assert lemma32_oracle(a, b, M, phi).total == pytest.approx(M, abs=1e-12)


# -- chain of inequalities -------------------------------------------------------------

def test_chain_far_from_spectrum():
    res = chain_check(np.array([-3.0, 2.0]), 0.0, 0.1)
    assert res.as_tuple() == (0, 0, 0.0, 0.0)


def test_chain_eigenvalue_at_e():
    res = chain_check(np.array([-3.0, 0.25, 2.0]), 0.25, 0.1)
    assert res.indicator == 1 and res.count == 1
    assert res.switch_trace == pytest.approx(1.0, abs=1e-15)
    assert res.integral == pytest.approx(1.0, abs=1e-6)


def test_chain_partial_switch():
    # eigenvalue at E + 2.5 kappa: outside the window but inside the switch support
    kappa = 0.1
    res = chain_check(np.array([0.25]), 0.0, kappa)
    phi = smooth_switch(kappa)
    assert res.count == 0
    assert res.switch_trace == pytest.approx(1 - phi(0.25 - 0.2), abs=1e-14)
    assert res.passed


def test_chain_requires_matching_switch():
    with pytest.raises(ValueError):
        chain_check(np.array([0.0]), 0.0, 0.1, smooth_switch(0.2))


def test_chain_random_36_dim():
    dom = RectangularDomain.of(I(1, 6), I(1, 6))
    rng = np.random.default_rng(0)
    for seed in range(100):
        w = np.linalg.eigvalsh(assemble(dom, sample_potential(dom, uniform(), seed), contact_interaction(1.0, 1)).dense())
        E = float(rng.uniform(w[0], w[-1]))
        res = chain_check(w, E, 0.05)
        assert res.passed, (seed, res)


def test_chain_rule_consistency():
    dom = RectangularDomain.of(I(0, 3), I(0, 3))
    v = sample_potential(dom, uniform(), 6)
    U = contact_interaction(1.0, 1)
    w = np.linalg.eigvalsh(assemble(dom, v, U).dense())
    phi = smooth_switch(0.3)
    diff = chain_rule_check(dom, v, U, phi, E=float(w[5]), t=0.1, h=1e-5)
    assert np.abs(diff).max() <= 1e-5


# -- suite driver -------------------------------------------------------------------------

def test_run_suite_counts_and_workers():
    dom = RectangularDomain.of(I(0, 2), I(0, 2))
    U = contact_interaction(1.0, 1)
    one = run_suite("interlacing", dom, uniform(), U, range(6))
    two = run_suite("interlacing", dom, uniform(), U, range(6), workers=2)
    assert one == two
    assert one["passed"] == 18 and one["failed"] == 0
    with pytest.raises(KeyError):
        run_suite("nope", dom, uniform(), U, range(2))
