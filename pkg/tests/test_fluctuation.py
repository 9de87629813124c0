import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from retrodiction.errors import (
    DivergenceInfinite,
    DomainError,
    MissingReverseAtom,
    NonInvertibleCustom,
    ZeroParameter,
)
from retrodiction.fluctuation import (
    DiscreteMeasure,
    crooks_residuals,
    evaluate_family,
    f_divergence,
    jarzynski_average,
    make_f_family,
    max_residual,
    measure_of,
    omega_variables,
)
from retrodiction.prob_core import (
    FORWARD,
    REVERSE,
    bayes_reverse_channel,
    forward_process,
    forward_reverse_ratio,
    joint_from_mapping,
    reverse_process,
    steady_state,
    uniform,
    validate_distribution,
)
from retrodiction.scenarios import random_channel, tasaki_scenario, thermal

HADAMARD = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
FAMILIES = [("log", 0.5), ("log", 1), ("log", 2), ("power", 0.5), ("power", 1), ("power", 2),
            ("exp", 0.5), ("exp", 1)]


def bayes_pair(seed, n):
    rng = np.random.default_rng(seed)
    phi = random_channel(n, rng, sparse=seed % 3 == 0)
    p = validate_distribution(rng.dirichlet(np.ones(n)) * 0.9 + 0.1 / n)
    q = validate_distribution(rng.dirichlet(np.ones(n)) * 0.9 + 0.1 / n)
    gamma = steady_state(phi).gamma
    pf = forward_process(p, phi)
    pr = reverse_process(q, bayes_reverse_channel(phi, gamma))
    return pf, pr, forward_reverse_ratio(pf, pr)


# -- families ----------------------------------------------------------------

def test_log_family_basics():
    fam = make_f_family("log", 1)
    assert fam.f(1.0) == 0.0
    assert fam.g(2.5) == -2.5
    assert fam.name == "log(1)"


def test_power_family_is_identity_at_one():
    fam = make_f_family("power", 1)
    assert fam.f(3.0) == 3.0
    # relation weight f^{-1}(g(w)) = w^{-1/alpha}, the exponent 2 - 1/alpha = 1 in density form
    assert fam.f_inverse(fam.g(4.0)) == pytest.approx(0.25, rel=1e-15)


def test_exp_family_log_product():
    fam = make_f_family("exp", 1)
    for r in (0.3, 1.0, 2.7):
        w_f, w_r = fam.f(r), fam.f(1 / r)
        assert math.log(w_f) * math.log(w_r) == pytest.approx(1.0, rel=1e-12)
        assert fam.g(w_f) == pytest.approx(w_r, rel=1e-12)


def test_exp_family_undefined_at_one():
    with pytest.raises(DomainError):
        make_f_family("exp", 1).g(1.0)


@pytest.mark.parametrize("kind", ["log", "power", "exp"])
def test_zero_parameter(kind):
    with pytest.raises(ZeroParameter):
        make_f_family(kind, 0)


def test_custom_family_accepted_and_jarzynski_holds():
    fam = make_f_family("custom", f=lambda r: (r - 1 / r) / 2,
                        f_inverse=lambda w: np.exp(np.arcsinh(w)), g=lambda w: -w)
    pf, pr, ratio = bayes_pair(4, 5)
    rep = evaluate_family(pf, pr, ratio, fam)
    assert rep.jarzynski_residual <= 1e-10
    assert rep.max_crooks_residual <= 1e-9


def test_custom_family_non_monotone_rejected():
    with pytest.raises(NonInvertibleCustom):
        make_f_family("custom", f=lambda r: np.log(r) ** 2, f_inverse=np.exp, g=lambda w: w)


def test_custom_family_wrong_g_rejected():
    with pytest.raises(NonInvertibleCustom):
        make_f_family("custom", f=np.log, f_inverse=np.exp, g=lambda w: 1 - w)


# -- omega and measures ------------------------------------------------------

def test_omega_power_two_at_ratio_four():
    pf = joint_from_mapping({(0, 0): 0.8, (0, 1): 0.2}, (0,), (0, 1), FORWARD)
    pr = joint_from_mapping({(0, 0): 0.2, (0, 1): 0.8}, (0,), (0, 1), REVERSE)
    om = omega_variables(forward_reverse_ratio(pf, pr), make_f_family("power", 2))
    assert om.forward()[(0, 0)] == pytest.approx(16.0, rel=1e-15)
    assert om.reverse()[(0, 0)] == pytest.approx(1 / 16, rel=1e-15)


def test_log_omega_reverse_is_exact_negation():
    pf, pr, ratio = bayes_pair(11, 7)
    for z in (0.5, 1, 2, 3.7):
        om = omega_variables(ratio, make_f_family("log", z))
        assert np.array_equal(om.omega_r, -om.omega_f)


def test_unit_ratio_gives_single_atom_at_zero():
    phi = random_channel(4, np.random.default_rng(0))
    gamma = steady_state(phi).gamma
    pf = forward_process(gamma, phi)
    pr = reverse_process(gamma, bayes_reverse_channel(phi, gamma))
    rep = evaluate_family(pf, pr, forward_reverse_ratio(pf, pr), make_f_family("log", 1))
    assert len(rep.mu_f) == len(rep.mu_r) == 1
    assert abs(rep.mu_f.values[0]) <= 1e-12
    assert rep.max_crooks_residual <= 1e-15


def test_close_values_merge_into_one_atom():
    pf = joint_from_mapping({(0, 0): 0.5, (0, 1): 0.5}, (0,), (0, 1), FORWARD)
    mu = measure_of(pf, {(0, 0): 0.3, (0, 1): 0.3 + 1e-12})
    assert len(mu) == 1 and mu.weights[0] == pytest.approx(1.0)
    mu = measure_of(pf, {(0, 0): 0.3, (0, 1): 0.3 + 1e-6})
    assert len(mu) == 2


def test_missing_omega_value():
    pf = joint_from_mapping({(0, 0): 0.5, (0, 1): 0.5}, (0,), (0, 1), FORWARD)
    with pytest.raises(DomainError):
        measure_of(pf, {(0, 0): 0.0})
    assert measure_of(pf, {(0, 0): 0.0}, restrict=True).mass == 0.5


def test_tasaki_qubit_four_atoms_with_forward_weights():
    run = tasaki_scenario([0, 1], [0, 2], HADAMARD, 1.0)
    rep = evaluate_family(run.forward, run.reverse, run.ratio, make_f_family("log", 1))
    p = thermal([0, 1], 1.0).mass
    expected = sorted([p[0] / 2, p[0] / 2, p[1] / 2, p[1] / 2])
    assert len(rep.mu_f) == 4
    np.testing.assert_allclose(sorted(rep.mu_f.weights), expected, atol=1e-15)
    assert rep.max_crooks_residual <= 1e-10


def test_missing_reverse_atom():
    fam = make_f_family("log", 1)
    mu_f = DiscreteMeasure(np.array([0.5]), np.array([1.0]))
    mu_r = DiscreteMeasure(np.array([0.7]), np.array([1.0]))
    with pytest.raises(MissingReverseAtom):
        crooks_residuals(mu_f, mu_r, fam)


def test_unclaimed_reverse_atom_counts_as_residual():
    fam = make_f_family("log", 1)
    mu_f = DiscreteMeasure(np.array([0.0]), np.array([1.0]))
    mu_r = DiscreteMeasure(np.array([0.0, 2.0]), np.array([0.9, 0.1]))
    assert max_residual(crooks_residuals(mu_f, mu_r, fam)) == pytest.approx(0.1)


def test_log_crooks_weight_is_exponential():
    z = 2.0
    fam = make_f_family("log", z)
    run = tasaki_scenario([0, 1], [0, 2], HADAMARD, 1.0)
    rep = evaluate_family(run.forward, run.reverse, run.ratio, fam)
    for row in rep.crooks:
        assert row.weight_reverse == pytest.approx(math.exp(-z * row.omega) * row.weight_forward,
                                                   rel=1e-12)


# -- Jarzynski ---------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 16))
def test_jarzynski_and_crooks_every_family(seed, n):
    pf, pr, ratio = bayes_pair(seed, n)
    for kind, par in FAMILIES:
        rep = evaluate_family(pf, pr, ratio, make_f_family(kind, par))
        assert rep.jarzynski_residual <= 1e-10, (kind, par)
        assert rep.max_crooks_residual <= 1e-9, (kind, par)


def test_jarzynski_direct_sum_matches():
    pf, pr, ratio = bayes_pair(3, 4)
    fam = make_f_family("power", 0.5)
    om = omega_variables(ratio, fam)
    direct = sum(m * om.forward()[pair] ** (-1 / 0.5) for pair, m in pf.as_dict().items())
    assert jarzynski_average(pf, om.forward(), fam) == pytest.approx(direct, rel=1e-13)
    assert direct == pytest.approx(1.0, abs=1e-10)


def test_non_normalized_reverse_breaks_jarzynski():
    # transpose of a non-doubly-stochastic channel as a reverse conditional
    phi = random_channel(3, np.random.default_rng(5))
    p, q = uniform((0, 1, 2)), validate_distribution([0.2, 0.3, 0.5])
    pf = forward_process(p, phi)
    fake = {(x, y): q.mass[y] * phi.table[x, y] for x in range(3) for y in range(3)}
    efficacy = sum(fake.values())
    assert abs(efficacy - 1) > 1e-3
    avg = sum(pf.table[x, y] * fake[(x, y)] / pf.table[x, y] for x in range(3) for y in range(3))
    assert avg == pytest.approx(efficacy, rel=1e-12)


# -- divergences -------------------------------------------------------------

def test_divergence_zero_for_equal_processes():
    pf, _, _ = bayes_pair(1, 3)
    assert f_divergence(pf, pf, np.log) == 0.0


def test_divergence_point_mass_vs_uniform_diagonal():
    pf = joint_from_mapping({(0, 0): 1.0}, (0, 1), (0, 1), FORWARD)
    pr = joint_from_mapping({(0, 0): 0.5, (1, 1): 0.5}, (0, 1), (0, 1), REVERSE)
    assert f_divergence(pf, pr, np.log) == pytest.approx(math.log(2), abs=1e-15)


def test_divergence_weighting_convention():
    # forward-weighted: 1/r - 1 integrates to sum P_R - sum P_F = 0 on a common support,
    # while r - 1 gives the chi-square distance sum P_F^2 / P_R - 1
    pf, pr, _ = bayes_pair(9, 6)
    assert abs(f_divergence(pf, pr, lambda r: 1 / r - 1)) <= 1e-15
    live = pf.table > 0
    chi2 = math.fsum((pf.table[live] ** 2 / pr.table[live]).tolist()) - 1
    assert f_divergence(pf, pr, lambda r: r - 1) == pytest.approx(chi2, rel=1e-12)
    assert chi2 > 0


def test_divergence_infinite():
    pf = joint_from_mapping({(0, 0): 0.5, (1, 1): 0.5}, (0, 1), (0, 1), FORWARD)
    pr = joint_from_mapping({(0, 0): 1.0}, (0, 1), (0, 1), REVERSE)
    assert f_divergence(pf, pr, np.log) == math.inf
    with pytest.raises(DivergenceInfinite):
        f_divergence(pf, pr, np.log, raise_on_infinite=True)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 8))
def test_divergence_bounded_below_by_f_of_one(seed, n):
    pf, pr, _ = bayes_pair(seed, n)
    assert f_divergence(pf, pr, np.log) >= -1e-15
    assert f_divergence(pf, pr, lambda r: r ** 2) >= 1 - 1e-12
    assert f_divergence(pf, pf, lambda r: r ** 2) == pytest.approx(1.0, abs=1e-15)
