import itertools
import random

import pytest
import sympy
from sympy import Poly, Rational, pi

from oscillator import (
    ContractionCoefficients, OscillatorError, PolyGaussian, apply_L0, coordinates, create,
    create_many, gaussian_moment_oracle, gaussian_pairing, ground_coefficient, ground_state,
    kappa_of_k, kernel_decomposition, random_coefficients, solvability_shift, symmetrize,
    total_shift, verify_eigenrelations, verify_solvability
)


def delta(i, j):
    return 1 if i == j else 0


def poly(expr, d):
    return Poly(expr, *coordinates(d), domain='QQ_I')


def test_ground_state_is_constant():
    u0 = ground_state(2)
    assert list(u0.terms) == [0]
    assert u0.terms[0] == poly(1, 2)


def test_ground_state_in_kernel():
    for d in (1, 2, 4):
        assert apply_L0(ground_state(d)).is_zero


@pytest.mark.parametrize("d", [1, 2, 4])
def test_ground_state_norm(d):
    norm = gaussian_pairing(ground_state(d), ground_state(d))
    assert sympy.simplify(norm - (2 * pi) ** Rational(d, 2)) == 0


def test_create_lowers_frequency_by_half():
    state = create(ground_state(2), 1)
    assert list(state.terms) == [-1]
    assert state.terms[-1] == poly(sympy.I * coordinates(2)[1], 2)


def test_create_rejects_bad_index():
    with pytest.raises(OscillatorError):
        create(ground_state(2), 2)


@pytest.mark.parametrize("i,j", list(itertools.product(range(4), repeat=2)))
def test_second_excited_state_polynomial(i, j):
    u = coordinates(4)
    state = create_many(ground_state(4), (i, j))
    assert list(state.terms) == [-2]
    assert state.terms[-2] == poly(-u[i] * u[j] + delta(i, j), 4)


@pytest.mark.parametrize("idx", [(0, 1, 2, 3), (0, 0, 1, 1), (2, 2, 2, 2), (0, 1, 0, 3), (3, 1, 1, 1)])
def test_fourth_excited_state_polynomial(idx):
    u = coordinates(4)
    i, j, k, l = idx
    expected = (u[i] * u[j] * u[k] * u[l]
                - delta(i, j) * u[k] * u[l] - delta(i, k) * u[j] * u[l] - delta(i, l) * u[j] * u[k]
                - delta(j, k) * u[i] * u[l] - delta(j, l) * u[i] * u[k] - delta(k, l) * u[i] * u[j]
                + delta(i, j) * delta(k, l) + delta(i, k) * delta(j, l) + delta(i, l) * delta(j, k))
    state = create_many(ground_state(4), idx)
    assert list(state.terms) == [-4]
    assert state.terms[-4] == poly(expected, 4)


@pytest.mark.parametrize("d", [1, 2, 4])
def test_eigenrelation_suite(d):
    report = verify_eigenrelations(d)
    assert report["failures"] == []


def test_phase_dressed_eigenvalues():
    u0 = ground_state(2)
    uij = create_many(u0, (0, 1)).dress(2)
    assert apply_L0(uij) == uij.scale(2)
    uijkl = create_many(u0, (0, 0, 1, 1)).dress(4)
    assert apply_L0(uijkl) == uijkl.scale(4)
    assert apply_L0(u0.dress(2)) == u0.dress(2).scale(2)


def test_states_of_distinct_degree_are_orthogonal():
    u0 = ground_state(2)
    states = [u0, create(u0, 0), create_many(u0, (0, 1)), create_many(u0, (1, 1, 0)),
              create_many(u0, (0, 0, 1, 1))]
    for a, b in itertools.combinations(states, 2):
        assert gaussian_pairing(a, b, include_phase=False) == 0
    assert gaussian_pairing(states[2], states[2]) != 0


def test_algebra_is_closed_and_exact():
    u = coordinates(2)
    a = ground_state(2).multiply(u[0] ** 2 + Rational(1, 3))
    b = ground_state(2).multiply(-u[0] ** 2).dress(2)
    total = a + b
    assert set(total.terms) == {0, 2}
    assert (total - a - b).is_zero
    assert (a - a).is_zero
    assert total.to_dict()["d"] == 2


def test_wick_oracle_basic():
    u = coordinates(4)
    for i, j in itertools.product(range(4), repeat=2):
        assert gaussian_moment_oracle(u[i] * u[j], 4) == delta(i, j)
    for i, j, k, l in [(0, 0, 0, 0), (0, 0, 1, 1), (0, 1, 2, 3), (1, 1, 1, 2)]:
        expected = delta(i, j) * delta(k, l) + delta(i, k) * delta(j, l) + delta(i, l) * delta(j, k)
        assert gaussian_moment_oracle(u[i] * u[j] * u[k] * u[l], 4) == expected


def test_wick_oracle_odd_and_degree_bound():
    u = coordinates(2)
    assert gaussian_moment_oracle(u[0] ** 3 * u[1] ** 2, 2) == 0
    assert gaussian_moment_oracle(u[0] ** 8, 2) == 105
    with pytest.raises(OscillatorError):
        gaussian_moment_oracle(u[0] ** 10, 2)


def test_solvability_shift_examples():
    zero2 = sympy.zeros(4, 4)
    zero4 = [[[[0] * 4] * 4] * 4] * 4
    assert solvability_shift(ContractionCoefficients(C0=1, C2=zero2, C4=zero4)) == 1
    assert solvability_shift(ContractionCoefficients(C0=0, C2=sympy.eye(4), C4=zero4)) == 4
    dd = [[[[delta(i, j) * delta(k, l) for l in range(4)] for k in range(4)] for j in range(4)]
          for i in range(4)]
    c = ContractionCoefficients(C0=0, C2=zero2, C4=symmetrize(dd))
    assert c.double_trace == 8
    assert solvability_shift(c) == 24
    assert gaussian_moment_oracle(c.polynomial()) == 24


def test_asymmetric_quartic_rejected():
    c4 = [[[[0] * 2] * 2] * 2] * 2
    c4 = sympy.MutableDenseNDimArray(c4)
    c4[0, 0, 0, 1] = 1
    with pytest.raises(ValueError, match="symmetric"):
        ContractionCoefficients(C0=0, C2=sympy.zeros(2, 2), C4=c4)


@pytest.mark.parametrize("d,trials", [(2, 100), (4, 20)])
def test_solvability_shift_matches_oracle(d, trials):
    report = verify_solvability(d, trials, seed=7)
    assert report["mismatches"] == 0


def test_quartic_oracle_is_three_double_traces():
    rng = random.Random(3)
    for _ in range(50):
        c = random_coefficients(4, rng)
        quartic = ContractionCoefficients(C0=0, C2=sympy.zeros(4, 4), C4=c.C4)
        assert gaussian_moment_oracle(quartic.polynomial()) == 3 * c.double_trace


def test_quadratic_kernel_identity():
    rng = random.Random(11)
    d = 4
    u = coordinates(d)
    c = random_coefficients(d, rng)
    u0 = ground_state(d)
    lhs = u0.multiply(sum(c.C2[i, j] * u[i] * u[j] for i in range(d) for j in range(d)))
    rhs = u0.scale(c.C2.trace())
    for i, j in itertools.product(range(d), repeat=2):
        rhs = rhs - create_many(u0, (i, j)).dress(2).scale(c.C2[i, j])
    assert lhs == rhs


def test_quartic_kernel_identity():
    rng = random.Random(5)
    d = 2
    u = coordinates(d)
    c = random_coefficients(d, rng)
    u0 = ground_state(d)
    lhs = u0.multiply(sum(c.C4[idx] * u[idx[0]] * u[idx[1]] * u[idx[2]] * u[idx[3]]
                          for idx in itertools.product(range(d), repeat=4)))
    rest = sum(6 * c.C4[j, j, k, l] * u[k] * u[l]
               for j in range(d) for k in range(d) for l in range(d)) - 3 * c.double_trace
    rhs = u0.multiply(rest)
    for idx in itertools.product(range(d), repeat=4):
        rhs = rhs + create_many(u0, idx).dress(4).scale(c.C4[idx])
    assert lhs == rhs


def test_kernel_decomposition_second_order_coefficients():
    rng = random.Random(2)
    d = 2
    c = random_coefficients(d, rng)
    constant, coefficients = kernel_decomposition(c.polynomial())
    assert constant == solvability_shift(c)
    assert ground_coefficient(c.polynomial()) == solvability_shift(c)
    dkl = c.second_order_coefficients()
    for k in range(d):
        for l in range(k, d):
            alpha = tuple(delta(m, k) + delta(m, l) for m in range(d))
            expected = dkl[k, k] if k == l else dkl[k, l] + dkl[l, k]
            assert sympy.simplify(coefficients[alpha] - expected) == 0


@pytest.mark.parametrize("k,n,kappa,kappa_sq", [
    (1, 2, 2, 4), (10, 2, 11, 121), (3, 1, Rational(7, 2), Rational(49, 4))
])
def test_kappa_of_k(k, n, kappa, kappa_sq):
    assert kappa_of_k(k, n) == (kappa, kappa_sq)


def test_kappa_rejects_nonpositive_k():
    with pytest.raises(OscillatorError):
        kappa_of_k(0, 2)


def test_total_shift():
    assert total_shift(2, -0.5) == pytest.approx(-1.5)


def test_polygaussian_rejects_bad_dimension():
    with pytest.raises(OscillatorError):
        PolyGaussian(0, {})
