import itertools
from fractions import Fraction

import numpy as np
import pytest

from qdbell.contraction import (
    ACCEPTED_PATTERNS,
    HS_VECTORS,
    REJECTED_PATTERNS,
    average_monomial,
    average_polynomial,
    chs_expectation,
    chs_pair_expectation,
    chs_triple_expectation,
    conditioned_density_matrix,
    unconditioned_pair_sum,
)
from qdbell.model import SetupParams
from qdbell.noise import IndistMoments, NoiseParams, UnsupportedMonomialError, moment_table
from qdbell.polynomial import GaussianRational, OverlapPolynomial, OverlapSymbol, overlap


def ov(k, l):
    return OverlapPolynomial.symbol(overlap(k, l))


def const(x):
    return OverlapPolynomial.constant(GaussianRational(Fraction(x)))


def test_hs_vectors_are_orthogonal():
    v = np.array([HS_VECTORS[k] for k in (1, 2, 3, 4)])
    assert np.allclose(v.conj() @ v.T, 4 * np.eye(4))


def test_pattern_partition():
    assert len(ACCEPTED_PATTERNS) + len(REJECTED_PATTERNS) == 15


@pytest.mark.parametrize(
    "args, expected",
    [
        ((1, 3, 1, 3), lambda: const(1) - ov(1, 3) * ov(3, 1)),
        ((1, 4, 1, 4), lambda: const(1) + ov(1, 4) * ov(4, 1)),
        ((2, 3, 2, 3), lambda: const(1) + ov(2, 3) * ov(3, 2)),
        ((2, 4, 2, 4), lambda: const(1) - ov(2, 4) * ov(4, 2)),
        ((1, 2, 1, 2), lambda: const(1) - ov(1, 2) * ov(2, 1)),
        ((1, 4, 2, 3), lambda: -(ov(1, 2) * ov(4, 3)) - ov(1, 3) * ov(4, 2)),
        ((1, 3, 2, 4), lambda: -(ov(1, 2) * ov(3, 4)) + ov(1, 4) * ov(3, 2)),
    ],
)
def test_pair_expectations(args, expected):
    assert chs_pair_expectation(*args) == expected()


def test_pair_expectation_is_symmetric_in_labels():
    assert chs_pair_expectation(4, 1, 3, 2) == chs_pair_expectation(1, 4, 2, 3)


def test_hom_null():
    for i, j in [(1, 2), (3, 4)]:
        p = chs_pair_expectation(i, j, i, j)
        assert p.collapse(1.0, 0.3) == pytest.approx(0.0)


def test_triple_expectation_closed_form():
    expected = const(Fraction(3, 2)) + const(Fraction(-1, 2)) * (
        ov(3, 4) * ov(4, 3) + ov(1, 3) * ov(3, 1) - const(3) * ov(1, 4) * ov(4, 1)
        + ov(3, 4) * ov(1, 3) * ov(4, 1)
        + ov(4, 3) * ov(3, 1) * ov(1, 4)
    )
    assert chs_triple_expectation(1, 3, 4) == expected


def test_triple_expectation_substitutions():
    p = chs_triple_expectation(1, 3, 4)
    assert p.collapse(0.0, 0.0) == pytest.approx(1.5)
    assert p.collapse(1.0, 1.0) == pytest.approx(1.0)
    # double-emission photon overlaps with nothing
    q = chs_triple_expectation(1, 3, "e1")
    assert q == const(Fraction(3, 2)) - const(Fraction(1, 2)) * ov(1, 3) * ov(3, 1)


@pytest.mark.parametrize("i, j", list(itertools.combinations((1, 2, 3, 4), 2)))
def test_completeness_of_four(i, j):
    assert unconditioned_pair_sum(i, j) == const(4)


def test_density_matrix_is_hermitian():
    assert conditioned_density_matrix().is_hermitian()


def test_density_matrix_collapses():
    dm = conditioned_density_matrix()
    psi = np.array([0, 1, -1, 0]) / np.sqrt(2)
    assert np.allclose(dm.collapse(1, 1), 4 * np.outer(psi, psi))
    assert np.allclose(dm.collapse(0, 0), np.eye(4))
    expected = np.eye(4)
    expected[0, 3] = expected[3, 0] = expected[1, 2] = expected[2, 1] = -1
    assert np.allclose(dm.collapse(1, 0), expected)


def test_density_matrix_weights_uniform_case():
    s = SetupParams(T=0.3, eta_t=0.6)
    w = conditioned_density_matrix().weights(s)
    assert np.allclose(np.outer(w, w), conditioned_density_matrix().prefactor(s))


def test_average_lookups():
    m = IndistMoments(0.9, 0.5, 0.8, 0.4, 0.7, 0.6, 0.3, 0.2)
    assert average_polynomial(ov(1, 3) * ov(3, 1), m) == pytest.approx(0.5)
    assert average_polynomial(ov(1, 2), m) == pytest.approx(0.8)
    assert average_polynomial(ov(1, 2) * ov(2, 1) * ov(3, 4), m) == pytest.approx(0.9 * 0.8)
    # alpha_12 beta_24 alpha_43 beta_31 : one directed four-cycle
    assert average_polynomial(ov(1, 2) * ov(2, 4) * ov(4, 3) * ov(3, 1), m) == pytest.approx(0.2)
    assert average_polynomial(ov(1, 2) * ov(2, 3) * ov(3, 1), m) == pytest.approx(0.3)


@pytest.mark.parametrize(
    "poly",
    [
        lambda: ov(1, 2) * ov(3, 4) * ov(1, 3) * ov(2, 4),  # not a directed cycle
        lambda: ov(1, 4) * ov(2, 3),  # two correlated cross-dot factors
        lambda: ov(1, 3) * ov(3, 1) * ov(2, 4) * ov(4, 2),
    ],
)
def test_unsupported_monomials_raise(poly):
    with pytest.raises(UnsupportedMonomialError, match="cannot average"):
        average_polynomial(poly(), moment_table(NoiseParams(1.0, 0.1, 0.2)))


def test_mislabeled_symbol_is_rejected():
    with pytest.raises(ValueError):
        OverlapSymbol(3, 5)


def test_density_diagonal_averages_and_coherence_needs_local_overlaps():
    m = moment_table(NoiseParams(1.0, 0.2, 0.5))
    dm = conditioned_density_matrix()
    assert average_polynomial(dm.entries[0][0], m) == pytest.approx(1 - m.m_beta2)
    assert average_polynomial(dm.entries[1][1], m) == pytest.approx(1 + m.m_beta2)
    # a coherence alone holds two open cross-dot chains; the locally detected
    # photons close them into one cycle, so only full event terms average
    with pytest.raises(UnsupportedMonomialError):
        average_polynomial(dm.entries[1][2], m)
    closed = dm.entries[1][2] * ov(2, 1) * ov(3, 4)
    assert average_polynomial(closed, m) == pytest.approx(-m.m_alpha2**2 - m.m_aabb)


def test_empty_monomial_averages_to_one():
    assert average_monomial((), IndistMoments.distinguishable()) == 1.0
