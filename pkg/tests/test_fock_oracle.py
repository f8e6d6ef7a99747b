import itertools

import numpy as np
import pytest

from qdbell.contraction import chs_expectation
from qdbell.equivalence import SWAPPED_REFLECTION, density_matrix_deviation, random_setup
from qdbell.events import enumerate_events
from qdbell.fock_oracle import (
    MAX_PHOTONS,
    N_SPATIAL,
    GramError,
    extend_gram,
    internal_vectors,
    oracle_chs_expectation,
    oracle_conditioned_state,
    oracle_event_probability,
    photon_amplitudes,
    random_gram,
    simulate,
    spatial_mode_names,
    validate_gram,
)
from qdbell.model import MeasurementSettings, SetupParams


def test_mode_names_cover_all_modes():
    assert len(spatial_mode_names()) == N_SPATIAL


@pytest.mark.parametrize("photon", [1, 2, 3, 4, "e2"])
def test_single_photon_amplitudes_are_normalized(photon, rng):
    setup = random_setup(rng)
    angles = MeasurementSettings(*rng.uniform(0, np.pi, 4))
    u = photon_amplitudes(photon, setup, angles)
    assert np.vdot(u, u).real == pytest.approx(1.0, abs=1e-14)


def test_single_photon_splitter_weights():
    setup = SetupParams(T=0.3, eta_t=0.7, eta1=0.9, eta2=0.8)
    u = photon_amplitudes(3, setup)
    assert np.sum(np.abs(u[0:4]) ** 2) == pytest.approx(0.9 * 0.3 * 0.7)
    assert np.sum(np.abs(u[6:8]) ** 2) == pytest.approx(0.9 * 0.8 * 0.7)
    assert np.sum(np.abs(u[4:6]) ** 2) == 0.0


@pytest.mark.parametrize("n", [4, 5])
def test_distribution_is_normalized(n, rng):
    photons = [1, 2, 3, 4] + (["e3"] if n == 5 else [])
    g = extend_gram(random_gram(rng), photons)
    dist = simulate(photons, g, random_setup(rng), MeasurementSettings(0.3, 0.2, 1.0, 2.0))
    assert sum(dist.values()) == pytest.approx(1.0, abs=1e-12)
    assert all(p >= 0 for p in dist.values())


def test_hom_dip_at_heralding_station():
    # identical H and V photons of one station never give an accepted herald
    g = np.eye(4, dtype=complex)
    g[0, 1] = g[1, 0] = 1.0
    assert oracle_chs_expectation((1, 2), (1, 2), g) == pytest.approx(0.0, abs=1e-14)
    assert oracle_chs_expectation((1, 2), (1, 2), np.eye(4)) == pytest.approx(1.0, abs=1e-14)


def test_pair_expectations_match_symbolic(rng):
    g = random_gram(rng)
    for bra in itertools.permutations((1, 2, 3, 4), 2):
        for ket in itertools.permutations((1, 2, 3, 4), 2):
            assert oracle_chs_expectation(bra, ket, g) == pytest.approx(chs_expectation(bra, ket).evaluate(g), abs=1e-12)


def test_orthonormalization_does_not_matter(rng):
    g = random_gram(rng, dim=3)  # rank deficient
    setup = random_setup(rng)
    angles = MeasurementSettings(0.4, 1.2, 2.2, 0.1)
    ref = simulate([1, 2, 3, 4], g, setup, angles)
    for kw in [dict(order=[3, 1, 0, 2]), dict(order=[2, 3, 1, 0]), dict(method="eigh")]:
        other = simulate([1, 2, 3, 4], g, setup, angles, **kw)
        keys = set(ref) | set(other)
        assert max(abs(ref.get(k, 0) - other.get(k, 0)) for k in keys) < 1e-12


def test_internal_vectors_reproduce_gram(rng):
    g = random_gram(rng, n=5, dim=3)
    for method in ("cholesky", "eigh"):
        v = internal_vectors(g, method=method)
        assert np.allclose(v.conj() @ v.T, g, atol=1e-12)
        assert v.shape[1] == 3


def test_density_matrix_matches_engine(rng):
    for _ in range(3):
        assert density_matrix_deviation(random_gram(rng), random_setup(rng)) < 1e-12


def test_negative_control_breaks_agreement(rng):
    g = random_gram(rng)
    setup = random_setup(rng)
    assert density_matrix_deviation(g, setup, reflection_phase=SWAPPED_REFLECTION) > 1e-6


def test_real_heralding_splitter_convention_is_invisible(rng):
    # common phases on one station leave the conditioned state unchanged
    g = random_gram(rng)
    setup = random_setup(rng)
    a = oracle_conditioned_state(g, setup)
    b = oracle_conditioned_state(g, setup, reflection_phase=(-1j, -1j, -1j, -1j))
    assert np.allclose(a, b, atol=1e-15)


def test_conditioned_state_is_hermitian_psd(rng):
    rho = oracle_conditioned_state(random_gram(rng), random_setup(rng))
    assert np.allclose(rho, rho.conj().T)
    assert np.linalg.eigvalsh(rho).min() > -1e-15


def test_invalid_gram_inputs():
    with pytest.raises(GramError, match="positive semidefinite"):
        validate_gram(np.array([[1, 0.9, 0.9], [0.9, 1, -0.9], [0.9, -0.9, 1]]))
    with pytest.raises(GramError, match="Hermitian"):
        validate_gram(np.array([[1, 0.5j], [0.5j, 1]]))
    with pytest.raises(GramError, match="diagonal"):
        validate_gram(np.diag([1.0, 0.5]))
    with pytest.raises(GramError, match="photons"):
        simulate([1, 2, 3], np.eye(4), SetupParams())


def test_photon_count_limits():
    photons = [1, 2, 3, 4, "e1", "e2"]
    assert len(photons) > MAX_PHOTONS
    with pytest.raises(ValueError, match="at most"):
        simulate(photons, np.eye(6), SetupParams())
    with pytest.raises(ValueError, match="distinct"):
        simulate([1, 1, 2, 3], np.eye(4), SetupParams())


def test_no_link_transmission_means_no_herald():
    setup = SetupParams(T=0.5, eta_t=0.0)
    dist = simulate([1, 2, 3, 4], np.eye(4), setup)
    assert all(not oc.accepted for oc in dist)
    ev = enumerate_events(4)[0]
    assert oracle_event_probability(ev, np.eye(4), setup, MeasurementSettings()) == 0.0


def test_fully_distinguishable_photons_add_classically():
    # with orthogonal modes the accepted probability of P2110 is the
    # classical routing weight times the heralding acceptance 1/4 per pair
    setup = SetupParams(T=0.5, eta_t=1.0)
    ev = [e for e in enumerate_events(4) if e.label == "P2110"][0]
    p = oracle_event_probability(ev, np.eye(4), setup, MeasurementSettings())
    routes = 4  # one photon of each station at the HS
    assert p == pytest.approx(routes * 0.5**4 * 0.25, abs=1e-14)
