from collections import Counter

import numpy as np
import pytest

from qdbell.equivalence import event_deviation, random_setup
from qdbell.events import (
    G2_LIMIT,
    EventRecord,
    ProbabilitySet,
    ValidityError,
    apply_assignment_strategy,
    categorize,
    compiled_model,
    enumerate_events,
    event_outcome_table,
    event_probability,
    postselect,
    purity_event_weights,
    station_weights,
    total_probabilities,
)
from qdbell.fock_oracle import extend_gram, random_gram, simulate
from qdbell.model import MeasurementSettings, SetupParams, measurement_unitary
from qdbell.noise import IndistMoments, NoiseParams, moment_table


@pytest.fixture(scope="module")
def model():
    return compiled_model()


def test_four_photon_rows():
    ev = enumerate_events(4)
    counts = Counter(e.label for e in ev)
    assert len(ev) == 14 and len(counts) == 9
    assert counts["P2002"] == 3
    assert counts["P2110"] == 1


def test_five_photon_rows():
    ev = enumerate_events(5)
    counts = Counter(e.label for e in ev)
    assert len(ev) == 52 and len(counts) == 16
    assert all(e.double_station in ("A", "B") for e in ev)
    assert all(e.counts[0] in (2, 3) for e in ev)


def test_event_record_validation():
    with pytest.raises(ValueError):
        EventRecord((1, 1, 1, 1), "A", "B")
    with pytest.raises(ValueError):
        EventRecord((2, 1, 1, 0), "A", "")
    with pytest.raises(ValueError):
        EventRecord((2, 1, 1, 0), "AB", "", sd_dd=("SD", None))
    e = EventRecord((2, 2, 0, 0), "BB", "", sd_dd=("DD", None))
    assert e.label == "P2200" and e.order == 4


def test_categorize():
    assert categorize(EventRecord((2, 1, 1, 0), "AB", "")) == ("x", "x")
    assert categorize(EventRecord((2, 2, 0, 0), "BB", "", sd_dd=("SD", None))) == ("x", "null")
    assert categorize(EventRecord((2, 2, 0, 0), "BB", "", sd_dd=("DD", None))) == ("null", "null")
    assert categorize(EventRecord((2, 0, 1, 1), "AB", "A")) == ("null", "x")
    with pytest.raises(ValueError, match="SD/DD"):
        categorize(EventRecord((2, 2, 0, 0), "BB", ""))


def test_mirroring_is_an_involution():
    for e in enumerate_events(5):
        assert e.mirrored().mirrored() == e


def test_station_weights_partition_unity(rng):
    U = measurement_unitary(*rng.uniform(0, np.pi, 2))
    sigs = [(), ((0, 0),), ((1, 1),), ((0, 0), (1, 1)), ((0, 1), (1, 0)), ((0, 0), (0, 0))]
    w = station_weights(sigs, U)
    assert np.allclose(w[0], [0, 0, 1, 0])
    for row, sig in zip(w[1:], sigs[1:]):
        diag = all(p == q for p, q in sig)
        assert row.sum() == pytest.approx(1.0 if diag else 0.0, abs=1e-14)
    # one photon never lands in both detectors
    assert abs(w[1, 3]) < 1e-15


def test_engine_matches_oracle_on_every_row(rng):
    for _ in range(2):
        g = random_gram(rng)
        assert event_deviation(g, random_setup(rng), MeasurementSettings(*rng.uniform(0, np.pi, 4))) < 1e-12


def test_frozen_oracle_event_table():
    # reference computed once with the Fock-space oracle
    g = random_gram(np.random.default_rng(7))
    setup = SetupParams(0.4, 0.6, 0.9, 0.8)
    angles = MeasurementSettings(0.1, 0.7, 1.3, 2.2)
    ev = EventRecord((2, 1, 1, 0), "AB", "")
    t = event_outcome_table(ev, setup, angles, gram=g)
    expected = [[0.0015650633399669528, 0.0025398912716930446], [0.0025842146217000777, 0.0014381731749389544]]
    assert np.allclose(t[:2, :2], expected, atol=1e-15)
    assert np.abs(t[2:, :]).max() < 1e-17 and np.abs(t[:, 2:]).max() < 1e-17


def test_taxonomy_covers_every_accepted_herald(rng, model):
    g = random_gram(rng)
    setup = random_setup(rng)
    angles = MeasurementSettings(*rng.uniform(0, np.pi, 4))
    dist = simulate([1, 2, 3, 4], g, setup, angles)
    accepted = sum(p for oc, p in dist.items() if oc.accepted and oc.hs_count <= 3)
    covered = sum(event_probability(e, setup, None, angles, gram=g, model=model) for e in enumerate_events(4))
    assert covered == pytest.approx(accepted, abs=1e-14)
    for src in (1, 3):
        photons = [1, 2, 3, 4, f"e{src}"]
        dist = simulate(photons, extend_gram(g, photons), setup, angles)
        acc5 = sum(p for oc, p in dist.items() if oc.accepted and oc.hs_count <= 3)
        rows = [e for e in enumerate_events(5) if e.double_station == ("A" if src == 1 else "B")]
        # rows are summed over both sources of the station
        total = sum(event_probability(e, setup, None, angles, gram=g, model=model) for e in rows)
        other = [1, 2, 3, 4, f"e{src + 1}"]
        dist2 = simulate(other, extend_gram(g, other), setup, angles)
        acc5 += sum(p for oc, p in dist2.items() if oc.accepted and oc.hs_count <= 3)
        assert total == pytest.approx(acc5, abs=1e-14)


def test_alice_bob_mirror_symmetry(rng, model):
    m = moment_table(NoiseParams(1.0, 0.1, 0.4))
    setup = random_setup(rng)
    angles = MeasurementSettings(*rng.uniform(0, np.pi, 4))
    for e in model.events:
        a = event_outcome_table(e, setup, angles, m, model=model)
        b = event_outcome_table(e.mirrored(), setup.swapped(), angles.swapped(), m, model=model)
        assert np.allclose(a, b.T, atol=1e-15), str(e)


def test_purity_mixing_is_first_order(model):
    setup = SetupParams(0.3, 0.5, 1.0, 0.9)
    angles = MeasurementSettings(0.2, 0.5, 1.0, 1.5)
    m = moment_table(NoiseParams(1.0, 0.05, 0.2))
    k = model.kernel(setup, m)
    per_event = k.outcome_tables(angles)
    p4 = per_event[~model.event_is_double].sum(axis=0)
    p5 = per_event[model.event_is_double].sum(axis=0)
    for g2 in (0.0, 0.02, 0.1):
        ps = total_probabilities(setup, m, g2, angles, model=model)
        expected = (p4 + 0.5 * g2 * p5) / (1 + 2 * g2)
        assert ps.p_chs == pytest.approx(expected.sum(), abs=1e-15)
        assert np.allclose(ps.p_xy, expected[:2, :2], atol=1e-15)


def test_g2_outside_validity_range(model):
    assert G2_LIMIT == 0.1
    with pytest.raises(ValidityError):
        purity_event_weights(model, 0.11)
    with pytest.raises(ValidityError):
        purity_event_weights(model, -0.01)


def test_probability_set_bookkeeping(rng, model):
    setup = random_setup(rng)
    ps = total_probabilities(setup, moment_table(NoiseParams(1.0, 0.1, 0.3)), 0.03, MeasurementSettings(0.3, 0.1, 0.9, 2.0), model=model)
    assert ps.total() == pytest.approx(ps.p_chs, rel=1e-13)
    assigned = apply_assignment_strategy(ps)
    assert assigned.sum() == pytest.approx(ps.p_chs, rel=1e-13)
    assert postselect(ps).sum() == pytest.approx(1.0, rel=1e-13)
    assert ps.swapped().swapped().p_xy.tolist() == ps.p_xy.tolist()
    assert all(v >= -1e-18 for v in np.concatenate([ps.p_xy.ravel(), ps.p_x_null, ps.p_null_y]))


def test_postselect_needs_conclusive_mass():
    empty = ProbabilitySet(np.zeros((2, 2)), np.zeros(2), np.zeros(2), 1.0, 1.0)
    with pytest.raises(ValidityError):
        postselect(empty)


def test_ideal_singlet_statistics(model):
    # perfect overlaps, equal settings: only anticorrelated clicks in P2110
    setup = SetupParams(0.5, 1.0)
    ev = EventRecord((2, 1, 1, 0), "AB", "")
    for angles in [MeasurementSettings(0, 0, 0, 0), MeasurementSettings(np.pi / 8, 0.3, np.pi / 8, 0.3)]:
        t = event_outcome_table(ev, setup, angles, IndistMoments.ideal(), model=model)
        assert t[0, 0] == pytest.approx(0.0, abs=1e-15) and t[1, 1] == pytest.approx(0.0, abs=1e-15)
        assert t[0, 1] == pytest.approx(t[1, 0])


def test_distinguishable_photons_give_no_correlation(model):
    setup = SetupParams(0.5, 1.0)
    ev = EventRecord((2, 1, 1, 0), "AB", "")
    t = event_outcome_table(ev, setup, MeasurementSettings(0.2, 0.4, 1.1, 0.7), IndistMoments.distinguishable(), model=model)
    c = t[0, 0] - t[0, 1] - t[1, 0] + t[1, 1]
    # a classical mixture of HV and VH at these settings
    assert abs(c) <= t[:2, :2].sum() + 1e-15
