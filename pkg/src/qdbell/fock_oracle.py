"""Brute-force Fock-space simulator used as ground truth.

Every photon is a creation operator over joint (spatial, internal) modes.
The internal basis comes from an incremental Cholesky factorization of the
Gram matrix, so photon ``k`` is ``sum_r conj(L[k, r]) e_r`` and
``<f_k|f_l> = G[k, l]``.  Spatial amplitudes are built element by element
from the optical network (station splitter, link loss, fixed HWP, heralding
beam splitter, PBS, local waveplates, loss channels) without reusing the
closed-form heralding vectors of :mod:`qdbell.contraction`.

The product of creation operators is expanded photon by photon into sorted
joint-mode tuples, merging equal tuples after every step, so bosonic
symmetrization and interference are exact.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .contraction import ACCEPTED_PATTERNS
from .model import (
    POLARIZATION_OF,
    STATION_OF,
    MeasurementSettings,
    Photon,
    SetupParams,
    extra_label,
    hwp,
    source_of,
)

__all__ = [
    "GramError",
    "N_SPATIAL",
    "spatial_mode_names",
    "validate_gram",
    "extend_gram",
    "internal_vectors",
    "photon_amplitudes",
    "Outcome",
    "simulate",
    "oracle_conditioned_state",
    "oracle_event_probability",
    "oracle_event_table",
    "oracle_event_tables",
    "oracle_chs_expectation",
    "random_gram",
]

MAX_PHOTONS = 5

# spatial modes: D1..D4, A_H, A_V, B_H, B_V, then (c1, c2, ct) per source
_CHS = range(0, 4)
_LOCAL = {"A": (4, 5), "B": (6, 7)}
N_SPATIAL = 8 + 3 * 4


class GramError(ValueError):
    """Raised for a Gram matrix that is not Hermitian, unit-diagonal and PSD."""


def spatial_mode_names() -> list[str]:
    names = ["D1", "D2", "D3", "D4", "A_H", "A_V", "B_H", "B_V"]
    for s in range(1, 5):
        names += [f"c1_{s}", f"c2_{s}", f"ct_{s}"]
    return names


def _loss_modes(source: int) -> tuple[int, int, int]:
    base = 8 + 3 * (source - 1)
    return base, base + 1, base + 2


def validate_gram(gram, tol: float = 1e-10) -> np.ndarray:
    g = np.asarray(gram, dtype=complex)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise GramError(f"Gram matrix must be square, got shape {g.shape}")
    if not np.allclose(g, g.conj().T, atol=tol):
        raise GramError("Gram matrix is not Hermitian")
    if not np.allclose(np.diag(g), 1.0, atol=tol):
        raise GramError("Gram matrix must have unit diagonal")
    if np.linalg.eigvalsh(g).min() < -tol:
        raise GramError("Gram matrix is not positive semidefinite")
    return g


def extend_gram(gram, photons: Sequence[Photon]) -> np.ndarray:
    """Gram matrix over ``photons``; rows of double-emission photons are orthogonal."""
    g4 = np.asarray(gram, dtype=complex)
    n = len(photons)
    out = np.eye(n, dtype=complex)
    for a, p in enumerate(photons):
        for b, q in enumerate(photons):
            if a != b and isinstance(p, int) and isinstance(q, int):
                out[a, b] = g4[p - 1, q - 1]
    return out


def internal_vectors(gram, order: Sequence[int] | None = None, method: str = "cholesky", tol: float = 1e-12) -> np.ndarray:
    """Rows ``v_k`` with ``vdot(v_k, v_l) = gram[k, l]``.

    ``method="cholesky"`` builds the basis photon by photon in ``order``
    (skipping directions already spanned), ``"eigh"`` uses the eigenbasis.
    """
    g = validate_gram(gram)
    n = g.shape[0]
    if method == "eigh":
        lam, vec = np.linalg.eigh(g)
        keep = lam > tol
        L = vec[:, keep] * np.sqrt(lam[keep])
        return L.conj()
    if method != "cholesky":
        raise ValueError(f"unknown method {method!r}")
    order = list(range(n)) if order is None else list(order)
    if sorted(order) != list(range(n)):
        raise ValueError(f"order must be a permutation of 0..{n - 1}")
    L = np.zeros((n, n), dtype=complex)
    owners = []  # photon that introduced each basis direction
    for k in order:
        for r, b in enumerate(owners):
            L[k, r] = (g[k, b] - np.dot(L[k, :r], L[b, :r].conj())) / L[b, r]
        resid = 1.0 - np.sum(np.abs(L[k, : len(owners)]) ** 2)
        if resid < -1e-9:
            raise GramError("Gram matrix is not positive semidefinite")
        if resid > 1e-10:
            L[k, len(owners)] = math.sqrt(resid)
            owners.append(k)
    return L[:, : len(owners)].conj()


def _link_amplitudes(photon: Photon) -> np.ndarray:
    """Amplitudes of a unit-intensity link photon in D1..D4."""
    s = source_of(photon)
    pol = np.zeros(2, dtype=complex)
    pol[POLARIZATION_OF[s]] = 1.0
    pol = hwp(-math.pi / 8) @ pol  # fixed HWP on every link
    # heralding beam splitter: columns (Alice link, Bob link), rows (p, q)
    bs = np.array([[1j, 1.0], [1.0, 1j]]) / math.sqrt(2.0)
    port = 0 if STATION_OF[s] == "A" else 1
    p_arm, q_arm = bs[0, port], bs[1, port]
    # PBS: H -> D1 / D3, V -> D2 / D4
    return np.array([p_arm * pol[0], p_arm * pol[1], q_arm * pol[0], q_arm * pol[1]])


def photon_amplitudes(
    photon: Photon,
    setup: SetupParams,
    angles: MeasurementSettings | None = None,
    reflection_phase: Sequence[complex] = (1j, 1j, 1j, 1j),
) -> np.ndarray:
    """Spatial output amplitudes of one photon over all ``N_SPATIAL`` modes.

    ``reflection_phase`` holds the station-splitter reflection factor seen
    by each source.  A physical splitter gives the same factor to the H and
    V photon of its station; giving them different values only serves as a
    negative control.
    (Consistent phase conventions, e.g. a real heralding splitter, only
    add port or arm phases and leave every probability unchanged.)
    """
    s = source_of(photon)
    st = STATION_OF[s]
    e1, e2, T, et = setup.eta1[s - 1], setup.eta2[s - 1], setup.T, setup.eta_t
    u = np.zeros(N_SPATIAL, dtype=complex)
    u[0:4] = math.sqrt(e1 * T * et) * _link_amplitudes(photon)
    pol = np.zeros(2, dtype=complex)
    pol[POLARIZATION_OF[s]] = 1.0
    if angles is not None:
        ua, ub = angles.unitaries()
        pol = (ua if st == "A" else ub) @ pol
    h, v = _LOCAL[st]
    local = reflection_phase[s - 1] * math.sqrt(e1 * e2 * (1 - T))
    u[h], u[v] = local * pol[0], local * pol[1]
    c1, c2, ct = _loss_modes(s)
    u[c1] = math.sqrt(1 - e1)
    u[c2] = reflection_phase[s - 1] * math.sqrt(e1 * (1 - e2) * (1 - T))
    u[ct] = math.sqrt(e1 * (1 - et) * T)
    return u


@dataclass(frozen=True)
class Outcome:
    """Coarse-grained result of one run.

    ``hs_clicks`` is the set of fired heralding detectors (0..3 = D1..D4),
    ``alice``/``bob`` the photon numbers in the (H, V) detectors and
    ``lost`` the number of photons that escaped from each station's sources.
    """

    hs_clicks: frozenset
    hs_count: int
    alice: tuple[int, int]
    bob: tuple[int, int]
    lost: tuple[int, int]

    @property
    def accepted(self) -> bool:
        return self.hs_clicks in ACCEPTED_PATTERNS


def _classify(spatial_counts: dict[int, int]) -> Outcome:
    hs = frozenset(m for m in _CHS if spatial_counts.get(m, 0))
    n_hs = sum(spatial_counts.get(m, 0) for m in _CHS)
    a = tuple(spatial_counts.get(m, 0) for m in _LOCAL["A"])
    b = tuple(spatial_counts.get(m, 0) for m in _LOCAL["B"])
    lost = [0, 0]
    for s in range(1, 5):
        n = sum(spatial_counts.get(m, 0) for m in _loss_modes(s))
        lost[0 if STATION_OF[s] == "A" else 1] += n
    return Outcome(hs, n_hs, a, b, tuple(lost))


def simulate(
    photons: Sequence[Photon],
    gram,
    setup: SetupParams,
    angles: MeasurementSettings | None = None,
    *,
    order: Sequence[int] | None = None,
    method: str = "cholesky",
    reflection_phase: Sequence[complex] = (1j, 1j, 1j, 1j),
    amplitude_tol: float = 0.0,
) -> dict[Outcome, float]:
    """Outcome distribution of ``photons`` emitted with overlaps ``gram``.

    ``gram`` is indexed like ``photons``; use :func:`extend_gram` to build it
    from a 4x4 source Gram matrix.  The probabilities sum to one.
    """
    photons = list(photons)
    if len(photons) > MAX_PHOTONS:
        raise ValueError(f"at most {MAX_PHOTONS} photons supported, got {len(photons)}")
    if len(set(photons)) != len(photons):
        raise ValueError("photon labels must be distinct")
    g = validate_gram(gram)
    if g.shape[0] != len(photons):
        raise GramError(f"Gram matrix is {g.shape[0]}x{g.shape[0]} for {len(photons)} photons")
    if order is None and method == "cholesky":
        # orthogonal photons first keeps the internal supports small
        order = sorted(range(len(photons)), key=lambda k: isinstance(photons[k], int))
    V = internal_vectors(g, order=order, method=method)
    R = V.shape[1]

    n_joint = N_SPATIAL * R
    keys = np.zeros((1, 0), dtype=np.int64)
    amps = np.ones(1, dtype=complex)
    for k, ph in enumerate(photons):
        u = photon_amplitudes(ph, setup, angles, reflection_phase)
        w = np.outer(u, V[k]).ravel()
        support = np.flatnonzero(np.abs(w) > amplitude_tol)
        m, s = len(amps), len(support)
        # append every supported joint mode to every existing configuration
        grown = np.empty((m * s, keys.shape[1] + 1), dtype=np.int64)
        grown[:, :-1] = np.repeat(keys, s, axis=0)
        grown[:, -1] = np.tile(support, m)
        grown.sort(axis=1)
        code = np.zeros(m * s, dtype=np.int64)
        for col in range(grown.shape[1]):
            code = code * n_joint + grown[:, col]
        uniq, first, inv = np.unique(code, return_index=True, return_inverse=True)
        amps_new = np.zeros(len(uniq), dtype=complex)
        np.add.at(amps_new, inv.ravel(), np.repeat(amps, s) * np.tile(w[support], m))
        keys, amps = grown[first], amps_new

    probs = np.abs(amps) ** 2
    # bosonic normalization: prod of n_j! over repeated joint modes
    if keys.shape[1] > 1:
        run = np.ones(len(probs))
        mult = np.ones(len(probs))
        for col in range(1, keys.shape[1]):
            same = keys[:, col] == keys[:, col - 1]
            run = np.where(same, run + 1, 1)
            mult *= np.where(same, run, 1)
        probs = probs * mult
    spatial = keys // R
    out: dict[Outcome, float] = defaultdict(float)
    nz = probs > 0
    codes = np.zeros(len(probs), dtype=np.int64)
    for col in range(spatial.shape[1]):
        codes = codes * N_SPATIAL + spatial[:, col]
    uniq, first, inv = np.unique(codes[nz], return_index=True, return_inverse=True)
    summed = np.bincount(inv.ravel(), weights=probs[nz])
    rows = spatial[nz][first]
    for row, p in zip(rows, summed):
        counts: dict[int, int] = defaultdict(int)
        for x in row:
            counts[int(x)] += 1
        out[_classify(counts)] += float(p)
    return dict(out)


def oracle_conditioned_state(
    gram,
    setup: SetupParams,
    *,
    method: str = "cholesky",
    reflection_phase: Sequence[complex] = (1j, 1j, 1j, 1j),
) -> np.ndarray:
    """Unnormalized shared state for one local photon per station and two heralded photons.

    Entry (r, c) over the basis HH, HV, VH, VV is <chi_c|P_acc|chi_r>, where
    chi_r is the Fock state of the two photons sent to the heralding station
    when photons (a, b) of basis element r stay local.
    """
    g = validate_gram(gram)
    V = internal_vectors(g, method=method)
    R = V.shape[1]
    basis = ((1, 3), (1, 4), (2, 3), (2, 4))
    kets = []
    for a, b in basis:
        hs = (3 - a, 7 - b)
        ua = photon_amplitudes(a, setup, None, reflection_phase)
        ub = photon_amplitudes(b, setup, None, reflection_phase)
        # amplitude of photon a in its own local polarization mode, likewise b
        amp = ua[_LOCAL["A"][a - 1]] * ub[_LOCAL["B"][b - 3]]
        state: dict[tuple, complex] = {(): amp}
        for ph in hs:
            u = photon_amplitudes(ph, setup, None, reflection_phase)[0:4]
            w = np.outer(u, V[ph - 1]).ravel()
            new: dict[tuple, complex] = defaultdict(complex)
            for key, c0 in state.items():
                for j in np.flatnonzero(w):
                    new[tuple(sorted(key + (int(j),)))] += c0 * w[j]
            state = new
        kept = {}
        for key, c0 in state.items():
            clicks = frozenset(j // R for j in key)
            if clicks in ACCEPTED_PATTERNS:
                norm = 1.0
                for j in set(key):
                    norm *= math.factorial(key.count(j))
                kept[key] = c0 * math.sqrt(norm)
        kets.append(kept)
    rho = np.zeros((4, 4), dtype=complex)
    for r in range(4):
        for c in range(4):
            rho[r, c] = sum(kets[r][k] * np.conj(kets[c].get(k, 0.0)) for k in kets[r])
    return rho


def _event_matches(event, outcome: Outcome) -> bool:
    i, j, k, l = event.counts
    if outcome.hs_count != i or sum(outcome.alice) != j or sum(outcome.bob) != k:
        return False
    if sum(outcome.lost) != l or outcome.lost[0] != event.lost_origin.count("A"):
        return False
    return outcome.accepted


def _station_outcome(counts: tuple[int, int]) -> str:
    h, v = counts
    if h == 0 and v == 0:
        return "0"
    if v == 0:
        return "+"
    if h == 0:
        return "-"
    return "DD"


def _photon_sets(event) -> list[list[Photon]]:
    if event.double_station is None:
        return [[1, 2, 3, 4]]
    srcs = (1, 2) if event.double_station == "A" else (3, 4)
    return [[1, 2, 3, 4, extra_label(s)] for s in srcs]


def oracle_event_table(event, gram, setup: SetupParams, angles: MeasurementSettings, **kw) -> dict[tuple[str, str], float]:
    """Probability of ``event`` split by station outcome ('+', '-', '0', 'DD')."""
    table: dict[tuple[str, str], float] = defaultdict(float)
    for photons in _photon_sets(event):
        dist = simulate(photons, extend_gram(gram, photons), setup, angles, **kw)
        for oc, p in dist.items():
            if _event_matches(event, oc):
                table[(_station_outcome(oc.alice), _station_outcome(oc.bob))] += p
    return dict(table)


def oracle_event_probability(event, gram, setup: SetupParams, angles: MeasurementSettings, **kw) -> float:
    """Probability of exactly this routing class (summed over local outcomes).

    For double-emission events the result is summed over both sources of
    the double-emitting station, each with unit weight.
    """
    return float(sum(oracle_event_table(event, gram, setup, angles, **kw).values()))


_OUTCOME_INDEX = {"+": 0, "-": 1, "0": 2, "DD": 3}


def oracle_event_tables(events, gram, setup: SetupParams, angles: MeasurementSettings, **kw) -> np.ndarray:
    """Outcome tables of many events at once, shape ``(len(events), 4, 4)``.

    Each photon set is simulated once.  SD/DD tags are not applied here.
    """
    out = np.zeros((len(events), 4, 4))
    dists = {}
    for n, event in enumerate(events):
        for photons in _photon_sets(event):
            key = tuple(photons)
            if key not in dists:
                dists[key] = simulate(photons, extend_gram(gram, photons), setup, angles, **kw)
            for oc, p in dists[key].items():
                if _event_matches(event, oc):
                    out[n, _OUTCOME_INDEX[_station_outcome(oc.alice)], _OUTCOME_INDEX[_station_outcome(oc.bob)]] += p
    return out


def oracle_chs_expectation(bra: Sequence[Photon], ket: Sequence[Photon], gram, *, method: str = "cholesky") -> complex:
    """<bra| P_acc |ket> for photons sent straight into the heralding station.

    Each photon enters with unit intensity through its link and the
    result is scaled by ``2**n`` so that it matches the HS normalization of
    :func:`qdbell.contraction.chs_expectation`.  ``gram`` is the 4x4 source
    Gram matrix; double-emission labels get zero overlap with every other
    photon.
    """
    bra, ket = list(bra), list(ket)
    if len(bra) != len(ket):
        return 0.0j
    labels = list(dict.fromkeys(bra + ket))
    g = extend_gram(gram, labels)
    V = internal_vectors(g, order=sorted(range(len(labels)), key=lambda k: isinstance(labels[k], int)), method=method)
    R = V.shape[1]

    def fock(photons):
        state: dict[tuple, complex] = {(): 1.0 + 0.0j}
        for ph in photons:
            w = np.outer(_link_amplitudes(ph), V[labels.index(ph)]).ravel()
            new: dict[tuple, complex] = defaultdict(complex)
            for key, c0 in state.items():
                for j in np.flatnonzero(w):
                    new[tuple(sorted(key + (int(j),)))] += c0 * w[j]
            state = new
        return state

    sb, sk = fock(bra), fock(ket)
    total = 0.0j
    for key, c0 in sk.items():
        if frozenset(j // R for j in key) not in ACCEPTED_PATTERNS or key not in sb:
            continue
        mult = 1
        for j in set(key):
            mult *= math.factorial(key.count(j))
        total += np.conj(sb[key]) * c0 * mult
    return complex(total * 2 ** len(ket))


def random_gram(rng: np.random.Generator, n: int = 4, dim: int | None = None, real: bool = False) -> np.ndarray:
    """Gram matrix of ``n`` random unit vectors in ``dim`` dimensions."""
    dim = n if dim is None else dim
    x = rng.normal(size=(n, dim))
    if not real:
        x = x + 1j * rng.normal(size=(n, dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    g = x.conj() @ x.T
    np.fill_diagonal(g, 1.0)
    return g
