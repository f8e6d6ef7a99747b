"""Heralded event classes, their probabilities and the outcome categories.

An event ``P_ijkl`` has ``i`` photons at the heralding station (HS) in an
accepted click pattern, ``j`` / ``k`` photons at Alice's / Bob's detectors
and ``l`` lost photons.  Each class is split into routing rows by the
station of origin of the HS and lost photons (local photons always come from
their own station).

Probabilities are sums over pairs of bra/ket photon assignments linked by a
permutation ``pi``::

    P = sum_pi prod_k <f_k|f_pi(k)> * HS factor * local factors * loss factors

Lost photons never interfere, so ``pi`` fixes them; a locally detected
photon can only exchange with a photon from the same station.  The local
factor depends on the waveplates only through the multiset of
(polarization of k, polarization of pi(k)) at each station, called the
signature below.  Compiling the terms once per signature pair makes the
angle dependence a pair of small matrix products.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from .contraction import average_monomial, chs_coefficient
from .model import (
    POLARIZATION_OF,
    SOURCES,
    STATION_OF,
    MeasurementSettings,
    SetupParams,
    extra_label,
    source_of,
    station_of,
)
from .noise import IndistMoments, PurityParams
from .polynomial import GaussianRational, OverlapPolynomial, overlap

__all__ = [
    "G2_LIMIT",
    "OUTCOMES",
    "EventRecord",
    "ProbabilitySet",
    "ValidityError",
    "enumerate_events",
    "categorize",
    "station_weights",
    "ProtocolModel",
    "Kernel",
    "compiled_model",
    "event_outcome_table",
    "event_probability",
    "event_polynomial",
    "total_probabilities",
    "apply_assignment_strategy",
    "postselect",
]

#: first-order multi-photon treatment is only trusted up to this g2
G2_LIMIT = 0.1

#: station outcomes: one detector fired (+ or -), nothing, both detectors
OUTCOMES = ("+", "-", "0", "DD")


class ValidityError(ValueError):
    """Raised when parameters leave the validity range of the model."""


@dataclass(frozen=True)
class EventRecord:
    """One routing row of an event class.

    ``hs_origin`` / ``lost_origin`` list the station of origin of the HS and
    lost photons (sorted, e.g. ``"AB"``).  ``double_station`` names the
    station whose source emitted two photons (``None`` for 4-photon events).
    ``sd_dd`` optionally tags each station with two or more photons as
    same-detector (``"SD"``) or different-detector (``"DD"``).
    """

    counts: tuple[int, int, int, int]
    hs_origin: str
    lost_origin: str
    double_station: str | None = None
    sd_dd: tuple[str | None, str | None] = (None, None)

    def __post_init__(self):
        i, j, k, l = self.counts
        if i + j + k + l not in (4, 5) or i < 2:
            raise ValueError(f"invalid event counts {self.counts}")
        if len(self.hs_origin) != i or len(self.lost_origin) != l:
            raise ValueError(f"origin strings do not match counts {self.counts}")
        object.__setattr__(self, "hs_origin", "".join(sorted(self.hs_origin)))
        object.__setattr__(self, "lost_origin", "".join(sorted(self.lost_origin)))
        for n, tag in zip((j, k), self.sd_dd):
            if tag is not None and (tag not in ("SD", "DD") or n < 2):
                raise ValueError(f"SD/DD tag {tag!r} needs a station with two or more photons")

    @property
    def label(self) -> str:
        return "P" + "".join(str(c) for c in self.counts)

    @property
    def order(self) -> int:
        return sum(self.counts)

    def untagged(self) -> "EventRecord":
        return replace(self, sd_dd=(None, None))

    def mirrored(self) -> "EventRecord":
        """Same event with Alice and Bob exchanged."""
        swap = {"A": "B", "B": "A"}
        i, j, k, l = self.counts
        return EventRecord(
            (i, k, j, l),
            "".join(swap[c] for c in self.hs_origin),
            "".join(swap[c] for c in self.lost_origin),
            None if self.double_station is None else swap[self.double_station],
            (self.sd_dd[1], self.sd_dd[0]),
        )

    def __str__(self):
        tag = "".join(f",{t}" for t in self.sd_dd if t)
        extra = f" [double {self.double_station}]" if self.double_station else ""
        return f"{self.label}{tag} HS={self.hs_origin} lost={self.lost_origin or '-'}{extra}"


def enumerate_events(order: int) -> list[EventRecord]:
    """All routing rows with two or three heralded photons.

    Rows are derived from photon routing: every photon ends at the HS, at its
    own station or lost.  Four or more HS photons are outside the taxonomy.
    """
    if order not in (4, 5):
        raise ValueError(f"order must be 4 or 5, got {order}")
    doubles = [None] if order == 4 else ["A", "B"]
    rows = []
    for dbl in doubles:
        n = {"A": 2 + (dbl == "A"), "B": 2 + (dbl == "B")}
        for ha, hb, la, lb in itertools.product(range(4), repeat=4):
            ja, kb = n["A"] - ha - la, n["B"] - hb - lb
            if ja < 0 or kb < 0 or ha + hb not in (2, 3):
                continue
            rows.append(EventRecord((ha + hb, ja, kb, la + lb), "A" * ha + "B" * hb, "A" * la + "B" * lb, dbl))
    rows.sort(key=lambda e: (e.counts[0], -e.counts[1] - e.counts[2], e.label, e.double_station or "", e.hs_origin))
    return rows


def _station_category(n: int, tag: str | None) -> str:
    if n == 0:
        return "null"
    if n == 1:
        return "x"
    if tag is None:
        raise ValueError("stations with two or more photons need an SD/DD tag")
    return "x" if tag == "SD" else "null"


def categorize(event: EventRecord) -> tuple[str, str]:
    """Outcome category of a (tagged) event, e.g. ``("x", "null")``.

    Several photons on one detector (SD) look like a single click; clicks on
    both detectors (DD) are recognised as an error and treated like no click.
    """
    _, j, k, _ = event.counts
    return _station_category(j, event.sd_dd[0]), _station_category(k, event.sd_dd[1])


# --------------------------------------------------------------------------
# compiled term list
# --------------------------------------------------------------------------


def _signature_arrays(signatures: Sequence[tuple]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    width = max(1, max(len(sig) for sig in signatures))
    P = np.zeros((len(signatures), width), dtype=int)
    Q = np.zeros_like(P)
    used = np.zeros(P.shape, dtype=bool)
    for r, sig in enumerate(signatures):
        for c, (p, q) in enumerate(sig):
            P[r, c], Q[r, c], used[r, c] = p, q, True
    return P, Q, used


def station_weights(signatures: Sequence[tuple], unitary: np.ndarray, arrays=None) -> np.ndarray:
    """Outcome weights (+, -, 0, DD) for each station signature.

    A signature is a sorted tuple of (p, q) polarization pairs, one per
    locally detected bra photon; ``p`` is that photon's polarization and
    ``q`` the polarization of the ket photon it is paired with.  Summing the
    detector assignments gives prod_k conj(U[d, p_k]) U[d, q_k] when every
    photon lands in detector ``d`` and prod_k delta(p_k, q_k) in total.
    """
    U = np.asarray(unitary, dtype=complex)
    P, Q, used = _signature_arrays(signatures) if arrays is None else arrays
    out = np.zeros((P.shape[0], 4), dtype=complex)
    same = np.where(used, P == Q, True).all(axis=1)
    for d in (0, 1):
        f = np.where(used, U[d, P].conj() * U[d, Q], 1.0)
        out[:, d] = f.prod(axis=1)
    empty = ~used.any(axis=1)
    out[:, 3] = same - out[:, 0] - out[:, 1]
    out[empty] = (0, 0, 1, 0)
    return out


@dataclass
class _Terms:
    event: list
    sig_a: list
    sig_b: list
    scalar: list
    mono: list
    coeff: list


def _photon_sets():
    yield None, (1, 2, 3, 4)
    for s in SOURCES:
        yield s, (1, 2, 3, 4, extra_label(s))


def _overlap_factor(k, l):
    """Monomial symbol tuple for <f_k|f_l>, or None if it vanishes."""
    if k == l:
        return ()
    if isinstance(k, str) or isinstance(l, str):
        return None
    return (overlap(k, l),)


class ProtocolModel:
    """All heralded 4- and 5-photon terms, compiled once.

    Use :meth:`kernel` to bind efficiencies and overlaps, then
    :meth:`Kernel.outcome_tables` for waveplate settings.
    """

    def __init__(self):
        self.events: list[EventRecord] = enumerate_events(4) + enumerate_events(5)
        self._event_index = {e: n for n, e in enumerate(self.events)}
        self.signatures: list[tuple] = [()]
        self._sig_index = {(): 0}
        self.scalar_keys: list[tuple] = []
        self._scalar_index: dict = {}
        self.monomials: list[tuple] = [()]
        self._mono_index = {(): 0}
        t = _Terms([], [], [], [], [], [])
        for double, photons in _photon_sets():
            self._compile(photons, double, t)
        self.term_event = np.array(t.event)
        self.term_sig_a = np.array(t.sig_a)
        self.term_sig_b = np.array(t.sig_b)
        self.term_scalar = np.array(t.scalar)
        self.term_mono = np.array(t.mono)
        self.term_coeff = np.array(t.coeff, dtype=complex)
        self.event_is_double = np.array([e.double_station is not None for e in self.events])
        self.signature_arrays = _signature_arrays(self.signatures)

    # -- helpers ----------------------------------------------------------
    def _index(self, table, lookup, key):
        if key not in lookup:
            lookup[key] = len(table)
            table.append(key)
        return lookup[key]

    def _compile(self, photons, double, t: _Terms):
        stations = {p: station_of(p) for p in photons}
        pols = {p: POLARIZATION_OF[source_of(p)] for p in photons}
        for regions in itertools.product("CXL", repeat=len(photons)):
            # X = the photon's own station
            reg = {p: (stations[p] if r == "X" else r) for p, r in zip(photons, regions)}
            hs = [p for p in photons if reg[p] == "C"]
            if len(hs) not in (2, 3):
                continue
            lost = [p for p in photons if reg[p] == "L"]
            alive = [p for p in photons if reg[p] != "L"]
            n_a = sum(reg[p] == "A" for p in photons)
            n_b = sum(reg[p] == "B" for p in photons)
            event = EventRecord(
                (len(hs), n_a, n_b, len(lost)),
                "".join(stations[p] for p in hs),
                "".join(stations[p] for p in lost),
                None if double is None else STATION_OF[double],
            )
            e_idx = self._event_index[event]
            for image in itertools.permutations(alive):
                pi = dict(zip(alive, image))
                ok = True
                mono = []
                for k in alive:
                    l = pi[k]
                    if reg[k] in ("A", "B") and stations[l] != reg[k]:
                        ok = False
                        break
                    f = _overlap_factor(k, l)
                    if f is None:
                        ok = False
                        break
                    mono.extend(f)
                if not ok:
                    continue
                coeff = GaussianRational(1)
                if hs:
                    coeff = chs_coefficient(hs, [pi[k] for k in hs], tuple(range(len(hs))))
                    if not coeff:
                        continue
                sig_a = tuple(sorted((pols[k], pols[pi[k]]) for k in alive if reg[k] == "A"))
                sig_b = tuple(sorted((pols[k], pols[pi[k]]) for k in alive if reg[k] == "B"))
                scalar = tuple(
                    sorted((reg[k], source_of(k), source_of(pi.get(k, k))) for k in photons)
                )
                t.event.append(e_idx)
                t.sig_a.append(self._index(self.signatures, self._sig_index, sig_a))
                t.sig_b.append(self._index(self.signatures, self._sig_index, sig_b))
                t.scalar.append(self._index(self.scalar_keys, self._scalar_index, scalar))
                t.mono.append(self._index(self.monomials, self._mono_index, tuple(sorted(mono))))
                t.coeff.append(complex(coeff))

    def event_index(self, event: EventRecord) -> int:
        return self._event_index[event.untagged()]

    # -- numeric binding --------------------------------------------------
    def scalar_values(self, setup: SetupParams) -> np.ndarray:
        out = np.empty(len(self.scalar_keys))
        for n, key in enumerate(self.scalar_keys):
            v = 1.0
            for region, s_bra, s_ket in key:
                if region == "C":
                    v *= math.sqrt(setup.p_chs(s_bra) * setup.p_chs(s_ket)) / 2.0
                elif region == "L":
                    v *= setup.p_lost(s_bra)
                else:
                    v *= math.sqrt(setup.eta_local(s_bra) * setup.eta_local(s_ket))
            out[n] = v
        return out

    def monomial_values(self, moments: IndistMoments | None = None, gram=None) -> np.ndarray:
        """Averaged (``moments``) or fixed-overlap (``gram``) value of every monomial."""
        if (moments is None) == (gram is None):
            raise ValueError("give exactly one of moments or gram")
        out = np.empty(len(self.monomials), dtype=complex)
        if gram is not None:
            g = np.asarray(gram, dtype=complex)
            for n, mono in enumerate(self.monomials):
                v = 1.0 + 0j
                for s in mono:
                    k, l = s.edge()
                    v *= g[k - 1, l - 1]
                out[n] = v
        else:
            for n, mono in enumerate(self.monomials):
                out[n] = average_monomial(mono, moments)
        return out

    def kernel(
        self,
        setup: SetupParams,
        moments: IndistMoments | None = None,
        gram=None,
        event_weights: np.ndarray | None = None,
    ) -> "Kernel":
        """Bind setup and overlaps.

        ``event_weights`` (one per event, default 1) scales each event; the
        kernel then holds the weighted sum over events.  Without weights a
        per-event kernel is kept instead.
        """
        values = self.term_coeff * self.scalar_values(setup)[self.term_scalar]
        values = values * self.monomial_values(moments, gram)[self.term_mono]
        ns = len(self.signatures)
        if event_weights is None:
            K = np.zeros((len(self.events), ns, ns), dtype=complex)
            np.add.at(K, (self.term_event, self.term_sig_a, self.term_sig_b), values)
        else:
            K = np.zeros((ns, ns), dtype=complex)
            w = np.asarray(event_weights, dtype=float)[self.term_event]
            np.add.at(K, (self.term_sig_a, self.term_sig_b), values * w)
        return Kernel(self, K)


@dataclass
class Kernel:
    """Angle-independent part of the probabilities (see :class:`ProtocolModel`)."""

    model: ProtocolModel
    K: np.ndarray

    def outcome_tables(self, angles: MeasurementSettings) -> np.ndarray:
        """Probability over (Alice outcome, Bob outcome), each in ``OUTCOMES`` order.

        Shape ``(4, 4)`` for a summed kernel, ``(n_events, 4, 4)`` otherwise.
        """
        ua, ub = angles.unitaries()
        return self.tables_from_weights(self.weights(ua), self.weights(ub))

    def weights(self, unitary: np.ndarray) -> np.ndarray:
        return station_weights(self.model.signatures, unitary, self.model.signature_arrays)

    def tables_from_weights(self, wa: np.ndarray, wb: np.ndarray) -> np.ndarray:
        """Outcome tables for precomputed station weights (see :func:`station_weights`)."""
        out = np.einsum("sa,...st,tb->...ab", wa, self.K, wb)
        if np.abs(out.imag).max(initial=0.0) > 1e-9 * max(1.0, np.abs(out.real).max(initial=0.0)):
            raise ArithmeticError("probabilities acquired an imaginary part")
        return out.real


@lru_cache(maxsize=1)
def compiled_model() -> ProtocolModel:
    """Shared compiled model (pure data, safe to reuse)."""
    return ProtocolModel()


def _tag_mask(event: EventRecord) -> np.ndarray:
    """Mask over (Alice outcome, Bob outcome) selecting the event's SD/DD tags."""
    mask = np.ones((4, 4), dtype=bool)
    for axis, tag in enumerate(event.sd_dd):
        if tag is None:
            continue
        keep = np.array([tag == "SD", tag == "SD", False, tag == "DD"])
        mask &= keep[:, None] if axis == 0 else keep[None, :]
    return mask


def event_outcome_table(
    event: EventRecord,
    setup: SetupParams,
    angles: MeasurementSettings,
    moments: IndistMoments | None = None,
    gram=None,
    model: ProtocolModel | None = None,
) -> np.ndarray:
    """4x4 outcome table of one event (rows Alice, columns Bob, ``OUTCOMES`` order)."""
    model = model or compiled_model()
    idx = model.event_index(event)
    weights = np.zeros(len(model.events))
    weights[idx] = 1.0
    table = model.kernel(setup, moments, gram, event_weights=weights).outcome_tables(angles)
    return np.where(_tag_mask(event), table, 0.0)


def event_probability(
    event: EventRecord,
    setup: SetupParams,
    moments: IndistMoments | None,
    angles: MeasurementSettings,
    gram=None,
    model: ProtocolModel | None = None,
) -> float:
    """Raw probability of one routing row (restricted to its SD/DD tags if set).

    Pass ``moments`` for noise-averaged overlaps or ``gram`` (with
    ``moments=None``) for a fixed overlap realisation.  Double-emission rows
    are summed over both sources of the double-emitting station.
    """
    return float(event_outcome_table(event, setup, angles, moments, gram, model).sum())


def event_polynomial(
    event: EventRecord,
    setup: SetupParams,
    angles: MeasurementSettings,
    outcome: tuple[str, str],
    model: ProtocolModel | None = None,
) -> OverlapPolynomial:
    """Pre-averaging polynomial of one event and station outcome pair."""
    model = model or compiled_model()
    idx = model.event_index(event)
    ua, ub = angles.unitaries()
    wa = station_weights(model.signatures, ua)[:, OUTCOMES.index(outcome[0])]
    wb = station_weights(model.signatures, ub)[:, OUTCOMES.index(outcome[1])]
    scal = model.scalar_values(setup)
    sel = np.flatnonzero(model.term_event == idx)
    terms = []
    for t in sel:
        c = model.term_coeff[t] * scal[model.term_scalar[t]] * wa[model.term_sig_a[t]] * wb[model.term_sig_b[t]]
        terms.append((model.monomials[model.term_mono[t]], complex(c)))
    return OverlapPolynomial(terms)


# --------------------------------------------------------------------------
# outcome categories
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbabilitySet:
    """Joint outcome probabilities including the heralding mass.

    ``p_xy[x, y]`` for x, y in (+, -); ``p_x_null[x]`` when Bob has no
    conclusive click, ``p_null_y[y]`` likewise for Alice, ``p_null_null``
    when neither has.  ``p_chs`` is the total accepted-herald probability.
    """

    p_xy: np.ndarray
    p_x_null: np.ndarray
    p_null_y: np.ndarray
    p_null_null: float
    p_chs: float

    @classmethod
    def from_outcome_table(cls, table: np.ndarray) -> "ProbabilitySet":
        t = np.asarray(table, dtype=float)
        null = [2, 3]
        return cls(
            p_xy=t[:2, :2].copy(),
            p_x_null=t[:2, null].sum(axis=1),
            p_null_y=t[null, :2].sum(axis=0),
            p_null_null=float(t[np.ix_(null, null)].sum()),
            p_chs=float(t.sum()),
        )

    def total(self) -> float:
        return float(self.p_xy.sum() + self.p_x_null.sum() + self.p_null_y.sum() + self.p_null_null)

    def swapped(self) -> "ProbabilitySet":
        return ProbabilitySet(self.p_xy.T.copy(), self.p_null_y.copy(), self.p_x_null.copy(), self.p_null_null, self.p_chs)


def _check_g2(g2: float) -> None:
    if not 0.0 <= g2 <= G2_LIMIT:
        raise ValidityError(f"g2={g2} outside the first-order range [0, {G2_LIMIT}]")


def purity_event_weights(model: ProtocolModel, g2: float) -> np.ndarray:
    """Per-event weights giving (P4 + g2/2 * P5) / (1 + 2 g2)."""
    _check_g2(g2)
    w = np.where(model.event_is_double, 0.5 * g2, 1.0)
    return w / (1.0 + 2.0 * g2)


def total_probabilities(
    setup: SetupParams,
    moments: IndistMoments | None,
    purity: PurityParams | float,
    angles: MeasurementSettings,
    gram=None,
    model: ProtocolModel | None = None,
) -> ProbabilitySet:
    """Category probabilities with double emissions mixed in to first order in g2."""
    model = model or compiled_model()
    g2 = purity.g2 if isinstance(purity, PurityParams) else float(purity)
    kern = model.kernel(setup, moments, gram, event_weights=purity_event_weights(model, g2))
    return ProbabilitySet.from_outcome_table(kern.outcome_tables(angles))


def apply_assignment_strategy(p: ProbabilitySet) -> np.ndarray:
    """2x2 table with every inconclusive result assigned to outcome +."""
    out = p.p_xy.copy()
    out[:, 0] += p.p_x_null
    out[0, :] += p.p_null_y
    out[0, 0] += p.p_null_null
    return out


def postselect(p: ProbabilitySet) -> np.ndarray:
    """2x2 table of conclusive results, renormalized to unit sum."""
    mass = p.p_xy.sum()
    if not mass > 0:
        raise ValidityError("no conclusive events to post-select")
    return p.p_xy / mass
