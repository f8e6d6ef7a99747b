"""Heralding-station expectation values as exact overlap polynomials.

A photon sent to the heralding station (HS) from source ``k`` ends in one of
the four HS detectors with amplitudes ``O_k / sqrt(2)``, ordered
(D1, D2, D3, D4) = (pH, pV, qH, qV).  The station beam splitter contributes a
factor ``i`` on reflection and the HWP in front of the link is fixed at
``-pi/8``; both are baked into the vectors below.

For bra photons ``i_1..i_n`` and ket photons ``k_1..k_n`` the conditioned
expectation is::

    sum_{m accepted} prod_b O_{k_b}[m_b] sum_tau prod_a conj(O_{i_a}[m_tau(a)]) <f_{i_a}|f_{k_tau(a)}>

where the outer sum runs over ordered detector tuples whose set of clicked
detectors is an accepted pattern (threshold detectors).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .model import Photon, SetupParams, source_of, station_of
from .noise import IndistMoments, UnsupportedMonomialError
from .polynomial import GaussianRational, OverlapPolynomial, OverlapSymbol, overlap

__all__ = [
    "HS_VECTORS",
    "ACCEPTED_PATTERNS",
    "REJECTED_PATTERNS",
    "hs_vector",
    "chs_coefficient",
    "chs_expectation",
    "chs_pair_expectation",
    "chs_triple_expectation",
    "unconditioned_pair_sum",
    "DENSITY_BASIS",
    "ConditionedDensityMatrix",
    "conditioned_density_matrix",
    "average_polynomial",
    "average_monomial",
]

# sqrt(2) * O_k: Gaussian integers, so every contraction is exact
HS_VECTORS = {
    1: (1j, 1j, 1, 1),
    2: (1j, -1j, 1, -1),
    3: (1, 1, 1j, 1j),
    4: (1, -1, 1j, -1j),
}

# detector indices 0..3 = D1..D4
ACCEPTED_PATTERNS = (frozenset({0, 3}), frozenset({1, 2}))
REJECTED_PATTERNS = tuple(
    frozenset(c)
    for r in range(1, 5)
    for c in itertools.combinations(range(4), r)
    if frozenset(c) not in ACCEPTED_PATTERNS
)


def hs_vector(photon: Photon) -> tuple:
    """Scaled HS amplitudes; a double-emission photon copies its source."""
    return HS_VECTORS[source_of(photon)]


def _to_exact(z: complex, n: int) -> GaussianRational:
    # z is a Gaussian integer held exactly in a float; divide by 2**n
    return GaussianRational(Fraction(int(round(z.real)), 2**n), Fraction(int(round(z.imag)), 2**n))


@lru_cache(maxsize=None)
def _coefficient(bra_src: tuple, ket_src: tuple, tau: tuple, patterns: frozenset) -> GaussianRational:
    n = len(bra_src)
    obra = [HS_VECTORS[s] for s in bra_src]
    oket = [HS_VECTORS[s] for s in ket_src]
    total = 0j
    for m in itertools.product(range(4), repeat=n):
        if frozenset(m) not in patterns:
            continue
        v = 1 + 0j
        for b in range(n):
            v *= oket[b][m[b]]
        for a in range(n):
            v *= obra[a][m[tau[a]]].conjugate()
        total += v
    return _to_exact(total, n)


def chs_coefficient(bra: Sequence[Photon], ket: Sequence[Photon], tau: Sequence[int], patterns=ACCEPTED_PATTERNS) -> GaussianRational:
    """Exact detector-sum factor for one pairing ``tau`` (bra slot a -> ket slot tau[a])."""
    return _coefficient(
        tuple(source_of(p) for p in bra),
        tuple(source_of(p) for p in ket),
        tuple(tau),
        frozenset(patterns),
    )


def symbolic_overlap(k: Photon, l: Photon) -> OverlapPolynomial:
    """<f_k|f_l> as a polynomial; double-emission photons overlap with nothing."""
    if k == l:
        return OverlapPolynomial.constant(GaussianRational(1))
    if isinstance(k, str) or isinstance(l, str):
        return OverlapPolynomial()
    return OverlapPolynomial.symbol(overlap(k, l))


def chs_expectation(bra: Sequence[Photon], ket: Sequence[Photon], patterns=ACCEPTED_PATTERNS) -> OverlapPolynomial:
    """<O_bra... O_ket^dag...> restricted to the given click patterns.

    Photons are distinct labels; the result is normalized so that one
    photon pair with fully distinguishable modes gives 1 on the accepted
    patterns (the HS amplitudes carry the 1/sqrt(2) factors).
    """
    bra, ket = tuple(bra), tuple(ket)
    if len(bra) != len(ket):
        return OverlapPolynomial()
    if len(set(bra)) != len(bra) or len(set(ket)) != len(ket):
        raise ValueError("photon labels must be distinct")
    n = len(bra)
    acc = []
    for tau in itertools.permutations(range(n)):
        c = chs_coefficient(bra, ket, tau, patterns)
        if not c:
            continue
        poly = OverlapPolynomial.constant(c)
        for a in range(n):
            poly = poly * symbolic_overlap(bra[a], ket[tau[a]])
        acc.extend(poly.terms.items())
    return OverlapPolynomial(acc)


def chs_pair_expectation(i: Photon, j: Photon, k: Photon, l: Photon) -> OverlapPolynomial:
    """Conditioned <O_i O_j O_k^dag O_l^dag> on the D1D4 / D2D3 patterns."""
    return chs_expectation((i, j), (k, l))


def chs_triple_expectation(i: Photon, j: Photon, k: Photon) -> OverlapPolynomial:
    """Conditioned <O_i O_j O_k O_i^dag O_j^dag O_k^dag> on the D1D4 / D2D3 patterns."""
    return chs_expectation((i, j, k), (i, j, k))


def unconditioned_pair_sum(i: Photon, j: Photon) -> OverlapPolynomial:
    """<O_i O_j O_i^dag O_j^dag> summed over every click pattern.

    The HS vectors are mutually orthogonal with squared norm 2 (before the
    1/sqrt(2)), so this is the constant 4 for any overlaps.
    """
    return chs_expectation((i, j), (i, j), ACCEPTED_PATTERNS + REJECTED_PATTERNS)


# --------------------------------------------------------------------------
# conditioned two-photon state
# --------------------------------------------------------------------------

#: basis of the shared state: (Alice photon, Bob photon) kept locally
DENSITY_BASIS = ((1, 3), (1, 4), (2, 3), (2, 4))
_LABELS = ("HH", "HV", "VH", "VV")


def _hs_pair(basis: tuple[int, int]) -> tuple[int, int]:
    a, b = basis
    return (3 - a, 7 - b)


@dataclass(frozen=True)
class ConditionedDensityMatrix:
    """Unnormalized shared state after an accepted herald.

    ``entries[r][c]`` is a polynomial; the numeric matrix is
    ``w_r * conj(w_c) * entries[r][c]`` with the amplitude weights from
    :meth:`weights`.  With equal efficiencies ``w_r w_c`` reduces to
    ``eta_t^2 T^2 (1-T)^2 / 4``.
    """

    entries: tuple[tuple[OverlapPolynomial, ...], ...]
    labels: tuple[str, ...] = _LABELS

    @staticmethod
    def weights(setup: SetupParams) -> np.ndarray:
        w = np.empty(4)
        for r, (a, b) in enumerate(DENSITY_BASIS):
            p, q = _hs_pair((a, b))
            w[r] = np.sqrt(setup.p_chs(p) / 2 * setup.p_chs(q) / 2 * setup.eta_local(a) * setup.eta_local(b))
        return w

    @staticmethod
    def prefactor(setup: SetupParams) -> float:
        return (setup.eta_t * setup.T * (1 - setup.T)) ** 2 / 4

    def evaluate(self, gram, setup: SetupParams | None = None) -> np.ndarray:
        """Numeric matrix at fixed overlaps (``gram[k-1, l-1] = <f_k|f_l>``)."""
        m = np.array([[e.evaluate(gram) for e in row] for row in self.entries])
        if setup is None:
            return m
        w = self.weights(setup)
        return np.outer(w, w) * m

    def collapse(self, alpha: complex, beta: complex) -> np.ndarray:
        """Numeric matrix with all alpha_ij -> alpha and beta_ij -> beta, no prefactor."""
        return np.array([[e.collapse(alpha, beta) for e in row] for row in self.entries])

    def is_hermitian(self) -> bool:
        return all(
            self.entries[r][c] == self.entries[c][r].conj() for r in range(4) for c in range(4)
        )


def conditioned_density_matrix() -> ConditionedDensityMatrix:
    """Shared Alice/Bob polarization state conditioned on D1D4 or D2D3.

    Row ``r`` keeps photons ``DENSITY_BASIS[r]`` locally and sends the other
    two to the HS, so entry (r, c) is ``<O_{hs(c)} O_{hs(r)}^dag>``.

    With real overlaps and all alpha, beta equal this is

        [[1-b2, 0, 0, b2-a2], [0, 1+b2, -(a2+b2), 0],
         [0, -(a2+b2), 1+b2, 0], [b2-a2, 0, 0, 1-b2]].

    The (HV, HV) entry is <O_1 O_4 O_1^dag O_4^dag> = 1 + |beta_14|^2, which
    a printed form of this result shows with a stray 2t(1-t) factor.
    """
    rows = []
    for r in DENSITY_BASIS:
        rows.append(tuple(chs_expectation(_hs_pair(c), _hs_pair(r)) for c in DENSITY_BASIS))
    return ConditionedDensityMatrix(tuple(rows))


# --------------------------------------------------------------------------
# noise averaging
# --------------------------------------------------------------------------


def _components(edges):
    parent = {}

    def find(x):
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for k, l in edges:
        parent[find(k)] = find(l)
    groups = {}
    for e in edges:
        groups.setdefault(find(e[0]), []).append(e)
    return list(groups.values())


def _is_directed_cycle(edges) -> bool:
    succ = {}
    for k, l in edges:
        if k in succ:
            return False
        succ[k] = l
    if set(succ) != set(succ.values()):
        return False
    start = edges[0][0]
    seen, x = 0, start
    while True:
        x = succ[x]
        seen += 1
        if x == start:
            break
    return seen == len(edges)


def _cross(e) -> bool:
    return station_of(e[0]) != station_of(e[1])


def _component_moment(edges, moments: IndistMoments, name: str) -> tuple[float, bool]:
    """Average of one connected component; returns (value, involves cross-dot overlap)."""
    n_cross = sum(_cross(e) for e in edges)
    if len(edges) == 1:
        return (moments.m_beta1 if n_cross else moments.m_alpha1), bool(n_cross)
    if not _is_directed_cycle(edges):
        raise UnsupportedMonomialError(f"cannot average {name}: factor {edges} is not a closed overlap cycle")
    if len(edges) == 2:
        return (moments.m_beta2 if n_cross else moments.m_alpha2), bool(n_cross)
    if len(edges) == 3 and n_cross == 2:
        return moments.m_abb, True
    if len(edges) == 4 and n_cross == 2:
        succ = dict(edges)
        k = edges[0][0]
        kinds = []
        for _ in range(4):
            kinds.append(_cross((k, succ[k])))
            k = succ[k]
        if kinds in ([True, False, True, False], [False, True, False, True]):
            return moments.m_aabb, True
    raise UnsupportedMonomialError(f"cannot average {name}: no table entry for overlap cycle {edges}")


def average_monomial(mono: tuple[OverlapSymbol, ...], moments: IndistMoments) -> float:
    """Noise average of one monomial.

    Factors on disjoint photon sets average independently as long as at most
    one of them involves photons from both dots (the shared detuning
    correlates every cross-dot factor).
    """
    if not mono:
        return 1.0
    name = "*".join(str(s) for s in mono)
    value, n_cross = 1.0, 0
    for comp in _components([s.edge() for s in mono]):
        v, cross = _component_moment(comp, moments, name)
        value *= v
        n_cross += cross
    if n_cross > 1:
        raise UnsupportedMonomialError(
            f"cannot average {name}: cross-dot factors are correlated through the shared detuning"
        )
    return value


def average_polynomial(poly: OverlapPolynomial, moments: IndistMoments) -> float:
    """Noise average of a polynomial, real by construction of the moments."""
    total = 0j
    for mono, c in poly.terms.items():
        total += complex(c) * average_monomial(mono, moments)
    if abs(total.imag) > 1e-12 * max(1.0, abs(total.real)):
        raise ValueError(f"averaged polynomial has imaginary part {total.imag:g}")
    return total.real
