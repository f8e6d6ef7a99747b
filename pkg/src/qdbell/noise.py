"""Indistinguishability moments for quantum-dot photons.

Photons from the same dot only see fast (white-noise) pure dephasing with
rate ``gamma_d``.  Photons from the two different dots additionally see a
quasi-static detuning ``Delta ~ N(0, sigma^2)`` shared by every cross-dot
pair within one run.  All rates are in units of the spontaneous emission
rate ``gamma`` (``gamma = 1`` by convention, but any positive value works).

Two independent routes are provided:

* closed forms (``local_visibility``, ``cross_visibility``, ``moment_table``),
* ``quadrature_moment_oracle`` which integrates the phase-averaged mode
  functions directly and averages over the detuning numerically.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, fields
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import integrate, optimize, special

__all__ = [
    "NoiseParams",
    "PurityParams",
    "IndistMoments",
    "ASYMPTOTIC_SWITCH",
    "local_visibility",
    "cross_visibility",
    "moments_at_detuning",
    "moment_table",
    "moment_monomials",
    "quadrature_moment_oracle",
    "oracle_moment_table",
    "calibrate_sigma",
    "noise_from_visibilities",
    "purity_corrected_visibility",
    "g2_from_populations",
    "UnsupportedMonomialError",
    "InfeasibleError",
]

#: sigma / (gamma + 2 gamma_d) below which the erfc asymptotic series is used.
ASYMPTOTIC_SWITCH = 0.1
# Number of asymptotic-series terms; truncating after three gives a ~1.5e-5
# jump at the switch point, twelve keeps it below 1e-12.
_ASYMPTOTIC_TERMS = 12


class UnsupportedMonomialError(ValueError):
    """Raised when a monomial has no phase-correlator reduction."""


class InfeasibleError(ValueError):
    """Raised when a requested target cannot be reached."""


@dataclass(frozen=True)
class NoiseParams:
    gamma: float = 1.0
    gamma_d: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.gamma_d < 0:
            raise ValueError(f"gamma_d must be non-negative, got {self.gamma_d}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")


@dataclass(frozen=True)
class PurityParams:
    """Multi-photon content of each source.

    ``p1 + p2 = 1``; vacuum emission is folded into the efficiencies.
    Use :meth:`from_g2` or :meth:`from_populations` rather than filling all
    fields by hand.
    """

    g2: float = 0.0
    kappa: float = 2.0
    p1: float = 1.0
    p2: float = 0.0

    def __post_init__(self):
        if self.g2 < 0:
            raise ValueError(f"g2 must be non-negative, got {self.g2}")
        if not 1.0 <= self.kappa <= 3.0:
            raise ValueError(f"kappa must lie in [1, 3], got {self.kappa}")
        if abs(self.p1 + self.p2 - 1.0) > 1e-12 or self.p2 < 0 or self.p1 <= 0:
            raise ValueError(f"need p1 + p2 = 1 with p1 > 0, got {self.p1}, {self.p2}")

    @classmethod
    def from_g2(cls, g2: float, kappa: float = 2.0) -> "PurityParams":
        # invert g2 = 2 p2 / p1^2 with p1 = 1 - p2
        if g2 == 0:
            return cls(0.0, kappa, 1.0, 0.0)
        p1 = (-1.0 + math.sqrt(1.0 + 2.0 * g2)) / g2
        return cls(g2, kappa, p1, 1.0 - p1)

    @classmethod
    def from_populations(cls, p2: float, kappa: float = 2.0) -> "PurityParams":
        p1 = 1.0 - p2
        return cls(2.0 * p2 / p1**2, kappa, p1, p2)


@dataclass(frozen=True)
class IndistMoments:
    """Noise-averaged overlap moments.

    ``m_alpha*`` involve photons from one dot only, ``m_*b*`` contain
    cross-dot overlaps.  Names follow the index pattern of the monomial,
    e.g. ``m_abb`` is <alpha_ij beta_ik beta_jk>.
    """

    m_alpha2: float
    m_beta2: float
    m_alpha1: float
    m_beta1: float
    m_aaa: float
    m_aaaa: float
    m_abb: float
    m_aabb: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def ideal(cls) -> "IndistMoments":
        return cls(*([1.0] * 8))

    @classmethod
    def distinguishable(cls) -> "IndistMoments":
        return cls(*([0.0] * 8))


# --------------------------------------------------------------------------
# closed forms
# --------------------------------------------------------------------------


def local_visibility(noise: NoiseParams) -> float:
    """HOM visibility of two photons from the same dot, gamma/(gamma+2 gamma_d)."""
    return noise.gamma / (noise.gamma + 2.0 * noise.gamma_d)


def _lorentz_average(c: float, sigma: float, asymptotic: bool) -> float:
    """<c / (c^2 + Delta^2)> over Delta ~ N(0, sigma^2)."""
    if sigma == 0.0:
        return 1.0 / c
    if asymptotic:
        r2 = (sigma / c) ** 2
        total, term = 0.0, 1.0
        for k in range(_ASYMPTOTIC_TERMS):
            total += term
            term *= -(2 * k + 1) * r2
        return total / c
    return math.sqrt(math.pi / 2.0) / sigma * float(special.erfcx(c / (math.sqrt(2.0) * sigma)))


def _use_asymptotic(noise: NoiseParams, switch: float) -> bool:
    return noise.sigma / (noise.gamma + 2.0 * noise.gamma_d) < switch


def cross_visibility(noise: NoiseParams, switch: float = ASYMPTOTIC_SWITCH) -> float:
    """HOM visibility of photons from different dots, averaged over the detuning.

    Uses the erfc form (via the scaled ``erfcx``) above ``switch`` and the
    asymptotic series of erfc below it.
    """
    c1 = noise.gamma + 2.0 * noise.gamma_d
    return noise.gamma * _lorentz_average(c1, noise.sigma, _use_asymptotic(noise, switch))


def moments_at_detuning(noise: NoiseParams, delta: float) -> IndistMoments:
    """Moment table for one fixed detuning ``delta`` (``noise.sigma`` ignored)."""
    g, gd = noise.gamma, noise.gamma_d
    d2 = delta * delta
    c1, c2, c3 = g + 2 * gd, 2 * (g + gd), 3 * g + 2 * gd
    a2 = g / c1
    aaa = g * g / ((g + gd) * c1)
    aaaa = g**3 * (3 * g + 5 * gd) / ((g + gd) * c1**2 * c3)
    b2 = g * c1 / (c1 * c1 + d2)
    abb = (
        g * g * (12 * (g + gd) ** 2 * c1**2 + (3 * g * g + 6 * g * gd + 4 * gd * gd) * d2)
        / (3 * (g + gd) * c1 * (c2 * c2 + d2) * (c1 * c1 + d2))
    )
    aabb = g / c3 * (
        -8 * gd * (g + gd) * (2 * g + gd) / (c1 * (c2 * c2 + d2))
        + (3 * g * g + 6 * g * gd + 2 * gd * gd) / (c1 * c1 + d2)
        + 2 * gd * gd * c3 * c3 / (c1 * c1 * (c3 * c3 + d2))
    )
    # <beta> at fixed delta is complex; its real part equals |beta|^2 and the
    # imaginary part is odd in delta, so only the real part survives averaging.
    return IndistMoments(a2, b2, a2, b2, aaa, aaaa, abb, aabb)


def moment_table(noise: NoiseParams, switch: float = ASYMPTOTIC_SWITCH) -> IndistMoments:
    """All eight detuning-averaged moments in closed form."""
    g, gd, s = noise.gamma, noise.gamma_d, noise.sigma
    c1, c2, c3 = g + 2 * gd, 2 * (g + gd), 3 * g + 2 * gd
    asym = _use_asymptotic(noise, switch)
    l1 = _lorentz_average(c1, s, asym)
    l2 = _lorentz_average(c2, s, asym)
    l3 = _lorentz_average(c3, s, asym)

    a2 = g / c1
    aaa = g * g / ((g + gd) * c1)
    aaaa = g**3 * (3 * g + 5 * gd) / ((g + gd) * c1**2 * c3)
    b2 = g * l1
    abb = g / (3 * (g + gd) * c1) * (c1 * c3 * l1 - 4 * gd * (g + gd) * l2)
    aabb = g / (c3 * c1 * c1) * (
        2 * gd * gd * c3 * l3
        + c1 * (3 * g * g + 6 * g * gd + 2 * gd * gd) * l1
        - 4 * gd * (2 * g + gd) * c1 * l2
    )
    return IndistMoments(
        m_alpha2=a2,
        m_beta2=b2,
        m_alpha1=a2,
        m_beta1=b2,
        m_aaa=aaa,
        m_aaaa=aaaa,
        m_abb=abb,
        m_aabb=aabb,
    )


# --------------------------------------------------------------------------
# quadrature oracle
# --------------------------------------------------------------------------

_DEFAULT_DOTS = {1: "A", 2: "A", 3: "B", 4: "B"}


def moment_monomials() -> dict[str, tuple[tuple[tuple[int, int], ...], dict[int, str]]]:
    """Directed-edge monomial and dot assignment for each table entry.

    An edge ``(k, l)`` stands for the overlap <f_k|f_l>.
    """
    same = {1: "A", 2: "A", 3: "A", 4: "A"}
    return {
        "m_alpha2": (((1, 2), (2, 1)), _DEFAULT_DOTS),
        "m_beta2": (((1, 3), (3, 1)), _DEFAULT_DOTS),
        "m_alpha1": (((1, 2),), _DEFAULT_DOTS),
        "m_beta1": (((1, 3),), _DEFAULT_DOTS),
        "m_aaa": (((1, 2), (2, 3), (3, 1)), same),
        "m_aaaa": (((1, 2), (2, 4), (4, 3), (3, 1)), same),
        "m_abb": (((1, 2), (2, 3), (3, 1)), _DEFAULT_DOTS),
        "m_aabb": (((1, 2), (2, 4), (4, 3), (3, 1)), _DEFAULT_DOTS),
    }


def _normalize_monomial(monomial, dots):
    edges = []
    for e in monomial:
        if hasattr(e, "edge"):  # OverlapSymbol
            e = e.edge()
        k, l = int(e[0]), int(e[1])
        edges.append((k, l))
    labels = sorted({x for e in edges for x in e})
    if not edges or len(labels) > 4 or len(edges) > 6:
        raise UnsupportedMonomialError(f"unsupported monomial {edges}: needs 1-6 factors over <=4 emitters")
    for k, l in edges:
        if k == l:
            raise UnsupportedMonomialError(f"unsupported monomial {edges}: self-overlap factor {(k, l)}")
        if k not in dots or l not in dots:
            raise UnsupportedMonomialError(f"unsupported monomial {edges}: emitter without a dot assignment")
    return edges


def _exponent_pieces(edges, dots, noise):
    """Per-edge time variable; return (decay, phase-variance pairs, detuning coeffs)."""
    n = len(edges)
    # signs[k] lists (edge index, +1 conj / -1 plain) for photon k
    occurrences: dict[int, list[tuple[int, int]]] = {}
    for idx, (k, l) in enumerate(edges):
        occurrences.setdefault(k, []).append((idx, +1))
        occurrences.setdefault(l, []).append((idx, -1))
    # detuning phase: conj f_k contributes +i Delta_k t, plain f_l contributes -i Delta_l t
    det = np.zeros(n)
    for idx, (k, l) in enumerate(edges):
        det[idx] = (dots[k] == "B") - (dots[l] == "B")
    return occurrences, det


def _ordered_time_integral(edges, dots, noise, delta):
    """Exact integral over t in [0, inf)^n by summing over time orderings."""
    n = len(edges)
    occurrences, det = _exponent_pieces(edges, dots, noise)
    g, gd = noise.gamma, noise.gamma_d
    total = 0.0 + 0.0j
    for order in itertools.permutations(range(n)):
        rank = {v: r for r, v in enumerate(order)}
        lam = np.full(n, -g, dtype=complex)
        lam += 1j * delta * det
        # -1/2 Var(sum_j s_j phi(t_j)) = -gd * sum_{j,j'} s_j s_j' min(t_j, t_j')
        for occ in occurrences.values():
            for (a, sa), (b, sb) in itertools.product(occ, occ):
                earlier = a if rank[a] <= rank[b] else b
                lam[earlier] -= gd * sa * sb
        lam_sorted = lam[list(order)]
        tails = np.cumsum(lam_sorted[::-1])[::-1]
        total += np.prod(-1.0 / tails)
    return g**n * total


def _nquad_time_integral(edges, dots, noise, delta):
    """Brute-force adaptive cubature of the same time integral (slow, <=3 edges)."""
    n = len(edges)
    occurrences, det = _exponent_pieces(edges, dots, noise)
    g, gd = noise.gamma, noise.gamma_d

    def integrand(*t, part):
        t = np.asarray(t)
        expo = -g * t.sum()
        for occ in occurrences.values():
            for (a, sa), (b, sb) in itertools.product(occ, occ):
                expo -= gd * sa * sb * min(t[a], t[b])
        phase = delta * float(det @ t)
        val = math.exp(expo) * (math.cos(phase) if part == 0 else math.sin(phase))
        return g**n * val

    opts = {"epsabs": 1e-11, "epsrel": 1e-11, "limit": 200}
    upper = 60.0 / g
    re = integrate.nquad(lambda *t: integrand(*t, part=0), [[0, upper]] * n, opts=opts)[0]
    im = integrate.nquad(lambda *t: integrand(*t, part=1), [[0, upper]] * n, opts=opts)[0]
    return complex(re, im)


def quadrature_moment_oracle(
    monomial: Sequence,
    noise: NoiseParams,
    dots: Mapping[int, str] | None = None,
    method: str = "ordered",
    return_complex: bool = False,
):
    """Average a product of mode overlaps by direct integration.

    ``monomial`` is a sequence of directed edges ``(k, l)`` (each standing for
    <f_k|f_l>) or of ``OverlapSymbol``.  ``dots`` maps emitter labels to
    'A' or 'B' (default: 1, 2 -> A and 3, 4 -> B).

    The white-noise phases are averaged analytically (Gaussian), the time
    integrals are evaluated either exactly per time ordering
    (``method="ordered"``) or by adaptive cubature (``method="nquad"``), and
    the detuning average is an adaptive quadrature against the Gaussian
    density.
    """
    dots = dict(_DEFAULT_DOTS if dots is None else dots)
    edges = _normalize_monomial(monomial, dots)
    if method == "ordered":
        kernel = _ordered_time_integral
    elif method == "nquad":
        if len(edges) > 3:
            raise UnsupportedMonomialError(f"nquad route limited to 3 factors, got {edges}")
        kernel = _nquad_time_integral
    else:
        raise ValueError(f"unknown method {method!r}")

    uses_detuning = any(dots[k] != dots[l] for k, l in edges)
    if noise.sigma == 0.0 or not uses_detuning:
        value = kernel(edges, dots, noise, 0.0)
    else:
        s = noise.sigma
        norm = 1.0 / (math.sqrt(2 * math.pi) * s)

        def part(delta, which):
            v = kernel(edges, dots, noise, delta) * norm * math.exp(-0.5 * (delta / s) ** 2)
            return v.real if which == 0 else v.imag

        opts = dict(epsabs=1e-13, epsrel=1e-12, limit=400)
        # split at 0 and at a few sigma so the adaptive rule sees both scales
        pts = sorted({0.0, noise.gamma, 3 * s, 10 * s})
        value = 0.0 + 0.0j
        for which in (0, 1):
            acc = 0.0
            edges_ = [0.0] + [p for p in pts if p > 0] + [np.inf]
            for lo, hi in zip(edges_[:-1], edges_[1:]):
                acc += integrate.quad(part, lo, hi, args=(which,), **opts)[0]
                acc += integrate.quad(part, -hi, -lo, args=(which,), **opts)[0]
            value += acc if which == 0 else 1j * acc
    if return_complex:
        return complex(value)
    return float(value.real)


def oracle_moment_table(noise: NoiseParams) -> IndistMoments:
    """Moment table computed entirely with :func:`quadrature_moment_oracle`."""
    vals = {}
    for name, (edges, dots) in moment_monomials().items():
        vals[name] = quadrature_moment_oracle(edges, noise, dots)
    return IndistMoments(**vals)


# --------------------------------------------------------------------------
# calibration and purity
# --------------------------------------------------------------------------


def calibrate_sigma(target_v_beta: float, noise: NoiseParams, tol: float = 1e-12) -> float:
    """Detuning width that gives the requested cross visibility (Brent root)."""
    v0 = local_visibility(noise)
    if not 0.0 < target_v_beta <= v0 + 1e-15:
        raise InfeasibleError(
            f"cross visibility {target_v_beta} not reachable: must lie in (0, {v0}]"
        )
    if target_v_beta >= v0:
        return 0.0

    def f(s):
        return cross_visibility(NoiseParams(noise.gamma, noise.gamma_d, s)) - target_v_beta

    lo, hi = 0.0, noise.gamma
    while f(hi) > 0:
        lo, hi = hi, 2 * hi
    return float(optimize.brentq(f, lo, hi, xtol=tol * max(1.0, hi), rtol=4 * np.finfo(float).eps))


def noise_from_visibilities(v_alpha: float, v_beta: float | None = None, gamma: float = 1.0) -> NoiseParams:
    """Noise parameters reproducing the raw visibilities (v_beta <= v_alpha)."""
    if not 0.0 < v_alpha <= 1.0:
        raise InfeasibleError(f"v_alpha must lie in (0, 1], got {v_alpha}")
    gamma_d = gamma * (1.0 / v_alpha - 1.0) / 2.0
    base = NoiseParams(gamma, gamma_d, 0.0)
    if v_beta is None:
        return base
    return NoiseParams(gamma, gamma_d, calibrate_sigma(v_beta, base))


def purity_corrected_visibility(v0: float, purity: PurityParams) -> float:
    """Measured visibility v0 - kappa g2."""
    v = v0 - purity.kappa * purity.g2
    if v < 0:
        raise ValueError(f"corrected visibility is negative ({v}) for v0={v0}, g2={purity.g2}")
    return v


def g2_from_populations(purity: PurityParams) -> tuple[float, float]:
    """Return (exact, first-order) g2 for the populations p1, p2."""
    p1, p2 = purity.p1, purity.p2
    return 2 * p2 / (p1 + 2 * p2) ** 2, 2 * p2 / p1**2
