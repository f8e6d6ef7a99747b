"""Exact polynomials in the mode-overlap variables alpha_ij, beta_ij."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Number
from typing import Iterable, Mapping

import numpy as np

__all__ = ["GaussianRational", "OverlapSymbol", "OverlapPolynomial", "overlap", "STATION"]

#: station (= emitting dot) of each protocol photon label
STATION = {1: "A", 2: "A", 3: "B", 4: "B"}
_ALPHA_PAIRS = {(1, 2), (3, 4)}
_BETA_PAIRS = {(1, 3), (1, 4), (2, 3), (2, 4)}


class GaussianRational:
    """Exact complex number with rational real and imaginary parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = Fraction(re)
        self.im = Fraction(im)

    @classmethod
    def coerce(cls, x):
        if isinstance(x, GaussianRational):
            return x
        if isinstance(x, (int, Fraction)):
            return cls(x, 0)
        return None

    def __add__(self, other):
        o = GaussianRational.coerce(other)
        if o is None:
            return complex(self) + other
        return GaussianRational(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self):
        return GaussianRational(-self.re, -self.im)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = GaussianRational.coerce(other)
        if o is None:
            return complex(self) * other
        return GaussianRational(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def conjugate(self):
        return GaussianRational(self.re, -self.im)

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __eq__(self, other):
        o = GaussianRational.coerce(other)
        if o is None:
            return complex(self) == other
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __repr__(self):
        if not self.im:
            return str(self.re)
        if not self.re:
            return f"{self.im}i"
        return f"({self.re}{'+' if self.im > 0 else '-'}{abs(self.im)}i)"


I = GaussianRational(0, 1)


@dataclass(frozen=True, order=True)
class OverlapSymbol:
    """One overlap factor <f_i|f_j> with i < j, or its conjugate.

    ``kind`` is ``"alpha"`` for same-station pairs (1,2), (3,4) and
    ``"beta"`` for cross-station pairs.
    """

    i: int
    j: int
    conjugated: bool = False

    def __post_init__(self):
        if self.i >= self.j:
            raise ValueError(f"overlap symbol needs i < j, got ({self.i}, {self.j})")
        if (self.i, self.j) not in _ALPHA_PAIRS | _BETA_PAIRS:
            raise ValueError(f"no overlap variable for emitter pair ({self.i}, {self.j})")

    @property
    def kind(self) -> str:
        return "alpha" if (self.i, self.j) in _ALPHA_PAIRS else "beta"

    def edge(self) -> tuple[int, int]:
        """Directed edge (k, l) meaning <f_k|f_l>."""
        return (self.j, self.i) if self.conjugated else (self.i, self.j)

    def conj(self) -> "OverlapSymbol":
        return OverlapSymbol(self.i, self.j, not self.conjugated)

    def __str__(self):
        name = ("a" if self.kind == "alpha" else "b") + f"{self.i}{self.j}"
        return name + "*" if self.conjugated else name


def overlap(k: int, l: int) -> OverlapSymbol:
    """Symbol for <f_k|f_l> (k != l)."""
    if k < l:
        return OverlapSymbol(k, l, False)
    return OverlapSymbol(l, k, True)


Monomial = tuple  # sorted tuple of OverlapSymbol


def _coeff_is_zero(c) -> bool:
    if isinstance(c, GaussianRational):
        return not c
    return c == 0


class OverlapPolynomial:
    """Sparse polynomial: mapping monomial (sorted symbol tuple) -> coefficient.

    Coefficients are :class:`GaussianRational` when exact and ``complex`` /
    ``float`` otherwise; like terms are merged on construction.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[Monomial, object] | Iterable | None = None):
        acc: dict = {}
        items = terms.items() if isinstance(terms, Mapping) else (terms or [])
        for mono, c in items:
            key = tuple(sorted(mono))
            acc[key] = acc[key] + c if key in acc else c
        self.terms = {m: c for m, c in acc.items() if not _coeff_is_zero(c)}

    @classmethod
    def constant(cls, c) -> "OverlapPolynomial":
        return cls({(): c})

    @classmethod
    def symbol(cls, sym: OverlapSymbol, c=1) -> "OverlapPolynomial":
        return cls({(sym,): GaussianRational.coerce(c) or c})

    def __add__(self, other):
        if isinstance(other, Number) or isinstance(other, GaussianRational):
            other = OverlapPolynomial.constant(other)
        return OverlapPolynomial(list(self.terms.items()) + list(other.terms.items()))

    __radd__ = __add__

    def __neg__(self):
        return OverlapPolynomial({m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, OverlapPolynomial):
            acc = []
            for m1, c1 in self.terms.items():
                for m2, c2 in other.terms.items():
                    acc.append((m1 + m2, c1 * c2))
            return OverlapPolynomial(acc)
        return OverlapPolynomial({m: c * other for m, c in self.terms.items()})

    __rmul__ = __mul__

    def conj(self) -> "OverlapPolynomial":
        return OverlapPolynomial(
            {tuple(s.conj() for s in m): c.conjugate() for m, c in self.terms.items()}
        )

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other):
        if isinstance(other, Number):
            other = OverlapPolynomial.constant(other)
        if not isinstance(other, OverlapPolynomial):
            return NotImplemented
        diff = self - other
        return diff.is_zero()

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def evaluate(self, gram) -> complex:
        """Substitute numeric overlaps; ``gram[k-1][l-1] = <f_k|f_l>``."""
        g = np.asarray(gram)
        total = 0j
        for mono, c in self.terms.items():
            v = complex(c)
            for s in mono:
                k, l = s.edge()
                v *= g[k - 1, l - 1]
            total += v
        return total

    def collapse(self, alpha: complex, beta: complex) -> complex:
        """Evaluate with every alpha_ij -> alpha and beta_ij -> beta (conjugates respected)."""
        total = 0j
        for mono, c in self.terms.items():
            v = complex(c)
            for s in mono:
                x = alpha if s.kind == "alpha" else beta
                v *= np.conj(x) if s.conjugated else x
            total += v
        return total

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for mono, c in sorted(self.terms.items(), key=lambda t: (len(t[0]), t[0])):
            body = "*".join(str(s) for s in mono)
            parts.append(f"{c!r}" + (f"*{body}" if body else ""))
        return " + ".join(parts)
