"""Setup parameters, waveplate settings and the station Jones matrices.

Photon labels used throughout the package:

====  =======  ============
label station  polarization
====  =======  ============
1     Alice    H
2     Alice    V
3     Bob      H
4     Bob      V
====  =======  ============

A double emission adds one more photon ``"e<s>"`` that copies the routing
of source ``s`` but overlaps with nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

__all__ = [
    "SOURCES",
    "STATION_OF",
    "POLARIZATION_OF",
    "Photon",
    "source_of",
    "station_of",
    "extra_label",
    "SetupParams",
    "MeasurementSettings",
    "ChshSettings",
    "qwp",
    "hwp",
    "measurement_unitary",
]

SOURCES = (1, 2, 3, 4)
STATION_OF = {1: "A", 2: "A", 3: "B", 4: "B"}
POLARIZATION_OF = {1: 0, 2: 1, 3: 0, 4: 1}  # 0 = H, 1 = V

Photon = Union[int, str]


def extra_label(source: int) -> str:
    """Label of the second photon of a double emission from ``source``."""
    if source not in SOURCES:
        raise ValueError(f"unknown source {source!r}")
    return f"e{source}"


def source_of(photon: Photon) -> int:
    if isinstance(photon, str):
        if len(photon) == 2 and photon[0] == "e" and int(photon[1]) in SOURCES:
            return int(photon[1])
        raise ValueError(f"unknown photon label {photon!r}")
    if photon not in SOURCES:
        raise ValueError(f"unknown photon label {photon!r}")
    return photon


def station_of(photon: Photon) -> str:
    return STATION_OF[source_of(photon)]


def _four(name, value) -> tuple[float, ...]:
    vals = tuple(float(v) for v in np.broadcast_to(np.asarray(value, dtype=float), (4,)))
    for v in vals:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} entries must lie in [0, 1], got {vals}")
    return vals


@dataclass(frozen=True)
class SetupParams:
    """Optical setup.

    ``T`` is the transmittance of the station beam splitters towards the
    heralding station, ``eta_t`` the transmission of that link, ``eta1`` the
    efficiency before the station splitter and ``eta2`` the efficiency of the
    local detection arm (detector included).  ``eta1``/``eta2`` accept a
    scalar or one value per source.
    """

    T: float = 0.5
    eta_t: float = 1.0
    eta1: Sequence[float] | float = 1.0
    eta2: Sequence[float] | float = 1.0

    def __post_init__(self):
        if not 0.0 < self.T < 1.0:
            raise ValueError(f"T must lie in (0, 1), got {self.T}")
        if not 0.0 <= self.eta_t <= 1.0:
            raise ValueError(f"eta_t must lie in [0, 1], got {self.eta_t}")
        object.__setattr__(self, "eta1", _four("eta1", self.eta1))
        object.__setattr__(self, "eta2", _four("eta2", self.eta2))

    def eta_local(self, source: int = 1) -> float:
        """End-to-end local detection efficiency eta1 * eta2 * (1 - T)."""
        s = source - 1
        return self.eta1[s] * self.eta2[s] * (1.0 - self.T)

    def p_chs(self, source: int) -> float:
        """Probability that a photon of ``source`` reaches the heralding station."""
        return self.eta1[source - 1] * self.eta_t * self.T

    def p_lost(self, source: int) -> float:
        return max(0.0, 1.0 - self.p_chs(source) - self.eta_local(source))

    def region_weight(self, region: str, source: int) -> float:
        """Single-photon probability of ending in ``region`` ('C', 'A', 'B', 'L')."""
        if region == "C":
            return self.p_chs(source)
        if region == "L":
            return self.p_lost(source)
        if region == STATION_OF[source]:
            return self.eta_local(source)
        return 0.0

    def swapped(self) -> "SetupParams":
        """Same setup with the roles of Alice and Bob exchanged."""
        perm = [2, 3, 0, 1]
        return SetupParams(
            self.T, self.eta_t, [self.eta1[p] for p in perm], [self.eta2[p] for p in perm]
        )

    @classmethod
    def from_local_efficiency(cls, eta_l: float, T: float, eta_t: float, eta1: float = 1.0) -> "SetupParams":
        """Pick eta2 so that eta1 * eta2 * (1 - T) equals ``eta_l``."""
        eta2 = eta_l / (eta1 * (1.0 - T))
        if eta2 > 1.0 + 1e-12:
            raise ValueError(f"eta_l={eta_l} not reachable with T={T}, eta1={eta1}")
        return cls(T, eta_t, eta1, min(eta2, 1.0))


def _wrap(angle: float) -> float:
    return float(np.mod(angle, math.pi))


@dataclass(frozen=True)
class MeasurementSettings:
    """QWP angle ``theta`` and HWP angle ``phi`` at each station, radians."""

    theta_a: float = 0.0
    phi_a: float = 0.0
    theta_b: float = 0.0
    phi_b: float = 0.0

    def __post_init__(self):
        for name in ("theta_a", "phi_a", "theta_b", "phi_b"):
            object.__setattr__(self, name, _wrap(getattr(self, name)))

    def unitaries(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            measurement_unitary(self.theta_a, self.phi_a),
            measurement_unitary(self.theta_b, self.phi_b),
        )

    def swapped(self) -> "MeasurementSettings":
        return MeasurementSettings(self.theta_b, self.phi_b, self.theta_a, self.phi_a)


@dataclass(frozen=True)
class ChshSettings:
    """Two waveplate pairs per station, ``a, a'`` for Alice and ``b, b'`` for Bob.

    The four measured combinations are ordered (a,b), (a',b), (a,b'), (a',b')
    to match ``S = |C1 + C2 + C3 - C4|``.
    """

    a: tuple[float, float] = (0.0, 0.0)
    a_prime: tuple[float, float] = (0.0, 0.0)
    b: tuple[float, float] = (0.0, 0.0)
    b_prime: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        for name in ("a", "a_prime", "b", "b_prime"):
            th, ph = getattr(self, name)
            object.__setattr__(self, name, (_wrap(th), _wrap(ph)))

    @classmethod
    def from_vector(cls, x: Sequence[float]) -> "ChshSettings":
        x = [float(v) for v in x]
        if len(x) != 8:
            raise ValueError(f"need 8 angles, got {len(x)}")
        return cls((x[0], x[1]), (x[2], x[3]), (x[4], x[5]), (x[6], x[7]))

    def as_vector(self) -> np.ndarray:
        return np.array([*self.a, *self.a_prime, *self.b, *self.b_prime])

    def settings(self) -> tuple[MeasurementSettings, ...]:
        pairs = ((self.a, self.b), (self.a_prime, self.b), (self.a, self.b_prime), (self.a_prime, self.b_prime))
        return tuple(MeasurementSettings(sa[0], sa[1], sb[0], sb[1]) for sa, sb in pairs)

    def swapped(self) -> "ChshSettings":
        # (a,b),(a',b),(a,b'),(a',b') -> (b,a),(b,a'),(b',a),(b',a') keeps the sign pattern
        return ChshSettings(self.b, self.b_prime, self.a, self.a_prime)


def qwp(theta: float) -> np.ndarray:
    c, s = math.cos(2 * theta), math.sin(2 * theta)
    return np.array([[1j - c, s], [s, 1j + c]]) / math.sqrt(2.0)


def hwp(phi: float) -> np.ndarray:
    c, s = math.cos(2 * phi), math.sin(2 * phi)
    return np.array([[c, -s], [-s, -c]], dtype=complex)


def measurement_unitary(theta: float, phi: float) -> np.ndarray:
    """Jones matrix of a QWP at ``theta`` followed by a HWP at ``phi``.

    Columns are indexed by the incoming polarization (H, V), rows by the
    detector (H -> outcome +, V -> outcome -).
    """
    return hwp(phi) @ qwp(theta)
