"""CHSH correlations, the S parameter and its run statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .events import (
    Kernel,
    ProbabilitySet,
    ProtocolModel,
    ValidityError,
    apply_assignment_strategy,
    compiled_model,
    purity_event_weights,
)
from .model import ChshSettings, MeasurementSettings, SetupParams, measurement_unitary  # noqa: F401 (re-export)
from .noise import (
    IndistMoments,
    InfeasibleError,
    NoiseParams,
    moment_table,
    noise_from_visibilities,
)

__all__ = [
    "Mode",
    "ProtocolParams",
    "ChshResult",
    "measurement_unitary",
    "joint_probability",
    "correlation",
    "chsh_value",
    "chsh_from_tables",
    "z_per_run",
    "runs_needed",
    "run_time_seconds",
    "link_length_km",
    "TSIRELSON",
]

Mode = Literal["postselected", "assigned"]
TSIRELSON = 2.0 * math.sqrt(2.0)


@dataclass(frozen=True)
class ProtocolParams:
    """Everything a CHSH evaluation needs apart from the waveplate angles."""

    setup: SetupParams = field(default_factory=SetupParams)
    moments: IndistMoments = field(default_factory=IndistMoments.ideal)
    g2: float = 0.0

    @classmethod
    def from_visibilities(cls, v_alpha: float, v_beta: float | None = None, g2: float = 0.0, setup: SetupParams | None = None) -> "ProtocolParams":
        """Noise fitted to the single-photon visibilities, then the moment table."""
        noise = noise_from_visibilities(v_alpha, v_beta)
        return cls(setup or SetupParams(), moment_table(noise), g2)

    @classmethod
    def from_noise(cls, noise: NoiseParams, g2: float = 0.0, setup: SetupParams | None = None) -> "ProtocolParams":
        return cls(setup or SetupParams(), moment_table(noise), g2)

    def with_setup(self, **changes) -> "ProtocolParams":
        s = self.setup
        args = dict(T=s.T, eta_t=s.eta_t, eta1=s.eta1, eta2=s.eta2)
        args.update(changes)
        return ProtocolParams(SetupParams(**args), self.moments, self.g2)

    def kernel(self, model: ProtocolModel | None = None, gram=None) -> Kernel:
        model = model or compiled_model()
        moments = None if gram is not None else self.moments
        return model.kernel(self.setup, moments, gram, event_weights=purity_event_weights(model, self.g2))


@dataclass(frozen=True)
class ChshResult:
    s_value: float
    correlations: tuple[float, float, float, float]
    sigma_s: float
    p_chs: float
    z_prime: float
    mode: str
    settings: ChshSettings | None = None
    optimal_t: float | None = None

    def as_dict(self) -> dict:
        d = {
            "S": self.s_value,
            "C1": self.correlations[0],
            "C2": self.correlations[1],
            "C3": self.correlations[2],
            "C4": self.correlations[3],
            "sigma_S": self.sigma_s,
            "P_CHS": self.p_chs,
            "Z_prime": self.z_prime,
            "mode": self.mode,
        }
        if self.settings is not None:
            d["angles"] = [float(x) for x in self.settings.as_vector()]
        if self.optimal_t is not None:
            d["T"] = self.optimal_t
        return d


def joint_probability(source, settings: MeasurementSettings) -> np.ndarray:
    """P(x, y) for x, y in (+, -) as a 2x2 array, heralding mass included.

    ``source`` is either a 4x4 density matrix over HH, HV, VH, VV (ideal
    local mode functions) or a :class:`~qdbell.events.Kernel`.
    """
    if isinstance(source, Kernel):
        return source.outcome_tables(settings)[:2, :2]
    rho = np.asarray(source, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError(f"density matrix must be 4x4, got {rho.shape}")
    ua, ub = settings.unitaries()
    u = np.kron(ua, ub)
    out = np.real(np.diag(u @ rho @ u.conj().T))
    return out.reshape(2, 2)


def correlation(p: np.ndarray, p_success: float) -> float:
    """(P++ - P+- - P-+ + P--) / p_success."""
    if not p_success > 0:
        raise ValidityError("success probability must be positive")
    p = np.asarray(p, dtype=float).reshape(2, 2)
    return float((p[0, 0] - p[0, 1] - p[1, 0] + p[1, 1]) / p_success)


def _mode_table(ps: ProbabilitySet, mode: Mode) -> tuple[np.ndarray, float]:
    if mode == "postselected":
        return ps.p_xy, float(ps.p_xy.sum())
    if mode == "assigned":
        return apply_assignment_strategy(ps), ps.p_chs
    raise ValueError(f"unknown mode {mode!r}")


def z_per_run(s_value: float, sigma_s: float, p_chs: float) -> float:
    """Violation in standard deviations per square-root run, (S-2)/(2 sigma_S) * sqrt(P_CHS).

    Signed: negative when there is no violation.
    """
    if sigma_s <= 0:
        return math.inf if s_value > 2 else 0.0
    return (s_value - 2.0) / (2.0 * sigma_s) * math.sqrt(p_chs)


def chsh_from_tables(tables, mode: Mode, settings: ChshSettings | None = None) -> ChshResult:
    """S and its statistics from four outcome tables (OUTCOMES order)."""
    cs = []
    p_chs = None
    for t in tables:
        ps = ProbabilitySet.from_outcome_table(t)
        p_chs = ps.p_chs
        table, p_success = _mode_table(ps, mode)
        cs.append(correlation(table, p_success))
    s = abs(cs[0] + cs[1] + cs[2] - cs[3])
    var = max(0.0, 4.0 - sum(c * c for c in cs))
    sigma = math.sqrt(var)
    return ChshResult(s, tuple(cs), sigma, p_chs, z_per_run(s, sigma, p_chs), mode, settings)


def chsh_value(params: ProtocolParams | Kernel, settings: ChshSettings, mode: Mode = "postselected") -> ChshResult:
    """CHSH value S = |C(a,b) + C(a',b) + C(a,b') - C(a',b')|.

    Postselected mode normalizes each correlation by its conclusive mass;
    assigned mode maps every inconclusive station result to + and
    normalizes by the heralding probability.
    """
    kern = params if isinstance(params, Kernel) else params.kernel()
    tables = [kern.outcome_tables(st) for st in settings.settings()]
    return chsh_from_tables(tables, mode, settings)


def runs_needed(z_target: float, z_prime: float) -> int:
    """Runs for a violation by ``z_target`` standard deviations."""
    if not z_prime > 0:
        raise InfeasibleError(f"no violation (Z'={z_prime}), the run count is unbounded")
    return int(math.ceil((z_target / z_prime) ** 2))


def run_time_seconds(n_runs: int, rate_hz: float = 75e6) -> float:
    return n_runs / rate_hz


def link_length_km(eta_t: float, attenuation_length_km: float = 20.0) -> float:
    """Station-to-HS distance giving transmission ``eta_t`` (Alice-Bob separation is twice this)."""
    if not 0 < eta_t <= 1:
        raise ValueError(f"eta_t must lie in (0, 1], got {eta_t}")
    return -attenuation_length_km * math.log(eta_t)
