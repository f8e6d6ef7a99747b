"""Maximization of S and Z' over waveplate angles and transmittance, and S = 2 thresholds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import optimize as sopt

from .chsh import ChshResult, Mode, ProtocolParams, chsh_from_tables
from .events import Kernel
from .model import ChshSettings, SetupParams, measurement_unitary
from .noise import InfeasibleError, NoiseParams

__all__ = [
    "OptimizeConfig",
    "Scenario",
    "AXES",
    "ThresholdQuery",
    "BracketError",
    "s_objective",
    "optimize_angles",
    "optimized_s",
    "threshold",
    "optimize_transmittance",
]


class BracketError(ValueError):
    """Raised when S - 2 does not change sign over a threshold bracket."""


@dataclass(frozen=True)
class OptimizeConfig:
    """Multi-restart Nelder-Mead settings.

    ``restarts`` seeded random starts in [0, pi)^8 are run, plus any warm
    starts handed to :func:`optimize_angles`; the best result is polished by
    one more simplex run from its own point (and, in assigned mode, from its
    two single-station outcome relabelings).
    """

    restarts: int = 16
    xatol: float = 1e-9
    fatol: float = 1e-13
    max_evals: int = 20000
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if not (self.xatol > 0 and self.fatol > 0):
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class Scenario:
    """Source and setup parameters at the level quoted in experiments.

    ``v_alpha`` / ``v_beta`` are the visibilities of the pure single-photon
    part (same-dot and cross-dot); ``v_beta=None`` means equal to
    ``v_alpha``.  ``eta_l`` (if given) fixes eta1 * eta2 * (1 - T) by
    choosing eta2.  ``noise`` (if given) replaces the visibilities with
    explicit rates in units of gamma.
    """

    v_alpha: float = 1.0
    v_beta: float | None = None
    g2: float = 0.0
    T: float = 0.5
    eta_t: float = 1.0
    eta1: float = 1.0
    eta2: float = 1.0
    eta_l: float | None = None
    noise: NoiseParams | None = None

    def setup(self) -> SetupParams:
        if self.eta_l is not None:
            return SetupParams.from_local_efficiency(self.eta_l, self.T, self.eta_t, self.eta1)
        return SetupParams(self.T, self.eta_t, self.eta1, self.eta2)

    def params(self) -> ProtocolParams:
        if self.noise is not None:
            return ProtocolParams.from_noise(self.noise, self.g2, self.setup())
        return ProtocolParams.from_visibilities(self.v_alpha, self.v_beta, self.g2, self.setup())

    def with_axis(self, axis: str, value: float) -> "Scenario":
        if axis == "v":
            return replace(self, v_alpha=value, v_beta=None)
        if axis not in AXES:
            raise ValueError(f"unknown axis {axis!r}; choose from {sorted(AXES)}")
        if axis in ("gamma_d", "sigma"):
            return replace(self, noise=replace(self.noise or NoiseParams(), **{axis: value}))
        return replace(self, **{axis: value})


#: sweepable scenario fields; "v" moves both visibilities together,
#: "gamma_d" and "sigma" switch to explicit noise rates
AXES = {"v", "v_alpha", "v_beta", "g2", "T", "eta_t", "eta1", "eta2", "eta_l", "gamma_d", "sigma"}


def s_objective(kernel: Kernel, mode: Mode) -> Callable[[np.ndarray], float]:
    """Fast S(angles) for the 8-vector (a, a', b, b'), each (QWP, HWP)."""

    def f(x):
        wa = np.stack([kernel.weights(measurement_unitary(x[0], x[1])), kernel.weights(measurement_unitary(x[2], x[3]))])
        wb = np.stack([kernel.weights(measurement_unitary(x[4], x[5])), kernel.weights(measurement_unitary(x[6], x[7]))])
        t = np.einsum("xsa,st,ytb->xyab", wa, kernel.K, wb).real
        if mode == "postselected":
            pxy = t[:, :, :2, :2]
            norm = pxy.sum(axis=(2, 3))
        else:
            pxy = t[:, :, :2, :2].copy()
            pxy[:, :, :, 0] += t[:, :, :2, 2:].sum(axis=3)
            pxy[:, :, 0, :] += t[:, :, 2:, :2].sum(axis=2)
            pxy[:, :, 0, 0] += t[:, :, 2:, 2:].sum(axis=(2, 3))
            norm = t.sum(axis=(2, 3))
        c = (pxy[..., 0, 0] - pxy[..., 0, 1] - pxy[..., 1, 0] + pxy[..., 1, 1]) / norm
        # order (a,b), (a',b), (a,b'), (a',b')
        return abs(c[0, 0] + c[1, 0] + c[0, 1] - c[1, 1])

    return f


#: HWP entries of the angle vector for Alice's and Bob's two settings
_STATION_HWPS = ((1, 3), (5, 7))


def _nelder_mead(f, x0, cfg: OptimizeConfig):
    res = sopt.minimize(
        lambda x: -f(x),
        x0,
        method="Nelder-Mead",
        options={"xatol": cfg.xatol, "fatol": cfg.fatol, "maxfev": cfg.max_evals, "adaptive": True},
    )
    return np.mod(res.x, math.pi), -res.fun


def optimize_angles(
    params: ProtocolParams | Kernel,
    mode: Mode = "postselected",
    config: OptimizeConfig | None = None,
    warm_starts: Sequence[np.ndarray] = (),
) -> tuple[ChshSettings, ChshResult]:
    """Best S over all eight waveplate angles."""
    cfg = config or OptimizeConfig()
    kernel = params if isinstance(params, Kernel) else params.kernel()
    f = s_objective(kernel, mode)
    rng = np.random.default_rng(cfg.seed)
    starts = [np.asarray(w, dtype=float) for w in warm_starts]
    starts += list(rng.uniform(0.0, math.pi, size=(cfg.restarts, 8)))
    best_x, best_s = None, -math.inf
    for x0 in starts:
        x, s = _nelder_mead(f, x0, cfg)
        if s > best_s:
            best_x, best_s = x, s
    polish = [best_x]
    if mode == "assigned":
        # inconclusive results count as +, so relabeling one station's outcomes
        # (HWP + pi/4) leads to a different basin; try it from the best point
        for idx in _STATION_HWPS:
            y = best_x.copy()
            y[list(idx)] += math.pi / 4
            polish.append(y)
    for x0 in polish:
        x, s = _nelder_mead(f, x0, cfg)
        if s >= best_s:
            best_x, best_s = x, s
    settings = ChshSettings.from_vector(best_x)
    tables = [kernel.outcome_tables(st) for st in settings.settings()]
    return settings, chsh_from_tables(tables, mode, settings)


def optimized_s(scenario: Scenario, mode: Mode, config: OptimizeConfig | None = None, warm_starts=()) -> ChshResult:
    return optimize_angles(scenario.params(), mode, config, warm_starts)[1]


@dataclass(frozen=True)
class ThresholdQuery:
    """Where along ``axis`` the optimized S crosses ``target``.

    ``bracket`` must contain one violating and one non-violating end.
    """

    axis: str
    scenario: Scenario
    bracket: tuple[float, float]
    mode: Mode = "postselected"
    target: float = 2.0
    tol: float = 1e-4
    config: OptimizeConfig = field(default_factory=lambda: OptimizeConfig(restarts=4))

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"unknown axis {self.axis!r}; choose from {sorted(AXES)}")


def threshold(query: ThresholdQuery) -> float:
    """Bisection on optimized S - target; returns the violating end of the final bracket.

    Angles found at one point seed the next optimization.
    """
    lo, hi = query.bracket
    warm: list[np.ndarray] = []

    def excess(v):
        settings, res = optimize_angles(query.scenario.with_axis(query.axis, v).params(), query.mode, query.config, warm[-1:])
        warm.append(settings.as_vector())
        return res.s_value - query.target

    f_lo, f_hi = excess(lo), excess(hi)
    if (f_lo > 0) == (f_hi > 0):
        raise BracketError(
            f"S - {query.target} has the same sign at {query.axis}={lo} ({f_lo:+.3g}) and {hi} ({f_hi:+.3g})"
        )
    while abs(hi - lo) > query.tol:
        mid = 0.5 * (lo + hi)
        f_mid = excess(mid)
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    return lo if f_lo > 0 else hi


def optimize_transmittance(
    scenario: Scenario,
    mode: Mode = "assigned",
    config: OptimizeConfig | None = None,
    bounds: tuple[float, float] = (1e-4, 0.5),
    tol: float = 1e-4,
) -> ChshResult:
    """T maximizing Z' (angles re-optimized at every T), by bounded Brent search."""
    cfg = config or OptimizeConfig(restarts=4)
    warm: list[np.ndarray] = []
    cache: dict[float, ChshResult] = {}

    def neg_z(T):
        settings, res = optimize_angles(scenario.with_axis("T", T).params(), mode, cfg, warm[-1:])
        warm.append(settings.as_vector())
        cache[T] = res
        return -res.z_prime

    out = sopt.minimize_scalar(neg_z, bounds=bounds, method="bounded", options={"xatol": tol})
    T_best = float(out.x)
    res = cache.get(T_best) or optimize_angles(scenario.with_axis("T", T_best).params(), mode, cfg, warm[-1:])[1]
    if not res.z_prime > 0:
        raise InfeasibleError(f"no CHSH violation for any T in {bounds}")
    return replace(res, optimal_t=T_best)
