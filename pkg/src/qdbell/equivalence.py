"""Cross-checks between the symbolic engine and the Fock-space oracle.

Each check returns the largest absolute deviation it saw, so the same code
backs the test suite and the ``oracle-check`` command.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .contraction import chs_expectation, conditioned_density_matrix
from .events import _tag_mask, compiled_model
from .fock_oracle import (
    oracle_chs_expectation,
    oracle_conditioned_state,
    oracle_event_tables,
    random_gram,
)
from .model import MeasurementSettings, SetupParams, extra_label
from .noise import NoiseParams, moment_table, oracle_moment_table

__all__ = [
    "SWAPPED_REFLECTION",
    "MOMENT_GRID",
    "density_matrix_deviation",
    "expectation_deviation",
    "event_deviation",
    "moment_grid_deviation",
    "random_setup",
    "random_angles",
    "EquivalenceReport",
    "run_equivalence_suite",
]

#: reflection factors that flip one source's phase; breaks agreement on purpose
SWAPPED_REFLECTION = (1j, -1j, 1j, 1j)

#: (gamma_d, sigma) points, rates in units of gamma
MOMENT_GRID = tuple(itertools.product((0.0, 0.1, 0.5, 1.0, 2.0), (0.0, 0.05, 0.5, 1.0, 3.0)))


def random_setup(rng: np.random.Generator) -> SetupParams:
    """Efficiencies drawn per source so that asymmetric bookkeeping shows up."""
    return SetupParams(
        T=float(rng.uniform(0.1, 0.9)),
        eta_t=float(rng.uniform(0.2, 1.0)),
        eta1=tuple(rng.uniform(0.3, 1.0, 4)),
        eta2=tuple(rng.uniform(0.3, 1.0, 4)),
    )


def random_angles(rng: np.random.Generator) -> MeasurementSettings:
    return MeasurementSettings(*rng.uniform(0.0, np.pi, 4))


def density_matrix_deviation(gram, setup: SetupParams, **oracle_kw) -> float:
    engine = conditioned_density_matrix().evaluate(gram, setup)
    oracle = oracle_conditioned_state(gram, setup, **oracle_kw)
    return float(np.abs(engine - oracle).max())


def _expectation_cases():
    pairs = [
        (bra, ket)
        for bra in itertools.permutations((1, 2, 3, 4), 2)
        for ket in itertools.permutations((1, 2, 3, 4), 2)
    ]
    pool = (1, 2, 3, 4) + tuple(extra_label(s) for s in (1, 2, 3, 4))
    triples = [(t, t) for t in itertools.combinations(pool, 3) if sum(isinstance(p, str) for p in t) <= 1]
    return pairs + triples


def expectation_deviation(gram) -> float:
    """All conditioned pair expectations and same-set triple expectations."""
    worst = 0.0
    for bra, ket in _expectation_cases():
        sym = chs_expectation(bra, ket).evaluate(gram)
        worst = max(worst, abs(sym - oracle_chs_expectation(bra, ket, gram)))
    return float(worst)


def event_deviation(gram, setup: SetupParams, angles: MeasurementSettings, **oracle_kw) -> float:
    """Every 4- and 5-photon routing row, all 16 station-outcome cells."""
    model = compiled_model()
    engine = model.kernel(setup, None, gram).outcome_tables(angles)
    oracle = oracle_event_tables(model.events, gram, setup, angles, **oracle_kw)
    masks = np.array([_tag_mask(e) for e in model.events])
    return float(np.abs(np.where(masks, engine - oracle, 0.0)).max())


def moment_grid_deviation(grid=MOMENT_GRID) -> float:
    """Closed-form moments against direct quadrature."""
    worst = 0.0
    for gd, s in grid:
        noise = NoiseParams(1.0, gd, s)
        a = np.array(list(moment_table(noise).as_dict().values()))
        b = np.array(list(oracle_moment_table(noise).as_dict().values()))
        worst = max(worst, float(np.abs(a - b).max()))
    return worst


@dataclass
class EquivalenceReport:
    n_grams: int
    seed: int
    density_matrix: float = 0.0
    expectations: float = 0.0
    events: float = 0.0
    moments: float | None = None
    tolerance: float = 1e-10
    moment_tolerance: float = 1e-6
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def as_dict(self) -> dict:
        return {
            "n_grams": self.n_grams,
            "seed": self.seed,
            "max_dev_density_matrix": self.density_matrix,
            "max_dev_expectations": self.expectations,
            "max_dev_events": self.events,
            "max_dev_moments": self.moments,
            "tolerance": self.tolerance,
            "moment_tolerance": self.moment_tolerance,
            "ok": self.ok,
            "failures": list(self.failures),
        }


def run_equivalence_suite(
    n_grams: int = 20,
    seed: int = 0,
    *,
    tolerance: float = 1e-10,
    include_moments: bool = True,
    reflection_phase=(1j, 1j, 1j, 1j),
) -> EquivalenceReport:
    """Random complex Gram matrices, random setups and angles, all comparisons.

    ``reflection_phase`` is forwarded to the oracle; pass
    :data:`SWAPPED_REFLECTION` to see the suite fail.
    """
    rng = np.random.default_rng(seed)
    rep = EquivalenceReport(n_grams, seed, tolerance=tolerance)
    kw = dict(reflection_phase=tuple(reflection_phase))
    for _ in range(n_grams):
        g = random_gram(rng)
        setup = random_setup(rng)
        angles = random_angles(rng)
        rep.density_matrix = max(rep.density_matrix, density_matrix_deviation(g, setup, **kw))
        rep.expectations = max(rep.expectations, expectation_deviation(g))
        rep.events = max(rep.events, event_deviation(g, setup, angles, **kw))
    for name in ("density_matrix", "expectations", "events"):
        if getattr(rep, name) > tolerance:
            rep.failures.append(name)
    if include_moments:
        rep.moments = moment_grid_deviation()
        if rep.moments > rep.moment_tolerance:
            rep.failures.append("moments")
    return rep
