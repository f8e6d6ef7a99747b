"""Command-line entry point: scenarios, sweeps, thresholds and oracle checks.

Every command reads an optional JSON config (unknown keys are rejected),
writes CSV for tables and JSON for single results, to ``--out`` or stdout.

Exit codes: 0 success, 2 config error, 3 infeasible or invalid parameters,
4 oracle mismatch.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .chsh import chsh_value, link_length_km, run_time_seconds, runs_needed
from .equivalence import SWAPPED_REFLECTION, run_equivalence_suite
from .events import ValidityError
from .model import ChshSettings
from .noise import (
    InfeasibleError,
    NoiseParams,
    cross_visibility,
    local_visibility,
    moment_table,
)
from .optimize import (
    AXES,
    BracketError,
    OptimizeConfig,
    Scenario,
    ThresholdQuery,
    optimize_angles,
    optimize_transmittance,
    threshold,
)

__all__ = ["main", "ConfigError", "ScenarioConfig", "load_config", "RESULT_FIELDS"]

log = logging.getLogger("qdbell")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_MISMATCH = 0, 2, 3, 4

ANGLE_FIELDS = ("qwp_a", "hwp_a", "qwp_a2", "hwp_a2", "qwp_b", "hwp_b", "qwp_b2", "hwp_b2")
RESULT_FIELDS = ("S", "C1", "C2", "C3", "C4", "sigma_S", "P_CHS", "Z_prime") + ANGLE_FIELDS + ("T_opt",)


class ConfigError(ValueError):
    """Bad or inconsistent configuration."""


# --------------------------------------------------------------------------
# config
# --------------------------------------------------------------------------

_SCHEMA: dict[str, Any] = {
    "seed": int,
    "mode": str,
    "source": {"v_alpha": float, "v_beta": (float, type(None))},
    "noise": {"units": str, "gamma": float, "gamma_d": float, "sigma": float},
    "purity": {"g2": float},
    "setup": {"T": float, "eta_t": float, "eta1": (float, list), "eta2": (float, list), "eta_l": (float, type(None))},
    "optimizer": {"restarts": int, "xatol": float, "fatol": float, "max_evals": int},
    "angles": list,
    "sweep": {"axes": list, "optimize_t": bool},
    "threshold": {"axis": str, "bracket": list, "tol": float, "target": float},
    "optimize_t": {"bounds": list, "tol": float},
    "runs": {"z": float, "rate_hz": float, "attenuation_km": float, "z_prime": float},
    "moments": {"gamma_d": list, "sigma": list},
    "oracle": {"n_grams": int, "tolerance": float, "moments": bool, "negative_control": bool},
}


def _check_type(path: str, value, expected) -> None:
    types = expected if isinstance(expected, tuple) else (expected,)
    if isinstance(value, bool):
        ok = bool in types
    else:
        ok = isinstance(value, types) or (float in types and isinstance(value, int))
    if not ok:
        names = "/".join(t.__name__ for t in types)
        raise ConfigError(f"{path}: expected {names}, got {type(value).__name__}")


def _validate(doc: dict, schema: dict, prefix: str = "") -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"{prefix or 'config'}: expected an object")
    unknown = sorted(set(doc) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join(prefix + k for k in unknown)}")
    for key, value in doc.items():
        rule = schema[key]
        if isinstance(rule, dict):
            _validate(value, rule, prefix + key + ".")
        else:
            _check_type(prefix + key, value, rule)


@dataclass
class ScenarioConfig:
    """Validated config document plus command-line overrides."""

    doc: dict = field(default_factory=dict)
    seed: int = 0
    threads: int = 1

    def section(self, name: str) -> dict:
        return dict(self.doc.get(name, {}))

    @property
    def mode(self) -> str:
        mode = self.doc.get("mode", "postselected")
        if mode not in ("postselected", "assigned"):
            raise ConfigError(f"mode must be 'postselected' or 'assigned', got {mode!r}")
        return mode

    def optimizer(self) -> OptimizeConfig:
        return OptimizeConfig(seed=self.seed, **self.section("optimizer"))

    def scenario(self) -> Scenario:
        src, noise, setup = self.section("source"), self.section("noise"), self.section("setup")
        if src and noise:
            raise ConfigError("give either 'source' visibilities or explicit 'noise' rates, not both")
        kw: dict[str, Any] = {}
        if noise:
            if noise.pop("units", "gamma") != "gamma":
                raise ConfigError("noise.units must be 'gamma' (rates relative to the emission rate)")
            kw["noise"] = NoiseParams(**noise)
        kw.update(src)
        kw["g2"] = self.section("purity").get("g2", 0.0)
        for k, v in setup.items():
            kw[k] = tuple(v) if isinstance(v, list) else v
        sc = Scenario(**kw)
        sc.params()  # validate now, before any work
        return sc


def load_config(path: str | None, seed: int | None = None, threads: int | None = None) -> ScenarioConfig:
    doc: dict = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    _validate(doc, _SCHEMA)
    seed = seed if seed is not None else doc.get("seed", 0)
    if seed < 0:
        raise ConfigError("seed must be non-negative")
    threads = threads if threads is not None else (os.cpu_count() or 1)
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    return ScenarioConfig(doc, seed, threads)


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _write_json(obj: dict, out: str | None) -> None:
    _write(json.dumps(obj, indent=2, sort_keys=False) + "\n", out)


def _write_csv(header, rows, out: str | None) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    _write(buf.getvalue(), out)


def _result_row(res, settings: ChshSettings | None) -> list:
    angles = list(settings.as_vector()) if settings is not None else [None] * 8
    return [res.s_value, *res.correlations, res.sigma_s, res.p_chs, res.z_prime, *angles, res.optimal_t]


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_moments(cfg: ScenarioConfig, out: str | None) -> int:
    sec = cfg.section("moments")
    gds = sec.get("gamma_d", [0.0, 0.05, 0.1, 0.2])
    sigmas = sec.get("sigma", [round(0.1 * k, 10) for k in range(21)])
    if not gds or not sigmas:
        raise ConfigError("moments.gamma_d and moments.sigma must be non-empty")
    names = list(moment_table(NoiseParams()).as_dict())
    rows = []
    for gd in gds:
        for s in sigmas:
            noise = NoiseParams(1.0, float(gd), float(s))
            m = moment_table(noise).as_dict()
            rows.append([float(s), float(gd), local_visibility(noise), cross_visibility(noise), *m.values()])
    _write_csv(["sigma", "gamma_d", "V_alpha", "V_beta", *names], rows, out)
    return EXIT_OK


def cmd_chsh(cfg: ScenarioConfig, out: str | None) -> int:
    sc = cfg.scenario()
    angles = cfg.doc.get("angles")
    t0 = time.perf_counter()
    if angles is not None:
        if len(angles) != 8:
            raise ConfigError("angles must hold 8 values (QWP, HWP for a, a', b, b')")
        settings = ChshSettings.from_vector(np.asarray(angles, dtype=float))
        res = chsh_value(sc.params(), settings, cfg.mode)
    else:
        settings, res = optimize_angles(sc.params(), cfg.mode, cfg.optimizer())
    d = res.as_dict()
    d["wall_time_s"] = time.perf_counter() - t0
    _write_json(d, out)
    return EXIT_OK


def _sweep_values(axes: list) -> list[tuple[str, list[float]]]:
    if not axes:
        raise ConfigError("sweep.axes is empty")
    parsed = []
    for n, ax in enumerate(axes):
        if not isinstance(ax, dict) or "axis" not in ax:
            raise ConfigError(f"sweep.axes[{n}] must be an object with an 'axis' key")
        extra = set(ax) - {"axis", "values", "start", "stop", "num"}
        if extra:
            raise ConfigError(f"unknown key(s) in sweep.axes[{n}]: {sorted(extra)}")
        name = ax["axis"]
        if name not in AXES:
            raise ConfigError(f"sweep.axes[{n}]: unknown axis {name!r}; choose from {sorted(AXES)}")
        if "values" in ax:
            vals = [float(v) for v in ax["values"]]
        else:
            try:
                vals = [float(v) for v in np.linspace(ax["start"], ax["stop"], int(ax["num"]))]
            except KeyError as exc:
                raise ConfigError(f"sweep.axes[{n}] needs 'values' or start/stop/num") from exc
        if not vals:
            raise ConfigError(f"sweep.axes[{n}] has no points")
        parsed.append((name, vals))
    return parsed


def _sweep_point(job):
    """One sweep point; module-level so worker processes can run it."""
    scenario, mode, opt, optimize_t = job
    if optimize_t:
        res = optimize_transmittance(scenario, mode, replace(opt, restarts=max(1, opt.restarts // 4)))
        return _result_row(res, res.settings)
    settings, res = optimize_angles(scenario.params(), mode, opt)
    return _result_row(res, settings)


def cmd_sweep(cfg: ScenarioConfig, out: str | None) -> int:
    sec = cfg.section("sweep")
    axes = _sweep_values(sec.get("axes", []))
    base, mode, opt = cfg.scenario(), cfg.mode, cfg.optimizer()
    grid = [[]]
    for _, vals in axes:
        grid = [g + [v] for g in grid for v in vals]
    jobs, points = [], []
    for point in grid:
        sc = base
        for (name, _), v in zip(axes, point):
            sc = sc.with_axis(name, v)
        sc.params()
        jobs.append((sc, mode, opt, bool(sec.get("optimize_t", False))))
        points.append(point)
    t0 = time.perf_counter()
    if cfg.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    log.info("sweep of %d points took %.2f s", len(jobs), time.perf_counter() - t0)
    rows = [p + r for p, r in zip(points, results)]
    _write_csv([name for name, _ in axes] + list(RESULT_FIELDS), rows, out)
    return EXIT_OK


def cmd_threshold(cfg: ScenarioConfig, out: str | None) -> int:
    sec = cfg.section("threshold")
    if "axis" not in sec or "bracket" not in sec:
        raise ConfigError("threshold needs 'axis' and 'bracket'")
    if len(sec["bracket"]) != 2:
        raise ConfigError("threshold.bracket must hold two values")
    opt = cfg.section("optimizer")
    query = ThresholdQuery(
        axis=sec["axis"],
        scenario=cfg.scenario(),
        bracket=(float(sec["bracket"][0]), float(sec["bracket"][1])),
        mode=cfg.mode,
        target=sec.get("target", 2.0),
        tol=sec.get("tol", 1e-4),
        config=OptimizeConfig(seed=cfg.seed, **{"restarts": 4, **opt}),
    )
    t0 = time.perf_counter()
    value = threshold(query)
    _write_json(
        {
            "axis": query.axis,
            "threshold": value,
            "bracket": list(query.bracket),
            "tol": query.tol,
            "target": query.target,
            "mode": query.mode,
            "wall_time_s": time.perf_counter() - t0,
        },
        out,
    )
    return EXIT_OK


def _best_t(cfg: ScenarioConfig):
    sec = cfg.section("optimize_t")
    bounds = tuple(sec.get("bounds", (1e-4, 0.5)))
    if len(bounds) != 2 or not 0 < bounds[0] < bounds[1] < 1:
        raise ConfigError("optimize_t.bounds must be two values with 0 < lo < hi < 1")
    opt = OptimizeConfig(seed=cfg.seed, **{"restarts": 4, **cfg.section("optimizer")})
    return optimize_transmittance(cfg.scenario(), cfg.mode, opt, bounds, sec.get("tol", 1e-4))


def cmd_optimize_t(cfg: ScenarioConfig, out: str | None) -> int:
    t0 = time.perf_counter()
    res = _best_t(cfg)
    d = res.as_dict()
    d["wall_time_s"] = time.perf_counter() - t0
    _write_json(d, out)
    return EXIT_OK


def cmd_runs(cfg: ScenarioConfig, out: str | None) -> int:
    sec = cfg.section("runs")
    z = sec.get("z", 3.0)
    rate = sec.get("rate_hz", 75e6)
    att = sec.get("attenuation_km", 20.0)
    if "z_prime" in sec:
        z_prime, T = sec["z_prime"], None
    else:
        res = _best_t(cfg)
        z_prime, T = res.z_prime, res.optimal_t
    n = runs_needed(z, z_prime)
    eta_t = cfg.scenario().eta_t
    link = link_length_km(eta_t, att)
    seconds = run_time_seconds(n, rate)
    _write_json(
        {
            "Z": z,
            "Z_prime": z_prime,
            "T": T,
            "runs": n,
            "rate_hz": rate,
            "time_s": seconds,
            "time_min": seconds / 60.0,
            "eta_t": eta_t,
            "link_km": link,
            "separation_km": 2.0 * link,
        },
        out,
    )
    return EXIT_OK


def cmd_oracle_check(cfg: ScenarioConfig, out: str | None) -> int:
    sec = cfg.section("oracle")
    phase = SWAPPED_REFLECTION if sec.get("negative_control", False) else (1j, 1j, 1j, 1j)
    rep = run_equivalence_suite(
        sec.get("n_grams", 20),
        cfg.seed,
        tolerance=sec.get("tolerance", 1e-10),
        include_moments=sec.get("moments", True),
        reflection_phase=phase,
    )
    d = rep.as_dict()
    d["negative_control"] = bool(sec.get("negative_control", False))
    _write_json(d, out)
    return EXIT_OK if rep.ok else EXIT_MISMATCH


COMMANDS = {
    "moments": (cmd_moments, "moment table and visibilities over a (gamma_d, sigma) grid (CSV)"),
    "chsh": (cmd_chsh, "S and its statistics for one scenario (JSON)"),
    "sweep": (cmd_sweep, "optimized S over a grid of scenario axes (CSV)"),
    "threshold": (cmd_threshold, "where optimized S crosses 2 along one axis (JSON)"),
    "optimize-t": (cmd_optimize_t, "transmittance maximizing Z' (JSON)"),
    "oracle-check": (cmd_oracle_check, "engine versus Fock-space oracle deviations (JSON)"),
    "runs": (cmd_runs, "runs, measurement time and distance for a target significance (JSON)"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdbell", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--seed", type=int, help="seed for optimizer starts and random Gram matrices")
        p.add_argument("--threads", type=int, help="worker processes for sweeps (default: all cores)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handler = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.config, args.seed, args.threads)
        return handler(cfg, args.out)
    except (InfeasibleError, ValidityError, BracketError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
