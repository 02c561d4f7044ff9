"""Config-driven sweeps: load an experiment file, run grid points, write CSVs.

The config is JSON.  Every physical input is in rescaled units (``t_tilde``,
``kappa_noise2``, ``N``); internally ``gamma_lo = omega0 = 1`` so that
``T = t_tilde``.

Example::

    {
      "kind": "t-sweep",
      "grid": {"t_tilde": [0.05, 0.1, 0.2, 0.4, 0.8], "n_atoms": [10000]},
      "trajectories": 32,
      "cycles": 10000
    }
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analytics
from .analytics import COHERENT_SEEDED, MODES, cascade_plan
from .clock_engine import LOOP_MODES, OPEN_LOOP, make_config, run_trajectory
from .exact_oracle import (
    N_MAX,
    build_pseudo_squeezed_state,
    exact_moments,
    outcome_pmf,
    ramsey_evolve,
)
from .noise_lo import NoiseSpec, estimate_psd, synthesize_flicker
from .spin_ensemble import EnsembleSpec, analytic_moments, outcome_stats
from .stability import STABILITY_HEADER, StabilityPoint, aggregate, trajectory_sigma2_tilde

log = logging.getLogger(__name__)

KINDS = ("t-sweep", "n-sweep", "feedback-noise-sweep", "validate-oracle", "spectrum-check")
SQUEEZING_RULES = ("numeric", "asymptotic")
OUTPUT_ENV = "HYBRIDCLOCK_OUTPUT_DIR"

SUMMARY_HEADER = [
    "mode", "nu", "N", "kappa_noise2", "t_tilde", "squeezing",
    "sigma2_tilde", "inv_sigma2_tilde", "std_error", "analytic_sigma2_tilde", "n_traj", "n_cycles",
]

_GRID_DEFAULTS = {
    "t_tilde": [0.1],
    "n_atoms": [10000],
    "nu": [0],
    "mode": [COHERENT_SEEDED],
    "kappa_noise2": [0.0],
    "squeezing": [1.0],
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    t_tilde: tuple = (0.1,)
    n_atoms: tuple = (10000,)
    nu: tuple = (0,)
    mode: tuple = (COHERENT_SEEDED,)
    kappa_noise2: tuple = (0.0,)
    squeezing: tuple = (1.0,)
    squeezing_rule: str = "numeric"
    trajectories: int = 32
    cycles: int = 10000
    cycles_per_block: int = 10
    samples_per_cycle: int = 64
    window_factor: int = 1
    loop_mode: str = OPEN_LOOP
    seed: int = 0
    output_dir: str = "output"
    spectrum_samples: int = 2**20
    spectrum_seeds: int = 100
    spectrum_exponent: float = 1.0
    oracle_theta: float = 0.1
    warnings: tuple = field(default=(), compare=False)

    def points(self):
        """Simulation grid points as (mode, nu, N, kappa_noise2, t_tilde)."""
        return list(itertools.product(self.mode, self.nu, self.n_atoms, self.kappa_noise2, self.t_tilde))


# -- config loading -------------------------------------------------------------


def _pairs_hook(warnings: list):
    def hook(pairs):
        out = {}
        for key, value in pairs:
            if key in out:
                msg = f"duplicate field {key!r}: last value wins"
                warnings.append(msg)
                log.warning(msg)
            out[key] = value
        return out

    return hook


def _as_list(name, value):
    if isinstance(value, list):
        if not value:
            raise ConfigError(f"grid.{name}: must be non-empty")
        return value
    return [value]


def _positive_int(name, v, minimum=1):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v) or v < minimum:
        raise ConfigError(f"{name}: must be an integer >= {minimum}, got {v!r}")
    return int(v)


def _positive_float(name, v, allow_zero=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{name}: must be a finite number, got {v!r}")
    if v < 0 or (v == 0 and not allow_zero):
        raise ConfigError(f"{name}: must be {'>= 0' if allow_zero else '> 0'}, got {v!r}")
    return float(v)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    warnings: list[str] = []
    try:
        raw = json.loads(text, object_pairs_hook=_pairs_hook(warnings))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be an object")

    known = {
        "kind", "grid", "squeezing_rule", "trajectories", "cycles", "cycles_per_block",
        "samples_per_cycle", "window_factor", "loop_mode", "seed", "output_dir", "spectrum", "oracle",
    }
    for key in raw:
        if key not in known:
            raise ConfigError(f"{key}: unknown field")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind: must be one of {KINDS}, got {kind!r}")

    grid = raw.get("grid", {})
    if not isinstance(grid, dict):
        raise ConfigError("grid: must be an object")
    for key in grid:
        if key not in _GRID_DEFAULTS:
            raise ConfigError(f"grid.{key}: unknown grid axis")
    g = {k: _as_list(k, grid.get(k, v)) for k, v in _GRID_DEFAULTS.items()}

    kw = {
        "kind": kind,
        "t_tilde": tuple(_positive_float(f"grid.t_tilde[{i}]", v) for i, v in enumerate(g["t_tilde"])),
        "n_atoms": tuple(_positive_int(f"grid.n_atoms[{i}]", round(v) if isinstance(v, float) and v > 0 else v)
                         for i, v in enumerate(g["n_atoms"])),
        "nu": tuple(_positive_int(f"grid.nu[{i}]", v, minimum=0) for i, v in enumerate(g["nu"])),
        "kappa_noise2": tuple(
            _positive_float(f"grid.kappa_noise2[{i}]", v, allow_zero=True) for i, v in enumerate(g["kappa_noise2"])
        ),
        "squeezing": tuple(_positive_float(f"grid.squeezing[{i}]", v) for i, v in enumerate(g["squeezing"])),
    }
    for i, m in enumerate(g["mode"]):
        if m not in MODES:
            raise ConfigError(f"grid.mode[{i}]: must be one of {MODES}, got {m!r}")
    kw["mode"] = tuple(g["mode"])

    if "squeezing_rule" in raw:
        if raw["squeezing_rule"] not in SQUEEZING_RULES:
            raise ConfigError(f"squeezing_rule: must be one of {SQUEEZING_RULES}")
        kw["squeezing_rule"] = raw["squeezing_rule"]
    for name in ("trajectories", "cycles_per_block", "samples_per_cycle", "window_factor"):
        if name in raw:
            kw[name] = _positive_int(name, raw[name])
    if "cycles" in raw:
        kw["cycles"] = _positive_int("cycles", raw["cycles"], minimum=2)
    if "seed" in raw:
        kw["seed"] = _positive_int("seed", raw["seed"], minimum=0)
    if "loop_mode" in raw:
        if raw["loop_mode"] not in LOOP_MODES:
            raise ConfigError(f"loop_mode: must be one of {LOOP_MODES}")
        kw["loop_mode"] = raw["loop_mode"]
    if "output_dir" in raw:
        if not isinstance(raw["output_dir"], str):
            raise ConfigError("output_dir: must be a string")
        kw["output_dir"] = raw["output_dir"]

    spectrum = raw.get("spectrum", {})
    if "n_samples" in spectrum:
        n = _positive_int("spectrum.n_samples", spectrum["n_samples"], minimum=8)
        if n & (n - 1):
            raise ConfigError("spectrum.n_samples: must be a power of two")
        kw["spectrum_samples"] = n
    if "seeds" in spectrum:
        kw["spectrum_seeds"] = _positive_int("spectrum.seeds", spectrum["seeds"])
    if "exponent" in spectrum:
        kw["spectrum_exponent"] = _positive_float("spectrum.exponent", spectrum["exponent"], allow_zero=True)
    oracle = raw.get("oracle", {})
    if "theta" in oracle:
        kw["oracle_theta"] = float(oracle["theta"])

    if 2 * kw.get("cycles_per_block", 10) > kw.get("cycles", 10000):
        raise ConfigError("cycles_per_block: at least two blocks per trajectory are required")
    if kind == "validate-oracle" and max(kw["n_atoms"]) > N_MAX:
        raise ConfigError(f"grid.n_atoms: exact oracle is limited to N <= {N_MAX}")
    return ExperimentConfig(**kw, warnings=tuple(warnings))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path))


# -- seeds ----------------------------------------------------------------------


def point_seed(base_seed: int, coords: tuple, trajectory: int) -> int:
    """Stable 64-bit seed from the base seed, grid coordinates and trajectory index.

    Depends only on values, never on grid order or worker count.
    """
    key = "|".join([str(base_seed), *(repr(c) for c in coords), str(trajectory)])
    return int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "little")


# -- simulation -----------------------------------------------------------------


@dataclass(frozen=True)
class PointResult:
    mode: str
    nu: int
    n_atoms: int
    kappa_noise2: float
    t_tilde: float
    squeezings: tuple
    point: StabilityPoint
    analytic_sigma2_tilde: float


def plan_for(cfg: ExperimentConfig, mode: str, nu: int, n_atoms: int, t_tilde: float):
    return cascade_plan(mode, nu, n_atoms, t_tilde, corrections=cfg.squeezing_rule == "numeric")


def simulate_trajectory(cfg: ExperimentConfig, coords: tuple, trajectory: int) -> float:
    mode, nu, n_atoms, kappa_noise2, t_tilde = coords
    plan = plan_for(cfg, mode, nu, n_atoms, t_tilde)
    clock = make_config(
        plan.ensembles(),
        t_tilde,
        cfg.cycles,
        kappa_noise2=kappa_noise2,
        loop_mode=cfg.loop_mode,
        seed=point_seed(cfg.seed, coords, trajectory),
        samples_per_cycle=cfg.samples_per_cycle,
        window_factor=cfg.window_factor,
    )
    return trajectory_sigma2_tilde(run_trajectory(clock), t_tilde, cfg.cycles_per_block)


def analytic_point(cfg: ExperimentConfig, coords: tuple) -> tuple[tuple, float]:
    """Stage squeezings and the model sigma2_tilde for one grid point."""
    mode, nu, n_atoms, kappa_noise2, t_tilde = coords
    plan = plan_for(cfg, mode, nu, n_atoms, t_tilde)
    phase_var = analytics.cascade_phase_variance_with_dephasing(plan, kappa_noise2)
    return tuple(plan.squeezings), phase_var / t_tilde


def simulate_grid(cfg: ExperimentConfig, threads: int = 1) -> list[PointResult]:
    points = cfg.points()
    tasks = [(p, j) for p in points for j in range(cfg.trajectories)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(lambda t: simulate_trajectory(cfg, *t), tasks))
    else:
        values = [simulate_trajectory(cfg, *t) for t in tasks]
    by_point: dict = {}
    for (p, j), v in zip(tasks, values):
        by_point.setdefault(p, [None] * cfg.trajectories)[j] = v
    results = []
    for p in points:
        squeezings, model = analytic_point(cfg, p)
        stab = aggregate(by_point[p], p[4], cfg.cycles)
        results.append(PointResult(p[0], p[1], p[2], p[3], p[4], squeezings, stab, model))
    return results


def _fmt(x: float) -> str:
    return repr(float(x))


def _series_key(cfg: ExperimentConfig, r: PointResult) -> tuple:
    coords = {"mode": r.mode, "nu": r.nu, "N": r.n_atoms, "k": r.kappa_noise2, "T": r.t_tilde}
    swept = {"t-sweep": "T", "n-sweep": "N", "feedback-noise-sweep": "N"}.get(cfg.kind, "T")
    return tuple((k, v) for k, v in coords.items() if k != swept)


def _series_name(key: tuple) -> str:
    parts = []
    for k, v in key:
        if k == "mode":
            parts.append(str(v))
        else:
            parts.append(f"{k}{v:g}" if isinstance(v, float) else f"{k}{v}")
    return "sim_" + "_".join(parts) + ".csv"


def write_simulation_outputs(cfg: ExperimentConfig, results: list[PointResult], out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    series: dict = {}
    for r in results:
        series.setdefault(_series_key(cfg, r), []).append(r)
    for key in sorted(series, key=repr):
        path = out / _series_name(key)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(STABILITY_HEADER)
            for r in series[key]:
                writer.writerow(r.point.csv_row())
        written.append(path)
    path = out / "summary.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_HEADER)
        for r in results:
            p = r.point
            writer.writerow([
                r.mode, r.nu, r.n_atoms, _fmt(r.kappa_noise2), _fmt(r.t_tilde),
                " ".join(_fmt(s) for s in r.squeezings),
                _fmt(p.sigma2_tilde), _fmt(p.inv_sigma2_tilde), _fmt(p.std_error),
                _fmt(r.analytic_sigma2_tilde), p.n_trajectories, p.n_cycles,
            ])
    written.append(path)
    return written


def formula_rows(cfg: ExperimentConfig) -> list[tuple]:
    """Analytic overlay rows in ``analytics.FORMULA_HEADER`` order."""
    rows = []
    for mode, nu, n, kn2, tt in cfg.points():
        if mode == COHERENT_SEEDED:
            which = {0: "sql", 1: "hybrid_opt"}.get(nu, "cascade_opt")
            s_last = 1.0 if nu == 0 else analytics.s_opt_coherent_seeded(nu, n)
        else:
            which = "single_squeezed" if nu == 0 else "cascade_sq_opt"
            s_last = analytics.s_opt_squeezed_seeded(nu, n, tt)
        _, s2t = analytics.sigma2_formula(which, n_atoms=n, t_tilde=tt, nu=nu)
        rows.append((which, n, tt, nu, s_last, s2t))
        corrected = cascade_plan(mode, nu, n, tt, corrections=True)
        rows.append((f"corrected_{mode}", n, tt, nu, corrected.squeezings[-1], corrected.sigma2_tilde))
        if kn2 > 0 and mode == COHERENT_SEEDED and nu >= 1:
            _, s2n = analytics.sigma2_formula("with_feedback_noise", n_atoms=n, t_tilde=tt, nu=nu, kappa_noise2=kn2)
            rows.append((f"with_feedback_noise[{kn2:g}]", n, tt, nu, s_last, s2n))
            _, lit = analytics.sigma2_formula(
                "with_feedback_noise", n_atoms=n, t_tilde=tt, nu=nu, kappa_noise2=kn2, literal_noise=True
            )
            rows.append((f"with_feedback_noise_literal[{kn2:g}]", n, tt, nu, s_last, lit))
        if cfg.kind == "t-sweep":
            _, hop = analytics.sigma2_formula("fringe_hop", n_atoms=n, t_tilde=tt)
            rows.append(("fringe_hop", n, tt, nu, 1.0, hop))
    return list(dict.fromkeys(rows))


def self_check(results: list[PointResult]) -> list[str]:
    problems = []
    for r in results:
        p = r.point
        if not (math.isfinite(p.sigma2_tilde) and p.sigma2_tilde >= 0 and math.isfinite(p.std_error)):
            problems.append(f"non-finite or negative stability at {r}")
    for nu in range(4):
        for n in (1e2, 1e4):
            rec = cascade_plan(COHERENT_SEEDED, nu, n, 0.1).phase_variance
            closed = analytics.phase_var_coherent_seeded(nu, n)
            if abs(rec / closed - 1) > 1e-10:
                problems.append(f"cascade recursion disagrees with closed form at nu={nu}, N={n:g}")
    return problems


# -- oracle and spectrum checks -------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    n_atoms: int
    squeezing: float
    value: float
    target: float
    tolerance: float
    relative: bool = True

    @property
    def deviation(self) -> float:
        if self.relative:
            return abs(self.value / self.target - 1.0) if self.target else abs(self.value)
        return abs(self.value - self.target)

    @property
    def passed(self) -> bool:
        return self.deviation <= self.tolerance


CHECK_HEADER = ["check", "N", "s", "value", "target", "deviation", "tolerance", "pass"]


def oracle_checks(n_atoms: int, squeezing: float, theta: float = 0.1) -> list[Check]:
    """Exact state-vector checks of the Gaussian readout model at one (N, s)."""
    spec = EnsembleSpec(n_atoms, squeezing)
    state = build_pseudo_squeezed_state(spec)
    exact = exact_moments(state)
    model = analytic_moments(spec)
    pmf = outcome_pmf(ramsey_evolve(state, theta))
    mean, var = outcome_stats(model, theta)
    checks = [
        Check("norm", n_atoms, squeezing, state.norm(), 1.0, 1e-12, relative=False),
        Check("pmf_total", n_atoms, squeezing, float(pmf.probabilities.sum()), 1.0, 1e-12, relative=False),
        Check("jy_var", n_atoms, squeezing, exact.jy_var, model.jy_var, 0.02),
        Check("jx_mean", n_atoms, squeezing, exact.jx_mean, model.jx_mean, 0.02),
        Check("pmf_mean", n_atoms, squeezing, pmf.mean(), float(mean), 0.02),
        Check("pmf_variance", n_atoms, squeezing, pmf.variance(), float(var), 0.02),
    ]
    for th, fb in ((0.3, 0.2), (-0.25, 0.3), (0.1, -0.3)):
        rotated = exact_moments(ramsey_evolve(state, th, fb)).jz_mean
        subtracted = exact_moments(ramsey_evolve(state, th - fb)).jz_mean
        checks.append(Check(f"feedback_equivalence[{th},{fb}]", n_atoms, squeezing, rotated, subtracted, 1e-6, False))
    return checks


def fringe_check(theta: float) -> Check:
    state = build_pseudo_squeezed_state(EnsembleSpec(1, 1e6))
    p_up = float(outcome_pmf(ramsey_evolve(state, theta)).probabilities[-1])
    return Check(f"n1_fringe[{theta}]", 1, 1e6, p_up, 0.5 * (1 + math.sin(theta)), 1e-12, relative=False)


def write_checks(path: Path, checks: list[Check]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CHECK_HEADER)
        for c in checks:
            writer.writerow([c.name, c.n_atoms, _fmt(c.squeezing), _fmt(c.value), _fmt(c.target),
                             _fmt(c.deviation), _fmt(c.tolerance), int(c.passed)])


def validate_oracle(cfg: ExperimentConfig, out: Path) -> list[Check]:
    out.mkdir(parents=True, exist_ok=True)
    checks = [fringe_check(th) for th in (0.0, 0.4, -1.0)]
    moment_rows = []
    for n in cfg.n_atoms:
        for s in cfg.squeezing:
            checks.extend(oracle_checks(n, s, cfg.oracle_theta))
            state = build_pseudo_squeezed_state(EnsembleSpec(n, s))
            outcome_pmf(ramsey_evolve(state, cfg.oracle_theta)).to_csv(out / f"pmf_N{n}_s{s:g}.csv")
            e, a = exact_moments(state), analytic_moments(EnsembleSpec(n, s))
            for name in ("jx_mean", "jx2_mean", "jy_var", "jx_var"):
                moment_rows.append((n, s, name, getattr(e, name), getattr(a, name)))
    write_checks(out / "oracle_checks.csv", checks)
    with open(out / "oracle_moments.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["N", "s", "moment", "exact", "closed_form", "rel_deviation"])
        for n, s, name, e, a in moment_rows:
            writer.writerow([n, _fmt(s), name, _fmt(e), _fmt(a), _fmt(e / a - 1.0)])
    return checks


def spectrum_check(cfg: ExperimentConfig, out: Path) -> list[Check]:
    out.mkdir(parents=True, exist_ok=True)
    expo = cfg.spectrum_exponent
    variances, slopes = [], []
    for k in range(cfg.spectrum_seeds):
        spec = NoiseSpec(1.0, 1.0, cfg.spectrum_samples, seed=point_seed(cfg.seed, ("spectrum", expo), k),
                         spectral_exponent=expo)
        traj = synthesize_flicker(spec)
        psd = estimate_psd(traj)
        variances.append(float(np.mean(traj.samples**2)))
        slopes.append(psd.fit_slope(10 * spec.f_min, spec.f_nyquist / 10))
        if k == 0:
            with open(out / "psd.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["f", "power"])
                for f, pw in psd.pairs():
                    writer.writerow([_fmt(f), _fmt(pw)])
    checks = [
        Check("process_variance", 0, 0.0, float(np.mean(variances)), 1.0, 0.05),
        Check("psd_slope", 0, 0.0, float(np.mean(slopes)), -expo, 0.1, relative=False),
    ]
    write_checks(out / "spectrum_checks.csv", checks)
    return checks


# -- entry ----------------------------------------------------------------------


def resolve_output_dir(cfg: ExperimentConfig) -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or cfg.output_dir)


def _write_log(out: Path, cfg: ExperimentConfig, lines: list[str]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "run.log", "w") as fh:
        for w in cfg.warnings:
            fh.write(f"WARNING {w}\n")
        for line in lines:
            fh.write(line + "\n")


def run_experiment(cfg: ExperimentConfig, command: str = "simulate", threads: int = 1) -> int:
    """Run one CLI command for ``cfg``; returns a process exit status."""
    out = resolve_output_dir(cfg)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc.strerror}") from None

    lines = [f"command {command}", f"kind {cfg.kind}"]
    if command == "simulate":
        results = simulate_grid(cfg, threads)
        write_simulation_outputs(cfg, results, out)
        analytics.write_formula_csv(out / "analytic.csv", formula_rows(cfg))
        problems = self_check(results)
        lines += [f"point {r.mode} nu={r.nu} N={r.n_atoms} kn2={r.kappa_noise2:g} t={r.t_tilde:g} "
                  f"sigma2_tilde={r.point.sigma2_tilde:.6g} +- {r.point.std_error:.2g} "
                  f"model={r.analytic_sigma2_tilde:.6g}" for r in results]
        lines += [f"FAILED {p}" for p in problems]
        _write_log(out, cfg, lines)
        return 1 if problems else 0
    if command == "analytic":
        analytics.write_formula_csv(out / "analytic.csv", formula_rows(cfg))
        problems = self_check([])
        _write_log(out, cfg, lines + [f"FAILED {p}" for p in problems])
        return 1 if problems else 0
    if command == "validate-oracle":
        checks = validate_oracle(cfg, out)
    elif command == "spectrum-check":
        checks = spectrum_check(cfg, out)
    else:
        raise ValueError(f"unknown command {command!r}")
    lines += [f"{'PASS' if c.passed else 'FAIL'} {c.name} N={c.n_atoms} s={c.squeezing:g} "
              f"dev={c.deviation:.3g} tol={c.tolerance:g}" for c in checks]
    _write_log(out, cfg, lines)
    return 0 if all(c.passed for c in checks) else 1
