"""Dual-seed QMC grids, crossing detection and the end-to-end pipeline.

Every grid cell (s, seed) owns an independent chain whose random stream is
derived from (master seed, stage, s, seed index), so results do not depend
on the worker count or on the order in which cells finish.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .dimacs import write_instance
from .hamiltonian import FieldCoefficients
from .perturbation import (
    d_vector,
    perturbation_report,
    pick_randomized_coeffs,
    randomized_delta_samples,
    select_penalty_target,
)
from .qmc import LARGE_PRESET, SMALL_PRESET, Estimates, QmcParams, run_point
from .sat_instance import Instance, add_penalty, generate_double_plant
from .spectrum import fmt

log = logging.getLogger(__name__)

DEFAULT_GRID = tuple(float(x) for x in np.round(np.arange(0.05, 0.951, 0.05), 10))
REFINE_STEP = 0.01
N_SIGMA = 2.0
THRESHOLD_QUANTILE = 0.9
THRESHOLD_SAMPLES = 100_000

# spawn-key stage tags
STAGE_GENERATE, STAGE_COEFFS, STAGE_ORIGINAL, STAGE_RANDOMIZED = 0, 1, 2, 3


class InsufficientGridError(ValueError):
    pass


def seed_string(z: Sequence[int]) -> str:
    return "".join(str(int(b)) for b in z)


def s_key(s: float) -> int:
    """Grid-independent integer label of an s value (micro-units)."""
    return int(round(s * 1_000_000))


def cell_rng(master_seed: int, stage: int, s: float, seed_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(master_seed, spawn_key=(stage, s_key(s), seed_index))
    return np.random.default_rng(ss)


def stage_rng(master_seed: int, stage: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(stage,)))


@dataclass(frozen=True)
class GridCell:
    s: float
    seed_index: int
    seed_string: str
    estimates: Estimates | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.estimates is not None


@dataclass
class GridResult:
    cells: list[GridCell]

    def __post_init__(self):
        self.cells = sorted(self.cells, key=lambda c: (c.s, c.seed_index))
        for s in self.s_values:
            if sorted(c.seed_index for c in self.cells if c.s == s) != [0, 1]:
                raise ValueError(f"both seeds required at s={s}")

    @property
    def s_values(self) -> list[float]:
        return sorted({c.s for c in self.cells})

    @property
    def errors(self) -> list[GridCell]:
        return [c for c in self.cells if not c.ok]

    def merged(self, other: "GridResult") -> "GridResult":
        have = {(c.s, c.seed_index) for c in self.cells}
        return GridResult(self.cells + [c for c in other.cells if (c.s, c.seed_index) not in have])

    def curves(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(s, E_seed0, err_seed0, E_seed1, err_seed1) over the s values where both cells succeeded."""
        by = {(c.s, c.seed_index): c for c in self.cells}
        rows = []
        for s in self.s_values:
            a, b = by[(s, 0)], by[(s, 1)]
            if a.ok and b.ok:
                rows.append((s, a.estimates.H_mean, a.estimates.H_err, b.estimates.H_mean, b.estimates.H_err))
        arr = np.array(rows, dtype=float).reshape(-1, 5)
        return arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4]


@dataclass
class CrossingReport:
    crossing_found: bool
    s_star_mc: float | None
    significance: tuple[float, float] | None  # combined-sigma separation at the bracketing points
    s_star_pt: float | None
    bracket: tuple[float, float] | None = None
    interval: tuple[float, float] | None = None  # adjacent grid points across which delta changes sign
    n_crossings: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _sign_change_interval(s, delta, a, b):
    """First adjacent pair in [a, b] across which delta leaves the sign of delta[a]."""
    sign = np.sign(delta[a])
    for i in range(a, b):
        if np.sign(delta[i + 1]) != sign:
            return i
    return b - 1


def detect_crossing(grid: GridResult, s_star_pt: float | None = None, n_sigma: float = N_SIGMA) -> CrossingReport:
    """Significant sign change of E_seed0 - E_seed1 along s.

    Points where |delta| is below ``n_sigma`` combined standard errors are
    inconclusive; a crossing is a sign change between consecutive conclusive
    points. The crossing location is the linear zero of delta on the grid
    interval where it changes sign. With several crossings the best separated
    one is reported.
    """
    s, e0, r0, e1, r1 = grid.curves()
    if len(s) < 2:
        raise InsufficientGridError("need at least two s values with both seeds")
    delta = e0 - e1
    sigma = np.hypot(r0, r1)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma > 0, delta / sigma, np.sign(delta) * np.inf)
    conclusive = [i for i in range(len(s)) if abs(z[i]) > n_sigma]
    found = []
    for a, b in zip(conclusive, conclusive[1:]):
        if np.sign(delta[a]) != np.sign(delta[b]):
            found.append((min(abs(z[a]), abs(z[b])), a, b))
    if not found:
        return CrossingReport(False, None, None, s_star_pt)
    _, a, b = max(found, key=lambda t: t[0])
    i = _sign_change_interval(s, delta, a, b)
    d0, d1 = delta[i], delta[i + 1]
    s_mc = s[i] if d1 == d0 else s[i] + (s[i + 1] - s[i]) * d0 / (d0 - d1)
    return CrossingReport(
        True,
        float(s_mc),
        (float(abs(z[a])), float(abs(z[b]))),
        s_star_pt,
        (float(s[a]), float(s[b])),
        (float(s[i]), float(s[i + 1])),
        len(found),
    )


def _run_cell(args) -> GridCell:
    instance, coeffs, s, seed_index, params, master_seed, stage = args
    z = instance.plants[seed_index]
    try:
        est = run_point(instance, coeffs, s, z, params, cell_rng(master_seed, stage, s, seed_index))
        return GridCell(s, seed_index, seed_string(z), est)
    except Exception as exc:  # recorded per cell; the grid carries on
        return GridCell(s, seed_index, seed_string(z), None, f"{type(exc).__name__}: {exc}")


def grid_run(
    instance: Instance,
    coeffs: FieldCoefficients | None,
    grid: Sequence[float],
    params: QmcParams,
    master_seed: int = 0,
    workers: int = 1,
    stage: int = STAGE_ORIGINAL,
) -> GridResult:
    """Both plant-seeded chains at every s of ``grid``; cells run on up to ``workers`` processes."""
    if len(instance.plants) != 2:
        raise ValueError("dual-seed grids need a two-plant instance")
    grid = sorted({float(s) for s in grid})
    tasks = [(instance, coeffs, s, k, params, master_seed, stage) for s in grid for k in (0, 1)]
    if workers <= 1:
        cells = [_run_cell(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run_cell, tasks))
    for c in cells:
        if not c.ok:
            log.warning("cell s=%s seed=%s failed: %s", c.s, c.seed_string, c.error)
    return GridResult(cells)


def refinement_points(grid: GridResult, report: CrossingReport, step: float = REFINE_STEP) -> list[float]:
    """Points at ``step`` spacing strictly inside the sign-change interval of a detected crossing."""
    if not report.crossing_found:
        return []
    lo, hi = report.interval
    have = {s_key(s) for s in grid.s_values}
    pts = np.round(np.arange(lo + step, hi - step / 2, step), 10)
    return [float(p) for p in pts if s_key(p) not in have]


def refined_grid_run(
    instance, coeffs, grid, params, master_seed=0, workers=1, stage=STAGE_ORIGINAL, s_star_pt=None, refine=True
) -> tuple[GridResult, CrossingReport]:
    """Coarse grid, crossing detection, then one refinement pass around the crossing."""
    result = grid_run(instance, coeffs, grid, params, master_seed, workers, stage)
    report = detect_crossing(result, s_star_pt)
    extra = refinement_points(result, report) if refine else []
    if extra:
        result = result.merged(grid_run(instance, coeffs, extra, params, master_seed, workers, stage))
        report = detect_crossing(result, s_star_pt)
    return result, report


QMC_FIELDS = (
    "s", "seed_string", "H_mean", "H_err", "H0_mean", "H0_err", "V_mean", "V_err",
    "W_mean", "W_err", "m_mean", "acc_rate", "samples",
)


def write_grid_csv(grid: GridResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(QMC_FIELDS)
        for c in grid.cells:
            w.writerow(estimate_row(c.s, c.seed_string, c.estimates))


def estimate_row(s: float, seed: str, est: Estimates | None) -> list[str]:
    if est is None:
        return [fmt(s), seed] + ["nan"] * (len(QMC_FIELDS) - 3) + ["0"]
    vals = (est.H_mean, est.H_err, est.H0_mean, est.H0_err, est.V_mean, est.V_err, est.W_mean, est.W_err, est.m_mean, est.acc_rate)
    return [fmt(s), seed] + [fmt(v) for v in vals] + [str(est.samples)]


# coefficient files


def save_coeffs(coeffs: FieldCoefficients, path, **extra) -> None:
    with open(path, "w") as fh:
        json.dump({"c": list(coeffs.c), **extra}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_coeffs(path) -> FieldCoefficients:
    with open(path) as fh:
        data = json.load(fh)
    c = data["c"] if isinstance(data, dict) else data
    return FieldCoefficients(tuple(float(x) for x in c))


# pipeline


@dataclass
class PipelineConfig:
    n: int
    master_seed: int = 0
    preset: str = "small"
    beta: float | None = None
    s_grid: tuple[float, ...] = DEFAULT_GRID
    sweeps: int | None = None
    thin: int | None = None
    equil: int | None = None  # samples discarded, counted after thinning
    workers: int = 1
    coeff_threshold: float | None = None  # default: upper decile of the randomized-delta histogram
    refine: bool = True

    def params(self) -> QmcParams:
        presets = {"small": SMALL_PRESET, "large": LARGE_PRESET}
        if self.preset not in presets:
            raise ValueError(f"unknown preset {self.preset!r}")
        base = presets[self.preset]
        over = {
            k: v
            for k, v in (("beta", self.beta), ("n_total_sweeps", self.sweeps), ("thin", self.thin), ("n_equil", self.equil))
            if v is not None
        }
        return replace(base, **over)


def parse_grid(spec) -> tuple[float, ...]:
    """A list of floats or a 'start:stop:step' string (stop inclusive)."""
    if isinstance(spec, str):
        parts = [float(x) for x in spec.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValueError(f"grid must be start:stop:step, got {spec!r}")
        a, b, h = parts
        vals = np.round(np.arange(a, b + h / 2, h), 10)
    else:
        vals = np.asarray(spec, dtype=float)
    if vals.size == 0 or np.any((vals < 0) | (vals > 1)):
        raise ValueError("grid values must lie in [0, 1]")
    return tuple(sorted({float(v) for v in vals}))


CONFIG_KEYS = {"n", "master_seed", "beta", "s_grid", "sweeps", "thin", "equil", "workers", "coeff_threshold", "preset", "refine"}


def load_config(path) -> PipelineConfig:
    """YAML (or JSON) mapping with the ``PipelineConfig`` keys."""
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError("config must be a mapping")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "n" not in data:
        raise ValueError("config needs n")
    if "s_grid" in data:
        data["s_grid"] = parse_grid(data["s_grid"])
    return PipelineConfig(**data)


STAGES = (
    ("generate", None),
    ("penalize", "instance.cnf"),
    ("perturb", "perturb.json"),
    ("grid_original", "grid_original.csv"),
    ("crossing", "crossing.json"),
    ("coeffs", "coeffs.json"),
    ("grid_randomized", "grid_randomized.csv"),
    ("crossing_randomized", "crossing_randomized.json"),
)


def _dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


def _config_dict(cfg: PipelineConfig) -> dict:
    d = asdict(cfg)
    d["s_grid"] = list(cfg.s_grid)
    return d


def pipeline(cfg: PipelineConfig, out_dir, dry_run: bool = False) -> dict:
    """Run every stage, writing artifacts into ``out_dir``; returns the manifest.

    A failing stage is recorded and every stage depending on it is skipped;
    artifacts already written are kept. ``dry_run`` lists the plan only.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = cfg.params()
    grid = list(cfg.s_grid)
    status = {name: "pending" for name, _ in STAGES}
    errors: dict[str, str] = {}
    manifest = {
        "config": _config_dict(cfg),
        "qmc_params": asdict(params),
        "dry_run": dry_run,
        "stages": [],
    }

    def finish() -> dict:
        manifest["stages"] = [
            {"name": name, "artifact": art, "status": status[name], **({"error": errors[name]} if name in errors else {})}
            for name, art in STAGES
        ]
        manifest["complete"] = all(status[name] == "done" for name, _ in STAGES)
        _dump_json(manifest, out / "manifest.json")
        return manifest

    if dry_run:
        for name, _ in STAGES:
            status[name] = "planned"
        manifest["plan"] = {
            "cells_per_grid": 2 * len(grid),
            "grid": grid,
            "refine_step": REFINE_STEP if cfg.refine else None,
            "sweeps_per_cell": params.n_total_sweeps,
        }
        return finish()

    state: dict = {}

    def stage(name, fn, needs=()):
        if any(status[d] != "done" for d in needs):
            status[name] = "skipped"
            return
        try:
            fn()
            status[name] = "done"
        except Exception as exc:
            log.exception("stage %s failed", name)
            status[name] = "failed"
            errors[name] = f"{type(exc).__name__}: {exc}"

    def generate():
        state["bare"] = generate_double_plant(cfg.n, stage_rng(cfg.master_seed, STAGE_GENERATE))

    def penalize():
        target = select_penalty_target(state["bare"])
        state["target"] = target
        state["instance"] = add_penalty(state["bare"], target)
        write_instance(state["instance"], out / "instance.cnf")

    def perturb():
        rep = perturbation_report(state["instance"])
        state["report"] = rep
        _dump_json({**rep.to_dict(), "target": state["target"], "n": cfg.n, "m": state["instance"].m}, out / "perturb.json")

    def original():
        g, rep = refined_grid_run(
            state["instance"], None, grid, params, cfg.master_seed, cfg.workers, STAGE_ORIGINAL,
            state["report"].s_star, cfg.refine,
        )
        write_grid_csv(g, out / "grid_original.csv")
        state["grid"], state["crossing"] = g, rep

    def crossing():
        _dump_json(state["crossing"].to_dict(), out / "crossing.json")

    def coeffs():
        rng = stage_rng(cfg.master_seed, STAGE_COEFFS)
        d = d_vector(state["instance"])
        threshold = cfg.coeff_threshold
        if threshold is None:
            samples, _, _ = randomized_delta_samples(d, THRESHOLD_SAMPLES, rng)
            threshold = float(np.quantile(samples, THRESHOLD_QUANTILE))
        c = pick_randomized_coeffs(d, threshold, rng)
        state["coeffs"] = c
        rep = perturbation_report(state["instance"], c, with_e4=False)
        state["s_star_pt_rand"] = rep.s_star
        save_coeffs(c, out / "coeffs.json", threshold=threshold, delta2=rep.delta2, s_star_pt=rep.s_star)

    def randomized():
        g, rep = refined_grid_run(
            state["instance"], state["coeffs"], grid, params, cfg.master_seed, cfg.workers, STAGE_RANDOMIZED,
            state["s_star_pt_rand"], cfg.refine,
        )
        write_grid_csv(g, out / "grid_randomized.csv")
        state["grid_rand"], state["crossing_rand"] = g, rep

    def crossing_rand():
        _dump_json(state["crossing_rand"].to_dict(), out / "crossing_randomized.json")

    stage("generate", generate)
    stage("penalize", penalize, ("generate",))
    stage("perturb", perturb, ("penalize",))
    stage("grid_original", original, ("perturb",))
    stage("crossing", crossing, ("grid_original",))
    stage("coeffs", coeffs, ("penalize",))
    stage("grid_randomized", randomized, ("coeffs", "perturb"))
    stage("crossing_randomized", crossing_rand, ("grid_randomized",))
    for key, name in (("grid", "grid_original"), ("grid_rand", "grid_randomized")):
        if key in state and state[key].errors:
            manifest.setdefault("cell_errors", {})[name] = [
                {"s": c.s, "seed": c.seed_string, "error": c.error} for c in state[key].errors
            ]
    return finish()
