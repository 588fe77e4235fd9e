import json

import numpy as np
import pytest
import yaml

from plantgap.experiment import (
    DEFAULT_GRID,
    CrossingReport,
    GridCell,
    GridResult,
    InsufficientGridError,
    PipelineConfig,
    QMC_FIELDS,
    detect_crossing,
    grid_run,
    load_config,
    parse_grid,
    pipeline,
    refinement_points,
    write_grid_csv,
)
from plantgap.qmc import Estimates, QmcParams
from plantgap.sat_instance import Instance, add_penalty, generate_double_plant


def est(h, err):
    return Estimates(h, err, h, err, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 100)


def synthetic(s_values, delta, err=1e-4):
    cells = []
    for s, d in zip(s_values, delta):
        cells.append(GridCell(float(s), 0, "00", est(1.0 + d / 2, err)))
        cells.append(GridCell(float(s), 1, "11", est(1.0 - d / 2, err)))
    return GridResult(cells)


def test_linear_crossing():
    s = np.round(np.arange(0.1, 0.95, 0.1), 10)
    rep = detect_crossing(synthetic(s, s - 0.5), s_star_pt=0.48)
    assert rep.crossing_found and rep.s_star_mc == pytest.approx(0.5)
    assert rep.s_star_pt == 0.48 and min(rep.significance) > 2
    assert s[0] <= rep.s_star_mc <= s[-1]


def test_positive_delta_no_crossing():
    s = np.linspace(0.1, 0.9, 9)
    assert not detect_crossing(synthetic(s, np.full(9, 0.3))).crossing_found


def test_insignificant_flip_not_crossing():
    s = np.linspace(0.1, 0.9, 9)
    delta = np.where(s < 0.5, -1e-4, 1e-4)
    assert not detect_crossing(synthetic(s, delta, err=1e-3)).crossing_found


def test_crossing_through_inconclusive_points():
    s = np.round(np.arange(0.3, 0.71, 0.01), 10)
    rep = detect_crossing(synthetic(s, 0.02 * (s - 0.5), err=5e-5))
    assert rep.crossing_found and rep.s_star_mc == pytest.approx(0.5, abs=1e-9)


def test_insufficient_grid():
    with pytest.raises(InsufficientGridError):
        detect_crossing(synthetic([0.5], [0.1]))


def test_grid_needs_both_seeds():
    with pytest.raises(ValueError):
        GridResult([GridCell(0.5, 0, "0", est(1, 0.1))])


def test_refinement_points():
    s = np.round(np.arange(0.05, 0.96, 0.05), 10)
    g = synthetic(s, s - 0.52)
    rep = detect_crossing(g)
    assert refinement_points(g, rep) == pytest.approx([0.51, 0.52, 0.53, 0.54])
    assert refinement_points(g, CrossingReport(False, None, None, None)) == []


def test_default_grid():
    assert DEFAULT_GRID[0] == 0.05 and DEFAULT_GRID[-1] == 0.95 and len(DEFAULT_GRID) == 19


def test_parse_grid():
    assert parse_grid("0.1:0.3:0.1") == (0.1, 0.2, 0.3)
    assert parse_grid([0.3, 0.1]) == (0.1, 0.3)
    with pytest.raises(ValueError):
        parse_grid("0.1:2:0.5")


@pytest.fixture(scope="module")
def inst8():
    return add_penalty(generate_double_plant(8, np.random.default_rng(0)), 0)


SMALL = QmcParams(beta=10.0, n_total_sweeps=600, thin=5, n_equil=20)


def test_grid_run_cells_and_workers(inst8, tmp_path):
    a = grid_run(inst8, None, [0.4, 0.2, 0.8], SMALL, master_seed=3, workers=1)
    b = grid_run(inst8, None, [0.8, 0.4, 0.2], SMALL, master_seed=3, workers=3)
    assert len(a.cells) == 6 and a.s_values == [0.2, 0.4, 0.8]
    write_grid_csv(a, tmp_path / "a.csv")
    write_grid_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    header = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert header == ",".join(QMC_FIELDS)


def test_grid_cell_errors_recorded(inst8):
    bad = QmcParams(beta=10.0, n_total_sweeps=600, thin=5, n_equil=200)
    g = grid_run(inst8, None, [0.3, 0.6], bad)
    assert len(g.errors) == 4 and "InsufficientSamplesError" in g.errors[0].error


def test_zero_clause_no_false_crossing():
    inst = Instance(6, (), ((0,) * 6, (1,) * 6))
    g = grid_run(inst, None, np.linspace(0.1, 0.9, 9), QmcParams(beta=5.0, n_total_sweeps=2000, thin=5, n_equil=20))
    assert not detect_crossing(g).crossing_found


def write_cfg(path, **kw):
    cfg = {"n": 8, "master_seed": 2, "beta": 10.0, "sweeps": 300, "thin": 5, "equil": 10, "s_grid": "0.2:0.8:0.3"}
    cfg.update(kw)
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_load_config(tmp_path):
    cfg = load_config(write_cfg(tmp_path / "c.yaml"))
    assert cfg.s_grid == (0.2, 0.5, 0.8) and cfg.params().n_total_sweeps == 300
    assert PipelineConfig(n=5, preset="large").params().beta == 300
    (tmp_path / "bad.yaml").write_text("n: 5\nfoo: 1\n")
    with pytest.raises(ValueError):
        load_config(tmp_path / "bad.yaml")


def test_config_json(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"n": 6, "s_grid": [0.5, 0.7]}))
    assert load_config(tmp_path / "c.json").s_grid == (0.5, 0.7)


def test_pipeline_dry_run(tmp_path):
    m = pipeline(load_config(write_cfg(tmp_path / "c.yaml")), tmp_path / "out", dry_run=True)
    assert all(st["status"] == "planned" for st in m["stages"]) and m["plan"]["cells_per_grid"] == 6
    assert not (tmp_path / "out" / "grid_original.csv").exists()


ARTIFACTS = ["instance.cnf", "perturb.json", "grid_original.csv", "crossing.json", "coeffs.json",
             "grid_randomized.csv", "crossing_randomized.json", "manifest.json"]


def test_pipeline_deterministic(tmp_path):
    cfg = load_config(write_cfg(tmp_path / "c.yaml"))
    m1 = pipeline(cfg, tmp_path / "a")
    cfg.workers = 2
    pipeline(cfg, tmp_path / "b")
    assert m1["complete"]
    for name in ARTIFACTS[:-1]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    assert json.loads((tmp_path / "a" / "crossing.json").read_text())["s_star_pt"] is not None


def test_pipeline_partial_failure(tmp_path):
    cfg = load_config(write_cfg(tmp_path / "c.yaml", coeff_threshold=100.0))
    m = pipeline(cfg, tmp_path / "out")
    status = {s["name"]: s["status"] for s in m["stages"]}
    assert status["grid_original"] == "done" and status["coeffs"] == "failed"
    assert status["grid_randomized"] == "skipped" and not m["complete"]
    assert (tmp_path / "out" / "grid_original.csv").exists()
