import json
import math

import numpy as np
import pytest
import yaml

from hermobs import io
from hermobs.cli import main
from hermobs.hermite import HermiteExpansion
from hermobs.numgrid import GridError, GridFunction, IndicatorSet, make_uniform_grid

G1 = make_uniform_grid(1, 8.0, 64)
HERMITE_CFG = {
    "mode": "hermite-observe",
    "grid": {"dim": 1, "half_extent": 12.0, "points_per_axis": 192},
    "params": {"lambda": 1.0, "t": 0.7},
    "sets": {"A": {"box": {"lo": [-1.0], "hi": [1.0]}}, "B": {"box": {"lo": [-1.0], "hi": [1.0]}}},
    "cutoff": 24,
    "samples": {"count": 4, "seed": 2},
}


def write_cfg(path, cfg):
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def test_grid_function_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    g = make_uniform_grid(2, 1.5, 6)
    f = GridFunction(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
    io.write_grid_function(tmp_path / "f.csv", f)
    back = io.read_grid_function(tmp_path / "f.csv")
    assert back.grid == g and np.array_equal(back.values, f.values)


def test_mask_and_expansion_round_trip(tmp_path):
    m = IndicatorSet(G1, np.arange(64) % 3 == 0)
    io.write_mask(tmp_path / "m.csv", m)
    assert np.array_equal(io.read_mask(tmp_path / "m.csv").mask, m.mask)
    c = HermiteExpansion(2, 0.5, 3, np.arange(10) * (1 + 0.5j))
    io.write_expansion(tmp_path / "c.csv", c)
    back = io.read_expansion(tmp_path / "c.csv")
    assert back.scale == 0.5 and np.array_equal(back.coeffs, c.coeffs)


def test_malformed_files_are_rejected(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("i0,re,im\n0,1,0\n")
    with pytest.raises(GridError):
        io.read_grid_function(p)
    p.write_text("# grid dim=1 half_extent=1.0 points_per_axis=4\ni0,mask\n0,2\n")
    with pytest.raises(GridError):
        io.read_mask(p)


def test_frft_subcommand(tmp_path, capsys):
    f = GridFunction.from_callable(G1, lambda x: np.exp(-(x**2) / 2))
    io.write_grid_function(tmp_path / "in.csv", f)
    code = main(["frft", "--alpha", str(math.pi / 2), "--in", str(tmp_path / "in.csv"), "--out", str(tmp_path / "out.csv")])
    assert code == 0
    g = io.read_grid_function(tmp_path / "out.csv")
    # the Gaussian is a fixed point of every fractional Fourier transform
    assert np.max(np.abs(g.values - f.values)) < 1e-10
    summary = json.loads(capsys.readouterr().out)
    assert summary["norm_out"] == pytest.approx(summary["norm_in"])


def test_hermite_observe_is_deterministic(tmp_path):
    cfg = write_cfg(tmp_path / "c.yaml", HERMITE_CFG)
    assert main(["hermite-observe", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["hermite-observe", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    for name in ("report.json", "ratios.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rep = json.loads((tmp_path / "a" / "report.json").read_text())
    assert rep["sigma_max"] < 1 and max(rep["ratios"]) <= rep["certified_constant"]


def test_resonance_is_a_domain_error(tmp_path, capsys):
    cfg = dict(HERMITE_CFG, params={"lambda": 1.0, "t": math.pi / 2})
    path = write_cfg(tmp_path / "c.yaml", cfg)
    assert main(["hermite-observe", "--config", path, "--out", str(tmp_path / "o")]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ResonanceError"
    assert (tmp_path / "o" / "error.json").exists()


def test_config_errors_exit_2(tmp_path):
    cfg = {k: v for k, v in HERMITE_CFG.items() if k != "grid"}
    assert main(["hermite-observe", "--config", write_cfg(tmp_path / "c.yaml", cfg), "--out", str(tmp_path)]) == 2
    noseed = dict(HERMITE_CFG, samples={"count": 2})
    assert main(["hermite-observe", "--config", write_cfg(tmp_path / "d.yaml", noseed), "--out", str(tmp_path)]) == 2
    assert main(["observe", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["no-such-mode"])
    assert exc.value.code == 2


def test_sweep_rows_and_errors(tmp_path):
    cfg = {"template": HERMITE_CFG, "sweep": {"parameter": "t", "values": [math.pi / 2], "sin_values": [0.9]}}
    assert main(["sweep", "--config", write_cfg(tmp_path / "s.yaml", cfg), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "index,t,abs_sin,sigma_max,certified_constant,hs_norm,max_ratio,error"
    assert len(lines) == 3
    assert "ResonanceError" in lines[1]
    assert lines[2].endswith(",") and lines[2].startswith("1,")
    empty = {"template": HERMITE_CFG, "sweep": {"parameter": "t", "values": []}}
    assert main(["sweep", "--config", write_cfg(tmp_path / "e.yaml", empty), "--out", str(tmp_path / "e")]) == 0
    assert (tmp_path / "e" / "sweep.csv").read_text().splitlines() == [lines[0]]


def test_set_translate(tmp_path):
    cfg = {
        "mode": "set-translate",
        "grid": {"dim": 2, "half_extent": 0.5, "points_per_axis": 64},
        "sets": {
            "A": {"ball": {"center": [0.0, 0.0], "radius": 0.2}},
            "A0": {"ball": {"center": [0.1, 0.0], "radius": 0.08}},
            "B": {"ball": {"center": [0.0, 0.0], "radius": 0.2}},
            "B0": {"ball": {"center": [0.1, 0.0], "radius": 0.08}},
        },
        "eps": 0.002,
    }
    assert main(["set-translate", "--config", write_cfg(tmp_path / "c.yaml", cfg), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["search"]["direct_check"]["ok"]
    u = io.read_mask(tmp_path / "A_union.csv")
    assert u.count * u.grid.cell_volume <= rep["search"]["measures"]["A"] + 0.002 + 1e-12
