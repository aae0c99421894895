import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bandlets.cli import format_grid, main, read_grid, write_grid
from bandlets.errors import InputError
from bandlets.geometry import FlowConfig, parse_geometry
from bandlets.pyramid import daubechies, dwt2
from bandlets.selection import evaluate_geometry
from bandlets.synthlab import edge_scene, observe, render_scene


def block(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


@pytest.fixture
def scene_files(tmp_path):
    f = render_scene(edge_scene(contrast=1.0), 32)
    write_grid(tmp_path / "f.txt", f)
    write_grid(tmp_path / "obs.txt", observe(f, 0.05, 1))
    return tmp_path, f


def test_grid_text_round_trip(tmp_path, rng):
    a = np.round(rng.normal(size=(8, 8)), 10)
    write_grid(tmp_path / "a.txt", a)
    assert np.array_equal(read_grid(tmp_path / "a.txt"), a)
    assert format_grid(a).splitlines()[0] == "8"


@settings(max_examples=25, deadline=None)
@given(k=st.integers(1, 4), data=st.data())
def test_grid_round_trip_property(tmp_path_factory, k, data):
    side = 2**k
    a = data.draw(arrays(float, (side, side), elements=st.floats(-1e6, 1e6)))
    a = np.array([[float(f"{v:.10g}") for v in row] for row in a])
    p = tmp_path_factory.mktemp("g") / "g.txt"
    write_grid(p, a)
    assert np.array_equal(read_grid(p), a)


def test_pgm_formats(tmp_path):
    a = np.linspace(0, 1, 16).reshape(4, 4)
    write_grid(tmp_path / "a.pgm", a)
    assert (tmp_path / "a.pgm").read_bytes()[:2] == b"P5"
    assert np.max(np.abs(read_grid(tmp_path / "a.pgm") - a)) <= 0.5 / 255 + 1e-12
    (tmp_path / "b.pgm").write_text("P2\n# comment\n2 2\n4\n0 1\n2 4\n")
    assert np.allclose(read_grid(tmp_path / "b.pgm"), [[0, 0.25], [0.5, 1]])


@pytest.mark.parametrize("content", ["3\n1 2 3\n4 5 6\n7 8 9\n", "4\n1 2\n", "x\n", "",
                                     "P2\n2 4\n255\n" + "0 " * 8, "P5\n2 2\n65535\n"])
def test_bad_grids(tmp_path, content):
    p = tmp_path / "bad.txt"
    p.write_text(content)
    with pytest.raises(InputError):
        read_grid(p)


def test_denoise_reports_and_artifacts(scene_files, capsys):
    d, _ = scene_files
    code = main(["denoise", "--input", str(d / "obs.txt"), "--sigma", "0.05", "--lambda", "3",
                 "--out", str(d / "out.txt"), "--dump-geometry", str(d / "geo.txt"),
                 "--figure", str(d / "fig.png")])
    assert code == 0
    rep = block(capsys.readouterr().out)
    for key in ("sigma", "j", "N", "K_N", "T", "lambda0", "kept_count", "residual_sq",
                "total_cost", "regime", "p", "threads"):
        assert key in rep
    assert rep["regime"] == "outside guaranteed regime"
    assert read_grid(d / "out.txt").shape == (32, 32)
    assert (d / "fig.png").stat().st_size > 0
    geo = parse_geometry((d / "geo.txt").read_text())
    geo.check_tiling()
    # the dumped geometry reproduces the reported cost
    obs = read_grid(d / "obs.txt")
    sel = evaluate_geometry(dwt2(obs / 32, filt=daubechies(2)), geo, float(rep["T"]), 2)
    assert sel.cost.total == pytest.approx(float(rep["total_cost"]), abs=1e-9)

    assert main(["denoise", "--input", str(d / "obs.txt"), "--sigma", "0.05", "--lambda", "3",
                 "--out", str(d / "b.txt"), "--baseline"]) == 0
    base = block(capsys.readouterr().out)
    assert base["mode"] == "baseline"
    assert float(base["total_cost"]) >= float(rep["total_cost"])


def test_denoise_noise_free_reproduces_input(scene_files, capsys):
    d, f = scene_files
    assert main(["denoise", "--input", str(d / "f.txt"), "--sigma", "0",
                 "--out", str(d / "z.txt")]) == 0
    assert np.max(np.abs(read_grid(d / "z.txt") - f)) <= 1e-9
    assert block(capsys.readouterr().out)["regime"] == "noise-free"


def test_denoise_exit_codes(scene_files, capsys):
    d, _ = scene_files
    args = ["denoise", "--input", str(d / "obs.txt"), "--out", str(d / "o.txt"), "--sigma"]
    assert main(args + ["0.3"]) == 4
    assert "1/4" in capsys.readouterr().err
    assert main(args + ["-0.1"]) == 2
    assert main(args + ["abc"]) == 2
    assert main(["denoise", "--input", str(d / "missing.txt"), "--sigma", "0.1",
                 "--out", str(d / "o.txt")]) == 3
    assert main(["denoise", "--input", str(d / "obs.txt"), "--sigma", "0.1",
                 "--out", str(d / "no" / "dir" / "o.txt")]) == 3
    assert main(["denoise", "--sigma", "0.1"]) == 2
    assert main(["denoise", "--input", str(d / "obs.txt"), "--sigma", "0.1",
                 "--out", str(d / "o.txt"), "--threads", "0"]) == 2
    assert main([]) == 2


def test_bench_outputs(tmp_path, capsys):
    out = tmp_path / "risk.csv"
    assert main(["bench", "--sigmas", "0.25,0.125,0.0625", "--trials", "1", "--seed", "4",
                 "--out", str(out), "--compare-baseline"]) == 0
    rep = block(capsys.readouterr().out)
    lines = out.read_text().splitlines()
    assert lines[0] == "sigma,trials,mse_mean,mse_stderr,psnr_mean,kept_mean"
    assert all(row.split(",")[3] == "0" for row in lines[1:-1])
    foot = lines[-1]
    assert foot.startswith("# slope=")
    vals = [float(tok.split("=")[1]) for tok in foot[2:].split()]
    assert len(vals) == 2 and all(math.isfinite(v) for v in vals)
    assert float(rep["slope"]) == pytest.approx(vals[0], rel=1e-9)
    assert (tmp_path / "risk_baseline.csv").exists()
    assert (tmp_path / "risk.png").stat().st_size > 0
    assert rep["lambda_tilde"] == "2.5" and rep["seed"] == "4"


def test_bench_rejects_bad_values(tmp_path):
    out = str(tmp_path / "r.csv")
    assert main(["bench", "--trials", "0", "--out", out]) == 2
    assert main(["bench", "--sigmas", "0.5,0.1,0.05", "--trials", "1", "--out", out]) == 4
    assert main(["bench", "--sigmas", "a,b", "--out", out]) == 2


def test_oracle_zero_input(tmp_path, capsys):
    write_grid(tmp_path / "z.txt", np.zeros((8, 8)))
    assert main(["oracle", "--input", str(tmp_path / "z.txt"), "--T", "0.5"]) == 0
    rep = block(capsys.readouterr().out)
    assert float(rep["oracle_total"]) == pytest.approx(0.25)
    assert float(rep["oracle_total_details"]) == 0
    assert rep["epsilon"] == "3.0" and rep["kappa"] == "64.0"
    assert "theorem1_bound" in rep


def test_oracle_recomputable_from_dump(scene_files, capsys):
    d, f = scene_files
    assert main(["oracle", "--input", str(d / "f.txt"), "--T", "0.02", "--sigma", "0.01",
                 "--dump-geometry", str(d / "og.txt")]) == 0
    rep = block(capsys.readouterr().out)
    geo = parse_geometry((d / "og.txt").read_text())
    sel = evaluate_geometry(dwt2(read_grid(d / "f.txt") / 32, filt=daubechies(2)), geo, 0.02, 2)
    assert sel.cost.total == pytest.approx(float(rep["oracle_total"]), abs=1e-9)
    K = int(rep["K_N"])
    assert float(rep["theorem1_bound"]) == pytest.approx(4 * sel.cost.total + 64 * 1e-4 / K,
                                                         abs=1e-9)


@pytest.mark.parametrize("T", ["0", "-1"])
def test_oracle_rejects_nonpositive_T(scene_files, T):
    d, _ = scene_files
    assert main(["oracle", "--input", str(d / "f.txt"), "--T", T]) == 2


def test_concentration_table(capsys):
    assert main(["concentration", "--K", "64", "--u", "0,2", "--trials", "500",
                 "--dims", "1,2,4,8"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert "exhaustive=false" in out[0]
    rows = [r.split(",") for r in out[2:]]
    for r, u in zip(rows, (0.0, 2.0)):
        assert r[3] == f"{2 / 64 * math.exp(-u):.10g}"


def test_concentration_small_K_is_exhaustive(capsys):
    assert main(["concentration", "--K", "4", "--trials", "100"]) == 0
    assert "exhaustive=true" in capsys.readouterr().out


def test_concentration_rejects_zero_trials():
    assert main(["concentration", "--trials", "0"]) == 2
    assert main(["concentration", "--K", "8", "--dims", "9"]) == 2


def test_commands_deterministic(scene_files, capsys):
    d, _ = scene_files
    outs = []
    for _ in range(2):
        main(["concentration", "--K", "32", "--trials", "300", "--seed", "9"])
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1]
