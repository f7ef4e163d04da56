import io
import json

import numpy as np
import pytest

from spbc.archive import OrbitRecord, list_records, read_record, write_record
from spbc.cli import main
from spbc.fixtures import FIXTURES


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_reference_inside(capsys):
    code, out, _ = run(capsys, "reference", "--theta", "0.78pi", "--mu", "1")
    assert code == 0
    assert "A_homographic = 5.3497" in out and "A_testpath    = 5.3444" in out
    assert "inside" in out


def test_reference_outside(capsys):
    code, out, _ = run(capsys, "reference", "--theta", "0.77pi", "--mu", "1")
    assert code == 0
    assert "5.2216" in out and "5.4085" in out and "outside" in out


@pytest.mark.parametrize("cmd", [
    ["reference", "--theta", "pi", "--mu", "1"],
    ["reference", "--theta", "pi/2", "--mu", "1"],
    ["minimize", "--theta", "pi/2", "--mu", "1"],
    ["extend", "--fixture", "nine"],
    ["verify", "7"],
    ["stability"],
])
def test_usage_errors(capsys, cmd):
    code, _, err = run(capsys, *cmd)
    assert code == 2 and "error" in err


def test_reference_custom_a_test(tmp_path, capsys):
    f = tmp_path / "a.txt"
    f.write_text("# one vector per line\n0.6676542303 1.11499232 0.5099504088 0.6676542314 1.11499232 0.5099504078\n")
    code, out, _ = run(capsys, "reference", "--theta", "1.11pi", "--mu", "1", "--a-test", str(f))
    assert code == 0 and "6.5124" in out
    (tmp_path / "empty.txt").write_text("\n")
    code, _, err = run(capsys, "reference", "--theta", "1.11pi", "--mu", "1",
                       "--a-test", str(tmp_path / "empty.txt"))
    assert code == 2


def test_scan_single_cell(capsys, tmp_path):
    out_csv = tmp_path / "mask.csv"
    code, out, _ = run(capsys, "scan", "--theta", "4pi/5", "--mu", "1", "--out", str(out_csv))
    assert code == 0 and "inside" in out
    assert out_csv.read_text().splitlines()[1].endswith(",1")


def test_scan_mu1_row_with_figure(capsys, tmp_path):
    thetas = [f"{x:.2f}pi" for x in np.arange(0.70, 1.2001, 0.01)]
    fig = tmp_path / "region.png"
    code, out, _ = run(capsys, "scan", "--mu", "1", "--theta", *thetas, "--figure", str(fig))
    assert code == 0
    assert "(0.77pi, 0.78pi)" in out and "(1.11pi, 1.12pi)" in out
    assert fig.stat().st_size > 0


def test_scan_empty_a_test(capsys, tmp_path):
    f = tmp_path / "a.json"
    f.write_text("[]")
    code, _, _ = run(capsys, "scan", "--theta", "4pi/5", "--mu", "1", "--a-test", str(f))
    assert code == 2


def test_bad_config(capsys, tmp_path):
    f = tmp_path / "cfg.json"
    f.write_text(json.dumps({"grad_tol": -1}))
    code, _, err = run(capsys, "scan", "--theta", "4pi/5", "--mu", "1", "--config", str(f))
    assert code == 2 and "config" in err


def test_extend_fixture_one(capsys, tmp_path):
    out_csv = tmp_path / "orbit.csv"
    fig = tmp_path / "orbit.png"
    code, _, err = run(capsys, "extend", "--fixture", "1", "--samples", "201",
                       "--out", str(out_csv), "--figure", str(fig))
    assert code == 0 and "SimpleChoreographic" in err and "curves=1" in err
    data = np.loadtxt(out_csv, delimiter=",", skiprows=1)
    assert data.shape == (201 * 4, 8)
    assert set(data[:, 2]) == {0} and set(data[:, 3]) == set(range(5))
    first, last = data[:4, 4:6], data[-4:, 4:6]
    assert np.max(np.abs(first - last)) < 1e-6
    assert fig.stat().st_size > 0


def test_extend_fixture_two_has_two_curves(capsys):
    code, out, err = run(capsys, "extend", "--fixture", "pentagon-mu0.5", "--samples", "11")
    assert code == 0 and "curves=2" in err
    data = np.loadtxt(io.StringIO(out), delimiter=",", skiprows=1)
    assert set(data[:, 2]) == {0, 1}


def test_extend_t_max_zero(capsys):
    code, out, _ = run(capsys, "extend", "--fixture", "1", "--t-max", "0")
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 1 + 4 and all(l.startswith("0,") for l in lines[1:])


def test_extend_negative_t_max(capsys):
    code, _, _ = run(capsys, "extend", "--fixture", "1", "--t-max", "-1")
    assert code == 2


def test_stability_rejects_quasi_periodic(capsys, tmp_path):
    fx = FIXTURES[2]
    rec = OrbitRecord(1.0, 0.5, 2.43, None, None, [0.5] * 6, 1.0, list(fx.state().to_vector()))
    write_record(rec, tmp_path)
    code, _, err = run(capsys, "stability", rec.record_id, "--archive-dir", str(tmp_path))
    assert code == 2 and "quasi-periodic" in err


def test_verify_without_refinement_reports_closure(capsys):
    code, out, _ = run(capsys, "verify", "1", "--no-refine", "--no-stability")
    # the published ten-digit states close only to ~1e-3 over the full period
    assert "published closure" in out and "classification SimpleChoreographic" in out
    assert code == 4


def test_verify_refined(capsys):
    code, out, _ = run(capsys, "verify", "4", "--no-stability")
    assert code == 0
    assert "refined closure" in out and "FAIL" in out.split("refined closure")[0]


@pytest.mark.slow
def test_minimize_then_stability_round_trip(capsys, tmp_path):
    code, out, _ = run(capsys, "minimize", "--theta", "4pi/5", "--mu", "1",
                       "--archive-dir", str(tmp_path), "--figure", str(tmp_path / "m.png"))
    assert code == 0
    assert "stability: LinearlyStable" in out
    ids = list_records(tmp_path)
    assert len(ids) == 1
    rec = read_record(ids[0], tmp_path)
    assert rec.action < 5.603
    assert rec.classification["kind"] == "SimpleChoreographic"
    code, out, _ = run(capsys, "stability", ids[0], "--archive-dir", str(tmp_path),
                       "--figure", str(tmp_path / "s.png"))
    assert code == 0 and "verdict: LinearlyStable" in out
    again = read_record(ids[0], tmp_path)
    a = np.array(rec.stability["multipliers"], float)
    b = np.array(again.stability["multipliers"], float)
    assert np.max(np.abs(np.sort_complex(a[:, 0] + 1j * a[:, 1]) - np.sort_complex(b[:, 0] + 1j * b[:, 1]))) < 1e-6
    assert (tmp_path / "m.png").exists() and (tmp_path / "s.png").exists()


@pytest.mark.slow
def test_minimize_mu2(capsys, tmp_path):
    code, out, _ = run(capsys, "minimize", "--theta", "4pi/5", "--mu", "2", "--no-stability",
                       "--archive-dir", str(tmp_path))
    assert code == 0
    rec = read_record(list_records(tmp_path)[0], tmp_path)
    assert rec.action == pytest.approx(9.748, rel=1e-2)
    assert rec.classification["kind"] == "DoubleChoreographic"
