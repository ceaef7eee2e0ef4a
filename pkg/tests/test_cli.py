import json

import pytest

from distdykstra.cli import EXIT_INVARIANT, EXIT_IO, EXIT_OK, EXIT_USAGE, main
from distdykstra.engine import RunHistory
from distdykstra.instances import Instance


@pytest.fixture
def smooth_file(tmp_path):
    path = tmp_path / "smooth.json"
    assert main(["gen", "--family", "smooth", "--seed", "1", "--out", str(path)]) == EXIT_OK
    return path


def test_gen_writes_instance(smooth_file, tmp_path, capsys):
    inst = Instance.load(smooth_file)
    assert inst.num_nodes == 5 and inst.m == 4
    again = tmp_path / "again.json"
    main(["gen", "--family", "smooth", "--seed", "1", "--out", str(again)])
    assert "KKT residual" in capsys.readouterr().out
    assert again.read_bytes() == smooth_file.read_bytes()


def test_gen_single_node(tmp_path):
    path = tmp_path / "one.json"
    assert main(["gen", "--family", "nonsmooth", "--seed", "2", "--nodes", "1",
                 "--out", str(path)]) == EXIT_OK
    assert Instance.load(path).graph.edges == ()


def test_gen_bad_flags():
    with pytest.raises(SystemExit) as info:
        main(["gen", "--family", "cubic", "--seed", "1"])
    assert info.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        main(["gen", "--family", "smooth", "--seed", "1", "--nodes", "0"])
    assert info.value.code == EXIT_USAGE


def test_run_one_cycle(smooth_file, tmp_path):
    csv_path, summary = tmp_path / "h.csv", tmp_path / "s.json"
    code = main(["run", "--instance", str(smooth_file), "--schedule", "star", "--cycles", "1",
                 "--csv", str(csv_path), "--summary", str(summary)])
    assert code == EXIT_OK
    assert len(RunHistory.from_csv(csv_path)) == 8
    s = json.loads(summary.read_text())
    assert set(s) >= {"final_gap", "final_dist_sq", "warnings", "max_reset_drift"}
    assert all(v == "PASS" for v in s["invariants"].values())


def test_run_is_deterministic(smooth_file, tmp_path):
    outs = []
    for k in range(2):
        path = tmp_path / f"h{k}.csv"
        main(["run", "--instance", str(smooth_file), "--schedule", "star", "--cycles", "5",
              "--csv", str(path), "--summary", str(tmp_path / "s.json")])
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_run_timevary_ring(tmp_path):
    inst = tmp_path / "ring.json"
    main(["gen", "--family", "nonsmooth", "--seed", "3", "--graph", "ring", "--out", str(inst)])
    summary = tmp_path / "s.json"
    code = main(["run", "--instance", str(inst), "--schedule", "timevary", "--cycles", "50",
                 "--summary", str(summary)])
    assert code == EXIT_OK
    assert json.loads(summary.read_text())["max_reset_drift"] <= 1e-9


def test_config_file_and_override(smooth_file, tmp_path):
    cfg = tmp_path / "cfg.json"
    csv_path = tmp_path / "h.csv"
    cfg.write_text(json.dumps({"instance": str(smooth_file), "schedule": "star", "cycles": 3,
                               "treat": "prox", "csv": str(csv_path)}))
    assert main(["run", "--config", str(cfg), "--cycles", "2",
                 "--summary", str(tmp_path / "s.json")]) == EXIT_OK
    assert len(RunHistory.from_csv(csv_path)) == 16
    cfg.write_text(json.dumps({"instance": str(smooth_file), "bogus": 1}))
    assert main(["run", "--config", str(cfg)]) == EXIT_USAGE


def test_run_errors(smooth_file, tmp_path):
    assert main(["run", "--instance", str(tmp_path / "missing.json"),
                 "--schedule", "star"]) == EXIT_IO
    assert main(["run", "--instance", str(smooth_file), "--schedule", "zigzag"]) == EXIT_USAGE
    assert main(["run", "--instance", str(smooth_file), "--schedule", "star",
                 "--cycles", "0"]) == EXIT_USAGE
    assert main(["run", "--schedule", "star"]) == EXIT_USAGE
    garbage = tmp_path / "bad.json"
    garbage.write_text("{not json")
    assert main(["run", "--instance", str(garbage), "--schedule", "star"]) == EXIT_IO


def test_verify_clean_and_injected(smooth_file, capsys):
    assert main(["verify", "--instance", str(smooth_file), "--schedule", "star",
                 "--cycles", "5"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "minorant_domination" in out and "FAIL" not in out
    code = main(["verify", "--instance", str(smooth_file), "--schedule", "star", "--cycles", "2",
                 "--inject-minorant-bias", "0.5"])
    assert code == EXIT_INVARIANT
    line = [l for l in capsys.readouterr().out.splitlines() if l.startswith("minorant_domination")]
    assert "FAIL" in line[0]


def test_verify_all_prox_reports_gap_times_n(smooth_file, capsys):
    code = main(["verify", "--instance", str(smooth_file), "--schedule", "star",
                 "--cycles", "40", "--treat", "prox"])
    assert code == EXIT_OK
    assert "gap_times_n" in capsys.readouterr().out


def test_rates_round_trip(tmp_path, smooth_file):
    csv_path, out = tmp_path / "h.csv", tmp_path / "r.json"
    main(["run", "--instance", str(smooth_file), "--schedule", "star", "--cycles", "30",
          "--csv", str(csv_path), "--summary", str(tmp_path / "s.json")])
    assert main(["rates", "--csv", str(csv_path), "--window", "5:30", "--out", str(out)]) == 0
    fit = json.loads(out.read_text())
    assert fit["model"] == "linear" and fit["parameter"] < 1
    assert fit["window"] == [5, 30]


def test_rates_errors(tmp_path):
    empty = tmp_path / "e.csv"
    empty.write_text("n,w,dual_value,gap,dist_sq,step_norm_sq\n")
    assert main(["rates", "--csv", str(empty)]) == EXIT_USAGE
    assert main(["rates", "--csv", str(tmp_path / "none.csv")]) == EXIT_IO
    with pytest.raises(SystemExit) as info:
        main(["rates", "--csv", str(empty), "--window", "9:3"])
    assert info.value.code == EXIT_USAGE
