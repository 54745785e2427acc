"""Command-line interface: subcommands, formats, determinism, exit codes."""

import json
import math

import pytest

from nqkd.cli import main, parse_n_list, parse_noise, parse_sweep

TABLE_QBER_SUBSET = {2: 0.126193, 5: 0.295974, 17: 0.341045}


def run_cli(args):
    return main(args)


def test_parse_helpers():
    sweep = parse_sweep("Q:0:0.3:7")
    assert sweep.variable == "Q" and sweep.steps == 7
    assert sweep.values()[0] == 0.0
    assert sweep.values()[-1] == pytest.approx(0.3)
    assert parse_n_list("2..5") == [2, 3, 4, 5]
    assert parse_n_list("2,9,inf") == [2, 9, math.inf]
    with pytest.raises(ValueError):
        parse_sweep("Q:0:0.3")
    with pytest.raises(ValueError):
        parse_sweep("W:0:0.3:5")
    with pytest.raises(ValueError):
        parse_sweep("Q:0.3:0.1:5")
    with pytest.raises(ValueError):
        parse_sweep("Q:0:0.3:1")
    assert parse_noise(None, "star") is None
    with pytest.raises(ValueError):
        parse_noise("gate", "star")


def test_rates_csv_crosses_zero_near_threshold(tmp_path):
    out = tmp_path / "rates.csv"
    code = run_cli(
        ["rates", "--sweep", "Q:0:0.3:301", "--n", "2,3,inf", "--out", str(out)]
    )
    assert code == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "n,variable,value,r_inf,rate_nqkd,rate_2qkd"
    rows = [line.split(",") for line in lines[1:]]
    assert len(rows) == 3 * 301
    # the N=2 curve changes sign within one grid step of the known threshold
    n2 = [(float(r[2]), float(r[3])) for r in rows if r[0] == "2"]
    crossing = [q for (q, r), (q2, r2) in zip(n2, n2[1:]) if r > 0 >= r2]
    assert len(crossing) == 1
    assert abs(crossing[0] - 0.126193) < 0.002
    inf_rows = [r for r in rows if r[0] == "inf"]
    assert len(inf_rows) == 301


def test_rates_byte_identical_reruns(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["rates", "--sweep", "f_G:0:0.2:50", "--n", "2..5", "--out"]
    assert run_cli(args + [str(a)]) == 0
    assert run_cli(args + [str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_rates_channel_sweep_json(tmp_path):
    out = tmp_path / "rates.json"
    code = run_cli(
        [
            "rates", "--sweep", "f_C:0:0.1:5", "--n", "3",
            "--topology", "router", "--format", "json", "--out", str(out),
        ]
    )
    assert code == 0
    rows = json.loads(out.read_text())
    assert rows[0]["value"] == 0.0
    assert rows[0]["r_inf"] == pytest.approx(1.0)


def test_rates_usage_errors(tmp_path, capsys):
    assert run_cli(["rates", "--sweep", "Q:0:0.3:1", "--n", "2"]) == 2
    assert run_cli(["rates", "--sweep", "f_G:0:0.2:5", "--n", "inf"]) == 2
    assert run_cli(["rates", "--sweep", "Q:0:0.95:5", "--n", "2"]) == 2  # beyond admissible Q


def test_thresholds_qber_table(tmp_path):
    out = tmp_path / "thr.csv"
    assert run_cli(["thresholds", "--kind", "qber", "--n", "2,5,17,inf", "--out", str(out)]) == 0
    lines = out.read_text().strip().split("\n")[1:]
    values = {row.split(",")[0]: float(row.split(",")[2]) for row in lines}
    for n, expected in TABLE_QBER_SUBSET.items():
        assert values[str(n)] == pytest.approx(expected, abs=1e-5)
    assert values["inf"] == pytest.approx(0.341071, abs=1e-5)


def test_thresholds_gate_and_channel(tmp_path):
    out = tmp_path / "gate.csv"
    assert run_cli(["thresholds", "--kind", "gate", "--n", "3,4", "--out", str(out)]) == 0
    rows = out.read_text().strip().split("\n")[1:]
    assert float(rows[0].split(",")[2]) == pytest.approx(0.0725754, abs=2e-4)
    assert float(rows[1].split(",")[2]) == pytest.approx(0.0689939, abs=2e-4)
    out2 = tmp_path / "chan.csv"
    assert run_cli(["thresholds", "--kind", "channel", "--n", "3..5", "--out", str(out2)]) == 0
    for row in out2.read_text().strip().split("\n")[1:]:
        assert 0.0 < float(row.split(",")[2]) < 1.0
    assert run_cli(["thresholds", "--kind", "gate", "--n", "2"]) == 2
    assert run_cli(["thresholds", "--kind", "gate", "--n", "inf"]) == 2


def test_simulate_reproducible_summary(tmp_path):
    config = {
        "n_parties": 3,
        "n_rounds": 20000,
        "p_estimation": 0.05,
        "seed": 7,
        "state": {"model": "depolarized", "q": 0.1},
    }
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(config))
    out_a, out_b = tmp_path / "a.json", tmp_path / "b.json"
    assert run_cli(["simulate", "--config", str(cfg), "--out", str(out_a)]) == 0
    assert run_cli(["simulate", "--config", str(cfg), "--out", str(out_b)]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()
    summary = json.loads(out_a.read_text())
    assert abs(summary["estimates"]["q_z"] - 0.1) < 0.02
    assert summary["key_length_estimate"] > 0

    transcript = tmp_path / "t.jsonl"
    assert run_cli(
        ["simulate", "--config", str(cfg), "--transcript", str(transcript), "--out", str(out_a)]
    ) == 0
    assert sum(1 for _ in transcript.open()) == 20000


def test_simulate_seed_override_changes_output(tmp_path):
    config = {
        "n_parties": 3,
        "n_rounds": 5000,
        "state": {"model": "depolarized", "q": 0.1},
        "seed": 1,
    }
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(config))
    out_a, out_b = tmp_path / "a.json", tmp_path / "b.json"
    assert run_cli(["simulate", "--config", str(cfg), "--out", str(out_a)]) == 0
    assert run_cli(["simulate", "--config", str(cfg), "--seed", "2", "--out", str(out_b)]) == 0
    assert json.loads(out_a.read_text())["estimates"] != json.loads(out_b.read_text())["estimates"]


def test_simulate_above_threshold_flags_zero_key(tmp_path):
    config = {
        "n_parties": 3,
        "n_rounds": 30000,
        "seed": 5,
        "state": {"model": "depolarized", "q": 0.25},
    }
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(config))
    out = tmp_path / "summary.json"
    assert run_cli(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    summary = json.loads(out.read_text())
    assert summary["key_length_estimate"] == 0.0
    assert summary["secret_fraction"] < 0.0


def test_simulate_config_errors(tmp_path):
    missing = tmp_path / "nope.json"
    assert run_cli(["simulate", "--config", str(missing)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"n_parties": 3, "n_rounds": 0, "state": {"model": "pure_ghz"}}))
    assert run_cli(["simulate", "--config", str(bad)]) == 2


def test_network_comparison_advantage_flags(tmp_path):
    out = tmp_path / "net.json"
    assert run_cli(
        ["network", "--topology", "router", "--n", "3", "--noise", "gate:0.05", "--out", str(out)]
    ) == 0
    assert json.loads(out.read_text())["advantage"] is True
    assert run_cli(
        ["network", "--topology", "router", "--n", "3", "--noise", "gate:0.10", "--out", str(out)]
    ) == 0
    assert json.loads(out.read_text())["advantage"] is False
    assert run_cli(["network", "--topology", "butterfly", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["ratio"] == pytest.approx(2.0)


def test_network_graph_file_and_sweep(tmp_path):
    from nqkd.network import router_network

    graph = tmp_path / "graph.json"
    graph.write_text(router_network(4).to_json())
    out = tmp_path / "cmp.json"
    assert run_cli(["network", "--graph", str(graph), "--out", str(out)]) == 0
    obj = json.loads(out.read_text())
    assert obj["n_parties"] == 4
    assert obj["ratio"] == pytest.approx(3.0)

    sweep_out = tmp_path / "sweep.csv"
    assert run_cli(
        [
            "network", "--topology", "router", "--n", "3",
            "--sweep", "f_G:0:0.12:13", "--out", str(sweep_out),
        ]
    ) == 0
    lines = sweep_out.read_text().strip().split("\n")
    assert lines[0] == "f,rate_nqkd,rate_2qkd,advantage"
    flags = [row.split(",")[3] for row in lines[1:]]
    assert flags[0] == "True" and flags[-1] == "False"
    assert run_cli(["network", "--topology", "router", "--n", "3", "--sweep", "Q:0:0.1:5"]) == 2


def test_numeric_failures_exit_three(monkeypatch):
    import nqkd.cli as cli
    from nqkd.keyrate import SolverError

    def boom(*args, **kwargs):
        raise SolverError("no crossover")

    monkeypatch.setattr(cli.keyrate, "nqkd_gate_threshold", boom)
    assert run_cli(["thresholds", "--kind", "gate", "--n", "3"]) == 3
