"""Scenario configs, engines, traces, summaries and the CLI."""

import csv
import json
import math

import numpy as np
import pytest

from fleetsim.cli import main
from fleetsim.errors import ConfigError, TraceError
from fleetsim.simrunner import (
    CONFIG_VERSION,
    SCHEMA_VERSION,
    TraceWriter,
    default_config,
    export_csv,
    parse_config,
    read_trace,
    run_scenario,
    summarize,
)

# ---------------------------------------------------------------- parsing


CONTAINMENT_YAML = """
version: 1
scenario: containment
n: 4
seed: 3
dt: 0.02
duration: 0.5
graph:
  complete: true
containment:
  leaders: [0, 1]
  gain: 2.0
  activation: 0.75
"""


def test_parse_containment_config():
    cfg = parse_config(CONTAINMENT_YAML)
    assert cfg.scenario == "containment"
    assert cfg.n == 4
    assert cfg.seed == 3
    assert cfg.dt == 0.02
    assert cfg.duration == 0.5
    assert cfg.version == CONFIG_VERSION
    assert cfg.graph.n == 4
    assert cfg.graph.adjacency.sum() == 12
    assert cfg.params["leaders"] == [0, 1]
    assert cfg.params["gain"] == 2.0
    assert cfg.params["activation"] == 0.75


def test_parse_accepts_loaded_mapping_and_normalized_raw_reparses():
    cfg = parse_config(CONTAINMENT_YAML)
    again = parse_config(cfg.raw)
    assert again.raw == cfg.raw
    assert np.array_equal(again.graph.adjacency, cfg.graph.adjacency)


def test_parse_defaults_dt_and_seed():
    cfg = parse_config({"scenario": "rendezvous", "n": 3})
    assert cfg.dt == 0.01
    assert cfg.seed == 0
    assert cfg.duration == 10.0
    # omitted graph means complete
    assert cfg.graph.adjacency.sum() == 6


@pytest.mark.parametrize(
    "mutate, fragment",
    [
        (lambda d: d.update(version=2), "version"),
        (lambda d: d.update(scenario="swarm"), "scenario"),
        (lambda d: d.update(n=0), "n"),
        (lambda d: d.update(dt=-0.1), "dt"),
        (lambda d: d.update(duration=0), "duration"),
        (lambda d: d.update(graph={"edges": [[0, 5]]}), "graph.edges[0]"),
        (lambda d: d.update(graph={"edges": [[0, 0]]}), "graph.edges[0]"),
        (lambda d: d.update(graph={"complete": True, "cycle": True}), "graph"),
        (lambda d: d.update(graph={"er": {"p": 1.5}}), "graph.er.p"),
        (lambda d: d.update(graph={"matrix": [[0, 2], [2, 0]]}), "graph.matrix"),
    ],
)
def test_parse_error_paths_name_the_field(mutate, fragment):
    data = {"scenario": "rendezvous", "n": 3}
    mutate(data)
    with pytest.raises(ConfigError) as err:
        parse_config(data)
    assert fragment in str(err.value)


def test_parse_rejects_non_mapping_and_bad_yaml():
    with pytest.raises(ConfigError, match="document"):
        parse_config([1, 2, 3])
    with pytest.raises(ConfigError):
        parse_config("scenario: [unclosed")


def test_containment_block_errors():
    base = {"scenario": "containment", "n": 3}
    with pytest.raises(ConfigError, match="containment"):
        parse_config(base)
    with pytest.raises(ConfigError, match=r"containment\.leaders\[1\]"):
        parse_config({**base, "containment": {"leaders": [0, 7]}})
    with pytest.raises(ConfigError, match=r"containment\.leaders\[1\]"):
        parse_config({**base, "containment": {"leaders": [0, 0]}})
    with pytest.raises(ConfigError, match="follower"):
        parse_config({**base, "containment": {"leaders": [0, 1, 2]}})
    with pytest.raises(ConfigError, match=r"containment\.activation"):
        parse_config({**base, "containment": {"leaders": [0], "activation": 0.0}})
    with pytest.raises(ConfigError, match=r"containment\.leader_positions"):
        parse_config(
            {**base, "containment": {"leaders": [0, 1], "leader_positions": [[0, 0]]}}
        )


def test_formation_block_errors():
    base = {"scenario": "formation", "n": 6}
    with pytest.raises(ConfigError, match=r"formation\.kind"):
        parse_config({**base, "n": 5, "formation": {"kind": "hexagon"}})
    with pytest.raises(ConfigError, match=r"formation\.kind"):
        parse_config({**base, "formation": {"kind": "wedge"}})
    with pytest.raises(ConfigError, match=r"formation\.positions"):
        parse_config(
            {**base, "formation": {"kind": "hexagon", "positions": [[0, 0]] * 5}}
        )
    with pytest.raises(ConfigError, match=r"formation\.model"):
        parse_config({**base, "formation": {"kind": "hexagon", "model": "boat"}})
    # declared distance without a matching communication edge
    with pytest.raises(ConfigError, match=r"formation\.distances"):
        parse_config(
            {
                "scenario": "formation",
                "n": 3,
                "graph": {"edges": [[0, 1], [1, 2]]},
                "formation": {"kind": "explicit", "distances": [[0, 2, 1.0]]},
            }
        )
    # malformed explicit rows reuse the FormationError text
    with pytest.raises(ConfigError, match=r"formation\.distances"):
        parse_config(
            {
                "scenario": "formation",
                "n": 3,
                "formation": {"kind": "explicit", "distances": [[0, 0, 1.0]]},
            }
        )


def test_assignment_block_errors():
    tasks = [[0.0, 0.0], [1.0, 1.0]]
    base = {"scenario": "assignment", "n": 2}
    with pytest.raises(ConfigError, match=r"assignment\.task_positions"):
        parse_config({**base, "assignment": {"task_positions": tasks[:1]}})
    with pytest.raises(ConfigError, match=r"assignment\.profile"):
        parse_config(
            {**base, "assignment": {"task_positions": tasks, "profile": "carrier"}}
        )
    with pytest.raises(ConfigError, match=r"assignment\.drop_prob"):
        parse_config(
            {**base, "assignment": {"task_positions": tasks, "drop_prob": 1.0}}
        )
    # lossy links only make sense on the best-effort profile
    with pytest.raises(ConfigError, match=r"assignment\.drop_prob"):
        parse_config(
            {
                **base,
                "assignment": {
                    "task_positions": tasks,
                    "profile": "static",
                    "drop_prob": 0.2,
                },
            }
        )


def test_mpc_block_errors():
    agent = {
        "A": [[1.0]], "B": [[1.0]], "C": [[1.0]], "D": [[0.0]],
        "x0": [0.1], "terminal_state": [0.0], "terminal_input": [0.0],
        "w_x": [1.0], "w_u": [0.1],
    }
    base = {"scenario": "mpc", "n": 1}
    with pytest.raises(ConfigError, match=r"mpc\.horizon"):
        parse_config({**base, "mpc": {"horizon": 0, "agents": [agent]}})
    with pytest.raises(ConfigError, match=r"mpc\.steps"):
        parse_config({**base, "mpc": {"steps": 0, "agents": [agent]}})
    with pytest.raises(ConfigError, match=r"mpc\.agents"):
        parse_config({**base, "mpc": {"agents": [agent, agent]}})
    with pytest.raises(ConfigError, match=r"mpc\.agents\[0\]\.A"):
        parse_config({**base, "mpc": {"agents": [{**agent, "A": "eye"}]}})
    with pytest.raises(ConfigError, match=r"mpc\.coupling"):
        parse_config({**base, "mpc": {"agents": [agent], "coupling": [1.0]}})


def test_graph_forms_realize_expected_adjacency():
    cyc = parse_config({"scenario": "rendezvous", "n": 4, "graph": {"cycle": True}})
    assert cyc.graph.adjacency.sum() == 8
    assert cyc.graph.adjacency[0, 1] == 1 and cyc.graph.adjacency[0, 3] == 1
    mat = parse_config(
        {"scenario": "rendezvous", "n": 2, "graph": {"matrix": [[0, 1], [1, 0]]}}
    )
    assert mat.graph.adjacency[0, 1] == 1
    er = parse_config(
        {"scenario": "rendezvous", "n": 5, "graph": {"er": {"p": 0.5, "seed": 7}}}
    )
    assert er.graph.n == 5
    edges = parse_config(
        {"scenario": "rendezvous", "n": 3, "graph": {"edges": [[0, 1]]}}
    )
    assert edges.graph.adjacency[1, 0] == 1  # undirected by default
    directed = parse_config(
        {
            "scenario": "rendezvous",
            "n": 3,
            "graph": {"edges": [[0, 1]], "directed": True},
        }
    )
    assert directed.graph.adjacency[0, 1] == 1
    assert directed.graph.adjacency[1, 0] == 0


def test_default_config_each_scenario():
    for scenario in ("containment", "formation", "rendezvous", "assignment", "mpc"):
        n = 6 if scenario == "formation" else 4
        cfg = default_config(scenario, n, seed=1)
        assert cfg.scenario == scenario
        assert cfg.n == n
    with pytest.raises(ConfigError):
        default_config("swarm", 4)
    with pytest.raises(ConfigError):
        default_config("formation", 5)


def test_default_assignment_has_hidden_backlog():
    cfg = default_config("assignment", 4, seed=0)
    assert len(cfg.params["task_positions"]) == 4
    assert len(cfg.params["hidden_tasks"]) == 4


# ---------------------------------------------------------------- engines


def _short(scenario, tmp_path, name, **over):
    defaults = {"containment": 0.1, "formation": 0.1, "rendezvous": 0.1, "assignment": 0.3}
    cfg = default_config(
        scenario,
        over.pop("n", 6 if scenario == "formation" else 3),
        seed=over.pop("seed", 0),
        duration=over.pop("duration", defaults.get(scenario)),
        **over,
    )
    out = tmp_path / name
    summary = run_scenario(cfg, str(out))
    return cfg, summary, str(out / "trace.jsonl")


def test_run_scenario_reports_wall_time_but_trace_stays_clean(tmp_path):
    cfg, summary, trace = _short("rendezvous", tmp_path, "rdv")
    assert summary["wall_seconds"] > 0
    assert summary["trace"] == trace
    header, records = read_trace(trace)
    assert header["schema"] == SCHEMA_VERSION
    assert header["config"] == cfg.raw
    tail = [r for r in records if r["kind"] == "summary"]
    assert len(tail) == 1
    assert "wall_seconds" not in tail[0]
    assert "trace" not in tail[0]


def test_run_scenario_accepts_explicit_jsonl_path(tmp_path):
    cfg = default_config("rendezvous", 3, seed=0, duration=0.05)
    path = tmp_path / "custom.jsonl"
    summary = run_scenario(cfg, str(path))
    assert summary["trace"] == str(path)
    read_trace(str(path))


def test_traces_are_byte_identical_for_same_config_and_seed(tmp_path):
    for scenario in ("containment", "rendezvous", "assignment"):
        _, _, a = _short(scenario, tmp_path, scenario + "_a")
        _, _, b = _short(scenario, tmp_path, scenario + "_b")
        assert open(a, "rb").read() == open(b, "rb").read(), scenario


def test_traces_differ_across_seeds(tmp_path):
    _, _, a = _short("rendezvous", tmp_path, "seed0", seed=0)
    _, _, b = _short("rendezvous", tmp_path, "seed1", seed=1)
    assert open(a, "rb").read() != open(b, "rb").read()


def test_formation_positions_override_initial_layout(tmp_path):
    cfg = default_config("formation", 6, seed=0, duration=0.02)
    raw = dict(cfg.raw)
    slots = [
        [math.cos(k * math.pi / 3), math.sin(k * math.pi / 3)] for k in range(6)
    ]
    raw["formation"] = dict(raw["formation"], positions=slots)
    cfg = parse_config(raw)
    summary = run_scenario(cfg, str(tmp_path))
    _, records = read_trace(summary["trace"])
    first = {
        r["agent"]: r["pos"] for r in records if r["kind"] == "pose" and r["t"] == 0.0
    }
    for k in range(6):
        assert first[k] == pytest.approx(slots[k], abs=1e-12)


def test_rendezvous_contracts_the_spread(tmp_path):
    cfg = default_config("rendezvous", 4, seed=2, duration=2.0)
    summary = run_scenario(cfg, str(tmp_path))
    stats = summarize(summary["trace"])
    assert stats["scenario"] == "rendezvous"
    assert stats["final_spread"] < 0.2


def test_containment_summary_metrics(tmp_path):
    cfg, summary, trace = _short("containment", tmp_path, "cont", n=4, duration=2.0)
    stats = summarize(trace)
    assert stats["final_hull_distance"] is not None
    assert stats["max_hull_distance_final_second"] >= stats["final_hull_distance"] - 1e-12


def test_formation_summary_metrics(tmp_path):
    cfg, summary, trace = _short("formation", tmp_path, "form", duration=0.5)
    stats = summarize(trace)
    assert stats["final_formation_error"] is not None
    assert stats["final_formation_error"] >= 0.0


def test_assignment_run_completes_all_tasks(tmp_path):
    cfg = default_config("assignment", 3, seed=0, duration=30.0)
    summary = run_scenario(cfg, str(tmp_path))
    assert summary["completed_tasks"] == summary["total_tasks"] == 6
    assert summary["finished_at"] is not None
    stats = summarize(summary["trace"])
    assert stats["completed_tasks"] == 6
    assert stats["reveals"] == 6
    assert stats["gantt_rows"] == 6
    assert stats["optimality_gap"] == pytest.approx(0.0, abs=1e-9)


def test_mpc_engine_keeps_coupling_residual_tiny(tmp_path):
    cfg = default_config("mpc", 2, seed=0)
    summary = run_scenario(cfg, str(tmp_path))
    assert summary["steps"] == 30
    assert summary["max_coupling_residual"] <= 1e-8
    stats = summarize(summary["trace"])
    assert stats["max_coupling_residual"] <= 1e-8
    assert stats["closed_loop_cost"] == pytest.approx(summary["closed_loop_cost"])
    assert stats["steps"] == 30


# ---------------------------------------------------------------- traces


def test_trace_writer_counts_and_rejects_kindless_records(tmp_path):
    path = tmp_path / "t.jsonl"
    with TraceWriter(str(path), {"scenario": "rendezvous", "n": 1}) as w:
        assert w.count == 1  # header
        w.write({"kind": "pose", "t": 0.0, "agent": 0, "pos": [0.0, 0.0]})
        assert w.count == 2
        with pytest.raises(TraceError):
            w.write({"t": 0.0})
    header, records = read_trace(str(path))
    assert header["config"]["n"] == 1
    assert len(records) == 1


def test_header_only_trace_summarizes_to_zero_rows(tmp_path):
    path = tmp_path / "empty.jsonl"
    TraceWriter(str(path), {"scenario": "rendezvous", "n": 2}).close()
    stats = summarize(str(path))
    assert stats["records"] == 0
    assert stats["final_spread"] is None


def test_read_trace_error_paths(tmp_path):
    with pytest.raises(TraceError, match="cannot open"):
        read_trace(str(tmp_path / "missing.jsonl"))

    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    with pytest.raises(TraceError, match="empty"):
        read_trace(str(empty))

    headerless = tmp_path / "headerless.jsonl"
    headerless.write_text('{"kind": "pose"}\n')
    with pytest.raises(TraceError, match="header"):
        read_trace(str(headerless))

    skewed = tmp_path / "skewed.jsonl"
    skewed.write_text(json.dumps({"kind": "header", "schema": 999, "config": {}}) + "\n")
    with pytest.raises(TraceError, match="schema"):
        read_trace(str(skewed))

    garbled = tmp_path / "garbled.jsonl"
    garbled.write_text(
        json.dumps({"kind": "header", "schema": SCHEMA_VERSION, "config": {}})
        + "\nnot json\n"
    )
    with pytest.raises(TraceError, match="line 2"):
        read_trace(str(garbled))


def test_export_csv_positions_and_metric_tables(tmp_path):
    _, summary, trace = _short("rendezvous", tmp_path, "rdv")
    out = tmp_path / "csv"
    written = export_csv(trace, str(out))
    names = {p.rsplit("/", 1)[-1] for p in written}
    assert names == {"positions.csv", "spread.csv"}
    with open(out / "positions.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "agent", "x", "y"]
    assert len(rows) > 1


def test_export_csv_gantt_rows_match_completions(tmp_path):
    cfg = default_config("assignment", 3, seed=0, duration=30.0)
    summary = run_scenario(cfg, str(tmp_path))
    out = tmp_path / "csv"
    written = export_csv(summary["trace"], str(out))
    gantt = [p for p in written if p.endswith("gantt.csv")]
    assert gantt
    with open(gantt[0]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["task", "start", "end", "robot"]
    assert len(rows) - 1 == summary["completed_tasks"]
    for row in rows[1:]:
        assert float(row[1]) <= float(row[2])


def test_export_csv_mpc_residual_table(tmp_path):
    cfg = default_config("mpc", 2, seed=0)
    summary = run_scenario(cfg, str(tmp_path))
    out = tmp_path / "csv"
    written = export_csv(summary["trace"], str(out))
    residual = [p for p in written if p.endswith("coupling_residual.csv")]
    with open(residual[0]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "residual", "stage_cost"]
    assert len(rows) - 1 == 30


# ---------------------------------------------------------------- CLI


def test_cli_run_writes_trace_and_prints_summary(tmp_path, capsys):
    out = tmp_path / "run"
    out.mkdir()
    code = main(
        ["run", "rendezvous", "-n", "3", "--seed", "4", "--duration", "0.1",
         "--out", str(out)]
    )
    assert code == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["n"] == 3
    header, _ = read_trace(str(out / "trace.jsonl"))
    assert header["config"]["seed"] == 4


def test_cli_graph_option_forms(tmp_path, capsys):
    out = tmp_path / "g"
    out.mkdir()
    assert main(
        ["run", "rendezvous", "-n", "3", "--duration", "0.05", "--graph", "cycle",
         "--out", str(out)]
    ) == 0
    header, _ = read_trace(str(out / "trace.jsonl"))
    assert header["config"]["graph"] == {"cycle": True}
    capsys.readouterr()

    adj = tmp_path / "adj.txt"
    adj.write_text("# ring of three\n0 1 1\n1 0 1\n1 1 0\n")
    assert main(
        ["run", "rendezvous", "-n", "3", "--duration", "0.05",
         "--graph", str(adj), "--out", str(out)]
    ) == 0
    header, _ = read_trace(str(out / "trace.jsonl"))
    assert header["config"]["graph"]["matrix"] == [[0, 1, 1], [1, 0, 1], [1, 1, 0]]
    capsys.readouterr()


def test_cli_config_errors_exit_2(tmp_path, capsys):
    # hexagon formation needs n=6
    assert main(["run", "formation", "-n", "5", "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err
    # malformed er spec
    assert main(
        ["run", "rendezvous", "--graph", "er:lots", "--out", str(tmp_path)]
    ) == 2
    capsys.readouterr()
    # unreadable graph file
    assert main(
        ["run", "rendezvous", "--graph", str(tmp_path / "nope.txt"), "--out", str(tmp_path)]
    ) == 2
    capsys.readouterr()


def test_cli_config_file_with_flag_overrides(tmp_path, capsys):
    cfg_file = tmp_path / "cfg.yaml"
    cfg_file.write_text(
        "scenario: rendezvous\nn: 4\nseed: 1\nduration: 0.1\n"
    )
    out = tmp_path / "run"
    out.mkdir()
    code = main(
        ["run", "rendezvous", "--config", str(cfg_file), "--seed", "9",
         "--out", str(out)]
    )
    assert code == 0
    capsys.readouterr()
    header, _ = read_trace(str(out / "trace.jsonl"))
    assert header["config"]["seed"] == 9
    assert header["config"]["n"] == 4

    # the config file pins the scenario; a different positional is an error
    assert main(["run", "containment", "--config", str(cfg_file)]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_scenario_failures_exit_3(tmp_path, capsys):
    cfg_file = tmp_path / "tight.yaml"
    cfg_file.write_text(
        "scenario: assignment\n"
        "n: 2\n"
        "duration: 1.0\n"
        "assignment:\n"
        "  task_positions: [[0.0, 0.0], [1.0, 1.0]]\n"
        "  round_budget: 1\n"
    )
    code = main(
        ["run", "assignment", "--config", str(cfg_file), "--out", str(tmp_path)]
    )
    assert code == 3
    assert "scenario error" in capsys.readouterr().err


def test_cli_summarize_and_export(tmp_path, capsys):
    _, summary, trace = _short("rendezvous", tmp_path, "rdv")
    assert main(["summarize", trace]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["scenario"] == "rendezvous"

    out = tmp_path / "csv"
    assert main(["export-csv", trace, "--out", str(out)]) == 0
    listed = capsys.readouterr().out.strip().splitlines()
    assert any(p.endswith("spread.csv") for p in listed)

    # a broken trace is a scenario failure, not a config failure
    assert main(["summarize", str(tmp_path / "missing.jsonl")]) == 3
    capsys.readouterr()
