import csv
import io
import json

import numpy as np
import pytest

from qbranch import cli
from qbranch.errors import ConvergenceError


def run_quiet(argv):
    out, err = io.StringIO(), io.StringIO()
    status, doc = cli.run(argv, stdout=out, stderr=err)
    return status, doc, out.getvalue(), err.getvalue()


def strip_time(text):
    d = json.loads(text)
    d["metadata"].pop("timestamp")
    return json.dumps(d, sort_keys=True)


def test_bell_example():
    status, doc, out, _ = run_quiet(["bell", "--theta", "1.5707963", "--replicas", "10000", "--seed", "7"])
    assert status == 0
    o = json.loads(out)["outputs"]
    assert abs(o["correlation"]) <= 0.03
    assert o["agree"] + o["disagree"] == 10_000
    assert o["stderr"] == pytest.approx(0.01, rel=1e-6)
    assert doc.metadata["seed"] == 7


def test_bounds_example():
    status, doc, _, _ = run_quiet(["bounds", "--mode", "point-pair", "--n", "2"])
    assert status == 0
    o = doc.outputs
    assert o["lower"] == pytest.approx(0.5554, abs=1e-4)
    assert o["upper"] == pytest.approx(4.253, abs=1e-3)
    assert o["constructive_cost"] == pytest.approx(o["upper"], abs=1e-9)
    assert o["constructive_overlap"] >= 1 - 1e-9
    assert o["audit_lower"] >= o["lower"] - 1e-9


def test_bounds_extended():
    status, doc, _, _ = run_quiet(["bounds", "--mode", "extended", "--n", "2", "--r", "2"])
    assert status == 0
    assert doc.outputs["constructive_cost"] == pytest.approx(doc.outputs["upper"], abs=1e-9)


def test_lie_closure_example():
    status, doc, _, _ = run_quiet(["lie-closure", "--sites", "2"])
    assert status == 0
    assert doc.outputs["dimension"] == 65
    assert doc.outputs["passed"] is True


def test_stern_gerlach_command(tmp_path):
    table = tmp_path / "sg.csv"
    status, doc, _, _ = run_quiet(["stern-gerlach", "--times", "2,5,10", "--table", str(table)])
    assert status == 0
    assert list(doc.outputs["weights"]) == [0.5, 0.5]
    rows = list(csv.DictReader(open(table)))
    assert [float(r["t"]) for r in rows] == [2.0, 5.0, 10.0]


def test_branch_command_limits():
    _, small, _, _ = run_quiet(["branch", "--sites", "3", "--b", "0.01"])
    _, large, _, _ = run_quiet(["branch", "--sites", "3", "--b", "5"])
    assert small.outputs["branches"] == 2
    assert np.allclose(small.outputs["weights"], [0.5, 0.5], atol=1e-9)
    assert large.outputs["branches"] == 1


@pytest.mark.parametrize("argv", [
    ["bell", "--theta", "4.0"],
    ["bell", "--replicas", "0"],
    ["bell", "--bogus", "1"],
    ["nonsense"],
    ["bounds", "--n", "two"],
    ["stern-gerlach", "--times", "a,b"],
    ["stern-gerlach", "--r", "-1"],
])
def test_argument_errors_exit_2(argv):
    status, doc, out, err = run_quiet(argv)
    assert status == 2
    assert doc is None and out == ""
    assert err.startswith("qbranch:")


def test_cap_exceeded_exit_3():
    status, _, _, err = run_quiet(["lie-closure", "--sites", "2", "--cap", "10"])
    assert status == 3
    assert "cap" in err


def test_non_convergence_exit_4(monkeypatch):
    def boom(settings):
        raise ConvergenceError("stuck")

    monkeypatch.setitem(cli.COMMANDS, "bounds", boom)
    status, _, _, err = run_quiet(["bounds"])
    assert status == 4
    assert "no convergence" in err


def test_error_messages_are_distinct():
    msgs = {run_quiet(a)[3].split(":")[1] for a in (["bell", "--theta", "9"], ["bell", "--x"],
                                                   ["lie-closure", "--cap", "1"])}
    assert len(msgs) == 3


def test_main_exits_with_status():
    with pytest.raises(SystemExit) as e:
        cli.main(["bell", "--theta", "-1"])
    assert e.value.code == 2


def test_config_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# bell settings\ntheta = 0.0\nreplicas = 50\nseed = 3\n")
    _, doc, _, _ = run_quiet(["bell", "--config", str(cfg)])
    assert doc.inputs["theta"] == 0.0 and doc.inputs["replicas"] == 50
    assert doc.outputs["correlation"] == -1.0
    _, doc, _, _ = run_quiet(["bell", "--config", str(cfg), "--replicas", "80"])
    assert doc.inputs["replicas"] == 80
    assert doc.inputs["seed"] == 3
    assert doc.inputs["w"] == cli.DEFAULTS["bell"]["w"]


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("theta 0.3\n")
    assert run_quiet(["bell", "--config", str(bad)])[0] == 2
    bad.write_text("colour = red\n")
    assert run_quiet(["bell", "--config", str(bad)])[0] == 2
    assert run_quiet(["bell", "--config", str(tmp_path / "missing.cfg")])[0] == 2


def test_document_round_trip(tmp_path):
    path = tmp_path / "bell.json"
    status, doc, out, _ = run_quiet(["bell", "--replicas", "500", "--out", str(path)])
    assert status == 0 and out == ""
    text = path.read_text()
    back = cli.ResultDocument.from_json(text)
    assert back.to_json() == text
    assert back.command == "bell"
    assert set(back.metadata) == {"version", "seed", "timestamp"}


@pytest.mark.parametrize("argv", [
    ["bell", "--theta", "0.8", "--replicas", "3000", "--seed", "9"],
    ["bounds", "--n", "3"],
    ["stern-gerlach"],
])
def test_identical_runs_identical_documents(argv):
    a = run_quiet(argv)[2]
    b = run_quiet(argv)[2]
    assert strip_time(a) == strip_time(b)


def test_bell_table(tmp_path):
    table = tmp_path / "bell.csv"
    _, doc, _, _ = run_quiet(["bell", "--theta", "1.0", "--replicas", "2000", "--table", str(table)])
    rows = list(csv.DictReader(open(table)))
    assert [r["branch"] for r in rows] == ["uu", "ud", "du", "dd"]
    assert sum(int(r["count"]) for r in rows) == 2000
    assert {r["branch"]: int(r["count"]) for r in rows} == doc.outputs["counts"]
