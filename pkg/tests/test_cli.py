import csv
import io
import json
import math

import pytest

from stopping_game import cli
from stopping_game.exceptions import NoSignChange

SMALL_MC = """\
[mc]
paths = 20000
scan_paths = 4000
scan_grid = 5
block_size = 4096
"""


def run(argv, env=None):
    buf = io.StringIO()
    code = cli.main(argv, stdout=buf, env=env or {})
    return code, buf.getvalue()


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL_MC)
    return str(path)


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_solve_csv():
    code, out = run(["solve"])
    assert code == 0
    fields = {r["field"]: r["value"] for r in rows_of(out)}
    assert float(fields["a_star"]) == pytest.approx(3.69595458095458, abs=1e-9)
    assert float(fields["exp_l_star"]) == pytest.approx(55.4855, abs=1e-3)
    assert fields["n_roots"] == "1"


def test_solve_json():
    code, out = run(["solve", "--format", "json"])
    doc = json.loads(out)
    assert code == 0
    assert doc["all_roots"] == [doc["l_star"]]


def test_env_override_changes_lambda():
    base = json.loads(run(["solve", "--format", "json"])[1])
    code, out = run(["solve", "--format", "json"], env={"STOPPING_GAME_GAME_LAMBDA": "5"})
    assert code == 0
    assert json.loads(out)["a_star"] > base["a_star"]


def test_env_override_loses_to_flag():
    code, out = run(["solve"], env={"STOPPING_GAME_OUTPUT_FORMAT": "json"})
    json.loads(out)
    code, out = run(["solve", "--format", "csv"], env={"STOPPING_GAME_OUTPUT_FORMAT": "json"})
    assert out.startswith("field,value")


def test_config_file_beats_defaults_and_env_beats_file(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[game]\nlambda = 2\n")
    a2 = json.loads(run(["solve", "--format", "json", "--config", str(path)])[1])["a_star"]
    a5 = json.loads(run(["solve", "--format", "json", "--config", str(path)],
                        env={"STOPPING_GAME_GAME_LAMBDA": "5"})[1])["a_star"]
    assert a2 == pytest.approx(3.76188, abs=1e-5)
    assert a5 == pytest.approx(3.82389, abs=1e-5)


@pytest.mark.parametrize("text,needle", [
    ("[game]\nlamda = 2\n", ":2: unknown key 'lamda'"),
    ("[gmae]\nq = 1\n", "unknown section"),
    ("[game]\nq = abc\n", "not a valid float"),
    ("[game]\nq = -1\n", "invalid parameters"),
    ("[output]\nformat = xml\n", "csv or json"),
    ("[mc]\nhorizon = 10\n", "truncation"),
    ("not an ini", "File contains no section headers"),
])
def test_config_errors_exit_2(tmp_path, capsys, text, needle):
    path = tmp_path / "bad.ini"
    path.write_text(text)
    code, _ = run(["solve", "--config", str(path)])
    assert code == 2
    assert needle in capsys.readouterr().err


def test_missing_config_file(capsys):
    assert run(["solve", "--config", "/nonexistent/x.ini"])[0] == 2
    assert "cannot read config" in capsys.readouterr().err


def test_bad_env_value(capsys):
    assert run(["solve"], env={"STOPPING_GAME_MC_ANTITHETIC": "maybe"})[0] == 2
    assert "environment STOPPING_GAME_MC_ANTITHETIC" in capsys.readouterr().err


def test_usage_errors_exit_2():
    assert run([])[0] == 2
    assert run(["bogus"])[0] == 2
    assert run(["solve", "--format", "xml"])[0] == 2


def test_solver_failure_exit_1(monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise NoSignChange("forced")
    monkeypatch.setattr(cli, "solve_equilibrium", boom)
    assert run(["solve"])[0] == 1
    assert "NoSignChange" in capsys.readouterr().err


def test_curves_schema():
    code, out = run(["curves", "--points", "5", "--price-min", "30", "--price-max", "70"])
    rows = rows_of(out)
    assert code == 0 and len(rows) == 5
    assert list(rows[0]) == ["price", "x", "v_c", "v_p", "f_c", "f_p"]
    assert float(rows[0]["x"]) == pytest.approx(math.log(30))
    assert run(["curves", "--price-min", "70", "--price-max", "30"])[0] == 2


def test_sweep_writes_files(tmp_path):
    code, out = run(["sweep", "--lambdas", "0.5,1,2", "--points", "3", "--out", str(tmp_path)])
    assert code == 0 and out == ""
    rows = rows_of((tmp_path / "sweep.csv").read_text())
    assert [float(r["lambda"]) for r in rows] == [0.5, 1.0, 2.0]
    assert len(rows_of((tmp_path / "sweep_curves.csv").read_text())) == 9


@pytest.mark.parametrize("lambdas", ["", "2,1", "a,b"])
def test_sweep_bad_lambdas(lambdas):
    assert run(["sweep", "--lambdas", lambdas])[0] == 2


def test_outputs_byte_identical(tmp_path):
    first = run(["sweep", "--lambdas", "1,2", "--points", "4", "--format", "json"])[1]
    second = run(["sweep", "--lambdas", "1,2", "--points", "4", "--format", "json"])[1]
    assert first == second


def test_voi_single_cell():
    code, out = run(["voi", "--prices", "60", "--lambdas", "1"])
    row = rows_of(out)[0]
    assert code == 0 and row["status"] == "ok"
    assert float(row["delta"]) == pytest.approx(7.5915332875785, abs=1e-6)


def test_verify_passes_and_is_reproducible(small_cfg, tmp_path):
    code, out = run(["verify", "--config", small_cfg, "--seed", "7"])
    assert code == 0, out
    again = run(["verify", "--config", small_cfg, "--seed", "7"])[1]
    assert out == again
    statuses = {r["check"]: r["status"] for r in rows_of(out)}
    assert statuses["first_order_c"] == "PASS"
    assert statuses["mc_scan_p"] == "PASS"


def test_verify_wrong_threshold_exit_1(small_cfg):
    code, out = run(["verify", "--config", small_cfg, "--a-star", "3.8"])
    assert code == 1
    statuses = {r["check"]: r["status"] for r in rows_of(out)}
    assert statuses["first_order_c"] == "FAIL"


def test_verify_too_few_paths_inconclusive(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text("[mc]\npaths = 20\nscan_paths = 20\nscan_grid = 3\nblock_size = 10\n")
    code, out = run(["verify", "--config", str(path), "--format", "json"])
    doc = json.loads(out)
    assert code == 3
    assert doc["exit_code"] == 3
    assert any(c["status"] == "INCONCLUSIVE" for c in doc["monte_carlo"])
