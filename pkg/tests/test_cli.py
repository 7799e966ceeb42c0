import ast
import json
import subprocess
import sys
from pathlib import Path

import pytest

from v2rgame import cli, scenario

REF = scenario.bundled("reference")
HIGHWAY = scenario.bundled("paper_table2")


def ref_data():
    return json.loads(REF.read_text())


def write(tmp_path, data, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestScenario:
    def test_bundled_highway_metadata(self):
        scn = scenario.load(HIGHWAY)
        assert scn.data["metadata"]["v_max"] == 35
        assert scn.data["metadata"]["v_min"] == 10
        assert [c["deadline"] for c in scn.data["road"]["classes"]] == [0.0002, 0.00035]
        assert scn.d == 1200 and len(scn.data["channels"]) == 3

    @pytest.mark.parametrize("path", [REF, HIGHWAY], ids=["reference", "highway"])
    def test_round_trip(self, path):
        scn = scenario.load(path)
        again = scenario.loads(scenario.dumps(scn))
        assert again == scn
        assert scenario.dumps(again) == scenario.dumps(scn)

    def test_missing_rates_names_field(self):
        data = ref_data()
        del data["channels"][1]["rates"]
        with pytest.raises(scenario.ScenarioError) as err:
            scenario.validate(data)
        assert "channels[1].rates" in str(err.value)

    def test_collects_all_problems(self):
        data = ref_data()
        data["road"]["classes"][0]["lambda"] = -1
        data["channels"][0]["rates"] = [[1, 2]]
        data["sim"] = {"horizon": 10, "warmup": 20}
        with pytest.raises(scenario.ScenarioError) as err:
            scenario.validate(data)
        paths = [p.split(":")[0] for p in err.value.problems]
        assert {"road.classes[0].lambda", "channels[0].rates", "sim.warmup"} <= set(paths)

    @pytest.mark.parametrize("mutate, field", [
        (lambda d: d["regions"].update(radii=[600, 1200]), "regions.radii"),
        (lambda d: d["game"].update(available=[[1, 1, 0]]), "game.available"),
        (lambda d: d["pricing"].update(grid=[[0, -1], [0]]), "pricing.grid"),
        (lambda d: d["channels"][0]["mac"].update(m=9), "channels[0].mac"),
        (lambda d: d.update(schema=7), "schema"),
        (lambda d: d["output"].update(format="xml"), "output.format"),
        (lambda d: d["game"].update(zeta=[0.1]), "game.zeta"),
    ])
    def test_field_errors(self, mutate, field):
        data = ref_data()
        mutate(data)
        with pytest.raises(scenario.ScenarioError) as err:
            scenario.validate(data)
        assert any(p.startswith(field) for p in err.value.problems)

    def test_zeta_override(self):
        data = ref_data()
        data["game"]["zeta"] = [0.5, 0.0]
        scn = scenario.Scenario(scenario.validate(data))
        assert [c.zeta for c in scn.vehicle_classes()] == [0.5, 0.0]

    def test_sim_counts_default_to_uniform_allocation(self):
        cfg = scenario.load(REF).sim_config()
        assert [c.tolist() for c in cfg.counts] == [[3, 0], [3, 2], [0, 2]]


class TestExitCodes:
    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "fixed-point", "--scenario", str(tmp_path / "nope.json"))
        assert code == 2 and "<file>" in err

    def test_bad_json(self, capsys, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert run(capsys, "fixed-point", "--scenario", str(path))[0] == 2

    def test_validation_error(self, capsys, tmp_path):
        data = ref_data()
        del data["channels"][0]["rates"]
        code, _, err = run(capsys, "throughput", "--scenario", write(tmp_path, data))
        assert code == 2 and "channels[0].rates" in err

    def test_bad_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["fixed-point", "--scenario", str(REF), "--format", "xml"])
        assert exc.value.code == 2

    def test_compare_out_of_bounds(self, capsys, tmp_path):
        data = ref_data()
        data["sim"].update(horizon=20_000, warmup=2_000, replications=1,
                           bounds={"throughput": 1e-6})
        code, out, _ = run(capsys, "compare", "--scenario", write(tmp_path, data), "--quiet")
        assert code == 1 and out.rstrip().endswith("# all_within=false")

    def test_unconverged_game(self, capsys, tmp_path):
        data = ref_data()
        data["game"]["bnn"]["max_steps"] = 3
        code, out, _ = run(capsys, "game-run", "--scenario", write(tmp_path, data), "--quiet")
        assert code == 1 and out.rstrip().endswith("# converged=false")

    def test_pricing_needs_grid(self, capsys, tmp_path):
        data = ref_data()
        del data["pricing"]
        assert run(capsys, "pricing", "--scenario", write(tmp_path, data))[0] == 2

    def test_bad_worker_count(self, capsys, monkeypatch):
        monkeypatch.setenv("V2RGAME_WORKERS", "many")
        assert run(capsys, "simulate", "--scenario", str(REF))[0] == 2


class TestOutput:
    def test_csv_layout(self, capsys):
        code, out, _ = run(capsys, "fixed-point", "--scenario", str(REF))
        lines = out.splitlines()
        assert code == 0
        assert lines[:3] == ["# schema=1", "# command=fixed-point",
                             "channel,n,gamma,beta,p0,residual,iterations"]
        assert len(lines) == 3 + 3 * 5

    def test_game_run_trajectory(self, capsys):
        code, out, _ = run(capsys, "game-run", "--scenario", str(REF))
        lines = out.splitlines()
        assert code == 0 and lines[-1] == "# converged=true"
        assert lines[2].startswith("step,theta,max_excess,x_0_0")
        last = [float(v) for v in lines[-5].split(",")]
        assert last[2] < 1e-6

    def test_json(self, capsys, tmp_path):
        out_path = tmp_path / "o.json"
        code, out, err = run(capsys, "game-optimize", "--scenario", str(REF), "--format", "json",
                             "--out", str(out_path))
        doc = json.loads(out_path.read_text())
        assert code == 0 and out == "" and "wrote" in err
        assert doc["schema"] == 1 and doc["columns"] == ["class", "channel", "x", "payoff"]
        assert doc["meta"]["theta"] == pytest.approx(42.12428139925, rel=1e-9)
        assert doc["rows"][2][3] == "-inf"

    def test_quiet(self, capsys, tmp_path):
        _, _, err = run(capsys, "fixed-point", "--scenario", str(REF), "--quiet",
                        "--out", str(tmp_path / "o.csv"))
        assert err == ""

    def test_traffic_sweep_is_monotone(self, capsys):
        _, out, _ = run(capsys, "traffic-dist", "--scenario", str(REF))
        rows = [line.split(",") for line in out.splitlines()[3:]]
        means = {}
        for lam, c, mean, n, p in rows:
            if c == "0":
                means[float(lam)] = float(mean)
        lams = sorted(means)
        assert lams == [0.001, 0.003, 0.01]
        assert all(means[a] < means[b] for a, b in zip(lams, lams[1:]))

    def test_workers_do_not_change_output(self, capsys, monkeypatch, tmp_path):
        data = ref_data()
        data["sim"].update(horizon=20_000, warmup=2_000, replications=3)
        path = write(tmp_path, data)
        serial = run(capsys, "simulate", "--scenario", path)[1]
        monkeypatch.setenv("V2RGAME_WORKERS", "3")
        assert run(capsys, "simulate", "--scenario", path)[1] == serial

    def test_seed_override(self, capsys, tmp_path):
        data = ref_data()
        data["sim"].update(horizon=20_000, warmup=2_000, replications=1)
        path = write(tmp_path, data)
        a = run(capsys, "simulate", "--scenario", path, "--seed", "1")[1]
        b = run(capsys, "simulate", "--scenario", path, "--seed", "2")[1]
        assert a != b

    def test_console_script(self):
        proc = subprocess.run([sys.executable, "-m", "v2rgame.cli", "fixed-point", "--scenario",
                               str(REF), "--quiet"], capture_output=True, text=True)
        assert proc.returncode == 0 and proc.stdout.startswith("# schema=1")


def test_cli_is_a_thin_adapter():
    """Subcommands delegate to library modules; the CLI has no numerics of its own."""
    text = Path(cli.__file__).read_text()
    tree = ast.parse(text)
    imported = {a.name for node in ast.walk(tree) if isinstance(node, ast.ImportFrom)
                for a in node.names}
    assert {"mac", "traffic", "pricing", "sim"} <= imported
    top = {a.name.split(".")[0] for node in ast.walk(tree) if isinstance(node, ast.Import)
           for a in node.names}
    assert "scipy" not in top and "numba" not in top
    defs = {n.name: n for n in tree.body if isinstance(n, ast.FunctionDef)}
    for name, (func, _) in cli.COMMANDS.items():
        src = ast.get_source_segment(text, defs[func.__name__])
        assert any(f"{m}." in src for m in ("mac", "gm", "traffic", "pricing", "sim",
                                             "_replicate")), name
