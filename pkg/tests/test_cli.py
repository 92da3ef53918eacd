"""Command-line interface tests.

Runs the real entry point in-process against a small two-bus case so
every subcommand finishes in well under a second, and checks artifact
layout, exit codes, error objects, and byte-level rerun determinism.
"""

from __future__ import annotations

import json
import os

import numpy as np
import pytest

from dwcplan.cli import main
from dwcplan.errors import SolverError

from support import tiny_case_dict


@pytest.fixture()
def case_file(tmp_path):
    path = tmp_path / "case.json"
    path.write_text(json.dumps(tiny_case_dict()))
    return str(path)


@pytest.fixture()
def ensemble_file(tmp_path):
    path = tmp_path / "ensemble.json"
    path.write_text(json.dumps({"master_seed": 42, "counts": {"nv": 2, "cw": 1}}))
    return str(path)


def read_error(capsys) -> dict:
    err_lines = [l for l in capsys.readouterr().err.splitlines() if l.strip()]
    assert err_lines, "expected a JSON error object on stderr"
    return json.loads(err_lines[-1])


def slurp(directory) -> dict[str, bytes]:
    out = {}
    for name in sorted(os.listdir(directory)):
        with open(os.path.join(directory, name), "rb") as fh:
            out[name] = fh.read()
    return out


class TestSimulate:
    def test_writes_trajectory_tables(self, case_file, tmp_path):
        out = tmp_path / "sim"
        assert main(["simulate", "--case", case_file, "--out", str(out)]) == 0
        names = sorted(os.listdir(out))
        assert names == [
            "density.csv",
            "interface_flow.csv",
            "run_manifest.json",
            "speed.csv",
            "summary.json",
        ]
        header = (out / "density.csv").read_text().splitlines()[0]
        assert header == "step,time_h,cell_0,cell_1,cell_2,cell_3"
        summary = json.loads((out / "summary.json").read_text())
        assert summary["balance"]["rel_residual"] <= 1e-9
        assert summary["steps"] == 24

    def test_density_table_matches_simulation(self, case_file, tmp_path):
        from dwcplan.config import load_case_study
        from dwcplan.corridor import simulate

        out = tmp_path / "sim"
        main(["simulate", "--case", case_file, "--out", str(out)])
        rows = (out / "density.csv").read_text().splitlines()[1:]
        table = np.array([[float(v) for v in row.split(",")] for row in rows])
        traj = simulate(load_case_study(case_file).corridor)
        np.testing.assert_array_equal(table[:, 2:], traj.rho)

    def test_bare_corridor_input(self, tmp_path):
        corridor_path = tmp_path / "corridor.json"
        corridor_path.write_text(json.dumps(tiny_case_dict()["corridor"]))
        out = tmp_path / "sim"
        rc = main(["simulate", "--corridor", str(corridor_path), "--out", str(out)])
        assert rc == 0
        assert (out / "density.csv").exists()

    def test_ramp_table_only_when_ramps_exist(self, case_file, tmp_path):
        out = tmp_path / "sim"
        main(["simulate", "--case", case_file, "--out", str(out)])
        assert not (out / "ramp_flow.csv").exists()


class TestDemand:
    def test_aggregation_preserves_energy(self, case_file, tmp_path):
        fine, coarse = tmp_path / "fine", tmp_path / "coarse"
        assert main(["demand", "--case", case_file, "--out", str(fine)]) == 0
        assert (
            main(["demand", "--case", case_file, "--agg", "4", "--out", str(coarse)])
            == 0
        )
        s_fine = json.loads((fine / "summary.json").read_text())
        s_coarse = json.loads((coarse / "summary.json").read_text())
        assert s_coarse["steps"] == s_fine["steps"] // 4
        assert s_coarse["total_energy_mwh"] == pytest.approx(
            s_fine["total_energy_mwh"], rel=1e-12
        )
        assert s_coarse["peak_mw"] <= s_fine["peak_mw"] + 1e-12

    def test_heatmap_table_written(self, case_file, tmp_path):
        out = tmp_path / "dem"
        main(["demand", "--case", case_file, "--out", str(out)])
        header = (out / "cell_energy.csv").read_text().splitlines()[0]
        assert header.startswith("step,time_h,cell_0_kwh")
        header = (out / "bus_power.csv").read_text().splitlines()[0]
        assert header == "step,time_h,total_mw,bus_0_mw,bus_1_mw,bus_2_mw"


class TestSiteSizePlanValidate:
    def test_site_sweep(self, case_file, tmp_path):
        out = tmp_path / "site"
        rc = main(
            [
                "site",
                "--case",
                case_file,
                "--k-values",
                "0,2,4",
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        curve = (out / "siting_curve.csv").read_text().splitlines()
        assert len(curve) == 4
        summary = json.loads((out / "summary.json").read_text())
        assert summary["best_total_units"] in (0.0, 2.0, 4.0)
        assert (out / "siting_allocation.csv").exists()

    def test_size_then_validate(self, case_file, ensemble_file, tmp_path):
        size_out = tmp_path / "size"
        rc = main(["size", "--case", case_file, "--out", str(size_out)])
        assert rc == 0
        design = json.loads((size_out / "design.json").read_text())
        assert set(design) == {
            "solar_mw",
            "es_units",
            "coupling_mw",
            "capital_usd",
            "operational_usd_per_period",
            "total_usd",
        }

        val_out = tmp_path / "val"
        rc = main(
            [
                "validate",
                "--case",
                case_file,
                "--ensemble",
                ensemble_file,
                "--design",
                str(size_out / "design.json"),
                "--out",
                str(val_out),
            ]
        )
        assert rc == 0
        summary = json.loads((val_out / "summary.json").read_text())
        assert summary["scenarios"] == 3
        assert 0.0 <= summary["service_level"] <= 1.0
        rows = (val_out / "validation.csv").read_text().splitlines()
        assert rows[0] == "scenario,family,feasible,detail"
        assert len(rows) == 4

    def test_placement_option(self, case_file, tmp_path):
        out = tmp_path / "size"
        rc = main(
            ["size", "--case", case_file, "--placement", "2", "--out", str(out)]
        )
        assert rc == 0
        design = json.loads((out / "design.json").read_text())
        assert list(design["es_units"]) == ["2"]

    def test_plan_emits_all_result_tables(self, case_file, ensemble_file, tmp_path):
        out = tmp_path / "plan"
        rc = main(
            [
                "plan",
                "--case",
                case_file,
                "--ensemble",
                ensemble_file,
                "--k-values",
                "0,2,4,6",
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        names = sorted(os.listdir(out))
        assert names == [
            "design.json",
            "family_capital.csv",
            "final_design.csv",
            "run_manifest.json",
            "scenario_designs.csv",
            "siting_allocation.csv",
            "siting_curve.csv",
            "summary.json",
            "validation.csv",
        ]
        summary = json.loads((out / "summary.json").read_text())
        assert summary["scenarios"] == 3
        assert summary["service_level"] == 1.0
        assert summary["chosen_family"] in ("nv", "cw")
        rows = (out / "scenario_designs.csv").read_text().splitlines()
        assert len(rows) == 4
        assert rows[0].startswith("scenario,family,seed")


class TestDeterminism:
    def test_identical_runs_are_byte_identical(
        self, case_file, ensemble_file, tmp_path
    ):
        args = [
            "plan",
            "--case",
            case_file,
            "--ensemble",
            ensemble_file,
            "--k-values",
            "0,2,4",
        ]
        out1, out2 = tmp_path / "run1", tmp_path / "run2"
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        assert slurp(out1) == slurp(out2)

    def test_rerun_from_manifest_is_byte_identical(
        self, case_file, ensemble_file, tmp_path
    ):
        out1, out2 = tmp_path / "run1", tmp_path / "run2"
        rc = main(
            [
                "plan",
                "--case",
                case_file,
                "--ensemble",
                ensemble_file,
                "--k-values",
                "0,2,4",
                "--out",
                str(out1),
            ]
        )
        assert rc == 0
        rc = main(
            [
                "plan",
                "--from-manifest",
                str(out1 / "run_manifest.json"),
                "--out",
                str(out2),
            ]
        )
        assert rc == 0
        assert slurp(out1) == slurp(out2)

    def test_manifest_embeds_inputs_and_resolved_options(
        self, case_file, tmp_path
    ):
        out = tmp_path / "dem"
        main(["demand", "--case", case_file, "--agg", "2", "--out", str(out)])
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["command"] == "demand"
        assert manifest["tool"]["name"] == "dwcplan"
        assert manifest["options"]["agg"] == 2
        assert manifest["options"]["solver"]
        assert manifest["inputs"]["case"]["corridor"]["horizon_steps"] == 24

    def test_manifest_for_wrong_command_rejected(self, case_file, tmp_path):
        out = tmp_path / "dem"
        main(["demand", "--case", case_file, "--out", str(out)])
        rc = main(
            [
                "plan",
                "--from-manifest",
                str(out / "run_manifest.json"),
                "--out",
                str(tmp_path / "plan"),
            ]
        )
        assert rc == 2

    def test_manifest_and_case_are_exclusive(self, case_file, tmp_path):
        out = tmp_path / "dem"
        main(["demand", "--case", case_file, "--out", str(out)])
        rc = main(
            [
                "demand",
                "--case",
                case_file,
                "--from-manifest",
                str(out / "run_manifest.json"),
                "--out",
                str(tmp_path / "again"),
            ]
        )
        assert rc == 2


class TestCompare:
    def test_motivating_example(self, tmp_path, capsys):
        out = tmp_path / "cmp"
        assert main(["compare", "--motivating", "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["flat_cost_usd"] == pytest.approx(19219.2, abs=0.01)
        assert summary["relative_reduction"] == pytest.approx(0.233, abs=0.01)
        rows = (out / "comparison.csv").read_text().splitlines()
        assert rows[0] == "profile,cost_usd,peak_mw,energy_mwh"
        assert len(rows) == 3

    def test_case_comparison(self, case_file, tmp_path):
        out = tmp_path / "cmp"
        assert main(["compare", "--case", case_file, "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["relative_total_gap"] > 0.0
        rows = (out / "comparison.csv").read_text().splitlines()
        assert rows[0] == "component,traffic_aware,flat_worst_case"
        assert len(rows) == 7


class TestErrorHandling:
    def test_missing_required_input(self, case_file, tmp_path, capsys):
        rc = main(["plan", "--case", case_file, "--out", str(tmp_path / "o")])
        assert rc == 2
        obj = read_error(capsys)
        assert obj["error"] == "config"
        assert "--ensemble" in obj["message"]

    def test_unknown_bundled_case(self, tmp_path, capsys):
        rc = main(["size", "--case", "bundled:nope", "--out", str(tmp_path / "o")])
        assert rc == 2
        assert read_error(capsys)["error"] == "config"

    def test_schema_error_carries_path(self, tmp_path, capsys):
        case = tiny_case_dict()
        del case["corridor"]["cells"][0]["rho_jam_veh_mi"]
        path = tmp_path / "broken.json"
        path.write_text(json.dumps(case))
        rc = main(["simulate", "--case", str(path), "--out", str(tmp_path / "o")])
        assert rc == 2
        obj = read_error(capsys)
        assert obj["path"] == "corridor.cells[0]"

    def test_infeasible_exit_code(self, tmp_path, capsys):
        case = tiny_case_dict()
        # one long skinny line with a tight voltage band cannot carry
        # the corridor load no matter the capacity decisions
        case["grid"]["lines"][0]["ampacity_pu2"] = 1e-6
        for bus in case["grid"]["buses"]:
            bus["v_min_pu"] = 0.999
            bus["v_max_pu"] = 1.001
        path = tmp_path / "weak.json"
        path.write_text(json.dumps(case))
        rc = main(["size", "--case", str(path), "--out", str(tmp_path / "o")])
        assert rc == 3
        obj = read_error(capsys)
        assert obj["error"] == "infeasible"
        assert "diagnosis" in obj

    def test_unknown_solver_rejected_upfront(self, case_file, tmp_path, capsys):
        rc = main(
            [
                "demand",
                "--case",
                case_file,
                "--solver",
                "BOGUS",
                "--out",
                str(tmp_path / "o"),
            ]
        )
        assert rc == 2
        assert "BOGUS" in read_error(capsys)["message"]

    def test_solver_failure_maps_to_exit_4(
        self, case_file, tmp_path, capsys, monkeypatch
    ):
        import dwcplan.cli as cli

        def boom(options, inputs, out_dir):
            raise SolverError("backend gave up")

        monkeypatch.setitem(cli._CORES, "demand", boom)
        rc = main(["demand", "--case", case_file, "--out", str(tmp_path / "o")])
        assert rc == 4
        assert read_error(capsys)["error"] == "solver"

    def test_env_var_selects_solver(self, case_file, tmp_path, monkeypatch):
        monkeypatch.setenv("DWCPLAN_SOLVER", "SCS")
        out = tmp_path / "dem"
        assert main(["demand", "--case", case_file, "--out", str(out)]) == 0
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["options"]["solver"] == "SCS"

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert capsys.readouterr().out.startswith("dwcplan ")

    def test_bad_agg_rejected(self, case_file, tmp_path, capsys):
        rc = main(
            ["demand", "--case", case_file, "--agg", "0", "--out", str(tmp_path / "o")]
        )
        assert rc == 2
        assert "--agg" in read_error(capsys)["message"]
