import json

import pytest
from click.testing import CliRunner

from matchnet import write_edge_file
from matchnet.cli import (
    EXIT_DEGENERATE,
    EXIT_NO_CYCLES,
    EXIT_NOT_IDENTIFIED,
    EXIT_USAGE,
    main,
)


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def two_cycle_files(tmp_path, two_cycle_net):
    edges = tmp_path / "edges.csv"
    write_edge_file(two_cycle_net, edges)
    wz = tmp_path / "workers.csv"
    wz.write_text("id,value\nAlice,16\nBob,14\nElizabeth,18\nFred,12\n")
    fz = tmp_path / "firms.csv"
    fz.write_text(
        "id,value\nCanon,170000\nDell,110000\nGeneralMotors,160000\nHonda,190000\n"
    )
    return edges, wz, fz


def write_edges(tmp_path, net, name="edges.csv"):
    path = tmp_path / name
    write_edge_file(net, path)
    return path


class TestDiagnose:
    def test_text_report(self, runner, tmp_path, snowball_pass_net):
        path = write_edges(tmp_path, snowball_pass_net)
        result = runner.invoke(main, ["diagnose", "--edges", str(path)])
        assert result.exit_code == 0
        assert "seed-and-snowballs        : True" in result.output
        assert "run manifest" in result.output

    def test_json_report_no_cycles_message(self, runner, tmp_path, tree_net):
        path = write_edges(tmp_path, tree_net)
        result = runner.invoke(main, ["diagnose", "--edges", str(path), "--format", "json"])
        assert result.exit_code == 0
        doc = json.loads(result.output)
        assert doc["disjoint_cycle_count"] == 0
        assert doc["supports_interaction"] is False
        assert doc["manifest"]["command"] == "diagnose"

    def test_text_mentions_not_identified(self, runner, tmp_path, tree_net):
        path = write_edges(tmp_path, tree_net)
        result = runner.invoke(main, ["diagnose", "--edges", str(path)])
        assert "not identified" in result.output

    def test_component_shares_reported(self, runner, tmp_path, two_component_net):
        path = write_edges(tmp_path, two_component_net)
        result = runner.invoke(main, ["diagnose", "--edges", str(path), "--format", "json"])
        doc = json.loads(result.output)
        assert doc["component_count"] == 2
        assert doc["largest_component_worker_share"] == pytest.approx(0.8)

    def test_parse_error_exit_code(self, runner, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("worker,firm,outcome\nA,C,not-a-number\n")
        result = runner.invoke(main, ["diagnose", "--edges", str(bad)])
        assert result.exit_code == EXIT_USAGE
        assert "error" in result.output.lower() or result.exception


class TestEstimate:
    def test_rank_estimate_matches_worked_value(self, runner, two_cycle_files):
        edges, wz, fz = two_cycle_files
        result = runner.invoke(
            main,
            [
                "estimate",
                "--edges", str(edges),
                "--worker-instruments", str(wz),
                "--firm-instruments", str(fz),
                "--labeling", "rank",
                "--format", "json",
            ],
        )
        assert result.exit_code == 0, result.output
        doc = json.loads(result.output)
        assert doc["beta_hat"] == pytest.approx(-15 / 850, rel=1e-9)
        assert doc["n_cycles"] == 2
        assert doc["labeling_rule"] == "rank"

    def test_random_seeds_reproduce_and_differ(self, runner, two_cycle_files):
        edges, _, _ = two_cycle_files

        def run(seed):
            result = runner.invoke(
                main,
                ["estimate", "--edges", str(edges), "--labeling", "random",
                 "--seed", str(seed), "--format", "json"],
            )
            assert result.exit_code == 0, result.output
            return json.loads(result.output)["beta_hat"]

        assert run(7) == run(7)
        values = {run(s) for s in range(6)}
        assert len(values) > 1

    def test_outcome_labeling_warns(self, runner, two_cycle_files):
        edges, _, _ = two_cycle_files
        result = runner.invoke(
            main, ["estimate", "--edges", str(edges), "--labeling", "outcome"]
        )
        assert result.exit_code == 0
        assert "WARNING" in result.output
        assert "biased" in result.output

    def test_rank_without_instruments_is_usage_error(self, runner, two_cycle_files):
        edges, _, _ = two_cycle_files
        result = runner.invoke(main, ["estimate", "--edges", str(edges)])
        assert result.exit_code == EXIT_USAGE

    def test_no_cycles_exit_code(self, runner, tmp_path, tree_net):
        path = write_edges(tmp_path, tree_net)
        result = runner.invoke(
            main, ["estimate", "--edges", str(path), "--labeling", "random"]
        )
        assert result.exit_code == EXIT_NO_CYCLES

    def test_degenerate_denominator_exit_code(self, runner, tmp_path):
        path = tmp_path / "edges.csv"
        path.write_text(
            "worker,firm,outcome\nw1,f1,1\nw1,f2,1\nw2,f1,1\nw2,f2,1\n"
        )
        result = runner.invoke(
            main, ["estimate", "--edges", str(path), "--labeling", "random"]
        )
        assert result.exit_code == EXIT_DEGENERATE

    def test_noiseless_additive_data_still_estimates(self, runner, tmp_path):
        # additive outcomes: beta_hat = 0 but the test statistic is 0/0
        path = tmp_path / "edges.csv"
        path.write_text(
            "worker,firm,outcome\nw1,f1,3\nw1,f2,5\nw2,f1,4\nw2,f2,6\n"
        )
        result = runner.invoke(
            main,
            ["estimate", "--edges", str(path), "--labeling", "random", "--format", "json"],
        )
        assert result.exit_code == 0, result.output
        doc = json.loads(result.output)
        assert doc["beta_hat"] == pytest.approx(0.0, abs=1e-12)
        assert doc["reject_no_complementarities"] is None

    def test_oracle_needs_productivity_file(self, runner, two_cycle_files, tmp_path):
        edges, _, _ = two_cycle_files
        result = runner.invoke(
            main, ["estimate", "--edges", str(edges), "--labeling", "oracle"]
        )
        assert result.exit_code == EXIT_USAGE
        prod = tmp_path / "prod.csv"
        prod.write_text(
            "id,side,value\nAlice,worker,2\nBob,worker,1\nElizabeth,worker,2\n"
            "Fred,worker,1\nCanon,firm,2\nDell,firm,1\nGeneralMotors,firm,1\nHonda,firm,2\n"
        )
        result = runner.invoke(
            main,
            ["estimate", "--edges", str(edges), "--labeling", "oracle",
             "--productivities", str(prod), "--format", "json"],
        )
        assert result.exit_code == 0, result.output

    def test_out_file_and_manifest(self, runner, two_cycle_files, tmp_path):
        edges, wz, fz = two_cycle_files
        out = tmp_path / "report.json"
        result = runner.invoke(
            main,
            ["estimate", "--edges", str(edges), "--worker-instruments", str(wz),
             "--firm-instruments", str(fz), "--format", "json", "--out", str(out)],
        )
        assert result.exit_code == 0
        doc = json.loads(out.read_text())
        assert doc["beta_hat"] == pytest.approx(-15 / 850, rel=1e-9)
        manifest = json.loads((tmp_path / "report.json.manifest.json").read_text())
        assert manifest["command"] == "estimate"
        assert str(edges) in manifest["input_digests"]
        assert len(manifest["input_digests"][str(edges)]) == 64


class TestSimulate:
    def test_small_grid_runs(self, runner, tmp_path):
        grid = tmp_path / "grid.csv"
        grid.write_text("sigma,L,p,beta0\n0.5,20,1.0,0\n0.5,20,1.0,1\n")
        result = runner.invoke(
            main,
            ["simulate", "--grid", str(grid), "--reps", "50", "--seed", "4"],
        )
        assert result.exit_code == 0, result.output
        assert "# rejection_rate (beta0=0)" in result.output
        assert "# mse (beta0=1)" in result.output

    def test_grid_validated_before_running(self, runner, tmp_path):
        grid = tmp_path / "grid.csv"
        grid.write_text("sigma,L,p,beta0\n-1,20,1.0,0\n")
        result = runner.invoke(main, ["simulate", "--grid", str(grid), "--reps", "10"])
        assert result.exit_code == EXIT_USAGE

    def test_json_output_contains_cells(self, runner, tmp_path):
        grid = tmp_path / "grid.csv"
        grid.write_text("sigma,L,p,beta0\n1,30,0.85,0\n")
        result = runner.invoke(
            main,
            ["simulate", "--grid", str(grid), "--reps", "40", "--format", "json"],
        )
        doc = json.loads(result.output)
        assert len(doc["cells"]) == 1
        cell = doc["cells"][0]
        assert cell["reps"] == 40
        assert 0.0 <= cell["rejection_rate"] <= 1.0

    def test_deterministic_across_thread_counts(self, runner, tmp_path):
        grid = tmp_path / "grid.csv"
        grid.write_text("sigma,L,p,beta0\n0.5,25,0.85,0\n")

        def run(threads):
            result = runner.invoke(
                main,
                ["simulate", "--grid", str(grid), "--reps", "60",
                 "--seed", "5", "--threads", str(threads), "--format", "json"],
            )
            return json.loads(result.output)["cells"]

        assert run(1) == run(3)


class TestProductivity:
    def test_twfe_exact_recovery_file(self, runner, tmp_path):
        edges = tmp_path / "edges.csv"
        edges.write_text(
            "worker,firm,outcome\nw1,f1,3\nw1,f2,5\nw2,f1,4\nw2,f2,6\n"
        )  # additive: alpha=(0,1), psi=(3,5)
        out = tmp_path / "prod.csv"
        result = runner.invoke(
            main,
            ["productivity", "--edges", str(edges), "--mode", "twfe",
             "--reference-worker", "w1", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        from matchnet import read_productivity_file

        alpha, psi = read_productivity_file(out)
        assert alpha == pytest.approx({"w1": 0.0, "w2": 1.0})
        assert psi == pytest.approx({"f1": 3.0, "f2": 5.0})
        assert (tmp_path / "prod.csv.manifest.json").exists()

    def test_als_reconstructs_interacting_fixture(self, runner, tmp_path):
        edges = tmp_path / "edges.csv"
        edges.write_text(
            "worker,firm,outcome\nA,C,2.5\nA,D,5.5\nB,C,4\nB,D,8\n"
        )
        out = tmp_path / "prod.csv"
        result = runner.invoke(
            main,
            ["productivity", "--edges", str(edges), "--mode", "als",
             "--beta", "0.5", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        from matchnet import read_productivity_file

        alpha, psi = read_productivity_file(out)
        theta = alpha["A"] + psi["C"] + 0.5 * alpha["A"] * psi["C"]
        assert theta == pytest.approx(2.5, abs=1e-8)

    def test_als_zero_beta_is_usage_error(self, runner, tmp_path, alice_bob_net):
        edges = write_edges(tmp_path, alice_bob_net)
        result = runner.invoke(
            main, ["productivity", "--edges", str(edges), "--mode", "als", "--beta", "0"]
        )
        assert result.exit_code == EXIT_USAGE
        assert "twfe" in result.output

    def test_disconnected_needs_flag(self, runner, tmp_path, two_component_net):
        edges = write_edges(tmp_path, two_component_net)
        result = runner.invoke(
            main, ["productivity", "--edges", str(edges), "--mode", "twfe"]
        )
        assert result.exit_code == EXIT_NOT_IDENTIFIED
        assert "2 components" in result.output
        result = runner.invoke(
            main,
            ["productivity", "--edges", str(edges), "--mode", "twfe",
             "--largest-component"],
        )
        assert result.exit_code == 0, result.output


class TestManifest:
    def test_manifest_reproducibility_fields(self, runner, two_cycle_files):
        edges, wz, fz = two_cycle_files
        result = runner.invoke(
            main,
            ["estimate", "--edges", str(edges), "--worker-instruments", str(wz),
             "--firm-instruments", str(fz), "--seed", "123", "--format", "json"],
        )
        manifest = json.loads(result.output)["manifest"]
        assert manifest["seed"] == 123
        assert manifest["options"]["labeling"] == "rank"
        assert manifest["version"]
        # rerunning with the manifest's options reproduces the output
        again = runner.invoke(
            main,
            ["estimate", "--edges", str(edges), "--worker-instruments", str(wz),
             "--firm-instruments", str(fz), "--seed", "123", "--format", "json"],
        )
        assert again.output == result.output
