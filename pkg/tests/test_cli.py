"""End-to-end CLI tests: config handling, exports, determinism, exit codes."""

import csv
import filecmp
import math
from pathlib import Path

import pytest

from coopverif.cli import load_config, main
from coopverif.metrics import SUMMARY_COLUMNS
from coopverif.sim import ConfigError

SMALL = ["--set", "n_nodes=4", "--set", "duration=3", "--set", "seed=5"]


def read_csv(path: Path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestConfigLoading:
    def test_defaults_without_file(self):
        cfg = load_config(None)
        assert (cfg.n_nodes, cfg.pr_check, cfg.alpha) == (30, 0.2, 5)
        assert (cfg.tau, cfg.gamma, cfg.duration) == (0.005, 10.0, 120.0)
        assert (cfg.area_side, cfg.bitrate) == (200.0, 6e6)
        assert cfg.scheme == "cooperative"
        assert cfg.adversary is None

    def test_file_sections_and_overrides(self, tmp_path):
        ini = tmp_path / "scenario.ini"
        ini.write_text(
            "[scenario]\n"
            "n_nodes = 12\n"
            "tau = 0.003\n"
            "scheme = baseline\n"
            "\n"
            "[adversary]\n"
            "gamma_adv = 5\n"
            "bogus_per_claim = 2\n"
            "\n"
            "[detection]\n"
            "votes_needed = 3\n"
        )
        cfg = load_config(ini, overrides=["n_nodes=20", "adversary.start_time=1.5"], seed=9)
        assert cfg.n_nodes == 20  # override beats file
        assert cfg.tau == 0.003
        assert cfg.scheme == "baseline"
        assert cfg.seed == 9
        assert cfg.adversary.gamma_adv == 5.0
        assert cfg.adversary.start_time == 1.5
        assert cfg.detection.votes_needed == 3

    def test_unknown_key_is_config_error(self, tmp_path):
        ini = tmp_path / "bad.ini"
        ini.write_text("[scenario]\nn_noodles = 4\n")
        with pytest.raises(ConfigError, match="n_noodles"):
            load_config(ini)

    def test_bad_value_reports_key(self, tmp_path):
        ini = tmp_path / "bad.ini"
        ini.write_text("[scenario]\nn_nodes = many\n")
        with pytest.raises(ConfigError, match="n_nodes"):
            load_config(ini)

    def test_unknown_section_rejected(self, tmp_path):
        ini = tmp_path / "bad.ini"
        ini.write_text("[experiment]\nx = 1\n")
        with pytest.raises(ConfigError, match="experiment"):
            load_config(ini)

    def test_adversary_enabled_by_override_alone(self):
        cfg = load_config(None, overrides=["adversary.gamma_adv=10"])
        assert cfg.adversary is not None


class TestRunCommand:
    def test_writes_expected_files(self, tmp_path):
        out = tmp_path / "out"
        rc = main(["run", "--out", str(out), "--runs", "2", *SMALL])
        assert rc == 0
        for name in (
            "summary.csv",
            "waiting_times.csv",
            "cdf.csv",
            "timeseries.csv",
            "events.csv",
            "effective_config.ini",
        ):
            assert (out / name).exists(), name
        rows = read_csv(out / "summary.csv")
        assert rows[0] == SUMMARY_COLUMNS
        assert len(rows) == 1 + 2 + 1  # header, two runs, mean row
        assert rows[-1][0] == "mean"

    def test_cdf_is_sorted_with_quantiles(self, tmp_path):
        out = tmp_path / "out"
        main(["run", "--out", str(out), "--runs", "2", *SMALL])
        rows = read_csv(out / "cdf.csv")[1:]
        values = [float(r[0]) for r in rows]
        probs = [float(r[1]) for r in rows]
        assert values == sorted(values)
        assert probs[-1] == pytest.approx(1.0)
        assert all(0 < p <= 1 for p in probs)

    def test_byte_identical_reruns(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        args = ["run", "--runs", "2", *SMALL]
        assert main([*args, "--out", str(out1)]) == 0
        assert main([*args, "--out", str(out2)]) == 0
        for name in ("summary.csv", "waiting_times.csv", "cdf.csv", "timeseries.csv", "events.csv"):
            assert filecmp.cmp(out1 / name, out2 / name, shallow=False), name

    def test_seed_changes_output(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["run", "--out", str(out1), "--runs", "1", "--seed", "1", *SMALL])
        main(["run", "--out", str(out2), "--runs", "1", "--seed", "2", *SMALL])
        assert not filecmp.cmp(out1 / "cdf.csv", out2 / "cdf.csv", shallow=False)

    def test_short_run_counts(self, tmp_path):
        out = tmp_path / "out"
        rc = main([
            "run", "--out", str(out), "--runs", "1",
            "--set", "n_nodes=2", "--set", "duration=1", "--set", "seed=3",
        ])
        assert rc == 0
        rows = read_csv(out / "summary.csv")
        header, run0 = rows[0], rows[1]
        receptions = int(run0[header.index("receptions")])
        assert receptions <= 10  # one neighbour at 10 Hz for one second

    def test_malformed_config_exits_2(self, tmp_path):
        ini = tmp_path / "bad.ini"
        ini.write_text("[scenario]\nn_nodes = -3\n")
        rc = main(["run", "--config", str(ini), "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_unwritable_out_exits_3(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        rc = main(["run", "--out", str(blocker / "sub"), "--runs", "1", *SMALL])
        assert rc == 3


class TestSweepCommand:
    def test_sweep_produces_per_value_dirs_and_combined(self, tmp_path):
        out = tmp_path / "sweep"
        rc = main([
            "sweep", "--param", "N", "--values", "3,5", "--out", str(out),
            "--runs", "2", "--set", "duration=3", "--set", "seed=5",
        ])
        assert rc == 0
        assert (out / "N=3" / "summary.csv").exists()
        assert (out / "N=5" / "summary.csv").exists()
        rows = read_csv(out / "combined.csv")
        assert rows[0] == ["parameter", "value", "quantile", "waiting_time"]
        assert len(rows) == 1 + 2 * 101
        values = {r[1] for r in rows[1:]}
        assert values == {"3", "5"}

    def test_single_value_sweep_matches_run(self, tmp_path):
        run_out = tmp_path / "run"
        sweep_out = tmp_path / "sweep"
        main(["run", "--out", str(run_out), "--runs", "2", *SMALL])
        main([
            "sweep", "--param", "N", "--values", "4", "--out", str(sweep_out),
            "--runs", "2", "--set", "duration=3", "--set", "seed=5",
        ])
        for name in ("summary.csv", "waiting_times.csv", "cdf.csv", "timeseries.csv", "events.csv"):
            assert filecmp.cmp(run_out / name, sweep_out / "N=4" / name, shallow=False), name

    def test_scheme_sweep(self, tmp_path):
        out = tmp_path / "schemes"
        rc = main([
            "sweep", "--param", "scheme", "--values", "baseline,cooperative",
            "--out", str(out), "--runs", "1", "--set", "duration=2",
            "--set", "n_nodes=4", "--set", "seed=1",
        ])
        assert rc == 0
        assert (out / "scheme=baseline").is_dir()
        assert (out / "scheme=cooperative").is_dir()

    def test_unknown_param_exits_2(self, tmp_path):
        rc = main(["sweep", "--param", "bogosity", "--values", "1", "--out", str(tmp_path / "o")])
        assert rc == 2


class TestAnalyzeCommand:
    def test_reference_point(self, tmp_path, capsys):
        rc = main([
            "analyze", "--alpha", "5", "--pr-check", "0.1", "--neighbors", "15",
            "--votes", "5", "--out", str(tmp_path), "--trials", "20000", "--seed", "3",
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert "pr_reveal" in out
        rows = read_csv(tmp_path / "analysis.csv")
        table = {r[0]: r[1:] for r in rows[1:]}
        assert float(table["pr_skip"][0]) == pytest.approx(0.59049, rel=1e-9)
        assert float(table["pr_reveal"][0]) == pytest.approx(0.8041228205, abs=1e-9)
        assert float(table["baseline_saturation_neighbors"][0]) == pytest.approx(20.0)
        mc, lo, hi = (float(x) for x in table["monte_carlo_reveal"])
        assert lo <= 0.8041228205 <= hi
        after3 = float(table["pr_reveal_after_3"][0])
        assert after3 == pytest.approx(0.99248461, abs=1e-6)

    def test_analysis_csv_deterministic(self, tmp_path):
        args = [
            "analyze", "--alpha", "4", "--pr-check", "0.3", "--neighbors", "20",
            "--votes", "4", "--trials", "10000", "--seed", "7",
        ]
        d1, d2 = tmp_path / "x", tmp_path / "y"
        d1.mkdir(), d2.mkdir()
        main([*args, "--out", str(d1)])
        main([*args, "--out", str(d2)])
        assert filecmp.cmp(d1 / "analysis.csv", d2 / "analysis.csv", shallow=False)

    def test_float_format_nine_significant_digits(self, tmp_path):
        main([
            "analyze", "--alpha", "5", "--pr-check", "0.1", "--neighbors", "15",
            "--votes", "5", "--out", str(tmp_path), "--trials", "1000",
        ])
        rows = read_csv(tmp_path / "analysis.csv")
        value = dict((r[0], r[1]) for r in rows[1:])["pr_reveal"]
        assert value == f"{0.8041228205076918:.9g}"

    def test_requested_exposure_count_reported(self, tmp_path):
        main([
            "analyze", "--alpha", "5", "--pr-check", "0.1", "--neighbors", "15",
            "--votes", "5", "--n-messages", "25", "--out", str(tmp_path),
            "--trials", "1000",
        ])
        rows = read_csv(tmp_path / "analysis.csv")
        table = {r[0]: r[1] for r in rows[1:]}
        assert "pr_reveal_after_25" in table
        p1 = float(table["pr_reveal_after_1"])
        p25 = float(table["pr_reveal_after_25"])
        assert p25 == pytest.approx(1 - (1 - p1) ** 25, rel=1e-9)
