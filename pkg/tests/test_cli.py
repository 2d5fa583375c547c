"""End-to-end command line runs against real artifacts on disk."""

import csv
import json
import shutil
from pathlib import Path

import pytest

from linemet.cli import COMPARE_COLUMNS, SCATTER_COLUMNS, SUMMARY_COLUMNS, main
from linemet.synthetic import load_truth

GEN_ARGS = ["--frames", "4,64", "--seeds", "3", "--jobs", "1"]
FIT_ARGS = ["--poly-order", "5", "--fit-halfwidth", "5", "--jobs", "1"]


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


@pytest.fixture(scope="module")
def grid(tmp_path_factory):
    out = tmp_path_factory.mktemp("grid")
    assert main(["generate", "--out", str(out)] + GEN_ARGS) == 0
    return out


@pytest.fixture(scope="module")
def analyzed(grid, tmp_path_factory):
    out = tmp_path_factory.mktemp("reports")
    code = main(["analyze", str(grid / "*.pgm"), "--out", str(out)] + FIT_ARGS)
    return out, code


class TestGenerate:
    def test_grid_layout_and_sidecars(self, grid):
        pgms = sorted(p.name for p in grid.glob("*.pgm"))
        truths = sorted(p.name for p in grid.glob("*.truth.json"))
        assert len(pgms) == 6 and len(truths) == 6
        assert pgms[0] == "img_f04_c0.0686_s00000.pgm"
        assert truths[-1] == "img_f64_c0.0686_s00002.truth.json"
        for pgm in pgms:
            assert pgm.replace(".pgm", ".truth.json") in truths

    def test_regeneration_is_byte_identical(self, grid, tmp_path):
        assert main(["generate", "--out", str(tmp_path)] + GEN_ARGS) == 0
        for fresh in sorted(tmp_path.iterdir()):
            assert fresh.read_bytes() == (grid / fresh.name).read_bytes()

    def test_bad_parameters_exit_2(self, tmp_path, capsys):
        code = main(["generate", "--out", str(tmp_path), "--sigma", "-1"])
        assert code == 2
        assert "config error" in capsys.readouterr().err


class TestAnalyze:
    def test_summary_schema(self, analyzed):
        out, code = analyzed
        assert code == 0
        header, rows = read_csv(out / "summary.csv")
        assert header == SUMMARY_COLUMNS
        assert len(rows) == 6
        for row in rows:
            record = dict(zip(header, row))
            assert record["error"] == ""
            assert float(record["snr"]) > 0
            assert 15.0 < float(record["cd_nm"]) < 17.0
            assert int(record["rows_kept"]) <= 512

    def test_per_image_artifacts(self, analyzed):
        out, _ = analyzed
        _, rows = read_csv(out / "summary.csv")
        record = dict(zip(SUMMARY_COLUMNS, rows[0]))
        stem = out / record["id"]
        report = json.loads((stem.parent / (stem.name + ".report.json"))
                            .read_text())
        assert report["cd"]["mean_cd_nm"] == pytest.approx(
            float(record["cd_nm"]), rel=1e-9)
        for suffix in (".psd_ler.csv", ".psd_lwr.csv"):
            first = (stem.parent / (stem.name + suffix)).read_text()
            assert first.splitlines()[0] == ("frequency_per_nm,density_nm3,"
                                             "unbiased_density_nm3")
        header, edge_rows = read_csv(stem.parent / (stem.name + ".edges.csv"))
        assert header == ["row", "line", "left_nm", "right_nm"]
        assert len(edge_rows) == 10 * int(record["rows_kept"])
        assert {r[1] for r in edge_rows} == {str(i) for i in range(10)}

    def test_one_bad_image_isolates_and_exits_1(self, grid, tmp_path, capsys):
        good = sorted(grid.glob("*f64*.pgm"))[0]
        shutil.copy(good, tmp_path / good.name)
        (tmp_path / "broken.pgm").write_bytes(b"P5\n8 8\n255\n\x00\x01")
        out = tmp_path / "reports"
        code = main(["analyze", str(tmp_path / "*.pgm"), "--out", str(out)]
                    + FIT_ARGS)
        assert code == 1
        assert "broken.pgm" in capsys.readouterr().err
        _, rows = read_csv(out / "summary.csv")
        by_id = {r[0]: dict(zip(SUMMARY_COLUMNS, r)) for r in rows}
        assert by_id["broken"]["error"].startswith("PgmError")
        assert by_id["broken"]["snr"] == ""
        assert by_id[good.stem]["error"] == ""
        assert (out / (good.stem + ".report.json")).exists()

    def test_no_matching_inputs_exit_2(self, tmp_path):
        assert main(["analyze", str(tmp_path / "none.png"),
                     "--out", str(tmp_path)]) == 2


class TestCompare:
    def pair_dir(self, grid, tmp_path):
        noisy = sorted(grid.glob("*f64*.pgm"))[0]
        shutil.copy(noisy, tmp_path / noisy.name)
        shutil.copy(noisy.with_suffix(".truth.json"),
                    tmp_path / noisy.with_suffix(".truth.json").name)
        return tmp_path / noisy.name

    def test_identity_pair_reports_zero_deltas(self, grid, tmp_path):
        noisy = self.pair_dir(grid, tmp_path)
        shutil.copy(noisy, noisy.parent / (noisy.stem + ".denoised.pgm"))
        out = tmp_path / "out"
        code = main(["compare", str(noisy), "--out", str(out)] + FIT_ARGS)
        assert code == 0
        header, rows = read_csv(out / "compare.csv")
        assert header == COMPARE_COLUMNS
        record = dict(zip(header, rows[0]))
        assert float(record["dsnr_pct"]) == 0.0
        assert float(record["dcd_pct"]) == 0.0
        assert record["frames"] == "64"
        assert float(record["sigma_true_nm"]) > 0
        header, points = read_csv(out / "scatter.csv")
        assert header == SCATTER_COLUMNS
        assert [p[2] for p in points] == ["noisy", "denoised"]
        assert points[0][3] == points[1][3]

    def test_missing_partner_skips_and_exits_1(self, grid, tmp_path, capsys):
        noisy = self.pair_dir(grid, tmp_path)
        out = tmp_path / "out"
        code = main(["compare", str(noisy), "--out", str(out)] + FIT_ARGS)
        assert code == 1
        assert "skipped" in capsys.readouterr().err
        _, rows = read_csv(out / "compare.csv")
        assert rows == []

    def test_denoiser_flag_builds_the_partner(self, grid, tmp_path):
        noisy = self.pair_dir(grid, tmp_path)
        out = tmp_path / "out"
        code = main(["compare", str(noisy), "--out", str(out),
                     "--denoiser", "gaussian"] + FIT_ARGS)
        assert code == 0
        assert (noisy.parent / (noisy.stem + ".denoised.pgm")).exists()
        _, rows = read_csv(out / "compare.csv")
        assert len(rows) == 1


class TestConfigFile:
    def test_config_supplies_defaults_and_flags_win(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("rows=128\nlines=4  # comment\nseeds=1\nframes=4\n")
        out = tmp_path / "imgs"
        code = main(["generate", "--config", str(cfg), "--out", str(out),
                     "--rows", "64", "--jobs", "1"])
        assert code == 0
        truth = load_truth(next(out.glob("*.truth.json")))
        assert truth.edges_nm.shape == (8, 64)

    def test_unknown_key_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("bogus_key=3\n")
        code = main(["generate", "--config", str(cfg), "--out", str(tmp_path)])
        assert code == 2
        assert "unknown config key" in capsys.readouterr().err

    def test_malformed_line_exits_2(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("rows 128\n")
        assert main(["generate", "--config", str(cfg),
                     "--out", str(tmp_path)]) == 2


class TestAcceptanceCommand:
    def fake_verdicts(self, second_pass):
        return [
            {"name": "first", "pass": True, "measured": 0.1, "bound": 0.5},
            {"name": "second", "pass": second_pass, "measured": 9.0,
             "bound": 1.0},
        ]

    def run_with(self, monkeypatch, tmp_path, verdicts):
        monkeypatch.setattr("linemet.acceptance.run_all",
                            lambda seed, jobs, out_dir: verdicts)
        return main(["acceptance", "--out", str(tmp_path)])

    def test_all_pass_exits_0(self, monkeypatch, tmp_path, capsys):
        verdicts = self.fake_verdicts(second_pass=True)
        assert self.run_with(monkeypatch, tmp_path, verdicts) == 0
        out = capsys.readouterr().out
        assert "[PASS] first: measured 0.1 vs bound 0.5" in out
        assert "2/2 criteria pass" in out
        assert json.loads((tmp_path / "acceptance.json").read_text()) == verdicts

    def test_any_failure_exits_1(self, monkeypatch, tmp_path, capsys):
        verdicts = self.fake_verdicts(second_pass=False)
        assert self.run_with(monkeypatch, tmp_path, verdicts) == 1
        assert "[FAIL] second" in capsys.readouterr().out
