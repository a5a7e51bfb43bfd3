import os
import re

import numpy as np
import pytest

from geocs import cli, imageio, load_measurement, phantom, radial_mask, sample, save_mask, save_measurement
from geocs.metrics import QUALITY_CSV_HEADER
from geocs.sampling import SamplingMask, adjoint_sample


def run(argv):
    return cli.main(argv)


@pytest.fixture()
def small_setup(tmp_path):
    """Mask + measurement + config for a quick 64x64 reconstruction."""
    mask_path = tmp_path / "mask.pbm"
    save_mask(radial_mask(64, 12, seed=0), mask_path)
    meas_path = tmp_path / "meas.ksp"
    assert run(["simulate", "--phantom", "shepp_logan", "--mask", str(mask_path),
                "--sigma", "0", "--seed", "0", "--out", str(meas_path)]) == 0
    config_path = tmp_path / "run.cfg"
    config_path.write_text(
        "n = 64\n"
        "lines = 12\n"
        "max_iter_stage1 = 80\n"
        "max_iter_stage2_inner = 5\n"
        "max_iter_stage2_outer = 4\n"
        "h = 0.1\n"
    )
    return tmp_path, mask_path, meas_path, config_path


class TestMask:
    def test_reference_rate_printed(self, capsys, tmp_path):
        out = tmp_path / "m.pbm"
        assert run(["mask", "--n", "512", "--lines", "40", "--out", str(out)]) == 0
        text = capsys.readouterr().out
        rate = float(re.search(r"rate=([0-9.]+)", text).group(1))
        assert abs(rate - 0.0879) < 0.005
        assert out.exists() and (tmp_path / "m.pbm.txt").exists()

    def test_second_reference_rate(self, capsys):
        assert run(["mask", "--n", "512", "--lines", "100"]) == 0
        rate = float(re.search(r"rate=([0-9.]+)", capsys.readouterr().out).group(1))
        assert abs(rate - 0.2087) < 0.005

    def test_missing_n_is_usage_error(self, capsys):
        assert run(["mask", "--lines", "40"]) == 2
        assert "usage" in capsys.readouterr().err.lower()

    def test_out_of_range_lines(self, capsys):
        assert run(["mask", "--n", "64", "--lines", "0"]) == 2


class TestSimulate:
    def test_noise_free_roundtrip_full_mask(self, tmp_path):
        n = 64
        mask_path = tmp_path / "full.pbm"
        save_mask(SamplingMask(keep=np.ones((n, n), dtype=bool)), mask_path)
        truth = phantom("smooth_bumps", n)
        img_path = tmp_path / "truth.png"
        imageio.save_image(truth, img_path)
        meas_path = tmp_path / "m.ksp"
        assert run(["simulate", "--image", str(img_path), "--mask", str(mask_path),
                    "--out", str(meas_path)]) == 0
        loaded_truth = imageio.load_image(img_path)
        recon = adjoint_sample(load_measurement(meas_path)).real
        # float32 payload quantization bounds the roundtrip accuracy
        assert np.abs(recon - loaded_truth).max() < 1e-5

    def test_header_echoes_inputs(self, tmp_path):
        mask_path = tmp_path / "m.pbm"
        save_mask(radial_mask(32, 6, seed=3), mask_path)
        meas_path = tmp_path / "m.ksp"
        assert run(["simulate", "--phantom", "textured", "--mask", str(mask_path),
                    "--sigma", "8", "--seed", "21", "--out", str(meas_path)]) == 0
        meas = load_measurement(meas_path)
        assert meas.seed == 21
        assert meas.sigma == pytest.approx(8.0 / 32.0, rel=1e-5)
        assert meas.mask.lines == 6

    def test_same_seed_byte_identical(self, tmp_path):
        mask_path = tmp_path / "m.pbm"
        save_mask(radial_mask(32, 6), mask_path)
        for name in ("a.ksp", "b.ksp"):
            assert run(["simulate", "--phantom", "shepp_logan", "--mask", str(mask_path),
                        "--sigma", "5", "--seed", "9", "--out", str(tmp_path / name)]) == 0
        assert (tmp_path / "a.ksp").read_bytes() == (tmp_path / "b.ksp").read_bytes()

    def test_requires_exactly_one_source(self, tmp_path):
        mask_path = tmp_path / "m.pbm"
        save_mask(radial_mask(32, 6), mask_path)
        assert run(["simulate", "--mask", str(mask_path), "--out", str(tmp_path / "x.ksp")]) == 2


class TestReconstruct:
    def test_two_stages_not_worse_than_one(self, small_setup, capsys):
        tmp_path, _, meas_path, config_path = small_setup
        relerrs = {}
        for stages in (1, 2):
            out = tmp_path / f"recon{stages}.png"
            code = run(["reconstruct", "--measurement", str(meas_path),
                        "--config", str(config_path), "--stages", str(stages),
                        "--out", str(out), "--truth", "phantom:shepp_logan"])
            assert code == 0
            text = capsys.readouterr().out
            relerrs[stages] = float(re.search(r" relerr=([0-9.e+-]+)", text).group(1))
            assert out.exists()
        assert relerrs[2] <= relerrs[1] + 1e-12

    def test_without_truth_no_metrics(self, small_setup, capsys):
        tmp_path, _, meas_path, config_path = small_setup
        out = tmp_path / "recon.png"
        assert run(["reconstruct", "--measurement", str(meas_path),
                    "--config", str(config_path), "--stages", "1",
                    "--out", str(out)]) == 0
        assert "relerr" not in capsys.readouterr().out

    def test_corrupt_measurement_is_format_error(self, small_setup):
        tmp_path, _, meas_path, config_path = small_setup
        bad = tmp_path / "bad.ksp"
        bad.write_bytes(b"GARBAGE" + meas_path.read_bytes()[7:])
        assert run(["reconstruct", "--measurement", str(bad),
                    "--config", str(config_path), "--out", str(tmp_path / "x.png")]) == 3

    def test_non_finite_measurement_is_divergence_exit(self, small_setup):
        tmp_path, mask_path, _, config_path = small_setup
        from geocs import Measurement
        from geocs.sampling import load_mask

        mask = load_mask(mask_path)
        values = np.zeros(mask.count, dtype=complex)
        values[0] = np.nan
        bad = tmp_path / "nan.ksp"
        save_measurement(Measurement(values=values, mask=mask), bad)
        assert run(["reconstruct", "--measurement", str(bad),
                    "--config", str(config_path), "--out", str(tmp_path / "x.png")]) == 4

    def test_iteration_csv_and_weights(self, small_setup):
        tmp_path, _, meas_path, config_path = small_setup
        out = tmp_path / "recon.png"
        iter_csv = tmp_path / "iters.csv"
        wdir = tmp_path / "weights"
        assert run(["reconstruct", "--measurement", str(meas_path),
                    "--config", str(config_path), "--out", str(out),
                    "--iter-csv", str(iter_csv), "--dump-weights", str(wdir)]) == 0
        rows = iter_csv.read_text().strip().splitlines()
        assert rows[0] == "stage,iter,delta,objective"
        assert len(rows) > 2
        assert any(row.startswith("2,") for row in rows[1:])
        assert (wdir / "w1.png").exists() and (wdir / "w2.png").exists()

    def test_config_overrides(self, small_setup, capsys):
        tmp_path, _, meas_path, config_path = small_setup
        assert run(["reconstruct", "--measurement", str(meas_path),
                    "--config", str(config_path), "--stages", "1",
                    "--set", "max_iter_stage1=7", "--set", "tol_inner=1e-12",
                    "--out", str(tmp_path / "r.png")]) == 0
        assert "stage1 iters=7" in capsys.readouterr().out

    def test_unknown_config_key_rejected(self, small_setup):
        tmp_path, _, meas_path, config_path = small_setup
        assert run(["reconstruct", "--measurement", str(meas_path),
                    "--config", str(config_path), "--set", "bogus=1",
                    "--out", str(tmp_path / "r.png")]) == 2


def sweep_config(tmp_path, **extra):
    lines = extra.pop("lines", "8,12")
    config = tmp_path / "sweep.cfg"
    body = (
        "n = 64\n"
        f"lines = {lines}\n"
        "sigma = 0\n"
        "stages = 1\n"
        "max_iter_stage1 = 60\n"
        "h = 0.1\n"
    )
    for key, value in extra.items():
        body += f"{key} = {value}\n"
    config.write_text(body)
    return config


class TestSweep:
    def test_rows_and_trend(self, tmp_path, capsys):
        config = sweep_config(tmp_path, lines="6,10,16,24")
        out = tmp_path / "sweep.csv"
        assert run(["sweep", "--config", str(config), "--out", str(out)]) == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == QUALITY_CSV_HEADER
        assert len(lines) == 5  # header + 4 entries (stage 1 only)
        assert "relerr_nonincreasing=True" in capsys.readouterr().out

    def test_resume_skips_existing(self, tmp_path, capsys):
        config = sweep_config(tmp_path)
        out = tmp_path / "sweep.csv"
        assert run(["sweep", "--config", str(config), "--out", str(out)]) == 0
        first = out.read_bytes()
        capsys.readouterr()
        assert run(["sweep", "--config", str(config), "--out", str(out)]) == 0
        assert "skipping 2 already-computed entries" in capsys.readouterr().out
        assert out.read_bytes() == first

    def test_fresh_runs_byte_identical(self, tmp_path):
        config = sweep_config(tmp_path)
        out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run(["sweep", "--config", str(config), "--out", str(out_a)]) == 0
        assert run(["sweep", "--config", str(config), "--out", str(out_b)]) == 0
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_worker_pool_matches_serial(self, tmp_path, monkeypatch):
        config = sweep_config(tmp_path)
        out_serial, out_pool = tmp_path / "serial.csv", tmp_path / "pool.csv"
        assert run(["sweep", "--config", str(config), "--out", str(out_serial)]) == 0
        monkeypatch.setenv("GEOCS_THREADS", "2")
        assert run(["sweep", "--config", str(config), "--out", str(out_pool)]) == 0
        assert out_serial.read_bytes() == out_pool.read_bytes()

    def test_empty_lines_list_rejected(self, tmp_path):
        config = sweep_config(tmp_path, lines="")
        assert run(["sweep", "--config", str(config), "--out", str(tmp_path / "s.csv")]) == 2

    def test_timing_flag_fills_seconds(self, tmp_path):
        config = sweep_config(tmp_path, lines="8")
        out = tmp_path / "sweep.csv"
        assert run(["sweep", "--config", str(config), "--out", str(out), "--timing"]) == 0
        row = out.read_text().strip().splitlines()[1].split(",")
        assert float(row[-1]) > 0.0


class TestShearletDumpAndMetrics:
    def test_dump_masks_and_bands(self, tmp_path, capsys):
        outdir = tmp_path / "dump"
        assert run(["shearlet-dump", "--n", "32", "--phantom", "shepp_logan",
                    "--outdir", str(outdir)]) == 0
        masks = sorted(p.name for p in outdir.glob("mask_*.png"))
        bands = sorted(p.name for p in outdir.glob("band_*.png"))
        assert len(masks) == 13 and len(bands) == 13
        text = capsys.readouterr().out
        assert "partition deviation" in text

    def test_metrics_subcommand(self, tmp_path, capsys):
        truth = phantom("smooth_bumps", 64)
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        imageio.save_image(truth, a)
        imageio.save_image(np.clip(truth + 0.05, 0, 1), b)
        assert run(["metrics", "--image", str(b), "--truth", str(a)]) == 0
        out = capsys.readouterr().out
        assert "relerr_sq=" in out and "snr_db=" in out
