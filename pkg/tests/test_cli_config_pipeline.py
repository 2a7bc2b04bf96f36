import json

import numpy as np
import pytest

from turbmit import charts, config
from turbmit.cli import main
from turbmit.errors import ConfigurationError
from turbmit.imageio import read_image, read_stack, write_image, write_stack
from turbmit.pipeline import psnr, run_pipeline, turbulence_params


def test_config_defaults_and_parse():
    cfg = config.parse("[turbulence]\nd_over_r0 = 2\nsubharmonics = yes\n[reference]\nL = 7\n")
    assert cfg["turbulence"]["d_over_r0"] == 2.0 and cfg["turbulence"]["subharmonics"] is True
    assert cfg["reference"]["L"] == 7 and cfg["reference"]["beta"] == 1.0
    assert config.parse(config.dump(cfg)) == cfg
    assert config.defaults()["deconv"]["enabled"] == "auto"


@pytest.mark.parametrize("text", ["[bogus]\nx = 1\n", "[pipeline]\nframez = 3\n", "[pipeline]\nframes = many\n",
                                  "not an ini"])
def test_config_errors(text):
    with pytest.raises(ConfigurationError):
        config.parse(text)


def test_config_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        config.load(tmp_path / "none.ini")


def test_turbulence_params_from_ratio():
    cfg = config.parse("[turbulence]\nd_over_r0 = 4\n")
    assert turbulence_params(cfg, 0).r0 == pytest.approx(0.05)


def test_image_io_roundtrip(tmp_path):
    x = charts.resolution_chart(32)
    write_image(tmp_path / "a.png", x)
    assert np.abs(read_image(tmp_path / "a.png") - x).max() <= 0.5 / 65535 + 1e-12
    write_image(tmp_path / "b.png", x, bits=8)
    assert np.abs(read_image(tmp_path / "b.png") - x).max() <= 0.5 / 255 + 1e-12
    frames = np.stack([x, 1 - x])
    write_stack(tmp_path / "s", frames)
    np.testing.assert_array_equal(read_stack(tmp_path / "s"), frames)
    (tmp_path / "s" / "frames.npy").unlink()
    assert read_stack(tmp_path / "s").shape == (2, 32, 32)
    with pytest.raises(ConfigurationError):
        read_image(tmp_path / "missing.png")
    with pytest.raises(ConfigurationError):
        read_stack(tmp_path / "a.png")


def test_scene_set():
    s = charts.scene_set(32)
    assert len(s) == 5
    for img in s.values():
        assert img.shape == (32, 32) and img.min() >= 0 and img.max() <= 1


def test_psnr():
    x = np.zeros((4, 4))
    assert psnr(x, x) == float("inf")
    assert psnr(x + 0.1, x) == pytest.approx(20.0)


def test_cli_exit_code_for_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[nope]\n")
    assert main(["pipeline", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["pipeline", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path / "o")]) == 2
    assert main(["simulate", "--image", str(tmp_path / "none.png"), "--out", str(tmp_path / "o")]) == 2
    assert main(["deconv", "--in", str(tmp_path / "none.png"), "--basis", "x", "--out", str(tmp_path / "o.png")]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_exit_code_for_numerical_failure(tmp_path):
    rc = main(["theory", "calibrate-beta", "--eps", "1e-12", "--trials", "1", "--ratios", "2",
               "--out", str(tmp_path / "b.csv")])
    assert rc == 3


def test_cli_theory_csv(tmp_path):
    out = tmp_path / "box.csv"
    assert main(["theory", "boxcar", "--points", "5", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "sigma,v0" and len(lines) == 6


def test_cli_simulate_reference_fuse(tmp_path):
    cfgp = tmp_path / "c.ini"
    cfgp.write_text("[pipeline]\nsize = 32\nframes = 3\n[turbulence]\nd_over_r0 = 2\n")
    assert main(["simulate", "--config", str(cfgp), "--out", str(tmp_path / "sim")]) == 0
    assert read_stack(tmp_path / "sim").shape == (3, 32, 32)
    assert main(["reference", "--in", str(tmp_path / "sim"), "--window", "3", "--out",
                 str(tmp_path / "ref.png")]) == 0
    assert main(["fuse", "--in", str(tmp_path / "sim"), "--ref", str(tmp_path / "ref.png"), "--out",
                 str(tmp_path / "fused.png")]) == 0
    fused = np.load(tmp_path / "fused.npy")
    frames = read_stack(tmp_path / "sim")
    # warping moves pixels, so only the global range is preserved
    assert frames.min() - 1e-12 <= fused.min() and fused.max() <= frames.max() + 1e-12


def test_pipeline_without_turbulence_is_identity(tmp_path):
    cfg = config.parse("[pipeline]\nsize = 32\nframes = 3\n[turbulence]\nenabled = no\n")
    res = run_pipeline(cfg, tmp_path, verify=True)
    np.testing.assert_allclose(res.restored, charts.resolution_chart(32), atol=1e-12)
    m = json.loads((tmp_path / "metrics.json").read_text())
    assert m["verify"]["passed"] and "psf_weights" not in m
