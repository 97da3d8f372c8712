import numpy as np
import pytest

from rcan import checkpoint, cli, data, network
from rcan.rng import SplitMix64

SMALL = """G = 1
B = 1
C = 4
r = 2
scale = {scale}
synthetic_images = 1
synthetic_size = 32
patch_size = 8
batch_size = 2
steps = {steps}
report_interval = 1
checkpoint = out/model.ckpt
"""


def write_cfg(tmp_path, steps=3, scale=2, extra=""):
    path = tmp_path / "run.cfg"
    path.write_text(SMALL.format(steps=steps, scale=scale) + extra)
    return path


def test_train_writes_checkpoint_and_log(tmp_path, capsys):
    assert cli.main(["train", "--config", str(write_cfg(tmp_path))]) == 0
    log = (tmp_path / "out/model.log").read_text().split("\n")
    assert [line.split()[0] for line in log if line] == ["0", "1", "2"]
    params, cfg = checkpoint.load_checkpoint(tmp_path / "out/model.ckpt")
    assert cfg.C == 4


def test_train_zero_steps_writes_initial_checkpoint(tmp_path):
    assert cli.main(["train", "--config", str(write_cfg(tmp_path, steps=0)), "--seed", "7"]) == 0
    params, cfg = checkpoint.load_checkpoint(tmp_path / "out/model.ckpt")
    init = network.build(cfg, 7, dtype=np.float32)
    assert all(np.array_equal(params[k], init[k]) for k in init)


def test_train_is_deterministic(tmp_path):
    cfg = write_cfg(tmp_path)
    cli.main(["train", "--config", str(cfg)])
    first = (tmp_path / "out/model.ckpt").read_bytes()
    cli.main(["train", "--config", str(cfg)])
    assert (tmp_path / "out/model.ckpt").read_bytes() == first


def test_unknown_key_is_usage_error(tmp_path, capsys):
    assert cli.main(["train", "--config", str(write_cfg(tmp_path, extra="fooo = 1\n"))]) == 2
    err = capsys.readouterr().err
    assert "fooo" in err and ":13:" in err


def test_divergence_exit_code(tmp_path):
    assert cli.main(["train", "--config", str(write_cfg(tmp_path, extra="lr0 = 1e300\n"))]) == 3


@pytest.fixture
def x4_checkpoint(tmp_path):
    cfg = network.RcanConfig(G=1, B=1, C=4, r=2, scale=4)
    path = tmp_path / "x4.ckpt"
    checkpoint.save_checkpoint(network.build(cfg, 0, dtype=np.float32), cfg, path)
    return path


@pytest.fixture
def small_ppm(tmp_path):
    path = tmp_path / "in.ppm"
    data.write_ppm(data.synthetic_image(8, 8, SplitMix64(3)), path)
    return path


def test_sr_shape_and_determinism(tmp_path, x4_checkpoint, small_ppm):
    outs = []
    for name in ("a.ppm", "b.ppm"):
        assert cli.main(["sr", "--checkpoint", str(x4_checkpoint), "--in", str(small_ppm),
                         "--out", str(tmp_path / name)]) == 0
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]
    img = data.read_ppm(tmp_path / "a.ppm")
    assert (img.h, img.w) == (32, 32)


def test_sr_ensemble_differs(tmp_path, x4_checkpoint):
    src = tmp_path / "asym.ppm"
    px = np.zeros((6, 8, 3), dtype=np.uint8)
    px[:2, :3] = 255
    px[4:, 5] = 120
    data.write_ppm(data.ImageU8(px), src)
    for name, extra in (("plain.ppm", []), ("ens.ppm", ["--ensemble"])):
        assert cli.main(["sr", "--checkpoint", str(x4_checkpoint), "--in", str(src),
                         "--out", str(tmp_path / name), *extra]) == 0
    assert (tmp_path / "plain.ppm").read_bytes() != (tmp_path / "ens.ppm").read_bytes()


def test_sr_missing_checkpoint(tmp_path, small_ppm):
    assert cli.main(["sr", "--checkpoint", str(tmp_path / "nope"), "--in", str(small_ppm),
                     "--out", str(tmp_path / "o.ppm")]) == 1


def test_eval_writes_report(tmp_path, x4_checkpoint, capsys):
    hr = tmp_path / "hr.ppm"
    data.write_ppm(data.synthetic_image(40, 44, SplitMix64(0)), hr)
    (tmp_path / "set.txt").write_text("hr.ppm\n")
    out = tmp_path / "r.csv"
    assert cli.main(["eval", "--checkpoint", str(x4_checkpoint), "--manifest", str(tmp_path / "set.txt"),
                     "--degradation", "bd", "--out", str(out)]) == 0
    assert out.read_text().startswith("name,psnr_db,ssim\nhr,")
    assert "degradation BD" in capsys.readouterr().out


def test_eval_scale_mismatch(tmp_path, x4_checkpoint):
    (tmp_path / "set.txt").write_text("")
    assert cli.main(["eval", "--checkpoint", str(x4_checkpoint), "--manifest", str(tmp_path / "set.txt"),
                     "--scale", "2"]) == 2


def test_eval_failed_entry_exit_status(tmp_path, x4_checkpoint):
    (tmp_path / "set.txt").write_text("missing.ppm\n")
    assert cli.main(["eval", "--checkpoint", str(x4_checkpoint), "--manifest", str(tmp_path / "set.txt")]) == 1


def test_params_full_size_default(capsys):
    assert cli.main(["params"]) == 0
    assert capsys.readouterr().out.strip() == "15592355 (15.6 M)"


def test_params_from_config(tmp_path, capsys):
    assert cli.main(["params", "--config", str(write_cfg(tmp_path))]) == 0
    assert int(capsys.readouterr().out.split()[0]) == network.param_count(network.RcanConfig(G=1, B=1, C=4, r=2, scale=2))


def test_gradcheck_command(capsys):
    assert cli.main(["gradcheck", "--seeds", "1", "--per-tensor", "4"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "max relative error" in out


def test_ablate_grid(tmp_path, capsys):
    out = tmp_path / "grid.txt"
    assert cli.main(["ablate", "--config", str(write_cfg(tmp_path)), "--steps", "2", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("#") and "not" in lines[0]
    assert lines[1].split() == [f"({i})" for i in range(1, 9)]
    assert lines[2].split()[1:] == ["no", "yes"] * 4
    assert lines[3].split()[1:] == ["no", "no", "yes", "yes"] * 2
    assert lines[4].split()[1:] == ["no"] * 4 + ["yes"] * 4


def test_usage_errors():
    with pytest.raises(SystemExit) as info:
        cli.main(["bogus"])
    assert info.value.code == 2
