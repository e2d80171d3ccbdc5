import struct
import zlib

import numpy as np
import pytest

from invrescale import checkpoint
from invrescale.backbone import Backbone, BackboneConfig, EncodingMode
from invrescale.config import ConfigError, TrainConfig, apply_overrides, format_text, from_flat, parse_text, to_flat
from invrescale.imageio import Image, list_images, read_image, write_image
from invrescale.resample import ResampleMethod


def _cfg():
    return TrainConfig(
        seed=2**63 + 5,
        method=ResampleMethod.BILINEAR,
        base_lr=3.3e-4,
        backbone=BackboneConfig(num_blocks=2, feature_width=4, encoding_mode=EncodingMode.LF_ONLY),
    )


# -- checkpoint ----------------------------------------------------------------------


def test_checkpoint_round_trip_is_bitwise(tmp_path):
    cfg = _cfg()
    net = Backbone(cfg.backbone).randomize_(np.random.default_rng(0))
    path = tmp_path / "m.iarn"
    checkpoint.save(path, cfg, net.state_dict())
    cfg2, params = checkpoint.load(path)
    assert cfg2 == cfg
    assert list(params) == list(net.params)
    for k, v in net.state_dict().items():
        assert params[k].tobytes() == v.tobytes()
    checkpoint.save(tmp_path / "again.iarn", cfg2, params)
    assert (tmp_path / "again.iarn").read_bytes() == path.read_bytes()


def test_checkpoint_layout():
    cfg = TrainConfig(backbone=BackboneConfig(num_blocks=0))
    params = {"w": np.arange(6, dtype=np.float32).reshape(2, 3)}
    blob = checkpoint.dumps(cfg, params)
    assert blob[:4] == b"IARN"
    assert struct.unpack("<I", blob[4:8])[0] == 1
    (cfg_len,) = struct.unpack("<I", blob[8:12])
    text = blob[12 : 12 + cfg_len].decode("utf-8")
    assert "num_blocks = 0" in text
    pos = 12 + cfg_len
    n, name_len = struct.unpack("<2I", blob[pos : pos + 8])
    assert (n, name_len) == (1, 1)
    assert blob[pos + 8 : pos + 9] == b"w"
    rank, d0, d1 = struct.unpack("<3I", blob[pos + 9 : pos + 21])
    assert (rank, d0, d1) == (2, 2, 3)
    data = np.frombuffer(blob[pos + 21 : pos + 45], dtype="<f4")
    np.testing.assert_array_equal(data, np.arange(6))
    assert struct.unpack("<I", blob[-4:])[0] == zlib.crc32(blob[:-4])
    assert len(blob) == pos + 45 + 4


@pytest.mark.parametrize("where", [0, 5, 20, -10, -1])
def test_corruption_is_detected(where):
    cfg = _cfg()
    blob = bytearray(checkpoint.dumps(cfg, Backbone(cfg.backbone).state_dict()))
    blob[where] ^= 0x01
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(bytes(blob))


def test_truncated_checkpoint():
    cfg = _cfg()
    blob = checkpoint.dumps(cfg, Backbone(cfg.backbone).state_dict())
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(blob[:8])
    body = blob[:-100]
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(body + struct.pack("<I", zlib.crc32(body)))


# -- config --------------------------------------------------------------------------


def test_config_text_round_trip():
    cfg = _cfg()
    assert from_flat(parse_text(format_text(cfg))) == cfg
    assert set(to_flat(cfg)) >= {"batch_size", "num_blocks", "lambda_g", "encoding_mode", "method"}


def test_config_comments_and_errors():
    pairs = parse_text("# header\nbatch_size = 2  # small\n\nmethod = bicubic\n")
    cfg = from_flat(pairs)
    assert cfg.batch_size == 2 and cfg.method is ResampleMethod.BICUBIC
    with pytest.raises(ConfigError):
        parse_text("bogus_key = 1\n")
    with pytest.raises(ConfigError):
        parse_text("no equals sign\n")
    with pytest.raises(ConfigError):
        apply_overrides(cfg, {"batch_size": "two"})
    with pytest.raises(ConfigError):
        apply_overrides(cfg, {"patch_size": "4"})


def test_config_defaults():
    cfg = TrainConfig()
    assert (cfg.batch_size, cfg.patch_size, cfg.base_lr, cfg.lr_halving_period) == (4, 48, 2e-4, 500)
    assert (cfg.scale_min, cfg.scale_max) == (1.0, 4.0)
    w = cfg.weights
    assert (w.recon, w.guide, w.latent, w.invert) == (1.0, 16.0, 0.0, 2.0)


# -- images --------------------------------------------------------------------------


@pytest.mark.parametrize("suffix", [".png", ".ppm"])
def test_rgb_image_round_trip(tmp_path, suffix):
    arr = np.random.default_rng(0).integers(0, 256, (13, 17, 3), dtype=np.uint8)
    path = tmp_path / f"a{suffix}"
    write_image(path, Image.from_uint8(arr))
    img = read_image(path)
    assert img.channels == 3 and np.array_equal(img.to_uint8(), arr)
    write_image(tmp_path / f"b{suffix}", img)
    assert np.array_equal(read_image(tmp_path / f"b{suffix}").to_uint8(), arr)


@pytest.mark.parametrize("suffix", [".png", ".pgm"])
def test_gray_image_round_trip(tmp_path, suffix):
    arr = np.random.default_rng(1).integers(0, 256, (9, 11), dtype=np.uint8)
    write_image(tmp_path / f"g{suffix}", Image.from_uint8(arr))
    img = read_image(tmp_path / f"g{suffix}")
    assert img.channels == 1 and img.colorspace == "luminance"
    assert np.array_equal(img.to_uint8(), arr)


def test_quantization_clamps_and_rounds_half_up():
    img = Image(np.array([[[-0.5, 0.0, 0.5 / 255, 1.5 / 255, 1.0, 2.0]]]))
    np.testing.assert_array_equal(img.to_uint8(), [[0, 0, 1, 2, 255, 255]])


def test_image_validation(tmp_path):
    with pytest.raises(ValueError):
        Image(np.zeros((2, 4, 4)))
    with pytest.raises(ValueError):
        write_image(tmp_path / "x.jpg", Image(np.zeros((3, 4, 4))))
    (tmp_path / "a.png").write_bytes(b"")
    (tmp_path / "notes.txt").write_text("x")
    assert [p.name for p in list_images(tmp_path)] == ["a.png"]
