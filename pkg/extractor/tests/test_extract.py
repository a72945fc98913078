import json

import numpy as np
import numpy.testing as npt
import pytest
from PIL import Image

from oodf_extractor.cli import main
from oodf_extractor.extract import ExtractionSpec, extract

# The consumer side of the wire format: read back through the package
# that defines it.
from continual_ood.datastreams import read_features


def write_png(path, seed, size=(60, 40)):
    rng = np.random.default_rng(seed)
    data = rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
    Image.fromarray(data).save(path)


@pytest.fixture(scope="module")
def image_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("images")
    for i in range(3):
        write_png(root / f"img_{i}.png", seed=i)
    return root


def spec_for(path, **overrides):
    defaults = dict(images_dir=str(path), weights="random", batch_size=2)
    defaults.update(overrides)
    return ExtractionSpec(**defaults)


class TestExtract:
    def test_structural_single_image(self, tmp_path):
        src = tmp_path / "one"
        src.mkdir()
        write_png(src / "only.png", seed=7, size=(224, 224))
        out = tmp_path / "one.oodf"
        manifest = extract(spec_for(src), out)
        fs = read_features(out)
        assert fs.n == 1
        assert fs.n_layers == 4
        assert fs.dims == (64, 128, 256, 512)
        assert fs.layer_names == ("block1", "block2", "block3", "block4")
        assert manifest["n_images"] == 1

    def test_final_layer_unit_norm(self, image_dir, tmp_path):
        out = tmp_path / "norm.oodf"
        extract(spec_for(image_dir), out)
        final = read_features(out).layers[-1]
        npt.assert_allclose(np.linalg.norm(final, axis=1), 1.0, atol=1e-5)

    def test_no_normalize_flag(self, image_dir, tmp_path):
        out = tmp_path / "raw.oodf"
        extract(spec_for(image_dir, normalize_final=False), out)
        final = read_features(out).layers[-1]
        assert not np.allclose(np.linalg.norm(final, axis=1), 1.0, atol=1e-3)

    def test_duplicate_images_give_identical_rows(self, tmp_path):
        src = tmp_path / "dup"
        src.mkdir()
        write_png(src / "a.png", seed=3)
        write_png(src / "b.png", seed=3)
        out = tmp_path / "dup.oodf"
        extract(spec_for(src), out)
        fs = read_features(out)
        for layer in fs.layers:
            npt.assert_array_equal(layer[0], layer[1])

    def test_rerun_bit_stable(self, image_dir, tmp_path):
        out_a, out_b = tmp_path / "a.oodf", tmp_path / "b.oodf"
        extract(spec_for(image_dir), out_a)
        extract(spec_for(image_dir), out_b)
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_sorted_path_order(self, tmp_path):
        src = tmp_path / "order"
        src.mkdir()
        write_png(src / "zz.png", seed=1)
        write_png(src / "aa.png", seed=2)
        out = tmp_path / "order.oodf"
        manifest = extract(spec_for(src, batch_size=1), out)
        assert [p.endswith("aa.png") for p in manifest["images"]] == [True, False]

    def test_unreadable_image_skipped_with_manifest_entry(self, tmp_path):
        src = tmp_path / "mixed"
        src.mkdir()
        write_png(src / "good.png", seed=5)
        (src / "broken.png").write_bytes(b"not an image at all")
        out = tmp_path / "mixed.oodf"
        manifest = extract(spec_for(src), out)
        assert read_features(out).n == 1
        assert len(manifest["skipped"]) == 1
        assert manifest["skipped"][0]["path"].endswith("broken.png")

    def test_zero_usable_images_errors(self, tmp_path):
        src = tmp_path / "empty"
        src.mkdir()
        (src / "junk.png").write_bytes(b"garbage")
        with pytest.raises(ValueError):
            extract(spec_for(src), tmp_path / "never.oodf")

    def test_missing_directory_errors(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            extract(spec_for(tmp_path / "nowhere"), tmp_path / "never.oodf")


class TestCli:
    def test_end_to_end(self, image_dir, tmp_path, capsys):
        out = tmp_path / "cli.oodf"
        code = main(
            ["--images", str(image_dir), "--out", str(out), "--weights", "random"]
        )
        assert code == 0
        assert out.exists()
        manifest = json.loads((tmp_path / "cli.oodf.manifest.json").read_text())
        assert manifest["n_images"] == 3
        assert "wrote" in capsys.readouterr().out

    def test_missing_dir_exit_code(self, tmp_path):
        code = main(
            ["--images", str(tmp_path / "none"), "--out", str(tmp_path / "x.oodf"),
             "--weights", "random"]
        )
        assert code == 1
