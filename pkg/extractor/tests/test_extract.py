"""Feature extraction: format conformance, determinism, skip handling."""

import os

import numpy as np
import pytest

from featex.extract import ExtractionJob, extract_features

from histoboost import load_feature_matrix


def job_for(image_tree, out, **kw):
    defaults = dict(
        images_dir=str(image_tree), network="tiny", out_path=str(out),
        weights=None, seed=3,
    )
    defaults.update(kw)
    return ExtractionJob(**defaults)


class TestExtract:
    def test_rows_labels_and_ids(self, image_tree, tmp_path):
        out = tmp_path / "features.csv"
        result = extract_features(job_for(image_tree, out))
        assert (result.n_rows, result.n_features) == (5, 6)
        ds = load_feature_matrix(str(out))
        assert ds.labels.tolist() == [0, 0, 1, 1, 1]
        assert ds.ids == (
            "benign/img0.png", "benign/img1.png",
            "malignant/img0.png", "malignant/img1.png", "malignant/img2.png",
        )

    def test_deterministic_bytes(self, image_tree, tmp_path):
        out = tmp_path / "features.csv"
        extract_features(job_for(image_tree, out))
        first = out.read_bytes()
        extract_features(job_for(image_tree, out))
        assert out.read_bytes() == first

    def test_batch_size_does_not_change_output(self, image_tree, tmp_path):
        out_a = tmp_path / "a.csv"
        out_b = tmp_path / "b.csv"
        extract_features(job_for(image_tree, out_a, batch_size=1))
        extract_features(job_for(image_tree, out_b, batch_size=16))
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_undecodable_image_skipped_with_log(self, image_tree, tmp_path, capsys):
        bad = image_tree / "benign" / "broken.png"
        bad.write_bytes(b"this is not a png")
        out = tmp_path / "features.csv"
        result = extract_features(job_for(image_tree, out))
        assert result.n_rows == 5
        assert [rel for rel, _ in result.skipped] == ["benign/broken.png"]
        assert "skipping" in capsys.readouterr().err
        log = out.with_name(out.name + ".skipped.log")
        assert log.exists() and "benign/broken.png" in log.read_text()
        ds = load_feature_matrix(str(out))
        assert "benign/broken.png" not in ds.ids

    def test_unknown_network(self, image_tree, tmp_path):
        with pytest.raises(KeyError, match="unknown network"):
            extract_features(job_for(image_tree, tmp_path / "f.csv", network="resnet9000"))

    def test_missing_class_dirs(self, tmp_path):
        empty = tmp_path / "images"
        empty.mkdir()
        with pytest.raises(FileNotFoundError, match="benign"):
            extract_features(job_for(empty, tmp_path / "f.csv"))

    def test_registry_lists_published_networks(self):
        from featex.networks import network_names

        names = set(network_names())
        assert {
            "vgg16", "vgg19", "inception-v3", "inception-resnet-v2",
            "resnet50", "resnet101", "resnet152",
            "resnet50-v2", "resnet101-v2", "resnet152-v2",
            "densenet121", "densenet169", "densenet201",
            "nasnet-large", "xception", "efficientnet-b6",
        } <= names


@pytest.mark.skipif(
    not os.environ.get("FEATEX_HEAVY_TESTS"),
    reason="builds a full-size network; set FEATEX_HEAVY_TESTS=1 to run",
)
def test_inception_resnet_family_feature_width(image_tree, tmp_path):
    out = tmp_path / "inception-resnet.csv"
    result = extract_features(
        job_for(image_tree, out, network="inception-resnet-v2", weights=None)
    )
    assert result.n_features == 1536
