"""Shared fixtures: a small deterministic CNN registered as `tiny` so tests
never need pretrained weight downloads, plus a generated image tree."""

import numpy as np
import pytest
from PIL import Image

from featex.networks import register_network


def tiny_builder(include_top=False, weights=None, pooling=None, input_shape=None):
    from tensorflow import keras

    inputs = keras.Input(shape=input_shape)
    x = keras.layers.Conv2D(8, 3, strides=2, padding="same", activation="relu")(inputs)
    x = keras.layers.Conv2D(
        6, 3, strides=2, padding="same", activation="relu", name="feature_map"
    )(x)
    if include_top:
        y = keras.layers.GlobalAveragePooling2D()(x)
        y = keras.layers.Dense(4, activation="softmax")(y)
        return keras.Model(inputs, y)
    if pooling == "avg":
        x = keras.layers.GlobalAveragePooling2D()(x)
    return keras.Model(inputs, x)


register_network("tiny", tiny_builder, lambda x: x / 127.5 - 1.0, 32)


@pytest.fixture()
def image_tree(tmp_path):
    rng = np.random.default_rng(7)
    for cls, count in (("benign", 2), ("malignant", 3)):
        d = tmp_path / "images" / cls
        d.mkdir(parents=True)
        for i in range(count):
            pixels = rng.integers(0, 256, size=(40, 50, 3)).astype(np.uint8)
            Image.fromarray(pixels).save(d / f"img{i}.png")
    return tmp_path / "images"
