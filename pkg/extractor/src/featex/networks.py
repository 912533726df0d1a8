"""Registry of supported pretrained networks and deterministic model setup.

Each entry names a Keras application builder, its preprocessing function and
the square input size its published weights expect. ``register_network``
admits additional (e.g. test-only) architectures; anything registered must
produce a rank-4 convolutional feature map somewhere before the head.

TensorFlow is configured for determinism before first use: oneDNN's
order-of-summation shortcuts are disabled and op determinism is switched on,
so re-running the same image through the same weights is bit-identical.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable

os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "3")
os.environ.setdefault("TF_ENABLE_ONEDNN_OPTS", "0")

_configured = False


def _tf():
    global _configured
    import tensorflow as tf

    if not _configured:
        try:
            tf.config.experimental.enable_op_determinism()
        except Exception:  # already running ops; determinism stays best-effort
            pass
        _configured = True
    return tf


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    builder: Callable
    preprocess: Callable
    input_size: int


_REGISTRY: dict[str, NetworkSpec] = {}


def register_network(name: str, builder, preprocess, input_size: int) -> None:
    _REGISTRY[name] = NetworkSpec(name, builder, preprocess, input_size)


def _register_keras_applications() -> None:
    from tensorflow.keras import applications as apps

    entries = [
        ("vgg16", apps.VGG16, apps.vgg16.preprocess_input, 224),
        ("vgg19", apps.VGG19, apps.vgg19.preprocess_input, 224),
        ("inception-v3", apps.InceptionV3, apps.inception_v3.preprocess_input, 299),
        (
            "inception-resnet-v2",
            apps.InceptionResNetV2,
            apps.inception_resnet_v2.preprocess_input,
            299,
        ),
        ("resnet50", apps.ResNet50, apps.resnet.preprocess_input, 224),
        ("resnet101", apps.ResNet101, apps.resnet.preprocess_input, 224),
        ("resnet152", apps.ResNet152, apps.resnet.preprocess_input, 224),
        ("resnet50-v2", apps.ResNet50V2, apps.resnet_v2.preprocess_input, 224),
        ("resnet101-v2", apps.ResNet101V2, apps.resnet_v2.preprocess_input, 224),
        ("resnet152-v2", apps.ResNet152V2, apps.resnet_v2.preprocess_input, 224),
        ("densenet121", apps.DenseNet121, apps.densenet.preprocess_input, 224),
        ("densenet169", apps.DenseNet169, apps.densenet.preprocess_input, 224),
        ("densenet201", apps.DenseNet201, apps.densenet.preprocess_input, 224),
        ("nasnet-large", apps.NASNetLarge, apps.nasnet.preprocess_input, 331),
        ("xception", apps.Xception, apps.xception.preprocess_input, 299),
        ("efficientnet-b6", apps.EfficientNetB6, apps.efficientnet.preprocess_input, 528),
    ]
    for name, builder, preprocess, size in entries:
        register_network(name, builder, preprocess, size)


DEFAULT_NETWORK = "inception-resnet-v2"

_apps_loaded = False


def network_names() -> list[str]:
    _ensure_registry()
    return sorted(_REGISTRY)


def _ensure_registry() -> None:
    global _apps_loaded
    if not _apps_loaded:
        _register_keras_applications()
        _apps_loaded = True


def get_network(name: str) -> NetworkSpec:
    _ensure_registry()
    if name not in _REGISTRY:
        raise KeyError(
            f"unknown network {name!r}; supported: {', '.join(sorted(_REGISTRY))}"
        )
    return _REGISTRY[name]


def build_feature_model(name: str, weights: str | None = "imagenet", seed: int = 0):
    """Headless model with global average pooling: one vector per image."""
    tf = _tf()
    spec = get_network(name)
    if weights is None:
        tf.keras.utils.set_random_seed(seed)
    return spec.builder(
        include_top=False,
        weights=weights,
        pooling="avg",
        input_shape=(spec.input_size, spec.input_size, 3),
    )


def build_full_model(name: str, weights: str | None = "imagenet", seed: int = 0):
    """Model with its classification head, for gradient export."""
    tf = _tf()
    spec = get_network(name)
    if weights is None:
        tf.keras.utils.set_random_seed(seed)
    return spec.builder(
        include_top=True,
        weights=weights,
        input_shape=(spec.input_size, spec.input_size, 3),
    )


def last_conv_layer(model):
    """The deepest layer with a rank-4 (batch, h, w, channels) output."""
    for layer in reversed(model.layers):
        shape = getattr(layer.output, "shape", None)
        if shape is not None and len(shape) == 4:
            return layer
    raise ValueError(f"model {model.name!r} has no rank-4 feature map layer")
