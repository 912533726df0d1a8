"""Export the tensors a class-activation heatmap needs: the last
convolutional layer's activations and the gradient of the predicted-class
score with respect to them, both as rank-3 (height, width, channels) files."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .extract import load_image
from .formats import write_tensor
from .networks import DEFAULT_NETWORK, build_full_model, get_network, last_conv_layer


@dataclass(frozen=True)
class CamTensors:
    activations: np.ndarray
    gradients: np.ndarray
    predicted_class: int


def compute_cam_tensors(
    image_path: str,
    network: str = DEFAULT_NETWORK,
    weights: str | None = "imagenet",
    seed: int = 0,
) -> CamTensors:
    import tensorflow as tf

    spec = get_network(network)
    model = build_full_model(network, weights=weights, seed=seed)
    conv = last_conv_layer(model)
    probe = tf.keras.Model(inputs=model.inputs, outputs=[conv.output, model.outputs[0]])

    pixels = load_image(image_path, spec.input_size)
    x = tf.convert_to_tensor(spec.preprocess(pixels[None, ...]))
    with tf.GradientTape() as tape:
        activations, predictions = probe(x, training=False)
        predicted = int(tf.argmax(predictions[0]).numpy())
        score = predictions[0, predicted]
    grads = tape.gradient(score, activations)
    if grads is None:
        raise ValueError(f"no gradient path from {conv.name!r} to the class score")
    acts_np = np.asarray(activations[0], dtype=np.float32)
    grads_np = np.asarray(grads[0], dtype=np.float32)
    if acts_np.shape != grads_np.shape:
        raise ValueError("activation and gradient shapes disagree")
    return CamTensors(acts_np, grads_np, predicted)


def export_gradcam_tensors(
    image_path: str,
    out_activations: str,
    out_gradients: str,
    network: str = DEFAULT_NETWORK,
    weights: str | None = "imagenet",
    seed: int = 0,
) -> CamTensors:
    result = compute_cam_tensors(image_path, network, weights=weights, seed=seed)
    write_tensor(result.activations, out_activations)
    write_tensor(result.gradients, out_gradients)
    return result
