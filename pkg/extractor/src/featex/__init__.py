"""Deep-feature and heatmap-tensor exporter for pretrained CNNs.

Feeds the histoboost toolkit through its file formats: per-image feature
vectors as Feature CSVs, and last-convolutional-layer activation/gradient
pairs as DFT1 tensor files.
"""

from .camtensors import CamTensors, compute_cam_tensors, export_gradcam_tensors
from .extract import ExtractionJob, ExtractionResult, extract_features
from .networks import (
    DEFAULT_NETWORK,
    build_feature_model,
    build_full_model,
    get_network,
    last_conv_layer,
    network_names,
    register_network,
)

__version__ = "0.1.0"
