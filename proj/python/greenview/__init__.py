"""Street-level green view index estimation.

Thin Python surface over the C++ core: road-network point sampling, the
mean-shift vegetation baseline, evaluation metrics, convolutional GVI
estimators and Grad-CAM.
"""

from ._core import (
    ConvNet,
    GreenviewError,
    SamplePoint,
    error_band,
    eval_pair,
    generate_synth_dataset,
    gvi_of_mask,
    haversine_m,
    imread,
    imwrite,
    meanshift_labels,
    pearson_r,
    read_mask,
    rgb_to_luv,
    sample_road_points,
    segment_vegetation,
    train_on_manifest,
)

__all__ = [
    "ConvNet",
    "GreenviewError",
    "SamplePoint",
    "error_band",
    "eval_pair",
    "generate_synth_dataset",
    "gvi_of_mask",
    "haversine_m",
    "imread",
    "imwrite",
    "meanshift_labels",
    "pearson_r",
    "read_mask",
    "rgb_to_luv",
    "sample_road_points",
    "segment_vegetation",
    "train_on_manifest",
]
