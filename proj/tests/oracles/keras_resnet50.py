#!/usr/bin/env python3
"""Cross-checks the shipped ResNet50 description against Keras itself:
same total parameter count and the same per-kind breakdown. Exits 77
(skipped) when TensorFlow is not installed."""

import json
import os
import sys

os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "3")
try:
    import tensorflow as tf
except ImportError:
    print("tensorflow not installed; skipping")
    sys.exit(77)


def main():
    path = sys.argv[1]
    model = tf.keras.applications.ResNet50(weights=None)
    keras = {"conv": 0, "batchnorm": 0, "dense": 0}
    for layer in model.layers:
        n = layer.count_params()
        if isinstance(layer, tf.keras.layers.Conv2D):
            keras["conv"] += n
        elif isinstance(layer, tf.keras.layers.BatchNormalization):
            keras["batchnorm"] += n
        elif isinstance(layer, tf.keras.layers.Dense):
            keras["dense"] += n

    with open(path) as f:
        cfg = json.load(f)
    ours = {"conv": 0, "batchnorm": 0, "dense": 0}
    for l in cfg["layers"]:
        if l["kind"] == "conv":
            ours["conv"] += l["kernel_size"] ** 2 * l["in_ch"] * l["out_ch"] + l["out_ch"]
        elif l["kind"] == "dense":
            ours["dense"] += l["in_ch"] * l["out_ch"] + l["out_ch"]
        elif l["kind"] == "batchnorm":
            ours["batchnorm"] += 4 * l["channels"]

    print("keras", model.count_params(), keras)
    print("file ", sum(ours.values()), ours)
    return 0 if keras == ours and model.count_params() == sum(ours.values()) else 1


if __name__ == "__main__":
    sys.exit(main())
