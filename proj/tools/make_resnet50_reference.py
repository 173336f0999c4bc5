#!/usr/bin/env python3
"""Writes the ResNet50 layer list (Keras applications layout, include_top,
conv biases on) as a reference-only architecture JSON for parameter counts."""

import json
import sys


def conv(i, o, k, stride=1):
    layer = {"kind": "conv", "in_ch": i, "out_ch": o, "kernel_size": k, "bias": True}
    if stride != 1:
        layer["stride"] = stride
    return layer


def bn(c):
    return {"kind": "batchnorm", "channels": c}


def build():
    layers = [conv(3, 64, 7, 2), bn(64), {"kind": "relu"}]
    ch = 64
    stages = [(3, 64, 256, 1), (4, 128, 512, 2), (6, 256, 1024, 2), (3, 512, 2048, 2)]
    for blocks, mid, out, stride in stages:
        for b in range(blocks):
            s = stride if b == 0 else 1
            if b == 0:
                layers += [conv(ch, out, 1, s), bn(out)]  # projection shortcut
            layers += [conv(ch, mid, 1, s), bn(mid), {"kind": "relu"},
                       conv(mid, mid, 3), bn(mid), {"kind": "relu"},
                       conv(mid, out, 1), bn(out), {"kind": "relu"}]
            ch = out
    layers += [{"kind": "global_avg_pool"},
               {"kind": "dense", "in_ch": 2048, "out_ch": 1000, "bias": True},
               {"kind": "softmax"}]
    return {"name": "resnet50-reference",
            "input": {"channels": 3, "height": 224, "width": 224},
            "reference_only": True,
            "layers": layers}


if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "models/resnet50-reference.json"
    with open(out, "w") as f:
        json.dump(build(), f, indent=2)
        f.write("\n")
