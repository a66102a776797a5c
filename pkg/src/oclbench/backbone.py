"""A frozen, seeded two-layer convolutional feature extractor.

Two bias-free 3x3 stride-2 convolutions with ReLU after each. He-initialised
weights, with the second bank multiplied by ``gain`` so activations sit on a
scale comparable to standardized moments. Being bias-free and built from
ReLUs, the network is positively homogeneous: ``forward(a * x) == a *
forward(x)`` for ``a >= 0``. A 32x32 image maps to an 8x8x64 feature map.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError
from .rng import RngStream
from .tensors import FeatureMap

RECEPTIVE_FIELD = 7


def _conv3x3_s2(x, weight):
    # x: (N, H, W, C_in), weight: (3, 3, C_in, C_out); zero padding 1, stride 2
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(padded, (3, 3), axis=(1, 2))[:, ::2, ::2]
    # win: (N, H', W', C_in, 3, 3)
    return np.einsum("nhwcij,ijco->nhwo", win, weight, optimize=True)


class ToyBackbone:
    def __init__(self, seed=0, hidden=16, channels=64, gain=20.0):
        self.seed = int(seed)
        self.gain = float(gain)
        rng = RngStream(self.seed, "backbone")
        w1 = rng.normals(3 * 3 * 3 * hidden).reshape(3, 3, 3, hidden) * np.sqrt(2.0 / 27)
        w2 = rng.normals(3 * 3 * hidden * channels).reshape(3, 3, hidden, channels) * np.sqrt(2.0 / (9 * hidden)) * self.gain
        w1.setflags(write=False)
        w2.setflags(write=False)
        self.w1, self.w2 = w1, w2
        self.channels = channels

    def output_shape(self, height, width):
        h = (height + 1) // 2
        w = (width + 1) // 2
        return (h + 1) // 2, (w + 1) // 2, self.channels

    def forward_batch(self, images):
        """``(N, H, W, 3)`` images to ``(N, h, w, d)`` float32 activations."""
        x = np.asarray(images, dtype=np.float64)
        if x.ndim != 4 or x.shape[-1] != 3:
            raise ContractError(f"expected (N, H, W, 3) images, got shape {x.shape}")
        if x.shape[1] < RECEPTIVE_FIELD or x.shape[2] < RECEPTIVE_FIELD:
            raise ContractError(f"image {x.shape[1]}x{x.shape[2]} is smaller than the {RECEPTIVE_FIELD}px receptive field")
        h1 = np.maximum(_conv3x3_s2(x, self.w1), 0.0)
        h2 = np.maximum(_conv3x3_s2(h1, self.w2), 0.0)
        return h2.astype(np.float32)

    def forward(self, img):
        return FeatureMap(self.forward_batch(np.asarray(img)[None])[0])


def toy_backbone_forward(backbone, img):
    return backbone.forward(img)
