"""Bounded perceptual distance between heatmap images.

Distance = RMS of unit-normalized deep feature differences, averaged over
five convolutional taps of an AlexNet-shaped extractor, scaled into [0, 1].
Production use would load pretrained backbone weights; this build seeds the
extractor deterministically, which preserves the metric contract (zero for
identical inputs, symmetry, boundedness) without bundling a checkpoint.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

EPS = 1e-10


class _FeaturePyramid(nn.Module):
    def __init__(self):
        super().__init__()
        self.block1 = nn.Sequential(
            nn.Conv2d(3, 32, kernel_size=11, stride=4, padding=2), nn.ReLU(inplace=True))
        self.pool1 = nn.MaxPool2d(3, stride=2)
        self.block2 = nn.Sequential(
            nn.Conv2d(32, 96, kernel_size=5, padding=2), nn.ReLU(inplace=True))
        self.pool2 = nn.MaxPool2d(3, stride=2)
        self.block3 = nn.Sequential(
            nn.Conv2d(96, 192, kernel_size=3, padding=1), nn.ReLU(inplace=True))
        self.block4 = nn.Sequential(
            nn.Conv2d(192, 128, kernel_size=3, padding=1), nn.ReLU(inplace=True))
        self.block5 = nn.Sequential(
            nn.Conv2d(128, 128, kernel_size=3, padding=1), nn.ReLU(inplace=True))

    def forward(self, x):
        taps = []
        x = self.block1(x)
        taps.append(x)
        x = self.block2(self.pool1(x))
        taps.append(x)
        x = self.block3(self.pool2(x))
        taps.append(x)
        x = self.block4(x)
        taps.append(x)
        x = self.block5(x)
        taps.append(x)
        return taps


def _unit_normalize(feat: torch.Tensor) -> torch.Tensor:
    norm = torch.sqrt((feat ** 2).sum(dim=1, keepdim=True)) + EPS
    return feat / norm


class PerceptualDistance:
    def __init__(self, seed: int = 0):
        torch.manual_seed(seed)
        self.net = _FeaturePyramid()
        self.net.eval()

    @staticmethod
    def _to_tensor(image: np.ndarray) -> torch.Tensor:
        arr = np.asarray(image, dtype=np.float32)
        if arr.ndim == 2:
            arr = np.repeat(arr[:, :, None], 3, axis=2)
        if arr.max() > 1.0:
            arr = arr / max(arr.max(), 1.0)
        return torch.from_numpy(arr).permute(2, 0, 1)[None]

    def distance(self, a: np.ndarray, b: np.ndarray) -> float:
        """Symmetric score in [0, 1]; 0 for identical inputs."""
        if a.shape != b.shape:
            raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
        with torch.no_grad():
            taps_a = self.net(self._to_tensor(a))
            taps_b = self.net(self._to_tensor(b))
            layer_means = []
            for fa, fb in zip(taps_a, taps_b):
                diff = _unit_normalize(fa) - _unit_normalize(fb)
                layer_means.append((diff ** 2).sum(dim=1).mean())
            # each layer mean lies in [0, 4] (difference of unit vectors)
            msd = torch.stack(layer_means).mean()
        return float(torch.sqrt(msd) / 2.0)
