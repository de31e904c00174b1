"""Networks and stand-in models used by the export jobs.

The safety-perception scorer is a small CNN emitting one score on the 1-9
scale; real deployments load trained weights from a checkpoint, and
``init_scorer`` writes a seeded randomly-initialized stand-in so the CAM
plumbing can run without the production model.

Segmentation ships with a deterministic color/position heuristic over the
150-class street taxonomy as the builtin backend (a full transformer
segmenter needs pretrained weights that cannot be bundled here), plus an
optional checkpoint-based tiny CNN backend.
TODO: add a loader for real DPT checkpoints once weights can be shipped.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

N_CLASSES = 150
UNLABELED = 255

# taxonomy indices used by the heuristic segmenter
SKY, BUILDING, TREE, ROAD, GRASS, SIDEWALK, CAR, EARTH = 2, 1, 4, 6, 9, 11, 20, 13


class PerceptionScorer(nn.Module):
    """Tiny convolutional safety scorer: image -> scalar in [1, 9]."""

    def __init__(self):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, 16, kernel_size=5, stride=2, padding=2),
            nn.ReLU(inplace=True),
            nn.Conv2d(16, 32, kernel_size=5, stride=2, padding=2),
            nn.ReLU(inplace=True),
            nn.Conv2d(32, 64, kernel_size=3, stride=2, padding=1),
            nn.ReLU(inplace=True),
        )
        self.head = nn.Sequential(
            nn.AdaptiveAvgPool2d(1),
            nn.Flatten(),
            nn.Linear(64, 1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return 1.0 + 8.0 * torch.sigmoid(self.head(self.features(x)))

    def target_layer(self) -> nn.Module:
        """Last convolutional block; overridable per job via ``layer``."""
        return self.features[4]

    def layer_by_name(self, name: str) -> nn.Module:
        if name == "last":
            return self.target_layer()
        index = {"conv1": 0, "conv2": 2, "conv3": 4}.get(name)
        if index is None:
            raise ValueError(f"unknown layer {name!r}; use conv1/conv2/conv3/last")
        return self.features[index]


def init_scorer(path, seed: int = 0) -> None:
    """Write the seeded stand-in perception checkpoint."""
    torch.manual_seed(seed)
    model = PerceptionScorer()
    torch.save(model.state_dict(), path)


def load_scorer(path) -> PerceptionScorer:
    model = PerceptionScorer()
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    except Exception as exc:
        raise RuntimeError(f"cannot load perception checkpoint {path}: {exc}") from exc
    model.eval()
    return model


class TinySegNet(nn.Module):
    """Checkpoint-based segmentation backend: per-pixel 150-class logits."""

    def __init__(self):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(3, 32, kernel_size=3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(32, 64, kernel_size=3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(64, N_CLASSES, kernel_size=1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


def load_segnet(path) -> TinySegNet:
    model = TinySegNet()
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    except Exception as exc:
        raise RuntimeError(f"cannot load segmentation checkpoint {path}: {exc}") from exc
    model.eval()
    return model


def init_segnet(path, seed: int = 0) -> None:
    torch.manual_seed(seed)
    torch.save(TinySegNet().state_dict(), path)


def segment_builtin(rgb: np.ndarray) -> np.ndarray:
    """Heuristic street-scene labeling from color and vertical position.

    Deterministic by construction. Pixels no rule claims become building in
    the upper image and earth below; nothing is left unlabeled.
    """
    h, w, _ = rgb.shape
    r = rgb[:, :, 0].astype(np.int32)
    g = rgb[:, :, 1].astype(np.int32)
    b = rgb[:, :, 2].astype(np.int32)
    rows = np.repeat(np.arange(h)[:, None], w, axis=1) / max(h - 1, 1)

    labels = np.full((h, w), BUILDING, dtype=np.uint8)
    labels[rows > 0.8] = EARTH

    bright = (r + g + b) > 330
    blueish = (b > r + 20) & (b > g)
    greenish = (g > r + 15) & (g > b + 15)
    reddish = (r > g + 40) & (r > b + 40)
    grayish = (np.abs(r - g) < 25) & (np.abs(g - b) < 25)
    dark = (r + g + b) < 340

    labels[blueish & bright & (rows < 0.55)] = SKY
    labels[greenish & (rows < 0.67)] = TREE
    labels[greenish & (rows >= 0.67)] = GRASS
    labels[grayish & dark & (rows > 0.6)] = ROAD
    labels[grayish & ~dark & (rows > 0.72)] = SIDEWALK
    labels[reddish] = CAR
    return labels


def segment_with_net(model: TinySegNet, rgb: np.ndarray) -> np.ndarray:
    x = torch.from_numpy(rgb.astype(np.float32) / 255.0).permute(2, 0, 1)[None]
    with torch.no_grad():
        logits = model(x)[0]
    return logits.argmax(dim=0).to(torch.uint8).numpy()
