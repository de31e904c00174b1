"""Class activation mapping variants over the perception scorer.

Every method produces a non-negative raw saliency field at the target
layer's resolution from a single scalar regression output:

* GradCAM          channel weights = spatially pooled gradients
* HiResCAM         elementwise gradient-activation product, channel-summed
* XGradCAM         gradients weighted by activations, normalized per channel
* GradCAMPlusPlus  second/third-order gradient weighting
* AblationCAM      per-channel score drop when the channel is zeroed
* ScoreCAM         per-channel score of the activation-masked input
* EigenCAM         first principal component of the activations

All run the model in eval mode on CPU; given fixed weights the outputs are
deterministic (EigenCAM's singular-vector sign is canonicalized).
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from .models import PerceptionScorer

EPS = 1e-7


class _Capture:
    """Grabs activations (and gradients on backward) of one layer."""

    def __init__(self, layer):
        self.activations = None
        self.gradients = None
        self._fwd = layer.register_forward_hook(self._on_forward)

    def _on_forward(self, module, args, output):
        self.activations = output
        if output.requires_grad:
            output.register_hook(self._on_grad)

    def _on_grad(self, grad):
        self.gradients = grad

    def remove(self):
        self._fwd.remove()


def _forward_with_capture(model: PerceptionScorer, layer, x: torch.Tensor):
    cap = _Capture(layer)
    try:
        score = model(x).squeeze()
        model.zero_grad(set_to_none=True)
        score.backward(retain_graph=False)
    finally:
        cap.remove()
    acts = cap.activations.detach()[0]     # (C, h, w)
    grads = cap.gradients.detach()[0]
    return score.detach(), acts, grads


def _weighted_sum(weights: torch.Tensor, acts: torch.Tensor) -> np.ndarray:
    cam = torch.relu((weights[:, None, None] * acts).sum(dim=0))
    return cam.numpy()


def grad_cam(model, layer, x):
    _, acts, grads = _forward_with_capture(model, layer, x)
    return _weighted_sum(grads.mean(dim=(1, 2)), acts)


def hires_cam(model, layer, x):
    _, acts, grads = _forward_with_capture(model, layer, x)
    return torch.relu((grads * acts).sum(dim=0)).numpy()


def xgrad_cam(model, layer, x):
    _, acts, grads = _forward_with_capture(model, layer, x)
    denom = acts.sum(dim=(1, 2)) + EPS
    weights = (grads * acts).sum(dim=(1, 2)) / denom
    return _weighted_sum(weights, acts)


def grad_cam_plus_plus(model, layer, x):
    _, acts, grads = _forward_with_capture(model, layer, x)
    g2 = grads ** 2
    g3 = g2 * grads
    denom = 2.0 * g2 + (acts * g3).sum(dim=(1, 2), keepdim=True)
    alpha = g2 / torch.where(denom.abs() < EPS, torch.full_like(denom, EPS), denom)
    weights = (alpha * torch.relu(grads)).sum(dim=(1, 2))
    return _weighted_sum(weights, acts)


def ablation_cam(model, layer, x):
    with torch.no_grad():
        base = model(x).squeeze().item()
    cap = _Capture(layer)
    try:
        with torch.no_grad():
            model(x)
        acts = cap.activations.detach()[0]
    finally:
        cap.remove()

    n_channels = acts.shape[0]
    drops = torch.zeros(n_channels)
    ablated = {"kill": -1}

    def zero_channel(module, args, output):
        out = output.clone()
        out[:, ablated["kill"]] = 0.0
        return out

    handle = layer.register_forward_hook(zero_channel)
    try:
        with torch.no_grad():
            for k in range(n_channels):
                ablated["kill"] = k
                drops[k] = base - model(x).squeeze().item()
    finally:
        handle.remove()
    weights = drops / (abs(base) + EPS)
    return _weighted_sum(weights, acts)


def score_cam(model, layer, x):
    cap = _Capture(layer)
    try:
        with torch.no_grad():
            model(x)
        acts = cap.activations.detach()[0]
    finally:
        cap.remove()

    n_channels = acts.shape[0]
    scores = torch.zeros(n_channels)
    with torch.no_grad():
        for k in range(n_channels):
            mask = acts[k:k + 1][None]  # (1,1,h,w)
            mask = F.interpolate(mask, size=x.shape[2:], mode="bilinear",
                                 align_corners=False)[0, 0]
            lo, hi = mask.min(), mask.max()
            if (hi - lo).item() < EPS:
                continue
            mask = (mask - lo) / (hi - lo)
            scores[k] = model(x * mask).squeeze()
    weights = torch.softmax(scores, dim=0)
    return _weighted_sum(weights, acts)


def eigen_cam(model, layer, x):
    cap = _Capture(layer)
    try:
        with torch.no_grad():
            model(x)
        acts = cap.activations.detach()[0]
    finally:
        cap.remove()
    c, h, w = acts.shape
    flat = acts.reshape(c, h * w).T  # (hw, C)
    flat = flat - flat.mean(dim=0, keepdim=True)
    _, _, vt = torch.linalg.svd(flat, full_matrices=False)
    projection = flat @ vt[0]
    # SVD fixes the vector only up to sign; pin it so the dominant tail is positive
    if projection[projection.abs().argmax()] < 0:
        projection = -projection
    return torch.relu(projection).reshape(h, w).numpy()


CAM_FUNCTIONS = {
    "AblationCAM": ablation_cam,
    "EigenCAM": eigen_cam,
    "GradCAM": grad_cam,
    "GradCAMPlusPlus": grad_cam_plus_plus,
    "HiResCAM": hires_cam,
    "ScoreCAM": score_cam,
    "XGradCAM": xgrad_cam,
}

CAM_METHODS = tuple(sorted(CAM_FUNCTIONS))


def compute_cam(model: PerceptionScorer, method: str, rgb: np.ndarray,
                layer_name: str = "last") -> np.ndarray:
    """Saliency field for one image, upsampled to the image resolution."""
    if method not in CAM_FUNCTIONS:
        raise ValueError(f"unknown CAM method {method!r}")
    layer = model.layer_by_name(layer_name)
    x = torch.from_numpy(rgb.astype(np.float32) / 255.0).permute(2, 0, 1)[None]
    raw = CAM_FUNCTIONS[method](model, layer, x)
    t = torch.from_numpy(raw)[None, None]
    up = F.interpolate(t, size=(rgb.shape[0], rgb.shape[1]), mode="bilinear",
                       align_corners=False)[0, 0]
    return up.numpy()
