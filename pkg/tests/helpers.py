"""Shared test utilities."""

import numpy as np


def sinusoid_translation_clip(H=32, W=32, T=2, dx=1.0, dy=0.0, period=12.0):
    """Smooth doubly-periodic pattern translated by exactly (dx, dy) px/frame.

    The pattern is sampled analytically at shifted coordinates, so the true
    displacement between consecutive frames is known exactly.
    """
    ys, xs = np.mgrid[0:H, 0:W].astype(np.float64)
    frames = []
    for t in range(T):
        sx = xs - dx * t
        sy = ys - dy * t
        img = 0.5 + 0.25 * np.sin(2 * np.pi * sx / period) * np.sin(2 * np.pi * sy / period)
        frames.append(img[None])
    return np.stack(frames).astype(np.float32)


def interior(arr2d, margin=4):
    return arr2d[margin:-margin, margin:-margin]


def mean_epe(u, dx, dy, margin=4):
    """Mean endpoint error of a [2, H, W] flow against constant (dx, dy)."""
    err = np.sqrt((u[0] - dx) ** 2 + (u[1] - dy) ** 2)
    return float(interior(err, margin).mean())
