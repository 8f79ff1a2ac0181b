"""Score-to-color ramp for heatmap PLY output.

A fixed viridis-like ramp: scores in [0, 1] interpolate linearly
between the anchor colors below (score, r, g, b). The float score is
stored alongside the color in the PLY so the mapping is lossless.
"""
from __future__ import annotations

import numpy as np

RAMP = np.array([
    [0.00, 0.267, 0.005, 0.329],
    [0.25, 0.230, 0.322, 0.546],
    [0.50, 0.128, 0.567, 0.551],
    [0.75, 0.369, 0.789, 0.383],
    [1.00, 0.993, 0.906, 0.144],
])


def score_colors(scores) -> np.ndarray:
    """Map scores in [0, 1] to uint8 RGB rows via the documented ramp."""
    s = np.clip(np.asarray(scores, dtype=float).reshape(-1), 0.0, 1.0)
    rgb = np.stack([np.interp(s, RAMP[:, 0], RAMP[:, 1 + ch]) for ch in range(3)],
                   axis=1)
    return np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
