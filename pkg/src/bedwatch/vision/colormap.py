"""Fixed 256-entry color table for depth visualization.

A blue-cyan-green-yellow-red ramp computed with exact integer
interpolation between five anchor colors, so the table is identical on
every platform (documented in docs/storage-and-formats.md).
"""

from __future__ import annotations

import numpy as np

_ANCHORS = (
    (0, (0, 0, 128)),
    (64, (0, 192, 255)),
    (128, (0, 255, 64)),
    (192, (255, 255, 0)),
    (255, (255, 32, 0)),
)


def _build_table() -> np.ndarray:
    table = np.zeros((256, 3), dtype=np.uint8)
    for (i0, c0), (i1, c1) in zip(_ANCHORS, _ANCHORS[1:]):
        span = i1 - i0
        for i in range(i0, i1 + 1):
            t = i - i0
            for ch in range(3):
                table[i, ch] = (c0[ch] * (span - t) + c1[ch] * t + span // 2) // span
    return table


DEPTH_COLOR_TABLE = _build_table()
