"""Feature-map resizing to the probe grid plus RoI / global average pooling."""

from __future__ import annotations

import numpy as np

PROBE_GRID = (7, 7)


def resize_to_grid(
    feature_map: np.ndarray, grid: tuple[int, int] = PROBE_GRID
) -> np.ndarray:
    """Bilinear-resize a (C, H, W) map to (C, grid_h, grid_w).

    Uses the align-corners=false convention: source coordinate of output
    cell j is (j + 0.5) * size_ratio - 0.5, clamped at the borders. The
    interpolation is written in the monotone form v0 + f * (v1 - v0) so
    constant maps are preserved exactly; same-size inputs pass through
    unchanged.
    """
    fm = np.asarray(feature_map, dtype=np.float64)
    if fm.ndim != 3:
        raise ValueError(f"feature map must be (C, H, W), got shape {fm.shape}")
    _, h, w = fm.shape
    gh, gw = int(grid[0]), int(grid[1])
    if min(h, w, gh, gw) < 1:
        raise ValueError("all spatial sizes must be >= 1")

    def _axis(src: int, dst: int):
        coords = (np.arange(dst) + 0.5) * (src / dst) - 0.5
        lo = np.floor(coords)
        frac = coords - lo
        i0 = np.clip(lo.astype(np.int64), 0, src - 1)
        i1 = np.clip(lo.astype(np.int64) + 1, 0, src - 1)
        return i0, i1, frac

    y0, y1, fy = _axis(h, gh)
    x0, x1, fx = _axis(w, gw)

    rows0 = fm[:, y0, :]
    rows1 = fm[:, y1, :]
    top = rows0[:, :, x0] + fx * (rows0[:, :, x1] - rows0[:, :, x0])
    bottom = rows1[:, :, x0] + fx * (rows1[:, :, x1] - rows1[:, :, x0])
    return top + fy[None, :, None] * (bottom - top)


def _included_cells(
    bbox: np.ndarray, image_size: tuple[int, int], grid_h: int, grid_w: int
) -> tuple[int, int, int, int]:
    """Cell ranges (r0, r1, c0, c1), half-open, for a pixel-space box.

    The box is rescaled onto the grid; a cell is included when its center
    falls inside the scaled box. When no center qualifies, the single cell
    containing the box center is used.
    """
    x1, y1, x2, y2 = (float(v) for v in bbox)
    width, height = image_size
    gx1 = x1 * grid_w / width
    gx2 = x2 * grid_w / width
    gy1 = y1 * grid_h / height
    gy2 = y2 * grid_h / height

    c0 = max(int(np.ceil(gx1 - 0.5)), 0)
    c1 = min(int(np.ceil(gx2 - 0.5)), grid_w)
    r0 = max(int(np.ceil(gy1 - 0.5)), 0)
    r1 = min(int(np.ceil(gy2 - 0.5)), grid_h)

    if c0 >= c1 or r0 >= r1:
        cc = min(max(int(np.floor((gx1 + gx2) / 2)), 0), grid_w - 1)
        rc = min(max(int(np.floor((gy1 + gy2) / 2)), 0), grid_h - 1)
        return rc, rc + 1, cc, cc + 1
    return r0, r1, c0, c1


def roi_pool(
    feature_map: np.ndarray, bbox: np.ndarray, image_size: tuple[int, int]
) -> np.ndarray:
    """Average the grid cells covered by an object box into one C-vector."""
    fm = np.asarray(feature_map, dtype=np.float64)
    if fm.ndim != 3:
        raise ValueError(f"feature map must be (C, H, W), got shape {fm.shape}")
    x1, y1, x2, y2 = (float(v) for v in np.asarray(bbox).reshape(4))
    if not (x2 > x1 and y2 > y1):
        raise ValueError(f"degenerate bbox {(x1, y1, x2, y2)}")
    _, gh, gw = fm.shape
    r0, r1, c0, c1 = _included_cells(
        np.array([x1, y1, x2, y2]), image_size, gh, gw
    )
    region = fm[:, r0:r1, c0:c1]
    return region.reshape(fm.shape[0], -1).mean(axis=1)


def global_pool(feature_map: np.ndarray) -> np.ndarray:
    """Per-channel mean over all spatial locations."""
    fm = np.asarray(feature_map, dtype=np.float64)
    if fm.ndim != 3:
        raise ValueError(f"feature map must be (C, H, W), got shape {fm.shape}")
    return fm.reshape(fm.shape[0], -1).mean(axis=1)
