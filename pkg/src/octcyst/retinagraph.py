"""Graph-based ILM/ISM boundary extraction.

Each pixel is a node; a node connects rightward to its three column-(c+1)
neighbors within one row, weighted by 2 - (g_a + g_b) + w_min on the
dark-to-light vertical gradient.  Virtual endpoint columns attach to every
row of the first and last columns with weight w_min, so boundary endpoints
need no initialization.  The first minimum-weight path is classified as
ILM or ISM by the brightness above/below it; the graph is cut at that path
and the second boundary is searched on the remaining side.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    DegeneratePath,
    EmptyField,
    ImageTooSmall,
    NoLayerContrast,
    OrderingViolation,
    SubgraphTooThin,
)

DEFAULT_W_MIN = 1e-5


class LayerKind(Enum):
    ILM = "ILM"
    ISM = "ISM"


@dataclass(frozen=True)
class RoiMask:
    mask: np.ndarray  # uint8 {0,1}, (rows, cols)
    ilm: np.ndarray  # per-column row indices
    ism: np.ndarray


def vertical_gradient(image: np.ndarray) -> np.ndarray:
    """Dark-to-light response I(r+1,c) - I(r-1,c), clamped at 0, min-max
    normalized to [0,1].  Border rows copy the nearest interior row; a
    constant response field normalizes to all zeros."""
    img = np.asarray(image, dtype=np.float64)
    rows = img.shape[0]
    if rows < 3:
        raise ImageTooSmall(f"need at least 3 rows, got {rows}")
    d = np.empty_like(img)
    d[1:-1] = img[2:] - img[:-2]
    d[0] = d[1]
    d[-1] = d[-2]
    np.maximum(d, 0.0, out=d)
    lo, hi = d.min(), d.max()
    if hi == lo:
        return np.zeros_like(d)
    return (d - lo) / (hi - lo)


def edge_weight(g_a: float, g_b: float, w_min: float) -> float:
    """Weight of the edge joining two pixels with gradient values g_a, g_b."""
    return 2.0 - (g_a + g_b) + w_min


def path_cost(field: np.ndarray, path: np.ndarray, w_min: float) -> float:
    """Total weight of a left-to-right path, endpoint edges included."""
    cols = field.shape[1]
    cost = 2.0 * w_min
    for c in range(cols - 1):
        cost += edge_weight(field[path[c], c], field[path[c + 1], c + 1], w_min)
    return cost


def _dijkstra(field: np.ndarray, w_min: float, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Minimum-weight path restricted per column to rows [lo[c], hi[c]).

    Heap entries order by (distance, row, insertion sequence) so that ties
    settle toward smaller rows first, then earlier insertion; relaxation is
    strict, so each node keeps the first parent that reached its final
    distance."""
    rows, cols = field.shape
    dist = np.full((rows, cols), np.inf)
    parent = np.full((rows, cols), -1, dtype=np.int64)
    settled = np.zeros((rows, cols), dtype=bool)

    heap = []
    seq = 0
    for r in range(lo[0], hi[0]):
        dist[r, 0] = w_min
        heapq.heappush(heap, (w_min, r, seq, 0))
        seq += 1

    end_row = -1
    while heap:
        d, r, _, c = heapq.heappop(heap)
        if settled[r, c]:
            continue
        settled[r, c] = True
        if c == cols - 1:
            # all sink edges cost w_min, so the first settled
            # last-column node ends the minimum path
            end_row = r
            break
        g_a = field[r, c]
        nc = c + 1
        for nr in (r - 1, r, r + 1):
            if nr < lo[nc] or nr >= hi[nc]:
                continue
            nd = d + 2.0 - (g_a + field[nr, nc]) + w_min
            if nd < dist[nr, nc]:
                dist[nr, nc] = nd
                parent[nr, nc] = r
                heapq.heappush(heap, (nd, nr, seq, nc))
                seq += 1

    if end_row < 0:
        raise EmptyField("no admissible path through the field")

    path = np.empty(cols, dtype=np.int64)
    path[cols - 1] = end_row
    for c in range(cols - 1, 0, -1):
        path[c - 1] = parent[path[c], c]
    return path


def shortest_layer_path(field: np.ndarray, w_min: float = DEFAULT_W_MIN) -> np.ndarray:
    """Minimum-total-weight left-to-right path over the full field."""
    f = np.asarray(field, dtype=np.float64)
    if f.size == 0:
        raise EmptyField("empty gradient field")
    rows, cols = f.shape
    lo = np.zeros(cols, dtype=np.int64)
    hi = np.full(cols, rows, dtype=np.int64)
    return _dijkstra(f, w_min, lo, hi)


def classify_layer(image: np.ndarray, path: np.ndarray) -> LayerKind:
    """ISM if the region strictly above the path is brighter on average
    than the region strictly below it; ILM otherwise."""
    img = np.asarray(image, dtype=np.float64)
    rows, cols = img.shape
    row_idx = np.arange(rows)[:, None]
    above = row_idx < path[None, :]
    below = row_idx > path[None, :]
    n_above = int(above.sum())
    n_below = int(below.sum())
    if n_above == 0 or n_below == 0:
        raise DegeneratePath("path leaves no pixels above or below")
    mean_above = float(img[above].sum()) / n_above
    mean_below = float(img[below].sum()) / n_below
    return LayerKind.ISM if mean_above > mean_below else LayerKind.ILM


def segment_layers(
    image: np.ndarray, w_min: float = DEFAULT_W_MIN
) -> tuple[np.ndarray, np.ndarray]:
    """Extract both boundaries; returns (ilm, ism) with ilm above ism.

    The first path is found on the full graph and classified; the second is
    searched above it (if the first was ISM) or below it (if it was ILM).
    The cut removes the path rows plus one guard row on the searched side:
    the central-difference ridge of a boundary spans two rows, and without
    the guard the second search re-detects the first boundary's other
    ridge row instead of the remaining layer."""
    img = np.asarray(image)
    rows, cols = img.shape
    if rows < 5:
        raise ImageTooSmall(f"need at least 5 rows, got {rows}")
    field = vertical_gradient(img)
    if not field.any():
        raise NoLayerContrast("gradient field is identically zero")

    first = shortest_layer_path(field, w_min)
    kind = classify_layer(img, first)
    if kind is LayerKind.ISM:
        lo = np.zeros(cols, dtype=np.int64)
        hi = first - 1
    else:
        lo = first + 2
        hi = np.full(cols, rows, dtype=np.int64)
    if int((hi - lo).min()) < 3:
        raise SubgraphTooThin("cut leaves fewer than 3 rows to search")
    second = _dijkstra(field, w_min, lo, hi)

    ilm, ism = (second, first) if kind is LayerKind.ISM else (first, second)
    if not np.all(ilm < ism):
        raise OrderingViolation("extracted boundaries touch or cross")
    return ilm, ism


def roi_mask(ilm: np.ndarray, ism: np.ndarray, rows: int, cols: int) -> RoiMask:
    """Binary mask of the strict interior between the two boundaries."""
    ilm = np.asarray(ilm, dtype=np.int64)
    ism = np.asarray(ism, dtype=np.int64)
    if ilm.shape != (cols,) or ism.shape != (cols,):
        raise ValueError("paths do not match the requested column count")
    if not np.all(ilm < ism):
        raise OrderingViolation("ilm must lie strictly above ism in every column")
    row_idx = np.arange(rows)[:, None]
    mask = ((row_idx > ilm[None, :]) & (row_idx < ism[None, :])).astype(np.uint8)
    return RoiMask(mask, ilm.copy(), ism.copy())
