"""Exact 2-D nearest-neighbor lookup with deterministic tie-breaking."""
from __future__ import annotations

import numpy as np

__all__ = ["KdTree"]


class _Node:
    __slots__ = ("axis", "index", "left", "right")

    def __init__(self, axis: int, index: int, left: "_Node | None", right: "_Node | None"):
        self.axis = axis
        self.index = index
        self.left = left
        self.right = right


class KdTree:
    """k-d tree over 2-D points that always returns the lowest index on ties.

    The far half-space is searched whenever the splitting plane is within
    (or exactly at) the current best distance, so symmetric layouts resolve
    to the lowest point index just like a strict-less-than linear scan.
    """

    def __init__(self, points) -> None:
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must have shape (n, 2)")
        if len(pts) == 0:
            raise ValueError("need at least one point")
        self._points = pts
        self._root = self._build(np.arange(len(pts)), 0)

    def __len__(self) -> int:
        return len(self._points)

    def _build(self, indices: np.ndarray, depth: int) -> _Node | None:
        if len(indices) == 0:
            return None
        axis = depth % 2
        # secondary sort key on the index keeps the build deterministic
        # when several points share a coordinate
        order = np.lexsort((indices, self._points[indices, axis]))
        indices = indices[order]
        mid = len(indices) // 2
        return _Node(
            axis,
            int(indices[mid]),
            self._build(indices[:mid], depth + 1),
            self._build(indices[mid + 1:], depth + 1),
        )

    def nearest(self, point) -> int:
        """Index of the nearest point; equal distances go to the lowest index."""
        q = (float(point[0]), float(point[1]))
        best: list = [float("inf"), -1]
        self._search(self._root, q, best)
        return best[1]

    def _search(self, node: _Node | None, q: tuple[float, float], best: list) -> None:
        if node is None:
            return
        p = self._points[node.index]
        dx = p[0] - q[0]
        dy = p[1] - q[1]
        d2 = dx * dx + dy * dy
        if d2 < best[0] or (d2 == best[0] and node.index < best[1]):
            best[0] = d2
            best[1] = node.index
        delta = q[node.axis] - p[node.axis]
        if delta < 0:
            near, far = node.left, node.right
        else:
            near, far = node.right, node.left
        self._search(near, q, best)
        if delta * delta <= best[0]:
            self._search(far, q, best)
