"""
Uniform voxel-hash grid for fixed-radius neighbor queries.

The cell size equals the query radius, so every neighbor of a point lies in the
27 cells around it. Used by DBSCAN (radius pairs) and point voting (nearest neighbor, where
the grid is finer than the search radius).
"""
from __future__ import annotations

import itertools

import numpy as np


_OFFSETS = np.array(list(itertools.product((-1, 0, 1), repeat=3)), dtype=np.int64)
# one of each (o, -o) pair: cell pairs across these offsets are visited once and mirrored
_FORWARD = np.array([o for o in _OFFSETS if tuple(o) > (0, 0, 0)], dtype=np.int64)
_SAME_CELL = np.zeros((1, 3), dtype=np.int64)


class SpatialHashGrid:
    def __init__(self, points: np.ndarray, cell_size: float):
        if cell_size <= 0:
            raise ValueError("cell_size must be > 0")
        self.points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        self.cell_size = float(cell_size)
        # widened so points exactly one radius apart never land two cells apart
        self._cell = self.cell_size * (1.0 + 1e-9)
        n = len(self.points)
        if n == 0:
            self._origin = np.zeros(3)
            self._shape = np.ones(3, dtype=np.int64)
            self._order = np.zeros(0, dtype=np.int64)
            self._sorted_keys = np.zeros(0, dtype=np.int64)
            return
        self._origin = self.points.min(axis=0)
        cells = self._cells(self.points)
        self._shape = cells.max(axis=0) + 1
        keys = self._encode(cells)
        self._order = np.argsort(keys, kind="stable")
        self._sorted_keys = keys[self._order]

    def __len__(self) -> int:
        return len(self.points)

    def _cells(self, points: np.ndarray) -> np.ndarray:
        return np.floor((points - self._origin) / self._cell).astype(np.int64)

    def _encode(self, cells: np.ndarray) -> np.ndarray:
        return (cells[:, 0] * self._shape[1] + cells[:, 1]) * self._shape[2] + cells[:, 2]

    def _candidates(self, queries: np.ndarray, offsets: np.ndarray = _OFFSETS) -> tuple[np.ndarray, np.ndarray]:
        """All (query index, point index) pairs whose cells differ by one of the offsets."""
        if len(self.points) == 0 or len(queries) == 0:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty
        qcells = self._cells(queries)
        q_parts, p_parts = [], []
        for offset in offsets:
            cells = qcells + offset
            inside = np.all((cells >= 0) & (cells < self._shape), axis=1)
            if not np.any(inside):
                continue
            qidx = np.nonzero(inside)[0]
            keys = self._encode(cells[inside])
            start = np.searchsorted(self._sorted_keys, keys, side="left")
            stop = np.searchsorted(self._sorted_keys, keys, side="right")
            counts = stop - start
            total = int(counts.sum())
            if total == 0:
                continue
            firsts = np.repeat(start, counts)
            within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
            q_parts.append(np.repeat(qidx, counts))
            p_parts.append(self._order[firsts + within])
        if not q_parts:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty
        return np.concatenate(q_parts), np.concatenate(p_parts)

    def radius_pairs(self, radius: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Ordered pairs (i, j) of grid points with |p_i - p_j| <= radius, self pairs included."""
        radius = self.cell_size if radius is None else radius
        if radius > self.cell_size:
            raise ValueError("radius must not exceed the grid cell size")
        r2 = radius * radius
        same_i, same_j = self._candidates(self.points, _SAME_CELL)
        keep = np.sum((self.points[same_i] - self.points[same_j]) ** 2, axis=1) <= r2
        same_i, same_j = same_i[keep], same_j[keep]
        fwd_i, fwd_j = self._candidates(self.points, _FORWARD)
        keep = np.sum((self.points[fwd_i] - self.points[fwd_j]) ** 2, axis=1) <= r2
        fwd_i, fwd_j = fwd_i[keep], fwd_j[keep]
        return np.concatenate([same_i, fwd_i, fwd_j]), np.concatenate([same_j, fwd_j, fwd_i])

    def nearest(self, queries: np.ndarray, radius: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Index and distance of the nearest grid point within radius; -1 / inf when none.

        The 27 cells around a query hold every point within one cell size, so a hit that close is
        final. Queries whose best candidate is farther (or missing) fall back to a scan of all
        points; radius may exceed the cell size. Ties go to the lower point index.
        """
        radius = self.cell_size if radius is None else float(radius)
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        n_q = len(queries)
        index = np.full(n_q, -1, dtype=np.int64)
        dist = np.full(n_q, np.inf)
        if n_q == 0 or len(self.points) == 0:
            return index, dist
        qi, pj = self._candidates(queries)
        if len(qi):
            d = np.sqrt(np.sum((queries[qi] - self.points[pj]) ** 2, axis=1))
            np.minimum.at(dist, qi, d)
            at_best = d == dist[qi]
            index_best = np.full(n_q, len(self.points), dtype=np.int64)
            np.minimum.at(index_best, qi[at_best], pj[at_best])
            found = index_best < len(self.points)
            index[found] = index_best[found]
        unresolved = np.nonzero(dist > self.cell_size)[0]
        for chunk in np.array_split(unresolved, max(1, len(unresolved) // 256)):
            if len(chunk) == 0:
                continue
            d = np.sqrt(np.sum((queries[chunk, None, :] - self.points[None, :, :]) ** 2, axis=2))
            best = d.argmin(axis=1)
            index[chunk] = best
            dist[chunk] = d[np.arange(len(chunk)), best]
        miss = dist > radius
        index[miss] = -1
        dist[miss] = np.inf
        return index, dist
