"""Recursive uniform partition of the training index set across resolutions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PartitionTree:
    """Nested partition of ``{0, ..., n-1}`` into contiguous blocks.

    ``levels[j]`` is a tuple of half-open ``(start, stop)`` index ranges, the
    regions of resolution ``j``. Level 0 is the single full range and every
    region of level ``j`` is split into (at most) ``q`` balanced children.
    """

    n: int
    m: int
    q: int
    levels: tuple[tuple[tuple[int, int], ...], ...]

    def n_regions(self, level: int) -> int:
        return len(self.levels[level])

    def sizes(self, level: int) -> np.ndarray:
        return np.array([b - a for a, b in self.levels[level]], dtype=int)

    def starts(self, level: int) -> np.ndarray:
        return np.array([a for a, _ in self.levels[level]], dtype=int)

    def labels(self, level: int) -> np.ndarray:
        """Region id of every sample at ``level``."""
        return np.repeat(np.arange(self.n_regions(level)), self.sizes(level))

    def parent(self, level: int) -> np.ndarray:
        """Index of the enclosing level ``level - 1`` region for each region."""
        if level == 0:
            raise ValueError("level 0 has no parent")
        up = self.labels(level - 1)
        return up[self.starts(level)]

    def as_array(self) -> np.ndarray:
        """Flat ``(total_regions, 3)`` array of ``(level, start, stop)`` rows."""
        rows = [(j, a, b) for j, lev in enumerate(self.levels) for a, b in lev]
        return np.array(rows, dtype=np.int64)

    @classmethod
    def from_array(cls, n: int, m: int, q: int, rows: np.ndarray) -> "PartitionTree":
        levels: list[list[tuple[int, int]]] = [[] for _ in range(m + 1)]
        for j, a, b in np.asarray(rows, dtype=np.int64):
            levels[int(j)].append((int(a), int(b)))
        return cls(n, m, q, tuple(tuple(lev) for lev in levels))


def _split(start: int, stop: int, q: int) -> list[tuple[int, int]]:
    size = stop - start
    k = min(q, size)
    base, extra = divmod(size, k)
    out = []
    a = start
    for c in range(k):
        b = a + base + (1 if c < extra else 0)
        out.append((a, b))
        a = b
    return out


def build_partition(n: int, m: int, q: int = 2) -> PartitionTree:
    """Split ``range(n)`` recursively by a factor ``q`` down to resolution ``m``.

    Regions that would become empty are not created, so level ``j`` holds
    ``min(q**j, n)`` regions. Earlier children receive the extra sample of an
    uneven split.
    """
    if int(n) < 1:
        raise ValueError(f"need at least one sample, got n={n}")
    if int(q) < 2:
        raise ValueError(f"subdivision factor must be >= 2, got q={q}")
    if int(m) < 0:
        raise ValueError(f"resolution must be >= 0, got m={m}")
    n, m, q = int(n), int(m), int(q)
    levels = [((0, n),)]
    for _ in range(m):
        nxt: list[tuple[int, int]] = []
        for a, b in levels[-1]:
            nxt.extend(_split(a, b, q))
        levels.append(tuple(nxt))
    return PartitionTree(n, m, q, tuple(levels))


@dataclass(frozen=True)
class RegionBoxes:
    """Axis-aligned input boxes of every region, one array per level.

    ``lo[j]`` and ``hi[j]`` have shape ``(n_regions, d_x)``. Where
    ``open_hi[j]`` is set the upper face is exclusive, which keeps gap-filled
    1-D tilings free of shared boundary points.
    """

    lo: tuple[np.ndarray, ...]
    hi: tuple[np.ndarray, ...]
    open_hi: tuple[np.ndarray, ...]

    def half_width(self, level: int) -> np.ndarray:
        return 0.5 * (self.hi[level] - self.lo[level])

    def center(self, level: int) -> np.ndarray:
        return 0.5 * (self.hi[level] + self.lo[level])


def region_boxes(tree: PartitionTree, X: np.ndarray, fill_gaps: bool = True) -> RegionBoxes:
    """Bounding boxes of the training inputs of every region.

    With ``fill_gaps`` and one-dimensional inputs whose regions are ordered
    along the line, the gap between neighbouring regions is split at its
    midpoint so the boxes of a level tile ``[min x, max x]``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != tree.n:
        raise ValueError(f"X has {X.shape[0]} rows, partition expects {tree.n}")
    los, his, opens = [], [], []
    for j in range(tree.m + 1):
        starts = tree.starts(j)
        lo = np.minimum.reduceat(X, starts, axis=0)
        hi = np.maximum.reduceat(X, starts, axis=0)
        open_hi = np.zeros_like(lo, dtype=bool)
        if fill_gaps and X.shape[1] == 1 and lo.shape[0] > 1:
            ordered = np.all(hi[:-1, 0] <= lo[1:, 0])
            if ordered:
                mid = 0.5 * (hi[:-1, 0] + lo[1:, 0])
                hi[:-1, 0] = mid
                lo[1:, 0] = mid
                open_hi[:-1, 0] = True
        los.append(lo)
        his.append(hi)
        opens.append(open_hi)
    return RegionBoxes(tuple(los), tuple(his), tuple(opens))


def locate_regions(boxes: RegionBoxes, level: int, X: np.ndarray) -> np.ndarray:
    """Region id containing each row of ``X`` at ``level``, or -1.

    A point inside no box, or inside more than one, gets -1.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    lo, hi, op = boxes.lo[level], boxes.hi[level], boxes.open_hi[level]
    above = X[:, None, :] >= lo[None]
    below = np.where(op[None], X[:, None, :] < hi[None], X[:, None, :] <= hi[None])
    inside = np.all(above & below, axis=2)
    count = inside.sum(axis=1)
    ids = np.argmax(inside, axis=1)
    return np.where(count == 1, ids, -1)


def locate_region(tree: PartitionTree, level: int, x_star, boxes: RegionBoxes) -> int | None:
    """Unique region of ``level`` whose box contains ``x_star``, else ``None``."""
    if not 0 <= level <= tree.m:
        raise ValueError(f"level {level} outside 0..{tree.m}")
    rid = int(locate_regions(boxes, level, np.atleast_1d(x_star)[None, :])[0])
    return None if rid < 0 else rid
