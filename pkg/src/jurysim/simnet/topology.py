"""Square-mesh topology and deterministic Manhattan routing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from ..protocol.messages import ms


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class MeshTopology:
    """Row-major grid of ``width`` columns; the last row may be partial.

    Node ``v`` sits at column ``v % width`` and row ``v // width``.
    """

    n: int
    width: int
    height: int
    link_delay: int = ms(5)
    neighbor_table: np.ndarray = field(init=False, repr=False, compare=False)
    degree: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.n < 2:
            raise TopologyError(f"need at least 2 nodes, got {self.n}")
        if self.width * self.height < self.n or self.width * (self.height - 1) >= self.n:
            raise TopologyError(f"{self.width}x{self.height} grid does not fit {self.n} nodes")
        v = np.arange(self.n, dtype=np.int64)
        col, row = v % self.width, v // self.width
        table = np.full((self.n, 4), -1, dtype=np.int32)
        # fixed neighbour order: left, right, up, down
        cand = [
            (col > 0, v - 1),
            ((col < self.width - 1) & (v + 1 < self.n), v + 1),
            (row > 0, v - self.width),
            (v + self.width < self.n, v + self.width),
        ]
        for k, (ok, nb) in enumerate(cand):
            table[ok, k] = nb[ok]
        table.setflags(write=False)
        deg = (table >= 0).sum(axis=1).astype(np.int32)
        deg.setflags(write=False)
        object.__setattr__(self, "neighbor_table", table)
        object.__setattr__(self, "degree", deg)

    def coords(self, v: int) -> Tuple[int, int]:
        return v % self.width, v // self.width

    def node_at(self, x: int, y: int) -> int:
        v = y * self.width + x
        if not (0 <= x < self.width and 0 <= y < self.height and v < self.n):
            raise TopologyError(f"no node at ({x}, {y})")
        return v

    def neighbors(self, v: int) -> List[int]:
        return [int(u) for u in self.neighbor_table[v] if u >= 0]

    @property
    def edge_count(self) -> int:
        return int(self.degree.sum()) // 2

    @property
    def diameter(self) -> int:
        last = self.n - 1
        corners = [0, self.width - 1, (self.height - 1) * self.width, last]
        return max(self.hops(a, b) for a in corners for b in corners if a < self.n and b < self.n)

    def hops(self, a: int, b: int) -> int:
        ax, ay = self.coords(a)
        bx, by = self.coords(b)
        return abs(ax - bx) + abs(ay - by)

    def hops_from(self, sources, nodes=None) -> np.ndarray:
        """Manhattan distances, broadcasting ``sources`` against ``nodes``."""
        sources = np.asarray(sources, dtype=np.int64)
        nodes = np.arange(self.n, dtype=np.int64) if nodes is None else np.asarray(nodes, dtype=np.int64)
        w = self.width
        return np.abs(sources % w - nodes % w) + np.abs(sources // w - nodes // w)

    def route(self, src: int, dst: int) -> List[int]:
        """Shortest path, columns first then rows.

        Rows first when the source sits in a partial last row and the
        column walk would leave it.
        """
        if src == dst:
            raise TopologyError("source equals destination")
        sx, sy = self.coords(src)
        dx, dy = self.coords(dst)
        path = [src]
        x, y = sx, sy
        row_full = (y + 1) * self.width <= self.n
        if row_full or dx < self.n - y * self.width:
            order = ("x", "y")
        else:
            order = ("y", "x")
        for axis in order:
            if axis == "x":
                step = 1 if dx > x else -1
                while x != dx:
                    x += step
                    path.append(self.node_at(x, y))
            else:
                step = 1 if dy > y else -1
                while y != dy:
                    y += step
                    path.append(self.node_at(x, y))
        return path


def build_mesh(n: int, link_delay: int = ms(5)) -> MeshTopology:
    if n < 2:
        raise TopologyError(f"need at least 2 nodes, got {n}")
    width = math.isqrt(n)
    if width * width < n:
        width += 1
    height = -(-n // width)
    return MeshTopology(n, width, height, link_delay)


def default_time_params(n: int, link_delay: int = ms(5)) -> Tuple[int, int, int]:
    """(t_min, t_max, t_ele) scaled to the mesh's worst-case route."""
    if n < 2:
        raise TopologyError(f"need at least 2 nodes, got {n}")
    t_ele = int(round(math.sqrt(n) * 2 * link_delay))
    return ms(100), 2 * t_ele, t_ele
