"""Cavity geometries used to build hole meshes and to score reconstructions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import boundary_distance

KINDS = ("disk", "ellipse", "rectangle", "union", "bean")


def _bean_radius(t: np.ndarray) -> np.ndarray:
    # Kress-type bean curve, nonconvex near t = pi
    return (0.5 + 0.4 * np.cos(t) + 0.1 * np.sin(2.0 * t)) / (1.0 + 0.7 * np.cos(t))


def _points_in_polygon(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    x, y = points[:, 0][:, None], points[:, 1][:, None]
    x0, y0 = poly[:, 0][None, :], poly[:, 1][None, :]
    x1, y1 = np.roll(poly[:, 0], -1)[None, :], np.roll(poly[:, 1], -1)[None, :]
    crosses = (y0 > y) != (y1 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    return np.count_nonzero(crosses & (x < xint), axis=1) % 2 == 1


@dataclass(frozen=True)
class ShapeSpec:
    """A closed cavity shape.

    ``center`` and ``size`` are interpreted per ``kind``:

    * disk: ``size = (r,)``
    * ellipse: ``size = (a, b)`` semi-axes, rotated by ``angle`` radians
    * rectangle: ``size = (hx, hy)`` half-widths
    * bean: ``size = (scale,)``, rotated by ``angle``
    * union: ``parts`` holds the member shapes
    """

    kind: str
    center: tuple[float, float] = (0.0, 0.0)
    size: tuple[float, ...] = ()
    angle: float = 0.0
    parts: tuple["ShapeSpec", ...] = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        need = {"disk": 1, "ellipse": 2, "rectangle": 2, "bean": 1, "union": 0}[self.kind]
        if len(self.size) != need:
            raise ValueError(f"{self.kind} needs {need} size parameter(s), got {len(self.size)}")
        if any(s <= 0 for s in self.size):
            raise ValueError("shape sizes must be positive")
        if self.kind == "union" and not self.parts:
            raise ValueError("union needs at least one part")

    @classmethod
    def disk(cls, center, radius):
        return cls("disk", tuple(center), (float(radius),))

    @classmethod
    def ellipse(cls, center, a, b, angle=0.0):
        return cls("ellipse", tuple(center), (float(a), float(b)), float(angle))

    @classmethod
    def rectangle(cls, center, hx, hy):
        return cls("rectangle", tuple(center), (float(hx), float(hy)))

    @classmethod
    def bean(cls, center, scale, angle=0.0):
        return cls("bean", tuple(center), (float(scale),), float(angle))

    @classmethod
    def union(cls, *parts):
        return cls("union", parts=tuple(parts))

    def _local(self, points: np.ndarray) -> np.ndarray:
        d = np.asarray(points, dtype=float).reshape(-1, 2) - np.asarray(self.center)
        c, s = np.cos(self.angle), np.sin(self.angle)
        return np.stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]], axis=1)

    def contains(self, points) -> np.ndarray:
        """Closed inside test for an (n, 2) array of points."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        if self.kind == "union":
            out = np.zeros(len(points), dtype=bool)
            for part in self.parts:
                out |= part.contains(points)
            return out
        q = self._local(points)
        if self.kind == "disk":
            return np.hypot(q[:, 0], q[:, 1]) <= self.size[0]
        if self.kind == "ellipse":
            a, b = self.size
            return (q[:, 0] / a) ** 2 + (q[:, 1] / b) ** 2 <= 1.0
        if self.kind == "rectangle":
            hx, hy = self.size
            return (np.abs(q[:, 0]) <= hx) & (np.abs(q[:, 1]) <= hy)
        return _points_in_polygon(q, self._bean_local(720))

    def _bean_local(self, n: int) -> np.ndarray:
        t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        r = self.size[0] * _bean_radius(t)
        return np.stack([r * np.cos(t), r * np.sin(t)], axis=1)

    def outline(self, n: int = 256) -> list[np.ndarray]:
        """Closed boundary polylines (one per connected part)."""
        if self.kind == "union":
            return [poly for part in self.parts for poly in part.outline(n)]
        t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        if self.kind == "disk":
            r = self.size[0]
            local = np.stack([r * np.cos(t), r * np.sin(t)], axis=1)
        elif self.kind == "ellipse":
            a, b = self.size
            local = np.stack([a * np.cos(t), b * np.sin(t)], axis=1)
        elif self.kind == "rectangle":
            hx, hy = self.size
            m = max(n // 4, 1)
            s = np.linspace(-1.0, 1.0, m, endpoint=False)
            local = np.concatenate([
                np.stack([hx * s, -hy * np.ones(m)], axis=1),
                np.stack([hx * np.ones(m), hy * s], axis=1),
                np.stack([-hx * s, hy * np.ones(m)], axis=1),
                np.stack([-hx * np.ones(m), -hy * s], axis=1),
            ])
        else:
            local = self._bean_local(n)
        c, s = np.cos(self.angle), np.sin(self.angle)
        world = np.stack([c * local[:, 0] - s * local[:, 1], s * local[:, 0] + c * local[:, 1]], axis=1)
        return [world + np.asarray(self.center)]

    def area(self) -> float:
        """Exact area for primitive kinds; polygonal estimate for bean and union."""
        if self.kind == "disk":
            return float(np.pi * self.size[0] ** 2)
        if self.kind == "ellipse":
            return float(np.pi * self.size[0] * self.size[1])
        if self.kind == "rectangle":
            return float(4.0 * self.size[0] * self.size[1])
        if self.kind == "union":
            return float(sum(part.area() for part in self.parts))
        poly = self._bean_local(4096)
        x, y = poly[:, 0], poly[:, 1]
        return float(0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))

    def distance_to_domain_boundary(self) -> float:
        """Distance from the shape closure to the square boundary (negative if it sticks out)."""
        return float(min(boundary_distance(poly).min() for poly in self.outline(2048)))
