"""Graded 1D meshes of an interval plus a truncated exterior collar."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "AlignmentError",
    "CollarMesh1D",
    "DofFunction",
    "Strip",
    "build_collar_mesh",
    "interpolate",
    "strip_cells",
]

# a forced node closer than this fraction of the local spacing moves an
# existing node instead of creating a sliver cell
_SNAP_FRACTION = 0.25


class AlignmentError(ValueError):
    """Strip boundary does not coincide with a mesh node."""


@dataclass(frozen=True, eq=False)
class CollarMesh1D:
    """Nodes of ``[a - R, b + R]``; those in ``[a, b]`` carry the interior DOFs.

    Every node carries one continuous piecewise-linear DOF. ``nodes`` is the
    full sorted node array; the first ``n_left`` entries lie in the left
    collar and the last ``n_right`` in the right collar.
    """

    nodes: np.ndarray
    a: float
    b: float
    R: float
    n_left: int
    n_right: int
    h: float
    gamma: float
    forced: tuple = ()

    def __post_init__(self):
        self.nodes.setflags(write=False)

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @property
    def n_interior(self) -> int:
        return self.nodes.size - self.n_left - self.n_right

    @property
    def n_exterior(self) -> int:
        return self.n_left + self.n_right

    @property
    def interior_index(self) -> np.ndarray:
        return np.arange(self.n_left, self.n_left + self.n_interior)

    @property
    def exterior_index(self) -> np.ndarray:
        n = self.nodes.size
        return np.r_[np.arange(self.n_left), np.arange(n - self.n_right, n)]

    @property
    def interior_nodes(self) -> np.ndarray:
        return self.nodes[self.n_left : self.n_left + self.n_interior]

    @property
    def exterior_nodes(self) -> np.ndarray:
        return self.nodes[self.exterior_index]

    @property
    def cells(self) -> np.ndarray:
        """``(n_cells, 2)`` array of cell endpoints."""
        return np.column_stack([self.nodes[:-1], self.nodes[1:]])

    @property
    def cell_lengths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def interior_cell(self) -> np.ndarray:
        """Boolean mask of cells inside ``[a, b]``."""
        c = np.arange(self.nodes.size - 1)
        return (c >= self.n_left) & (c < self.n_left + self.n_interior - 1)

    @property
    def left_cells(self) -> np.ndarray:
        return self.cells[: self.n_left]

    @property
    def right_cells(self) -> np.ndarray:
        return self.cells[self.nodes.size - 1 - self.n_right :]

    def summary(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "R": self.R,
            "h": self.h,
            "gamma": self.gamma,
            "forced_nodes": list(self.forced),
            "n_interior_nodes": self.n_interior,
            "n_exterior_nodes": self.n_exterior,
            "nodes": self.nodes.tolist(),
            "interior_cells": self.cells[self.interior_cell].tolist(),
            "exterior_cells": self.cells[~self.interior_cell].tolist(),
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.summary(), indent=1)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


@dataclass
class DofFunction:
    """Nodal coefficients of a continuous piecewise-linear function on a collar mesh."""

    mesh: CollarMesh1D
    interior: np.ndarray
    exterior: np.ndarray = field(default=None)

    def __post_init__(self):
        self.interior = np.asarray(self.interior, dtype=float)
        if self.exterior is None:
            self.exterior = np.zeros(self.mesh.n_exterior)
        self.exterior = np.asarray(self.exterior, dtype=float)
        if self.interior.shape != (self.mesh.n_interior,):
            raise ValueError(
                f"expected {self.mesh.n_interior} interior coefficients, got {self.interior.shape}"
            )
        if self.exterior.shape != (self.mesh.n_exterior,):
            raise ValueError(
                f"expected {self.mesh.n_exterior} exterior coefficients, got {self.exterior.shape}"
            )

    def full(self) -> np.ndarray:
        m = self.mesh
        return np.concatenate(
            [self.exterior[: m.n_left], self.interior, self.exterior[m.n_left :]]
        )

    @classmethod
    def from_full(cls, mesh: CollarMesh1D, values) -> "DofFunction":
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.n_nodes,):
            raise ValueError(f"expected {mesh.n_nodes} coefficients, got {values.shape}")
        return cls(mesh, values[mesh.interior_index], values[mesh.exterior_index])

    @classmethod
    def constant(cls, mesh: CollarMesh1D, c: float = 1.0) -> "DofFunction":
        return cls(mesh, np.full(mesh.n_interior, c), np.full(mesh.n_exterior, c))

    def __call__(self, x):
        """Evaluate the piecewise-linear function (zero outside the collar)."""
        return np.interp(x, self.mesh.nodes, self.full(), left=0.0, right=0.0)

    def scaled(self, c: float) -> "DofFunction":
        return DofFunction(self.mesh, c * self.interior, c * self.exterior)


def _half_profile(half: float, n: int, gamma: float) -> np.ndarray:
    return half * (np.arange(n + 1) / n) ** gamma


def _collar_offsets(half: float, n: int, gamma: float, R: float, h: float) -> np.ndarray:
    # mirror the interior grading outward until spacing reaches 2h, then uniform
    offs = [0.0]
    i = 1
    while True:
        d = half * (i / n) ** gamma
        if d >= R or d - offs[-1] >= 2.0 * h:
            break
        offs.append(d)
        i += 1
    rest = R - offs[-1]
    m = max(1, math.ceil(rest / (2.0 * h) - 1e-12))
    offs.extend(offs[-1] + rest * np.arange(1, m + 1) / m)
    offs[-1] = R
    return np.asarray(offs)


def _force_node(nodes: np.ndarray, target: float, locked: set) -> np.ndarray:
    k = int(np.argmin(np.abs(nodes - target)))
    if abs(nodes[k] - target) <= 1e-14 * max(1.0, abs(target)):
        nodes = nodes.copy()
        nodes[k] = target
        return nodes
    spacing = np.diff(nodes)
    local = min(spacing[max(k - 1, 0)], spacing[min(k, spacing.size - 1)])
    if nodes[k] not in locked and abs(nodes[k] - target) < _SNAP_FRACTION * local:
        nodes = nodes.copy()
        nodes[k] = target
        return nodes
    return np.sort(np.append(nodes, target))


def build_collar_mesh(
    a: float,
    b: float,
    R: float,
    h: float,
    gamma: float = 1.0,
    strip_eps: Optional[float] = None,
) -> CollarMesh1D:
    """Graded mesh of ``(a, b)`` with exterior collars of width ``R``.

    Each half of ``(a, b)`` gets ``N = ceil((b - a) / (2 h))`` cells with
    offsets ``(b - a)/2 (i/N)^gamma`` from the nearer endpoint. The collars
    continue the same profile outward until the spacing reaches ``2h`` and
    are uniform (spacing at most ``2h``) beyond. When ``strip_eps`` is given
    the points ``a + strip_eps`` and ``b - strip_eps`` are made nodes.
    """
    L = b - a
    if not L > 0:
        raise ValueError("need a < b")
    if not R > 0:
        raise ValueError("collar width R must be positive")
    if not 0 < h <= L / 2:
        raise ValueError("need 0 < h <= (b - a)/2")
    if not gamma >= 1:
        raise ValueError("grading exponent gamma must be >= 1")
    if strip_eps is not None and not 0 < strip_eps < L / 2:
        raise ValueError("need 0 < strip_eps < (b - a)/2")

    half = L / 2
    n = math.ceil(half / h - 1e-12)
    prof = _half_profile(half, n, gamma)
    interior = np.concatenate([a + prof, (b - prof[::-1])[1:]])
    interior[0], interior[-1], interior[n] = a, b, a + half

    forced = ()
    if strip_eps is not None:
        locked = {a, b}
        for t in (a + strip_eps, b - strip_eps):
            interior = _force_node(interior, t, locked)
            locked.add(t)
        forced = (a + strip_eps, b - strip_eps)

    offs = _collar_offsets(half, n, gamma, R, h)[1:]
    left = (a - offs)[::-1]
    right = b + offs
    nodes = np.concatenate([left, interior, right])
    if np.any(np.diff(nodes) <= 0):
        raise ValueError("mesh nodes are not strictly increasing")
    return CollarMesh1D(
        nodes=nodes,
        a=float(a),
        b=float(b),
        R=float(R),
        n_left=left.size,
        n_right=right.size,
        h=float(h),
        gamma=float(gamma),
        forced=forced,
    )


@dataclass(frozen=True)
class Strip:
    """Interior cells of the boundary strip of width ``eps``."""

    cells: np.ndarray
    eps: float
    whole_domain: bool
    length: float


def strip_cells(mesh: CollarMesh1D, eps: float) -> Strip:
    """Cells of ``(a, a + eps) U (b - eps, b)``; the whole domain once ``2 eps >= b - a``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    L = mesh.length
    cells = mesh.cells
    inside = mesh.interior_cell
    idx = np.flatnonzero(inside)
    if eps >= L / 2 * (1 - 1e-14):
        return Strip(idx, float(eps), True, float(L))
    tol = 1e-12 * max(1.0, L)
    for t in (mesh.a + eps, mesh.b - eps):
        if np.min(np.abs(mesh.interior_nodes - t)) > tol:
            raise AlignmentError(f"strip boundary {t!r} is not a mesh node")
    lo, hi = cells[idx, 0], cells[idx, 1]
    keep = (hi <= mesh.a + eps + tol) | (lo >= mesh.b - eps - tol)
    return Strip(idx[keep], float(eps), False, float(np.sum(hi[keep] - lo[keep])))


def interpolate(mesh: CollarMesh1D, f: Callable) -> DofFunction:
    """Nodal interpolant of ``f`` on all mesh nodes."""
    try:
        vals = np.asarray(f(mesh.nodes), dtype=float)
        if vals.shape != mesh.nodes.shape:
            raise ValueError
    except (TypeError, ValueError):
        vals = np.array([float(f(x)) for x in mesh.nodes])
    return DofFunction.from_full(mesh, vals)
