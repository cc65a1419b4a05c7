"""Uniform grids and 1-D radial profiles.

A GridFunction stores node values of a scalar field on a uniform tensor
grid over a box; spacing is derived from the per-axis cell counts.  A
RadialProfile stores samples of a profile on [0, R] with a cubic
interpolant; profiles flagged as even are clamped to zero slope at the
origin so their lifts are smooth across the center.
"""

from __future__ import annotations

import io
from dataclasses import InitVar, dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import OutOfRangeError, SpecValidationError

_HEADER_INT = np.dtype("<i8")
_HEADER_FLOAT = np.dtype("<f8")


@dataclass
class GridFunction:
    box: tuple                 # ((lo, hi), ...) per axis
    resolution: tuple          # cells per axis; nodes = cells + 1
    values: np.ndarray
    check_finite: InitVar[bool] = True   # derived fields may carry a NaN halo

    def __post_init__(self, check_finite: bool = True):
        self.box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        self.resolution = tuple(int(r) for r in self.resolution)
        self.values = np.asarray(self.values, dtype=float)
        N = len(self.box)
        if N not in (1, 2, 3):
            raise SpecValidationError("grids support dimensions 1..3")
        if len(self.resolution) != N:
            raise SpecValidationError("resolution/box rank mismatch")
        if any(r < 4 for r in self.resolution):
            raise SpecValidationError("resolution must be >= 4 cells per axis")
        if any(hi <= lo for lo, hi in self.box):
            raise SpecValidationError("box sides must have positive length")
        nodes = tuple(r + 1 for r in self.resolution)
        if self.values.shape != nodes:
            raise SpecValidationError(
                f"values shape {self.values.shape} != node shape {nodes}")
        if check_finite and not np.all(np.isfinite(self.values)):
            raise SpecValidationError("grid values must be finite")

    @property
    def dimension(self) -> int:
        return len(self.box)

    @property
    def spacing(self) -> tuple:
        return tuple((hi - lo) / r for (lo, hi), r in zip(self.box, self.resolution))

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, r + 1)
                for (lo, hi), r in zip(self.box, self.resolution)]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape (*nodes, N)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def with_values(self, values: np.ndarray, check_finite: bool = True) -> "GridFunction":
        return GridFunction(self.box, self.resolution, values, check_finite)

    def same_layout(self, other: "GridFunction") -> bool:
        return self.box == other.box and self.resolution == other.resolution

    # -- binary / CSV round trips (layout documented in docs/formats.md) ----

    def to_bytes(self) -> bytes:
        parts = [
            np.array([self.dimension], dtype=_HEADER_INT).tobytes(),
            np.array([c for side in self.box for c in side],
                     dtype=_HEADER_FLOAT).tobytes(),
            np.array(self.resolution, dtype=_HEADER_INT).tobytes(),
            np.ascontiguousarray(self.values, dtype=_HEADER_FLOAT).tobytes(),
        ]
        return b"".join(parts)

    @staticmethod
    def from_bytes(data: bytes) -> "GridFunction":
        buf = io.BytesIO(data)
        N = int(np.frombuffer(buf.read(8), dtype=_HEADER_INT)[0])
        box = np.frombuffer(buf.read(16 * N), dtype=_HEADER_FLOAT).reshape(N, 2)
        res = np.frombuffer(buf.read(8 * N), dtype=_HEADER_INT)
        nodes = tuple(int(r) + 1 for r in res)
        values = np.frombuffer(buf.read(), dtype=_HEADER_FLOAT).reshape(nodes)
        return GridFunction(tuple(map(tuple, box)), tuple(map(int, res)), values.copy())

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @staticmethod
    def load(path) -> "GridFunction":
        with open(path, "rb") as fh:
            return GridFunction.from_bytes(fh.read())

    def to_csv(self) -> str:
        lines = [f"N,{self.dimension}"]
        for (lo, hi), r in zip(self.box, self.resolution):
            lines.append(f"axis,{lo:.17g},{hi:.17g},{r}")
        lines.append(",".join(f"x{i+1}" for i in range(self.dimension)) + ",value")
        coords = self.coords().reshape(-1, self.dimension)
        flat = self.values.reshape(-1)
        for point, v in zip(coords, flat):
            lines.append(",".join(f"{c:.17g}" for c in point) + f",{v:.17g}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_csv(text: str) -> "GridFunction":
        lines = text.strip().splitlines()
        N = int(lines[0].split(",")[1])
        box, res = [], []
        for k in range(N):
            _, lo, hi, r = lines[1 + k].split(",")
            box.append((float(lo), float(hi)))
            res.append(int(r))
        nodes = tuple(r + 1 for r in res)
        vals = np.array([float(row.rsplit(",", 1)[1]) for row in lines[2 + N:]])
        return GridFunction(tuple(box), tuple(res), vals.reshape(nodes))


def grid_from_function(box, resolution, fn: Callable[[np.ndarray], np.ndarray]) -> GridFunction:
    """Sample fn (batched over (..., N) coordinates) onto a new grid."""
    gf = GridFunction(tuple(box), tuple(resolution),
                      np.zeros(tuple(r + 1 for r in resolution)))
    gf.values = np.asarray(fn(gf.coords()), dtype=float)
    return gf


@dataclass
class RadialProfile:
    """Samples of a profile v(r) on [0, R_max] with a cubic interpolant."""

    radii: np.ndarray
    values: np.ndarray
    even: bool = True
    _spline: CubicSpline = field(init=False, repr=False, default=None)

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.radii.ndim != 1 or self.radii.shape != self.values.shape:
            raise SpecValidationError("radii and values must be matching 1-D arrays")
        if self.radii[0] != 0.0:
            raise SpecValidationError("profile must start at r = 0")
        if np.any(np.diff(self.radii) <= 0):
            raise SpecValidationError("radii must be strictly increasing")
        if self.even:
            # clamped zero slope realizes the even extension; reject data
            # that visibly contradicts it (quadratic fit through the first
            # three samples estimates the one-sided derivative at 0)
            c = np.polyfit(self.radii[:3], self.values[:3], 2)
            scale = 1.0 + float(np.max(np.abs(self.values)))
            if abs(c[1]) > 1e-2 * scale / max(self.r_max, 1e-12) + 1e-9:
                raise SpecValidationError(
                    "profile flagged even but has nonzero slope at r = 0")
            bc = ((1, 0.0), "not-a-knot")
        else:
            bc = "not-a-knot"
        self._spline = CubicSpline(self.radii, self.values, bc_type=bc)

    @property
    def r_max(self) -> float:
        return float(self.radii[-1])

    def __len__(self) -> int:
        return len(self.radii)

    def __call__(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if np.any(r < -1e-12) or np.any(r > self.r_max * (1 + 1e-12)):
            raise OutOfRangeError(
                f"radius outside profile range [0, {self.r_max}]")
        return self._spline(np.clip(r, 0.0, self.r_max))

    def derivative(self, r: np.ndarray, order: int = 1) -> np.ndarray:
        r = np.clip(np.asarray(r, dtype=float), 0.0, self.r_max)
        return self._spline(r, nu=order)

    @staticmethod
    def from_function(fn: Callable[[np.ndarray], np.ndarray], r_max: float,
                      samples: int = 1025, even: bool = True) -> "RadialProfile":
        r = np.linspace(0.0, float(r_max), int(samples))
        return RadialProfile(r, np.asarray(fn(r), dtype=float), even=even)
