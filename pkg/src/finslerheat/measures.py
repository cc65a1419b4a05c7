"""Initial data as measures, the quadratic growth condition, and mollifiers.

The admissibility functional is the windowed Gaussian-weighted mass

    G(mu; L) = sup_x  int_{B_{H0}(x, 1/sqrt(L))} e^(-L H0(y)^2) d|mu|(y),

finite for some L > 0 exactly when the datum launches a solution up to
the horizon S_L = 1/(4 L).  Finiteness cannot be decided from a bounded
window, so the classifier operationalizes it as stabilization of G under
window growth: the first L in the grid whose value changes by at most a
relative threshold between the two largest windows wins.

Density integrals use the node-sum (midpoint) rule; the ball-windowed
supremum over all grid centers is a convolution with the H0-ball
indicator and is evaluated by FFT.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.signal import fftconvolve

from .errors import DomainError, SpecValidationError
from .grids import GridFunction, RadialProfile
from .norms import NormSpec, dual_norm_eval, eval_norm


@dataclass(frozen=True)
class MeasureSpec:
    """Initial datum: a density grid, a finite atom list, or a radial density."""

    kind: str                                   # density | atoms | radial_density
    density: Optional[GridFunction] = None
    atoms: Optional[tuple] = None               # ((point tuple, weight), ...)
    profile: Optional[RadialProfile] = None
    norm: Optional[NormSpec] = None             # for radial_density
    signed: bool = False

    def __post_init__(self):
        if self.kind == "density":
            if self.density is None:
                raise SpecValidationError("density measure needs a grid")
        elif self.kind == "atoms":
            if not self.atoms:
                raise SpecValidationError("atom measure needs at least one atom")
            for point, weight in self.atoms:
                if not np.all(np.isfinite(point)) or not np.isfinite(weight):
                    raise SpecValidationError("atom data must be finite")
        elif self.kind == "radial_density":
            if self.profile is None or self.norm is None:
                raise SpecValidationError("radial density needs a profile and a norm")
        else:
            raise SpecValidationError(f"unknown measure kind {self.kind!r}")

    def atom_array(self) -> tuple[np.ndarray, np.ndarray]:
        pts = np.array([p for p, _ in self.atoms], dtype=float)
        wts = np.array([w for _, w in self.atoms], dtype=float)
        return pts, wts


def measure_from_atoms(atoms: Sequence[tuple], signed: bool = False) -> MeasureSpec:
    packed = tuple((tuple(map(float, p)), float(w)) for p, w in atoms)
    return MeasureSpec("atoms", atoms=packed,
                       signed=signed or any(w < 0 for _, w in packed))


def measure_from_density(grid: GridFunction, signed: bool = False) -> MeasureSpec:
    return MeasureSpec("density", density=grid,
                       signed=signed or bool(np.any(grid.values < 0)))


def measure_from_radial(profile: RadialProfile, norm: NormSpec) -> MeasureSpec:
    return MeasureSpec("radial_density", profile=profile, norm=norm,
                       signed=bool(np.any(profile.values < 0)))


def _lattice_box(spec: NormSpec, radius: float, spacing: float):
    """Box hugging {H0 <= radius} with sides on the spacing lattice."""
    extents = [float(eval_norm(spec, np.eye(spec.dimension)[i]))
               for i in range(spec.dimension)]
    cells = [max(4, int(np.ceil(radius * e / spacing - 1e-9))) for e in extents]
    box = tuple((-c * spacing, c * spacing) for c in cells)
    return box, tuple(2 * c for c in cells)


def materialize(measure: MeasureSpec, spec: NormSpec, radius: float,
                spacing: float) -> GridFunction:
    """Density representation of the measure on {H0 <= radius}, 0 beyond."""
    box, res = _lattice_box(spec, radius, spacing)
    layout = GridFunction(box, res, np.zeros(tuple(r + 1 for r in res)))
    r = dual_norm_eval(spec, layout.coords())
    if measure.kind == "radial_density":
        vals = np.where(r <= radius,
                        measure.profile(np.clip(r, 0.0, measure.profile.r_max)), 0.0)
        if float(np.max(r[r <= radius], initial=0.0)) > measure.profile.r_max:
            raise DomainError("radial density profile shorter than the window")
        return layout.with_values(vals)
    if measure.kind == "density":
        src = measure.density
        vals = _resample_density(src, layout)
        return layout.with_values(np.where(r <= radius, vals, 0.0))
    # atoms are handled by exact sums; a grid view is only needed for plots
    raise DomainError("atom measures have no density representation; mollify first")


def _resample_density(src: GridFunction, layout: GridFunction) -> np.ndarray:
    """Nearest-node resample between aligned lattices; 0 outside the source box."""
    coords = layout.coords()
    idx = []
    inside = np.ones(coords.shape[:-1], dtype=bool)
    for k, ((lo, hi), cells) in enumerate(zip(src.box, src.resolution)):
        h = (hi - lo) / cells
        j = np.rint((coords[..., k] - lo) / h).astype(int)
        inside &= (coords[..., k] >= lo - 1e-9) & (coords[..., k] <= hi + 1e-9)
        idx.append(np.clip(j, 0, cells))
    return np.where(inside, src.values[tuple(idx)], 0.0)


def _ball_kernel(spec: NormSpec, radius: float, spacing: Sequence[float]) -> np.ndarray:
    """Indicator of the H0-ball sampled on the grid lattice (symmetric)."""
    half = [int(np.floor(radius * float(eval_norm(spec, np.eye(spec.dimension)[i]))
                         / h)) + 1 for i, h in enumerate(spacing)]
    axes = [np.arange(-m, m + 1) * h for m, h in zip(half, spacing)]
    offsets = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return (dual_norm_eval(spec, offsets) <= radius).astype(float)


def _windowed_ball_sup(weighted: np.ndarray, kernel: np.ndarray,
                       center_mask: np.ndarray, cell_volume: float) -> float:
    conv = fftconvolve(weighted, kernel, mode="same") * cell_volume
    return float(np.max(conv[center_mask]))


def growth_functional(measure: MeasureSpec, lam: float, spec: NormSpec,
                      window: float = None, spacing: float = 0.25,
                      centers: Optional[np.ndarray] = None,
                      ball_radius: Optional[float] = None) -> float:
    """sup over centers of the e^(-lam H0^2)-weighted |mu|-mass of H0-balls.

    The ball radius defaults to 1/sqrt(lam); `ball_radius` overrides it
    (used by the fixed-radius monotonicity property).  Densities take
    their centers over all grid nodes of the window; atom measures default
    to the atom locations (pass explicit centers for more).
    """
    if lam <= 0:
        raise SpecValidationError("lam must be positive")
    radius = 1.0 / np.sqrt(lam) if ball_radius is None else float(ball_radius)

    if measure.kind == "atoms":
        pts, wts = measure.atom_array()
        weight = np.abs(wts) * np.exp(-lam * dual_norm_eval(spec, pts) ** 2)
        if centers is None:
            centers = pts
        best = 0.0
        for c in np.atleast_2d(centers):
            inside = dual_norm_eval(spec, pts - c) <= radius
            best = max(best, float(np.sum(weight[inside])))
        return best

    if measure.kind == "radial_density":
        if window is None:
            raise SpecValidationError("radial densities need an explicit window")
        grid = materialize(measure, spec, window, spacing)
    else:
        grid = measure.density
        window = window or np.inf
    if window < radius:
        warnings.warn("window smaller than the ball radius; coverage is partial")
    r = dual_norm_eval(spec, grid.coords())
    weighted = np.abs(grid.values) * np.exp(-lam * np.minimum(r**2, 1400.0 / lam))
    kernel = _ball_kernel(spec, radius, grid.spacing)
    center_mask = r <= min(window, float(np.max(r)))
    return _windowed_ball_sup(weighted, kernel, center_mask, grid.cell_volume)


@dataclass
class ClassifyResult:
    lam_grid: list
    windows: list
    table: dict                  # (lam, window) -> value
    stabilized: dict             # lam -> bool
    lam_star: Optional[float]
    horizon: Optional[float]     # 1 / (4 lam_star)

    @property
    def admissible(self) -> bool:
        return self.lam_star is not None

    def rows(self):
        out = []
        for lam in self.lam_grid:
            for w in self.windows:
                out.append((lam, w, self.table[(lam, w)], self.stabilized[lam]))
        return out


def classify(measure: MeasureSpec, spec: NormSpec, lam_grid: Sequence[float],
             windows: Sequence[float] = (4.0, 6.0, 8.0, 12.0),
             spacing: float = 0.25, stabilization_tol: float = 1e-3) -> ClassifyResult:
    """Smallest lam whose windowed functional stabilizes, and its horizon.

    Deterministic and window-monotone: all windows share one lattice, so
    enlarging the window never decreases a table entry.
    """
    lam_grid = sorted(float(x) for x in lam_grid)
    windows = sorted(float(w) for w in windows)
    if len(windows) < 2:
        raise SpecValidationError("need at least two windows to test stabilization")
    table, stabilized = {}, {}
    for lam in lam_grid:
        for w in windows:
            table[(lam, w)] = growth_functional(measure, lam, spec,
                                                window=w, spacing=spacing)
        a, b = table[(lam, windows[-2])], table[(lam, windows[-1])]
        if np.isfinite(a) and np.isfinite(b):
            stabilized[lam] = abs(b - a) <= stabilization_tol * max(abs(a), 1e-300)
        else:
            stabilized[lam] = False
    lam_star = next((lam for lam in lam_grid if stabilized[lam]), None)
    horizon = None if lam_star is None else 1.0 / (4.0 * lam_star)
    return ClassifyResult(list(lam_grid), list(windows), table, stabilized,
                          lam_star, horizon)


# ---------------------------------------------------------------------------
# mollification
# ---------------------------------------------------------------------------

def _bump(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def mollify(measure: MeasureSpec, width: float,
            layout: Optional[GridFunction] = None,
            spec: Optional[NormSpec] = None) -> GridFunction:
    """Smooth density on the layout grid; total mass preserved exactly.

    Densities are convolved with a compactly supported bump of the given
    width; atoms are splatted with the same bump, renormalized per atom on
    the lattice.  Mass is preserved to roundoff provided the support plus
    the width stays inside the grid; width must be at least two cells.
    """
    if measure.kind == "density" and layout is None:
        layout = measure.density
    if layout is None:
        raise SpecValidationError("mollify needs a target layout for this measure")
    h = layout.spacing
    if width < 2.0 * max(h) * (1.0 - 1e-12):
        raise SpecValidationError("mollifier width must be >= 2 grid cells")

    if measure.kind == "atoms":
        pts, wts = measure.atom_array()
        out = np.zeros(layout.values.shape)
        coords = layout.coords()
        for p, w in zip(pts, wts):
            s = np.linalg.norm(coords - p, axis=-1) / width
            kern = _bump(s)
            total = kern.sum() * layout.cell_volume
            if total <= 0:
                raise DomainError("atom outside the grid (empty mollifier support)")
            out += w * kern / total
        return layout.with_values(out)

    if measure.kind == "radial_density":
        r = dual_norm_eval(measure.norm, layout.coords())
        base = measure.profile(np.clip(r, 0.0, measure.profile.r_max))
        source = layout.with_values(np.where(r <= measure.profile.r_max, base, 0.0))
    else:
        source = measure.density if measure.density.same_layout(layout) \
            else layout.with_values(_resample_density(measure.density, layout))

    axes = [np.arange(-int(np.ceil(width / hk)), int(np.ceil(width / hk)) + 1) * hk
            for hk in h]
    offsets = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    kern = _bump(np.linalg.norm(offsets, axis=-1) / width)
    kern /= kern.sum() * layout.cell_volume
    smooth = fftconvolve(source.values, kern, mode="same") * layout.cell_volume
    return layout.with_values(smooth)
