"""Discrete divergence-form operator div A(grad u) and the radial reduction.

The operator is discretized conservatively on faces: along each axis the
normal derivative is the direct difference across the face, the tangential
components are averages of the two neighboring nodal central differences,
the flux component through the face is the matching component of the
duality map A evaluated at that face gradient, and the divergence is the
difference of face fluxes.  Output is second-order accurate where the
field is C^3 with nonvanishing gradient; the one-cell boundary halo is
marked NaN rather than extrapolated.

For a field of the form v(x) = q(H0(x)) with q smooth and flat at 0, the
continuum operator collapses to the ordinary radial expression
q''(r) + (N-1) q'(r) / r evaluated at r = H0(x), with the value N q''(0)
at the center; the checks in this module measure how fast the discrete
operator converges to that reduction and whether it acts linearly on such
fields.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutOfRangeError, SpecValidationError
from .grids import GridFunction, RadialProfile, grid_from_function
from .norms import NormSpec, dual_norm_eval, duality_map


def gradient(gf: GridFunction) -> np.ndarray:
    """Nodal gradient, shape (*nodes, N): central interior, one-sided edges."""
    grads = np.gradient(gf.values, *gf.spacing, edge_order=2) \
        if gf.dimension > 1 else [np.gradient(gf.values, gf.spacing[0], edge_order=2)]
    return np.stack(grads, axis=-1)


def _face_gradient(values: np.ndarray, spacing, axis: int) -> np.ndarray:
    """Full gradient vector at the midpoints of faces normal to `axis`."""
    N = values.ndim
    lo = [slice(None)] * N
    hi = [slice(None)] * N
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    lo, hi = tuple(lo), tuple(hi)
    comps = []
    for k in range(N):
        if k == axis:
            comps.append((values[hi] - values[lo]) / spacing[axis])
        else:
            ck = np.gradient(values, spacing[k], axis=k, edge_order=2)
            comps.append(0.5 * (ck[hi] + ck[lo]))
    return np.stack(comps, axis=-1)


def finsler_laplacian(gf: GridFunction, spec: NormSpec) -> GridFunction:
    """div A(grad u) by face-flux differencing; NaN on the one-cell halo."""
    if spec.dimension != gf.dimension:
        raise SpecValidationError("norm/grid dimension mismatch")
    values = gf.values
    h = gf.spacing
    out = np.zeros_like(values)
    N = gf.dimension
    for axis in range(N):
        G = _face_gradient(values, h, axis)
        flux = duality_map(spec, G)[..., axis]
        interior = [slice(None)] * N
        interior[axis] = slice(1, -1)
        out[tuple(interior)] += np.diff(flux, axis=axis) / h[axis]
    halo = np.zeros(values.shape, dtype=bool)
    for axis in range(N):
        edge = [slice(None)] * N
        edge[axis] = [0, -1]
        halo[tuple(edge)] = True
    out[halo] = np.nan
    return gf.with_values(out, check_finite=False)


def interior_mask(gf: GridFunction) -> np.ndarray:
    """Nodes where finsler_laplacian output is defined (halo excluded)."""
    mask = np.ones(gf.values.shape, dtype=bool)
    for axis in range(gf.dimension):
        edge = [slice(None)] * gf.dimension
        edge[axis] = [0, -1]
        mask[tuple(edge)] = False
    return mask


# ---------------------------------------------------------------------------
# radial reduction
# ---------------------------------------------------------------------------

def radial_laplacian(rp: RadialProfile, dimension: int) -> RadialProfile:
    """r -> q''(r) + (N-1) q'(r)/r, with the limit N q''(0) at the center."""
    if len(rp) < 8:
        raise SpecValidationError("profile too coarse for radial derivatives")
    r = rp.radii
    out = np.empty_like(r)
    d1 = rp.derivative(r, 1)
    d2 = rp.derivative(r, 2)
    out[1:] = d2[1:] + (dimension - 1) * d1[1:] / r[1:]
    out[0] = dimension * d2[0]
    return RadialProfile(r, out, even=rp.even)


def radial_operator_values(rp: RadialProfile, dimension: int, r: np.ndarray) -> np.ndarray:
    """Radial operator of the profile evaluated at arbitrary radii > 0."""
    r = np.asarray(r, dtype=float)
    d1 = rp.derivative(r, 1)
    d2 = rp.derivative(r, 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = d2 + (dimension - 1) * d1 / r
    return np.where(r > 0, vals, dimension * rp.derivative(0.0, 2))


def dual_norm_grid(spec: NormSpec, gf: GridFunction) -> np.ndarray:
    """H0 at every node; closed-form duals vectorize, numeric duals loop."""
    return dual_norm_eval(spec, gf.coords())


def lift_radial(rp: RadialProfile, spec: NormSpec, layout: GridFunction) -> GridFunction:
    """v(x) = q(H0(x)) interpolated from the profile onto the grid."""
    r = dual_norm_grid(spec, layout)
    if float(np.max(r)) > rp.r_max * (1 + 1e-12):
        raise OutOfRangeError(
            f"grid reaches H0 = {float(np.max(r)):.6g} beyond the profile range "
            f"[0, {rp.r_max:.6g}]")
    return layout.with_values(rp(r))


def empty_layout(box, resolution) -> GridFunction:
    return GridFunction(tuple(box), tuple(resolution),
                        np.zeros(tuple(r + 1 for r in resolution)))


@dataclass
class ReductionReport:
    spacings: list
    max_errors: list
    mean_errors: list
    r_cut: float

    @property
    def order_max(self) -> float:
        return float(np.log2(self.max_errors[0] / self.max_errors[-1])
                     / np.log2(self.spacings[0] / self.spacings[-1]))

    @property
    def order_mean(self) -> float:
        return float(np.log2(self.mean_errors[0] / self.mean_errors[-1])
                     / np.log2(self.spacings[0] / self.spacings[-1]))


def _reduction_errors(rp: RadialProfile, spec: NormSpec, layout: GridFunction,
                      r_cut: float):
    lifted = lift_radial(rp, spec, layout)
    lap = finsler_laplacian(lifted, spec).values
    r = dual_norm_grid(spec, layout)
    oracle = radial_operator_values(rp, layout.dimension, r)
    window = interior_mask(layout) & (r >= r_cut)
    err = np.abs(lap - oracle)[window]
    return float(np.max(err)), float(np.mean(err))


def check_radial_reduction(rp: RadialProfile, spec: NormSpec,
                           layout: GridFunction, levels: int = 2,
                           r_cut: float | None = None) -> ReductionReport:
    """Discrete operator vs the radial reduction, across grid refinements.

    Errors are measured on interior nodes with H0(x) >= r_cut; the cut
    defaults to twice the coarsest spacing and is held fixed across levels
    so the order estimate compares errors over one region.
    """
    h0 = max(layout.spacing)
    if r_cut is None:
        r_cut = 2.0 * h0
    spacings, maxes, means = [], [], []
    box, res = layout.box, layout.resolution
    for level in range(levels):
        factor = 2**level
        lay = empty_layout(box, tuple(r * factor for r in res))
        e_max, e_mean = _reduction_errors(rp, spec, lay, r_cut)
        spacings.append(max(lay.spacing))
        maxes.append(e_max)
        means.append(e_mean)
    return ReductionReport(spacings, maxes, means, r_cut)


@dataclass
class LinearityReport:
    spacings: list
    radial_defects: list
    control_defects: list

    @property
    def order(self) -> float:
        return float(np.log2(self.radial_defects[0] / self.radial_defects[-1])
                     / np.log2(self.spacings[0] / self.spacings[-1]))


def check_linearity(rp1: RadialProfile, rp2: RadialProfile,
                    alpha: float, beta: float, spec: NormSpec,
                    layout: GridFunction, levels: int = 2,
                    r_cut: float | None = None) -> LinearityReport:
    """Linearity defect of the operator on radial lifts vs a non-radial pair.

    The radial defect max |L(a v + b w) - a L v - b L w| must vanish under
    refinement (the operator acts linearly on these fields); the control
    defect, computed for the fixed non-radial pair (x_1^2, x_2^2), must not
    when the norm is not quadratic.  Both are measured on the same
    H0 >= r_cut interior window as the reduction check.
    """
    h0 = max(layout.spacing)
    if r_cut is None:
        r_cut = 2.0 * h0
    box, res = layout.box, layout.resolution
    spacings, radial, control = [], [], []
    for level in range(levels):
        factor = 2**level
        lay = empty_layout(box, tuple(r * factor for r in res))
        r = dual_norm_grid(spec, lay)
        window = interior_mask(lay) & (r >= r_cut)

        v = lift_radial(rp1, spec, lay)
        w = lift_radial(rp2, spec, lay)
        combo = lay.with_values(alpha * v.values + beta * w.values)
        defect = finsler_laplacian(combo, spec).values \
            - alpha * finsler_laplacian(v, spec).values \
            - beta * finsler_laplacian(w, spec).values
        radial.append(float(np.max(np.abs(defect)[window])))

        cv = grid_from_function(box, lay.resolution, lambda c: c[..., 0] ** 2)
        cw = grid_from_function(box, lay.resolution, lambda c: c[..., 1] ** 2)
        ccombo = lay.with_values(alpha * cv.values + beta * cw.values)
        cdefect = finsler_laplacian(ccombo, spec).values \
            - alpha * finsler_laplacian(cv, spec).values \
            - beta * finsler_laplacian(cw, spec).values
        control.append(float(np.max(np.abs(cdefect)[window])))
        spacings.append(max(lay.spacing))
    return LinearityReport(spacings, radial, control)
