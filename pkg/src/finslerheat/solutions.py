"""Closed-form solution families used as oracles, and a residual evaluator.

Families (all anisotropic through r = H0(x)):

    gauss_kernel      (4 pi t)^(-N/2) exp(-r^2 / 4t)
    blowup(L)         (1 - 4 L t)^(-N/2) exp(L r^2 / (1 - 4 L t)),
                      valid on [0, S_L) with S_L = 1/(4L); the minimum over
                      x sits at the origin and blows up as t -> S_L
    barenblatt(m, C)  t^(-a) (C - k r^2 t^(-2b))_+^(1/(m-1)), the
                      self-similar source solution of d_t v = lap_H(v^m),
                      a = N/(N(m-1)+2), b = a/N, k = a(m-1)/(2mN)
    talenti(p, A, B)  (A + B r^(p/(p-1)))^(1-N/p), checked against the
                      stationary equation -lap_H w = w^p as specified
    singular_poly(m)  r^(-N+2m), with an extra log r factor when
                      N-2m \in {0, -2, -4, ...}; annihilated by the m-th
                      iterate of the operator away from the origin

The residual evaluator substitutes a family into the discrete equation
(centered time difference minus the discrete operator) and reports how the
defect behaves under joint (h, dt) refinement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, SpecValidationError
from .grids import GridFunction
from .norms import NormSpec, dual_norm_eval
from .operators import empty_layout, finsler_laplacian, interior_mask

_FAMILIES = ("gauss_kernel", "blowup", "barenblatt", "talenti", "singular_poly")


@dataclass(frozen=True)
class SolutionSpec:
    kind: str
    norm: NormSpec
    lam: Optional[float] = None       # blowup
    m: Optional[float] = None         # barenblatt
    C: Optional[float] = None         # barenblatt
    p: Optional[float] = None         # talenti
    A: Optional[float] = None         # talenti
    B: Optional[float] = None         # talenti
    m_order: Optional[int] = None     # singular_poly

    def __post_init__(self):
        if self.kind not in _FAMILIES:
            raise SpecValidationError(f"unknown solution family {self.kind!r}")
        if self.kind == "blowup" and (self.lam is None or self.lam <= 0):
            raise SpecValidationError("blowup requires lam > 0")
        if self.kind == "barenblatt":
            if self.m is None or self.m <= 1:
                raise SpecValidationError("barenblatt requires m > 1")
            if self.C is None or self.C <= 0:
                raise SpecValidationError("barenblatt requires C > 0")
        if self.kind == "talenti":
            if self.p is None or self.p <= 1:
                raise SpecValidationError("talenti requires p > 1")
            if self.A is None or self.A <= 0 or self.B is None or self.B <= 0:
                raise SpecValidationError("talenti requires A > 0 and B > 0")
        if self.kind == "singular_poly" and (self.m_order is None or self.m_order < 1):
            raise SpecValidationError("singular_poly requires m_order >= 1")

    @property
    def blowup_time(self) -> float:
        """S = 1/(4 lam); the family exists on [0, S)."""
        if self.kind != "blowup":
            raise DomainError("blowup_time only defined for the blowup family")
        return 1.0 / (4.0 * self.lam)

    @property
    def barenblatt_exponents(self) -> tuple[float, float, float]:
        """(alpha, beta, k) of the self-similar profile."""
        N = self.norm.dimension
        alpha = N / (N * (self.m - 1.0) + 2.0)
        beta = alpha / N
        k = alpha * (self.m - 1.0) / (2.0 * self.m * N)
        return alpha, beta, k

    def barenblatt_support_radius(self, t: float) -> float:
        _, beta, k = self.barenblatt_exponents
        return float(np.sqrt(self.C / k) * t**beta)

    @property
    def time_dependent(self) -> bool:
        return self.kind in ("gauss_kernel", "blowup", "barenblatt")

    def label(self) -> str:
        return self.kind

    def to_dict(self) -> dict:
        params = {k: v for k, v in (("lam", self.lam), ("m", self.m), ("C", self.C),
                                    ("p", self.p), ("A", self.A), ("B", self.B),
                                    ("m_order", self.m_order)) if v is not None}
        return {"kind": self.kind, "params": params, "norm": self.norm.to_dict()}

    @staticmethod
    def from_dict(obj: dict) -> "SolutionSpec":
        norm = NormSpec.from_dict(obj["norm"])
        return SolutionSpec(obj["kind"], norm, **obj.get("params", {}))


def eval_solution(spec: SolutionSpec, x: np.ndarray, t: float = 0.0) -> np.ndarray:
    """Closed-form value at points x (batched (..., N)) and time t."""
    x = np.asarray(x, dtype=float)
    r = dual_norm_eval(spec.norm, x)
    N = spec.norm.dimension
    if spec.kind == "gauss_kernel":
        if t <= 0:
            raise DomainError("gauss_kernel requires t > 0")
        return (4.0 * np.pi * t) ** (-N / 2.0) * np.exp(-(r**2) / (4.0 * t))
    if spec.kind == "blowup":
        s = 1.0 - 4.0 * spec.lam * t
        if t < 0 or s <= 0:
            raise DomainError(
                f"blowup family only exists for 0 <= t < {spec.blowup_time}")
        return s ** (-N / 2.0) * np.exp(spec.lam * r**2 / s)
    if spec.kind == "barenblatt":
        if t <= 0:
            raise DomainError("barenblatt requires t > 0")
        alpha, beta, k = spec.barenblatt_exponents
        bracket = np.maximum(spec.C - k * r**2 * t ** (-2.0 * beta), 0.0)
        return t ** (-alpha) * bracket ** (1.0 / (spec.m - 1.0))
    if spec.kind == "talenti":
        return (spec.A + spec.B * r ** (spec.p / (spec.p - 1.0))) ** (1.0 - N / spec.p)
    # singular_poly
    if np.any(r == 0.0):
        raise DomainError("singular polyharmonic profile is singular at x = 0")
    exponent = -N + 2 * spec.m_order
    if (N - 2 * spec.m_order) % 2 == 0 and N - 2 * spec.m_order <= 0:
        return r**exponent * np.log(r)
    return r**exponent


@dataclass
class ResidualReport:
    family: str
    norm_label: str
    spacings: list
    time_steps: list
    max_residuals: list
    mean_residuals: list

    @property
    def order(self) -> float:
        return float(np.log2(self.max_residuals[0] / self.max_residuals[-1])
                     / np.log2(self.spacings[0] / self.spacings[-1]))

    def rows(self):
        out = []
        for i, (h, dt, mx) in enumerate(zip(self.spacings, self.time_steps,
                                            self.max_residuals)):
            order = np.nan if i == 0 else float(
                np.log2(self.max_residuals[i - 1] / mx)
                / np.log2(self.spacings[i - 1] / h))
            out.append((self.family, self.norm_label, h, dt, mx, order))
        return out


def _sample(spec: SolutionSpec, layout: GridFunction, t: float) -> np.ndarray:
    return np.asarray(eval_solution(spec, layout.coords(), t), dtype=float)


def pde_residual(spec: SolutionSpec, layout: GridFunction, t: float, dt: float,
                 levels: int = 2) -> ResidualReport:
    """Discrete-equation residual of a closed-form family, under refinement.

    Time families: r = [u(t+dt) - u(t-dt)]/(2 dt) - lap_h(u(t)) with the
    operator applied to u^m for the porous-medium family, which also
    excludes a band around its free boundary (2h plus the interface
    displacement over the time stencil).  The stationary power-law family
    uses r = -lap_h(w) - w^p.
    """
    if spec.kind == "singular_poly":
        raise DomainError("use singular_poly_check for the singular family")
    box, res = layout.box, layout.resolution
    spacings, dts, maxes, means = [], [], [], []
    for level in range(levels):
        factor = 2**level
        lay = empty_layout(box, tuple(r * factor for r in res))
        h = max(lay.spacing)
        dt_l = dt / factor
        if spec.kind == "talenti":
            w = lay.with_values(_sample(spec, lay, 0.0))
            lap = finsler_laplacian(w, spec.norm).values
            residual = -lap - w.values**spec.p
            window = interior_mask(lay)
        else:
            u = _sample(spec, lay, t)
            du_dt = (_sample(spec, lay, t + dt_l) - _sample(spec, lay, t - dt_l)) \
                / (2.0 * dt_l)
            field = u**spec.m if spec.kind == "barenblatt" else u
            lap = finsler_laplacian(lay.with_values(field), spec.norm).values
            residual = du_dt - lap
            window = interior_mask(lay)
            if spec.kind == "barenblatt":
                r = dual_norm_eval(spec.norm, lay.coords())
                rf = spec.barenblatt_support_radius(t)
                move = abs(spec.barenblatt_support_radius(t + dt_l)
                           - spec.barenblatt_support_radius(t - dt_l))
                window &= np.abs(r - rf) > 2.0 * h + move
        err = np.abs(residual)[window]
        spacings.append(h)
        dts.append(dt_l)
        maxes.append(float(np.max(err)))
        means.append(float(np.mean(err)))
    return ResidualReport(spec.label(), spec.norm.label(), spacings, dts, maxes, means)


def singular_poly_check(spec: SolutionSpec, layout: GridFunction,
                        annulus: tuple[float, float] = (0.25, 1.0)) -> float:
    """Max |(lap_h)^m v| on the annulus r in [lo, hi], away from the origin.

    The Dirac mass at the origin is not estimated; the puncture at x = 0 is
    filled with 0 and its stencil pollution stays inside r < lo for the
    resolutions of interest.  m_order >= 2 iterates the operator (the halo
    grows by one cell per application) and is experimental.
    """
    if spec.kind != "singular_poly":
        raise DomainError("singular_poly_check requires the singular family")
    r = dual_norm_eval(spec.norm, layout.coords())
    with np.errstate(divide="ignore", invalid="ignore"):
        exponent = -spec.norm.dimension + 2 * spec.m_order
        if (spec.norm.dimension - 2 * spec.m_order) % 2 == 0 \
                and spec.norm.dimension - 2 * spec.m_order <= 0:
            vals = np.where(r > 0, r**exponent * np.log(np.where(r > 0, r, 1.0)), 0.0)
        else:
            vals = np.where(r > 0, r**exponent, 0.0)
    field = layout.with_values(vals)
    for _ in range(spec.m_order):
        field = finsler_laplacian(field, spec.norm)
        field = field.with_values(field.values, check_finite=False)
    window = (r >= annulus[0]) & (r <= annulus[1]) & np.isfinite(field.values)
    return float(np.max(np.abs(field.values[window])))
