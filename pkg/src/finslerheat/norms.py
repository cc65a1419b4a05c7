"""Norm calculus: H, its gradient, the dual norm H0, and the duality map.

Conventions used throughout the package:

    H : R^N -> [0, inf)   convex, absolutely 1-homogeneous, H(xi)=0 iff xi=0,
                          C^1 away from the origin, strictly convex unit ball
    H0(x) = sup_{xi != 0} (x . xi) / H(xi)         (the polar / dual norm)
    A(xi) = H(xi) grad H(xi) for xi != 0, A(0) = 0  (the flux / duality map)

The map A satisfies A(xi).xi = H(xi)^2 and H0(A(xi)) = H(xi), and is
continuous at the origin, which is why all grid code evaluates A rather
than grad H.  Gradients of numerically-defined dual norms come from the
maximizer itself (envelope argument): grad H0(x) is the point of {H = 1}
where the supremum is attained.

Built-in families:

    euclidean            H(xi) = |xi|, self-dual
    p_norm(p), 1<p<inf   H(xi) = (sum |xi_i|^p)^(1/p), dual is the q-norm
    ellipse(M)           H(xi) = sqrt(xi^T M xi), M SPD, dual uses M^-1
    smoothed_polytope    H(xi)^2 = sum_i ((d_i . xi)^2 + eps^2 |xi|^2),
                         a strictly convex stand-in for polytope norms;
                         no closed-form dual is registered, so this family
                         exercises the sphere-maximization path

Non-smooth norms (p = 1, p = inf, raw polytopes) are rejected at
construction: the strict-convexity and C^1 assumptions are load-bearing
for everything downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConvergenceError, DomainError, SpecValidationError

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormSpec:
    """Parametric description of a norm; build via the module-level factories."""

    family: str
    dimension: int
    p: Optional[float] = None
    matrix: Optional[tuple] = None          # row tuples, kept hashable
    directions: Optional[tuple] = None
    epsilon: Optional[float] = None
    dual_hint: Optional["NormSpec"] = None

    def __post_init__(self):
        if self.dimension < 1:
            raise SpecValidationError("dimension must be a positive integer")
        if self.family == "euclidean":
            pass
        elif self.family == "p_norm":
            if self.p is None or not np.isfinite(self.p) or not 1.0 < self.p:
                raise SpecValidationError(
                    "p_norm requires 1 < p < inf (endpoints break C^1 smoothness "
                    "and strict convexity of the unit ball)")
        elif self.family == "ellipse":
            M = self._matrix()
            if M.shape != (self.dimension, self.dimension):
                raise SpecValidationError("ellipse matrix shape mismatch")
            if not np.allclose(M, M.T, atol=1e-12):
                raise SpecValidationError("ellipse matrix must be symmetric")
            if np.linalg.eigvalsh(M)[0] <= 0:
                raise SpecValidationError("ellipse matrix must be positive definite")
        elif self.family == "smoothed_polytope":
            if self.epsilon is None or self.epsilon <= 0:
                raise SpecValidationError("smoothed_polytope requires epsilon > 0")
            D = self._directions()
            if D.shape[1] != self.dimension:
                raise SpecValidationError("direction dimension mismatch")
            if np.linalg.matrix_rank(D) < self.dimension:
                raise SpecValidationError(
                    "smoothed_polytope needs >= N linearly independent directions")
            if not np.allclose(np.linalg.norm(D, axis=1), 1.0, atol=1e-9):
                raise SpecValidationError("directions must be unit vectors")
        else:
            raise SpecValidationError(f"unknown norm family {self.family!r}")

    def _matrix(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=float)

    def _directions(self) -> np.ndarray:
        return np.asarray(self.directions, dtype=float)

    def _quadratic_form(self) -> np.ndarray:
        """The SPD matrix Q with H(xi)^2 = xi^T Q xi, for quadratic families."""
        if self.family == "euclidean":
            return np.eye(self.dimension)
        if self.family == "ellipse":
            return self._matrix()
        if self.family == "smoothed_polytope":
            D = self._directions()
            Q = D.T @ D + len(D) * self.epsilon**2 * np.eye(self.dimension)
            return Q
        raise DomainError(f"{self.family} is not a quadratic-form norm")

    def label(self) -> str:
        if self.family == "p_norm":
            return f"p_norm(p={self.p:g},N={self.dimension})"
        if self.family == "ellipse":
            return f"ellipse(N={self.dimension})"
        if self.family == "smoothed_polytope":
            return f"smoothed_polytope(k={len(self.directions)},eps={self.epsilon:g})"
        return f"{self.family}(N={self.dimension})"

    def to_dict(self) -> dict:
        params: dict = {}
        if self.family == "p_norm":
            params["p"] = self.p
        elif self.family == "ellipse":
            params["matrix"] = [list(row) for row in self.matrix]
        elif self.family == "smoothed_polytope":
            params["directions"] = [list(d) for d in self.directions]
            params["epsilon"] = self.epsilon
        return {"family": self.family, "params": params, "dimension": self.dimension}

    @staticmethod
    def from_dict(obj: dict) -> "NormSpec":
        try:
            family = obj["family"]
            dim = int(obj["dimension"])
            params = obj.get("params", {})
        except (KeyError, TypeError) as exc:
            raise SpecValidationError(f"malformed norm spec: {exc}") from exc
        if family == "euclidean":
            return euclidean(dim)
        if family == "p_norm":
            return p_norm(float(params["p"]), dim)
        if family == "ellipse":
            return ellipse(np.asarray(params["matrix"], dtype=float))
        if family == "smoothed_polytope":
            return smoothed_polytope(
                np.asarray(params["directions"], dtype=float), float(params["epsilon"]))
        raise SpecValidationError(f"unknown norm family {family!r}")


def euclidean(dimension: int) -> NormSpec:
    spec = NormSpec("euclidean", dimension)
    object.__setattr__(spec, "dual_hint", spec)
    return spec


def p_norm(p: float, dimension: int) -> NormSpec:
    spec = NormSpec("p_norm", dimension, p=float(p))
    q = p / (p - 1.0)
    object.__setattr__(spec, "dual_hint", NormSpec("p_norm", dimension, p=q))
    return spec


def ellipse(M: np.ndarray) -> NormSpec:
    M = np.asarray(M, dtype=float)
    spec = NormSpec("ellipse", M.shape[0], matrix=tuple(map(tuple, M)))
    Minv = np.linalg.inv(M)
    Minv = 0.5 * (Minv + Minv.T)
    object.__setattr__(
        spec, "dual_hint", NormSpec("ellipse", M.shape[0], matrix=tuple(map(tuple, Minv))))
    return spec


def smoothed_polytope(directions: np.ndarray, epsilon: float) -> NormSpec:
    D = np.asarray(directions, dtype=float)
    # no dual hint on purpose: this family exercises the numeric dual path
    return NormSpec(
        "smoothed_polytope", D.shape[1],
        directions=tuple(map(tuple, D)), epsilon=float(epsilon))


@dataclass(frozen=True)
class DualEvalConfig:
    """How to evaluate H0: closed form when available, else sampled sup."""

    method: str = "auto"                    # auto | closed_form | sphere_maximization
    sphere_samples: int = 2048
    refinement_iters: int = 20
    tolerance: float = 1e-9

    def __post_init__(self):
        if self.method not in ("auto", "closed_form", "sphere_maximization"):
            raise SpecValidationError(f"unknown dual evaluation method {self.method!r}")
        if self.tolerance <= 0:
            raise SpecValidationError("tolerance must be positive")
        if self.sphere_samples < 2:
            raise SpecValidationError("sphere_samples too small")


def _check_samples(cfg: DualEvalConfig, dimension: int) -> None:
    if cfg.sphere_samples < 2 * dimension:
        raise SpecValidationError("sphere_samples must be >= 2N")


# ---------------------------------------------------------------------------
# primal evaluations (all batched over leading axes)
# ---------------------------------------------------------------------------

def eval_norm(spec: NormSpec, xi: np.ndarray) -> np.ndarray:
    """H(xi); accepts arrays of shape (..., N)."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != spec.dimension:
        raise DomainError(
            f"vector dimension {xi.shape[-1]} != spec dimension {spec.dimension}")
    if spec.family == "p_norm":
        return np.sum(np.abs(xi) ** spec.p, axis=-1) ** (1.0 / spec.p)
    Q = spec._quadratic_form()
    return np.sqrt(np.einsum("...i,ij,...j->...", xi, Q, xi))


def grad_norm(spec: NormSpec, xi: np.ndarray) -> np.ndarray:
    """grad H(xi), closed form per family; undefined (raises) at xi = 0.

    Satisfies the Euler identity xi . grad H(xi) = H(xi) and the sign rule
    grad H(t xi) = sign(t) grad H(xi).
    """
    xi = np.asarray(xi, dtype=float)
    H = eval_norm(spec, xi)
    if np.any(H == 0.0):
        raise DomainError("grad_norm is undefined at xi = 0; use duality_map")
    if spec.family == "p_norm":
        p = spec.p
        return np.sign(xi) * np.abs(xi) ** (p - 1.0) / H[..., None] ** (p - 1.0)
    Q = spec._quadratic_form()
    return np.einsum("ij,...j->...i", Q, xi) / H[..., None]


def duality_map(spec: NormSpec, xi: np.ndarray) -> np.ndarray:
    """A(xi) = H(xi) grad H(xi), extended by A(0) = 0; total and continuous."""
    xi = np.asarray(xi, dtype=float)
    if spec.family == "p_norm":
        p = spec.p
        H = eval_norm(spec, xi)
        with np.errstate(divide="ignore", invalid="ignore"):
            A = np.sign(xi) * np.abs(xi) ** (p - 1.0) * H[..., None] ** (2.0 - p)
        return np.where(H[..., None] > 0.0, A, 0.0)
    # quadratic families: A is linear, no norm evaluation needed
    Q = spec._quadratic_form()
    return np.einsum("ij,...j->...i", Q, xi)


def central_difference_gradient(fn, xi: np.ndarray, h: Optional[float] = None) -> np.ndarray:
    """Fallback gradient of a scalar function of one vector, per coordinate.

    Step choice balances truncation against roundoff for O(1) functions.
    """
    xi = np.asarray(xi, dtype=float)
    if h is None:
        h = max(1e-6, 1e-6 * float(np.linalg.norm(xi)))
    g = np.empty_like(xi)
    for i in range(xi.size):
        e = np.zeros_like(xi)
        e[i] = h
        g[i] = (fn(xi + e) - fn(xi - e)) / (2.0 * h)
    return g


def coercivity_bounds(spec: NormSpec) -> tuple[float, float]:
    """(C1, C2) with A(xi).xi >= C1 |xi|^2 and |A(xi)| <= C2 |xi|.

    Exact eigenvalue bounds for quadratic families; for p-norms the bounds
    come from a dense deterministic sphere scan with a small safety margin.
    """
    if spec.family == "p_norm":
        dirs = _direction_set(spec.dimension, 8192)
        H = eval_norm(spec, dirs)
        A = duality_map(spec, dirs)
        c1 = float(np.min(H**2))
        c2 = float(np.max(np.linalg.norm(A, axis=-1)))
        return c1 * (1.0 - 1e-3), c2 * (1.0 + 1e-3)
    w = np.linalg.eigvalsh(spec._quadratic_form())
    return float(w[0]), float(w[-1])


# ---------------------------------------------------------------------------
# dual norm
# ---------------------------------------------------------------------------

def dual_spec(spec: NormSpec) -> Optional[NormSpec]:
    """Closed-form dual spec, or None when only the numeric path exists."""
    return spec.dual_hint


def _direction_set(dimension: int, count: int) -> np.ndarray:
    """Quasi-uniform unit directions; deterministic (no RNG)."""
    if dimension == 1:
        return np.array([[1.0], [-1.0]])
    if dimension == 2:
        theta = 2.0 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    if dimension == 3:
        # Fibonacci sphere
        k = np.arange(count) + 0.5
        z = 1.0 - 2.0 * k / count
        phi = np.pi * (1.0 + np.sqrt(5.0)) * k
        s = np.sqrt(np.maximum(0.0, 1.0 - z**2))
        return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)
    raise DomainError("direction sampling implemented for N <= 3")


def _golden_max(fn, lo: float, hi: float, iters: int) -> tuple[float, float]:
    """Golden-section maximization on [lo, hi]; deterministic."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fn(d)
    if fc >= fd:
        return c, fc
    return d, fd


def _dual_maximize(spec: NormSpec, x: np.ndarray, cfg: DualEvalConfig):
    """Numeric sup of x.xi / H(xi): returns (H0 value, maximizer on {H=1}).

    Coarse quasi-uniform scan of the unit sphere followed by golden-section
    refinement in the best cell.  The returned value is a lower bound on the
    true supremum that is tight to roughly (cell size after refinement)^2.
    """
    x = np.asarray(x, dtype=float)
    N = spec.dimension
    _check_samples(cfg, N)
    if not np.any(x):
        return 0.0, np.zeros(N)
    if N == 1:
        h = float(eval_norm(spec, np.array([1.0])))
        xi = np.array([np.sign(x[0]) / h])
        return abs(float(x[0])) / h, xi

    def value(d: np.ndarray) -> float:
        return float(x @ d) / float(eval_norm(spec, d))

    dirs = _direction_set(N, cfg.sphere_samples)
    vals = dirs @ x / eval_norm(spec, dirs)
    best = int(np.argmax(vals))

    if N == 2:
        theta0 = np.arctan2(dirs[best, 1], dirs[best, 0])
        delta = 2.0 * np.pi / cfg.sphere_samples

        def f(t: float) -> float:
            return value(np.array([np.cos(t), np.sin(t)]))

        t_best, v_best = _golden_max(f, theta0 - delta, theta0 + delta,
                                     cfg.refinement_iters)
        gap = abs(v_best - max(f(t_best - delta * _GOLDEN**cfg.refinement_iters),
                               f(t_best + delta * _GOLDEN**cfg.refinement_iters)))
        d_best = np.array([np.cos(t_best), np.sin(t_best)])
    else:
        d_best = dirs[best].copy()
        v_best = float(vals[best])
        delta = 2.2 * np.sqrt(4.0 * np.pi / cfg.sphere_samples)
        for _ in range(3):   # alternating tangent-coordinate refinement
            for t in _tangent_basis(d_best):
                def f(s: float, t=t, d0=d_best.copy()) -> float:
                    d = d0 + s * t
                    return value(d / np.linalg.norm(d))
                s_best, v_best = _golden_max(f, -delta, delta, cfg.refinement_iters)
                d_best = d_best + s_best * t
                d_best /= np.linalg.norm(d_best)
            delta *= 0.05
        gap = delta**2
    if gap > max(cfg.tolerance, 1e-12 * (1.0 + abs(v_best))):
        raise ConvergenceError(
            "dual-norm refinement did not reach tolerance", best=v_best, gap=gap)
    xi = d_best / float(eval_norm(spec, d_best))
    return v_best, xi


def _tangent_basis(d: np.ndarray) -> list[np.ndarray]:
    k = int(np.argmin(np.abs(d)))
    e = np.zeros_like(d)
    e[k] = 1.0
    t1 = np.cross(d, e)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(d, t1)
    return [t1, t2]


def dual_norm_eval(spec: NormSpec, x: np.ndarray,
                   cfg: Optional[DualEvalConfig] = None) -> np.ndarray:
    """H0(x) = sup_{xi != 0} x.xi / H(xi).

    Closed form when the family registers a dual; otherwise sampled
    maximization over the unit sphere of H with local refinement.  Batched
    input is supported on the closed-form path; the numeric path loops.
    """
    cfg = cfg or DualEvalConfig()
    x = np.asarray(x, dtype=float)
    dual = dual_spec(spec)
    if cfg.method == "closed_form" and dual is None:
        raise DomainError(f"{spec.label()} has no closed-form dual")
    if dual is not None and cfg.method in ("auto", "closed_form"):
        return eval_norm(dual, x)
    if x.ndim == 1:
        return _dual_maximize(spec, x, cfg)[0]
    flat = x.reshape(-1, x.shape[-1])
    out = np.array([_dual_maximize(spec, row, cfg)[0] for row in flat])
    return out.reshape(x.shape[:-1])


def grad_dual_norm(spec: NormSpec, x: np.ndarray,
                   cfg: Optional[DualEvalConfig] = None) -> np.ndarray:
    """grad H0(x); closed form through the dual spec, else the maximizer.

    On the numeric path the gradient is the argmax of x.xi over {H(xi)=1}
    (envelope theorem), which automatically satisfies H(grad H0(x)) = 1.
    """
    cfg = cfg or DualEvalConfig()
    x = np.asarray(x, dtype=float)
    if x.ndim == 1 and not np.any(x):
        raise DomainError("grad of the dual norm is undefined at x = 0")
    dual = dual_spec(spec)
    if dual is not None and cfg.method in ("auto", "closed_form"):
        return grad_norm(dual, x)
    if x.ndim == 1:
        return _dual_maximize(spec, x, cfg)[1]
    flat = x.reshape(-1, x.shape[-1])
    out = np.stack([_dual_maximize(spec, row, cfg)[1] for row in flat])
    return out.reshape(x.shape)


# ---------------------------------------------------------------------------
# identity suite
# ---------------------------------------------------------------------------

@dataclass
class IdentityReport:
    """Max violations of the convex-duality identities over random samples."""

    spec_label: str
    samples: int
    duality_inequality: float        # (|x.xi| - H0(x) H(xi))_+
    grad_on_dual_sphere: float       # |H0(grad H(xi)) - 1|
    dual_grad_on_primal_sphere: float  # |H(grad H0(x)) - 1|
    inversion_primal: float          # |H(xi) grad H0(grad H(xi)) - xi|_inf
    inversion_dual: float            # |H0(x) grad H(grad H0(x)) - x|_inf
    homogeneity: float               # |H(a xi) - |a| H(xi)| / (1 + H(xi))
    map_quadratic: float             # |A(xi).xi - H(xi)^2|

    def rows(self):
        return [
            ("duality_inequality", self.duality_inequality),
            ("grad_on_dual_sphere", self.grad_on_dual_sphere),
            ("dual_grad_on_primal_sphere", self.dual_grad_on_primal_sphere),
            ("inversion_primal", self.inversion_primal),
            ("inversion_dual", self.inversion_dual),
            ("homogeneity", self.homogeneity),
            ("map_quadratic", self.map_quadratic),
        ]


def verify_identities(spec: NormSpec, sample_count: int,
                      cfg: Optional[DualEvalConfig] = None,
                      seed: int = 0) -> IdentityReport:
    """Sample-based check of the duality identities; violations are data."""
    if sample_count < 1:
        raise SpecValidationError("sample_count >= 1 required")
    cfg = cfg or DualEvalConfig()
    rng = np.random.default_rng(seed)
    N = spec.dimension
    xi = rng.standard_normal((sample_count, N))
    x = rng.standard_normal((sample_count, N))
    alpha = rng.uniform(-3.0, 3.0, sample_count)
    # keep samples away from the origin where gradients are undefined
    xi[np.linalg.norm(xi, axis=1) < 1e-3] += 1.0
    x[np.linalg.norm(x, axis=1) < 1e-3] += 1.0

    H = eval_norm(spec, xi)
    H0 = dual_norm_eval(spec, x, cfg)
    gH = grad_norm(spec, xi)
    gH0 = grad_dual_norm(spec, x, cfg)
    A = duality_map(spec, xi)

    duality = np.max(np.maximum(
        np.abs(np.einsum("ki,ki->k", x, xi)) - H0 * H, 0.0))
    grad_sphere = np.max(np.abs(dual_norm_eval(spec, gH, cfg) - 1.0))
    dual_sphere = np.max(np.abs(eval_norm(spec, gH0) - 1.0))
    inv_primal = np.max(np.abs(H[:, None] * grad_dual_norm(spec, gH, cfg) - xi))
    inv_dual = np.max(np.abs(H0[:, None] * grad_norm(spec, gH0) - x))
    homog = np.max(np.abs(eval_norm(spec, alpha[:, None] * xi)
                          - np.abs(alpha) * H) / (1.0 + H))
    quad = np.max(np.abs(np.einsum("ki,ki->k", A, xi) - H**2))

    return IdentityReport(
        spec_label=spec.label(), samples=sample_count,
        duality_inequality=float(duality),
        grad_on_dual_sphere=float(grad_sphere),
        dual_grad_on_primal_sphere=float(dual_sphere),
        inversion_primal=float(inv_primal),
        inversion_dual=float(inv_dual),
        homogeneity=float(homog),
        map_quadratic=float(quad),
    )
