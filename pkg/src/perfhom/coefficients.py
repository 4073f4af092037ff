"""Y-periodic coefficient fields, the Smoluchowski rate, the mollified gradient
and the boundary cut-off function."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import KernelUnresolved, NonElliptic
from .fields import FeFunction
from .geometry import Mesh


@dataclass(frozen=True)
class ScalarFieldSpec:
    """Periodic scalar field on Y.

    kinds: ``constant`` (value ``a``), ``trig`` (``a + b cos(2 pi y1) cos(2 pi y2)``)
    and ``laminate`` (``a`` for y1 < 1/2, ``b`` otherwise).
    """

    kind: str
    a: float
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "trig", "laminate"):
            raise ValueError(f"unknown field kind {self.kind!r}")
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValueError("field parameters must be finite")

    @property
    def bounds(self) -> tuple[float, float]:
        if self.kind == "constant":
            return self.a, self.a
        if self.kind == "trig":
            return self.a - abs(self.b), self.a + abs(self.b)
        return min(self.a, self.b), max(self.a, self.b)

    @property
    def is_zero(self) -> bool:
        return self.bounds == (0.0, 0.0)

    def __call__(self, y) -> np.ndarray:
        y = np.mod(np.asarray(y, dtype=float), 1.0)
        y1, y2 = y[..., 0], y[..., 1]
        if self.kind == "constant":
            return np.full(y1.shape, self.a)
        if self.kind == "trig":
            return self.a + self.b * np.cos(2 * np.pi * y1) * np.cos(2 * np.pi * y2)
        return np.where(y1 < 0.5, self.a, self.b)

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.a}
        keys = ("a", "b") if self.kind == "trig" else ("c1", "c2")
        return {"kind": self.kind, keys[0]: self.a, keys[1]: self.b}


def constant(c: float) -> ScalarFieldSpec:
    return ScalarFieldSpec("constant", float(c))


def trig(a: float, b: float) -> ScalarFieldSpec:
    return ScalarFieldSpec("trig", float(a), float(b))


def laminate(c1: float, c2: float) -> ScalarFieldSpec:
    return ScalarFieldSpec("laminate", float(c1), float(c2))


@dataclass(frozen=True)
class TensorFieldSpec:
    """Diagonal 2x2 tensor field; ``isotropic`` when both entries share one spec."""

    diag: tuple[ScalarFieldSpec, ScalarFieldSpec]

    @classmethod
    def isotropic(cls, spec: ScalarFieldSpec) -> "TensorFieldSpec":
        return cls((spec, spec))

    @property
    def is_isotropic(self) -> bool:
        return self.diag[0] == self.diag[1]

    @property
    def bounds(self) -> tuple[float, float]:
        lo = min(s.bounds[0] for s in self.diag)
        hi = max(s.bounds[1] for s in self.diag)
        return lo, hi

    @property
    def is_zero(self) -> bool:
        return all(s.is_zero for s in self.diag)

    def diagonal(self, y) -> np.ndarray:
        return np.stack([self.diag[0](y), self.diag[1](y)], axis=-1)

    def __call__(self, y) -> np.ndarray:
        d = self.diagonal(y)
        out = np.zeros(d.shape[:-1] + (2, 2))
        out[..., 0, 0] = d[..., 0]
        out[..., 1, 1] = d[..., 1]
        return out

    def check_elliptic(self, name="tensor") -> None:
        if self.bounds[0] <= 0:
            raise NonElliptic(f"{name} has lower bound {self.bounds[0]} <= 0")

    def to_dict(self) -> dict:
        if self.is_isotropic:
            return self.diag[0].to_dict()
        return {"kind": "diagonal", "d1": self.diag[0].to_dict(), "d2": self.diag[1].to_dict()}


def iso(spec: ScalarFieldSpec | float) -> TensorFieldSpec:
    if not isinstance(spec, ScalarFieldSpec):
        spec = constant(spec)
    return TensorFieldSpec.isotropic(spec)


def eval_periodic(spec, y):
    """Evaluate a scalar or tensor spec at cell coordinates (wrapped into [0,1)^2)."""
    return spec(y)


@dataclass(frozen=True)
class SmoluchowskiParams:
    beta: np.ndarray

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float)
        if beta.ndim != 2 or beta.shape[0] != beta.shape[1]:
            raise ValueError("beta must be a square matrix")
        if not np.allclose(beta, beta.T, rtol=0, atol=1e-14):
            raise ValueError("beta must be symmetric")
        if np.any(beta < 0):
            raise ValueError("beta must be nonnegative")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def constant_kernel(cls, n: int = 3, value: float = 1.0) -> "SmoluchowskiParams":
        return cls(np.full((n, n), float(value)))

    @property
    def N(self) -> int:
        return self.beta.shape[0]


def smoluchowski_rate(s, p: SmoluchowskiParams) -> np.ndarray:
    """Truncated coagulation rate R_i(s); ``s`` has the species on the last axis.

    R_i = 1/2 sum_{k+j=i} beta_kj s_k s_j - sum_j beta_ij s_i s_j
    """
    s = np.asarray(s, dtype=float)
    beta = p.beta
    n = p.N
    if s.shape[-1] != n:
        raise ValueError(f"expected {n} species on the last axis, got {s.shape[-1]}")
    loss = s * (s @ beta)
    gain = np.zeros_like(s)
    for i in range(2, n + 1):  # 1-based sizes; k + j = i with k, j >= 1
        for k in range(1, i):
            j = i - k
            gain[..., i - 1] += 0.5 * beta[k - 1, j - 1] * s[..., k - 1] * s[..., j - 1]
    return gain - loss


@dataclass(frozen=True)
class MollifierConfig:
    delta: float = 0.1

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("mollifier radius must be positive")

    def kernel(self, r) -> np.ndarray:
        """Unnormalized bump exp(-1 / (1 - (r/delta)^2)) supported in r < delta."""
        q = np.asarray(r, dtype=float) / self.delta
        out = np.zeros_like(q)
        inside = q < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - q[inside] ** 2))
        return out

    @property
    def normalization(self) -> float:
        """c_delta such that c_delta * kernel integrates to one over R^2."""
        from scipy.integrate import quad

        radial, _ = quad(lambda r: self.kernel(np.array([r]))[0] * r, 0.0, self.delta)
        return 1.0 / (2.0 * np.pi * radial)


def nodal_mass_weights(mesh: Mesh) -> np.ndarray:
    """Lumped (row-sum) mass: each active element gives h^2/4 to its corners."""
    w = np.zeros(mesh.n_nodes)
    np.add.at(w, mesh.elements.ravel(), 0.25 * mesh.h * mesh.h)
    return w


def kernel_gradient(cfg: MollifierConfig, zx: np.ndarray, zy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cartesian derivatives of the unnormalized bump at offsets (zx, zy)."""
    r = np.hypot(zx, zy)
    q = r / cfg.delta
    dr = np.zeros_like(q)
    inside = (q < 1.0) & (r > 0)
    qi = q[inside]
    dr[inside] = np.exp(-1.0 / (1.0 - qi ** 2)) * (-2.0 * qi / (1.0 - qi ** 2) ** 2) / cfg.delta
    with np.errstate(invalid="ignore", divide="ignore"):
        ux = np.where(r > 0, zx / np.where(r > 0, r, 1.0), 0.0)
        uy = np.where(r > 0, zy / np.where(r > 0, r, 1.0), 0.0)
    return dr * ux, dr * uy


def _grid_sums(mesh: Mesh, values: np.ndarray, cfg: MollifierConfig):
    if mesh.h > cfg.delta / 2 + 1e-15:
        raise KernelUnresolved(f"h={mesh.h} exceeds delta/2={cfg.delta / 2}")
    npx = mesh.nx + 1
    r = int(np.floor(cfg.delta / mesh.h))
    offs = np.arange(-r, r + 1) * mesh.h
    zx, zy = offs[:, None] + 0 * offs[None, :], 0 * offs[:, None] + offs[None, :]
    w = nodal_mass_weights(mesh)
    weighted = np.zeros(npx * npx)
    mass = np.zeros(npx * npx)
    weighted[mesh.grid_ids] = w * values
    mass[mesh.grid_ids] = w
    # grid id = i + npx * j  ->  reshape (j, i) then transpose to (i, j)
    weighted = weighted.reshape(npx, npx).T
    mass = mass.reshape(npx, npx).T
    return weighted, mass, (zx, zy)


def smooth_field(mesh: Mesh, values: np.ndarray, cfg: MollifierConfig) -> np.ndarray:
    """Kernel average of nodal values on the full (nx+1)^2 grid.

    The field is zero-extended into holes and outside the unit square, and the
    average at each point is renormalized by the kernel mass over the mesh
    domain, so constants are reproduced everywhere.
    """
    weighted, mass, (zx, zy) = _grid_sums(mesh, values, cfg)
    kern = cfg.kernel(np.hypot(zx, zy))
    num = fftconvolve(weighted, kern, mode="same")
    den = fftconvolve(mass, kern, mode="same")
    # grid points farther than delta from the domain (deep inside large holes) stay NaN
    den[den < 1e-12 * den.max()] = np.nan
    return num / den


def mollified_gradient(f: FeFunction, cfg: MollifierConfig) -> np.ndarray:
    """Gradient of the kernel-smoothed field at every active node, shape (n, 2).

    The smoothed field is num/den (zero-extended data over renormalizing kernel
    mass), differentiated exactly by the quotient rule with the kernel gradient.
    Where the kernel ball lies inside the domain den is constant and this is
    the plain convolution with grad J, rescaled so the discrete first moment
    matches the discrete kernel mass.
    """
    mesh = f.mesh
    weighted, mass, (zx, zy) = _grid_sums(mesh, f.values, cfg)
    kern = cfg.kernel(np.hypot(zx, zy))
    kx, ky = kernel_gradient(cfg, zx, zy)
    # discrete moment correction: makes sum(-z * dK) equal sum(K) so affine data is exact
    scale = kern.sum() / -(zx * kx).sum()
    kx, ky = scale * kx, scale * ky
    num = fftconvolve(weighted, kern, mode="same")
    den = fftconvolve(mass, kern, mode="same")
    ij = mesh.node_grid()
    out = np.empty((mesh.n_nodes, 2))
    n_, d_ = num[ij[:, 0], ij[:, 1]], den[ij[:, 0], ij[:, 1]]
    for c, k in enumerate((kx, ky)):
        dn = fftconvolve(weighted, k, mode="same")[ij[:, 0], ij[:, 1]]
        dd = fftconvolve(mass, k, mode="same")[ij[:, 0], ij[:, 1]]
        out[:, c] = (dn * d_ - n_ * dd) / (d_ * d_)
    return out


def cutoff_function(mesh: Mesh, epsilon: float) -> FeFunction:
    """Boundary-layer cut-off min(1, dist(x, outer boundary) / epsilon)."""
    x = mesh.coords
    dist = np.min(np.concatenate([x, 1.0 - x], axis=1), axis=1)
    return FeFunction(mesh, np.minimum(1.0, np.maximum(dist, 0.0) / epsilon))


@dataclass(frozen=True)
class PhysicalParams:
    """Oscillating coefficients of the micro problem, all as cell fields."""

    kappa: TensorFieldSpec = field(default_factory=lambda: iso(trig(2.0, 1.0)))
    tau: TensorFieldSpec = field(default_factory=lambda: iso(0.1))
    d: tuple[TensorFieldSpec, ...] = field(default_factory=lambda: (iso(trig(1.5, 0.5)),) * 3)
    rho: tuple[TensorFieldSpec, ...] = field(default_factory=lambda: (iso(0.1),) * 3)
    g0: ScalarFieldSpec = field(default_factory=lambda: constant(1.0))
    a: tuple[ScalarFieldSpec, ...] = field(default_factory=lambda: (constant(1.0),) * 3)
    b: tuple[ScalarFieldSpec, ...] = field(default_factory=lambda: (constant(1.0),) * 3)
    smoluchowski: SmoluchowskiParams = field(
        default_factory=lambda: SmoluchowskiParams.constant_kernel(3))
    mollifier: MollifierConfig = field(default_factory=MollifierConfig)

    def __post_init__(self):
        n = self.N
        for name in ("d", "rho", "a", "b"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} must have one entry per species (N={n})")
        self.kappa.check_elliptic("kappa")
        for i, di in enumerate(self.d):
            di.check_elliptic(f"d[{i + 1}]")
        for name, spec in [("tau", self.tau), ("g0", self.g0)] + \
                [(f"rho[{i + 1}]", s) for i, s in enumerate(self.rho)] + \
                [(f"a[{i + 1}]", s) for i, s in enumerate(self.a)] + \
                [(f"b[{i + 1}]", s) for i, s in enumerate(self.b)]:
            if spec.bounds[0] < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def N(self) -> int:
        return self.smoluchowski.N

    def decoupled(self, **overrides) -> "PhysicalParams":
        """Copy with Soret/Dufour, heat loss, deposition and coagulation off."""
        n = self.N
        kw = dict(kappa=self.kappa, d=self.d, tau=iso(0.0), rho=(iso(0.0),) * n,
                  g0=constant(0.0), a=(constant(0.0),) * n, b=(constant(0.0),) * n,
                  smoluchowski=SmoluchowskiParams(np.zeros((n, n))), mollifier=self.mollifier)
        kw.update(overrides)
        return PhysicalParams(**kw)
