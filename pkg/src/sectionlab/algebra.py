"""Discretized commutative Banach algebra C(T) on a finite grid.

Elements are complex grid functions with the sup norm; finite products of the
algebra carry the max-of-components norm.  The derivative tester probes a map
between such modules by central differences and classifies the result:
a map is "algebra-differentiable" here iff its Frechet derivative is
block-diagonal over grid points (couples no distinct base samples) and each
block is complex linear.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFinite, OutsideRadius
from .grid import BaseGrid

DEFAULT_FD_STEP = 1e-5
SERIES_TERM_TOL = 1e-14
SERIES_MAX_TERMS = 512


@dataclass(frozen=True)
class AlgebraElement:
    """A complex grid function f: T -> C."""

    grid: BaseGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=complex))
        if self.values.shape != (self.grid.size,):
            raise ValueError("values must have one entry per grid point")

    @staticmethod
    def constant(grid: BaseGrid, c: complex) -> "AlgebraElement":
        return AlgebraElement(grid, np.full(grid.size, c, dtype=complex))

    @staticmethod
    def one(grid: BaseGrid) -> "AlgebraElement":
        return AlgebraElement.constant(grid, 1.0)

    @staticmethod
    def from_function(grid: BaseGrid, f) -> "AlgebraElement":
        return AlgebraElement(grid, np.array([f(x) for x in grid.coords], dtype=complex))

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, AlgebraElement):
            if other.grid is not self.grid and other.grid != self.grid:
                raise ValueError("elements live on different grids")
            return other.values
        return np.asarray(other, dtype=complex)

    def __add__(self, other):
        return AlgebraElement(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return AlgebraElement(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return AlgebraElement(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other):
        return AlgebraElement(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return AlgebraElement(self.grid, -self.values)

    def conj(self):
        return AlgebraElement(self.grid, np.conj(self.values))

    def __call__(self, i: int) -> complex:
        return complex(self.values[i])


@dataclass(frozen=True)
class ModuleElement:
    """An element of the n-fold product module: n grid functions on one grid."""

    grid: BaseGrid
    components: np.ndarray = field(repr=False)  # shape (n, m)

    def __post_init__(self):
        comp = np.asarray(self.components, dtype=complex)
        if comp.ndim == 1:
            comp = comp[None, :]
        object.__setattr__(self, "components", comp)
        if comp.shape[1] != self.grid.size:
            raise ValueError("component length must match the grid")

    @staticmethod
    def from_elements(elements) -> "ModuleElement":
        grid = elements[0].grid
        return ModuleElement(grid, np.stack([e.values for e in elements]))

    @property
    def dim(self) -> int:
        return self.components.shape[0]

    def element(self, k: int) -> AlgebraElement:
        return AlgebraElement(self.grid, self.components[k])

    def __add__(self, other):
        return ModuleElement(self.grid, self.components + other.components)

    def __sub__(self, other):
        return ModuleElement(self.grid, self.components - other.components)

    def scale(self, f) -> "ModuleElement":
        """Module action: multiply every component by an AlgebraElement or scalar."""
        if isinstance(f, AlgebraElement):
            return ModuleElement(self.grid, self.components * f.values[None, :])
        return ModuleElement(self.grid, self.components * f)


def sup_norm(f: AlgebraElement) -> float:
    """Sup norm over the grid; submultiplicative with ||1|| = 1."""
    return float(np.max(np.abs(f.values)))


def module_norm(u: ModuleElement) -> float:
    """max_k of the component sup norms."""
    return float(np.max(np.abs(u.components)))


@dataclass(frozen=True)
class LorchDerivative:
    """Finite-difference Frechet derivative of a module map in the canonical basis.

    jacobian[k2, j2, k1, j1] is the response of output component k2 at grid
    point j2 to a real perturbation of input component k1 at grid point j1.
    diagonality_residual is the largest entry magnitude coupling j2 != j1
    (zero iff the derivative is algebra-linear on a finite grid);
    cr_residual is the deviation of each diagonal block from complex linearity.
    """

    jacobian: np.ndarray  # (n_out, m, n_in, m) complex
    diagonality_residual: float
    cr_residual: float

    @property
    def matrix(self) -> np.ndarray:
        n_out, m, n_in, _ = self.jacobian.shape
        return self.jacobian.reshape(n_out * m, n_in * m)


def lorch_derivative(F, p: ModuleElement, h: float = DEFAULT_FD_STEP) -> LorchDerivative:
    """Probe F near p with central differences in every canonical direction.

    F maps ModuleElement -> ModuleElement on the same grid.  Each basis
    direction is probed with +-h and +-ih; complex linearity of the derivative
    is equivalent to D(i e) = i D(e) for every basis vector e.
    """
    m = p.grid.size
    n_in = p.dim

    def apply(q: np.ndarray) -> np.ndarray:
        out = F(ModuleElement(p.grid, q)).components
        if not np.all(np.isfinite(out)):
            raise NonFinite("map produced non-finite values near the probe point")
        return out

    base = p.components
    d_re = np.empty((0,))
    cols_re = []
    cols_im = []
    for k in range(n_in):
        for j in range(m):
            e = np.zeros_like(base)
            e[k, j] = 1.0
            d_re = (apply(base + h * e) - apply(base - h * e)) / (2.0 * h)
            d_im = (apply(base + 1j * h * e) - apply(base - 1j * h * e)) / (2.0 * h)
            cols_re.append(d_re)
            cols_im.append(d_im)

    n_out = d_re.shape[0]
    # jac_re[k2, j2, k1, j1]; column order above is (k1, j1) row-major
    jac_re = np.stack(cols_re, axis=-1).reshape(n_out, m, n_in, m)
    jac_im = np.stack(cols_im, axis=-1).reshape(n_out, m, n_in, m)

    off = ~np.eye(m, dtype=bool)  # j2 != j1
    mask = off[None, :, None, :]
    diag_res = max(
        float(np.max(np.abs(jac_re)[np.broadcast_to(mask, jac_re.shape)], initial=0.0)),
        float(np.max(np.abs(jac_im)[np.broadcast_to(mask, jac_im.shape)], initial=0.0)),
    )
    cr_res = float(np.max(np.abs(jac_im - 1j * jac_re)))
    return LorchDerivative(jac_re, diag_res, cr_res)


@dataclass(frozen=True)
class PowerSeries:
    """sum_n a_n (x - c)^n with finitely many stored coefficients."""

    coefficients: tuple  # of AlgebraElement
    center: AlgebraElement

    def __post_init__(self):
        if len(self.coefficients) == 0:
            raise ValueError("coefficient list must be nonempty")

    @staticmethod
    def from_scalars(grid: BaseGrid, coeffs, center: complex = 0.0) -> "PowerSeries":
        return PowerSeries(
            tuple(AlgebraElement.constant(grid, c) for c in coeffs),
            AlgebraElement.constant(grid, center),
        )


def convergence_radius(s: PowerSeries, window: int = 8) -> float:
    """Windowed-min proxy for liminf ||a_n||^(-1/n).

    The true liminf needs the whole tail; with finite data we take the min of
    ||a_n||^(-1/n) over the last `window` stored indices (n >= 1).  Zero
    coefficients contribute +inf.
    """
    n_coeffs = len(s.coefficients)
    if n_coeffs <= window:
        window = n_coeffs - 1
    if window < 1:
        return float("inf")
    lo = max(1, n_coeffs - window)
    vals = []
    for n in range(lo, n_coeffs):
        a = sup_norm(s.coefficients[n])
        vals.append(float("inf") if a == 0.0 else a ** (-1.0 / n))
    return min(vals)


@dataclass(frozen=True)
class SeriesValue:
    """Truncated series sum with its reported geometric tail bound."""

    value: AlgebraElement
    tail_bound: float
    n_terms: int


def power_series_eval(
    s: PowerSeries,
    x: AlgebraElement,
    term_tol: float = SERIES_TERM_TOL,
    max_terms: int = SERIES_MAX_TERMS,
) -> SeriesValue:
    """Evaluate the series at x, requiring ||x - c|| strictly inside the radius.

    Terms accumulate with a running power of (x - c); summation stops once the
    term-norm bound drops below term_tol or max_terms is reached, whichever is
    first.  The tail is bounded by the geometric estimate q^(N+1) / (1 - q)
    with q = ||x - c|| / radius.
    """
    d = x - s.center
    dn = sup_norm(d)
    if len(s.coefficients) == 1:
        return SeriesValue(s.coefficients[0], 0.0, 1)

    radius = convergence_radius(s)
    q = dn / radius if np.isfinite(radius) else 0.0
    if q >= 1.0:
        raise OutsideRadius(f"||x - c|| = {dn:.6g} >= radius estimate {radius:.6g}")

    total = np.zeros(x.grid.size, dtype=complex)
    power = np.ones(x.grid.size, dtype=complex)  # (x - c)^n
    power_norm = 1.0
    n_used = 0
    stopped_by_tol = False
    for n, a in enumerate(s.coefficients):
        if n >= max_terms:
            break
        term_bound = sup_norm(a) * power_norm
        if n > 0 and term_bound < term_tol:
            stopped_by_tol = True
            break
        total = total + a.values * power
        power = power * d.values
        power_norm *= dn
        n_used = n + 1

    if stopped_by_tol:
        tail = term_tol * (q / (1.0 - q)) if q < 1.0 else float("inf")
    elif n_used >= len(s.coefficients):
        tail = (q ** n_used) / (1.0 - q) if 0.0 < q < 1.0 else 0.0
    else:
        tail = sup_norm(s.coefficients[n_used]) * power_norm / (1.0 - q)
    return SeriesValue(AlgebraElement(x.grid, total), float(tail), n_used)


def lift_linear_map(A: np.ndarray):
    """Pointwise lift of a constant linear map: (A~ u)(t) := A(u(t)).

    Returns a module map suitable for lorch_derivative; its derivative is the
    block-diagonal lift of A exactly.
    """
    A = np.asarray(A, dtype=complex)

    def lifted(u: ModuleElement) -> ModuleElement:
        return ModuleElement(u.grid, A @ u.components)

    return lifted
