"""Complex-analytic numerical kernels.

Cauchy-integral derivatives on circular contours (trapezoid rule, spectrally
accurate for analytic integrands), Cauchy-Riemann defect sampling, derivative
and Taylor-remainder bounds for holomorphic maps of a ball into a ball, and
parameter-continuity moduli for fiberwise-holomorphic families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundViolation, NonFinite, PreconditionViolation
from .grid import BaseGrid

DEFAULT_NODES = 64
CR_FD_STEP = 1e-5


@dataclass(frozen=True)
class DiscDomain:
    """A polydisk probing domain: center, per-coordinate radius, node count."""

    center: np.ndarray
    radius: float
    nodes: int = DEFAULT_NODES

    def __post_init__(self):
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=complex)))
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.nodes < 16:
            raise ValueError("need at least 16 quadrature nodes")

    @property
    def dim(self) -> int:
        return len(self.center)


def cauchy_coeff(f, center, radius: float, multi_index, nodes: int = DEFAULT_NODES):
    """Derivative d^gamma f(center) by iterated Cauchy integrals.

    f maps a (n,) complex vector to a complex scalar or array; multi_index is
    a length-n tuple of non-negative integers (orders 1 and 2 are what the
    callers need, but any order works).  Each variable with gamma_j > 0 gets
    its own circular contour of the given radius:

        f^(k)(c) = k! / (2 pi r^k) * integral e^{-i k theta} f(c + r e^{i theta}) dtheta

    evaluated with the N-node trapezoid rule.
    """
    center = np.atleast_1d(np.asarray(center, dtype=complex))
    multi_index = tuple(int(g) for g in multi_index)
    if len(multi_index) != len(center):
        raise ValueError("multi_index length must match the dimension")
    active = [j for j, g in enumerate(multi_index) if g > 0]
    if not active:
        out = np.asarray(f(center))
        if not np.all(np.isfinite(out)):
            raise NonFinite("non-finite value at the contour center")
        return out if out.ndim else complex(out)

    j = active[0]
    k = multi_index[j]
    rest = list(multi_index)
    rest[j] = 0
    theta = 2.0 * np.pi * np.arange(nodes) / nodes
    phases = np.exp(1j * theta)
    weights = np.exp(-1j * k * theta)

    acc = None
    for w, ph in zip(weights, phases):
        c = center.copy()
        c[j] += radius * ph
        val = cauchy_coeff(f, c, radius, tuple(rest), nodes)
        val = np.asarray(val)
        acc = w * val if acc is None else acc + w * val
    out = acc * (math.factorial(k) / (nodes * radius ** k))
    if not np.all(np.isfinite(out)):
        raise NonFinite("non-finite Cauchy integral")
    return out if out.ndim else complex(out)


def cr_defect(f, z, h: float = CR_FD_STEP) -> float:
    """Cauchy-Riemann defect max_j ||d f/d x_j + i d f/d y_j|| at one point."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    worst = 0.0
    for j in range(len(z)):
        e = np.zeros_like(z)
        e[j] = 1.0
        dx = (np.asarray(f(z + h * e)) - np.asarray(f(z - h * e))) / (2.0 * h)
        dy = (np.asarray(f(z + 1j * h * e)) - np.asarray(f(z - 1j * h * e))) / (2.0 * h)
        d = dx + 1j * dy
        if not np.all(np.isfinite(d)):
            raise NonFinite("non-finite finite-difference stencil")
        worst = max(worst, float(np.max(np.abs(d))))
    return worst


def sample_polydisk(domain: DiscDomain, samples: int, rng) -> np.ndarray:
    """Uniform samples of the open polydisk, shape (samples, n)."""
    n = domain.dim
    r = domain.radius * np.sqrt(rng.uniform(0.0, 1.0, size=(samples, n)))
    th = rng.uniform(0.0, 2.0 * np.pi, size=(samples, n))
    return domain.center[None, :] + r * np.exp(1j * th)


def holomorphy_residual(f, domain: DiscDomain, samples: int = 200, rng=None, h: float = CR_FD_STEP) -> float:
    """Max Cauchy-Riemann defect of f over sampled points of the domain."""
    rng = np.random.default_rng(0) if rng is None else rng
    pts = sample_polydisk(DiscDomain(domain.center, domain.radius * 0.98, domain.nodes), samples, rng)
    return max(cr_defect(f, z, h) for z in pts)


@dataclass(frozen=True)
class SchwarzReport:
    """Certified derivative and Taylor-remainder bounds at the origin."""

    derivative_norm: float
    derivative_bound: float
    max_remainder: float
    remainder_bound_factor: float  # the 16 n^3 / eps^2 coefficient
    probes: int
    jacobian: np.ndarray = field(repr=False)


def schwarz_bounds(f, eps: float, n: int, probes: int = 32, rng=None,
                   nodes: int = DEFAULT_NODES, precondition_samples: int = 128) -> SchwarzReport:
    """Bounds for a holomorphic map of the eps-ball into the unit ball.

    For such a map the derivative at 0 has operator norm at most 4 n^2 / eps,
    and for ||z|| <= eps/4 the first-order Taylor remainder is at most
    (16 n^3 / eps^2) ||z||^2 (Euclidean norms throughout).  The precondition
    (image inside the unit ball) is checked by sampling; the derivative comes
    from Cauchy integrals on contours of radius eps/4.

    Raises PreconditionViolation or BoundViolation with a witness.
    """
    rng = np.random.default_rng(0) if rng is None else rng

    # Precondition: f maps the eps-ball into the unit ball (sampled).
    ball = DiscDomain(np.zeros(n), eps / np.sqrt(n), nodes)  # polydisk inside the eps-ball
    pts = sample_polydisk(ball, precondition_samples, rng)
    # also probe near the sphere of radius eps along random directions
    dirs = rng.normal(size=(precondition_samples, n)) + 1j * rng.normal(size=(precondition_samples, n))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    radii = eps * rng.uniform(0.5, 0.999, size=(precondition_samples, 1))
    pts = np.vstack([pts, radii * dirs])
    for z in pts:
        w = np.atleast_1d(np.asarray(f(z)))
        if not np.all(np.isfinite(w)):
            raise NonFinite("f not finite on the eps-ball")
        if np.linalg.norm(w) >= 1.0:
            raise PreconditionViolation(f"f does not map the eps-ball into the unit ball at z={z}")

    # Derivative at 0 via Cauchy integrals, contour radius eps/4.
    jac = np.empty((n, n), dtype=complex)
    for j in range(n):
        gamma = [0] * n
        gamma[j] = 1
        col = cauchy_coeff(f, np.zeros(n, dtype=complex), eps / 4.0, tuple(gamma), nodes)
        jac[:, j] = np.atleast_1d(col)
    dnorm = float(np.linalg.svd(jac, compute_uv=False)[0])
    dbound = 4.0 * n * n / eps
    if dnorm > dbound:
        raise BoundViolation(jac, f"||Df(0)|| = {dnorm:.6g} exceeds {dbound:.6g}")

    # Remainder bound at ||z|| <= eps/4.
    f0 = np.atleast_1d(np.asarray(f(np.zeros(n, dtype=complex))))
    factor = 16.0 * n ** 3 / eps ** 2
    max_rem = 0.0
    dirs = rng.normal(size=(probes, n)) + 1j * rng.normal(size=(probes, n))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    radii = (eps / 4.0) * rng.uniform(0.05, 1.0, size=(probes, 1))
    for z in radii * dirs:
        rem = float(np.linalg.norm(np.atleast_1d(np.asarray(f(z))) - f0 - jac @ z))
        bound = factor * float(np.linalg.norm(z)) ** 2
        if rem > bound:
            raise BoundViolation(z, f"Taylor remainder {rem:.6g} exceeds {bound:.6g} at ||z||={np.linalg.norm(z):.3g}")
        max_rem = max(max_rem, rem)
    return SchwarzReport(dnorm, dbound, max_rem, factor, probes, jac)


@dataclass(frozen=True)
class ContinuityReport:
    """Parameter-continuity modulus of a derivative across adjacent base samples."""

    modulus: float
    mesh: float
    order: tuple
    worst_pair: tuple | None


def param_continuity(f, grid: BaseGrid, order, z_samples, radius: float,
                     nodes: int = DEFAULT_NODES, valid=None) -> ContinuityReport:
    """Max over adjacent (t, t') and sampled z of |d^gamma f(z,t) - d^gamma f(z,t')|.

    f is called as f(z, t_index); it must be holomorphic in z on the contour
    disks wherever it is probed.  The optional predicate valid(z, t) restricts
    probing to the open set where f is honestly defined (the continuity claim
    only speaks there); a pair is compared only when both its base points are
    valid for the sample.  The modulus is reported together with the grid mesh
    so refinement studies can compare like with like.
    """
    order = tuple(order)
    worst = 0.0
    worst_pair = None
    z_samples = [np.atleast_1d(np.asarray(z, dtype=complex)) for z in z_samples]
    pairs = grid.adjacent_pairs()
    for z in z_samples:
        vals = {}
        for (i, j) in pairs:
            if valid is not None and not (valid(z, i) and valid(z, j)):
                continue
            for t in (i, j):
                if t not in vals:
                    vals[t] = np.asarray(cauchy_coeff(lambda w, tt=t: f(w, tt), z, radius, order, nodes))
            d = float(np.max(np.abs(vals[i] - vals[j])))
            if d > worst:
                worst, worst_pair = d, (i, j, complex(z[0]))
    return ContinuityReport(worst, grid.mesh, order, worst_pair)
