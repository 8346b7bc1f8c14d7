"""Complex-analytic kernels: Cauchy derivatives, residuals, holomorphic bounds."""

import numpy as np
import pytest

from sectionlab.analysis import (
    DiscDomain,
    cauchy_coeff,
    cr_defect,
    holomorphy_residual,
    param_continuity,
    schwarz_bounds,
)
from sectionlab.errors import PreconditionViolation
from sectionlab.grid import BaseGrid


def test_cauchy_linear():
    d = cauchy_coeff(lambda z: z[0], np.array([0.0]), 0.3, (1,))
    assert abs(d - 1.0) <= 1e-13


def test_cauchy_cubic():
    f = lambda z: z[0] ** 3
    assert abs(cauchy_coeff(f, np.array([0.0]), 0.5, (1,))) <= 1e-13
    assert abs(cauchy_coeff(f, np.array([0.0]), 0.5, (2,))) <= 1e-13
    d = cauchy_coeff(f, np.array([0.2 + 0j]), 0.1, (1,))
    assert abs(d - 3 * 0.2 ** 2) <= 1e-12  # polynomial calculus oracle: 0.12


def test_cauchy_second_derivative():
    f = lambda z: np.exp(z[0])
    d2 = cauchy_coeff(f, np.array([0.1 + 0.2j]), 0.2, (2,))
    assert abs(d2 - np.exp(0.1 + 0.2j)) <= 1e-12


def test_cauchy_mixed_two_vars():
    f = lambda z: z[0] ** 2 * z[1]
    d = cauchy_coeff(f, np.array([0.3, 0.4 + 0.1j]), 0.15, (1, 1))
    assert abs(d - 2 * 0.3 * 1.0) <= 1e-11


def test_cauchy_matches_fixture_transition(twisted):
    tr = twisted.atlas.transition("c1", "c2")
    t = 5
    z = np.array([0.6 - 0.2j])
    d = cauchy_coeff(lambda w: tr.value(np.atleast_2d(w), np.array([t]))[0, 0], z, 0.2, (1,))
    assert abs(d - tr.d1(z, t)[0, 0]) <= 1e-10  # closed-form oracle


def test_cauchy_node_doubling_stable(twisted):
    tr = twisted.atlas.transition("c1", "c2")
    z = np.array([0.7 + 0.1j])
    f = lambda w: tr.value(np.atleast_2d(w), np.array([3]))[0, 0]
    d64 = cauchy_coeff(f, z, 0.2, (1,), nodes=64)
    d128 = cauchy_coeff(f, z, 0.2, (1,), nodes=128)
    assert abs(d64 - d128) <= 1e-12


def test_holomorphy_residual_entire():
    dom = DiscDomain(np.zeros(1), 0.8)
    res = holomorphy_residual(lambda z: z[0] ** 2, dom, rng=np.random.default_rng(1))
    assert res <= 1e-8


def test_holomorphy_residual_conjugate():
    dom = DiscDomain(np.zeros(1), 0.8)
    res = holomorphy_residual(lambda z: np.conj(z[0]), dom, rng=np.random.default_rng(2))
    assert res == pytest.approx(2.0, abs=1e-9)  # defect of conjugation is exactly 2


def test_holomorphy_residual_modulus_squared():
    dom = DiscDomain(np.array([0.5 + 0.0j]), 0.2)
    res = holomorphy_residual(lambda z: abs(z[0]) ** 2, dom, rng=np.random.default_rng(3))
    assert res > 0.1  # |z|^2 has defect 2|z| away from 0


def test_cr_defect_agrees_with_cauchy():
    rng = np.random.default_rng(4)
    for _ in range(5):
        c = rng.normal(size=3) + 1j * rng.normal(size=3)
        f = lambda z: c[0] + c[1] * z[0] + c[2] * z[0] ** 2
        z = 0.3 * (rng.normal(size=1) + 1j * rng.normal(size=1))
        fd = (np.asarray(f(z + 1e-6)) - np.asarray(f(z - 1e-6))) / 2e-6
        cc = cauchy_coeff(f, z, 0.1, (1,))
        assert abs(fd - cc) <= 1e-6
        assert cr_defect(f, z) <= 1e-8


# ---------------------------------------------------------------------------
# derivative/remainder bounds for ball-to-ball holomorphic maps

def test_schwarz_linear_map():
    eps = 0.3
    rep = schwarz_bounds(lambda z: z / eps * 0.99, eps, 1, rng=np.random.default_rng(5))
    assert rep.derivative_norm == pytest.approx(0.99 / eps, rel=1e-10)
    assert rep.derivative_norm <= 4.0 / eps


def test_schwarz_quadratic_remainder():
    eps = 0.4
    rep = schwarz_bounds(lambda z: (z / eps) ** 2 * 0.99, eps, 1, rng=np.random.default_rng(6))
    # exact: Df(0) = 0 and |f(z)| = 0.99 |z/eps|^2 <= 0.99/16 at |z| = eps/4,
    # against the bound factor 16/eps^2 * |z|^2 = 1 there
    assert rep.derivative_norm <= 1e-10
    assert rep.max_remainder <= 0.99 / 16 + 1e-12


def test_schwarz_zero_map():
    rep = schwarz_bounds(lambda z: 0.0 * z, 0.5, 1, rng=np.random.default_rng(7))
    assert rep.derivative_norm == 0.0
    assert rep.max_remainder == 0.0


def test_schwarz_precondition_violation():
    with pytest.raises(PreconditionViolation):
        schwarz_bounds(lambda z: z * 0 + 2.0, 0.5, 1, rng=np.random.default_rng(8))


def test_schwarz_never_flags_valid_maps():
    """Randomized family: scaled polynomials mapping the eps-ball into the unit
    ball can never violate either bound (the Cauchy estimates force them)."""
    rng = np.random.default_rng(9)
    for _ in range(100):
        eps = float(rng.uniform(0.1, 0.9))
        deg = int(rng.integers(1, 5))
        coeffs = rng.normal(size=deg + 1) + 1j * rng.normal(size=deg + 1)
        theta = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        ring = eps * np.exp(1j * theta)
        peak = np.max(np.abs(np.polyval(coeffs, ring)))
        coeffs = coeffs * (0.9 / peak)
        f = lambda z: np.atleast_1d(np.polyval(coeffs, z[0]))
        schwarz_bounds(f, eps, 1, probes=8, rng=rng, precondition_samples=32)


# ---------------------------------------------------------------------------
# parameter continuity

def test_param_continuity_t_independent():
    grid = BaseGrid.circle(8)
    rep = param_continuity(lambda z, t: z[0] ** 2, grid, (1,),
                           [np.array([0.3 + 0.1j])], 0.1)
    assert rep.modulus <= 1e-13


def test_param_continuity_shrinks_for_lipschitz_twist():
    def modulus(n):
        grid = BaseGrid.circle(n)
        a = np.exp(1j * 0.9 * np.sin(grid.coords))

        def f(z, t):
            return a[t] / z[0]

        return param_continuity(f, grid, (1,), [np.array([0.6 + 0.1j])], 0.1).modulus

    m16, m32 = modulus(16), modulus(32)
    assert m32 <= 0.6 * m16  # ~linear in the mesh


def test_param_continuity_detects_jump():
    def modulus(n):
        grid = BaseGrid.circle(n)
        a = np.where(grid.coords < np.pi, 1.0, np.exp(0.9j))

        def f(z, t):
            return a[t] / z[0]

        return param_continuity(f, grid, (1,), [np.array([0.6 + 0.1j])], 0.1).modulus

    m16, m32 = modulus(16), modulus(32)
    assert m32 >= 0.9 * m16  # stays bounded away from zero under refinement
    assert m16 > 0.5
