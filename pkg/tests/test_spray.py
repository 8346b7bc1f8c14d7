"""Spray layer: transformed coefficients, flows, inverse, constants."""

import numpy as np
import pytest

from sectionlab.errors import DomainEscape, OutsideOverlap
from sectionlab.family import AffineTransition, Atlas, Chart
from sectionlab.fixtures import P1_RHO
from sectionlab.grid import BaseGrid
from sectionlab.spray import (
    SprayContext,
    Weighting,
    barycenter_weighting,
    christoffel,
    dirac_weighting,
    estimate_exp_constants,
    exp_map,
    inverse_exp,
    picard_exp,
    random_weightings,
    revalidate_exp_constants,
    spray_field,
)


@pytest.fixture(scope="module")
def mixed_ctx(twisted_bumps):
    cids = twisted_bumps.atlas.chart_ids
    w = barycenter_weighting(cids, {"c1", "c2"})
    return SprayContext(twisted_bumps, ("c1", "c2"), "c2", 3, w)


@pytest.fixture(scope="module")
def foreign_ctx(twisted_bumps):
    # all weight on c1, displayed in c2: genuinely curved display
    cids = twisted_bumps.atlas.chart_ids
    w = dirac_weighting(cids, {"c1", "c2"}, "c1")
    return SprayContext(twisted_bumps, ("c1", "c2"), "c2", 3, w)


@pytest.fixture(scope="module")
def trivial_ctx(twisted_bumps):
    cids = twisted_bumps.atlas.chart_ids
    w = dirac_weighting(cids, {"c1", "c2"}, "c2")
    return SprayContext(twisted_bumps, ("c1", "c2"), "c2", 3, w)


# ---------------------------------------------------------------------------
# transformed coefficients

def fd_coefficients(atlas, phi, psi, z0, t, h=1e-5):
    """Independent oracle: the displayed-coefficient formula evaluated with
    finite-difference first and second derivatives of the raw transitions."""
    to_phi = atlas.transition(psi, phi)
    to_psi = atlas.transition(phi, psi)

    def tp(z):
        return to_phi.value(np.array([[z]]), np.array([t]))[0, 0]

    def tq(w):
        return to_psi.value(np.array([[w]]), np.array([t]))[0, 0]

    A = (tp(z0 + h) - tp(z0 - h)) / (2 * h)
    w0 = tp(z0)
    H = (tq(w0 + h) - 2 * tq(w0) + tq(w0 - h)) / h ** 2
    return -H * A * A


def test_christoffel_same_chart_zero(twisted):
    G = christoffel(twisted.atlas, "c2", "c2", np.array([0.6]), 3)
    assert np.all(G == 0.0)


def test_christoffel_affine_zero():
    grid = BaseGrid.circle(8)
    full = grid.full_domain()
    a = np.full(8, 0.5 + 0.2j)
    b = np.full(8, 0.1 - 0.3j)
    atlas = Atlas(grid, [Chart("a", 1, full), Chart("b", 1, full)],
                  {("a", "b"): AffineTransition(a, b),
                   ("b", "a"): AffineTransition(1.0 / a, -b / a)})
    G = christoffel(atlas, "a", "b", np.array([0.3 + 0.1j]), 2)
    assert np.max(np.abs(G)) <= 1e-12


def test_christoffel_inversion_closed_form(twisted):
    # symbolic oracle: for the transition w = a/z the displayed coefficient is -2/z
    rng = np.random.default_rng(50)
    for _ in range(25):
        t = int(rng.integers(0, 16))
        z = rng.uniform(0.5, 0.9) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        G = christoffel(twisted.atlas, "c1", "c2", np.array([z]), t)
        assert abs(G[0, 0, 0] - (-2.0 / z)) <= 1e-9
        # cross-check against the finite-difference oracle
        fd = fd_coefficients(twisted.atlas, "c1", "c2", z, t)
        assert abs(G[0, 0, 0] - fd) <= 1e-4


def test_christoffel_symmetry_random(twisted):
    rng = np.random.default_rng(51)
    for _ in range(10):
        z = rng.uniform(0.5, 0.9) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        G = christoffel(twisted.atlas, "c1", "c2", np.array([z]), 1)
        assert np.max(np.abs(G - np.swapaxes(G, 1, 2))) == 0.0


def test_christoffel_outside_overlap(twisted):
    with pytest.raises(OutsideOverlap):
        christoffel(twisted.atlas, "c1", "c2", np.array([1e-14]), 0)


def test_christoffel_numeric_fallback(twisted):
    # a transition without closed forms must still produce the coefficients
    from sectionlab.family import Transition

    a_vals = np.exp(1j * 0.9 * np.sin(twisted.atlas.grid.coords)) / P1_RHO ** 2

    class OpaqueInversion(Transition):
        dim = 1

        def value(self, z, ti):
            z0 = np.asarray(z, dtype=complex)[..., 0]
            return (a_vals[ti] / z0)[..., None]

        def defined(self, z, ti):
            return np.abs(np.asarray(z)[..., 0]) > 1e-12

        def contour_radius(self, z, ti):
            return 0.3 * float(np.abs(np.asarray(z)[..., 0]))

    grid = twisted.atlas.grid
    full = grid.full_domain()
    atlas = Atlas(grid, [Chart("c1", 1, full), Chart("c2", 1, full)],
                  {("c1", "c2"): OpaqueInversion(), ("c2", "c1"): OpaqueInversion()})
    z = 0.7 + 0.1j
    G = christoffel(atlas, "c1", "c2", np.array([z]), 4)
    assert abs(G[0, 0, 0] - (-2.0 / z)) <= 1e-8


# ---------------------------------------------------------------------------
# field and flow

def test_field_trivial_weighting(trivial_ctx):
    dzd, dz = spray_field(trivial_ctx, np.array([0.1 + 0.05j]), np.array([0.6]))
    assert np.all(dzd == 0.0)
    assert np.allclose(dz, [0.1 + 0.05j])


def test_field_zero_velocity(mixed_ctx):
    dzd, dz = spray_field(mixed_ctx, np.array([0.0j]), np.array([0.6]))
    assert np.all(dzd == 0.0) and np.all(dz == 0.0)


def test_field_quadratic_scaling(foreign_ctx):
    rng = np.random.default_rng(52)
    for _ in range(10):
        zd = np.array([0.05 * (rng.normal() + 1j * rng.normal())])
        z = np.array([rng.uniform(0.55, 0.85) * np.exp(1j * rng.uniform(0, 2 * np.pi))])
        lam = complex(rng.normal(), rng.normal())
        d1, _ = spray_field(foreign_ctx, zd, z)
        d2, dz2 = spray_field(foreign_ctx, lam * zd, z)
        assert np.max(np.abs(d2 - lam ** 2 * d1)) <= 1e-12 * max(1.0, abs(lam) ** 2)
        assert np.allclose(dz2, lam * zd)


def test_exp_rest_point(mixed_ctx):
    ed, e = exp_map(mixed_ctx, np.array([0.0j]), np.array([0.62 + 0.1j]))
    assert np.all(ed == 0.0)
    assert np.allclose(e, [0.62 + 0.1j])


def test_exp_velocity_derivative_is_identity(mixed_ctx):
    h = 1e-5
    z = np.array([0.6 + 0.05j])
    _, ep = exp_map(mixed_ctx, np.array([h + 0j]), z)
    _, em = exp_map(mixed_ctx, np.array([-h + 0j]), z)
    col = (ep - em) / (2 * h)
    assert abs(col[0] - 1.0) <= 1e-6


def test_exp_trivial_weighting_straight(trivial_ctx):
    z = np.array([0.6 - 0.1j])
    zd = np.array([0.07 + 0.02j])
    ed, e = exp_map(trivial_ctx, zd, z)
    assert np.max(np.abs(e - (z + zd))) <= 1e-12
    assert np.max(np.abs(ed - zd)) <= 1e-12


def test_exp_affine_reparameterization(foreign_ctx):
    # flow with half speed, sampled at double time, matches the full-speed path
    z = np.array([0.65 + 0.05j])
    zd = np.array([0.04 - 0.02j])
    _, _, path_full = exp_map(foreign_ctx, zd, z, steps=128, want_path=True)
    _, _, path_half = exp_map(foreign_ctx, 0.5 * zd, z, steps=64, want_path=True)
    for j in range(0, 65, 8):
        pos_half = path_half[j, 1]
        pos_full = path_full[j, 1]  # s = j/128 = half of j/64
        assert np.max(np.abs(pos_half - pos_full)) <= 1e-8
        vel_half = path_half[j, 0]
        vel_full = path_full[j, 0]
        assert np.max(np.abs(vel_half - 0.5 * vel_full)) <= 1e-8


def test_exp_domain_escape(foreign_ctx):
    with pytest.raises(DomainEscape):
        exp_map(foreign_ctx, np.array([0.5 + 0j]), np.array([0.9 + 0j]))


def test_exp_fiber_holomorphy(foreign_ctx):
    # Cauchy-Riemann residual of zdot -> e(zdot): the flow is holomorphic in
    # its initial velocity
    z = np.array([0.66 + 0.03j])
    h = 1e-5
    zd = np.array([0.02 + 0.01j])

    def e_of(v):
        return exp_map(foreign_ctx, v, z)[1][0]

    dx = (e_of(zd + h) - e_of(zd - h)) / (2 * h)
    dy = (e_of(zd + 1j * h) - e_of(zd - 1j * h)) / (2 * h)
    assert abs(dx + 1j * dy) <= 1e-6


def test_exp_parameter_continuity(twisted_bumps):
    # e varies continuously across adjacent base samples
    cids = twisted_bumps.atlas.chart_ids
    w = dirac_weighting(cids, {"c1", "c2"}, "c1")
    z = np.array([0.66 + 0.02j])
    zd = np.array([0.03 - 0.01j])
    vals = []
    for t in (3, 4):
        ctx = SprayContext(twisted_bumps, ("c1", "c2"), "c2", t, w)
        vals.append(exp_map(ctx, zd, z)[1][0])
    twist_gap = abs(np.exp(1j * 0.9 * np.sin(twisted_bumps.atlas.grid.coords[3]))
                    - np.exp(1j * 0.9 * np.sin(twisted_bumps.atlas.grid.coords[4])))
    assert abs(vals[0] - vals[1]) <= 5.0 * twist_gap


# ---------------------------------------------------------------------------
# Picard oracle and inverse

def test_picard_fixed_point_of_zero_field(mixed_ctx):
    pd, pe, _ = picard_exp(mixed_ctx, np.array([0.0j]), np.array([0.6]))
    assert np.all(pd == 0.0)
    assert np.allclose(pe, [0.6])


def test_picard_agrees_with_rk4(foreign_ctx, mixed_ctx):
    rng = np.random.default_rng(53)
    for ctx in (foreign_ctx, mixed_ctx):
        for _ in range(15):
            z = np.array([rng.uniform(0.55, 0.8) * np.exp(1j * rng.uniform(0, 2 * np.pi))])
            zd = np.array([0.02 * (rng.normal() + 1j * rng.normal())])
            ed, e = exp_map(ctx, zd, z)
            pd, pe, _ = picard_exp(ctx, zd, z)
            assert np.max(np.abs(pe - e)) <= 1e-6
            assert np.max(np.abs(pd - ed)) <= 1e-6


def test_picard_contracts(foreign_ctx):
    _, _, diffs = picard_exp(foreign_ctx, np.array([0.03 + 0.01j]), np.array([0.65]))
    # once in the regime successive changes shrink by at least half
    started = False
    for a, b in zip(diffs[:-1], diffs[1:]):
        if a < 1e-13:
            break
        r = b / a
        if r <= 0.5:
            started = True
        elif started and b > 1e-13:
            assert r <= 0.5, f"contraction lost: ratio {r}"
    assert started


def test_inverse_at_base(mixed_ctx):
    zd, _ = inverse_exp(mixed_ctx, np.array([0.6 + 0.0j]), np.array([0.6 + 0.0j]))
    assert np.max(np.abs(zd)) <= 1e-13


def test_inverse_trivial_weighting_closed_form(trivial_ctx):
    z = np.array([0.6 + 0.1j])
    w = np.array([0.63 + 0.08j])
    zd, _ = inverse_exp(trivial_ctx, w, z)
    assert np.max(np.abs(zd - (w - z))) <= 1e-12


def test_inverse_roundtrips(foreign_ctx):
    rng = np.random.default_rng(54)
    for _ in range(20):
        z = np.array([rng.uniform(0.55, 0.8) * np.exp(1j * rng.uniform(0, 2 * np.pi))])
        zd = np.array([0.015 * (rng.normal() + 1j * rng.normal())])
        _, e = exp_map(foreign_ctx, zd, z)
        back, _ = inverse_exp(foreign_ctx, e, z)
        assert np.max(np.abs(back - zd)) <= 1e-9
        _, e2 = exp_map(foreign_ctx, back, z)
        assert np.max(np.abs(e2 - e)) <= 1e-9


def test_inverse_contraction_factor(foreign_ctx):
    z = np.array([0.65 + 0.02j])
    w = z + 0.02 * np.exp(0.7j)
    _, updates = inverse_exp(foreign_ctx, w, z)
    ratios = [b / a for a, b in zip(updates[:-1], updates[1:]) if a > 1e-12]
    assert ratios, "need at least two iterations to measure contraction"
    assert max(ratios) <= 0.5


# ---------------------------------------------------------------------------
# weightings and constants

def test_weighting_validation(twisted):
    cids = twisted.atlas.chart_ids
    with pytest.raises(ValueError):
        Weighting(tuple(cids), np.array([0.7, 0.7]), frozenset(cids))
    with pytest.raises(ValueError):
        Weighting(tuple(cids), np.array([1.0, 0.0]), frozenset({"c2"}))
    ws = random_weightings(cids, {"c1", "c2"}, 4, np.random.default_rng(55))
    for w in ws:
        assert np.all(w.values >= 0) and abs(w.values.sum() - 1) <= 1e-9


def test_exp_constants_trivial_context(open_weights):
    # single-chart model: the flow is the identity translation, so both
    # derivative bounds are exactly 1 before the 1.25 inflation
    ec = estimate_exp_constants(open_weights, {"c0"}, "c0",
                                rng=np.random.default_rng(56), n_points=6)
    assert ec.alpha0 == pytest.approx(1.25, abs=1e-6)
    assert ec.beta0 == pytest.approx(1.25, abs=1e-6)
    assert ec.delta0a > 0 and ec.delta0b > 0
    assert ec.delta0b == pytest.approx(ec.delta0a / (2 * ec.alpha0))


def test_exp_constants_positive_and_revalidate(twisted_bumps):
    from sectionlab.sections import exp_constants_for
    ec = exp_constants_for(twisted_bumps, frozenset({"c1", "c2"}), "c1", seed=23)
    assert min(ec.alpha0, ec.beta0, ec.delta0a, ec.delta0b) > 0.0
    rep = revalidate_exp_constants(twisted_bumps, {"c1", "c2"}, "c1", ec,
                                   rng=np.random.default_rng(57), n_points=8)
    assert rep["ok"], rep


def test_geodesic_naturality(twisted_bumps, foreign_ctx):
    """A trivial spray displayed in a foreign chart, pushed back to its own
    chart, must trace a straight line."""
    atlas = twisted_bumps.atlas
    rng = np.random.default_rng(58)
    tr = atlas.transition("c2", "c1")
    for _ in range(10):
        z = np.array([rng.uniform(0.55, 0.8) * np.exp(1j * rng.uniform(0, 2 * np.pi))])
        zd = np.array([0.05 * (rng.normal() + 1j * rng.normal())])
        try:
            _, _, path = exp_map(foreign_ctx, zd, z, want_path=True)
        except DomainEscape:
            continue
        pos = path[:, 1, :]
        vel = path[:, 0, :]
        T = np.full(len(pos), foreign_ctx.t)
        W = tr.value(pos, T)
        J = tr.d1(pos, T)
        Wd = np.einsum("bij,bj->bi", J, vel)
        s = np.linspace(0, 1, len(W))[:, None]
        line = W[0] + s * Wd[0]
        assert np.max(np.abs(W - line)) <= 1e-6
