"""Atlas layer: transfers, compact systems, bump systems, validation, fixtures."""

import numpy as np
import pytest

from sectionlab.errors import CoverageFailure, FixtureError, OutsideOverlap
from sectionlab.family import (
    Atlas,
    Chart,
    Point,
    atlas_validate,
    build_bump_system,
    build_compact_system,
    sample_overlap,
)
from sectionlab.fixtures import P1_RHO, describe_fixture, make_fixture
from sectionlab.grid import BaseGrid


def twist_factor(bundle, t):
    grid = bundle.atlas.grid
    amp = 0.9 if bundle.name.startswith("twisted") else 0.0
    return np.exp(1j * amp * np.sin(grid.coords[t]))


# ---------------------------------------------------------------------------
# transfer

def test_transfer_identity(twisted):
    p = Point("c1", [0.3 + 0.2j], 2)
    w = twisted.atlas.transfer(p, "c1")
    assert np.allclose(w, p.z)


def test_transfer_closed_form(twisted):
    # oracle: the fixture's transition is z -> e^{i theta(t)} / (rho^2 z)
    t = 4
    p = Point("c1", [0.8 + 0j], t)
    w = twisted.atlas.transfer(p, "c2")
    expected = twist_factor(twisted, t) / (P1_RHO ** 2 * 0.8)
    assert abs(w[0] - expected) <= 1e-12


def test_transfer_roundtrip_random(twisted):
    rng = np.random.default_rng(12)
    atlas = twisted.atlas
    count = 0
    while count < 100:
        t = int(rng.integers(0, 16))
        r = rng.uniform(0.5, 0.98)
        z = np.array([r * np.exp(1j * rng.uniform(0, 2 * np.pi))])
        p = Point("c1", z, t)
        if not atlas.contains(p, "c2"):
            continue
        back = atlas.transfer(Point("c2", atlas.transfer(p, "c2"), t), "c1")
        assert np.max(np.abs(back - z)) <= 1e-9
        count += 1


def test_transfer_outside_overlap(twisted):
    p = Point("c1", [0.1 + 0j], 0)  # |tau| = 1/(2.25*0.1) > 1
    with pytest.raises(OutsideOverlap):
        twisted.atlas.transfer(p, "c2")


def test_points_equal_equivalence(twisted):
    rng = np.random.default_rng(13)
    atlas = twisted.atlas
    for _ in range(40):
        t = int(rng.integers(0, 16))
        z = np.array([rng.uniform(0.5, 0.95) * np.exp(1j * rng.uniform(0, 2 * np.pi))])
        p = Point("c1", z, t)
        assert atlas.points_equal(p, p)
        if atlas.contains(p, "c2"):
            q = Point("c2", atlas.transfer(p, "c2"), t)
            assert atlas.points_equal(p, q)
            assert atlas.points_equal(q, p)
        r = Point("c1", z + 1e-6, t)
        assert not atlas.points_equal(p, r, tol=1e-9)


# ---------------------------------------------------------------------------
# compact systems

def test_compact_system_product(product):
    rng = np.random.default_rng(14)
    cs = build_compact_system(product.atlas, 0.1, samples_per_t=1000, rng=rng)
    assert 0.0 < cs.r0 < 1.0
    # two full-base charts: no base shrink
    full = product.atlas.grid.full_domain()
    assert cs.base_domains["c1"] == full
    assert cs.base_domains["c2"] == full


def test_compact_system_bad_margin(product):
    with pytest.raises(ValueError):
        build_compact_system(product.atlas, 0.3)


def test_compact_system_uncoverable():
    # adversarial atlas: drop one sphere patch; points near the removed pole
    # cannot sit inside any shrunken box
    grid = BaseGrid.circle(8)
    atlas = Atlas(grid, [Chart("c1", 1, grid.full_domain())], {}, name="broken")
    with pytest.raises(CoverageFailure) as exc:
        build_compact_system(atlas, 0.1, rng=np.random.default_rng(15))
    assert exc.value.witness is not None


# ---------------------------------------------------------------------------
# bump systems

def test_bump_radii_ordering(twisted_bumps):
    b = twisted_bumps
    assert 0 < b.r2 < b.r1 < b.r0 < 1
    assert b.r2 == pytest.approx(b.r0 * 0.9)
    assert b.r1 == pytest.approx(0.5 * (b.r0 + b.r2))


def test_bump_vanishes_outside_support(twisted_bumps):
    p = Point("c1", [twisted_bumps.r1 + 0.01], 3)
    assert twisted_bumps.rho("c1", p) == 0.0
    p2 = Point("c1", [0.99], 3)
    assert twisted_bumps.rho("c1", p2) == 0.0


def test_bump_positive_at_center(twisted_bumps):
    p = Point("c1", [0.0], 3)
    assert twisted_bumps.rho("c1", p) > 0.0


def test_bump_joint_positivity_sampled(twisted_bumps, twisted):
    rng = np.random.default_rng(16)
    for t in range(16):
        pts = twisted.atlas.sample_fiber_points(t, 32, rng)
        for p in pts:
            assert np.max(twisted_bumps.rho_all(p)) > 0.0


def test_bump_support_inside_compact_box(twisted_bumps, twisted):
    rng = np.random.default_rng(17)
    atlas = twisted.atlas
    for t in (0, 7, 13):
        for p in atlas.sample_fiber_points(t, 50, rng):
            w = twisted_bumps.rho_all(p)
            for k, cid in enumerate(atlas.chart_ids):
                if w[k] > 0:
                    assert np.max(np.abs(atlas.transfer(p, cid))) < twisted_bumps.r0
                    assert t in twisted_bumps.compact.base_domains[cid]


def test_bump_smooth_profile_shape():
    from sectionlab.family import smooth_profile
    q = np.array([0.0, 0.5, 0.999, 1.0, 1.5])
    v = smooth_profile(q)
    assert v[0] == pytest.approx(1.0)
    assert 0 < v[1] < 1
    assert v[3] == 0.0 and v[4] == 0.0
    assert v[2] < 1e-200 or v[2] >= 0.0  # decays to zero smoothly


# ---------------------------------------------------------------------------
# validation

def test_atlas_validate_product_t_independent(product):
    rep = atlas_validate(product.atlas, rng=np.random.default_rng(18))
    assert rep.max_continuity_modulus <= 1e-12
    assert rep.max_holomorphy_residual <= 1e-8
    assert rep.cocycle_residual <= 1e-9
    assert rep.max_roundtrip_residual <= 1e-9


def test_atlas_validate_twisted_healthy(twisted):
    rep = atlas_validate(twisted.atlas, rng=np.random.default_rng(19))
    assert rep.max_holomorphy_residual <= 1e-8
    assert rep.cocycle_residual <= 1e-9
    assert rep.max_continuity_modulus > 0.0  # the twist moves with the base


def test_atlas_validate_corrupt_flags_holomorphy():
    bundle = make_fixture("twisted-p1-corrupt", 16)
    rep = atlas_validate(bundle.atlas, rng=np.random.default_rng(20))
    assert rep.max_holomorphy_residual > 0.5  # defect ~ 2|a|/|z|^2 on the overlap
    # but transfers still invert each other
    assert rep.max_roundtrip_residual <= 1e-9


def test_sample_overlap_lands_in_overlap(twisted):
    rng = np.random.default_rng(21)
    Z = sample_overlap(twisted.atlas, "c1", "c2", 3, 50, rng)
    assert len(Z) == 50
    T = np.full(len(Z), 3)
    _, ok = twisted.atlas.transfer_array("c1", "c2", Z, T)
    assert ok.all()


# ---------------------------------------------------------------------------
# fixtures

def test_fixture_registry_and_describe():
    with pytest.raises(FixtureError):
        make_fixture("no-such-fixture")
    d1 = describe_fixture("product-p1")
    assert "2 chart(s)" in d1
    d2 = describe_fixture("torus-pencil")
    b = make_fixture("torus-pencil", 8)
    assert len(b.atlas.chart_ids) >= 4
    assert "tau" in d2


def test_torus_atlas_is_healthy():
    b = make_fixture("torus-pencil", 8)
    rep = atlas_validate(b.atlas, rng=np.random.default_rng(22))
    assert rep.max_holomorphy_residual <= 1e-8
    assert rep.cocycle_residual <= 1e-9
    assert rep.max_continuity_modulus <= 1e-10  # shifts have constant derivative


def test_torus_bumps_cover():
    b = make_fixture("torus-pencil", 8)
    cs = build_compact_system(b.atlas, 0.1, samples_per_t=300, rng=np.random.default_rng(23))
    build_bump_system(b.atlas, cs, samples_per_t=300, rng=np.random.default_rng(24))
