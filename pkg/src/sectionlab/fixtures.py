"""Built-in families.

Two healthy sphere bundles (a product and a twisted one), a torus pencil with
affine patch transitions, deliberately broken variants used as negative
controls, and a single-chart open model for unit-testing ODE and metric
internals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FixtureError
from .family import (
    Atlas,
    Chart,
    ConjugatedTransition,
    LatticePatchTransition,
    MobiusInversionTransition,
    UnitWeights,
    build_bump_system,
    build_compact_system,
)
from .grid import BaseGrid

P1_RHO = 1.5          # coordinate scale of the two sphere patches
P1_TWIST_AMP = 0.9    # twist amplitude of the healthy twisted bundle
TORUS_RADIUS = 0.45   # chart disc radius on the torus pencil
TORUS_DRIFT = 0.25    # horizontal drift of the lattice parameter


@dataclass
class Bundle:
    """A fixture: an atlas plus bookkeeping for the CLI and test suites."""

    name: str
    atlas: Atlas
    params: dict = field(default_factory=dict)
    healthy: bool = True
    test_only: bool = False
    notes: str = ""
    section_data: list | None = None  # optional imported section (chart, z, t triples)
    builder: object = None            # optional grid_n -> Bundle rebuild hook

    def refined(self, grid_n: int) -> "Bundle":
        """The same family on a finer base grid (for refinement studies)."""
        if self.builder is not None:
            return self.builder(grid_n)
        return make_fixture(self.name, grid_n)

    def describe(self) -> str:
        a = self.atlas
        lines = [
            f"fixture {self.name}: {len(a.chart_ids)} chart(s) over a "
            f"{a.grid.kind} grid with {a.grid.size} samples (fiber dimension {a.dim})",
        ]
        for key, val in sorted(self.params.items()):
            lines.append(f"  {key} = {val}")
        if self.notes:
            lines.append(f"  {self.notes}")
        lines.append(f"  healthy: {self.healthy}" + ("  (test-only)" if self.test_only else ""))
        return "\n".join(lines)


def _p1_atlas(grid_n: int, twist_amp: float, jump: bool = False, corrupt: bool = False,
              name: str = "") -> Atlas:
    """Two-patch sphere bundle over the circle.

    Patch coordinates are scaled affine coordinates; on the overlap the
    change of coordinates is z -> a(t) / z with |a| = 1 / P1_RHO^2 and a
    unimodular twist factor that moves with the base point.
    """
    grid = BaseGrid.circle(grid_n)
    if jump:
        theta = np.where(grid.coords < np.pi, 0.0, twist_amp)
    else:
        theta = twist_amp * np.sin(grid.coords)
    a = np.exp(1j * theta) / P1_RHO ** 2

    full = grid.full_domain()
    charts = [Chart("c1", 1, full), Chart("c2", 1, full)]
    t12 = MobiusInversionTransition(a)
    t21 = MobiusInversionTransition(a)
    if corrupt:
        t12 = ConjugatedTransition(t12)
        t21 = ConjugatedTransition(MobiusInversionTransition(np.conj(a)))
    transitions = {("c1", "c2"): t12, ("c2", "c1"): t21}
    return Atlas(grid, charts, transitions, name=name)


def _torus_atlas(grid_n: int) -> Atlas:
    """Torus pencil C / (Z + tau(t) Z) with 9 translation discs.

    tau runs from i to i + TORUS_DRIFT along the interval base; chart centers
    sit at the fractional lattice points (j/3, k/3) and move with tau, so all
    transitions are t-dependent shifts (flat: second derivatives vanish).
    """
    grid = BaseGrid.interval(grid_n)
    tau = 1j + TORUS_DRIFT * grid.coords
    fracs = [(j / 3.0, k / 3.0) for j in range(3) for k in range(3)]
    centers = {f"p{i}": fa + fb * tau for i, (fa, fb) in enumerate(fracs)}
    full = grid.full_domain()
    charts = [Chart(cid, 1, full) for cid in centers]
    transitions = {}
    for src, c_src in centers.items():
        for dst, c_dst in centers.items():
            if src == dst:
                continue
            transitions[(src, dst)] = LatticePatchTransition(c_src, c_dst, TORUS_RADIUS, tau)
    return Atlas(grid, charts, transitions, name="torus-pencil")


def _open_disc_atlas(grid_n: int) -> Atlas:
    grid = BaseGrid.circle(grid_n)
    return Atlas(grid, [Chart("c0", 1, grid.full_domain())], {}, name="open-disc")


_BUILDERS = {
    "product-p1": lambda n: Bundle(
        "product-p1", _p1_atlas(n, 0.0, name="product-p1"),
        params={"patch_scale": P1_RHO, "twist": "none (product)"},
        notes="transitions are base-independent inversions"),
    "twisted-p1": lambda n: Bundle(
        "twisted-p1", _p1_atlas(n, P1_TWIST_AMP, name="twisted-p1"),
        params={"patch_scale": P1_RHO, "twist": f"{P1_TWIST_AMP} * sin(angle)"},
        notes="unimodular twist rotates the gluing as the base angle moves"),
    "twisted-p1-corrupt": lambda n: Bundle(
        "twisted-p1-corrupt", _p1_atlas(n, P1_TWIST_AMP, corrupt=True, name="twisted-p1-corrupt"),
        params={"patch_scale": P1_RHO, "twist": f"{P1_TWIST_AMP} * sin(angle)", "defect": "conjugated transitions"},
        healthy=False,
        notes="negative control: transitions are antiholomorphic"),
    "twisted-p1-jump": lambda n: Bundle(
        "twisted-p1-jump", _p1_atlas(n, P1_TWIST_AMP, jump=True, name="twisted-p1-jump"),
        params={"patch_scale": P1_RHO, "twist": f"step of height {P1_TWIST_AMP}", "defect": "twist jumps at angle pi"},
        healthy=False,
        notes="negative control: twist is discontinuous in the base point"),
    "torus-pencil": lambda n: Bundle(
        "torus-pencil", _torus_atlas(max(n, 4)),
        params={"chart_radius": TORUS_RADIUS, "lattice": f"Z + tau Z, tau: i -> i + {TORUS_DRIFT}"},
        notes="9 translation discs; all transitions affine"),
    "open-disc": lambda n: Bundle(
        "open-disc", _open_disc_atlas(n),
        params={"charts": 1},
        test_only=True,
        notes="single polydisk fiber (non-compact); unit-weight metric; no covering system exists"),
}

FIXTURE_NAMES = sorted(_BUILDERS)


def make_fixture(name: str, grid_n: int = 16) -> Bundle:
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise FixtureError(f"unknown fixture {name!r}; known: {', '.join(FIXTURE_NAMES)}") from None
    return builder(grid_n)


def make_bumps(bundle: Bundle, margin: float = 0.1, rng=None,
               samples_per_t: int = 400):
    """Compact system + bump system for a bundle (unit weights for open-disc)."""
    if bundle.name == "open-disc":
        return UnitWeights(bundle.atlas, r0=1.0 - margin)
    cs = build_compact_system(bundle.atlas, margin, samples_per_t, rng)
    return build_bump_system(bundle.atlas, cs, samples_per_t, rng)


def describe_fixture(name: str, grid_n: int = 16) -> str:
    return make_fixture(name, grid_n).describe()
