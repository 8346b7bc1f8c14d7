"""Verification suites: the executable checks behind the CLI run path.

Five suites in dependency order: atlas (transition health), bumps (covering
structures and partitions), metric (comparison constants with revalidation),
spray (exponential-map identities and solvability constants), sections
(normal-chart certification, chart transitions, frame trivialization).
Each returns a SuiteResult carrying named checks with values, bounds and
witnesses; nothing raises for an ordinary failure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry, sections as sec, spray
from .algebra import AlgebraElement, ModuleElement
from .errors import CoverageFailure, SectionLabError
from .family import atlas_validate
from .fixtures import Bundle, make_bumps
from .geometry import TangentVector
from .sections import Section


@dataclass(frozen=True)
class Tolerances:
    point_eq: float = 1e-9
    holomorphy: float = 1e-6
    cocycle: float = 1e-9
    roundtrip: float = 1e-9
    continuity_decay: float = 0.75   # refinement factor separating Lipschitz from jump
    exp_identity: float = 1e-10
    exp_derivative: float = 1e-6
    picard_agreement: float = 1e-6
    inverse_roundtrip: float = 1e-9
    chart_roundtrip: float = 1e-8
    commutation: float = 1e-8
    norm_slack: float = 1.05
    slope_halfwidth: float = 0.1
    frame_orthonormal: float = 1e-10

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class Check:
    name: str
    passed: bool
    value: float | None = None
    bound: float | None = None
    witness: str | None = None

    def as_dict(self) -> dict:
        out = {"name": self.name, "passed": bool(self.passed)}
        if self.value is not None:
            out["value"] = float(self.value)
        if self.bound is not None:
            out["bound"] = float(self.bound)
        if self.witness:
            out["witness"] = self.witness
        return out


@dataclass
class SuiteResult:
    name: str
    checks: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    skipped: bool = False
    error: str | None = None

    @property
    def passed(self) -> bool:
        return not self.skipped and self.error is None and all(c.passed for c in self.checks)

    def add(self, name, passed, value=None, bound=None, witness=None):
        self.checks.append(Check(name, bool(passed), value, bound, witness))

    def as_dict(self) -> dict:
        out = {
            "passed": self.passed,
            "skipped": self.skipped,
            "checks": [c.as_dict() for c in self.checks],
            "constants": {k: float(v) for k, v in self.constants.items()},
        }
        if self.error:
            out["error"] = self.error
        return out


SUITE_ORDER = ("atlas", "bumps", "metric", "spray", "sections")


def canonical_section(bundle: Bundle, bumps) -> Section:
    """A smooth section sitting in a mixed-weight region of each fixture."""
    atlas = bundle.atlas
    if bundle.section_data is not None:
        return Section.from_jsonable(atlas, bundle.section_data)
    if bundle.name.startswith(("twisted-p1", "product-p1")):
        return Section.from_chart_path(atlas, "c1", lambda x: 0.65 * np.exp(0.15j * np.sin(x)))
    if bundle.name == "torus-pencil":
        return Section.from_chart_path(atlas, "p0", lambda x: 0.3 * np.exp(0.9j * x))
    if bundle.name == "open-disc":
        return Section.from_chart_path(atlas, "c0", lambda x: 0.2 * np.exp(1j * x))
    raise SectionLabError(f"no canonical section for {bundle.name}")


# ---------------------------------------------------------------------------

def run_atlas_suite(bundle: Bundle, tol: Tolerances, seed: int) -> SuiteResult:
    res = SuiteResult("atlas")
    atlas = bundle.atlas
    rep = atlas_validate(atlas, rng=np.random.default_rng([seed, 1]))
    res.constants["holomorphy_residual"] = rep.max_holomorphy_residual
    res.constants["cocycle_residual"] = rep.cocycle_residual
    res.constants["roundtrip_residual"] = rep.max_roundtrip_residual
    res.constants["continuity_modulus"] = rep.max_continuity_modulus
    res.constants["mesh"] = rep.mesh

    worst = max(rep.transitions, key=lambda c: c.holomorphy_residual, default=None)
    res.add("transition_holomorphy", rep.max_holomorphy_residual <= tol.holomorphy,
            rep.max_holomorphy_residual, tol.holomorphy,
            witness=None if rep.max_holomorphy_residual <= tol.holomorphy
            else f"transition {worst.pair}")
    res.add("transition_roundtrip", rep.max_roundtrip_residual <= tol.roundtrip,
            rep.max_roundtrip_residual, tol.roundtrip)
    res.add("cocycle", rep.cocycle_residual <= tol.cocycle,
            rep.cocycle_residual, tol.cocycle)

    # base-continuity under refinement: a Lipschitz twist shrinks with the mesh,
    # a jump does not
    fine = bundle.refined(2 * atlas.grid.size)
    rep2 = atlas_validate(fine.atlas, rng=np.random.default_rng([seed, 2]))
    res.constants["continuity_modulus_refined"] = rep2.max_continuity_modulus
    bound = tol.continuity_decay * rep.max_continuity_modulus + 1e-9
    res.add("parameter_continuity_refinement", rep2.max_continuity_modulus <= bound,
            rep2.max_continuity_modulus, bound,
            witness=None if rep2.max_continuity_modulus <= bound
            else "modulus does not shrink under mesh halving")
    return res


def run_bumps_suite(bundle: Bundle, bumps, tol: Tolerances, seed: int) -> SuiteResult:
    res = SuiteResult("bumps")
    rng = np.random.default_rng([seed, 3])
    atlas = bundle.atlas
    res.constants["r0"] = bumps.r0
    if hasattr(bumps, "r2"):
        res.constants["r1"] = bumps.r1
        res.constants["r2"] = bumps.r2

    # joint positivity on fresh samples
    try:
        if hasattr(bumps, "validate_cover"):
            bumps.validate_cover(samples_per_t=300, rng=rng)
        res.add("bump_positivity", True)
    except CoverageFailure as exc:
        res.add("bump_positivity", False, witness=str(exc.witness))

    # support containment: positive weight forces the compact box
    worst_radius = 0.0
    support_ok = True
    for t in list(atlas.grid.points)[:: max(1, atlas.grid.size // 4)]:
        pts = atlas.sample_fiber_points(t, 60, rng)
        for p in pts:
            weights = bumps.rho_all(p)
            for k, cid in enumerate(atlas.chart_ids):
                if weights[k] > 0.0:
                    w = atlas.transfer(p, cid)
                    worst_radius = max(worst_radius, float(np.max(np.abs(w))))
                    if np.max(np.abs(w)) >= bumps.r0 or t not in bumps.compact.base_domains[cid]:
                        support_ok = False
    res.add("bump_support_in_compact_box", support_ok, worst_radius, bumps.r0)

    # partition of unity over the canonical section
    u = canonical_section(bundle, bumps)
    pou = sec.partition_of_unity(u, bumps)
    sums_err = float(np.max(np.abs(pou.weights.sum(axis=0) - 1.0)))
    res.add("partition_sums_to_one", sums_err <= 1e-12, sums_err, 1e-12)
    supports = sec.support_sets(pou, atlas.grid)
    res.add("support_sets_nonempty", all(len(R) > 0 for R in supports))
    in_boxes = True
    for t, R in enumerate(supports):
        for cid in R:
            w = atlas.transfer(u.points[t], cid)
            if np.max(np.abs(w)) >= bumps.r0:
                in_boxes = False
    res.add("section_in_support_boxes", in_boxes)
    return res


def run_metric_suite(bundle: Bundle, bumps, tol: Tolerances, seed: int) -> SuiteResult:
    res = SuiteResult("metric")
    mc = sec.metric_constants_for(bumps)
    res.constants.update({"c1a": mc.c1a, "c1b": mc.c1b, "delta2": mc.delta2, "c2": mc.c2})
    rev1 = geometry.revalidate_metric_constants(bumps, mc, rng=np.random.default_rng([seed, 4]))
    res.add("c1a_revalidation", rev1["c1a_ok"], rev1["max_flat_over_combined"], mc.c1a)
    res.add("c1b_revalidation", rev1["c1b_ok"], rev1["max_combined_over_flat"], mc.c1b)
    rev2 = geometry.revalidate_chart_constants(bumps, mc, rng=np.random.default_rng([seed, 5]))
    res.add("delta2_c2_revalidation", rev2["delta2_c2_ok"], rev2["max_ratio"], mc.c2,
            witness=None if rev2["delta2_c2_ok"] else f"{rev2['pairs_checked']} pairs")
    res.add("metric_positive", mc.c1a > 0 and mc.c1b > 0 and mc.delta2 > 0 and mc.c2 > 0)
    return res


def run_spray_suite(bundle: Bundle, bumps, tol: Tolerances, seed: int) -> SuiteResult:
    res = SuiteResult("spray")
    rng = np.random.default_rng([seed, 6])
    atlas = bundle.atlas
    u = canonical_section(bundle, bumps)
    pou = sec.partition_of_unity(u, bumps)
    supports = sec.support_sets(pou, atlas.grid)
    pairs = sorted({(supports[t], min(supports[t])) for t in range(atlas.grid.size)},
                   key=lambda p: (sorted(p[0]), p[1]))

    # pick the richest support pair for the identity checks
    R, psi = max(pairs, key=lambda p: len(p[0]))
    t_mid = next(t for t in range(atlas.grid.size) if supports[t] == R)
    w_bar = spray.barycenter_weighting(atlas.chart_ids, R)
    ctx = spray.SprayContext(bumps, tuple(sorted(R)), psi, t_mid, w_bar)
    Z, _ = spray.sample_region(bumps, R, psi, 8, rng)

    # rest identity and velocity-derivative identity
    rest_err = 0.0
    deriv_err = 0.0
    for z in Z[:4]:
        ed, e = spray.exp_map(ctx, np.zeros(atlas.dim, dtype=complex), z)
        rest_err = max(rest_err, float(np.max(np.abs(ed))), float(np.max(np.abs(e - z))))
        h = 1e-5
        for j in range(atlas.dim):
            step = np.zeros(atlas.dim, dtype=complex)
            step[j] = h
            _, ep = spray.exp_map(ctx, step, z)
            _, em = spray.exp_map(ctx, -step, z)
            col = (ep - em) / (2 * h)
            target = np.zeros(atlas.dim, dtype=complex)
            target[j] = 1.0
            deriv_err = max(deriv_err, float(np.max(np.abs(col - target))))
    res.add("exp_rest_identity", rest_err <= tol.exp_identity, rest_err, tol.exp_identity)
    res.add("exp_velocity_derivative", deriv_err <= tol.exp_derivative, deriv_err, tol.exp_derivative)

    # trivial weighting flies straight
    w_psi = spray.dirac_weighting(atlas.chart_ids, R, psi)
    ctx_triv = spray.SprayContext(bumps, tuple(sorted(R)), psi, t_mid, w_psi)
    line_err = 0.0
    for z in Z[:4]:
        zd = 0.01 * np.exp(1j * rng.uniform(0, 2 * np.pi, size=atlas.dim))
        ed, e = spray.exp_map(ctx_triv, zd, z)
        line_err = max(line_err, float(np.max(np.abs(e - (z + zd)))),
                       float(np.max(np.abs(ed - zd))))
    res.add("trivial_weighting_straight", line_err <= tol.exp_identity, line_err, tol.exp_identity)

    # independent-integrator agreement and inverse round trips on small data
    ec = sec.exp_constants_for(bumps, R, psi, seed=23)
    res.constants.update({"alpha0": ec.alpha0, "beta0": ec.beta0,
                          "delta0a": ec.delta0a, "delta0b": ec.delta0b})
    agree = 0.0
    rt = 0.0
    for z in Z[:6]:
        zd = ec.delta0a * 0.5 * np.exp(1j * rng.uniform(0, 2 * np.pi, size=atlas.dim))
        ed, e = spray.exp_map(ctx, zd, z)
        pd_, pe_, _ = spray.picard_exp(ctx, zd, z)
        agree = max(agree, float(np.max(np.abs(pe_ - e))), float(np.max(np.abs(pd_ - ed))))
        back, _ = spray.inverse_exp(ctx, e, z)
        _, e2 = spray.exp_map(ctx, back, z)
        rt = max(rt, float(np.max(np.abs(back - zd))), float(np.max(np.abs(e2 - e))))
    res.add("picard_rk4_agreement", agree <= tol.picard_agreement, agree, tol.picard_agreement)
    res.add("inverse_roundtrip", rt <= tol.inverse_roundtrip, rt, tol.inverse_roundtrip)

    rev = spray.revalidate_exp_constants(bumps, R, psi, ec, rng=np.random.default_rng([seed, 7]))
    res.add("exp_constants_revalidation", rev["ok"],
            witness=None if rev["ok"] else f"escapes={rev['escapes']}")
    return res


def run_sections_suite(bundle: Bundle, bumps, tol: Tolerances, seed: int) -> SuiteResult:
    res = SuiteResult("sections")
    rng = np.random.default_rng([seed, 9])
    atlas = bundle.atlas
    u = canonical_section(bundle, bumps)
    nc = sec.build_normal_chart(u, bumps, seed=23)
    res.constants.update({
        "rho_star": nc.rho_star, "scale": nc.scale,
        "alpha0": nc.exp_constants.alpha0, "beta0": nc.exp_constants.beta0,
        "delta0a": nc.exp_constants.delta0a, "delta0b": nc.exp_constants.delta0b,
        "c1a": nc.metric_constants.c1a, "c1b": nc.metric_constants.c1b,
        "delta2": nc.metric_constants.delta2, "c2": nc.metric_constants.c2,
    })

    origin = nc.forward(u)
    origin_err = max(float(np.max(np.abs(v.comp))) for v in origin.vectors)
    res.add("section_maps_to_origin", origin_err <= 1e-12, origin_err, 1e-12)

    bound = sec.inverse_derivative_bound(nc.exp_constants, nc.metric_constants)
    sup = sec.inverse_derivative_sup(nc, per_t=2, rng=np.random.default_rng([seed, 10]))
    res.add("inverse_derivative_bound", sup <= bound, sup, bound)

    # forward/inverse round trip on a random tangent section
    m = atlas.grid.size
    raw = rng.normal(size=(m, atlas.dim)) + 1j * rng.normal(size=(m, atlas.dim))
    comps = 0.5 * raw / nc.tangent_sup_norm(raw)
    du = sec.TangentSection(u, [TangentVector(u.points[t], nc.display[t], comps[t])
                                for t in range(m)])
    v = nc.inverse(du)
    du2 = nc.forward(v)
    rt = float(np.max(np.abs(du2.comp_in(nc.display) - comps)))
    res.add("chart_roundtrip", rt <= tol.chart_roundtrip, rt, tol.chart_roundtrip)

    stab = sec.verify_stability(nc, 0.5, 0.1, rng=np.random.default_rng([seed, 11]))
    res.constants["stability_delta"] = stab.delta
    res.add("stability_condition", stab.ok, float(len(stab.witnesses)), 0.0,
            witness=str(stab.witnesses[0]) if stab.witnesses else None)

    # transition to a second chart around a nudged section
    w_sec = nc.inverse(sec.TangentSection(
        u, [TangentVector(u.points[t], nc.display[t],
                          0.25 * comps[t] / max(np.max(np.abs(comps)), 1e-12))
            for t in range(m)]))
    nc2 = sec.build_normal_chart(w_sec, bumps, seed=23)
    try:
        tj = sec.transition_jacobian(nc, nc2, du)
        eps = sec.overlap_margin(nc, nc2, du, rng=np.random.default_rng([seed, 12]))
        res.constants["overlap_margin"] = eps
        f = AlgebraElement(atlas.grid, rng.normal(size=m) + 1j * rng.normal(size=m))
        h_comps = 0.1 * raw / nc.tangent_sup_norm(raw)
        comm = float(np.max(np.abs(tj.apply_comps(f.values[:, None] * h_comps)
                                   - f.values[:, None] * tj.apply_comps(h_comps))))
        res.add("transition_pointwise_commutation", comm <= tol.commutation, comm, tol.commutation)
        norm_bound = tol.norm_slack * 4.0 * atlas.dim ** 2 / eps
        op = float(np.max(tj.operator_norms()))
        res.add("transition_norm_bound", op <= norm_bound, op, norm_bound)
        rep = sec.frechet_remainder_report(nc, nc2, du, tj, eps,
                                           rng=np.random.default_rng([seed, 13]))
        res.add("remainder_quadratic_bound", rep.pointwise_ok, rep.max_ratio, tol.norm_slack)
        if max(rep.max_remainders) < 1e-9:
            # flat transitions: the remainder sits at the solver noise floor and
            # carries no slope information
            res.add("remainder_slope", True, rep.slope, None,
                    witness="remainder at noise floor (affine transitions)")
        else:
            res.add("remainder_slope", abs(rep.slope - 2.0) <= tol.slope_halfwidth,
                    rep.slope, 2.0 + tol.slope_halfwidth)
    except SectionLabError as exc:
        res.add("transition_between_charts", False, witness=str(exc))

    # frame trivialization
    fr_raw = rng.normal(size=(m, atlas.dim, atlas.dim)) + 1j * rng.normal(size=(m, atlas.dim, atlas.dim))
    members = []
    for k in range(atlas.dim):
        vecs = [TangentVector(u.points[t], nc.display[t], fr_raw[t, k] + 2.0 * np.eye(atlas.dim)[k])
                for t in range(m)]
        members.append(sec.TangentSection(u, vecs))
    frame = sec.Frame(u, members)
    o_frame, F, Finv = sec.gram_schmidt_frame(bumps, u, frame)
    ortho_err = 0.0
    for ts in o_frame.members:
        ortho_err = max(ortho_err, float(np.max(np.abs(ts.norms(bumps) - 1.0))))
    res.add("frame_orthonormal", ortho_err <= tol.frame_orthonormal, ortho_err, tol.frame_orthonormal)
    z = ModuleElement(atlas.grid, rng.normal(size=(atlas.dim, m)) + 1j * rng.normal(size=(atlas.dim, m)))
    back = Finv(F(z))
    iso_err = float(np.max(np.abs(back.components - z.components)))
    res.add("frame_isomorphism_roundtrip", iso_err <= tol.frame_orthonormal, iso_err, tol.frame_orthonormal)
    return res


# ---------------------------------------------------------------------------

def run_all(bundle: Bundle, tol: Tolerances, seed: int, selected) -> dict:
    """Run the selected suites in dependency order; dependents of a failed
    suite are skipped.  Returns {suite_name: SuiteResult}."""
    want = list(SUITE_ORDER) if "all" in selected else [s for s in SUITE_ORDER if s in selected]
    results: dict = {}
    bumps = None
    failed = False
    for name in SUITE_ORDER:
        if name not in want:
            continue
        if failed:
            results[name] = SuiteResult(name, skipped=True)
            continue
        try:
            if name == "atlas":
                results[name] = run_atlas_suite(bundle, tol, seed)
            else:
                if bumps is None:
                    bumps = make_bumps(bundle, rng=np.random.default_rng([seed, 0]))
                if name == "bumps":
                    results[name] = run_bumps_suite(bundle, bumps, tol, seed)
                elif name == "metric":
                    results[name] = run_metric_suite(bundle, bumps, tol, seed)
                elif name == "spray":
                    results[name] = run_spray_suite(bundle, bumps, tol, seed)
                elif name == "sections":
                    results[name] = run_sections_suite(bundle, bumps, tol, seed)
        except SectionLabError as exc:
            r = SuiteResult(name)
            r.error = f"{type(exc).__name__}: {exc}"
            results[name] = r
        if not results[name].passed:
            failed = True
    return results
