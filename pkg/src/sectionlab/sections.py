"""The section space: partitions of unity, normal charts, transitions, frames.

A continuous section u of the family gets a chart on the section space in
three moves: a partition of unity subordinate to the shrunken chart
neighborhoods picks a weighted spray per base point; the fiberwise
exponential map of that spray, restricted to a certified velocity ball,
biholomorphically spreads a tangent neighborhood over the fiber; scaling its
inverse by 1/rho_star turns the chart image into the unit ball of bounded
tangent sections.  Transitions between two such charts act pointwise in the
base, which is exactly what algebra-linearity of their derivatives means on
a finite grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry, spray
from .errors import (
    DegenerateFrame,
    NoBumpCoverage,
    OutsideChart,
    OutsideOverlap,
)
from .family import Point
from .geometry import MetricConstants, TangentVector
from .spray import ExpConstants, SprayBatch


# ---------------------------------------------------------------------------
# sections and tangent sections

@dataclass(eq=False)
class Section:
    """One fiber point per base sample (chart-local storage)."""

    atlas: object
    points: list

    def __post_init__(self):
        if len(self.points) != self.atlas.grid.size:
            raise ValueError("need exactly one point per grid sample")
        for t, p in enumerate(self.points):
            if p.t != t:
                raise ValueError(f"point at slot {t} carries base index {p.t}")

    @staticmethod
    def from_chart_path(atlas, cid: str, zfun) -> "Section":
        """Section t -> point with chart-cid coordinates zfun(coord_t)."""
        pts = [Point(cid, np.atleast_1d(np.asarray(zfun(x), dtype=complex)), t)
               for t, x in enumerate(atlas.grid.coords)]
        return Section(atlas, pts)

    def value(self, t: int) -> Point:
        return self.points[t]

    def continuity_modulus(self) -> float:
        """Max chart-coordinate gap between adjacent samples (via transfer)."""
        worst = 0.0
        for i, j in self.atlas.grid.adjacent_pairs():
            p, q = self.points[i], self.points[j]
            moved = Point(q.chart, q.z, p.t)  # compare coordinates, same chart frame
            try:
                w = self.atlas.transfer(moved, p.chart)
                worst = max(worst, float(np.max(np.abs(w - p.z))))
            except OutsideOverlap:
                worst = float("inf")
        return worst

    def to_jsonable(self) -> list:
        return [{"chart": p.chart, "t": p.t,
                 "z": [[float(c.real), float(c.imag)] for c in p.z]}
                for p in self.points]

    @staticmethod
    def from_jsonable(atlas, data) -> "Section":
        pts = [Point(rec["chart"], np.array([complex(re, im) for re, im in rec["z"]]), rec["t"])
               for rec in data]
        return Section(atlas, sorted(pts, key=lambda p: p.t))


@dataclass(eq=False)
class TangentSection:
    """One tangent vector per base sample, based along a section."""

    section: Section
    vectors: list  # of TangentVector

    def __post_init__(self):
        for t, v in enumerate(self.vectors):
            if v.point.t != t:
                raise ValueError(f"vector at slot {t} based at index {v.point.t}")

    def comp_in(self, chart_per_t) -> np.ndarray:
        """Components re-expressed per t in the given chart list, shape (m, n)."""
        atlas = self.section.atlas
        out = []
        for v, cid in zip(self.vectors, chart_per_t):
            out.append(geometry.pushforward(atlas, v, cid).comp)
        return np.array(out)

    def norms(self, bumps) -> np.ndarray:
        return np.array([geometry.norm(bumps, v.point, v) for v in self.vectors])

    def sup_norm(self, bumps) -> float:
        return float(np.max(self.norms(bumps)))


# ---------------------------------------------------------------------------
# partitions of unity and support sets

@dataclass(frozen=True)
class PartitionOfUnity:
    """chi_phi(t) = rho_phi(u(t)) / sum_psi rho_psi(u(t)); rows follow chart order."""

    chart_ids: tuple
    weights: np.ndarray = field(repr=False)  # (C, m)

    def chi(self, cid: str) -> np.ndarray:
        return self.weights[self.chart_ids.index(cid)]


def partition_of_unity(u: Section, bumps) -> PartitionOfUnity:
    atlas = u.atlas
    m = atlas.grid.size
    rows = np.zeros((len(atlas.chart_ids), m))
    for t, p in enumerate(u.points):
        rows[:, t] = bumps.rho_all(p)
    totals = rows.sum(axis=0)
    if np.any(totals <= 0.0):
        t_bad = int(np.argmin(totals))
        raise NoBumpCoverage(f"no bump weight at base index {t_bad}")
    return PartitionOfUnity(tuple(atlas.chart_ids), rows / totals)


def support_sets(pou: PartitionOfUnity, grid) -> list:
    """Per-t chart sets R_t: grid-closure of each weight's positivity set."""
    C, m = pou.weights.shape
    out = []
    positive = pou.weights > 0.0
    for t in range(m):
        idx = set([t]) | set(grid.neighbors(t))
        R = frozenset(pou.chart_ids[k] for k in range(C) if positive[k, list(idx)].any())
        out.append(R)
    return out


# ---------------------------------------------------------------------------
# normal charts

def stability_radius(ec: ExpConstants, mc: MetricConstants, r: float, eps: float) -> float:
    """Base-distance radius that keeps scaled chart images eps-close.

    delta = min( delta2,
                 (delta0b / c2) (1 - r),
                 (min(delta0a, delta0b/alpha0) / (beta0 c1a c1b c2)) (1 - r),
                 (min(delta0a, delta0b/alpha0) / (beta0 c1a c1b c2)) eps ).
    """
    mind = min(ec.delta0a, ec.delta0b / ec.alpha0)
    core = mind / (ec.beta0 * mc.c1a * mc.c1b * mc.c2)
    return min(mc.delta2, (ec.delta0b / mc.c2) * (1.0 - r), core * (1.0 - r), core * eps)


def inverse_derivative_bound(ec: ExpConstants, mc: MetricConstants) -> float:
    """Certified bound for the chart-inverse derivative: alpha0 * c1a * c1b."""
    return ec.alpha0 * mc.c1a * mc.c1b


def exp_constants_for(bumps, support, psi: str, seed: int = 23) -> ExpConstants:
    """Memoized solvability constants per (support, display) pair."""
    cache = bumps.__dict__.setdefault("_exp_cache", {})
    key = (frozenset(support), psi, seed)
    if key not in cache:
        cache[key] = spray.estimate_exp_constants(
            bumps, support, psi, rng=np.random.default_rng([seed, len(support)]))
    return cache[key]


def metric_constants_for(bumps, seed: int = 31) -> MetricConstants:
    """Memoized comparison constants; the estimation seed is part of the key,
    so every caller that sticks to the default shares one estimate."""
    cache = bumps.__dict__.setdefault("_metric_cache", {})
    if seed not in cache:
        comp = geometry.estimate_metric_constants(bumps)
        chart = geometry.estimate_chart_constants(bumps, rng=np.random.default_rng([seed, 1]))
        cache[seed] = MetricConstants(comp.c1a, comp.c1b, chart.delta2, chart.c2)
    return cache[seed]


@dataclass(eq=False)
class NormalChart:
    """Scaled inverse-exponential chart (U, Psi) around a section u.

    Per base index t the display chart psi_t is the smallest chart id of the
    support set R_t; the forward map sends q to scale * h(psi(q)) expressed as
    a tangent vector at u(t), the inverse flows scale^-1 * components back out.
    """

    bumps: object
    u: Section
    pou: PartitionOfUnity
    supports: list
    display: list
    exp_constants: ExpConstants
    metric_constants: MetricConstants
    rho_star: float
    scale: float
    base_z: np.ndarray = field(repr=False)  # (m, n) coordinates of u(t) in display chart

    @property
    def atlas(self):
        return self.bumps.atlas

    def _groups(self):
        groups = {}
        for t, psi in enumerate(self.display):
            groups.setdefault(psi, []).append(t)
        return groups

    def _batch(self, psi: str, t_idx: np.ndarray) -> SprayBatch:
        cids = self.atlas.chart_ids
        sup = np.array([[cid in self.supports[t] for cid in cids] for t in t_idx])
        w = self.pou.weights[:, t_idx].T.copy()
        w[~sup] = 0.0
        w = w / w.sum(axis=1, keepdims=True)
        return SprayBatch(self.bumps, psi, t_idx, sup, w)

    # -- batched kernels ------------------------------------------------------

    def forward_batch(self, W: np.ndarray, t_idx: np.ndarray):
        """Scaled inverse-exponential of display-chart targets W at slots t_idx.

        Returns (comps, ok): chart components of Psi (already scaled) and a
        success mask (False where the iteration failed, escaped, or the result
        exceeds the unit ball of the scaled norm).
        """
        t_idx = np.asarray(t_idx, dtype=int)
        comps = np.zeros_like(np.asarray(W, dtype=complex))
        ok = np.zeros(len(t_idx), dtype=bool)
        norms = np.full(len(t_idx), np.inf)
        for psi, slots in self._groups().items():
            sel = np.isin(t_idx, slots)
            if not np.any(sel):
                continue
            batch = self._batch(psi, t_idx[sel])
            try:
                zdot, conv, _ = batch.inverse(np.asarray(W, dtype=complex)[sel],
                                              self.base_z[t_idx[sel]])
            except Exception:
                continue
            nrm = geometry.tangent_norms_in_frame(
                self.bumps, psi, self.base_z[t_idx[sel]], t_idx[sel], zdot)
            comps[sel] = self.scale * zdot
            norms[sel] = self.scale * nrm
            ok[sel] = conv
        ok &= norms < 1.0
        return comps, ok, norms

    def inverse_batch(self, comps: np.ndarray, t_idx: np.ndarray):
        """Exponential of scaled display-chart components; returns (E, ok)."""
        t_idx = np.asarray(t_idx, dtype=int)
        comps = np.asarray(comps, dtype=complex)
        E = np.zeros_like(comps)
        ok = np.zeros(len(t_idx), dtype=bool)
        for psi, slots in self._groups().items():
            sel = np.isin(t_idx, slots)
            if not np.any(sel):
                continue
            batch = self._batch(psi, t_idx[sel])
            _, e, alive = batch.flow(comps[sel] / self.scale, self.base_z[t_idx[sel]])
            E[sel] = e
            ok[sel] = alive
        return E, ok

    # -- section-level chart maps ---------------------------------------------

    def display_coords(self, v: Section) -> np.ndarray:
        """Coordinates of v(t) in the display chart of slot t; OutsideChart on failure."""
        out = np.empty_like(self.base_z)
        for t, p in enumerate(v.points):
            try:
                out[t] = self.atlas.transfer(p, self.display[t])
            except OutsideOverlap:
                raise OutsideChart(t) from None
        return out

    def forward(self, v: Section) -> TangentSection:
        """Psi~ : pointwise scaled inverse exponential of a nearby section."""
        W = self.display_coords(v)
        t_idx = np.arange(len(v.points))
        comps, ok, _ = self.forward_batch(W, t_idx)
        if not np.all(ok):
            raise OutsideChart(int(np.argmin(ok)))
        vecs = [TangentVector(self.u.points[t], self.display[t], comps[t])
                for t in t_idx]
        return TangentSection(self.u, vecs)

    def inverse(self, du: TangentSection) -> Section:
        """Psi~^-1 : pointwise exponential of a tangent section of norm < 1."""
        comps = du.comp_in(self.display)
        t_idx = np.arange(len(self.u.points))
        nrm = self.tangent_sup_norm(comps)
        if nrm >= 1.0:
            raise OutsideChart(int(np.argmax(self.tangent_norms(comps))),
                               f"tangent section has norm {nrm:.3g} >= 1")
        E, ok = self.inverse_batch(comps, t_idx)
        if not np.all(ok):
            raise OutsideChart(int(np.argmin(ok)))
        pts = [Point(self.display[t], E[t], t) for t in t_idx]
        return Section(self.atlas, pts)

    def tangent_norms(self, comps: np.ndarray) -> np.ndarray:
        """Scaled-chart norms ||.||_{u(t)} of display-chart components (m, n)."""
        t_idx = np.arange(len(self.u.points))
        out = np.empty(len(t_idx))
        for psi, slots in self._groups().items():
            sel = np.isin(t_idx, slots)
            out[sel] = geometry.tangent_norms_in_frame(
                self.bumps, psi, self.base_z[sel], t_idx[sel], comps[sel])
        return out

    def tangent_sup_norm(self, comps: np.ndarray) -> float:
        return float(np.max(self.tangent_norms(comps)))

    def forward_point(self, q: Point) -> TangentVector:
        t = q.t
        W = self.atlas.transfer(q, self.display[t])[None, :]
        comps, ok, _ = self.forward_batch(W, np.array([t]))
        if not ok[0]:
            raise OutsideChart(t)
        return TangentVector(self.u.points[t], self.display[t], comps[0])

    def inverse_point(self, t: int, comp) -> Point:
        E, ok = self.inverse_batch(np.atleast_2d(np.asarray(comp, dtype=complex)), np.array([t]))
        if not ok[0]:
            raise OutsideChart(t)
        return Point(self.display[t], E[0], t)


def build_normal_chart(u: Section, bumps, seed: int = 23) -> NormalChart:
    """Assemble the chart data: partition, support sets, display charts,
    solvability and comparison constants, radius and scale."""
    pou = partition_of_unity(u, bumps)
    supports = support_sets(pou, u.atlas.grid)
    display = [min(R) for R in supports]

    pairs = sorted({(supports[t], display[t]) for t in range(len(display))},
                   key=lambda p: (sorted(p[0]), p[1]))
    consts = [exp_constants_for(bumps, R, psi, seed) for R, psi in pairs]
    alpha0 = max(c.alpha0 for c in consts)
    beta0 = max(c.beta0 for c in consts)
    delta0a = min(c.delta0a for c in consts)
    ec = ExpConstants(alpha0, beta0, delta0a, delta0a / (2.0 * alpha0))
    mc = metric_constants_for(bumps)

    rho_star = min(ec.delta0a, ec.delta0b / ec.alpha0) / mc.c1a
    scale = 1.0 / rho_star
    base_z = np.array([u.atlas.transfer(p, display[t]) for t, p in enumerate(u.points)])
    nc = NormalChart(bumps, u, pou, supports, display, ec, mc, rho_star, scale, base_z)

    # the section itself must sit at the chart origin
    origin = nc.forward(u)
    if max(float(np.max(np.abs(v.comp))) for v in origin.vectors) > 1e-12:
        raise OutsideChart(-1, "section does not map to the chart origin")
    return nc


# ---------------------------------------------------------------------------
# transitions between normal charts

@dataclass(eq=False)
class TransitionJacobian:
    """Per-slot derivative of Phi~ o Psi~^-1 at a tangent section, plus the
    value F(du) it was taken at."""

    src: NormalChart
    dst: NormalChart
    at: np.ndarray = field(repr=False)       # (m, n) components of du in src display
    value: np.ndarray = field(repr=False)    # (m, n) components of F(du) in dst display
    matrices: np.ndarray = field(repr=False)  # (m, n, n)

    def apply_comps(self, comps: np.ndarray) -> np.ndarray:
        return np.einsum("tij,tj->ti", self.matrices, comps)

    def apply(self, hdot: TangentSection) -> TangentSection:
        comps = hdot.comp_in(self.src.display)
        out = self.apply_comps(comps)
        v_section = self.dst.u
        vecs = [TangentVector(v_section.points[t], self.dst.display[t], out[t])
                for t in range(len(v_section.points))]
        return TangentSection(v_section, vecs)

    def operator_norms(self) -> np.ndarray:
        """Per-slot operator norm between the combined tangent norms."""
        m, n, _ = self.matrices.shape
        src, dst = self.src, self.dst
        t_idx = np.arange(m)
        out = np.empty(m)
        Gs = np.empty((m, n, n), dtype=complex)
        Gd = np.empty((m, n, n), dtype=complex)
        for psi, slots in src._groups().items():
            sel = np.isin(t_idx, slots)
            Gs[sel] = geometry.gram_in_frame(src.bumps, psi, src.base_z[sel], t_idx[sel])
        for psi, slots in dst._groups().items():
            sel = np.isin(t_idx, slots)
            Gd[sel] = geometry.gram_in_frame(dst.bumps, psi, dst.base_z[sel], t_idx[sel])
        for t in range(m):
            ls = np.linalg.cholesky(Gs[t])
            ld = np.linalg.cholesky(Gd[t])
            A = np.conj(ld.T) @ self.matrices[t] @ np.linalg.inv(np.conj(ls.T))
            out[t] = float(np.linalg.svd(A, compute_uv=False)[0])
        return out


def eval_chart_transition(src: NormalChart, dst: NormalChart, comps: np.ndarray,
                          t_idx: np.ndarray):
    """(Phi~ o Psi~^-1) on display components at given slots; returns (out, ok)."""
    E, ok1 = src.inverse_batch(comps, t_idx)
    out = np.zeros_like(comps)
    ok = ok1.copy()
    if np.any(ok1):
        # express the flowed points in dst display charts
        W = np.empty_like(E)
        good = ok1.copy()
        for i in np.where(ok1)[0]:
            t = int(t_idx[i])
            try:
                W[i] = src.atlas.transfer(Point(src.display[t], E[i], t), dst.display[t])
            except OutsideOverlap:
                good[i] = False
        c2, ok2, _ = dst.forward_batch(W[good], t_idx[good])
        idx = np.where(good)[0]
        out[idx] = c2
        ok = good
        ok[idx] &= ok2
    return out, ok


def transition_jacobian(src: NormalChart, dst: NormalChart, du: TangentSection,
                        fd_step: float = 1e-4) -> TransitionJacobian:
    """Pointwise complex Jacobian of the chart transition at du, by central
    differences on each slot and coordinate (batched into two chart-map calls)."""
    m = len(src.u.points)
    n = src.atlas.dim
    at = du.comp_in(src.display)
    t_idx = np.arange(m)
    val, ok = eval_chart_transition(src, dst, at, t_idx)
    if not np.all(ok):
        raise OutsideOverlap(f"tangent section leaves the chart overlap at slot {int(np.argmin(ok))}")

    probes = []
    slots = []
    for j in range(n):
        e = np.zeros((1, n), dtype=complex)
        e[0, j] = fd_step
        for sign in (+1.0, -1.0):
            probes.append(at + sign * e)   # perturb every slot at once: the map is pointwise
            slots.append(t_idx)
    big_comps = np.vstack(probes)
    big_slots = np.concatenate(slots)
    big_out, big_ok = eval_chart_transition(src, dst, big_comps, big_slots)
    if not np.all(big_ok):
        raise OutsideOverlap("finite-difference probe leaves the chart overlap")
    big_out = big_out.reshape(n, 2, m, n)
    mats = np.empty((m, n, n), dtype=complex)
    for j in range(n):
        mats[:, :, j] = (big_out[j, 0] - big_out[j, 1]) / (2.0 * fd_step)
    return TransitionJacobian(src, dst, at, val, mats)


def overlap_margin(src: NormalChart, dst: NormalChart, du: TangentSection,
                   n_dirs: int = 8, bisect_steps: int = 8, rng=None) -> float:
    """Largest perturbation norm (sampled directions, bisection) keeping
    du + h inside the image of the chart overlap."""
    rng = np.random.default_rng(37) if rng is None else rng
    m = len(src.u.points)
    n = src.atlas.dim
    at = du.comp_in(src.display)
    base_norm = src.tangent_sup_norm(at)
    hi_cap = 1.0 - base_norm
    t_idx = np.arange(m)

    dirs = []
    for _ in range(n_dirs):
        raw = rng.normal(size=(m, n)) + 1j * rng.normal(size=(m, n))
        nrm = src.tangent_sup_norm(raw)
        dirs.append(raw / nrm)

    def admissible(s: float) -> bool:
        norms = np.concatenate([src.tangent_norms(at + s * d) for d in dirs])
        if np.max(norms) >= 1.0:
            return False
        comps = np.vstack([at + s * d for d in dirs])
        slots = np.tile(t_idx, len(dirs))
        _, ok = eval_chart_transition(src, dst, comps, slots)
        return bool(np.all(ok))

    lo, hi = 0.0, hi_cap * 0.999
    if admissible(hi):
        return hi
    for _ in range(bisect_steps):
        mid = 0.5 * (lo + hi)
        if admissible(mid):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class RemainderReport:
    """Quadratic-remainder measurements of a chart transition."""

    eps: float
    factor: float                 # 16 n^3 / eps^2
    probe_norms: list
    max_remainders: list          # sup over slots per probe scale
    pointwise_ok: bool
    slope: float

    @property
    def max_ratio(self) -> float:
        return max(r / (self.factor * h * h)
                   for r, h in zip(self.max_remainders, self.probe_norms))


def frechet_remainder_report(src: NormalChart, dst: NormalChart, du: TangentSection,
                             tj: TransitionJacobian, eps: float, halvings: int = 4,
                             rng=None, slack: float = 1.05) -> RemainderReport:
    """Measure ||F(du+h) - F(du) - A(h)|| pointwise against the quadratic bound
    (16 n^3 / eps^2) ||h(t)||^2, then confirm quadratic order by probe halving."""
    rng = np.random.default_rng(41) if rng is None else rng
    m = len(src.u.points)
    n = src.atlas.dim
    at = du.comp_in(src.display)
    t_idx = np.arange(m)
    factor = 16.0 * n ** 3 / eps ** 2

    raw = rng.normal(size=(m, n)) + 1j * rng.normal(size=(m, n))
    raw /= src.tangent_sup_norm(raw)
    probe_norms = []
    max_rems = []
    pointwise_ok = True
    h0 = eps / 4.0
    for k in range(halvings + 1):
        s = h0 / (2 ** k)
        h = s * raw
        out, ok = eval_chart_transition(src, dst, at + h, t_idx)
        if not np.all(ok):
            raise OutsideOverlap("remainder probe leaves the overlap")
        rem = out - tj.value - tj.apply_comps(h)
        rem_norm = dst.tangent_norms(rem)
        h_norm = src.tangent_norms(h)
        if np.any(rem_norm > slack * factor * h_norm ** 2 + 1e-15):
            pointwise_ok = False
        probe_norms.append(float(s))
        max_rems.append(float(np.max(rem_norm)))
    xs = np.log(np.array(probe_norms))
    ys = np.log(np.maximum(np.array(max_rems), 1e-300))
    slope = float(np.polyfit(xs, ys, 1)[0])
    return RemainderReport(eps, factor, probe_norms, max_rems, pointwise_ok, slope)


# ---------------------------------------------------------------------------
# normal-chart certification

def inverse_derivative_norms(nc: NormalChart, comps: np.ndarray, t_idx: np.ndarray,
                             h: float = 1e-5) -> np.ndarray:
    """Operator norms of D(Psi^-1) at scaled components, between combined metrics.

    Finite differences of the chart inverse; the domain norm sits at u(t), the
    target norm at the image point of the flow.
    """
    comps = np.asarray(comps, dtype=complex)
    t_idx = np.asarray(t_idx, dtype=int)
    B, n = comps.shape
    E0, ok0 = nc.inverse_batch(comps, t_idx)
    if not np.all(ok0):
        raise OutsideChart(int(t_idx[np.argmin(ok0)]))
    cols = []
    for j in range(n):
        e = np.zeros((1, n), dtype=complex)
        e[0, j] = h
        Ep, okp = nc.inverse_batch(comps + e, t_idx)
        Em, okm = nc.inverse_batch(comps - e, t_idx)
        if not np.all(okp & okm):
            raise OutsideChart(int(t_idx[np.argmin(okp & okm)]))
        cols.append((Ep - Em) / (2 * h))
    J = np.stack(cols, axis=-1)  # (B, n, n): image-chart response per domain coordinate

    out = np.empty(B)
    for psi, slots in nc._groups().items():
        sel = np.isin(t_idx, slots)
        if not np.any(sel):
            continue
        G_dom = geometry.gram_in_frame(nc.bumps, psi, nc.base_z[t_idx[sel]], t_idx[sel])
        G_img = geometry.gram_in_frame(nc.bumps, psi, E0[sel], t_idx[sel])
        idx = np.where(sel)[0]
        for i, gd, gi in zip(idx, G_dom, G_img):
            ld = np.linalg.cholesky(gd)
            li = np.linalg.cholesky(gi)
            A = np.conj(li.T) @ J[i] @ np.linalg.inv(np.conj(ld.T))
            out[i] = float(np.linalg.svd(A, compute_uv=False)[0])
    return out


def inverse_derivative_sup(nc: NormalChart, per_t: int = 3, rng=None) -> float:
    """Sampled sup over the chart ball of the inverse-derivative operator norm."""
    rng = np.random.default_rng(43) if rng is None else rng
    m = len(nc.u.points)
    n = nc.atlas.dim
    comps_all, slots = [], []
    for t in range(m):
        for _ in range(per_t):
            raw = rng.normal(size=n) + 1j * rng.normal(size=n)
            nrm = nc.tangent_norms(raw[None, :] * np.ones((m, 1)))[t]
            r = rng.choice([0.0, 0.45, 0.9])
            comps_all.append((r / nrm) * raw)
            slots.append(t)
    vals = inverse_derivative_norms(nc, np.array(comps_all), np.array(slots))
    return float(np.max(vals))


@dataclass
class StabilityReport:
    """Outcome of the chart-stability condition at one (r, eps) pair."""

    r: float
    eps: float
    delta: float
    pairs_checked: int
    witnesses: list

    @property
    def ok(self) -> bool:
        return self.pairs_checked > 0 and not self.witnesses


def verify_stability(nc: NormalChart, r: float, eps: float, t_samples: int = 4,
                     q_per_point: int = 10, rng=None) -> StabilityReport:
    """Check: ||Psi(p)|| <= r and d_t(q, p) < delta imply q in the chart and
    ||Psi(q) - Psi(p)||_{u(t)} < eps, with delta from stability_radius."""
    rng = np.random.default_rng(47) if rng is None else rng
    delta = stability_radius(nc.exp_constants, nc.metric_constants, r, eps)
    m = len(nc.u.points)
    ts = list(range(0, m, max(1, m // t_samples)))
    witnesses = []
    gathered = []  # (t, q coords in display chart, d_t, psi_p comps)
    for t in ts:
        psi = nc.display[t]
        raw = rng.normal(size=nc.atlas.dim) + 1j * rng.normal(size=nc.atlas.dim)
        nrm = float(geometry.tangent_norms_in_frame(
            nc.bumps, psi, nc.base_z[t][None, :], np.array([t]), raw[None, :])[0])
        comp_p = (0.98 * r / nrm) * raw  # scaled comps with tangent norm 0.98 r
        p = nc.inverse_point(t, comp_p)

        g = geometry.fiber_graph(nc.bumps, t)
        chart_scale = delta / max(nrm, 1e-12)
        for _ in range(60):
            offs = chart_scale * rng.uniform(0.1, 1.1, size=(q_per_point, 1)) \
                * np.exp(1j * rng.uniform(0, 2 * np.pi, size=(q_per_point, nc.atlas.dim)))
            cand = [Point(psi, np.asarray(p.z) + o, t) for o in offs
                    if np.max(np.abs(np.asarray(p.z) + o)) < 0.999]
            if not cand:
                chart_scale *= 0.5
                continue
            d = g.distances_from(p, cand)
            inside = [(q, dd) for q, dd in zip(cand, d) if 0.0 < dd < delta]
            if inside:
                gathered.extend((t, q.z, dd, comp_p) for q, dd in inside)
                break
            chart_scale *= 0.5

    checked = len(gathered)
    if gathered:
        W = np.array([q_z for _, q_z, _, _ in gathered])
        slots = np.array([t for t, _, _, _ in gathered])
        comps, ok, _ = nc.forward_batch(W, slots)
        for i, (t, _, dd, comp_p) in enumerate(gathered):
            if not ok[i]:
                witnesses.append((t, "q outside chart", dd))
                continue
            diff = (comps[i] - comp_p)[None, :]
            dn = float(geometry.tangent_norms_in_frame(
                nc.bumps, nc.display[t], nc.base_z[t][None, :], np.array([t]), diff)[0])
            if dn >= eps:
                witnesses.append((t, "image moved too far", dn))
    return StabilityReport(r, eps, delta, checked, witnesses)


# ---------------------------------------------------------------------------
# frames and trivialization

@dataclass(eq=False)
class Frame:
    """n tangent sections over one base section."""

    section: Section
    members: list  # of TangentSection

    def at(self, t: int) -> list:
        return [ts.vectors[t] for ts in self.members]


def gram_schmidt_vectors(vectors: np.ndarray, gram: np.ndarray, tol: float = 1e-10):
    """Orthonormalize rows of `vectors` against the Hermitian form `gram`.

    Returns the orthonormal rows; raises ValueError when the family is
    numerically dependent (pivot below tol)."""
    k, n = vectors.shape
    out = np.zeros_like(vectors, dtype=complex)
    for i in range(k):
        v = vectors[i].astype(complex)
        for j in range(i):
            proj = np.conj(out[j]) @ gram @ v
            v = v - proj * out[j]
        nrm2 = float((np.conj(v) @ gram @ v).real)
        if nrm2 <= tol:
            raise ValueError(f"vector {i} is dependent (pivot {nrm2:.3g})")
        out[i] = v / np.sqrt(nrm2)
    return out


def gram_schmidt_frame(bumps, u: Section, frame: Frame):
    """Pointwise orthonormalization of a frame plus the module isomorphism.

    Returns (orthonormal Frame, F, Finv): F sends n grid functions z_k to the
    tangent section sum_k z_k(t) e_k(t); Finv expands a tangent section in the
    orthonormal frame.  Both are pointwise, hence algebra-linear.
    """
    atlas = u.atlas
    m = atlas.grid.size
    n = len(frame.members)
    display = [u.points[t].chart for t in range(m)]
    comps = np.stack([ts.comp_in(display) for ts in frame.members], axis=1)  # (m, n, dim)

    t_idx = np.arange(m)
    base = np.array([p.z for p in u.points])
    grams = np.empty((m, atlas.dim, atlas.dim), dtype=complex)
    for cid in sorted(set(display)):
        sel = np.array([c == cid for c in display])
        grams[sel] = geometry.gram_in_frame(bumps, cid, base[sel], t_idx[sel])

    ortho = np.empty_like(comps)
    for t in range(m):
        fr = comps[t]
        det = float(abs(np.linalg.det(np.conj(fr) @ grams[t] @ fr.T)))
        if det <= 1e-10:
            raise DegenerateFrame(t)
        try:
            ortho[t] = gram_schmidt_vectors(fr, grams[t])
        except ValueError:
            raise DegenerateFrame(t) from None

    members = []
    for k in range(n):
        vecs = [TangentVector(u.points[t], display[t], ortho[t, k]) for t in range(m)]
        members.append(TangentSection(u, vecs))
    o_frame = Frame(u, members)

    def F(module_element) -> TangentSection:
        zs = module_element.components  # (n, m)
        vecs = []
        for t in range(m):
            comp = sum(zs[k, t] * ortho[t, k] for k in range(n))
            vecs.append(TangentVector(u.points[t], display[t], comp))
        return TangentSection(u, vecs)

    def Finv(ts: TangentSection):
        from .algebra import ModuleElement
        comps_in = ts.comp_in(display)  # (m, dim)
        zs = np.empty((n, m), dtype=complex)
        for t in range(m):
            for k in range(n):
                zs[k, t] = np.conj(ortho[t, k]) @ grams[t] @ comps_in[t]
        return ModuleElement(atlas.grid, zs)

    return o_frame, F, Finv
