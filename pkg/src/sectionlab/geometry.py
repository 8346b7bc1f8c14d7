"""Tangent vectors, Hermitian metrics, fiber distances, comparison constants.

Every fiber tangent space carries two inner products: the flat one pulled
back through a single chart, and the combined one, a bump-weighted convex
combination of the flat ones over all charts.  Fiber distance is the capped
infimum of combined-metric curve lengths; we approximate it on a graph whose
nodes sample each chart and whose edges are chart-straight segments, so the
approximation can only overestimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .errors import ChartBreak, NoBumpCoverage, OutsideOverlap
from .family import Point

DISTANCE_CAP = 1.0
CURVE_SUBDIV = 64
EDGE_SUBDIV = 4


@dataclass(eq=False)
class TangentVector:
    """A fiber tangent vector: base point, the chart its components live in, components."""

    point: Point
    chart: str
    comp: np.ndarray

    def __post_init__(self):
        self.comp = np.atleast_1d(np.asarray(self.comp, dtype=complex))

    def __repr__(self):
        return f"TangentVector(at {self.point.chart}:{self.point.z}, in {self.chart}, {self.comp})"


def pushforward(atlas, v: TangentVector, target: str) -> TangentVector:
    """Re-express v in the target chart through the transition Jacobian."""
    if v.chart == target:
        return TangentVector(v.point, target, v.comp.copy())
    z_src = atlas.transfer(v.point, v.chart)
    if not atlas.contains(v.point, target):
        raise OutsideOverlap(f"{v.point} not in chart {target!r}")
    J = atlas.transition(v.chart, target).d1(z_src, v.point.t)
    return TangentVector(v.point, target, J @ v.comp)


def trivial_inner(atlas, cid: str, p: Point, v: TangentVector, w: TangentVector) -> complex:
    """Flat Hermitian product in chart cid: push both vectors there, then <a, b> = sum a conj(b)."""
    a = pushforward(atlas, v, cid).comp
    b = pushforward(atlas, w, cid).comp
    return complex(np.sum(a * np.conj(b)))


def gram_in_frame(bumps, frame: str, Z, T) -> np.ndarray:
    """Gram matrices of the combined metric in the given chart basis, shape (B, n, n).

    G(p) = sum_phi rho_phi(p) J_phi^H J_phi with J_phi the Jacobian of the
    frame -> phi transition at p.
    """
    atlas = bumps.atlas
    Z = np.asarray(Z, dtype=complex)
    T = np.asarray(T, dtype=int)
    B, n = Z.shape
    weights = bumps.weights_in_frame(frame, Z, T)  # (B, C)
    G = np.zeros((B, n, n), dtype=complex)
    eye = np.eye(n, dtype=complex)
    for k, cid in enumerate(atlas.chart_ids):
        w = weights[:, k]
        mask = w > 0.0
        if not np.any(mask):
            continue
        if cid == frame:
            G[mask] += w[mask, None, None] * eye
        else:
            J = atlas.d1_array(frame, cid, Z[mask], T[mask])
            G[mask] += w[mask, None, None] * (np.conj(np.swapaxes(J, -1, -2)) @ J)
    return G


def tangent_norms_in_frame(bumps, frame: str, Z, T, V) -> np.ndarray:
    """Combined-metric norms of vectors V (B, n) given in the frame chart at (Z, T)."""
    G = gram_in_frame(bumps, frame, Z, T)
    V = np.asarray(V, dtype=complex)
    sq = np.einsum("bi,bij,bj->b", np.conj(V), G, V).real
    return np.sqrt(np.maximum(sq, 0.0))


def inner(bumps, p: Point, v: TangentVector, w: TangentVector) -> complex:
    """Combined Hermitian product: bump-weighted sum of flat products."""
    atlas = bumps.atlas
    weights = bumps.rho_all(p)
    if not np.any(weights > 0.0):
        raise NoBumpCoverage(f"all bump weights vanish at {p}")
    total = 0.0 + 0.0j
    for k, cid in enumerate(atlas.chart_ids):
        if weights[k] > 0.0:
            total += weights[k] * trivial_inner(atlas, cid, p, v, w)
    return complex(total)


def norm(bumps, p: Point, v: TangentVector) -> float:
    return float(np.sqrt(max(inner(bumps, p, v, v).real, 0.0)))


# ---------------------------------------------------------------------------
# curve length and fiber distance

def _shared_chart(atlas, p: Point, q: Point) -> str | None:
    for cid in atlas.chart_ids:
        if atlas.contains(p, cid) and atlas.contains(q, cid):
            return cid
    return None


def _segment_lengths(bumps, cid: str, Z0, Z1, t: int, subdiv: int) -> np.ndarray:
    """Combined-metric lengths of straight chart segments, midpoint rule."""
    Z0 = np.asarray(Z0, dtype=complex)
    Z1 = np.asarray(Z1, dtype=complex)
    B = Z0.shape[0]
    V = Z1 - Z0
    total = np.zeros(B)
    T = np.full(B, t)
    for j in range(subdiv):
        s = (j + 0.5) / subdiv
        total += tangent_norms_in_frame(bumps, cid, Z0 + s * V, T, V)
    return total / subdiv


def curve_length(bumps, polyline, subdivisions: int = CURVE_SUBDIV) -> float:
    """Length of a piecewise chart-straight path within one fiber.

    Consecutive points must share a chart (smallest shared id is used);
    each segment is scored by the composite midpoint rule on the combined norm.
    """
    pts = list(polyline)
    if len(pts) < 2:
        return 0.0
    t = pts[0].t
    atlas = bumps.atlas
    total = 0.0
    for p, q in zip(pts[:-1], pts[1:]):
        if q.t != t:
            raise ChartBreak("polyline leaves the fiber")
        cid = _shared_chart(atlas, p, q)
        if cid is None:
            raise ChartBreak(f"no common chart for {p} and {q}")
        z0 = atlas.transfer(p, cid)[None, :]
        z1 = atlas.transfer(q, cid)[None, :]
        total += float(_segment_lengths(bumps, cid, z0, z1, t, subdivisions)[0])
    return total


class FiberGraph:
    """Shortest-path approximation of the fiber distance at one base index.

    Nodes sample every chart on a polar grid; edges join chart-near nodes and
    are scored by straight-segment combined length.  Queries attach the two
    endpoints, connect them to nearby nodes (plus a direct edge when the
    endpoints share a chart), and run Dijkstra.
    """

    def __init__(self, bumps, t: int, n_radii: int = 6, n_angles: int = 12,
                 k_nn: int = 6, subdiv: int = EDGE_SUBDIV):
        self.bumps = bumps
        self.atlas = bumps.atlas
        self.t = int(t)
        alive_charts = self.atlas.charts_at(int(t))
        if len(alive_charts) > 3:
            # keep the node budget flat for many-chart fibers
            n_radii, n_angles, k_nn = 3, 8, 5
        self.k_nn = k_nn
        self.subdiv = subdiv
        nodes = []
        for cid in alive_charts:
            nodes.append((cid, np.zeros(self.atlas.dim, dtype=complex)))
            radii = np.linspace(0.93 / n_radii, 0.93, n_radii)
            for r in radii:
                for a in 2 * np.pi * np.arange(n_angles) / n_angles:
                    z = np.full(self.atlas.dim, r * np.exp(1j * a))
                    nodes.append((cid, z))
        self.node_chart = [c for c, _ in nodes]
        self.node_z = np.array([z for _, z in nodes])
        self.n_nodes = len(nodes)

        # membership of every node in every chart, with coordinates there
        self.members = {}   # cid -> (indices (K,), coords (K, n), KD-tree)
        T = np.full(self.n_nodes, self.t)
        for cid in self.atlas.charts_at(self.t):
            coords = np.empty((self.n_nodes, self.atlas.dim), dtype=complex)
            ok = np.zeros(self.n_nodes, dtype=bool)
            for src in set(self.node_chart):
                sel = np.array([c == src for c in self.node_chart])
                W, good = self.atlas.transfer_array(src, cid, self.node_z[sel], T[sel])
                idx = np.where(sel)[0]
                coords[idx[good]] = W[good]
                ok[idx[good]] = True
            keep = np.where(ok)[0]
            pts2d = np.column_stack([coords[keep].real, coords[keep].imag]).reshape(len(keep), -1)
            self.members[cid] = (keep, coords[keep], cKDTree(pts2d))

        edges = {}
        for cid, (keep, coords, tree) in self.members.items():
            if len(keep) < 2:
                continue
            pts2d = np.column_stack([coords.real, coords.imag]).reshape(len(keep), -1)
            k = min(self.k_nn + 1, len(keep))
            _, nbrs = tree.query(pts2d, k=k)
            local = {int(g): i for i, g in enumerate(keep)}
            pairs = set()
            for i, row in enumerate(nbrs):
                for j in row[1:]:
                    a, b = int(keep[i]), int(keep[int(j)])
                    if a != b:
                        pairs.add((min(a, b), max(a, b)))
            if not pairs:
                continue
            pa = np.array([local[a] for a, _ in pairs])
            pb = np.array([local[b] for _, b in pairs])
            lengths = _segment_lengths(self.bumps, cid, coords[pa], coords[pb], self.t, subdiv)
            for (a, b), L in zip(pairs, lengths):
                key = (a, b)
                if key not in edges or L < edges[key]:
                    edges[key] = float(L)
        self._edges = edges

    @property
    def _base_coo(self):
        if not hasattr(self, "_base_arrays"):
            if self._edges:
                ab = np.array(list(self._edges.keys()), dtype=int)
                w = np.array(list(self._edges.values()))
                rows = np.concatenate([ab[:, 0], ab[:, 1]])
                cols = np.concatenate([ab[:, 1], ab[:, 0]])
                data = np.concatenate([w, w])
            else:
                rows = cols = np.zeros(0, dtype=int)
                data = np.zeros(0)
            self._base_arrays = (rows, cols, data)
        return self._base_arrays

    def _augmented_matrix(self, extra_points):
        """Base matrix plus the extra points, connected to their chart-nearest
        nodes; the first extra (the source) also gets direct edges to every
        other extra that shares a chart with it.  Edge weights are computed in
        one batch per chart."""
        base = self.n_nodes
        coords_of = []  # per extra: {cid: coords}
        for p in extra_points:
            charts = {}
            for cid in self.atlas.charts_at(self.t):
                try:
                    charts[cid] = self.atlas.transfer(p, cid)
                except OutsideOverlap:
                    continue
            coords_of.append(charts)

        rows, cols, data = [np.asarray(a) for a in self._base_coo]
        new_r, new_c = [], []
        seg_src, seg_dst = {}, {}  # per chart: coordinate stacks for one batched call
        seg_slots = {}
        for k, charts in enumerate(coords_of):
            gi = base + k
            for cid, zc in charts.items():
                keep, node_coords, tree = self.members[cid]
                if len(keep) == 0:
                    continue
                k_q = min(8, len(keep))
                _, nbrs = tree.query(np.concatenate([zc.real, zc.imag]), k=k_q)
                nbrs = np.atleast_1d(nbrs)
                for j in nbrs:
                    seg_src.setdefault(cid, []).append(zc)
                    seg_dst.setdefault(cid, []).append(node_coords[int(j)])
                    seg_slots.setdefault(cid, []).append((gi, int(keep[int(j)])))
            if k > 0:
                shared = sorted(set(coords_of[0]) & set(charts))
                for cid in shared:
                    seg_src.setdefault(cid, []).append(coords_of[0][cid])
                    seg_dst.setdefault(cid, []).append(charts[cid])
                    seg_slots.setdefault(cid, []).append((base, gi))
        edge_best = {}
        for cid in seg_src:
            L = _segment_lengths(self.bumps, cid, np.array(seg_src[cid]),
                                 np.array(seg_dst[cid]), self.t, self.subdiv)
            for (a, b), ln in zip(seg_slots[cid], L):
                key = (min(a, b), max(a, b))
                if key not in edge_best or ln < edge_best[key]:
                    edge_best[key] = float(ln)
        if edge_best:
            ab = np.array(list(edge_best.keys()), dtype=int)
            w = np.array(list(edge_best.values()))
            new_r = np.concatenate([ab[:, 0], ab[:, 1]])
            new_c = np.concatenate([ab[:, 1], ab[:, 0]])
            rows = np.concatenate([rows, new_r])
            cols = np.concatenate([cols, new_c])
            data = np.concatenate([data, np.concatenate([w, w])])
        n = base + len(extra_points)
        return csr_matrix((data, (rows, cols)), shape=(n, n))

    def distances_from(self, p: Point, targets) -> np.ndarray:
        """Capped graph distances from p to each target point (one Dijkstra)."""
        targets = list(targets)
        mat = self._augmented_matrix([p] + targets)
        d = dijkstra(mat, indices=self.n_nodes, directed=False)
        out = d[self.n_nodes + 1: self.n_nodes + 1 + len(targets)]
        return np.minimum(out, DISTANCE_CAP)

    def distance(self, p: Point, q: Point) -> float:
        if self.atlas.points_equal(p, q):
            return 0.0
        return float(self.distances_from(p, [q])[0])


def fiber_graph(bumps, t: int) -> FiberGraph:
    """Cached fiber graph for a bump system at base index t."""
    if t not in bumps._graphs:
        bumps._graphs[t] = FiberGraph(bumps, t)
    return bumps._graphs[t]


def fiber_distance(bumps, p: Point, q: Point) -> float:
    """Capped shortest-path approximation of the fiber distance."""
    if p.t != q.t:
        raise ChartBreak("points lie in different fibers")
    return fiber_graph(bumps, p.t).distance(p, q)


def _point_list(u):
    return list(u.points) if hasattr(u, "points") else list(u)


def section_distance(bumps, u, v) -> float:
    """sup over the grid of the fiber distances between section values."""
    pu, pv = _point_list(u), _point_list(v)
    if len(pu) != len(pv):
        raise ValueError("sections live on different grids")
    return max(fiber_distance(bumps, a, b) for a, b in zip(pu, pv))


# ---------------------------------------------------------------------------
# comparison constants

@dataclass(frozen=True)
class MetricConstants:
    """Estimated comparison constants, inflated by a safety factor.

    c1a bounds flat-by-combined, c1b the reverse; delta2 is a fiber-distance
    radius inside which chart membership is guaranteed and c2 the Lipschitz
    factor of chart coordinates against fiber distance there.
    """

    c1a: float
    c1b: float
    delta2: float | None = None
    c2: float | None = None

    def merged(self, other: "MetricConstants") -> "MetricConstants":
        return MetricConstants(
            self.c1a if self.c1a is not None else other.c1a,
            self.c1b if self.c1b is not None else other.c1b,
            other.delta2 if self.delta2 is None else self.delta2,
            other.c2 if self.c2 is None else self.c2,
        )


def _chart_regions(bumps, n_radii=5, n_angles=8):
    """Sample points of each chart's comparison region: the closed
    (r0+1)/2-polydisk over the grid closure of the shrunken base domain."""
    atlas = bumps.atlas
    rad = (bumps.r0 + 1.0) / 2.0
    for cid in atlas.chart_ids:
        base = atlas.grid.closure(bumps.compact.base_domains[cid]) & atlas.base_domain(cid)
        if not base:
            continue
        radii = np.linspace(0.0, rad * 0.999, n_radii)
        zs = [np.zeros(atlas.dim, dtype=complex)]
        for r in radii[1:]:
            for a in 2 * np.pi * np.arange(n_angles) / n_angles:
                zs.append(np.full(atlas.dim, r * np.exp(1j * a)))
        yield cid, np.array(zs), sorted(base)


def estimate_metric_constants(bumps, inflate: float = 1.25,
                              n_radii: int = 5, n_angles: int = 8) -> MetricConstants:
    """Largest sampled norm ratios between flat chart metrics and the combined
    metric over each chart's comparison region, inflated by the safety factor."""
    worst_a = 0.0  # flat <= c1a * combined
    worst_b = 0.0  # combined <= c1b * flat
    for cid, zs, base in _chart_regions(bumps, n_radii, n_angles):
        for t in base:
            G = gram_in_frame(bumps, cid, zs, np.full(len(zs), t))
            lam = np.linalg.eigvalsh(G)
            lam_min = np.min(lam, axis=-1)
            lam_max = np.max(lam, axis=-1)
            if np.any(lam_min <= 0.0):
                raise NoBumpCoverage(f"combined metric degenerate in chart {cid} at t={t}")
            worst_a = max(worst_a, float(np.max(1.0 / np.sqrt(lam_min))))
            worst_b = max(worst_b, float(np.max(np.sqrt(lam_max))))
    return MetricConstants(inflate * worst_a, inflate * worst_b)


def revalidate_metric_constants(bumps, mc: MetricConstants, samples: int = 200, rng=None) -> dict:
    """Fresh-sample check of the two defining inequalities; returns a report dict."""
    rng = np.random.default_rng(7) if rng is None else rng
    atlas = bumps.atlas
    rad = (bumps.r0 + 1.0) / 2.0
    worst_a = worst_b = 0.0
    for cid in atlas.chart_ids:
        base = sorted(atlas.grid.closure(bumps.compact.base_domains[cid]) & atlas.base_domain(cid))
        if not base:
            continue
        m = max(4, samples // max(1, len(atlas.chart_ids)))
        r = rad * np.sqrt(rng.uniform(0, 1, size=(m, atlas.dim)))
        th = rng.uniform(0, 2 * np.pi, size=(m, atlas.dim))
        Z = r * np.exp(1j * th)
        T = np.asarray(rng.choice(base, size=m))
        V = rng.normal(size=(m, atlas.dim)) + 1j * rng.normal(size=(m, atlas.dim))
        flat = np.linalg.norm(V, axis=-1)
        comb = tangent_norms_in_frame(bumps, cid, Z, T, V)
        worst_a = max(worst_a, float(np.max(flat / comb)))
        worst_b = max(worst_b, float(np.max(comb / flat)))
    return {
        "c1a_ok": worst_a <= mc.c1a,
        "c1b_ok": worst_b <= mc.c1b,
        "max_flat_over_combined": worst_a,
        "max_combined_over_flat": worst_b,
    }


def estimate_chart_constants(bumps, inflate: float = 1.25, rng=None,
                             p_per_chart: int = 6, q_per_p: int = 24,
                             ladder=None) -> MetricConstants:
    """Graded-distance sampling for the chart-membership radius delta2 and the
    chart Lipschitz constant c2.

    Pairs (p, q) are sampled around region points p at graded chart offsets
    (in the home chart and in every other chart); delta2 is the largest tested
    radius such that every sampled q with d_t(q, p) below it stays in the
    chart, and c2 inflates the largest observed ratio |phi(q)-phi(p)| / d_t.
    """
    rng = np.random.default_rng(11) if rng is None else rng
    atlas = bumps.atlas
    if ladder is None:
        ladder = [0.15, 0.1, 0.07, 0.05, 0.035, 0.025, 0.017, 0.012, 0.008]
    rad = (bumps.r0 + 1.0) / 2.0

    n_charts = len(atlas.chart_ids)
    t_count = 3 if n_charts <= 3 else 1
    records = []  # (cid, d_t, in_chart, flat_dist)
    for cid in atlas.chart_ids:
        base = sorted(atlas.grid.closure(bumps.compact.base_domains[cid]) & atlas.base_domain(cid))
        if not base:
            continue
        ts = base[:: max(1, len(base) // t_count)][:t_count]
        for t in ts:
            g = fiber_graph(bumps, t)
            for _ in range(max(1, p_per_chart // len(ts))):
                rr = rad * np.sqrt(rng.uniform(0.2, 1.0))
                zp = np.full(atlas.dim, rr * np.exp(1j * rng.uniform(0, 2 * np.pi)))
                p = Point(cid, zp, t)
                qs = []
                # graded offsets in the home chart
                for _ in range(q_per_p // 2):
                    delta = rng.choice(ladder) * rng.uniform(0.3, 1.4)
                    dq = delta * np.exp(1j * rng.uniform(0, 2 * np.pi, size=atlas.dim))
                    qz = zp + dq
                    if np.max(np.abs(qz)) < 0.999:
                        qs.append(Point(cid, qz, t))
                # points sampled in the other charts, including outside this one
                for other in atlas.chart_ids:
                    if other == cid or t not in atlas.base_domain(other):
                        continue
                    for _ in range(max(1, q_per_p // (2 * max(1, len(atlas.chart_ids) - 1)))):
                        r2 = 0.95 * np.sqrt(rng.uniform(0, 1))
                        qz = np.full(atlas.dim, r2 * np.exp(1j * rng.uniform(0, 2 * np.pi)))
                        qs.append(Point(other, qz, t))
                if not qs:
                    continue
                dists = g.distances_from(p, qs)
                for q, d in zip(qs, dists):
                    if d <= 0.0:
                        continue
                    in_chart = atlas.contains(q, cid)
                    flat = np.inf
                    if in_chart:
                        flat = float(np.linalg.norm(atlas.transfer(q, cid) - zp))
                    records.append((d, in_chart, flat))

    for delta in ladder:
        inside = [(d, ok, flat) for (d, ok, flat) in records if d < delta]
        if inside and all(ok for _, ok, _ in inside):
            ratios = [flat / d for d, ok, flat in inside]
            return MetricConstants(None, None, float(delta), float(inflate * max(ratios)))
    # even the smallest ladder radius failed: shrink geometrically
    delta = ladder[-1]
    for _ in range(6):
        delta *= 0.5
        inside = [(d, ok, flat) for (d, ok, flat) in records if d < delta]
        if inside and all(ok for _, ok, _ in inside):
            ratios = [flat / d for d, ok, flat in inside]
            return MetricConstants(None, None, float(delta), float(inflate * max(ratios)))
    raise NoBumpCoverage("could not certify any chart-membership radius")


def revalidate_chart_constants(bumps, mc: MetricConstants, samples: int = 120, rng=None) -> dict:
    """Fresh pairs: d_t(q,p) < delta2 must imply chart membership and the c2 bound."""
    rng = np.random.default_rng(13) if rng is None else rng
    atlas = bumps.atlas
    rad = (bumps.r0 + 1.0) / 2.0
    checked = 0
    worst_ratio = 0.0
    ok = True
    for cid in atlas.chart_ids:
        base = sorted(atlas.grid.closure(bumps.compact.base_domains[cid]) & atlas.base_domain(cid))
        if not base:
            continue
        t = base[len(base) // 2]
        g = fiber_graph(bumps, t)
        m = max(2, samples // (2 * max(1, len(atlas.chart_ids))))
        for _ in range(m):
            rr = rad * np.sqrt(rng.uniform(0.2, 1.0))
            zp = np.full(atlas.dim, rr * np.exp(1j * rng.uniform(0, 2 * np.pi)))
            p = Point(cid, zp, t)
            offs = mc.delta2 * rng.uniform(0.1, 1.5, size=4)
            qs = [Point(cid, zp + o * np.exp(1j * rng.uniform(0, 2 * np.pi, size=atlas.dim)), t)
                  for o in offs if np.max(np.abs(zp) + o) < 0.999]
            if not qs:
                continue
            dists = g.distances_from(p, qs)
            for q, d in zip(qs, dists):
                if d <= 0.0 or d >= mc.delta2:
                    continue
                checked += 1
                if not atlas.contains(q, cid):
                    ok = False
                    continue
                ratio = float(np.linalg.norm(atlas.transfer(q, cid) - zp)) / d
                worst_ratio = max(worst_ratio, ratio)
                if ratio > mc.c2:
                    ok = False
    return {"delta2_c2_ok": ok, "pairs_checked": checked, "max_ratio": worst_ratio}
