"""Weighted holomorphic sprays, the fiberwise exponential map, and its inverse.

A weighting c over a chart subset R mixes the trivial (straight-line)
connections of the member charts.  Displayed in a chart psi of R, the mixed
spray is the quadratic field

    d/ds zdot_k = - sum_ij ( sum_phi c_phi Gamma(phi,psi)_ij^k(z,t) ) zdot_i zdot_j,
    d/ds z_k   = zdot_k,

with transformed coefficients built from first derivatives of phi<-psi and
second derivatives of psi<-phi.  The exponential map is the time-1 flow
(fixed-step RK4, guarded so the trajectory stays inside the display polydisk
of radius (r0+1)/2 and inside every supported chart); its inverse is the
fixed-point iteration x -> x - (e(x) - w), valid because the velocity
derivative of the flow is the identity at zero velocity.  A Picard iteration
on the integral form of the same ODE is kept as an independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainEscape, NoConvergence, NonFinite, OutsideOverlap
from .family import Point

RK4_STEPS = 64
PICARD_NODES = 256
PICARD_MAX_ITER = 80
INVERSE_TOL = 1e-12
INVERSE_MAX_ITER = 200
FD_STEP = 1e-5


# ---------------------------------------------------------------------------
# weightings

@dataclass(frozen=True)
class Weighting:
    """A point of the weight simplex supported on a chart subset R."""

    chart_ids: tuple
    values: np.ndarray = field(repr=False)
    support: frozenset

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if np.any(v < -1e-12) or abs(float(np.sum(v)) - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        for cid, w in zip(self.chart_ids, v):
            if w > 0 and cid not in self.support:
                raise ValueError(f"weight on {cid} outside the support set")

    def __getitem__(self, cid: str) -> float:
        return float(self.values[self.chart_ids.index(cid)])


def dirac_weighting(chart_ids, support, cid: str) -> Weighting:
    v = np.zeros(len(chart_ids))
    v[list(chart_ids).index(cid)] = 1.0
    return Weighting(tuple(chart_ids), v, frozenset(support))


def vertex_weightings(chart_ids, support) -> list:
    return [dirac_weighting(chart_ids, support, cid) for cid in sorted(support)]


def barycenter_weighting(chart_ids, support) -> Weighting:
    v = np.zeros(len(chart_ids))
    sup = sorted(support)
    for cid in sup:
        v[list(chart_ids).index(cid)] = 1.0 / len(sup)
    return Weighting(tuple(chart_ids), v, frozenset(support))


def random_weightings(chart_ids, support, k: int, rng) -> list:
    sup = sorted(support)
    out = []
    for _ in range(k):
        raw = rng.exponential(size=len(sup))
        raw /= raw.sum()
        v = np.zeros(len(chart_ids))
        for cid, w in zip(sup, raw):
            v[list(chart_ids).index(cid)] = w
        out.append(Weighting(tuple(chart_ids), v, frozenset(support)))
    return out


# ---------------------------------------------------------------------------
# Christoffel coefficients of a trivial connection in a foreign chart

def christoffel(atlas, phi: str, psi: str, z, t) -> np.ndarray:
    """Transformed coefficients Gamma(phi,psi)^k_ij(z,t), shape (..., n, n, n).

    Built from the display of the chart-phi straight-line connection in
    chart-psi coordinates:

        Gamma^k_ij = - sum_lm  d2(psi<-phi)_k[l,m] at (phi<-psi)(z)
                              * d1(phi<-psi)_l[i](z) * d1(phi<-psi)_m[j](z)

    Symmetric in (i, j).  Raises OutsideOverlap when z is not carried into
    chart phi.
    """
    z = np.asarray(z, dtype=complex)
    single = z.ndim == 1
    Z = z[None, :] if single else z
    T = np.full(Z.shape[0], t) if np.ndim(t) == 0 else np.asarray(t, dtype=int)
    if phi == psi:
        out = np.zeros(Z.shape[:-1] + (atlas.dim,) * 3, dtype=complex)
        return out[0] if single else out

    to_phi = atlas.transition(psi, phi)
    to_psi = atlas.transition(phi, psi)
    ok = to_phi.defined(Z, T)
    if not np.all(ok):
        raise OutsideOverlap("point leaves the chart overlap")
    W = to_phi.value(Z, T)
    A = to_phi.d1(Z, T)              # (B, n, n): d (phi)_l / d (psi)_i
    H = to_psi.d2(W, T)              # (B, n, n, n): d2 (psi)_k / d (phi)_l d (phi)_m
    G = -np.einsum("bklm,bli,bmj->bkij", H, A, A)
    return G[0] if single else G


# ---------------------------------------------------------------------------
# spray contexts and batches

@dataclass(frozen=True)
class SprayContext:
    """One weighted spray: support set R, display chart psi in R, base index t,
    weighting c with support inside R."""

    bumps: object
    support: tuple
    psi: str
    t: int
    weighting: Weighting

    def __post_init__(self):
        if self.psi not in self.support:
            raise ValueError("display chart must belong to the support set")
        if not self.weighting.support <= set(self.support):
            raise ValueError("weighting supported outside R")

    @property
    def atlas(self):
        return self.bumps.atlas

    @property
    def guard_radius(self) -> float:
        return (self.bumps.r0 + 1.0) / 2.0

    def batch(self, size: int) -> "SprayBatch":
        cids = self.atlas.chart_ids
        sup = np.array([[cid in self.support for cid in cids]] * size)
        w = np.array([[self.weighting[cid] if cid in self.support else 0.0 for cid in cids]] * size)
        return SprayBatch(self.bumps, self.psi, np.full(size, self.t), sup, w)


class SprayBatch:
    """Vector of spray problems sharing one display chart.

    Per sample: a base index, a support mask over all charts, and weights.
    Samples are integrated together; ones that leave the display domain are
    frozen and flagged rather than aborting the batch.
    """

    def __init__(self, bumps, psi: str, t_idx, support_mask, weights):
        self.bumps = bumps
        self.atlas = bumps.atlas
        self.psi = psi
        self.t_idx = np.asarray(t_idx, dtype=int)
        self.support = np.asarray(support_mask, dtype=bool)
        self.weights = np.asarray(weights, dtype=float)
        self.guard = (bumps.r0 + 1.0) / 2.0
        self.size = len(self.t_idx)

    def field(self, Zdot, Z, alive):
        """Spray field at (Zdot, Z); returns (dZdot, dZ, ok) with ok the mask of
        samples whose position stayed inside the display domain."""
        n = self.atlas.dim
        B = self.size
        ok = alive & (np.max(np.abs(Z), axis=-1) < self.guard) & np.isfinite(Z).all(axis=-1)
        Gc = np.zeros((B, n, n, n), dtype=complex)
        cids = self.atlas.chart_ids
        for k, cid in enumerate(cids):
            if cid == self.psi:
                continue  # trivial display: zero coefficients (the global guard covers it)
            sel = ok & self.support[:, k]
            if not np.any(sel):
                continue
            W, good = self.atlas.transfer_array(self.psi, cid, Z[sel], self.t_idx[sel], radius=self.guard)
            sel_idx = np.where(sel)[0]
            ok[sel_idx[~good]] = False
            use = sel_idx[good]
            if len(use) == 0:
                continue
            wts = self.weights[use, k]
            if np.any(wts > 0.0):
                to_phi = self.atlas.transition(self.psi, cid)
                to_psi = self.atlas.transition(cid, self.psi)
                A = to_phi.d1(Z[use], self.t_idx[use])
                H = to_psi.d2(W[good], self.t_idx[use])
                if n == 1:
                    g = -(H[:, 0, 0, 0] * A[:, 0, 0] * A[:, 0, 0])
                    Gc[use, 0, 0, 0] += wts * g
                else:
                    G = -np.einsum("bklm,bli,bmj->bkij", H, A, A)
                    Gc[use] += wts[:, None, None, None] * G
        if n == 1:
            dZdot = -(Gc[:, 0, 0, 0] * Zdot[:, 0] * Zdot[:, 0])[:, None]
        else:
            dZdot = -np.einsum("bkij,bi,bj->bk", Gc, Zdot, Zdot)
        dZ = Zdot.copy()
        dZdot[~ok] = 0.0
        dZ[~ok] = 0.0
        return dZdot, dZ, ok

    # -- time-1 flow (RK4) --------------------------------------------------

    def flow(self, Zdot0, Z0, steps: int = RK4_STEPS, want_path: bool = False):
        """Integrate the spray on [0, 1]; returns (Edot, E, alive[, path]).

        path, when requested, has shape (steps+1, B, 2, n) holding (zdot, z)
        at every node for the samples that stayed alive.
        """
        Zd = np.array(Zdot0, dtype=complex, copy=True)
        Z = np.array(Z0, dtype=complex, copy=True)
        alive = np.ones(self.size, dtype=bool)
        h = 1.0 / steps
        path = [np.stack([Zd, Z], axis=1)] if want_path else None
        # initial-state guard
        _, _, alive = self.field(Zd, Z, alive)
        for _ in range(steps):
            k1d, k1z, ok1 = self.field(Zd, Z, alive)
            k2d, k2z, ok2 = self.field(Zd + 0.5 * h * k1d, Z + 0.5 * h * k1z, ok1)
            k3d, k3z, ok3 = self.field(Zd + 0.5 * h * k2d, Z + 0.5 * h * k2z, ok2)
            k4d, k4z, ok4 = self.field(Zd + h * k3d, Z + h * k3z, ok3)
            step_ok = ok4
            newZd = Zd + (h / 6.0) * (k1d + 2 * k2d + 2 * k3d + k4d)
            newZ = Z + (h / 6.0) * (k1z + 2 * k2z + 2 * k3z + k4z)
            inside = np.max(np.abs(newZ), axis=-1) < self.guard
            step_ok = step_ok & inside
            Zd = np.where(step_ok[:, None], newZd, Zd)
            Z = np.where(step_ok[:, None], newZ, Z)
            alive = step_ok
            if want_path:
                path.append(np.stack([Zd, Z], axis=1))
        if not np.all(np.isfinite(Zd)) or not np.all(np.isfinite(Z)):
            alive = alive & np.isfinite(Zd).all(axis=-1) & np.isfinite(Z).all(axis=-1)
        if want_path:
            return Zd, Z, alive, np.array(path)
        return Zd, Z, alive

    # -- inverse by fixed point ----------------------------------------------

    def inverse(self, W, Z0, tol: float = INVERSE_TOL, max_iter: int = INVERSE_MAX_ITER):
        """Solve e(zdot) = W for zdot by the update zdot <- zdot - (e(zdot) - W).

        Returns (Zdot, ok, updates) where updates is the per-iteration list of
        max update norms of the still-active samples (contraction diagnostics).
        """
        W = np.asarray(W, dtype=complex)
        Z0 = np.asarray(Z0, dtype=complex)
        Zdot = np.zeros_like(W)
        active = np.ones(self.size, dtype=bool)
        ok = np.ones(self.size, dtype=bool)
        updates = []
        per_sample_prev = None
        for _ in range(max_iter):
            Ed, E, alive = self.flow(Zdot, Z0)
            ok = ok & alive
            active = active & ok
            resid = E - W
            rn = np.max(np.abs(resid), axis=-1)
            step = np.where((active & (rn > tol))[:, None], resid, 0.0)
            if not np.any(np.abs(step) > 0):
                break
            Zdot = Zdot - step
            updates.append(float(np.max(rn[active], initial=0.0)))
            per_sample_prev = rn
        else:
            raise NoConvergence("inverse iteration exhausted its budget")
        del per_sample_prev
        conv = ok & (np.max(np.abs(resid), axis=-1) <= 10 * tol)
        return Zdot, conv, updates


# ---------------------------------------------------------------------------
# scalar front ends

def spray_field(ctx: SprayContext, zdot, z):
    """Right-hand side of the spray ODE at one state; raises OutsideOverlap
    if the point is not in the display domain."""
    b = ctx.batch(1)
    dzd, dz, ok = b.field(np.atleast_2d(np.asarray(zdot, dtype=complex)),
                          np.atleast_2d(np.asarray(z, dtype=complex)),
                          np.ones(1, dtype=bool))
    if not ok[0]:
        raise OutsideOverlap("state outside the display domain")
    return dzd[0], dz[0]


def exp_map(ctx: SprayContext, zdot, z, steps: int = RK4_STEPS, want_path: bool = False):
    """Time-1 value of the spray flow from (zdot, z): the exponential display.

    DomainEscape signals that (zdot, z, t, c) is outside the solvability set.
    """
    b = ctx.batch(1)
    res = b.flow(np.atleast_2d(np.asarray(zdot, dtype=complex)),
                 np.atleast_2d(np.asarray(z, dtype=complex)), steps, want_path)
    Ed, E, alive = res[:3]
    if not alive[0]:
        raise DomainEscape("trajectory left the display polydisk")
    if not (np.all(np.isfinite(Ed)) and np.all(np.isfinite(E))):
        raise NonFinite("flow produced non-finite values")
    if want_path:
        return Ed[0], E[0], res[3][:, 0]
    return Ed[0], E[0]


def picard_exp(ctx: SprayContext, zdot, z, iterations: int = PICARD_MAX_ITER,
               nodes: int = PICARD_NODES, tol: float = 1e-13):
    """Independent oracle: fixed-point (Picard) iteration on the integral form
    of the spray ODE, on a trapezoid grid decoupled from the RK4 stepping.

    Returns (edot, e, diffs) with diffs the successive sup-norm changes.
    """
    zdot = np.atleast_1d(np.asarray(zdot, dtype=complex))
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    n = len(z)
    K = nodes
    b = SprayBatch(ctx.bumps, ctx.psi,
                   np.full(K + 1, ctx.t),
                   np.array([[cid in ctx.support for cid in ctx.atlas.chart_ids]] * (K + 1)),
                   np.array([[ctx.weighting[cid] if cid in ctx.support else 0.0
                              for cid in ctx.atlas.chart_ids]] * (K + 1)))
    h = 1.0 / K
    X = np.empty((K + 1, 2, n), dtype=complex)
    X[:, 0] = zdot
    X[:, 1] = z
    diffs = []
    for _ in range(iterations):
        Fd, Fz, ok = b.field(X[:, 0], X[:, 1], np.ones(K + 1, dtype=bool))
        if not np.all(ok):
            raise DomainEscape("Picard iterate left the display polydisk")
        F = np.stack([Fd, Fz], axis=1)
        # cumulative trapezoid along the node axis
        avg = 0.5 * (F[1:] + F[:-1]) * h
        cum = np.concatenate([np.zeros((1, 2, n), dtype=complex), np.cumsum(avg, axis=0)])
        Xn = np.empty_like(X)
        Xn[:, 0] = zdot
        Xn[:, 1] = z
        Xn += cum
        d = float(np.max(np.abs(Xn - X)))
        diffs.append(d)
        X = Xn
        if d < tol:
            return X[-1, 0], X[-1, 1], diffs
    raise NoConvergence("Picard iteration did not reach its tolerance")


def inverse_exp(ctx: SprayContext, w, z, tol: float = INVERSE_TOL,
                max_iter: int = INVERSE_MAX_ITER):
    """Velocity zdot with exp(zdot, z) = w, by the contraction update."""
    b = ctx.batch(1)
    Zdot, conv, updates = b.inverse(np.atleast_2d(np.asarray(w, dtype=complex)),
                                    np.atleast_2d(np.asarray(z, dtype=complex)),
                                    tol, max_iter)
    if not conv[0]:
        raise NoConvergence("inverse iteration failed")
    return Zdot[0], updates


# ---------------------------------------------------------------------------
# solvability constants

@dataclass(frozen=True)
class ExpConstants:
    """Sampled flow constants: derivative bounds of the exponential display and
    its inverse, and certified velocity/target radii."""

    alpha0: float   # sup ||D_zdot e|| over the certified velocity ball
    beta0: float    # sup ||D_w h|| over the certified target ball
    delta0a: float  # velocity radius with no domain escapes
    delta0b: float  # target radius, delta0a / (2 alpha0)

    def __post_init__(self):
        for name in ("alpha0", "beta0", "delta0a", "delta0b"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def _region_base(bumps, support) -> list:
    grid = bumps.atlas.grid
    ts = None
    for cid in support:
        cl = grid.closure(bumps.compact.base_domains[cid]) & bumps.atlas.base_domain(cid)
        ts = cl if ts is None else (ts & cl)
    return sorted(ts or [])


def sample_region(bumps, support, psi: str, count: int, rng):
    """Sample (z, t) with t in the common shrunken base closure and the point
    inside every member chart's closed r0-polydisk (displayed in psi)."""
    atlas = bumps.atlas
    ts = _region_base(bumps, support)
    if not ts:
        raise OutsideOverlap(f"empty common base for {sorted(support)}")
    Z_out, T_out = [], []
    tries = 0
    while len(Z_out) < count and tries < 200:
        tries += 1
        m = 4 * count
        r = bumps.r0 * 0.999 * np.sqrt(rng.uniform(0, 1, size=(m, atlas.dim)))
        th = rng.uniform(0, 2 * np.pi, size=(m, atlas.dim))
        Z = r * np.exp(1j * th)
        T = np.asarray(rng.choice(ts, size=m))
        ok = np.ones(m, dtype=bool)
        for cid in support:
            _, good = atlas.transfer_array(psi, cid, Z, T, radius=bumps.r0)
            ok &= good
        Z_out.extend(Z[ok])
        T_out.extend(T[ok])
    if len(Z_out) < count:
        raise OutsideOverlap(f"could not sample the common region for {sorted(support)}")
    return np.asarray(Z_out[:count]), np.asarray(T_out[:count], dtype=int)


def _directions(n: int, k: int, rng) -> np.ndarray:
    axes = np.eye(n, dtype=complex)
    dirs = [axes[j] for j in range(n)] + [1j * axes[j] for j in range(n)]
    extra = rng.normal(size=(k, n)) + 1j * rng.normal(size=(k, n))
    extra /= np.linalg.norm(extra, axis=1)[:, None]
    return np.vstack([dirs, extra])


def _batch_for(bumps, support, psi, T, weights_list):
    cids = bumps.atlas.chart_ids
    reps = len(weights_list)
    T_full = np.tile(T, reps)
    sup_row = np.array([cid in support for cid in cids])
    sup = np.tile(sup_row, (len(T_full), 1))
    w_rows = []
    for wv in weights_list:
        row = np.array([wv[cid] if cid in support else 0.0 for cid in cids])
        w_rows.append(np.tile(row, (len(T), 1)))
    W = np.vstack(w_rows)
    return SprayBatch(bumps, psi, T_full, sup, W), T_full


def _flow_jacobian(batch: SprayBatch, Zdot, Z, h: float = FD_STEP):
    """Central-difference complex Jacobian of e with respect to zdot, (B, n, n)."""
    B, n = Zdot.shape
    cols = []
    ok_all = np.ones(B, dtype=bool)
    for j in range(n):
        e = np.zeros((1, n), dtype=complex)
        e[0, j] = h
        _, Ep, ok1 = batch.flow(Zdot + e, Z)
        _, Em, ok2 = batch.flow(Zdot - e, Z)
        ok_all &= ok1 & ok2
        cols.append((Ep - Em) / (2 * h))
    J = np.stack(cols, axis=-1)
    return J, ok_all


def estimate_exp_constants(bumps, support, psi: str, rng=None,
                           n_points: int = 16, n_random_weights: int = 8,
                           inflate: float = 1.25) -> ExpConstants:
    """Sampled solvability constants for one (support, display) pair.

    delta0a: largest radius of a descending ladder such that every sampled
    flight with that initial speed stays inside the display domain;
    alpha0/beta0: inflated maxima of the flow and inverse-flow derivative
    norms over the certified balls; delta0b = delta0a / (2 alpha0).
    """
    rng = np.random.default_rng(23) if rng is None else rng
    atlas = bumps.atlas
    support = frozenset(support)
    Z, T = sample_region(bumps, support, psi, n_points, rng)
    weights = (vertex_weightings(atlas.chart_ids, support)
               + [barycenter_weighting(atlas.chart_ids, support)]
               + random_weightings(atlas.chart_ids, support, n_random_weights, rng))
    batch, T_full = _batch_for(bumps, support, psi, T, weights)
    Z_full = np.tile(Z, (len(weights), 1))
    dirs = _directions(atlas.dim, 4, rng)

    halfwidth = (1.0 - bumps.r0) / 2.0
    ladder = halfwidth * np.array([0.9, 0.75, 0.6, 0.5, 0.4, 0.3, 0.2, 0.12])
    delta0a = None
    for radius in ladder:
        all_alive = True
        for d in dirs:
            Zdot = np.tile(radius * d, (len(T_full), 1))
            _, _, alive = batch.flow(Zdot, Z_full)
            if not np.all(alive):
                all_alive = False
                break
        if all_alive:
            delta0a = float(radius)
            break
    if delta0a is None:
        radius = float(ladder[-1])
        for _ in range(8):
            radius *= 0.5
            Zdot = np.tile(radius * dirs[0], (len(T_full), 1))
            _, _, alive = batch.flow(Zdot, Z_full)
            if np.all(alive):
                delta0a = radius
                break
        if delta0a is None:
            raise DomainEscape(f"no safe velocity radius found for {sorted(support)} / {psi}")

    alpha_raw = 0.0
    jac_dirs = dirs[: atlas.dim + 2]
    for scale in (0.0, 0.95):
        for d in jac_dirs:
            Zdot = np.tile(scale * delta0a * d, (len(T_full), 1))
            J, ok = _flow_jacobian(batch, Zdot, Z_full)
            if np.any(ok):
                alpha_raw = max(alpha_raw, float(np.max(np.linalg.svd(J[ok], compute_uv=False)[..., 0])))
    alpha0 = inflate * alpha_raw
    delta0b = delta0a / (2.0 * alpha0)

    beta_raw = 0.0
    for scale in (0.8,):
        for d in jac_dirs[: atlas.dim + 1]:
            Wt = Z_full + scale * delta0b * d
            h = FD_STEP
            cols = []
            ok_all = np.ones(len(T_full), dtype=bool)
            for j in range(atlas.dim):
                e = np.zeros((1, atlas.dim), dtype=complex)
                e[0, j] = h
                zp, okp, _ = batch.inverse(Wt + e, Z_full)
                zm, okm, _ = batch.inverse(Wt - e, Z_full)
                ok_all &= okp & okm
                cols.append((zp - zm) / (2 * h))
            Jh = np.stack(cols, axis=-1)
            if np.any(ok_all):
                beta_raw = max(beta_raw, float(np.max(np.linalg.svd(Jh[ok_all], compute_uv=False)[..., 0])))
    beta0 = inflate * beta_raw
    return ExpConstants(alpha0, beta0, delta0a, delta0b)


def revalidate_exp_constants(bumps, support, psi: str, const: ExpConstants,
                             rng=None, n_points: int = 16) -> dict:
    """Holdout check: fresh samples inside the declared radii must not escape
    and must respect the inflated derivative bounds."""
    rng = np.random.default_rng(29) if rng is None else rng
    atlas = bumps.atlas
    support = frozenset(support)
    Z, T = sample_region(bumps, support, psi, n_points, rng)
    weights = random_weightings(atlas.chart_ids, support, 4, rng) or [
        barycenter_weighting(atlas.chart_ids, support)]
    batch, T_full = _batch_for(bumps, support, psi, T, weights)
    Z_full = np.tile(Z, (len(weights), 1))

    dirs = _directions(atlas.dim, 3, rng)
    escapes = 0
    alpha_obs = 0.0
    for d in dirs:
        r = const.delta0a * rng.uniform(0.2, 0.999)
        Zdot = np.tile(r * d, (len(T_full), 1))
        _, _, alive = batch.flow(Zdot, Z_full)
        escapes += int(np.sum(~alive))
        J, ok = _flow_jacobian(batch, Zdot, Z_full)
        if np.any(ok & alive):
            alpha_obs = max(alpha_obs, float(np.max(
                np.linalg.svd(J[ok & alive], compute_uv=False)[..., 0])))

    beta_obs = 0.0
    inverse_fail = 0
    for d in dirs[:3]:
        r = const.delta0b * rng.uniform(0.2, 0.95)
        Wt = Z_full + r * d
        zh, ok, _ = batch.inverse(Wt, Z_full)
        inverse_fail += int(np.sum(~ok))
        h = FD_STEP
        cols = []
        ok_all = ok.copy()
        for j in range(atlas.dim):
            e = np.zeros((1, atlas.dim), dtype=complex)
            e[0, j] = h
            zp, okp, _ = batch.inverse(Wt + e, Z_full)
            zm, okm, _ = batch.inverse(Wt - e, Z_full)
            ok_all &= okp & okm
            cols.append((zp - zm) / (2 * h))
        Jh = np.stack(cols, axis=-1)
        if np.any(ok_all):
            beta_obs = max(beta_obs, float(np.max(np.linalg.svd(Jh[ok_all], compute_uv=False)[..., 0])))

    return {
        "escapes": escapes,
        "inverse_failures": inverse_fail,
        "alpha_ok": alpha_obs <= const.alpha0,
        "beta_ok": beta_obs <= const.beta0,
        "alpha_observed": alpha_obs,
        "beta_observed": beta_obs,
        "ok": escapes == 0 and inverse_fail == 0
              and alpha_obs <= const.alpha0 and beta_obs <= const.beta0,
    }


def context_for_point(bumps, support, psi: str, t: int, weighting: Weighting) -> SprayContext:
    return SprayContext(bumps, tuple(sorted(support)), psi, int(t), weighting)


def display_point(atlas, ctx: SprayContext, z) -> Point:
    return Point(ctx.psi, z, ctx.t)
