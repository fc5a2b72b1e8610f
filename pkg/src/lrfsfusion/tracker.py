"""Local multi-target filtering with range/bearing sensors.

Both the LMB and the marginal delta-GLMB filters share one measurement
stage: every Gaussian component is pushed through the sensor model with an
unscented transform, giving per-track association likelihoods and updated
components. Data association is solved per group of tracks that compete
for measurements, by ranked assignment.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import logsumexp

from .densities import (
    BernoulliTrack,
    Hypothesis,
    Label,
    LMBDensity,
    MDGLMBDensity,
    mdglmb_to_lmb,
)
from .divergence import sigma_points
from .mixture import (
    DEFAULT_REDUCTION,
    GaussianMixture,
    Reduction,
    batch_cholesky,
    mix_pdfs,
    reduce_pdf,
)

log = logging.getLogger(__name__)

EXTRACT_THRESHOLD = 0.55
GATE = 25.0  # squared Mahalanobis gate on the innovation
MAX_ASSIGNMENTS = 100


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


# --- models --------------------------------------------------------------------------


@dataclass(frozen=True)
class MotionModel:
    """Nearly-constant-velocity motion on the state ``[x, vx, y, vy]``."""

    T: float = 1.0
    q: tuple = (16.0, 1.0, 16.0, 1.0)
    survival: float = 0.95

    def __post_init__(self):
        if not 0.0 <= self.survival <= 1.0:
            raise ValueError("survival probability must lie in [0, 1]")
        if any(v < 0 for v in self.q):
            raise ValueError("process noise variances must be nonnegative")

    @cached_property
    def A(self):
        A = np.eye(4)
        A[0, 1] = A[2, 3] = self.T
        return A

    @cached_property
    def Q(self):
        return np.diag(np.asarray(self.q, dtype=float))


@dataclass(frozen=True)
class SensorModel:
    """Range/bearing sensor with a circular field of view.

    ``fov_radius=None`` means the field of view is the whole ``region``.
    ``R`` is the measurement covariance in (m^2, rad^2).
    """

    position: tuple = (0.0, 0.0)
    R: tuple = ((400.0, 0.0), (0.0, (0.8 * math.pi / 180.0) ** 2))
    detection: float = 0.98
    fov_radius: float | None = None
    clutter_rate: float = 8.0
    region: tuple = ((0.0, 5000.0), (0.0, 5000.0))

    def __post_init__(self):
        if not 0.0 <= self.detection <= 1.0:
            raise ValueError("detection probability must lie in [0, 1]")
        if self.clutter_rate < 0:
            raise ValueError("clutter rate must be nonnegative")
        R = np.asarray(self.R, dtype=float)
        if R.shape != (2, 2) or np.any(np.linalg.eigvalsh(R) <= 0):
            raise ValueError("R must be a 2x2 positive-definite matrix")

    @cached_property
    def Rm(self):
        return np.asarray(self.R, dtype=float)

    @cached_property
    def pos(self):
        return np.asarray(self.position, dtype=float)

    def in_fov(self, xy):
        """Whether Cartesian position(s) lie inside the field of view."""
        xy = np.asarray(xy, dtype=float)
        (x0, x1), (y0, y1) = self.region
        inside = (xy[..., 0] >= x0) & (xy[..., 0] <= x1) & (xy[..., 1] >= y0) & (xy[..., 1] <= y1)
        if self.fov_radius is not None:
            inside &= np.hypot(xy[..., 0] - self.pos[0], xy[..., 1] - self.pos[1]) <= self.fov_radius
        return inside

    @cached_property
    def fov_area(self):
        (x0, x1), (y0, y1) = self.region
        if self.fov_radius is None:
            return (x1 - x0) * (y1 - y0)
        # exact chord lengths integrated with a fine midpoint rule
        lo, hi = max(x0, self.pos[0] - self.fov_radius), min(x1, self.pos[0] + self.fov_radius)
        n = 200_000
        xs = lo + (np.arange(n) + 0.5) * (hi - lo) / n
        half = np.sqrt(np.maximum(self.fov_radius**2 - (xs - self.pos[0]) ** 2, 0.0))
        length = np.clip(np.minimum(y1, self.pos[1] + half) - np.maximum(y0, self.pos[1] - half), 0.0, None)
        return float(length.sum() * (hi - lo) / n)

    def h(self, x):
        """Noise-free measurement ``[range, bearing]`` of state(s) ``x``."""
        x = np.asarray(x, dtype=float)
        dx = x[..., 0] - self.pos[0]
        dy = x[..., 2] - self.pos[1]
        return np.stack([np.hypot(dx, dy), np.arctan2(dy, dx)], axis=-1)

    def to_cartesian(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return self.pos + np.stack([z[:, 0] * np.cos(z[:, 1]), z[:, 0] * np.sin(z[:, 1])], axis=1)

    def clutter_intensity(self, z):
        """Clutter intensity in measurement space, ``lambda_c * range / area``."""
        z = np.atleast_2d(z)
        return self.clutter_rate * np.maximum(z[:, 0], 1e-9) / self.fov_area


@dataclass(frozen=True)
class BirthModel:
    existence: float = 0.01
    cov: tuple = (1600.0, 400.0, 1600.0, 400.0)

    def __post_init__(self):
        if not 0.0 < self.existence < 1.0:
            raise ValueError("birth existence must lie in (0, 1)")


# --- prediction ------------------------------------------------------------------------


def _predict_pdf(pdf: GaussianMixture, motion: MotionModel):
    return pdf.affine(motion.A, motion.Q)


def predict(density, motion: MotionModel, births=(), max_hypotheses=MAX_ASSIGNMENTS):
    """Chapman-Kolmogorov prediction with appended birth tracks.

    Survivors keep their label with existence scaled by the survival
    probability; births are pushed through the motion model and keep their
    birth existence.
    """
    births = [BernoulliTrack(b.label, b.existence, _predict_pdf(b.pdf, motion)) for b in births]
    if isinstance(density, LMBDensity):
        tracks = [BernoulliTrack(t.label, t.existence * motion.survival, _predict_pdf(t.pdf, motion)) for t in density]
        labels = {t.label for t in tracks}
        if any(b.label in labels for b in births):
            raise ValueError("birth label collides with a surviving label")
        return LMBDensity(tracks + births, density.label_space | {b.label for b in births})
    if isinstance(density, MDGLMBDensity):
        return _predict_mdglmb(density, motion, births, max_hypotheses)
    raise TypeError(f"cannot predict {type(density).__name__}")


def _top_k_bernoulli(partial, options, k):
    # partial: list of (logw, labels tuple, pdf dict); options: (label, log_in, log_out, pdf)
    for lab, log_in, log_out, pdf in options:
        nxt = []
        for lw, labs, pdfs in partial:
            if log_out > -math.inf:
                nxt.append((lw + log_out, labs, pdfs))
            if log_in > -math.inf:
                nxt.append((lw + log_in, labs + (lab,), {**pdfs, lab: pdf}))
        nxt.sort(key=lambda x: (-x[0], x[1]))
        partial = nxt[:k] if k is not None else nxt
    return partial


def _log(p):
    return math.log(p) if p > 0 else -math.inf


def _predict_mdglmb(density, motion, births, k):
    cache = {}

    def moved(pdf):
        key = id(pdf)
        if key not in cache:
            cache[key] = (pdf, _predict_pdf(pdf, motion))
        return cache[key][1]

    ls, ld = _log(motion.survival), _log(1.0 - motion.survival)
    partial = []
    for h in density:
        if h.jep <= 0:
            continue
        opts = [(lab, ls, ld, moved(h.pdfs[lab])) for lab in sorted(h.label_set)]
        partial.extend(_top_k_bernoulli([(math.log(h.jep), (), {})], opts, k))
    partial.sort(key=lambda x: (-x[0], x[1]))
    partial = partial[:k] if k is not None else partial
    opts = [(b.label, _log(b.existence), _log(1.0 - b.existence), b.pdf) for b in births]
    partial = _top_k_bernoulli(partial, opts, k)
    space = density.label_space | {b.label for b in births}
    return _merge_hypotheses(partial, space, None)


def _merge_hypotheses(items, space, reduction):
    """Sum weights of equal label sets and mix their PDFs; normalize."""
    groups: dict = {}
    for lw, labs, pdfs in items:
        groups.setdefault(frozenset(labs), []).append((lw, pdfs))
    if not groups:
        return MDGLMBDensity([Hypothesis(frozenset(), 1.0, {})], space)
    tot = logsumexp([lw for g in groups.values() for lw, _ in g])
    hyps = []
    for L, parts in groups.items():
        lws = np.array([lw for lw, _ in parts])
        lw_sum = logsumexp(lws)
        if len(parts) == 1:
            pdfs = parts[0][1]
        else:
            coeffs = np.exp(lws - lw_sum)
            pdfs = {lab: reduce_pdf(mix_pdfs([p[lab] for _, p in parts], coeffs), reduction or DEFAULT_REDUCTION) for lab in L}
        hyps.append(Hypothesis(L, float(np.exp(lw_sum - tot)), pdfs))
    return MDGLMBDensity(hyps, space)


# --- measurement stage --------------------------------------------------------------


class _MeasurementStage:
    """Unscented measurement update of every component of a list of PDFs."""

    def __init__(self, pdfs, sensor: SensorModel, Z, gate=GATE):
        self.pdfs = pdfs
        self.sensor = sensor
        self.Z = np.asarray(Z, dtype=float).reshape(-1, 2)
        M = len(self.Z)
        n = len(pdfs)
        sizes = np.array([len(p) for p in pdfs], dtype=int)
        self.starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int) if n else np.zeros(0, int)
        self.owner = np.repeat(np.arange(n), sizes)
        if n == 0:
            self.pd_bar = np.zeros(0)
            self.log_lik = np.zeros((0, M))
            self.gated = np.zeros((0, M), dtype=bool)
            return
        w = np.concatenate([p.weights / p.total_weight for p in pdfs])
        means = np.concatenate([p.means for p in pdfs])
        covs = np.concatenate([p.covs for p in pdfs])
        self.w, self.means, self.covs = w, means, covs
        pd = sensor.detection * sensor.in_fov(means[:, [0, 2]]).astype(float)
        self.pd = pd
        self.pd_bar = np.add.reduceat(w * pd, self.starts)
        if M == 0 or not np.any(pd > 0):
            self.log_lik = np.full((n, M), -np.inf)
            self.gated = np.zeros((n, M), dtype=bool)
            return

        pts, sw = sigma_points(means, covs)
        zs = sensor.h(pts)
        ref = zs[:, :1, 1]
        zs[..., 1] = ref + wrap_angle(zs[..., 1] - ref)
        zhat = np.einsum("s,csk->ck", sw, zs)
        dz = zs - zhat[:, None, :]
        S = np.einsum("s,csi,csj->cij", sw, dz, dz) + sensor.Rm
        dx = pts - means[:, None, :]
        Pxz = np.einsum("s,csi,csj->cij", sw, dx, dz)
        chol = batch_cholesky(S)
        Sinv = np.linalg.inv(S)
        K = Pxz @ Sinv
        P_upd = covs - K @ S @ np.swapaxes(K, 1, 2)
        self.P_upd = 0.5 * (P_upd + np.swapaxes(P_upd, 1, 2))
        self.K = K

        nu = self.Z[None, :, :] - zhat[:, None, :]
        nu[..., 1] = wrap_angle(nu[..., 1])
        self.nu = nu
        linv = np.linalg.inv(chol)
        u = np.einsum("cij,cmj->cmi", linv, nu)
        maha = np.einsum("cmi,cmi->cm", u, u)
        logdet = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
        logq = -0.5 * (maha + logdet[:, None] + 2.0 * math.log(2.0 * math.pi))
        with np.errstate(divide="ignore"):
            comp = np.log(w * pd)[:, None] + logq
        comp = np.where(maha <= gate, comp, -np.inf)
        self.comp_log = comp
        self.log_lik = np.logaddexp.reduceat(comp, self.starts, axis=0)
        self.gated = np.isfinite(self.log_lik)

    def miss_pdf(self, k):
        lo = self.starts[k]
        hi = lo + len(self.pdfs[k])
        w = self.w[lo:hi] * (1.0 - self.pd[lo:hi])
        s = w.sum()
        if s <= 0:
            return None
        return GaussianMixture(w / s, self.means[lo:hi], self.covs[lo:hi])

    def assoc_pdf(self, k, j):
        lo = self.starts[k]
        hi = lo + len(self.pdfs[k])
        lw = self.comp_log[lo:hi, j]
        keep = np.isfinite(lw)
        lw = lw[keep]
        w = np.exp(lw - lw.max())
        means = self.means[lo:hi][keep] + np.einsum("cij,cj->ci", self.K[lo:hi][keep], self.nu[lo:hi, j][keep])
        return GaussianMixture(w / w.sum(), means, self.P_upd[lo:hi][keep])

    def posterior_pdf(self, k, p_miss, p_assoc, reduction):
        """Mixture of the miss and association posteriors with the given masses."""
        if self.pd_bar[k] == 0 and not np.any(p_assoc > 0):
            return self.pdfs[k]
        parts, coeffs = [], []
        if p_miss > 0:
            miss = self.miss_pdf(k)
            if miss is not None:
                parts.append(miss)
                coeffs.append(p_miss)
        for j in np.flatnonzero(p_assoc > 0):
            parts.append(self.assoc_pdf(k, j))
            coeffs.append(p_assoc[j])
        if not parts:
            return self.pdfs[k]
        coeffs = np.asarray(coeffs) / np.sum(coeffs)
        return reduce_pdf(GaussianMixture.concatenate(parts, coeffs), reduction)


# --- ranked assignment -----------------------------------------------------------------


def k_best_assignments(cost, k):
    """The ``k`` cheapest assignments of every row to a distinct column.

    Murty's partitioning over exact linear assignment solutions. ``cost`` may
    contain ``inf`` for forbidden pairs and must have at least as many
    columns as rows. Returns a list of ``(total, columns)`` sorted by total.
    """
    cost = np.asarray(cost, dtype=float)
    n = cost.shape[0]

    def solve(c):
        try:
            rows, cols = linear_sum_assignment(c)
        except ValueError:
            return None
        total = c[rows, cols].sum()
        if not np.isfinite(total):
            return None
        return float(total), cols

    first = solve(cost)
    if first is None:
        return []
    out = []
    counter = 0
    heap = [(first[0], counter, first[1], cost)]
    while heap and len(out) < k:
        total, _, cols, c = heapq.heappop(heap)
        out.append((total, tuple(int(x) for x in cols)))
        sub = c.copy()
        for i in range(n):
            child = sub.copy()
            child[i, cols[i]] = np.inf
            res = solve(child)
            if res is not None:
                counter += 1
                heapq.heappush(heap, (res[0], counter, res[1], child))
            # fix row i to its current column for the remaining children
            keep = sub[i, cols[i]]
            sub[i, :] = np.inf
            sub[:, cols[i]] = np.inf
            sub[i, cols[i]] = keep
    return out


def group_marginals(log_assoc, log_miss, log_absent, k=MAX_ASSIGNMENTS):
    """Association marginals of a group of tracks sharing measurements.

    Parameters
    ----------
    log_assoc : (n, m) array
        Log weight of track ``i`` existing and generating measurement ``j``.
    log_miss : (n,) array
        Log weight of track ``i`` existing and missed.
    log_absent : (n,) array
        Log weight of track ``i`` not existing (``-inf`` when it surely exists).
    k : int
        Number of ranked joint hypotheses for groups of two or more tracks.

    Returns
    -------
    log_total : float
        Log of the summed weight of the enumerated joint hypotheses.
    p_absent, p_miss : (n,) arrays
    p_assoc : (n, m) array
    """
    n, m = log_assoc.shape
    if n == 1:
        terms = np.concatenate([log_assoc[0], [log_miss[0], log_absent[0]]])
        lt = logsumexp(terms) if np.any(np.isfinite(terms)) else -np.inf
        if not np.isfinite(lt):
            return -np.inf, np.zeros(1), np.zeros(1), np.zeros((1, m))
        p = np.exp(terms - lt)
        return float(lt), p[-1:].copy(), p[-2:-1].copy(), p[None, :m]
    # "missed" and "absent" are merged into one undetected option per track;
    # its split is exact given the ranked association events
    with np.errstate(divide="ignore", invalid="ignore"):
        log_undet = np.logaddexp(log_miss, log_absent)
        q_absent = np.where(np.isfinite(log_undet), np.exp(log_absent - log_undet), 0.0)
    if m < n and np.all(np.isfinite(log_undet)):
        # same events ranked with measurements as rows: far fewer rows to branch on
        cost = np.full((m, n + m), np.inf)
        cost[:, :n] = -(log_assoc - log_undet[:, None]).T
        cost[np.arange(m), n + np.arange(m)] = 0.0
        sols = k_best_assignments(cost, k)
        base = float(log_undet.sum())
        events = []
        for total, cols in sols:
            track_of = np.full(n, m)  # column m means undetected
            for j, c in enumerate(cols):
                if c < n:
                    track_of[c] = j
            events.append((base - total, track_of))
    else:
        cost = np.full((n, m + n), np.inf)
        cost[:, :m] = -log_assoc
        idx = np.arange(n)
        cost[idx, m + idx] = -log_undet
        sols = k_best_assignments(cost, k)
        events = [(-total, np.minimum(np.asarray(cols), m)) for total, cols in sols]
    if not events:
        return -np.inf, np.zeros(n), np.zeros(n), np.zeros((n, m))
    lw = np.array([w for w, _ in events])
    lt = logsumexp(lw)
    pw = np.exp(lw - lt)
    p_undet, p_assoc = np.zeros(n), np.zeros((n, m))
    rows = np.arange(n)
    for weight, (_, cols) in zip(pw, events):
        det = cols < m
        p_assoc[rows[det], cols[det]] += weight
        p_undet[~det] += weight
    p_absent = p_undet * q_absent
    p_miss = p_undet - p_absent
    return float(lt), p_absent, p_miss, p_assoc


def _groups(gated):
    """Connected components of the track/measurement gating graph."""
    n, m = gated.shape
    rows, cols = np.nonzero(gated)
    adj = coo_matrix((np.ones(len(rows)), (rows, n + cols)), shape=(n + m, n + m))
    _, comp = connected_components(adj, directed=False)
    out = {}
    for i in range(n):
        out.setdefault(comp[i], ([], []))[0].append(i)
    for j in range(m):
        if comp[n + j] in out:
            out[comp[n + j]][1].append(j)
    return list(out.values())


# --- update --------------------------------------------------------------------------


def _check_measurements(Z, sensor):
    Z = np.asarray(Z, dtype=float).reshape(-1, 2)
    if len(Z) == 0:
        return Z
    margin = 3.0 * math.sqrt(sensor.Rm[0, 0])
    xy = sensor.to_cartesian(Z)
    ok = sensor.in_fov(xy)
    if not np.all(ok) and sensor.fov_radius is not None:
        # tolerate noise pushing a detection slightly past the boundary
        near = np.hypot(*(xy - sensor.pos).T) <= sensor.fov_radius + margin
        ok |= near
    if not np.all(ok):
        log.warning("rejected %d measurement(s) outside the sensor clutter region", int((~ok).sum()))
    return Z[ok]


def update(
    density,
    sensor: SensorModel,
    measurements,
    reduction: Reduction | None = DEFAULT_REDUCTION,
    max_assignments: int = MAX_ASSIGNMENTS,
    gate: float = GATE,
):
    """Bayes update of an LMB or marginal delta-GLMB density.

    Measurements are ``(range, bearing)`` rows. Tracks are grouped by shared
    gated measurements and each group's joint association is ranked with
    ``max_assignments`` hypotheses.
    """
    Z = _check_measurements(measurements, sensor)
    if isinstance(density, LMBDensity):
        return _update_lmb(density, sensor, Z, reduction, max_assignments, gate)
    if isinstance(density, MDGLMBDensity):
        return _update_mdglmb(density, sensor, Z, reduction, max_assignments, gate)
    raise TypeError(f"cannot update {type(density).__name__}")


def _update_lmb(density, sensor, Z, reduction, k, gate):
    tracks = list(density)
    if not tracks:
        return density
    stage = _MeasurementStage([t.pdf for t in tracks], sensor, Z, gate)
    r = np.array([t.existence for t in tracks])
    with np.errstate(divide="ignore"):
        log_r = np.log(r)
        log_absent = np.log1p(-r)
        log_miss = log_r + np.log1p(-stage.pd_bar)
    log_kappa = np.log(sensor.clutter_intensity(Z)) if len(Z) else np.zeros(0)
    log_assoc = log_r[:, None] + stage.log_lik - log_kappa[None, :]

    new = []
    for rows, cols in _groups(stage.gated):
        rows, cols = np.asarray(rows), np.asarray(cols, dtype=int)
        if len(cols) == 0:
            for i in rows:
                t = tracks[i]
                pd = stage.pd_bar[i]
                denom = 1.0 - t.existence * pd
                r_new = t.existence * (1.0 - pd) / denom if denom > 0 else t.existence
                pdf = stage.posterior_pdf(i, 1.0, np.zeros(len(Z)), reduction)
                new.append(BernoulliTrack(t.label, r_new, pdf))
            continue
        lt, p_abs, p_miss, p_as = group_marginals(
            log_assoc[np.ix_(rows, cols)], log_miss[rows], log_absent[rows], k
        )
        for a, i in enumerate(rows):
            t = tracks[i]
            if not np.isfinite(lt):
                new.append(t)
                continue
            r_new = float(min(max(1.0 - p_abs[a], 0.0), 1.0))
            if r_new <= 0:
                continue
            full = np.zeros(len(Z))
            full[cols] = p_as[a]
            pdf = stage.posterior_pdf(i, p_miss[a], full, reduction)
            new.append(BernoulliTrack(t.label, r_new, pdf))
    return LMBDensity(new, density.label_space)


def _update_mdglmb(density, sensor, Z, reduction, k, gate):
    pdf_index: dict = {}
    pdfs = []
    for h in density:
        for lab in h.label_set:
            key = id(h.pdfs[lab])
            if key not in pdf_index:
                pdf_index[key] = len(pdfs)
                pdfs.append(h.pdfs[lab])
    stage = _MeasurementStage(pdfs, sensor, Z, gate)
    log_kappa = np.log(sensor.clutter_intensity(Z)) if len(Z) else np.zeros(0)
    with np.errstate(divide="ignore"):
        log_miss_all = np.log1p(-stage.pd_bar) if len(pdfs) else np.zeros(0)
    items = []
    post_cache: dict = {}
    for h in density:
        if h.jep <= 0:
            continue
        labs = sorted(h.label_set)
        idx = np.array([pdf_index[id(h.pdfs[lab])] for lab in labs], dtype=int)
        lw = math.log(h.jep)
        new_pdfs = {}
        if len(idx):
            gated = stage.gated[idx]
            la = stage.log_lik[idx] - log_kappa[None, :]
            for rows, cols in _groups(gated):
                rows, cols = np.asarray(rows), np.asarray(cols, dtype=int)
                if len(cols) == 0:
                    for a in rows:
                        lw += log_miss_all[idx[a]]
                        new_pdfs[labs[a]] = _cached_post(post_cache, stage, idx[a], 1.0, np.zeros(len(Z)), reduction)
                    continue
                lt, _, p_miss, p_as = group_marginals(
                    la[np.ix_(rows, cols)], log_miss_all[idx[rows]], np.full(len(rows), -np.inf), k
                )
                lw += lt
                if not np.isfinite(lt):
                    break
                for a_pos, a in enumerate(rows):
                    full = np.zeros(len(Z))
                    full[cols] = p_as[a_pos]
                    new_pdfs[labs[a]] = stage.posterior_pdf(idx[a], p_miss[a_pos], full, reduction)
        if np.isfinite(lw):
            items.append((lw, tuple(labs), new_pdfs))
    if not items:
        log.warning("all hypotheses vanished in the update; keeping the prior")
        return density
    return _merge_hypotheses(items, density.label_space, reduction)


def _cached_post(cache, stage, k, p_miss, p_assoc, reduction):
    if k not in cache:
        cache[k] = stage.posterior_pdf(k, p_miss, p_assoc, reduction)
    return cache[k]


# --- birth and extraction -----------------------------------------------------------------


def adaptive_birth(measurements, sensor: SensorModel, birth: BirthModel = BirthModel(), time: int = 0, agent_id: int = 0):
    """One birth track per measurement, placed at the measured position with zero velocity."""
    Z = np.asarray(measurements, dtype=float).reshape(-1, 2)
    if len(Z) == 0:
        return []
    xy = sensor.to_cartesian(Z)
    cov = np.diag(np.asarray(birth.cov, dtype=float))
    out = []
    for idx, (px, py) in enumerate(xy):
        mean = np.array([px, 0.0, py, 0.0])
        out.append(BernoulliTrack(Label(time, idx, agent_id), birth.existence, GaussianMixture.single(mean, cov)))
    return out


def extract(density, threshold: float = EXTRACT_THRESHOLD):
    """Tracks with existence above ``threshold`` and the mean of their heaviest component."""
    if isinstance(density, MDGLMBDensity):
        density = mdglmb_to_lmb(density)
    return [(t.label, np.array(t.pdf.dominant_mean())) for t in density if t.existence > threshold]


# --- filter object -------------------------------------------------------------------------


@dataclass
class LocalTracker:
    """Recursive local filter of one agent.

    Births created from the measurements at time ``t`` enter the prediction
    to ``t + 1``. ``max_tracks`` optionally keeps only the LMB tracks with the
    highest existence after pruning.
    """

    sensor: SensorModel
    motion: MotionModel = field(default_factory=MotionModel)
    birth: BirthModel = field(default_factory=BirthModel)
    family: str = "lmb"
    agent_id: int = 0
    reduction: Reduction | None = DEFAULT_REDUCTION
    prune: float = 1e-5
    max_hypotheses: int = MAX_ASSIGNMENTS
    max_tracks: int | None = None

    def __post_init__(self):
        if self.max_tracks is not None and self.max_tracks < 1:
            raise ValueError("max_tracks must be positive")
        if self.family not in ("lmb", "mdglmb"):
            raise ValueError(f"unknown density family {self.family!r}")
        self.density = LMBDensity() if self.family == "lmb" else MDGLMBDensity([Hypothesis(frozenset(), 1.0, {})])
        self.pending_births: list = []

    def step(self, t: int, measurements):
        """Predict, update with ``measurements`` and queue births; returns the posterior."""
        prior = predict(self.density, self.motion, self.pending_births, self.max_hypotheses)
        post = update(prior, self.sensor, measurements, self.reduction, self.max_hypotheses)
        self.density = self.clean(post)
        self.pending_births = adaptive_birth(_check_measurements(measurements, self.sensor), self.sensor, self.birth, t, self.agent_id)
        return self.density

    def clean(self, density):
        if isinstance(density, LMBDensity):
            kept = [t for t in density if t.existence >= self.prune]
            if self.max_tracks is not None and len(kept) > self.max_tracks:
                kept = sorted(kept, key=lambda t: (-t.existence, t.label))[: self.max_tracks]
            return LMBDensity(kept)
        return density.truncate(1e-20, self.max_hypotheses).prune_labels()


__all__ = [
    "BirthModel",
    "LocalTracker",
    "MotionModel",
    "SensorModel",
    "adaptive_birth",
    "extract",
    "group_marginals",
    "k_best_assignments",
    "predict",
    "update",
    "wrap_angle",
]
