"""Divergences between track PDFs, Bernoulli distributions and JEP tables."""

from __future__ import annotations

import enum
import logging
import math

import numba
import numpy as np

from .mixture import GaussianMixture, batch_cholesky, gaussian_logpdf, gm_power_product

log = logging.getLogger(__name__)

LOG_FLOOR = math.log(1e-300)
INF = math.inf


class DivergenceKind(str, enum.Enum):
    KLD = "kld"
    CSD = "csd"
    JSD = "jsd"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown divergence {value!r}; choose from kld, csd, jsd") from None


def sigma_kappa(dim):
    """Spread parameter of the unscented sigma points used throughout."""
    return 3.0 - dim


def sigma_points(means, covs, kappa=None):
    """Unscented sigma points for a stack of Gaussians.

    Returns points of shape (C, 2d+1, d) and weights of shape (2d+1,).
    """
    means = np.asarray(means, dtype=float)
    covs = np.asarray(covs, dtype=float)
    d = means.shape[-1]
    if kappa is None:
        kappa = sigma_kappa(d)
    chol = batch_cholesky(covs) * math.sqrt(d + kappa)
    offsets = np.swapaxes(chol, 1, 2)  # rows are the columns of the scaled factor
    pts = np.concatenate([means[:, None, :], means[:, None, :] + offsets, means[:, None, :] - offsets], axis=1)
    w = np.full(2 * d + 1, 0.5 / (d + kappa))
    w[0] = kappa / (d + kappa)
    return pts, w


def _segment_logsumexp(a, starts):
    """Row-wise log-sum-exp over column segments beginning at ``starts``."""
    m = np.maximum.reduceat(a, starts, axis=1)
    m = np.where(np.isfinite(m), m, 0.0)
    widths = np.diff(np.append(starts, a.shape[1]))
    with np.errstate(divide="ignore"):
        return m + np.log(np.add.reduceat(np.exp(a - np.repeat(m, widths, axis=1)), starts, axis=1))


def _kld_one_to_many(f1: GaussianMixture, targets, kappa=None):
    """Sigma-point KLD from ``f1`` to each mixture in ``targets``; returns (values, floored)."""
    pts, sw = sigma_points(f1.means, f1.covs, kappa)
    J, S, d = pts.shape
    flat = pts.reshape(-1, d)
    coeff = (f1.weights / f1.total_weight)[:, None] * sw[None, :]
    coeff = coeff.ravel()
    with np.errstate(divide="ignore"):
        lp_self = gaussian_logpdf(flat, f1.means, f1.covs) + np.log(f1.weights / f1.total_weight)
    log_self = _segment_logsumexp(lp_self, np.array([0]))[:, 0]
    if not targets:
        return np.zeros(0), 0
    means = np.concatenate([t.means for t in targets])
    covs = np.concatenate([t.covs for t in targets])
    with np.errstate(divide="ignore"):
        logw = np.concatenate([np.log(t.weights / t.total_weight) for t in targets])
    lp = gaussian_logpdf(flat, means, covs) + logw[None, :]
    starts = np.cumsum([0] + [len(t) for t in targets])[:-1]
    log_other = _segment_logsumexp(lp, starts)  # (points, targets)
    low = log_other < LOG_FLOOR
    floored = int(low.sum())
    log_other = np.maximum(log_other, LOG_FLOOR)
    out = np.maximum(coeff @ (log_self[:, None] - log_other), 0.0)
    return out, floored


class _Prepared:
    """Sigma points and whitening factors of a list of mixtures, stacked."""

    def __init__(self, mixes, kappa=None):
        self.n_comp = np.array([len(m) for m in mixes], dtype=np.int64)
        self.comp_start = np.concatenate([[0], np.cumsum(self.n_comp)[:-1]]).astype(np.int64)
        w = np.concatenate([m.weights / m.total_weight for m in mixes])
        means = np.concatenate([m.means for m in mixes])
        covs = np.concatenate([m.covs for m in mixes])
        chol = batch_cholesky(covs)
        self.d = d = means.shape[1]
        self.linv = np.tril(np.linalg.inv(chol))
        self.offset = np.einsum("cij,cj->ci", self.linv, means)
        logdet = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
        with np.errstate(divide="ignore"):
            self.log_norm = np.log(w) - 0.5 * (logdet + d * math.log(2 * math.pi))
        pts, sw = sigma_points(means, covs, kappa)
        S = pts.shape[1]
        self.points = pts.reshape(-1, d)
        self.coeff = (w[:, None] * sw[None, :]).ravel()
        self.n_pts = self.n_comp * S
        self.pt_start = self.comp_start * S

    def log_mix(self, points, starts, counts, mix):
        """``log f_mix[k]`` at rows ``starts[k] : starts[k] + counts[k]`` of ``points``."""
        return _log_mix_segments(
            points, starts, counts, mix, self.linv, self.offset, self.log_norm, self.comp_start, self.n_comp
        )


@numba.njit(cache=True)
def _log_mix_segments(points, starts, counts, mix, linv, offset, log_norm, comp_start, n_comp):
    # the inverse Cholesky factors are lower triangular
    d = points.shape[1]
    out = np.empty(counts.sum())
    buf = np.empty(max(n_comp.max(), 1))
    row = 0
    for k in range(starts.shape[0]):
        c0 = comp_start[mix[k]]
        nc = n_comp[mix[k]]
        for p in range(starts[k], starts[k] + counts[k]):
            top = -np.inf
            for c in range(nc):
                q = 0.0
                for a in range(d):
                    z = -offset[c0 + c, a]
                    for b in range(a + 1):
                        z += linv[c0 + c, a, b] * points[p, b]
                    q += z * z
                v = log_norm[c0 + c] - 0.5 * q
                buf[c] = v
                if v > top:
                    top = v
            if top == -np.inf:
                out[row] = -np.inf
            else:
                acc = 0.0
                for c in range(nc):
                    acc += np.exp(buf[c] - top)
                out[row] = top + np.log(acc)
            row += 1
    return out


def _kld_pairs(mixes1, mixes2, pi, pj, kappa=None):
    """Sigma-point KLD ``D(mixes1[pi[k]] || mixes2[pj[k]])`` for every pair k."""
    pi, pj = np.asarray(pi, dtype=np.int64), np.asarray(pj, dtype=np.int64)
    if len(pi) == 0:
        return np.zeros(0)
    src = _Prepared(mixes1, kappa)
    tgt = _Prepared(mixes2)
    own = np.arange(len(mixes1), dtype=np.int64)
    log_self = src.log_mix(src.points, src.pt_start, src.n_pts, own)
    n = src.n_pts[pi]
    rows = np.repeat(src.pt_start[pi], n) + (np.arange(n.sum()) - np.repeat(np.cumsum(n) - n, n))
    log_other = np.maximum(tgt.log_mix(src.points, src.pt_start[pi], n, pj), LOG_FLOOR)
    gap = src.coeff[rows] * (log_self[rows] - log_other)
    return np.maximum(np.add.reduceat(gap, np.cumsum(n) - n), 0.0)


def kld_gm(f1: GaussianMixture, f2: GaussianMixture, kappa=None, return_diagnostics=False):
    """Kullback-Leibler divergence ``D(f1 || f2)`` by per-component sigma points.

    Each component of ``f1`` contributes its weight times the unscented average
    of ``log f1 - log f2`` over its 2d+1 sigma points. Values of ``f2`` below
    1e-300 are floored and counted in the diagnostics. Clamped below at 0.
    """
    if f1 is f2:
        return (0.0, 0) if return_diagnostics else 0.0
    vals, floored = _kld_one_to_many(f1, [f2], kappa)
    if floored:
        log.debug("kld_gm: %d sigma points hit the log floor", floored)
    return (float(vals[0]), floored) if return_diagnostics else float(vals[0])


def jsd_gm(f1: GaussianMixture, f2: GaussianMixture, kappa=None):
    """Symmetric KLD, ``(D(f1||f2) + D(f2||f1)) / 2``."""
    return 0.5 * (kld_gm(f1, f2, kappa) + kld_gm(f2, f1, kappa))


def _log_cross(f1: GaussianMixture, f2: GaussianMixture):
    # log of a_i b_j G(m_i; m_j, P_i + P_j) for all component pairs
    S = f1.covs[:, None] + f2.covs[None, :]
    diff = f1.means[:, None, :] - f2.means[None, :, :]
    n1, n2, d = diff.shape
    chol = batch_cholesky(S.reshape(-1, d, d))
    z = np.linalg.solve(chol, diff.reshape(-1, d, 1))[..., 0]
    maha = np.einsum("ki,ki->k", z, z)
    logdet = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
    logN = (-0.5 * (maha + logdet + d * math.log(2 * math.pi))).reshape(n1, n2)
    with np.errstate(divide="ignore"):
        lw = np.log(f1.weights)[:, None] + np.log(f2.weights)[None, :]
    return (lw + logN).ravel()


def _exact_logsum(terms):
    # order-independent log-sum-exp: fsum is correctly rounded
    terms = np.asarray(terms)
    finite = terms[np.isfinite(terms)]
    if finite.size == 0:
        return -INF
    m = float(finite.max())
    return m + math.log(math.fsum(np.exp(finite - m).tolist()))


def csd_gm(f1: GaussianMixture, f2: GaussianMixture):
    """Cauchy-Schwarz divergence, evaluated analytically from Gaussian products."""
    cross = _exact_logsum(_log_cross(f1, f2))
    if cross == -INF:
        return INF
    self_terms = _exact_logsum(_log_cross(f1, f1)) + _exact_logsum(_log_cross(f2, f2))
    return max(-cross + 0.5 * self_terms, 0.0)


def chernoff_gm(f1: GaussianMixture, f2: GaussianMixture, omega: float):
    """Chernoff coefficient ``integral f1^omega f2^(1 - omega) dx``.

    Exact for single Gaussians; mixtures use the component-wise power
    approximation. Identical arguments and ``omega`` in {0, 1} return 1.
    """
    if not 0.0 <= omega <= 1.0:
        raise ValueError("omega must lie in [0, 1]")
    if omega in (0.0, 1.0) or f1 is f2 or _same_mixture(f1, f2):
        return 1.0
    val = gm_power_product([f1, f2], [omega, 1.0 - omega]).total_weight
    return float(min(max(val, 0.0), 1.0))


def _same_mixture(f1, f2):
    return (
        isinstance(f1, GaussianMixture)
        and isinstance(f2, GaussianMixture)
        and f1.weights.shape == f2.weights.shape
        and f1.means.shape == f2.means.shape
        and np.array_equal(f1.weights, f2.weights)
        and np.array_equal(f1.means, f2.means)
        and np.array_equal(f1.covs, f2.covs)
    )


def gci_divergence_bc(t1, t2, omega1: float, omega2: float):
    """Cost of label-wise GCI fusion of two Bernoulli tracks.

    ``-log[(1-r1)^w1 (1-r2)^w2 + r1^w1 r2^w2 * integral f1^w1 f2^w2]``.
    """
    if abs(omega1 + omega2 - 1.0) > 1e-12:
        raise ValueError("GCI weights must sum to one")
    r1, r2 = t1.existence, t2.existence
    overlap = chernoff_gm(t1.pdf, t2.pdf, omega1)
    arg = (1.0 - r1) ** omega1 * (1.0 - r2) ** omega2 + r1**omega1 * r2**omega2 * overlap
    if arg <= 0:
        return INF
    return max(-math.log(arg), 0.0)


def kld_bernoulli(r1: float, r2: float):
    """KLD between Bernoulli distributions with success probabilities r1, r2."""
    out = 0.0
    for a, b in ((r1, r2), (1.0 - r1, 1.0 - r2)):
        if a <= 0:
            continue
        if b <= 0:
            return INF
        out += a * math.log(a / b)
    return max(out, 0.0)


def kld_jep(p1, p2, return_offender=False):
    """KLD between two JEP tables (maps from label set to probability)."""
    total = 0.0
    for L, a in p1.items():
        if a <= 0:
            continue
        b = p2.get(L, 0.0)
        if b <= 0:
            log.debug("kld_jep: support violation at %s", sorted(L))
            return (INF, L) if return_offender else INF
        total += a * math.log(a / b)
    total = max(total, 0.0)
    return (total, None) if return_offender else total


def divergence(f1, f2, kind=DivergenceKind.JSD):
    kind = DivergenceKind.parse(kind)
    if kind is DivergenceKind.KLD:
        return kld_gm(f1, f2)
    if kind is DivergenceKind.CSD:
        return csd_gm(f1, f2)
    return jsd_gm(f1, f2)


def divergence_matrix(mixes1, mixes2, kind=DivergenceKind.JSD, candidates=None):
    """Pairwise divergences; entries outside ``candidates`` are left at +inf.

    ``candidates`` is an optional boolean (n1, n2) mask of pairs to evaluate.
    """
    kind = DivergenceKind.parse(kind)
    n1, n2 = len(mixes1), len(mixes2)
    out = np.full((n1, n2), INF)
    if candidates is None:
        candidates = np.ones((n1, n2), dtype=bool)
    if kind is DivergenceKind.CSD:
        for i, j in zip(*np.nonzero(candidates)):
            out[i, j] = csd_gm(mixes1[i], mixes2[j])
        return out
    if not candidates.any():
        return out
    pi, pj = np.nonzero(candidates)
    forward = _kld_pairs(mixes1, mixes2, pi, pj)
    if kind is DivergenceKind.KLD:
        out[pi, pj] = forward
        return out
    out[pi, pj] = 0.5 * (forward + _kld_pairs(mixes2, mixes1, pj, pi))
    return out
