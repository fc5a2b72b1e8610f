"""Gaussian mixtures, grid PMFs and the mixture arithmetic used by fusion.

A track PDF is either a :class:`GaussianMixture` (the normal case) or a
:class:`GridPDF` (a probability mass function on a fixed set of grid points,
used by the exhaustive checks that need exact sums instead of integrals).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np
from scipy.special import logsumexp

LOG_2PI = np.log(2.0 * np.pi)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def batch_cholesky(covs):
    """Cholesky factors of a stack of covariances, jittering near-singular ones."""
    try:
        return np.linalg.cholesky(covs)
    except np.linalg.LinAlgError:
        d = covs.shape[-1]
        sym = 0.5 * (covs + np.swapaxes(covs, -1, -2))
        scale = np.maximum(np.abs(np.diagonal(sym, axis1=-2, axis2=-1)).max(axis=-1), 1.0)
        jitter = 1e-12 * scale[..., None, None] * np.eye(d)
        for _ in range(8):
            try:
                return np.linalg.cholesky(sym + jitter)
            except np.linalg.LinAlgError:
                jitter = jitter * 100.0
        raise


def gaussian_logpdf(x, means, covs):
    """Log-density of every component at every point.

    Parameters
    ----------
    x : (N, d) array
    means : (C, d) array
    covs : (C, d, d) array

    Returns
    -------
    (N, C) array
    """
    x = np.atleast_2d(x)
    chol = batch_cholesky(covs)
    d = means.shape[1]
    linv = np.linalg.inv(chol)
    # whiten through one matrix product: z_c = L_c^-1 x - L_c^-1 m_c
    C = means.shape[0]
    flat = linv.reshape(C * d, d)
    offset = np.einsum("cij,cj->ci", linv, means).reshape(-1)
    z = (x @ flat.T - offset).reshape(len(x), C, d)
    maha = np.einsum("nci,nci->nc", z, z)
    logdet = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
    return -0.5 * (maha + logdet[None, :] + d * LOG_2PI)


class GaussianMixture:
    """Weighted sum of Gaussian components.

    Instances are immutable; every operation returns a new mixture.

    Parameters
    ----------
    weights : (J,) array_like
        Nonnegative component weights.
    means : (J, d) array_like
    covs : (J, d, d) array_like
    """

    __slots__ = ("weights", "means", "covs")

    def __init__(self, weights, means, covs):
        weights = np.atleast_1d(np.asarray(weights, dtype=float))
        means = np.asarray(means, dtype=float)
        if means.ndim == 1:
            means = means[None, :]
        covs = np.asarray(covs, dtype=float)
        if covs.ndim == 2:
            covs = covs[None, :, :]
        if not (len(weights) == len(means) == len(covs)):
            raise ValueError("weights, means and covs disagree on the number of components")
        if covs.shape[1:] != (means.shape[1], means.shape[1]):
            raise ValueError("covariance shape does not match the state dimension")
        if np.any(weights < 0):
            raise ValueError("mixture weights must be nonnegative")
        self.weights = _frozen(weights)
        self.means = _frozen(means)
        self.covs = _frozen(covs)

    @classmethod
    def single(cls, mean, cov, weight=1.0):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        return cls([weight], mean[None, :], cov[None, :, :])

    @classmethod
    def concatenate(cls, mixes: Sequence["GaussianMixture"], scales=None):
        """Union of the components of ``mixes``, weights multiplied by ``scales``."""
        if scales is None:
            scales = np.ones(len(mixes))
        weights = np.concatenate([s * m.weights for m, s in zip(mixes, scales)])
        means = np.concatenate([m.means for m in mixes])
        covs = np.concatenate([m.covs for m in mixes])
        return cls(weights, means, covs)

    def __len__(self):
        return len(self.weights)

    def __repr__(self):
        return f"GaussianMixture(n_components={len(self)}, dim={self.dim}, mass={self.total_weight:.6g})"

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def total_weight(self):
        return float(self.weights.sum())

    def normalized(self):
        total = self.total_weight
        if total <= 0:
            raise ValueError("cannot normalize a mixture with zero mass")
        return GaussianMixture(self.weights / total, self.means, self.covs)

    def scaled(self, factor):
        return GaussianMixture(self.weights * factor, self.means, self.covs)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        x = np.atleast_2d(x)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        out = logsumexp(gaussian_logpdf(x, self.means, self.covs) + logw[None, :], axis=1)
        return out[0] if squeeze else out

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def mean(self):
        w = self.weights / self.total_weight
        return w @ self.means

    def covariance(self):
        w = self.weights / self.total_weight
        mu = w @ self.means
        diff = self.means - mu
        return np.einsum("j,jab->ab", w, self.covs) + np.einsum("j,ja,jb->ab", w, diff, diff)

    def moment_matched(self):
        """Single Gaussian with the mixture's mass, mean and covariance."""
        return GaussianMixture([self.total_weight], self.mean()[None, :], self.covariance()[None])

    def dominant_mean(self):
        return self.means[int(np.argmax(self.weights))]

    def affine(self, A, Q):
        """Push every component through ``x -> A x + w``, ``w ~ N(0, Q)``."""
        A = np.asarray(A, dtype=float)
        means = self.means @ A.T
        covs = A @ self.covs @ A.T + Q
        return GaussianMixture(self.weights, means, covs)


@dataclass(frozen=True)
class GridPDF:
    """Probability mass function over a fixed set of grid points.

    ``points`` has shape (G, d); ``masses`` has shape (G,) and sums to one.
    """

    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "masses", _frozen(self.masses))

    @classmethod
    def from_density(cls, density, points):
        """Discretize ``density`` (anything with ``pdf``) onto ``points``."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        vals = np.asarray(density.pdf(pts), dtype=float)
        vals = np.maximum(vals, 1e-300)
        return cls(pts, vals / vals.sum())

    @property
    def total_weight(self):
        return float(self.masses.sum())

    def normalized(self):
        return GridPDF(self.points, self.masses / self.masses.sum())

    def pdf(self, x):
        """Mass at the grid point(s) equal to ``x``; zero off-grid."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        hit = np.all(np.isclose(x[:, None, :], self.points[None, :, :]), axis=2)
        out = hit.astype(float) @ self.masses
        return out


def mix_pdfs(pdfs, coeffs):
    """Weighted sum of track PDFs of a single kind (no reduction)."""
    coeffs = np.asarray(coeffs, dtype=float)
    if all(isinstance(p, GaussianMixture) for p in pdfs):
        return GaussianMixture.concatenate(list(pdfs), coeffs)
    if all(isinstance(p, GridPDF) for p in pdfs):
        ref = pdfs[0].points
        for p in pdfs[1:]:
            if p.points.shape != ref.shape or not np.array_equal(p.points, ref):
                raise ValueError("grid PDFs live on different grids")
        return GridPDF(ref, sum(c * p.masses for c, p in zip(coeffs, pdfs)))
    raise TypeError("cannot mix PDFs of different representations")


def normalize_pdf(pdf):
    return pdf.normalized()


@dataclass(frozen=True)
class Reduction:
    """Pruning/merging settings for :func:`gm_reduce`."""

    prune_threshold: float = 1e-5
    merge_threshold: float = 10.0
    max_components: int = 20


DEFAULT_REDUCTION = Reduction()


def _merge(weights, means, covs):
    wsum = weights.sum()
    mu = weights @ means / wsum
    diff = means - mu
    cov = (np.einsum("j,jab->ab", weights, covs) + np.einsum("j,ja,jb->ab", weights, diff, diff)) / wsum
    return wsum, mu, cov


def gm_reduce(mix: GaussianMixture, prune_threshold=1e-5, merge_threshold=10.0, cap=20):
    """Prune, merge and cap a Gaussian mixture.

    Components lighter than ``prune_threshold`` are dropped. Starting from the
    heaviest remaining component, every component whose squared Mahalanobis
    distance to it (under its own covariance) is at most ``merge_threshold``
    is moment-matched into one. At most ``cap`` of the heaviest merged
    components are kept. Weights are rescaled to the input's total mass.
    """
    total = mix.total_weight
    if len(mix) == 0 or total <= 0:
        return mix
    w, m, P = mix.weights, mix.means, mix.covs
    keep = np.flatnonzero(w >= prune_threshold)
    if len(keep) == 0:
        _, mu, cov = _merge(w, m, P)
        return GaussianMixture([total], mu[None], cov[None])
    if len(keep) == 1:
        i = keep[0]
        return GaussianMixture([total], m[i][None], P[i][None])

    w, m, P = w[keep], m[keep], P[keep]
    inv = np.tril(np.linalg.inv(batch_cholesky(P)))
    out_w, out_m, out_P = _greedy_merge(w, m, P, inv, float(merge_threshold))
    order = np.argsort(-out_w, kind="stable")[:cap]
    out_w = out_w[order]
    out_w = out_w * (total / out_w.sum())
    return GaussianMixture(out_w, out_m[order], out_P[order])


@numba.njit(cache=True)
def _greedy_merge(w, m, P, inv, threshold):
    # heaviest remaining component absorbs every component within the threshold
    # of it (Mahalanobis under the absorbed component's own covariance)
    n, d = m.shape
    remaining = np.ones(n, dtype=np.bool_)
    out_w = np.empty(n)
    out_m = np.empty((n, d))
    out_P = np.empty((n, d, d))
    k = 0
    left = n
    while left > 0:
        j = -1
        for i in range(n):
            if remaining[i] and (j < 0 or w[i] > w[j]):
                j = i
        group = np.zeros(n, dtype=np.bool_)
        for i in range(n):
            if not remaining[i]:
                continue
            q = 0.0
            for a in range(d):
                z = 0.0
                for b in range(a + 1):
                    z += inv[i, a, b] * (m[i, b] - m[j, b])
                q += z * z
            if q <= threshold or i == j:
                group[i] = True
                remaining[i] = False
                left -= 1
        ws = 0.0
        mu = np.zeros(d)
        for i in range(n):
            if group[i]:
                ws += w[i]
                mu += w[i] * m[i]
        mu /= ws
        cov = np.zeros((d, d))
        for i in range(n):
            if group[i]:
                diff = m[i] - mu
                cov += w[i] * (P[i] + np.outer(diff, diff))
        out_w[k] = ws
        out_m[k] = mu
        out_P[k] = cov / ws
        k += 1
    return out_w[:k], out_m[:k], out_P[:k]


def reduce_pdf(pdf, reduction: Reduction | None):
    """Apply ``reduction`` to Gaussian mixtures; grid PDFs and ``None`` pass through."""
    if reduction is None or not isinstance(pdf, GaussianMixture):
        return pdf
    return gm_reduce(pdf, reduction.prune_threshold, reduction.merge_threshold, reduction.max_components)


def _log_power_coeff(covs, omega):
    # G(x; m, P)^omega = c * G(x; m, P / omega), c = omega^(-d/2) * det(2 pi P)^((1 - omega) / 2)
    d = covs.shape[-1]
    _, logdet = np.linalg.slogdet(covs)
    return -0.5 * d * np.log(omega) + 0.5 * (1.0 - omega) * (d * LOG_2PI + logdet)


def gm_power_product(mixes: Sequence[GaussianMixture], exponents):
    """Unnormalized product of powered mixtures, ``prod_i f_i(x) ** w_i``.

    Each power is approximated component-wise,
    ``(sum_m a_m G_m) ** w ~= sum_m a_m ** w * G_m ** w``, which is exact for a
    single Gaussian. Factors with a zero exponent are dropped. The returned
    mixture's total weight is the integral of the product.
    """
    pairs = [(m, float(e)) for m, e in zip(mixes, exponents) if e > 0]
    if not pairs:
        raise ValueError("at least one exponent must be positive")
    d = pairs[0][0].dim
    # running product in information form: log scale, precision, information vector
    logc = np.zeros(1)
    lam = np.zeros((1, d, d))
    eta = np.zeros((1, d))
    quad = np.zeros(1)  # sum of m' Sigma^-1 m over factors
    for mix, e in pairs:
        with np.errstate(divide="ignore"):
            logw = e * np.log(mix.weights)
        covs = mix.covs / e
        prec = np.linalg.inv(covs)
        _, logdet = np.linalg.slogdet(covs)
        info = np.einsum("jab,jb->ja", prec, mix.means)
        q = np.einsum("ja,ja->j", mix.means, info)
        # each factor contributes c_j * G(x; m_j, covs_j), expanded in log form
        logfac = logw + _log_power_coeff(mix.covs, e) - 0.5 * (d * LOG_2PI + logdet)
        logc = (logc[:, None] + logfac[None, :]).ravel()
        lam = (lam[:, None] + prec[None]).reshape(-1, d, d)
        eta = (eta[:, None] + info[None]).reshape(-1, d)
        quad = (quad[:, None] + q[None, :]).ravel()
    cov = np.linalg.inv(lam)
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    mean = np.einsum("kab,kb->ka", cov, eta)
    _, logdet_cov = np.linalg.slogdet(cov)
    # integral of exp(-0.5 x' lam x + eta' x - 0.5 quad)
    log_int = 0.5 * (d * LOG_2PI + logdet_cov) + 0.5 * np.einsum("ka,ka->k", eta, mean) - 0.5 * quad
    logw = logc + log_int
    with np.errstate(over="ignore"):
        weights = np.exp(logw)
    return GaussianMixture(weights, mean, cov)
