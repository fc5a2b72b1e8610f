"""Minimum-information-loss (MIL) fusion, the GCI baseline and the bound check.

MIL fusion of labeled densities is a weighted arithmetic mean: the fused
JEP is the weighted mean of the local JEPs and every fused conditional PDF
is the JEP-reweighted mixture of the local conditionals. GCI fusion is the
normalized weighted geometric mean and is provided for comparison.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .densities import (
    BernoulliTrack,
    GeneralLRFS,
    GridCJPDF,
    Hypothesis,
    LMBDensity,
    MDGLMBDensity,
    lmb_to_mdglmb,
    mix_cjpdfs,
)
from .mixture import (
    DEFAULT_REDUCTION,
    GaussianMixture,
    GridPDF,
    Reduction,
    gm_power_product,
    mix_pdfs,
    reduce_pdf,
)

JEP_FLOOR = 1e-20
EP_FLOOR = 1e-5
MAX_HYPOTHESES = 100


def validate_weights(weights, n: int) -> np.ndarray:
    """Return fusion weights as an array; ``None`` means uniform.

    Raises ``ValueError`` unless there are ``n`` nonnegative weights summing
    to one within 1e-12.
    """
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float).ravel()
    if w.shape != (n,):
        raise ValueError(f"expected {n} fusion weights, got {w.size}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("fusion weights must be finite and nonnegative")
    if abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"fusion weights must sum to one (sum is {w.sum():.15g})")
    return w


def _check_label_spaces(locals_, labels):
    for i, dens in enumerate(locals_):
        missing = set(labels) - dens.label_space
        if missing:
            raise ValueError(
                f"agent {i} does not cover label {sorted(missing)[0]!r}; "
                "fuse agents with different label spaces through fov.fuse_subspaces"
            )


# --- general form ------------------------------------------------------------------


def mil_fuse_general(locals_: Sequence[GeneralLRFS], weights=None) -> GeneralLRFS:
    """MIL fusion of general labeled densities.

    ``p(L) = sum_i w_i p_i(L)`` and
    ``f(.|L) = sum_i (w_i p_i(L) / p(L)) f_i(.|L)``.
    Label sets with zero fused JEP carry no conditional PDF.
    """
    w = validate_weights(weights, len(locals_))
    sets = sorted({L for d in locals_ for L in d.jep}, key=lambda L: (len(L), sorted(L)))
    jep, cjpdf = {}, {}
    for L in sets:
        parts = [(wi * d.p(L), d) for wi, d in zip(w, locals_) if wi > 0 and d.p(L) > 0]
        p_bar = sum(a for a, _ in parts)
        jep[L] = p_bar
        if p_bar > 0:
            if len(parts) == 1 and len(locals_) == 1:
                cjpdf[L] = parts[0][1].cjpdf[L]
            else:
                cjpdf[L] = mix_cjpdfs([d.cjpdf[L] for _, d in parts], [a / p_bar for a, _ in parts])
    space = frozenset().union(*(d.label_space for d in locals_))
    return GeneralLRFS(jep, cjpdf, space)


def gci_fuse_general(locals_: Sequence[GeneralLRFS], weights=None) -> GeneralLRFS:
    """GCI fusion of general densities whose conditionals are grid tables."""
    w = validate_weights(weights, len(locals_))
    active = [(wi, d) for wi, d in zip(w, locals_) if wi > 0]
    sets = set.intersection(*({L for L, p in d.jep.items() if p > 0} for _, d in active))
    raw = {}
    for L in sets:
        table = 1.0
        logp = 0.0
        for wi, d in active:
            t = np.asarray(d.cjpdf[L].to_table(), dtype=float)
            table = table * t**wi
            logp += wi * math.log(d.p(L))
        mass = float(np.sum(table))
        if mass > 0:
            raw[L] = (math.exp(logp) * mass, table / mass)
    total = sum(v for v, _ in raw.values())
    if total <= 0:
        raise ValueError("GCI fusion has no common support")
    jep = {L: v / total for L, (v, _) in raw.items()}
    grid = _first_grid(locals_)
    cjpdf = {L: GridCJPDF(L, grid, t) for L, (_, t) in raw.items()}
    return GeneralLRFS(jep, cjpdf, frozenset().union(*(d.label_space for d in locals_)))


def _first_grid(locals_):
    for d in locals_:
        for c in d.cjpdf.values():
            if isinstance(c, GridCJPDF):
                return c.grid
            for _, f in c.terms:
                for pdf in f.values():
                    return pdf.points
    return np.zeros((0, 1))


# --- marginal delta-GLMB -----------------------------------------------------------


def mil_fuse_mdglmb(
    locals_: Sequence[MDGLMBDensity],
    weights=None,
    reduction: Reduction | None = DEFAULT_REDUCTION,
    floor: float = JEP_FLOOR,
    max_hypotheses: int | None = MAX_HYPOTHESES,
) -> MDGLMBDensity:
    """MIL fusion of marginal delta-GLMB densities.

    Per label set ``L``: ``p(L) = sum_i w_i p_i(L)``, and per label in ``L`` the
    fused PDF is the mixture ``sum_i wt_i(L) f_i(l|L)`` with
    ``wt_i(L) = w_i p_i(L) / p(L)``, reduced with ``reduction``. Hypotheses
    below ``floor`` are dropped and at most ``max_hypotheses`` are kept before
    renormalizing. A hypothesis missing from an agent counts as zero JEP, which
    requires that agent's label space to contain its labels.
    """
    w = validate_weights(weights, len(locals_))
    maps = [{h.label_set: h for h in d} for d in locals_]
    sets = sorted({L for m in maps for L in m}, key=lambda L: (len(L), sorted(L)))
    _check_label_spaces(locals_, frozenset().union(*sets) if sets else ())
    hyps = []
    for L in sets:
        parts = [(wi * m[L].jep, m[L]) for wi, m in zip(w, maps) if wi > 0 and L in m and m[L].jep > 0]
        p_bar = sum(a for a, _ in parts)
        if p_bar <= 0:
            continue
        coeffs = [a / p_bar for a, _ in parts]
        pdfs = {}
        for lab in sorted(L):
            pdfs[lab] = reduce_pdf(mix_pdfs([h.pdfs[lab] for _, h in parts], coeffs), reduction)
        hyps.append(Hypothesis(L, p_bar, pdfs))
    space = frozenset().union(*(d.label_space for d in locals_))
    fused = MDGLMBDensity(hyps, space)
    if floor is None and max_hypotheses is None:
        return fused
    return fused.truncate(floor or 0.0, max_hypotheses)


# --- LMB -----------------------------------------------------------------------------


def mil_fuse_lmb(
    locals_: Sequence[LMBDensity],
    weights=None,
    reduction: Reduction | None = DEFAULT_REDUCTION,
    prune: float = EP_FLOOR,
) -> LMBDensity:
    """MIL fusion of LMB densities, label by label.

    ``r = sum_i w_i r_i`` and ``f = sum_i wt_i f_i`` with
    ``wt_i = w_i r_i / r``. Tracks with fused existence below ``prune`` are
    dropped.
    """
    w = validate_weights(weights, len(locals_))
    labels = sorted(frozenset().union(*(d.tracks.keys() for d in locals_)))
    _check_label_spaces(locals_, labels)
    tracks = []
    for lab in labels:
        parts = [(wi * d[lab].existence, d[lab].pdf) for wi, d in zip(w, locals_) if wi > 0 and lab in d]
        parts = [(a, f) for a, f in parts if a > 0]
        r_bar = sum(a for a, _ in parts)
        if r_bar <= 0 or r_bar < (prune or 0.0):
            continue
        pdf = reduce_pdf(mix_pdfs([f for _, f in parts], [a / r_bar for a, _ in parts]), reduction)
        tracks.append(BernoulliTrack(lab, min(r_bar, 1.0), pdf))
    space = frozenset().union(*(d.label_space for d in locals_))
    return LMBDensity(tracks, space)


def gci_fuse_lmb(
    locals_: Sequence[LMBDensity],
    weights=None,
    reduction: Reduction | None = DEFAULT_REDUCTION,
    prune: float = EP_FLOOR,
) -> LMBDensity:
    """Label-wise GCI fusion of LMB densities.

    ``r = A / (A + B)`` with ``A = prod r_i^w_i * Z``, ``B = prod (1 - r_i)^w_i``
    and ``Z`` the integral of ``prod f_i^w_i``; ``f = prod f_i^w_i / Z``. A
    label absent from a weighted agent has existence zero there, so its fused
    existence is zero.
    """
    w = validate_weights(weights, len(locals_))
    labels = sorted(frozenset().union(*(d.tracks.keys() for d in locals_)))
    tracks = []
    for lab in labels:
        active = [(wi, d[lab] if lab in d else None) for wi, d in zip(w, locals_) if wi > 0]
        if any(t is None or t.existence <= 0 for _, t in active):
            continue
        pdfs = [t.pdf for _, t in active]
        exps = [wi for wi, _ in active]
        if len(active) == 1:
            prod, Z = pdfs[0], 1.0
        else:
            pdfs = [_bounded(f, len(active)) for f in pdfs]
            prod = gm_power_product(pdfs, exps)
            Z = prod.total_weight
        logA = sum(wi * math.log(t.existence) for wi, t in active)
        A = math.exp(logA) * Z
        B = math.prod((1.0 - t.existence) ** wi for wi, t in active)
        if A + B <= 0 or A <= 0:
            continue
        r_bar = A / (A + B)
        if r_bar < (prune or 0.0):
            continue
        pdf = prod.normalized() if isinstance(prod, GaussianMixture) else prod
        tracks.append(BernoulliTrack(lab, r_bar, reduce_pdf(pdf, reduction)))
    space = frozenset().union(*(d.label_space for d in locals_))
    return LMBDensity(tracks, space)


def gci_fuse_mdglmb(
    locals_: Sequence[MDGLMBDensity],
    weights=None,
    reduction: Reduction | None = DEFAULT_REDUCTION,
    floor: float = JEP_FLOOR,
    max_hypotheses: int | None = MAX_HYPOTHESES,
) -> MDGLMBDensity:
    """GCI fusion of marginal delta-GLMB densities.

    Only label sets supported by every weighted agent survive. Their fused
    JEP is proportional to ``prod_i p_i(L)^w_i`` times the integrals of the
    per-label power products, which also give the fused PDFs.
    """
    w = validate_weights(weights, len(locals_))
    active = [(wi, {h.label_set: h for h in d if h.jep > 0}) for wi, d in zip(w, locals_) if wi > 0]
    common = set.intersection(*(set(m) for _, m in active))
    logs, hyps = [], []
    for L in sorted(common, key=lambda L: (len(L), sorted(L))):
        lp = sum(wi * math.log(m[L].jep) for wi, m in active)
        pdfs = {}
        for lab in sorted(L):
            if len(active) == 1:
                pdfs[lab] = active[0][1][L].pdfs[lab]
                continue
            prod = gm_power_product([_bounded(m[L].pdfs[lab], len(active)) for _, m in active], [wi for wi, _ in active])
            Z = prod.total_weight
            if Z <= 0:
                lp = -math.inf
                break
            lp += math.log(Z)
            pdfs[lab] = reduce_pdf(prod.normalized(), reduction)
        if lp > -math.inf:
            logs.append(lp)
            hyps.append((L, pdfs))
    space = frozenset().union(*(d.label_space for d in locals_))
    if not hyps:
        return MDGLMBDensity([Hypothesis(frozenset(), 1.0, {})], space)
    logs = np.asarray(logs)
    p = np.exp(logs - logs.max())
    p /= p.sum()
    fused = MDGLMBDensity([Hypothesis(L, float(pi), f) for pi, (L, f) in zip(p, hyps)], space)
    if floor is None and max_hypotheses is None:
        return fused
    return fused.truncate(floor or 0.0, max_hypotheses)


def _bounded(mix: GaussianMixture, n_factors: int, budget: int = 4096):
    # keep the component cross product of the power product tractable
    cap = max(1, int(budget ** (1.0 / n_factors)))
    if len(mix) <= cap:
        return mix
    keep = np.argsort(-mix.weights, kind="stable")[:cap]
    return GaussianMixture(mix.weights[keep], mix.means[keep], mix.covs[keep]).normalized()


def mil_fuse_gm(mixes: Sequence[GaussianMixture], mix_weights, reduction: Reduction | None = DEFAULT_REDUCTION):
    """Weighted union of mixtures followed by reduction."""
    coeffs = np.asarray(mix_weights, dtype=float)
    if abs(coeffs.sum() - 1.0) > 1e-12:
        raise ValueError("mixture weights must sum to one")
    return reduce_pdf(GaussianMixture.concatenate(list(mixes), coeffs), reduction)


# --- bound check -----------------------------------------------------------------------


@dataclass(frozen=True)
class BoundCheck:
    lhs: float
    rhs: float
    holds: bool
    flagged: bool = False


def _discretize(density, grid):
    def disc(pdf):
        return pdf if isinstance(pdf, GridPDF) else GridPDF.from_density(pdf, grid)

    if isinstance(density, LMBDensity):
        return LMBDensity([BernoulliTrack(t.label, t.existence, disc(t.pdf)) for t in density], density.label_space)
    return MDGLMBDensity(
        [Hypothesis(h.label_set, h.jep, {lab: disc(p) for lab, p in h.pdfs.items()}) for h in density],
        density.label_space,
    )


def _as_general(density):
    if isinstance(density, GeneralLRFS):
        return density
    if isinstance(density, LMBDensity):
        density = lmb_to_mdglmb(density)
    return GeneralLRFS.from_mdglmb(density)


def kld_general(p1: GeneralLRFS, p2: GeneralLRFS, max_cells: int = 10**7) -> float:
    """Exact KLD between general densities whose conditionals live on a grid.

    The sum runs over every label set and every grid cell of its conditional.
    Returns ``inf`` on a support violation.
    """
    total = 0.0
    for L, a in p1.jep.items():
        if a <= 0:
            continue
        b = p2.p(L)
        if b <= 0:
            return math.inf
        t1 = np.asarray(p1.cjpdf[L].to_table(), dtype=float)
        t2 = np.asarray(p2.cjpdf[L].to_table(), dtype=float)
        if t1.size > max_cells:
            raise ValueError("grid enumeration too large")
        t1 = t1 / t1.sum()
        t2 = t2 / t2.sum()
        pos = t1 > 0
        if np.any(t2[pos] <= 0):
            return math.inf
        inner = float(np.sum(t1[pos] * np.log(t1[pos] / t2[pos])))
        total += a * (math.log(a / b) + inner)
    return max(total, 0.0)


def information_loss_bound_check(locals_, weights=None, grid=None) -> BoundCheck:
    """Check ``D(sum_i w_i pi_i || fused) <= sum_{i != j} w_i w_j D(pi_i || pi_j)``.

    Every track PDF is discretized onto ``grid`` so that both sides are exact
    sums over label sets and grid cells. The fused density is the MIL fusion of
    the same family as the inputs, without reduction or truncation.
    """
    w = validate_weights(weights, len(locals_))
    if grid is None:
        raise ValueError("a state grid is required")
    disc = [_discretize(d, grid) for d in locals_]
    if all(isinstance(d, LMBDensity) for d in disc):
        fused = mil_fuse_lmb(disc, w, reduction=None, prune=None)
    else:
        disc = [lmb_to_mdglmb(d) if isinstance(d, LMBDensity) else d for d in disc]
        fused = mil_fuse_mdglmb(disc, w, reduction=None, floor=None, max_hypotheses=None)
    gens = [_as_general(d) for d in disc]
    mixture = mil_fuse_general(gens, w)
    lhs = kld_general(mixture, _as_general(fused))
    rhs = 0.0
    for (i, gi), (j, gj) in itertools.permutations(enumerate(gens), 2):
        if w[i] > 0 and w[j] > 0:
            rhs += w[i] * w[j] * kld_general(gi, gj)
    flagged = math.isinf(rhs)
    return BoundCheck(lhs, rhs, bool(lhs <= rhs + 1e-9), flagged)


__all__ = [
    "BoundCheck",
    "gci_fuse_general",
    "gci_fuse_lmb",
    "gci_fuse_mdglmb",
    "kld_general",
    "mil_fuse_general",
    "mil_fuse_gm",
    "mil_fuse_lmb",
    "mil_fuse_mdglmb",
    "information_loss_bound_check",
    "validate_weights",
]
