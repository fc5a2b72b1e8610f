"""Fusion of agents with different fields of view.

Agents that observe different regions carry different label spaces. The
global label space is split into disjoint subspaces by comparing which
agents carry each label; each local density is decomposed onto the
subspaces, the sub-densities are fused subspace by subspace and the global
density is the product of the fused sub-densities.

Participation rule: an agent takes part in the fusion of a subspace only if
its label space meets that subspace, and the fusion weights are
renormalized over the participants. An agent that cannot see a region
therefore never dilutes the existence of tracks in it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .densities import (
    GeneralLRFS,
    Hypothesis,
    LMBDensity,
    MDGLMBDensity,
    ProductMixtureCJPDF,
    lmb_to_mdglmb,
    mix_cjpdfs,
)
from .fusion import (
    MAX_HYPOTHESES,
    gci_fuse_general,
    gci_fuse_lmb,
    gci_fuse_mdglmb,
    mil_fuse_general,
    mil_fuse_lmb,
    mil_fuse_mdglmb,
    validate_weights,
)
from .mixture import DEFAULT_REDUCTION, Reduction, mix_pdfs, reduce_pdf


@dataclass(frozen=True)
class SubspacePartition:
    """Disjoint label subspaces and the agents taking part in each.

    Attributes
    ----------
    subspaces : tuple of frozenset
        Pairwise disjoint label sets whose union is the global label space.
    membership : tuple of frozenset
        ``membership[m]`` holds the ids of agents whose label space meets
        ``subspaces[m]``.
    """

    subspaces: tuple
    membership: tuple

    def __post_init__(self):
        subs = tuple(frozenset(s) for s in self.subspaces)
        mem = tuple(frozenset(m) for m in self.membership)
        if len(subs) != len(mem):
            raise ValueError("one membership set per subspace is required")
        seen = set()
        for s in subs:
            if seen & s:
                raise ValueError("label subspaces must be pairwise disjoint")
            seen |= s
        object.__setattr__(self, "subspaces", subs)
        object.__setattr__(self, "membership", mem)

    def __len__(self):
        return len(self.subspaces)

    @property
    def label_space(self):
        return frozenset().union(*self.subspaces) if self.subspaces else frozenset()

    def index_of(self, label):
        for m, s in enumerate(self.subspaces):
            if label in s:
                return m
        raise KeyError(label)


def _label_space(obj):
    return obj.label_space if hasattr(obj, "label_space") else frozenset(obj)


def discover_subspaces(locals_, agent_ids=None, singleton=False) -> SubspacePartition:
    """Group labels by the set of agents that carry them.

    Parameters
    ----------
    locals_ : sequence of densities or label sets
    agent_ids : sequence of int, optional
        Defaults to ``0..N-1``.
    singleton : bool
        Put every label in its own subspace (valid for LMB densities, which
        are already independent across labels).
    """
    spaces = [_label_space(d) for d in locals_]
    if agent_ids is None:
        agent_ids = list(range(len(spaces)))
    groups: dict = {}
    for lab in sorted(frozenset().union(*spaces) if spaces else ()):
        sig = frozenset(a for a, s in zip(agent_ids, spaces) if lab in s)
        key = (lab,) if singleton else sig
        groups.setdefault(key, (sig, []))[1].append(lab)
    items = sorted(groups.values(), key=lambda g: min(g[1]))
    return SubspacePartition(tuple(frozenset(labs) for _, labs in items), tuple(sig for sig, _ in items))


def geometric_label_spaces(locals_, covers, positions):
    """Label spaces implied by known fields of view.

    ``positions`` maps each label to a position estimate and ``covers[i]`` is
    a predicate telling whether agent ``i`` can observe a position. A label
    belongs to every agent that covers its position. A label nobody covers
    stays with the agents that carry it. Labels missing from ``positions``
    stay with their carriers too.
    """
    spaces = [_label_space(d) for d in locals_]
    out = [set() for _ in spaces]
    for lab in frozenset().union(*spaces) if spaces else ():
        owners = []
        if lab in positions:
            pos = np.asarray(positions[lab])
            owners = [i for i, cov in enumerate(covers) if cov(pos)]
        if not owners:
            owners = [i for i, s in enumerate(spaces) if lab in s]
        for i in owners:
            out[i].add(lab)
    return [frozenset(s) for s in out]


# --- decomposition -----------------------------------------------------------------


def decompose(density, partition: SubspacePartition, reduction: Reduction | None = DEFAULT_REDUCTION):
    """Split ``density`` into one sub-density per subspace.

    The sub-JEP on subspace ``m`` is ``p_m(L_m) = sum p(L)`` over label sets
    with ``L & subspace_m == L_m``; the sub-conditionals are the matching
    JEP-weighted mixtures of the marginal conditionals. A subspace the
    density does not touch gets the empty set with probability one.
    """
    if isinstance(density, LMBDensity):
        return [
            LMBDensity([t for t in density if t.label in sub], density.label_space & sub)
            for sub in partition.subspaces
        ]
    if isinstance(density, MDGLMBDensity):
        return [_decompose_mdglmb(density, sub, reduction) for sub in partition.subspaces]
    if isinstance(density, GeneralLRFS):
        return [_decompose_general(density, sub) for sub in partition.subspaces]
    raise TypeError(f"cannot decompose {type(density).__name__}")


def _decompose_mdglmb(density: MDGLMBDensity, sub, reduction):
    acc: dict = {}
    for h in density:
        if h.jep <= 0:
            continue
        Lm = h.label_set & sub
        acc.setdefault(Lm, []).append(h)
    hyps = []
    for Lm, hs in acc.items():
        pm = sum(h.jep for h in hs)
        if pm <= 0:
            continue
        coeffs = [h.jep / pm for h in hs]
        pdfs = {lab: reduce_pdf(mix_pdfs([h.pdfs[lab] for h in hs], coeffs), reduction) for lab in Lm}
        hyps.append(Hypothesis(Lm, pm, pdfs))
    if not hyps:
        hyps = [Hypothesis(frozenset(), 1.0, {})]
    return MDGLMBDensity(hyps, density.label_space & sub)


def _decompose_general(density: GeneralLRFS, sub):
    acc: dict = {}
    for L, p in density.jep.items():
        if p > 0:
            acc.setdefault(L & sub, []).append((p, density.cjpdf[L].marginal(L & sub)))
    jep, cjpdf = {}, {}
    for Lm, parts in acc.items():
        pm = sum(p for p, _ in parts)
        jep[Lm] = pm
        cjpdf[Lm] = mix_cjpdfs([c for _, c in parts], [p / pm for p, _ in parts])
    if not jep:
        jep[frozenset()] = 1.0
        cjpdf[frozenset()] = ProductMixtureCJPDF.product({})
    return GeneralLRFS(jep, cjpdf, density.label_space & sub)


# --- reconstruction ----------------------------------------------------------------


def reconstruct(subs: Sequence, max_hypotheses: int | None = MAX_HYPOTHESES):
    """Product of sub-densities defined on disjoint label spaces.

    LMB inputs give an LMB density. Marginal delta-GLMB inputs give the cross
    product of hypotheses; keeping the best ``max_hypotheses`` after every
    factor yields exactly the best ``max_hypotheses`` of the full product.
    """
    subs = list(subs)
    if all(isinstance(s, LMBDensity) for s in subs):
        tracks = [t for s in subs for t in s]
        return LMBDensity(tracks, frozenset().union(*(s.label_space for s in subs)))
    if all(isinstance(s, GeneralLRFS) for s in subs):
        return _product_general(subs)
    mds = [_as_mdglmb(s) for s in subs]
    partial = [(1.0, frozenset(), {})]
    truncated = False
    for s in mds:
        nxt = [(a * h.jep, L | h.label_set, {**f, **h.pdfs}) for a, L, f in partial for h in s if h.jep > 0]
        nxt.sort(key=lambda x: (-x[0], tuple(sorted(x[1]))))
        if max_hypotheses is not None and len(nxt) > max_hypotheses:
            nxt = nxt[:max_hypotheses]
            truncated = True
        partial = nxt
    total = sum(a for a, _, _ in partial) if truncated else 1.0
    hyps = [Hypothesis(L, a / total, f) for a, L, f in partial]
    return MDGLMBDensity(hyps, frozenset().union(*(s.label_space for s in mds)))


def _as_mdglmb(s):
    if isinstance(s, MDGLMBDensity):
        return s
    if isinstance(s, LMBDensity):
        return lmb_to_mdglmb(s)
    raise TypeError(f"cannot multiply {type(s).__name__}")


def _product_general(subs):
    jep = {frozenset(): 1.0}
    cj = {frozenset(): None}
    for s in subs:
        new_jep, new_cj = {}, {}
        for L1, p1 in jep.items():
            for L2, p2 in s.jep.items():
                if p1 * p2 <= 0:
                    continue
                L = L1 | L2
                new_jep[L] = p1 * p2
                c2 = s.cjpdf[L2]
                new_cj[L] = c2 if cj[L1] is None else cj[L1].times(c2)
        jep, cj = new_jep, new_cj
    cj = {L: (ProductMixtureCJPDF.product({}) if c is None else c) for L, c in cj.items()}
    return GeneralLRFS(jep, cj, frozenset().union(*(s.label_space for s in subs)))


# --- fusion ------------------------------------------------------------------------


def fuse_subspaces(
    locals_: Sequence,
    partition: SubspacePartition | None = None,
    weights=None,
    agent_ids=None,
    rule: str = "mil",
    reduction: Reduction | None = DEFAULT_REDUCTION,
    max_hypotheses: int | None = MAX_HYPOTHESES,
):
    """Fuse agents with possibly different label spaces, one subspace at a time.

    Parameters
    ----------
    locals_ : sequence of LMBDensity, MDGLMBDensity or GeneralLRFS
        Local densities with canonicalized labels, all of one family.
    partition : SubspacePartition, optional
        Discovered from the label spaces when omitted (label comparison).
    weights : array_like, optional
        Agent fusion weights; renormalized over each subspace's participants.
    agent_ids : sequence of int, optional
        Ids used by ``partition.membership``; default ``0..N-1``.
    rule : {"mil", "gci"}

    Returns
    -------
    Density of the inputs' family (GCI and LMB inputs give LMB).
    """
    n = len(locals_)
    w = validate_weights(weights, n)
    if agent_ids is None:
        agent_ids = list(range(n))
    if partition is None:
        partition = discover_subspaces(locals_, agent_ids)
    if rule not in ("mil", "gci"):
        raise ValueError(f"unknown fusion rule {rule!r}")
    pos = {a: i for i, a in enumerate(agent_ids)}

    if all(isinstance(d, LMBDensity) for d in locals_):
        return _fuse_lmb_groups(locals_, partition, w, pos, rule, reduction)

    decomposed = [decompose(d, partition, reduction) for d in locals_]
    fused_subs = []
    for m, sub in enumerate(partition.subspaces):
        idx = sorted(pos[a] for a in partition.membership[m] if a in pos)
        wm = _renormalized(w, idx)
        parts = [_widen(decomposed[i][m], sub) for i in idx]
        if isinstance(parts[0], GeneralLRFS):
            fused = (mil_fuse_general if rule == "mil" else gci_fuse_general)(parts, wm)
        else:
            fuse = mil_fuse_mdglmb if rule == "mil" else gci_fuse_mdglmb
            fused = fuse(parts, wm, reduction=reduction, max_hypotheses=max_hypotheses)
        fused_subs.append(fused)
    return reconstruct(fused_subs, max_hypotheses)


def _renormalized(w, idx):
    wm = w[idx]
    s = wm.sum()
    wm = np.full(len(idx), 1.0 / len(idx)) if s <= 0 else wm / s
    # absorb rounding so the weights pass the strict sum check
    wm[-1] = 1.0 - wm[:-1].sum()
    return wm


def _widen(density, sub):
    # an agent that participates in a subspace covers all of it (missing mass is zero)
    if isinstance(density, LMBDensity):
        return LMBDensity(density, density.label_space | sub)
    if isinstance(density, MDGLMBDensity):
        return MDGLMBDensity(density.hypotheses, density.label_space | sub)
    return density


def _fuse_lmb_groups(locals_, partition, w, pos, rule, reduction):
    # LMB fusion is label-wise, so subspaces sharing participants fuse together
    by_members: dict = {}
    for sub, mem in zip(partition.subspaces, partition.membership):
        by_members.setdefault(mem, set()).update(sub)
    fuse = mil_fuse_lmb if rule == "mil" else gci_fuse_lmb
    tracks, space = [], set()
    for mem, labs in sorted(by_members.items(), key=lambda kv: min(kv[1])):
        labs = frozenset(labs)
        idx = sorted(pos[a] for a in mem if a in pos)
        wm = _renormalized(w, idx)
        parts = [LMBDensity([t for t in locals_[i] if t.label in labs], labs) for i in idx]
        fused = fuse(parts, wm, reduction=reduction)
        tracks.extend(fused)
        space |= labs
    return LMBDensity(tracks, space)


__all__ = [
    "SubspacePartition",
    "decompose",
    "discover_subspaces",
    "fuse_subspaces",
    "geometric_label_spaces",
    "reconstruct",
]
