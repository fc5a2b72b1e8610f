"""Labeled RFS densities: LMB, marginal delta-GLMB and the general (JEP, CJPDF) form.

All density objects are immutable after construction. Label sets are
``frozenset`` instances of :class:`Label`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np

from .mixture import GaussianMixture, GridPDF, mix_pdfs, reduce_pdf

ENUMERATION_CAP = 12


class EnumerationTooLarge(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Label:
    """Track label.

    ``(birth_time, birth_index, agent_id)`` identifies a label within one
    agent's density. ``branch`` disambiguates two distinct tracks that were
    relabeled onto the same raw label during matching. ``canonical_id`` is
    bookkeeping set by label matching; it does not take part in equality,
    because matched tracks across agents share the same label value.
    """

    birth_time: int
    birth_index: int
    agent_id: int = 0
    branch: int = 0
    canonical_id: int | None = field(default=None, compare=False)

    def as_list(self):
        return [self.birth_time, self.birth_index, self.agent_id, self.branch]

    def __repr__(self):
        tail = f",b{self.branch}" if self.branch else ""
        return f"L({self.birth_time},{self.birth_index},a{self.agent_id}{tail})"


def _sorted_labels(labels):
    return tuple(sorted(labels))


@dataclass(frozen=True)
class BernoulliTrack:
    label: Label
    existence: float
    pdf: GaussianMixture | GridPDF

    def __post_init__(self):
        if not (-1e-12 <= self.existence <= 1.0 + 1e-12):
            raise ValueError(f"existence probability {self.existence} outside [0, 1]")
        object.__setattr__(self, "existence", float(min(max(self.existence, 0.0), 1.0)))


class LMBDensity:
    """Labeled multi-Bernoulli density: independent tracks keyed by label.

    ``label_space`` may be larger than the set of stored tracks; a label in
    the space without a track has existence probability zero.
    """

    def __init__(self, tracks: Iterable[BernoulliTrack] = (), label_space=None):
        tracks = sorted(tracks, key=lambda t: t.label)
        self._tracks = {t.label: t for t in tracks}
        if len(self._tracks) != len(tracks):
            raise ValueError("duplicate label in LMB density")
        space = frozenset(self._tracks) if label_space is None else frozenset(label_space)
        if not set(self._tracks) <= space:
            raise ValueError("track label outside the label space")
        self.label_space = space

    @property
    def tracks(self) -> Mapping[Label, BernoulliTrack]:
        return self._tracks

    @property
    def labels(self):
        return list(self._tracks)

    def __len__(self):
        return len(self._tracks)

    def __iter__(self):
        return iter(self._tracks.values())

    def __contains__(self, label):
        return label in self._tracks

    def __getitem__(self, label):
        return self._tracks[label]

    def __repr__(self):
        return f"LMBDensity(n_tracks={len(self)}, expected_card={self.expected_cardinality():.3f})"

    def existence(self, label):
        t = self._tracks.get(label)
        return 0.0 if t is None else t.existence

    def expected_cardinality(self):
        return float(sum(t.existence for t in self))

    def prune(self, threshold=1e-5):
        """Drop tracks whose existence probability is below ``threshold``."""
        return LMBDensity([t for t in self if t.existence >= threshold])

    def relabel(self, mapping: Mapping[Label, Label]):
        tracks = [replace(t, label=mapping.get(t.label, t.label)) for t in self]
        space = {mapping.get(lab, lab) for lab in self.label_space}
        return LMBDensity(tracks, space)

    def restrict(self, labels):
        labels = frozenset(labels)
        return LMBDensity([t for t in self if t.label in labels], self.label_space & labels)


@dataclass(frozen=True)
class Hypothesis:
    label_set: frozenset
    jep: float
    pdfs: Mapping[Label, GaussianMixture | GridPDF]

    def __post_init__(self):
        object.__setattr__(self, "label_set", frozenset(self.label_set))
        if set(self.pdfs) != set(self.label_set):
            raise ValueError("hypothesis PDFs must cover exactly its label set")


class MDGLMBDensity:
    """Marginal delta-GLMB density: one JEP and per-label PDFs per label set."""

    def __init__(self, hypotheses: Iterable[Hypothesis], label_space=None):
        hyps = list(hypotheses)
        sets = [h.label_set for h in hyps]
        if len(set(sets)) != len(sets):
            raise ValueError("label sets of an MDGLMB density must be distinct")
        union = frozenset().union(*sets) if sets else frozenset()
        space = union if label_space is None else frozenset(label_space)
        if not union <= space:
            raise ValueError("hypothesis label outside the label space")
        self.hypotheses = sorted(hyps, key=lambda h: (-h.jep, _sorted_labels(h.label_set)))
        self.label_space = space

    def __len__(self):
        return len(self.hypotheses)

    def __iter__(self):
        return iter(self.hypotheses)

    def __repr__(self):
        return f"MDGLMBDensity(n_hypotheses={len(self)}, n_labels={len(self.label_space)})"

    @property
    def labels(self):
        return sorted(self.label_space)

    def jep(self, label_set):
        label_set = frozenset(label_set)
        for h in self.hypotheses:
            if h.label_set == label_set:
                return h.jep
        return 0.0

    def jep_map(self):
        return {h.label_set: h.jep for h in self.hypotheses}

    def total_jep(self):
        return float(sum(h.jep for h in self.hypotheses))

    def expected_cardinality(self):
        return float(sum(h.jep * len(h.label_set) for h in self.hypotheses))

    def truncate(self, floor=1e-20, max_hypotheses=None):
        """Drop hypotheses below ``floor``, keep the heaviest ``max_hypotheses``, renormalize."""
        hyps = [h for h in self.hypotheses if h.jep >= floor]
        if max_hypotheses is not None:
            hyps = hyps[:max_hypotheses]
        total = sum(h.jep for h in hyps)
        if total <= 0:
            return MDGLMBDensity([Hypothesis(frozenset(), 1.0, {})], self.label_space)
        return MDGLMBDensity([replace(h, jep=h.jep / total) for h in hyps], self.label_space)

    def relabel(self, mapping: Mapping[Label, Label]):
        hyps = [
            Hypothesis(
                frozenset(mapping.get(lab, lab) for lab in h.label_set),
                h.jep,
                {mapping.get(lab, lab): pdf for lab, pdf in h.pdfs.items()},
            )
            for h in self.hypotheses
        ]
        return MDGLMBDensity(hyps, {mapping.get(lab, lab) for lab in self.label_space})

    def prune_labels(self):
        """Shrink the label space to labels present in some hypothesis."""
        return MDGLMBDensity(self.hypotheses)


# --- conditional joint PDFs for the general form ---------------------------------


class ProductMixtureCJPDF:
    """Mixture of products of per-label PDFs: ``sum_k c_k prod_l f_{k,l}(x_l)``."""

    def __init__(self, terms):
        self.terms = [(float(c), dict(f)) for c, f in terms]
        if not self.terms:
            raise ValueError("empty conditional PDF")
        keys = {frozenset(f) for _, f in self.terms}
        if len(keys) != 1:
            raise ValueError("all product terms must cover the same labels")
        self.labels = next(iter(keys))

    @classmethod
    def product(cls, pdfs: Mapping[Label, object]):
        return cls([(1.0, pdfs)])

    def mass(self):
        return sum(c for c, _ in self.terms)

    def normalized(self):
        m = self.mass()
        return ProductMixtureCJPDF([(c / m, f) for c, f in self.terms])

    def pdf(self, states: Mapping[Label, np.ndarray]):
        total = 0.0
        for c, f in self.terms:
            val = c
            for lab, pdf in f.items():
                val *= float(np.atleast_1d(pdf.pdf(np.asarray(states[lab])))[0])
            total += val
        return total

    def marginal(self, keep):
        keep = frozenset(keep)
        return ProductMixtureCJPDF([(c, {lab: p for lab, p in f.items() if lab in keep}) for c, f in self.terms])

    def times(self, other: "ProductMixtureCJPDF"):
        return ProductMixtureCJPDF(
            [(c1 * c2, {**f1, **f2}) for (c1, f1), (c2, f2) in itertools.product(self.terms, other.terms)]
        )

    @staticmethod
    def mix(cjpdfs, coeffs):
        terms = []
        for cj, a in zip(cjpdfs, coeffs):
            if a > 0:
                terms.extend((a * c, f) for c, f in cj.terms)
        return ProductMixtureCJPDF(terms)

    def to_table(self):
        """Joint mass table over the shared grid; requires grid PDF factors."""
        labs = _sorted_labels(self.labels)
        table = 0.0
        for c, f in self.terms:
            t = np.array(c)
            for lab in labs:
                if not isinstance(f[lab], GridPDF):
                    raise TypeError("tabulation needs grid PDFs")
                t = np.multiply.outer(t, f[lab].masses)
            table = table + t
        return np.asarray(table)


class GridCJPDF:
    """Joint mass table on a shared 1-D or n-D point grid, one axis per label (sorted)."""

    def __init__(self, labels, grid, table):
        self.labels = frozenset(labels)
        self.grid = np.asarray(grid, dtype=float)
        table = np.asarray(table, dtype=float)
        if table.ndim != len(self.labels):
            raise ValueError("table must have one axis per label")
        self.table = table

    def mass(self):
        return float(self.table.sum())

    def normalized(self):
        return GridCJPDF(self.labels, self.grid, self.table / self.table.sum())

    def pdf(self, states: Mapping[Label, int]):
        """Mass at grid indices ``states[label]``."""
        idx = tuple(int(states[lab]) for lab in _sorted_labels(self.labels))
        return float(self.table[idx])

    def marginal(self, keep):
        keep = frozenset(keep)
        labs = _sorted_labels(self.labels)
        axes = tuple(i for i, lab in enumerate(labs) if lab not in keep)
        return GridCJPDF(self.labels & keep, self.grid, self.table.sum(axis=axes))

    def times(self, other: "GridCJPDF"):
        labs = _sorted_labels(self.labels | other.labels)
        joint = np.multiply.outer(self.table, other.table)
        order = list(_sorted_labels(self.labels)) + list(_sorted_labels(other.labels))
        perm = [order.index(lab) for lab in labs]
        return GridCJPDF(labs, self.grid, np.transpose(joint, perm) if joint.ndim else joint)

    @staticmethod
    def mix(cjpdfs, coeffs):
        first = cjpdfs[0]
        return GridCJPDF(first.labels, first.grid, sum(a * c.table for c, a in zip(cjpdfs, coeffs)))

    def to_table(self):
        return self.table


def mix_cjpdfs(cjpdfs, coeffs):
    kinds = {type(c) for c in cjpdfs}
    if len(kinds) != 1:
        raise TypeError("cannot mix conditional PDFs of different forms")
    return kinds.pop().mix(cjpdfs, coeffs)


class GeneralLRFS:
    """General labeled RFS density as a JEP table plus per-set conditional PDFs.

    Label sets with zero JEP may be stored without a conditional PDF.
    """

    def __init__(self, jep: Mapping, cjpdf: Mapping, label_space=None):
        self.jep = {frozenset(k): float(v) for k, v in jep.items()}
        self.cjpdf = {frozenset(k): v for k, v in cjpdf.items()}
        for L, p in self.jep.items():
            if p > 0 and L not in self.cjpdf:
                raise ValueError(f"missing conditional PDF for label set {sorted(L)}")
        union = frozenset().union(*self.jep) if self.jep else frozenset()
        self.label_space = union if label_space is None else frozenset(label_space)

    def __repr__(self):
        return f"GeneralLRFS(n_sets={len(self.jep)}, n_labels={len(self.label_space)})"

    def total_jep(self):
        return float(sum(self.jep.values()))

    def p(self, label_set):
        return self.jep.get(frozenset(label_set), 0.0)

    @classmethod
    def from_mdglmb(cls, density: MDGLMBDensity):
        return cls(
            {h.label_set: h.jep for h in density},
            {h.label_set: ProductMixtureCJPDF.product(h.pdfs) for h in density},
            density.label_space,
        )

    @classmethod
    def from_lmb(cls, density: LMBDensity, cap=ENUMERATION_CAP):
        return cls.from_mdglmb(lmb_to_mdglmb(density, cap))


# --- operations --------------------------------------------------------------------


def lmb_jep(density: LMBDensity, label_set) -> float:
    """Joint existence probability of exactly ``label_set`` under an LMB density.

    Computed in product form, ``prod_{l not in L} (1 - r_l) * prod_{l in L} r_l``.
    """
    label_set = frozenset(label_set)
    unknown = label_set - density.label_space
    if unknown:
        raise ValueError(f"unknown label {sorted(unknown)[0]!r}")
    out = 1.0
    for lab in density.label_space:
        r = density.existence(lab)
        out *= r if lab in label_set else (1.0 - r)
    return out


def _subsets(labels):
    labels = list(labels)
    for n in range(len(labels) + 1):
        for combo in itertools.combinations(labels, n):
            yield frozenset(combo)


def lmb_to_mdglmb(density: LMBDensity, cap=ENUMERATION_CAP) -> MDGLMBDensity:
    """Expand an LMB density into one hypothesis per subset of its label space."""
    space = sorted(density.label_space)
    if len(space) > cap:
        raise EnumerationTooLarge(f"enumeration too large: {len(space)} labels > cap {cap}")
    hyps = []
    for L in _subsets(space):
        p = lmb_jep(density, L)
        if p > 0 or not L:
            hyps.append(Hypothesis(L, p, {lab: density[lab].pdf for lab in L}))
    return MDGLMBDensity(hyps, density.label_space)


def mdglmb_to_lmb(density: MDGLMBDensity, reduction=None) -> LMBDensity:
    """PHD-matching LMB approximation of an MDGLMB density.

    ``r_l`` is the total JEP of the label sets containing ``l``; ``f_l`` is the
    JEP-weighted mixture of the conditional PDFs ``f_{l|L}``. Labels with zero
    existence are dropped.
    """
    r = {}
    parts = {}
    for h in density:
        for lab in h.label_set:
            r[lab] = r.get(lab, 0.0) + h.jep
            parts.setdefault(lab, []).append((h.jep, h.pdfs[lab]))
    tracks = []
    for lab in sorted(r):
        if r[lab] <= 0:
            continue
        coeffs = [w / r[lab] for w, _ in parts[lab]]
        pdf = reduce_pdf(mix_pdfs([p for _, p in parts[lab]], coeffs), reduction)
        tracks.append(BernoulliTrack(lab, min(r[lab], 1.0), pdf))
    return LMBDensity(tracks, density.label_space)


def phd(density, x):
    """Probability hypothesis density (first-moment intensity) at state(s) ``x``."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    x2 = np.atleast_2d(x)
    out = np.zeros(len(x2))
    if isinstance(density, LMBDensity):
        for t in density:
            out += t.existence * np.asarray(t.pdf.pdf(x2))
    elif isinstance(density, MDGLMBDensity):
        for h in density:
            for pdf in h.pdfs.values():
                out += h.jep * np.asarray(pdf.pdf(x2))
    else:
        raise TypeError(f"no PHD for {type(density).__name__}")
    return out[0] if squeeze else out
