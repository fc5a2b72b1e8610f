"""Label matching across agents as a rank-assignment problem.

Two agents' tracks are matched by minimizing the total divergence between
their PDFs. Existence probabilities are deliberately ignored: a cost based
on them can pair a weak track with the wrong strong one. Every label may
also stay unmatched at cost ``T_D``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .densities import Label, LMBDensity, MDGLMBDensity, mdglmb_to_lmb
from .divergence import DivergenceKind, divergence_matrix

DEFAULT_THRESHOLD = 50.0
GATE_FACTOR = 2.0


@dataclass(frozen=True)
class CostMatrix:
    """Matching costs with one extra row and column for "unmatched".

    ``entries[i, j]`` for real labels is the PDF divergence, the last column
    and last row hold ``threshold`` and the corner is ``inf``.
    """

    entries: np.ndarray
    threshold: float
    labels1: tuple = ()
    labels2: tuple = ()

    @property
    def block(self):
        return self.entries[:-1, :-1]

    @property
    def shape(self):
        return self.entries.shape


@dataclass(frozen=True)
class Assignment:
    """Partial matching between two label lists.

    ``pairs`` holds index pairs into the two label lists; ``total_cost`` counts
    matched costs plus ``threshold`` for every unmatched label on either side.
    """

    pairs: tuple
    unmatched1: tuple
    unmatched2: tuple
    total_cost: float
    labels1: tuple = field(default=(), repr=False)
    labels2: tuple = field(default=(), repr=False)

    @property
    def label_pairs(self):
        return [(self.labels1[i], self.labels2[j]) for i, j in self.pairs]

    def transposed(self):
        return Assignment(
            tuple(sorted((j, i) for i, j in self.pairs)),
            self.unmatched2,
            self.unmatched1,
            self.total_cost,
            self.labels2,
            self.labels1,
        )


def _moments(pdfs):
    means = np.array([p.mean() for p in pdfs])
    covs = np.array([p.covariance() for p in pdfs])
    return means, covs


def gate_mask(pdfs1, pdfs2, threshold, kind=DivergenceKind.JSD, factor=GATE_FACTOR):
    """Candidate pairs whose moment-matched divergence bound is plausible.

    With ``b = d' (P1 + P2)^-1 d`` for moment-matched means and covariances,
    single Gaussians satisfy ``JSD >= b`` and ``CSD >= b / 2``. A pair costing
    more than twice the unmatched cost is never part of an optimal matching
    (unmatching both sides is cheaper), so pairs whose bound exceeds
    ``factor * threshold`` are skipped. For mixtures the bound is a heuristic.
    """
    n1, n2 = len(pdfs1), len(pdfs2)
    if n1 == 0 or n2 == 0:
        return np.zeros((n1, n2), dtype=bool)
    m1, P1 = _moments(pdfs1)
    m2, P2 = _moments(pdfs2)
    diff = m1[:, None, :] - m2[None, :, :]
    S = P1[:, None] + P2[None, :]
    sol = np.linalg.solve(S, diff[..., None])[..., 0]
    bound = np.einsum("ijk,ijk->ij", diff, sol)
    if DivergenceKind.parse(kind) is DivergenceKind.CSD:
        bound = 0.5 * bound
    return bound <= factor * threshold


def _pair_gate(pdfs1, pdfs2, threshold, kind=DivergenceKind.JSD, factor=GATE_FACTOR):
    """The gate of :func:`gate_mask` evaluated for aligned pairs only."""
    m1, P1 = _moments(pdfs1)
    m2, P2 = _moments(pdfs2)
    diff = m1 - m2
    bound = np.einsum("ij,ij->i", diff, np.linalg.solve(P1 + P2, diff[..., None])[..., 0])
    if DivergenceKind.parse(kind) is DivergenceKind.CSD:
        bound = 0.5 * bound
    return bound <= factor * threshold


def _as_lmb(density):
    if isinstance(density, LMBDensity):
        return density
    if isinstance(density, MDGLMBDensity):
        return mdglmb_to_lmb(density)
    raise TypeError(f"cannot match labels of {type(density).__name__}")


def build_cost_matrix(lmb1, lmb2, kind=DivergenceKind.JSD, threshold=DEFAULT_THRESHOLD, gate=True) -> CostMatrix:
    """Assemble the ``(n1 + 1) x (n2 + 1)`` matching cost matrix.

    Costs use track PDFs only. Pairs rejected by the gate, or whose
    divergence is infinite, carry ``inf`` and cannot be matched.
    """
    if threshold <= 0:
        raise ValueError("matching threshold must be positive")
    lmb1, lmb2 = _as_lmb(lmb1), _as_lmb(lmb2)
    labels1, labels2 = tuple(lmb1.labels), tuple(lmb2.labels)
    pdfs1 = [lmb1[lab].pdf for lab in labels1]
    pdfs2 = [lmb2[lab].pdf for lab in labels2]
    return cost_matrix_from_pdfs(pdfs1, pdfs2, kind, threshold, gate, labels1, labels2)


def cost_matrix_from_pdfs(pdfs1, pdfs2, kind=DivergenceKind.JSD, threshold=DEFAULT_THRESHOLD, gate=True, labels1=(), labels2=()):
    n1, n2 = len(pdfs1), len(pdfs2)
    entries = np.full((n1 + 1, n2 + 1), float(threshold))
    entries[-1, -1] = math.inf
    if n1 and n2:
        cand = gate_mask(pdfs1, pdfs2, threshold, kind) if gate else None
        entries[:-1, :-1] = divergence_matrix(pdfs1, pdfs2, kind, cand)
    return CostMatrix(entries, float(threshold), tuple(labels1), tuple(labels2))


def solve_assignment(cost: CostMatrix) -> Assignment:
    """Minimum-cost partial matching.

    The rectangular problem is padded to a square one of size ``n1 + n2``:
    real-to-real block ``D``, real-to-dummy diagonal ``T_D`` (``inf`` off the
    diagonal) and a zero dummy-to-dummy block, then solved exactly.
    """
    D = cost.block
    n1, n2 = D.shape
    T = cost.threshold
    if n1 == 0 or n2 == 0:
        return Assignment((), tuple(range(n1)), tuple(range(n2)), T * (n1 + n2), cost.labels1, cost.labels2)
    big = np.full((n1 + n2, n1 + n2), math.inf)
    big[:n1, :n2] = D
    big[:n1, n2:] = np.where(np.eye(n1, dtype=bool), T, math.inf)
    big[n1:, :n2] = np.where(np.eye(n2, dtype=bool), T, math.inf)
    big[n1:, n2:] = 0.0
    rows, cols = linear_sum_assignment(big)
    pairs, un1, matched2 = [], [], set()
    for r, c in zip(rows, cols):
        if r < n1 and c < n2:
            pairs.append((int(r), int(c)))
            matched2.add(int(c))
        elif r < n1:
            un1.append(int(r))
    un2 = tuple(j for j in range(n2) if j not in matched2)
    total = float(sum(D[i, j] for i, j in pairs) + T * (len(un1) + len(un2)))
    return Assignment(tuple(pairs), tuple(un1), un2, total, cost.labels1, cost.labels2)


def match(lmb1, lmb2, kind=DivergenceKind.JSD, threshold=DEFAULT_THRESHOLD) -> Assignment:
    return solve_assignment(build_cost_matrix(lmb1, lmb2, kind, threshold))


def _unique(label: Label, taken: set) -> Label:
    out = label
    while out in taken:
        out = replace(out, branch=out.branch + 1)
    return out


def _raw(label: Label) -> Label:
    return replace(label, canonical_id=None)


def canonicalize(densities, reference=None, kind=DivergenceKind.JSD, threshold=DEFAULT_THRESHOLD, agent_ids=None):
    """Give matched tracks of all agents a common label.

    The reference agent seeds a table of canonical labels; the other agents
    are matched against the table in ascending id order. A matched track takes
    the canonical label, an unmatched one adds a new canonical entry under its
    own label (with the ``branch`` field bumped on collision).

    A track whose label already names a table entry (the same birth, spread
    by earlier fusion) is matched to it directly, provided the pair passes the
    gate. Only the remaining tracks go through the rank assignment.

    Returns
    -------
    relabeled : list
        Relabeled copies of ``densities`` in input order.
    label_map : dict
        ``canonical_id -> [(agent_id, raw label), ...]``.
    """
    n = len(densities)
    if n == 0:
        raise ValueError("need at least one density")
    if agent_ids is None:
        agent_ids = list(range(n))
    agent_ids = list(agent_ids)
    if reference is None:
        reference = min(agent_ids)
    order = sorted(range(n), key=lambda i: (agent_ids[i] != reference, agent_ids[i]))
    lmbs = [_as_lmb(d) for d in densities]

    table_labels: list = []
    table_pdfs: list = []
    by_raw: dict = {}
    label_map: dict = {}
    mappings: dict = {}
    taken: set = set()
    for k, i in enumerate(order):
        dens = lmbs[i]
        labels = dens.labels
        pdfs = [dens[lab].pdf for lab in labels]
        mapping = {}
        ident = [(by_raw[_raw(lab)], j) for j, lab in enumerate(labels) if _raw(lab) in by_raw]
        if ident:
            ok = _pair_gate([table_pdfs[t] for t, _ in ident], [pdfs[j] for _, j in ident], threshold, kind)
            ident = [p for p, good in zip(ident, ok) if good]
        pairs = list(ident)
        rest = sorted(set(range(len(labels))) - {j for _, j in ident})
        free = [t for t in range(len(table_labels)) if t not in {p for p, _ in pairs}]
        if k == 0 or not rest:
            unmatched = rest
        else:
            asg = solve_assignment(cost_matrix_from_pdfs([table_pdfs[t] for t in free], [pdfs[j] for j in rest], kind, threshold))
            pairs += [(free[a], rest[b]) for a, b in asg.pairs]
            unmatched = [rest[b] for b in asg.unmatched2]
        for t, j in pairs:
            mapping[labels[j]] = table_labels[t]
            label_map[table_labels[t].canonical_id].append((agent_ids[i], labels[j]))
        for j in unmatched:
            cid = len(table_labels)
            new = replace(_unique(labels[j], taken), canonical_id=cid)
            taken.add(new)
            by_raw.setdefault(_raw(labels[j]), cid)
            table_labels.append(new)
            table_pdfs.append(pdfs[j])
            mapping[labels[j]] = new
            label_map[cid] = [(agent_ids[i], labels[j])]
        mappings[i] = mapping
    relabeled = [densities[i].relabel(mappings[i]) for i in range(n)]
    return relabeled, label_map


__all__ = [
    "Assignment",
    "CostMatrix",
    "DEFAULT_THRESHOLD",
    "build_cost_matrix",
    "canonicalize",
    "cost_matrix_from_pdfs",
    "gate_mask",
    "match",
    "solve_assignment",
]
