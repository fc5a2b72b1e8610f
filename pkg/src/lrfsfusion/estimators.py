"""Estimator-style wrappers around label matching and fusion.

The classes follow the scikit-learn conventions (constructor arguments are
hyperparameters, ``fit`` stores fitted attributes with a trailing
underscore, ``get_params``/``set_params`` come from ``BaseEstimator``). The
"samples" are not rows of a matrix but the local densities of the agents, so
these are thin facades over the functional API.
"""

from __future__ import annotations

from typing import Sequence

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .densities import LMBDensity, MDGLMBDensity, mdglmb_to_lmb
from .divergence import DivergenceKind
from .fov import discover_subspaces, fuse_subspaces, geometric_label_spaces
from .fusion import MAX_HYPOTHESES, gci_fuse_lmb, gci_fuse_mdglmb, validate_weights
from .matching import DEFAULT_THRESHOLD, canonicalize
from .mixture import Reduction


def _check_densities(X):
    if isinstance(X, (LMBDensity, MDGLMBDensity)) or not isinstance(X, Sequence):
        raise TypeError("expected a sequence of local densities, one per agent")
    if len(X) == 0:
        raise ValueError("need at least one local density")
    kinds = {type(d) for d in X}
    if not kinds <= {LMBDensity, MDGLMBDensity}:
        raise TypeError("local densities must be LMBDensity or MDGLMBDensity")
    if len(kinds) > 1:
        raise ValueError("all local densities must belong to one family")
    return list(X)


def _positions(densities):
    # best position estimate per label: mean of its most probable copy
    best = {}
    for d in densities:
        lmb = d if isinstance(d, LMBDensity) else mdglmb_to_lmb(d)
        for t in lmb:
            if t.label not in best or t.existence > best[t.label][0]:
                best[t.label] = (t.existence, t.pdf.dominant_mean()[[0, 2]])
    return {lab: pos for lab, (_, pos) in best.items()}


def fuse_local_densities(
    densities,
    rule: str = "mil",
    weights=None,
    agent_ids=None,
    reference=None,
    match: bool = True,
    match_cost="jsd",
    match_threshold: float = DEFAULT_THRESHOLD,
    covers=None,
    reduction: Reduction | None = Reduction(),
    max_hypotheses: int | None = MAX_HYPOTHESES,
):
    """Match labels across agents, then fuse.

    Parameters
    ----------
    densities : sequence of LMBDensity or MDGLMBDensity
    rule : {"mil", "gci"}
    weights : array_like, optional
        Agent weights, uniform by default.
    agent_ids : sequence of int, optional
    reference : int, optional
        Agent whose labels seed the canonical table (lowest id by default).
    match : bool
        Skip label matching when the labels are already shared.
    covers : sequence of callables, optional
        Field-of-view predicates per agent. MIL then lets only the agents
        covering a track's position take part in its fusion. Without them the
        participants are the agents carrying the label.

    Returns
    -------
    fused : density of the input family
    label_map : dict
        ``canonical_id -> [(agent_id, raw label), ...]`` (empty without matching).
    partition : SubspacePartition or None
        The subspaces used by MIL.

    Notes
    -----
    GCI runs on the union of the label spaces, where a label an agent lacks
    has existence zero, so tracks not shared by every agent vanish.
    """
    densities = _check_densities(densities)
    n = len(densities)
    w = validate_weights(weights, n)
    if agent_ids is None:
        agent_ids = list(range(n))
    if rule not in ("mil", "gci"):
        raise ValueError(f"unknown fusion rule {rule!r}; choose mil or gci")
    if match:
        densities, label_map = canonicalize(densities, reference, match_cost, match_threshold, agent_ids)
    else:
        label_map = {}
    family_lmb = isinstance(densities[0], LMBDensity)
    if rule == "gci":
        space = frozenset().union(*(d.label_space for d in densities))
        if family_lmb:
            return gci_fuse_lmb([LMBDensity(d, space) for d in densities], w, reduction=reduction), label_map, None
        widened = [MDGLMBDensity(d.hypotheses, space) for d in densities]
        return gci_fuse_mdglmb(widened, w, reduction=reduction, max_hypotheses=max_hypotheses), label_map, None
    spaces = densities if covers is None else geometric_label_spaces(densities, covers, _positions(densities))
    partition = discover_subspaces(spaces, agent_ids, singleton=family_lmb)
    fused = fuse_subspaces(densities, partition, w, agent_ids, "mil", reduction, max_hypotheses)
    return fused, label_map, partition


class _FusionBase(BaseEstimator, TransformerMixin):
    _rule = "mil"

    def __init__(
        self,
        weights=None,
        match=True,
        match_cost="jsd",
        match_threshold=DEFAULT_THRESHOLD,
        prune_threshold=1e-5,
        merge_threshold=10.0,
        max_components=20,
        max_hypotheses=MAX_HYPOTHESES,
    ):
        self.weights = weights
        self.match = match
        self.match_cost = match_cost
        self.match_threshold = match_threshold
        self.prune_threshold = prune_threshold
        self.merge_threshold = merge_threshold
        self.max_components = max_components
        self.max_hypotheses = max_hypotheses

    def _validate_params(self, n):
        DivergenceKind.parse(self.match_cost)
        if self.match_threshold <= 0:
            raise ValueError("match_threshold must be positive")
        if self.max_components < 1:
            raise ValueError("max_components must be at least 1")
        if self.max_hypotheses is not None and self.max_hypotheses < 1:
            raise ValueError("max_hypotheses must be at least 1")
        return validate_weights(self.weights, n)

    def _fuse(self, X, weights, covers=None):
        return fuse_local_densities(
            X,
            rule=self._rule,
            weights=weights,
            match=self.match,
            match_cost=self.match_cost,
            match_threshold=self.match_threshold,
            covers=covers,
            reduction=Reduction(self.prune_threshold, self.merge_threshold, self.max_components),
            max_hypotheses=self.max_hypotheses,
        )

    def fit(self, X, y=None, covers=None):
        """Fuse the local densities ``X`` (one per agent).

        Sets ``fused_``, ``label_map_``, ``partition_`` and ``weights_``.
        """
        X = _check_densities(X)
        self.weights_ = self._validate_params(len(X))
        self.n_agents_ = len(X)
        self.fused_, self.label_map_, self.partition_ = self._fuse(X, self.weights_, covers)
        return self

    def transform(self, X, covers=None):
        """Fuse another set of local densities with the fitted weights."""
        check_is_fitted(self, "weights_")
        X = _check_densities(X)
        if len(X) != self.n_agents_:
            raise ValueError(f"fitted for {self.n_agents_} agents, got {len(X)}")
        return self._fuse(X, self.weights_, covers)[0]

    def fit_transform(self, X, y=None, covers=None):
        return self.fit(X, covers=covers).fused_


class MILFusion(_FusionBase):
    """Minimum-information-loss (weighted arithmetic mean) fusion.

    Parameters
    ----------
    weights : array_like, optional
        Agent weights summing to one; uniform when omitted.
    match : bool, default True
        Canonicalize labels across agents before fusing.
    match_cost : {"jsd", "csd", "kld"}
    match_threshold : float
        Cost of leaving a label unmatched.
    prune_threshold, merge_threshold, max_components
        Gaussian mixture reduction settings.
    max_hypotheses : int
        Label-set hypotheses kept for Mδ-GLMB inputs.

    Examples
    --------
    >>> fused = MILFusion().fit_transform([dens_a, dens_b])  # doctest: +SKIP
    """

    _rule = "mil"


class GCIFusion(_FusionBase):
    """Generalized covariance intersection (normalized geometric mean) fusion.

    Same parameters as :class:`MILFusion`. Labels an agent lacks count as
    existence zero.
    """

    _rule = "gci"


class LabelMatcher(BaseEstimator, TransformerMixin):
    """Learn a canonical labeling of several agents' tracks.

    ``fit`` matches the densities and stores ``label_map_`` and the per-agent
    ``mappings_`` (raw label -> canonical label); ``transform`` applies the
    stored mappings to densities of the same agents, leaving unknown labels
    untouched.
    """

    def __init__(self, cost="jsd", threshold=DEFAULT_THRESHOLD, reference=None):
        self.cost = cost
        self.threshold = threshold
        self.reference = reference

    def fit(self, X, y=None):
        X = _check_densities(X)
        DivergenceKind.parse(self.cost)
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")
        relabeled, self.label_map_ = canonicalize(X, self.reference, self.cost, self.threshold)
        self.mappings_ = [{} for _ in X]
        for cid, entries in self.label_map_.items():
            canon = next(t.label for t in _lmb(relabeled[entries[0][0]]) if t.label.canonical_id == cid)
            for agent, raw in entries:
                self.mappings_[agent][raw] = canon
        self.n_agents_ = len(X)
        return self

    def transform(self, X):
        check_is_fitted(self, "mappings_")
        X = _check_densities(X)
        if len(X) != self.n_agents_:
            raise ValueError(f"fitted for {self.n_agents_} agents, got {len(X)}")
        return [d.relabel({lab: m[lab] for lab in _labels(d) if lab in m}) for d, m in zip(X, self.mappings_)]


def _lmb(d):
    return d if isinstance(d, LMBDensity) else mdglmb_to_lmb(d)


def _labels(d):
    return d.labels if isinstance(d, LMBDensity) else sorted(d.label_space)


__all__ = ["GCIFusion", "LabelMatcher", "MILFusion", "fuse_local_densities"]
