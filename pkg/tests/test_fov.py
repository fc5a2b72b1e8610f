import numpy as np
import pytest
from conftest import random_lmb

from lrfsfusion import (
    BernoulliTrack,
    GaussianMixture,
    Label,
    LMBDensity,
    lmb_to_mdglmb,
    mdglmb_to_lmb,
)
from lrfsfusion.fov import (
    SubspacePartition,
    decompose,
    discover_subspaces,
    fuse_subspaces,
    geometric_label_spaces,
    reconstruct,
)

A, B, C = Label(0, 0), Label(0, 1), Label(0, 2)


def test_discover_groups_by_carriers():
    part = discover_subspaces([{A, B}, {A, C}])
    assert part.subspaces == (frozenset({A}), frozenset({B}), frozenset({C}))
    assert part.membership == (frozenset({0, 1}), frozenset({0}), frozenset({1}))
    part = discover_subspaces([{A, B, C}, {A, B}], agent_ids=[4, 7])
    assert part.subspaces == (frozenset({A, B}), frozenset({C}))
    assert part.membership == (frozenset({4, 7}), frozenset({4}))


def test_singleton_subspaces():
    part = discover_subspaces([{A, B}, {A, B}], singleton=True)
    assert len(part) == 2 and part.index_of(B) == 1


def test_partition_must_be_disjoint():
    with pytest.raises(ValueError):
        SubspacePartition((frozenset({A}), frozenset({A, B})), (frozenset({0}), frozenset({0})))


def _track(lab, r, x):
    return BernoulliTrack(lab, r, GaussianMixture.single([x, 0.0, 0.0, 0.0], np.eye(4)))


def test_exclusive_tracks_keep_their_existence():
    a = LMBDensity([_track(A, 0.9, 0.0), _track(B, 0.8, 100.0)])
    b = LMBDensity([_track(A, 0.7, 0.0), _track(C, 0.6, 200.0)])
    fused = fuse_subspaces([a, b])
    assert fused[A].existence == pytest.approx(0.8)
    assert fused[B].existence == pytest.approx(0.8)
    assert fused[C].existence == pytest.approx(0.6)
    gci = fuse_subspaces([a, b], rule="gci")
    assert gci[B].existence == pytest.approx(0.8)


def test_mdglmb_subspace_fusion_matches_lmb():
    a = LMBDensity([_track(A, 0.9, 0.0), _track(B, 0.8, 100.0)])
    b = LMBDensity([_track(A, 0.7, 0.0), _track(C, 0.6, 200.0)])
    md = fuse_subspaces([lmb_to_mdglmb(a), lmb_to_mdglmb(b)], max_hypotheses=None)
    assert sum(h.jep for h in md) == pytest.approx(1.0)
    via = mdglmb_to_lmb(md)
    for lab, r in ((A, 0.8), (B, 0.8), (C, 0.6)):
        assert via[lab].existence == pytest.approx(r)
    # all three tracks can exist jointly, unlike direct fusion
    assert any(h.label_set == frozenset({A, B, C}) and h.jep > 0.3 for h in md)


def test_decompose_lmb_and_reconstruct(rng):
    d = random_lmb(rng, [A, B, C])
    part = SubspacePartition((frozenset({A}), frozenset({B, C})), (frozenset({0}), frozenset({0})))
    subs = decompose(d, part)
    assert [len(s) for s in subs] == [1, 2]
    back = reconstruct(subs)
    assert set(back.labels) == {A, B, C}


def test_decompose_mdglmb_marginal(rng):
    d = lmb_to_mdglmb(random_lmb(rng, [A, B, C]))
    part = SubspacePartition((frozenset({A}), frozenset({B, C})), (frozenset({0}), frozenset({0})))
    sub = decompose(d, part, reduction=None)[0]
    jep = {h.label_set: h.jep for h in sub}
    r = sum(h.jep for h in d if A in h.label_set)
    assert jep[frozenset({A})] == pytest.approx(r)
    assert jep[frozenset()] == pytest.approx(1 - r)


def test_reconstruct_truncation_keeps_best(rng):
    subs = [lmb_to_mdglmb(random_lmb(rng, [lab])) for lab in (A, B, C)]
    full = reconstruct(subs, max_hypotheses=None)
    top = reconstruct(subs, max_hypotheses=3)
    best = sorted(full, key=lambda h: -h.jep)[:3]
    assert {h.label_set for h in top} == {h.label_set for h in best}
    assert sum(h.jep for h in top) == pytest.approx(1.0)


def test_geometric_label_spaces():
    covers = [lambda p: p[0] < 10, lambda p: p[0] > -10]
    spaces = geometric_label_spaces([{A}, {A, B, C}], covers, {A: np.array([50.0, 0.0]), B: np.array([0.0, 0.0])})
    # A is covered by agent 1 only; B by both; C has no position and stays with its carrier
    assert spaces == [frozenset({B}), frozenset({A, B, C})]
    nobody = geometric_label_spaces([{A}, set()], [lambda p: False, lambda p: False], {A: np.zeros(2)})
    assert nobody == [frozenset({A}), frozenset()]


def test_unknown_rule():
    with pytest.raises(ValueError):
        fuse_subspaces([LMBDensity([_track(A, 0.5, 0.0)])], rule="median")
