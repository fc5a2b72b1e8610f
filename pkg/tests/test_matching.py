import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lrfsfusion import BernoulliTrack, GaussianMixture, Label, LMBDensity
from lrfsfusion.divergence import csd_gm, jsd_gm
from lrfsfusion.matching import (
    CostMatrix,
    build_cost_matrix,
    canonicalize,
    gate_mask,
    match,
    solve_assignment,
)


def _lmb(points, agent, r=0.9, cov=100.0):
    return LMBDensity(
        [
            BernoulliTrack(Label(1, i, agent), r, GaussianMixture.single([x, 0.0, y, 0.0], np.eye(4) * cov))
            for i, (x, y) in enumerate(points)
        ]
    )


def test_match_recovers_permutation(rng):
    pts = rng.uniform(0, 5000, (6, 2))
    perm = rng.permutation(6)
    a = _lmb(pts, 0)
    b = _lmb(pts[perm] + rng.normal(0, 2, (6, 2)), 1)
    res = match(a, b)
    assert sorted((i, perm[j]) for i, j in res.pairs) == [(i, i) for i in range(6)]
    assert res.unmatched1 == () and res.unmatched2 == ()


def test_far_tracks_stay_unmatched():
    a = _lmb([(0, 0), (1000, 0)], 0)
    b = _lmb([(0, 5), (3000, 0)], 1)
    res = match(a, b, threshold=50.0)
    assert res.pairs == ((0, 0),)
    assert res.unmatched1 == (1,) and res.unmatched2 == (1,)
    assert res.total_cost == pytest.approx(res_cost(a, b) + 2 * 50.0)


def res_cost(a, b):
    return jsd_gm(a[a.labels[0]].pdf, b[b.labels[0]].pdf)


def test_existence_does_not_enter_the_cost():
    a = _lmb([(0, 0)], 0, r=0.99)
    b = _lmb([(0, 0)], 1, r=0.01)
    assert build_cost_matrix(a, b).block[0, 0] == pytest.approx(0.0, abs=1e-10)


def test_empty_sides():
    a = _lmb([(0, 0), (10, 10)], 0)
    res = match(a, LMBDensity())
    assert res.total_cost == 100.0 and res.unmatched1 == (0, 1)
    with pytest.raises(ValueError):
        build_cost_matrix(a, a, threshold=0.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_gate_never_rejects_a_useful_single_gaussian_pair(seed):
    rng = np.random.default_rng(seed)
    d = 4
    mk = lambda: GaussianMixture.single(rng.normal(0, 20, d), (lambda A: A @ A.T + np.eye(d))(rng.normal(0, 3, (d, d))))
    f, g = mk(), mk()
    T = 10.0
    for kind, fn in (("jsd", jsd_gm), ("csd", csd_gm)):
        if fn(f, g) <= 2 * T:
            assert gate_mask([f], [g], T, kind)[0, 0]


def _brute(D, T):
    n1, n2 = D.shape
    best = T * (n1 + n2)
    for k in range(1, min(n1, n2) + 1):
        for rows in itertools.combinations(range(n1), k):
            for cols in itertools.permutations(range(n2), k):
                c = sum(D[r, c] for r, c in zip(rows, cols)) + T * (n1 + n2 - 2 * k)
                best = min(best, c)
    return best


def test_solve_assignment_brute_force(rng):
    for _ in range(100):
        n1, n2 = rng.integers(0, 5, 2)
        T = 2.0
        D = rng.uniform(0, 6, (n1, n2))
        D[rng.random((n1, n2)) < 0.2] = math.inf
        E = np.full((n1 + 1, n2 + 1), T)
        E[:-1, :-1] = D
        res = solve_assignment(CostMatrix(E, T))
        assert res.total_cost == pytest.approx(_brute(D, T))
        assert len(res.pairs) + len(res.unmatched1) == n1
        assert res.transposed().transposed().pairs == res.pairs


def test_canonicalize_shares_labels():
    a = _lmb([(0, 0), (1000, 0)], 0)
    b = _lmb([(1000, 3), (4000, 0)], 1)
    c = _lmb([(2, 0)], 2)
    (ra, rb, rc), table = canonicalize([a, b, c])
    by_x = {round(t.pdf.means[0, 0]): t.label for d in (ra, rb, rc) for t in d}
    assert by_x[1000] == ra.labels[1]
    assert by_x[2] == by_x[0] == ra.labels[0]
    assert by_x[4000] not in ra.labels
    assert len(table) == 3
    entries = {cid: [agent for agent, _ in v] for cid, v in table.items()}
    assert sorted(map(sorted, entries.values())) == [[0, 1], [0, 2], [1]]
    for d in (ra, rb, rc):
        assert all(lab.canonical_id is not None for lab in d.labels)


def test_canonicalize_resolves_collisions():
    # agent 1 has an unrelated track that happens to carry the same raw label
    a = LMBDensity([BernoulliTrack(Label(1, 0, 0), 0.9, GaussianMixture.single([0, 0, 0, 0], np.eye(4)))])
    b = LMBDensity([BernoulliTrack(Label(1, 0, 0), 0.9, GaussianMixture.single([4000, 0, 0, 0], np.eye(4)))])
    (ra, rb), table = canonicalize([a, b])
    assert ra.labels[0] != rb.labels[0]
    assert rb.labels[0].branch == 1


def test_canonicalize_identity_prematch():
    a = _lmb([(0, 0), (30, 0)], 0, cov=400.0)
    # the same labels, slightly moved: kept on identity even though the tracks are close to each other
    b = _lmb([(25, 0), (5, 0)], 0, cov=400.0)
    (ra, rb), _ = canonicalize([a, b])
    assert [lab.as_list() for lab in rb.labels] == [lab.as_list() for lab in ra.labels]
