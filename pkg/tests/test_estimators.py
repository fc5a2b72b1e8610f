import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from lrfsfusion import (
    BernoulliTrack,
    GaussianMixture,
    GCIFusion,
    Label,
    LabelMatcher,
    LMBDensity,
    MILFusion,
    lmb_to_mdglmb,
    mil_fuse_lmb,
)
from lrfsfusion.estimators import fuse_local_densities
from lrfsfusion.mixture import Reduction


def _density(agent, xs, rs):
    return LMBDensity(
        [
            BernoulliTrack(Label(1, i, agent), r, GaussianMixture.single([x, 0, 0, 0], np.diag([100.0, 10, 100, 10])))
            for i, (x, r) in enumerate(zip(xs, rs))
        ]
    )


def test_params_round_trip():
    est = MILFusion(match_threshold=20.0, max_components=5)
    assert est.get_params()["match_threshold"] == 20.0
    c = clone(est).set_params(match_cost="csd")
    assert c.match_cost == "csd" and c.max_components == 5


def test_fit_sets_attributes():
    X = [_density(0, [0, 1000], [0.9, 0.8]), _density(1, [2, 1001], [0.7, 0.6])]
    est = MILFusion().fit(X)
    assert est.n_agents_ == 2 and len(est.label_map_) == 2
    assert sorted(round(t.existence, 12) for t in est.fused_) == [0.7, 0.8]
    assert est.transform(X).labels == est.fused_.labels
    assert est.fit_transform(X).labels == est.fused_.labels


def test_same_labels_without_matching():
    X = [_density(0, [0, 1000], [0.9, 0.8]), _density(0, [2, 1001], [0.7, 0.6])]
    fused = MILFusion(weights=[0.25, 0.75], match=False).fit_transform(X)
    ref = mil_fuse_lmb(X, [0.25, 0.75], reduction=Reduction())
    for t in ref:
        assert fused[t.label].existence == pytest.approx(t.existence)


def test_gci_estimator():
    X = [_density(0, [0, 1000], [0.9, 0.8]), _density(1, [2, 4000], [0.7, 0.6])]
    fused = GCIFusion().fit_transform(X)
    assert len(fused) == 1


def test_mdglmb_inputs():
    X = [lmb_to_mdglmb(_density(0, [0, 1000], [0.9, 0.8])), lmb_to_mdglmb(_density(1, [2, 3000], [0.7, 0.6]))]
    fused = MILFusion().fit_transform(X)
    assert sum(h.jep for h in fused) == pytest.approx(1.0)
    assert len(fused.label_space) == 3


def test_validation():
    X = [_density(0, [0], [0.9]), _density(1, [0], [0.9])]
    with pytest.raises(NotFittedError):
        MILFusion().transform(X)
    with pytest.raises(ValueError):
        MILFusion(weights=[0.9, 0.9]).fit(X)
    with pytest.raises(ValueError):
        MILFusion(match_cost="l2").fit(X)
    with pytest.raises(ValueError):
        MILFusion(match_threshold=0).fit(X)
    with pytest.raises(TypeError):
        MILFusion().fit(X[0])
    with pytest.raises(ValueError):
        MILFusion().fit([X[0], lmb_to_mdglmb(X[1])])
    with pytest.raises(ValueError):
        MILFusion().fit(X).transform(X[:1])
    with pytest.raises(ValueError):
        fuse_local_densities(X, rule="median")


def test_label_matcher():
    X = [_density(0, [0, 1000], [0.9, 0.8]), _density(1, [1002, 3000], [0.7, 0.6])]
    lm = LabelMatcher(threshold=20.0).fit(X)
    assert lm.mappings_[1][Label(1, 0, 1)] == Label(1, 1, 0)
    out = lm.transform(X)
    assert Label(1, 1, 0) in out[1]
    assert Label(1, 1, 1) in out[1]


def test_covers_limit_participation():
    # agent 1 carries a far-away copy of the track but cannot see it
    X = [_density(0, [0], [0.9]), _density(1, [0], [0.1])]
    covers = [lambda p: True, lambda p: p[0] > 500]
    fused = MILFusion().fit_transform(X, covers=covers)
    assert [round(t.existence, 12) for t in fused] == [0.9]
