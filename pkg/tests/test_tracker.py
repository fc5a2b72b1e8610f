import itertools
import math

import numpy as np
import pytest
from scipy.special import logsumexp

from lrfsfusion import (
    BernoulliTrack,
    BirthModel,
    GaussianMixture,
    Label,
    LMBDensity,
    LocalTracker,
    MotionModel,
    SensorModel,
    lmb_to_mdglmb,
)
from lrfsfusion.tracker import (
    adaptive_birth,
    extract,
    group_marginals,
    k_best_assignments,
    predict,
    update,
    wrap_angle,
)


def _brute_assignments(cost):
    n, m = cost.shape
    out = []
    for cols in itertools.permutations(range(m), n):
        total = sum(cost[i, c] for i, c in enumerate(cols))
        if np.isfinite(total):
            out.append(total)
    return sorted(out)


def test_k_best_matches_enumeration(rng):
    for _ in range(30):
        n = int(rng.integers(1, 4))
        m = n + int(rng.integers(0, 3))
        cost = rng.uniform(0, 10, (n, m))
        cost[rng.random((n, m)) < 0.2] = np.inf
        got = [t for t, _ in k_best_assignments(cost, 1000)]
        np.testing.assert_allclose(got, _brute_assignments(cost))
        few = k_best_assignments(cost, 3)
        np.testing.assert_allclose([t for t, _ in few], _brute_assignments(cost)[:3])


def _brute_marginals(log_assoc, log_miss, log_absent):
    n, m = log_assoc.shape
    weights, events = [], []
    # option per track: -2 absent, -1 missed, j >= 0 measurement j
    for opts in itertools.product(*[range(-2, m)] * n):
        used = [o for o in opts if o >= 0]
        if len(used) != len(set(used)):
            continue
        lw = sum(log_absent[i] if o == -2 else log_miss[i] if o == -1 else log_assoc[i, o] for i, o in enumerate(opts))
        weights.append(lw)
        events.append(opts)
    lw = np.array(weights)
    lt = logsumexp(lw)
    p = np.exp(lw - lt)
    pa, pm, pz = np.zeros(n), np.zeros(n), np.zeros((n, m))
    for w, opts in zip(p, events):
        for i, o in enumerate(opts):
            if o == -2:
                pa[i] += w
            elif o == -1:
                pm[i] += w
            else:
                pz[i, o] += w
    return lt, pa, pm, pz


@pytest.mark.parametrize("shape", [(1, 2), (2, 1), (2, 3), (3, 2), (4, 2), (3, 3)])
def test_group_marginals_brute_force(rng, shape):
    n, m = shape
    for _ in range(5):
        la = rng.normal(0, 2, (n, m))
        la[rng.random((n, m)) < 0.2] = -np.inf
        lm, lz = rng.normal(0, 1, n), rng.normal(0, 1, n)
        got = group_marginals(la, lm, lz, k=10_000)
        want = _brute_marginals(la, lm, lz)
        assert got[0] == pytest.approx(want[0], rel=1e-10)
        for g, w in zip(got[1:], want[1:]):
            np.testing.assert_allclose(g, w, atol=1e-10)


def test_group_marginals_certain_existence(rng):
    la = rng.normal(0, 1, (3, 2))
    lm = rng.normal(0, 1, 3)
    lz = np.full(3, -np.inf)
    got = group_marginals(la, lm, lz, k=10_000)
    want = _brute_marginals(la, lm, lz)
    for g, w in zip(got[1:], want[1:]):
        np.testing.assert_allclose(g, w, atol=1e-10)


def test_wrap_angle():
    a = np.array([3 * math.pi, -3 * math.pi, 0.5, 7.0, -7.0])
    w = wrap_angle(a)
    assert np.all(np.abs(w) <= math.pi)
    np.testing.assert_allclose(np.exp(1j * w), np.exp(1j * a), atol=1e-12)


def test_sensor_geometry():
    s = SensorModel(position=(2500.0, 2500.0), fov_radius=1000.0)
    assert s.fov_area == pytest.approx(math.pi * 1e6, rel=1e-6)
    assert s.in_fov([2500.0, 3400.0]) and not s.in_fov([2500.0, 3600.0])
    x = np.array([3500.0, 0.0, 2500.0, 0.0])
    np.testing.assert_allclose(s.h(x), [1000.0, 0.0], atol=1e-9)
    np.testing.assert_allclose(s.to_cartesian(s.h(x)), [[3500.0, 2500.0]])
    with pytest.raises(ValueError):
        SensorModel(detection=1.5)


def test_predict_scales_existence():
    lab = Label(0, 0)
    d = LMBDensity([BernoulliTrack(lab, 0.8, GaussianMixture.single([0, 10, 0, -5], np.eye(4)))])
    motion = MotionModel(survival=0.9)
    out = predict(d, motion)
    assert out[lab].existence == pytest.approx(0.72)
    np.testing.assert_allclose(out[lab].pdf.means[0], [10, 10, -5, -5])
    np.testing.assert_allclose(out[lab].pdf.covs[0], motion.A @ motion.A.T + motion.Q)
    md = predict(lmb_to_mdglmb(d), motion)
    assert sum(h.jep for h in md if lab in h.label_set) == pytest.approx(0.72)


def test_detection_raises_existence():
    s = SensorModel(position=(0.0, 0.0), clutter_rate=1.0, region=((-5000, 5000), (-5000, 5000)))
    lab = Label(0, 0)
    truth = np.array([1000.0, 0.0, 1000.0, 0.0])
    d = LMBDensity([BernoulliTrack(lab, 0.5, GaussianMixture.single(truth, np.diag([400.0, 100, 400, 100])))])
    hit = update(d, s, s.h(truth)[None])
    miss = update(d, s, np.zeros((0, 2)))
    assert hit[lab].existence > 0.99
    assert miss[lab].existence < 0.5
    hit_md = update(lmb_to_mdglmb(d), s, s.h(truth)[None])
    assert sum(h.jep for h in hit_md if lab in h.label_set) == pytest.approx(hit[lab].existence, rel=1e-6)


def test_adaptive_birth_and_extract():
    s = SensorModel(position=(0.0, 0.0))
    births = adaptive_birth(np.array([[100.0, 0.0], [200.0, math.pi / 2]]), s, BirthModel(0.02), time=3, agent_id=2)
    assert [b.label for b in births] == [Label(3, 0, 2), Label(3, 1, 2)]
    np.testing.assert_allclose(births[1].pdf.means[0], [0.0, 0.0, 200.0, 0.0], atol=1e-9)
    d = LMBDensity([BernoulliTrack(b.label, r, b.pdf) for b, r in zip(births, (0.9, 0.2))])
    assert [lab for lab, _ in extract(d)] == [Label(3, 0, 2)]


@pytest.mark.parametrize("family", ["lmb", "mdglmb"])
def test_local_tracker_follows_a_target(family):
    rng = np.random.default_rng(1)
    s = SensorModel(position=(0.0, 0.0), clutter_rate=2.0, region=((-5000, 5000), (-5000, 5000)))
    tracker = LocalTracker(s, family=family)
    x = np.array([1000.0, 20.0, 500.0, 10.0])
    motion = MotionModel()
    for t in range(12):
        x = motion.A @ x
        z = s.h(x) + rng.multivariate_normal(np.zeros(2), s.Rm)
        n_clutter = rng.poisson(s.clutter_rate)
        clutter = np.column_stack([rng.uniform(0, 5000, n_clutter), rng.uniform(-math.pi, math.pi, n_clutter)])
        tracker.step(t, np.vstack([z[None], clutter]))
    est = extract(tracker.density)
    assert len(est) == 1
    assert np.hypot(est[0][1][0] - x[0], est[0][1][2] - x[2]) < 60.0


def test_max_tracks_cap():
    s = SensorModel()
    tracker = LocalTracker(s, max_tracks=2)
    tracks = [BernoulliTrack(Label(0, i), r, GaussianMixture.single(np.zeros(4), np.eye(4))) for i, r in enumerate((0.1, 0.5, 0.3))]
    kept = tracker.clean(LMBDensity(tracks))
    assert sorted(kept.labels) == [Label(0, 1), Label(0, 2)]
    with pytest.raises(ValueError):
        LocalTracker(s, max_tracks=0)
    with pytest.raises(ValueError):
        LocalTracker(s, family="phd")
