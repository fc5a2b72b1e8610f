import json
import math
from pathlib import Path

import numpy as np
import pytest

from lrfsfusion.sim import (
    ConfigError,
    config_from_dict,
    exclusive_windows,
    generate_truth_and_measurements,
    load_config,
    monte_carlo,
    ospa,
    run_trial,
    trial_seeds,
    write_outputs,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def small_doc(**fusion):
    return {
        "name": "small",
        "duration": 8,
        "sensors": [{"position": [1000, 1000]}, {"position": [4000, 1000]}],
        "targets": [{"birth": 1, "state": [1500, 10, 1500, 5]}, {"birth": 2, "death": 7, "state": [3500, -10, 1200, 5]}],
        "measurement": {"clutter_rate": 2},
        "network": {"topology": "full"},
        "fusion": {"rule": "mil", **fusion},
        "reduction": {"max_tracks": 30},
        "seed": 3,
        "trials": 2,
    }


def test_shipped_configs_load():
    for path in CONFIGS.glob("*.json"):
        cfg = load_config(path)
        assert cfg.n_agents == 4
        assert cfg.neighbors(0) == [1, 2]


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        config_from_dict({"sensors": []})
    with pytest.raises(ConfigError):
        config_from_dict(small_doc(rule="median"))
    with pytest.raises(ConfigError):
        config_from_dict({**small_doc(), "network": {"adjacency": [[0, 1], [0, 0]]}})
    with pytest.raises(ConfigError):
        config_from_dict({**small_doc(), "targets": [{"birth": 1}]})


def test_ospa():
    a = np.array([[0.0, 0.0], [10.0, 0.0]])
    assert ospa(np.zeros((0, 2)), np.zeros((0, 2))) == 0.0
    assert ospa(a, np.zeros((0, 2)), c=50.0) == 50.0
    assert ospa(a, a[::-1]) == pytest.approx(0.0)
    # one exact match and one missed target: ((0 + 50^2) / 2)^(1/2)
    assert ospa(a, a[:1], p=2, c=50) == pytest.approx(math.sqrt(50**2 / 2))
    assert ospa(a, a + [3.0, 4.0]) == pytest.approx(5.0)


def test_truth_is_seeded():
    cfg = config_from_dict(small_doc())
    s1 = generate_truth_and_measurements(cfg, np.random.SeedSequence(5))
    s2 = generate_truth_and_measurements(cfg, np.random.SeedSequence(5))
    assert all(np.array_equal(z1, z2) for m1, m2 in zip(s1.measurements, s2.measurements) for z1, z2 in zip(m1, m2))
    assert set(s1.truth[3]) == {0, 1} and set(s1.truth[7]) == {0}
    assert [s.generate_state(2).tolist() for s in trial_seeds(1, 3)] == [s.generate_state(2).tolist() for s in trial_seeds(1, 3)]


@pytest.mark.parametrize("rule,family", [("mil", "lmb"), ("gci", "lmb"), ("none", "lmb"), ("mil", "mdglmb")])
def test_run_trial(rule, family):
    cfg = config_from_dict(small_doc(rule=rule, family=family))
    res = run_trial(cfg, np.random.SeedSequence(0))
    assert res.diverged is None
    assert res.ospa.shape == (8, 2) and res.true_n.tolist() == [0, 1, 2, 2, 2, 2, 2, 1]
    assert np.all(res.ospa <= cfg.ospa_c + 1e-9)


def test_monte_carlo_outputs(tmp_path):
    cfg = config_from_dict(small_doc())
    res = monte_carlo(cfg)
    out = write_outputs(res, tmp_path / "run")
    lines = (out / "ospa.csv").read_text().splitlines()
    assert lines[0] == "time,mean_ospa,std_ospa" and len(lines) == 9
    assert (out / "cardinality.csv").read_text().splitlines()[0] == "time,true_n,mean_est_n"
    tracks = json.loads((out / "tracks.json").read_text())
    assert set(tracks) == {"0", "1"}
    info = json.loads((out / "run_info.json").read_text())
    assert info["trials"] == 2 and info["sigma_point_kappa"] == -1.0


def test_parallel_trials_do_not_change_results():
    cfg = config_from_dict(small_doc())
    a, b = monte_carlo(cfg, trials=2), monte_carlo(cfg, trials=2, n_jobs=2)
    np.testing.assert_array_equal(a.ospa, b.ospa)


def test_exclusive_windows():
    cfg = load_config(CONFIGS / "example2_diff_fov.json")
    scen = generate_truth_and_measurements(cfg, np.random.SeedSequence(0))
    windows = exclusive_windows(cfg, scen.truth)
    assert windows
    sensors = cfg.sensors()
    for k, (agent, steps) in windows.items():
        for t in steps:
            pos = scen.truth[t][k][[0, 2]]
            assert [i for i, s in enumerate(sensors) if s.in_fov(pos)] == [agent]
