import json

import numpy as np
import pytest

from lrfsfusion import BernoulliTrack, GaussianMixture, Label, LMBDensity, lmb_to_mdglmb
from lrfsfusion.cli import main
from lrfsfusion.fov import discover_subspaces
from lrfsfusion.io import (
    SchemaError,
    density_from_json,
    density_to_json,
    partition_from_json,
    partition_to_json,
    save_json,
)


def _density(agent, xs, rs):
    return LMBDensity(
        [
            BernoulliTrack(Label(1, i, agent), r, GaussianMixture.single([x, 0, 100, 0], np.diag([100.0, 10, 100, 10])))
            for i, (x, r) in enumerate(zip(xs, rs))
        ]
    )


@pytest.fixture
def files(tmp_path):
    a = _density(0, [0, 1000], [0.9, 0.8])
    b = _density(1, [1003, 4000], [0.7, 0.6])
    pa, pb = tmp_path / "a.json", tmp_path / "b.json"
    save_json(density_to_json(a), pa)
    save_json(density_to_json(b), pb)
    return pa, pb


def test_io_round_trip():
    d = _density(2, [0, 50], [0.4, 0.5]).relabel({Label(1, 0, 2): Label(1, 0, 2, branch=1, canonical_id=4)})
    back = density_from_json(json.loads(json.dumps(density_to_json(d))))
    assert back.labels == d.labels
    assert {lab.canonical_id for lab in back.labels} == {None, 4}
    for t in d:
        np.testing.assert_array_equal(back[t.label].pdf.covs, t.pdf.covs)
    md = lmb_to_mdglmb(d)
    md_back = density_from_json(density_to_json(md))
    assert {h.label_set: h.jep for h in md_back} == {h.label_set: h.jep for h in md}
    part = discover_subspaces([{Label(0, 0)}, {Label(0, 0), Label(0, 1)}])
    assert partition_from_json(partition_to_json(part)) == part


def test_io_schema_errors():
    for doc in ({}, {"family": "phd"}, {"family": "lmb", "tracks": [{"label": [0]}]}, {"family": "lmb", "tracks": [{}]}):
        with pytest.raises(SchemaError):
            density_from_json(doc)


def test_fuse_command(files, tmp_path, capsys):
    out = tmp_path / "fused.json"
    assert main(["fuse", str(files[0]), str(files[1]), "--rule", "mil", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    fused = density_from_json(doc)
    rs = sorted(round(t.existence, 6) for t in fused)
    # the shared track is averaged, exclusive tracks keep their existence
    assert rs == [0.6, 0.75, 0.9]
    assert len(doc["label_map"]) == 3 and "partition" in doc
    out2 = tmp_path / "gci.json"
    assert main(["fuse", str(files[0]), str(files[1]), "--rule", "gci", "--out", str(out2)]) == 0
    assert len(density_from_json(json.loads(out2.read_text()))) == 1


def test_match_command(files, capsys):
    assert main(["match", str(files[0]), str(files[1]), "--cost", "csd", "--td", "20"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["pairs"] == [[[1, 1, 0], [1, 0, 1]]]
    assert doc["unmatched_a"] == [[1, 0, 0]] and doc["unmatched_b"] == [[1, 1, 1]]


def test_exit_code_two(files, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["simulate", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 2
    assert main(["simulate", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["fuse", str(bad), str(files[0]), "--out", str(tmp_path / "f.json")]) == 2
    assert main(["match", str(files[0]), str(files[1]), "--td", "-1"]) == 2
    assert main(["fuse", str(files[0]), "--weights", "0.3", "--out", str(tmp_path / "f.json")]) == 2
    assert main(["simulate"]) == 2
    assert main(["frobnicate"]) == 2
    assert "error" in capsys.readouterr().err


def test_simulate_command(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(
        json.dumps(
            {
                "duration": 5,
                "sensors": [{"position": [1000, 1000]}, {"position": [3000, 1000]}],
                "targets": [{"birth": 0, "state": [1500, 10, 1500, 5]}],
                "measurement": {"clutter_rate": 1},
            }
        )
    )
    out = tmp_path / "out"
    args = ["simulate", str(cfg), "--trials", "1", "--seed", "1", "--out", str(out), "--fusion", "gci", "--family", "mdglmb"]
    assert main(args) == 0
    assert {p.name for p in out.iterdir()} == {"ospa.csv", "cardinality.csv", "tracks.json", "run_info.json"}
    info = json.loads((out / "run_info.json").read_text())
    assert info["config"]["fusion"] == "gci" and info["config"]["family"] == "mdglmb"
    assert main(["simulate", str(cfg), "--trials", "0", "--out", str(out)]) == 2
