"""JSON (de)serialization of densities, partitions and label maps.

Density documents::

    {"family": "lmb",
     "tracks": [{"label": [birth_time, birth_index, agent_id],
                 "existence": 0.9,
                 "pdf": [{"w": 1.0, "mean": [x, vx, y, vy], "cov": [[...4x4...]]}]}]}

    {"family": "mdglmb",
     "hypotheses": [{"labels": [[0, 1, 0], ...], "jep": 0.8,
                     "pdfs": [{"label": [0, 1, 0], "pdf": [...]}]}]}

A label has a fourth element ``branch`` only when it is nonzero, and an
optional ``"canonical_id"`` key sits next to it on tracks. ``label_space``
(list of labels) is optional and defaults to the labels present.
Hypotheses are written by descending JEP, then by label set.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .densities import BernoulliTrack, Hypothesis, Label, LMBDensity, MDGLMBDensity
from .fov import SubspacePartition
from .mixture import GaussianMixture


class SchemaError(ValueError):
    pass


def label_to_json(lab: Label):
    out = [lab.birth_time, lab.birth_index, lab.agent_id]
    if lab.branch:
        out.append(lab.branch)
    return out


def label_from_json(obj, canonical_id=None) -> Label:
    if not isinstance(obj, (list, tuple)) or len(obj) not in (3, 4):
        raise SchemaError(f"label must be [birth_time, birth_index, agent_id], got {obj!r}")
    vals = [int(v) for v in obj]
    return Label(*vals, canonical_id=canonical_id) if len(vals) == 4 else Label(*vals, 0, canonical_id)


def mixture_to_json(mix: GaussianMixture):
    return [
        {"w": float(w), "mean": [float(v) for v in m], "cov": [[float(v) for v in row] for row in P]}
        for w, m, P in zip(mix.weights, mix.means, mix.covs)
    ]


def mixture_from_json(obj) -> GaussianMixture:
    if not isinstance(obj, list) or not obj:
        raise SchemaError("a mixture is a non-empty list of components")
    try:
        w = np.array([c["w"] for c in obj], dtype=float)
        means = np.array([c["mean"] for c in obj], dtype=float)
        covs = np.array([c["cov"] for c in obj], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad mixture component: {exc}") from None
    if means.ndim != 2 or covs.shape != (len(w), means.shape[1], means.shape[1]):
        raise SchemaError("component mean/cov shapes are inconsistent")
    try:
        return GaussianMixture(w, means, covs)
    except ValueError as exc:
        raise SchemaError(str(exc)) from None


def density_to_json(density) -> dict:
    if isinstance(density, LMBDensity):
        tracks = []
        for t in density:
            item = {"label": label_to_json(t.label), "existence": float(t.existence), "pdf": mixture_to_json(t.pdf)}
            if t.label.canonical_id is not None:
                item["canonical_id"] = t.label.canonical_id
            tracks.append(item)
        return {"family": "lmb", "tracks": tracks, "label_space": [label_to_json(lab) for lab in sorted(density.label_space)]}
    if isinstance(density, MDGLMBDensity):
        hyps = [
            {
                "labels": [label_to_json(lab) for lab in sorted(h.label_set)],
                "jep": float(h.jep),
                "pdfs": [{"label": label_to_json(lab), "pdf": mixture_to_json(h.pdfs[lab])} for lab in sorted(h.label_set)],
            }
            for h in density
        ]
        return {"family": "mdglmb", "hypotheses": hyps, "label_space": [label_to_json(lab) for lab in sorted(density.label_space)]}
    raise TypeError(f"cannot serialize {type(density).__name__}")


def density_from_json(doc: dict):
    if not isinstance(doc, dict) or "family" not in doc:
        raise SchemaError("density document needs a 'family' field")
    space = doc.get("label_space")
    space = None if space is None else {label_from_json(x) for x in space}
    try:
        if doc["family"] == "lmb":
            tracks = [
                BernoulliTrack(
                    label_from_json(t["label"], t.get("canonical_id")), float(t["existence"]), mixture_from_json(t["pdf"])
                )
                for t in doc.get("tracks", [])
            ]
            if space is not None:
                space |= {t.label for t in tracks}
            return LMBDensity(tracks, space)
        if doc["family"] == "mdglmb":
            hyps = []
            for h in doc.get("hypotheses", []):
                labels = frozenset(label_from_json(x) for x in h["labels"])
                pdfs = {label_from_json(p["label"]): mixture_from_json(p["pdf"]) for p in h.get("pdfs", [])}
                hyps.append(Hypothesis(labels, float(h["jep"]), pdfs))
            if space is not None:
                space |= frozenset().union(*(h.label_set for h in hyps)) if hyps else frozenset()
            return MDGLMBDensity(hyps, space)
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed density document: {exc}") from None
    raise SchemaError(f"unknown family {doc['family']!r}")


def partition_to_json(partition: SubspacePartition) -> dict:
    return {
        "subspaces": [[label_to_json(lab) for lab in sorted(s)] for s in partition.subspaces],
        "membership": [sorted(int(a) for a in m) for m in partition.membership],
    }


def partition_from_json(doc: dict) -> SubspacePartition:
    return SubspacePartition(
        tuple(frozenset(label_from_json(x) for x in s) for s in doc["subspaces"]),
        tuple(frozenset(int(a) for a in m) for m in doc["membership"]),
    )


def label_map_to_json(label_map: dict) -> dict:
    return {str(cid): [[int(a), label_to_json(lab)] for a, lab in entries] for cid, entries in sorted(label_map.items())}


def load_density(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    return density_from_json(doc)


def save_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=False) + "\n")
