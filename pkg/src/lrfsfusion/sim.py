"""Distributed multi-target tracking simulation.

Each agent runs a local filter, then ``consensus_steps`` rounds of
neighbor exchange follow: an agent matches labels with its neighbors,
fuses their densities with its own and uses the result as its next prior.
"""

from __future__ import annotations

import json
import logging
import math
import time
import traceback
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .densities import LMBDensity, mdglmb_to_lmb
from .divergence import DivergenceKind, sigma_kappa
from .estimators import fuse_local_densities
from .mixture import Reduction
from .tracker import BirthModel, LocalTracker, MotionModel, SensorModel, extract

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid scenario configuration."""


# --- configuration ------------------------------------------------------------------


@dataclass(frozen=True)
class TargetSpec:
    birth: int
    death: int
    state: tuple


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to run one simulated scenario.

    The bearing variance is given in deg^2 (``bearing_var_deg2``) and
    converted to rad^2 when sensor models are built.
    """

    name: str = "scenario"
    region: tuple = ((0.0, 5000.0), (0.0, 5000.0))
    duration: int = 50
    motion_q: tuple = (16.0, 1.0, 16.0, 1.0)
    survival: float = 0.95
    truth_noise: bool = True
    targets: tuple = ()
    sensor_positions: tuple = ()
    fov_radius: tuple = ()
    range_var_m2: float = 400.0
    bearing_var_deg2: float = 0.64
    detection: float = 0.98
    clutter_rate: float = 8.0
    birth_existence: float = 0.01
    birth_cov: tuple = (1600.0, 400.0, 1600.0, 400.0)
    adjacency: tuple = ()
    fusion: str = "mil"
    family: str = "lmb"
    consensus_steps: int = 1
    match_cost: str = "jsd"
    match_threshold: float = 50.0
    fov_mode: str = "labels"
    prune: float = 1e-5
    merge: float = 10.0
    max_components: int = 20
    max_hypotheses: int = 100
    max_tracks: int | None = None
    extraction_threshold: float = 0.55
    ospa_p: float = 2.0
    ospa_c: float = 50.0
    seed: int = 0
    trials: int = 10

    def __post_init__(self):
        n = len(self.sensor_positions)
        if n == 0:
            raise ConfigError("at least one sensor is required")
        (x0, x1), (y0, y1) = self.region
        if not (x1 > x0 and y1 > y0):
            raise ConfigError("surveillance region must have positive extent")
        if len(self.fov_radius) != n:
            raise ConfigError("one fov_radius entry (number or null) per sensor is required")
        adj = np.asarray(self.adjacency, dtype=bool) if len(self.adjacency) else np.zeros((n, n), bool)
        if adj.shape != (n, n) or np.any(adj != adj.T):
            raise ConfigError("adjacency must be a symmetric n x n matrix")
        if self.consensus_steps < 0:
            raise ConfigError("consensus_steps must be nonnegative")
        if self.fusion not in ("mil", "gci", "none"):
            raise ConfigError(f"fusion must be mil, gci or none, got {self.fusion!r}")
        if self.family not in ("lmb", "mdglmb"):
            raise ConfigError(f"family must be lmb or mdglmb, got {self.family!r}")
        if self.fov_mode not in ("labels", "geometric"):
            raise ConfigError(f"fov_mode must be labels or geometric, got {self.fov_mode!r}")
        try:
            DivergenceKind.parse(self.match_cost)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not 0.0 <= self.detection <= 1.0:
            raise ConfigError("detection probability must lie in [0, 1]")
        if self.clutter_rate < 0:
            raise ConfigError("clutter_rate must be nonnegative")
        if not 0.0 < self.birth_existence < 1.0:
            raise ConfigError("birth_existence must lie in (0, 1)")
        if self.max_tracks is not None and self.max_tracks < 1:
            raise ConfigError("max_tracks must be positive")
        if self.duration < 1 or self.trials < 1:
            raise ConfigError("duration and trials must be positive")
        if self.ospa_p < 1 or self.ospa_c <= 0:
            raise ConfigError("OSPA needs p >= 1 and c > 0")
        for tg in self.targets:
            if len(tg.state) != 4 or tg.death <= tg.birth:
                raise ConfigError("each target needs a 4-D state and death > birth")

    @property
    def n_agents(self):
        return len(self.sensor_positions)

    def neighbors(self, i):
        if not len(self.adjacency):
            return []
        return [j for j in range(self.n_agents) if j != i and self.adjacency[i][j]]

    def motion(self):
        return MotionModel(1.0, tuple(self.motion_q), self.survival)

    def sensors(self):
        R = ((self.range_var_m2, 0.0), (0.0, self.bearing_var_deg2 * (math.pi / 180.0) ** 2))
        return [
            SensorModel(tuple(p), R, self.detection, r, self.clutter_rate, self.region)
            for p, r in zip(self.sensor_positions, self.fov_radius)
        ]

    def reduction(self):
        return Reduction(self.prune, self.merge, self.max_components)

    def replace(self, **changes):
        data = asdict(self)
        data["targets"] = tuple(TargetSpec(**t) if isinstance(t, dict) else t for t in data["targets"])
        data.update(changes)
        return ScenarioConfig(**data)

    def to_dict(self):
        data = asdict(self)
        data["targets"] = [asdict(t) if not isinstance(t, dict) else t for t in self.targets]
        return data


_CONFIG_KEYS = {f for f in ScenarioConfig.__dataclass_fields__}


def _topology(kind, n):
    adj = np.zeros((n, n), dtype=int)
    if kind == "full":
        adj[:] = 1
        np.fill_diagonal(adj, 0)
    elif kind == "ring":
        for i in range(n):
            adj[i, (i + 1) % n] = adj[(i + 1) % n, i] = 1
        np.fill_diagonal(adj, 0)
    elif kind == "none":
        pass
    else:
        raise ConfigError(f"unknown topology {kind!r}")
    return adj


def config_from_dict(doc: dict) -> ScenarioConfig:
    """Build a config from the JSON document layout (see ``configs/``)."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    try:
        sensors = doc["sensors"]
        data = {
            "name": doc.get("name", "scenario"),
            "region": tuple(tuple(float(v) for v in ax) for ax in doc.get("region", [[0, 5000], [0, 5000]])),
            "duration": int(doc.get("duration", 50)),
            "sensor_positions": tuple(tuple(float(v) for v in s["position"]) for s in sensors),
            "fov_radius": tuple(None if s.get("fov_radius") is None else float(s["fov_radius"]) for s in sensors),
            "targets": tuple(
                TargetSpec(int(t["birth"]), int(t.get("death", doc.get("duration", 50))), tuple(float(v) for v in t["state"]))
                for t in doc.get("targets", [])
            ),
        }
        motion = doc.get("motion", {})
        data.update(
            motion_q=tuple(float(v) for v in motion.get("q", (16, 1, 16, 1))),
            survival=float(motion.get("survival", 0.95)),
            truth_noise=bool(motion.get("truth_noise", True)),
        )
        meas = doc.get("measurement", {})
        data.update(
            range_var_m2=float(meas.get("range_var_m2", 400.0)),
            bearing_var_deg2=float(meas.get("bearing_var_deg2", 0.64)),
            detection=float(meas.get("detection", 0.98)),
            clutter_rate=float(meas.get("clutter_rate", 8.0)),
        )
        birth = doc.get("birth", {})
        data.update(
            birth_existence=float(birth.get("existence", 0.01)),
            birth_cov=tuple(float(v) for v in birth.get("cov", (1600, 400, 1600, 400))),
        )
        net = doc.get("network", {})
        if "adjacency" in net:
            adj = np.asarray(net["adjacency"], dtype=int)
        else:
            adj = _topology(net.get("topology", "ring"), len(sensors))
        data["adjacency"] = tuple(tuple(int(v) for v in row) for row in adj)
        fus = doc.get("fusion", {})
        data.update(
            fusion=str(fus.get("rule", "mil")),
            family=str(fus.get("family", "lmb")),
            consensus_steps=int(fus.get("consensus_steps", 1)),
            match_cost=str(fus.get("match_cost", "jsd")),
            match_threshold=float(fus.get("match_threshold", 50.0)),
            fov_mode=str(fus.get("fov_mode", "labels")),
            max_hypotheses=int(fus.get("max_hypotheses", 100)),
        )
        red = doc.get("reduction", {})
        data.update(
            prune=float(red.get("prune", 1e-5)),
            merge=float(red.get("merge", 10.0)),
            max_components=int(red.get("cap", 20)),
            max_tracks=None if red.get("max_tracks") is None else int(red["max_tracks"]),
        )
        ev = doc.get("evaluation", {})
        data.update(
            extraction_threshold=float(ev.get("extraction_threshold", 0.55)),
            ospa_p=float(ev.get("ospa_p", 2.0)),
            ospa_c=float(ev.get("ospa_c", 50.0)),
        )
        data.update(seed=int(doc.get("seed", 0)), trials=int(doc.get("trials", 10)))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config: {exc!r}") from None
    return ScenarioConfig(**data)


def load_config(path) -> ScenarioConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(doc)


# --- truth and measurements ----------------------------------------------------------


@dataclass
class Scenario:
    """Ground truth and per-agent measurements of one trial."""

    truth: list  # truth[t] -> dict target index -> state
    measurements: list  # measurements[i][t] -> (M, 2) array
    clutter_counts: list = field(default_factory=list)


def _sample_in_fov(sensor: SensorModel, n, rng):
    (x0, x1), (y0, y1) = sensor.region
    out = np.zeros((0, 2))
    while len(out) < n:
        k = max(2 * (n - len(out)), 8)
        pts = np.column_stack([rng.uniform(x0, x1, k), rng.uniform(y0, y1, k)])
        out = np.vstack([out, pts[sensor.in_fov(pts)]])
    return out[:n]


def generate_truth_and_measurements(config: ScenarioConfig, seed) -> Scenario:
    """Simulate target trajectories and every agent's detections and clutter.

    ``seed`` may be an int or a ``SeedSequence``; the truth and each agent
    draw from their own child streams.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    streams = ss.spawn(1 + config.n_agents)
    rng_truth = np.random.default_rng(streams[0])
    motion = config.motion()
    sq = np.sqrt(np.asarray(config.motion_q, dtype=float))
    (x0, x1), (y0, y1) = config.region
    truth = [dict() for _ in range(config.duration)]
    for k, tg in enumerate(config.targets):
        x = np.asarray(tg.state, dtype=float)
        for t in range(tg.birth, min(tg.death, config.duration)):
            if t > tg.birth:
                x = motion.A @ x
                if config.truth_noise:
                    x = x + rng_truth.standard_normal(4) * sq
            if not (x0 <= x[0] <= x1 and y0 <= x[2] <= y1):
                break
            truth[t][k] = x.copy()

    sensors = config.sensors()
    meas, clutter = [], []
    for i, sensor in enumerate(sensors):
        rng = np.random.default_rng(streams[1 + i])
        noise_sd = np.sqrt(np.diag(sensor.Rm))
        per_t, counts = [], []
        for t in range(config.duration):
            rows = []
            for k in sorted(truth[t]):
                x = truth[t][k]
                det = rng.random() < sensor.detection
                noise = rng.standard_normal(2) * noise_sd
                if det and sensor.in_fov(x[[0, 2]]):
                    rows.append(sensor.h(x) + noise)
            nc = rng.poisson(sensor.clutter_rate)
            pts = _sample_in_fov(sensor, nc, rng)
            for p in pts:
                rows.append(sensor.h(np.array([p[0], 0.0, p[1], 0.0])))
            z = np.array(rows).reshape(-1, 2)
            if len(z):
                z[:, 1] = np.arctan2(np.sin(z[:, 1]), np.cos(z[:, 1]))
            per_t.append(z)
            counts.append(nc)
        meas.append(per_t)
        clutter.append(counts)
    return Scenario(truth, meas, clutter)


# --- metrics ------------------------------------------------------------------------------


def ospa(truth, estimate, p: float = 2.0, c: float = 50.0) -> float:
    """OSPA distance between two finite point sets (rows are positions)."""
    if p < 1 or c <= 0:
        raise ValueError("OSPA needs p >= 1 and c > 0")
    X = np.asarray(truth, dtype=float).reshape(len(truth), -1) if len(truth) else np.zeros((0, 2))
    Y = np.asarray(estimate, dtype=float).reshape(len(estimate), -1) if len(estimate) else np.zeros((0, 2))
    m, n = len(X), len(Y)
    if m == 0 and n == 0:
        return 0.0
    if m == 0 or n == 0:
        return float(c)
    D = np.minimum(np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=2), c) ** p
    rows, cols = linear_sum_assignment(D)
    total = D[rows, cols].sum() + c**p * abs(m - n)
    return float((total / max(m, n)) ** (1.0 / p))


# --- distributed loop -----------------------------------------------------------------------


@dataclass
class TrialResult:
    ospa: np.ndarray  # (T, N_agents)
    est_n: np.ndarray  # (T, N_agents)
    true_n: np.ndarray  # (T,)
    tracks: dict
    diagnostics: dict = field(default_factory=dict)
    diverged: str | None = None


def fuse_neighborhood(densities, agent_ids, config: ScenarioConfig, sensors=None, reference=None):
    """Match labels among a neighborhood and fuse with the configured rule."""
    covers = None
    if config.fusion == "mil" and config.fov_mode == "geometric" and sensors is not None:
        covers = [sensors[a].in_fov for a in agent_ids]
    fused, label_map, _ = fuse_local_densities(
        densities,
        rule=config.fusion,
        agent_ids=agent_ids,
        reference=reference,
        match_cost=config.match_cost,
        match_threshold=config.match_threshold,
        covers=covers,
        reduction=config.reduction(),
        max_hypotheses=config.max_hypotheses,
    )
    return fused, label_map


def run_trial(config: ScenarioConfig, seed) -> TrialResult:
    """Run one Monte Carlo trial; the ``seed`` drives truth and measurements."""
    scen = generate_truth_and_measurements(config, seed)
    sensors = config.sensors()
    n = config.n_agents
    trackers = [
        LocalTracker(
            sensors[i],
            config.motion(),
            BirthModel(config.birth_existence, tuple(config.birth_cov)),
            config.family,
            i,
            config.reduction(),
            config.prune,
            config.max_hypotheses,
            config.max_tracks,
        )
        for i in range(n)
    ]
    T = config.duration
    ospa_v = np.zeros((T, n))
    est_n = np.zeros((T, n))
    true_n = np.zeros(T)
    tracks: dict = {i: {} for i in range(n)}
    diag = {"max_tracks": 0, "fused_existence": []}
    for t in range(T):
        dens = [trackers[i].step(t, scen.measurements[i][t]) for i in range(n)]
        if config.fusion != "none":
            for _ in range(config.consensus_steps):
                new = []
                for i in range(n):
                    group = sorted([i] + config.neighbors(i))
                    fused, _ = fuse_neighborhood([dens[j] for j in group], group, config, sensors, reference=i)
                    new.append(fused)
                dens = new
            for i in range(n):
                trackers[i].density = trackers[i].clean(dens[i])
                dens[i] = trackers[i].density
        truth_pos = np.array([x[[0, 2]] for _, x in sorted(scen.truth[t].items())]).reshape(-1, 2)
        true_n[t] = len(truth_pos)
        snapshot = []
        for i in range(n):
            est = extract(dens[i], config.extraction_threshold)
            pos = np.array([e[[0, 2]] for _, e in est]).reshape(-1, 2)
            ospa_v[t, i] = ospa(truth_pos, pos, config.ospa_p, config.ospa_c)
            est_n[t, i] = len(est)
            for lab, e in est:
                tracks[i].setdefault(_label_key(lab), []).append([t, round(float(e[0]), 3), round(float(e[2]), 3)])
            lmb = dens[i] if isinstance(dens[i], LMBDensity) else mdglmb_to_lmb(dens[i])
            diag["max_tracks"] = max(diag["max_tracks"], len(lmb))
            snapshot.append([(float(t_.pdf.mean()[0]), float(t_.pdf.mean()[2]), float(t_.existence)) for t_ in lmb])
        diag["fused_existence"].append(snapshot)
    return TrialResult(ospa_v, est_n, true_n, tracks, diag)


def _label_key(lab):
    tail = f":{lab.branch}" if lab.branch else ""
    return f"{lab.birth_time}:{lab.birth_index}:{lab.agent_id}{tail}"


def _safe_trial(config, seed):
    try:
        return run_trial(config, seed)
    except Exception as exc:  # a diverged run is recorded, not dropped
        log.warning("trial diverged: %s", exc)
        T, n = config.duration, config.n_agents
        return TrialResult(
            np.full((T, n), np.nan), np.full((T, n), np.nan), np.full(T, np.nan), {}, {}, traceback.format_exc()
        )


@dataclass
class RunResult:
    """Monte Carlo aggregate.

    ``ospa`` and ``est_n`` have shape (trials, T, agents).
    """

    config: ScenarioConfig
    ospa: np.ndarray
    est_n: np.ndarray
    true_n: np.ndarray
    tracks: list
    diverged: list
    wall_clock: float
    trials: list = field(default_factory=list, repr=False)

    @property
    def mean_ospa(self):
        per_trial = np.nanmean(self.ospa, axis=2)
        return np.nanmean(per_trial, axis=0)

    @property
    def std_ospa(self):
        per_trial = np.nanmean(self.ospa, axis=2)
        return np.nanstd(per_trial, axis=0)

    @property
    def mean_est_n(self):
        return np.nanmean(self.est_n, axis=(0, 2))

    @property
    def mean_true_n(self):
        return np.nanmean(self.true_n, axis=0)

    def card_error(self, window=None):
        """Mean absolute cardinality error over trials, agents and (a window of) time."""
        err = np.abs(self.est_n - self.true_n[:, :, None])
        if window is not None:
            err = err[:, window]
        return float(np.nanmean(err))

    def overall_ospa(self, window=None):
        vals = self.ospa if window is None else self.ospa[:, window]
        return float(np.nanmean(vals))


def trial_seeds(seed, trials):
    return np.random.SeedSequence(seed).spawn(trials)


def monte_carlo(config: ScenarioConfig, trials=None, seed=None, n_jobs: int = 1) -> RunResult:
    """Independent seeded trials; parallel execution never changes the results."""
    trials = config.trials if trials is None else trials
    seed = config.seed if seed is None else seed
    seeds = trial_seeds(seed, trials)
    start = time.perf_counter()
    if n_jobs == 1:
        results = [_safe_trial(config, s) for s in seeds]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(_safe_trial)(config, s) for s in seeds)
    wall = time.perf_counter() - start
    return RunResult(
        config,
        np.stack([r.ospa for r in results]),
        np.stack([r.est_n for r in results]),
        np.stack([r.true_n for r in results]),
        [r.tracks for r in results],
        [(k, r.diverged) for k, r in enumerate(results) if r.diverged],
        wall,
        results,
    )


# --- output ---------------------------------------------------------------------------------


def write_outputs(result: RunResult, out_dir):
    """Write ``ospa.csv``, ``cardinality.csv``, ``tracks.json`` and ``run_info.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    T = result.ospa.shape[1]
    with open(out / "ospa.csv", "w", newline="") as fh:
        fh.write("time,mean_ospa,std_ospa\n")
        for t in range(T):
            fh.write(f"{t},{result.mean_ospa[t]:.6f},{result.std_ospa[t]:.6f}\n")
    with open(out / "cardinality.csv", "w", newline="") as fh:
        fh.write("time,true_n,mean_est_n\n")
        for t in range(T):
            fh.write(f"{t},{result.mean_true_n[t]:.6f},{result.mean_est_n[t]:.6f}\n")
    tracks = {str(k): {str(a): v for a, v in tr.items()} for k, tr in enumerate(result.tracks)}
    (out / "tracks.json").write_text(json.dumps(tracks, sort_keys=True) + "\n")
    n = result.config.n_agents
    info = {
        "config": result.config.to_dict(),
        "fusion_weights": "uniform over each agent and its neighbors",
        "neighborhood_weights": {str(i): 1.0 / (1 + len(result.config.neighbors(i))) for i in range(n)},
        "sigma_point_kappa": sigma_kappa(4),
        "trials": int(result.ospa.shape[0]),
        "diverged": [{"trial": k, "error": e} for k, e in result.diverged],
        "mean_ospa": round(result.overall_ospa(), 6),
        "mean_abs_cardinality_error": round(result.card_error(), 6),
    }
    (out / "run_info.json").write_text(json.dumps(info, indent=1, sort_keys=True) + "\n")
    return out


# --- exclusive field-of-view analysis -------------------------------------------------------


@dataclass(frozen=True)
class ExclusiveTarget:
    """Outcome for one target that is born inside a single agent's field of view.

    ``window`` holds the time steps before any second agent covers the target.
    ``confirmed`` is the first step in the window at which the covering agent's
    local filter (no fusion) extracts the target. ``mil_delay`` is the largest
    delay, over all agents, until the MIL-fused density extracts it and
    ``gci_max_existence`` the largest GCI-fused existence near the target
    anywhere in the window.
    """

    target: int
    agent: int
    window: tuple
    confirmed: int | None
    mil_delay: float
    gci_max_existence: float


def _near(snapshot, pos, radius):
    return [r for x, y, r in snapshot if math.hypot(x - pos[0], y - pos[1]) <= radius]


def exclusive_windows(config: ScenarioConfig, truth):
    """Per target: the covering agent and the steps it alone covers the target."""
    sensors = config.sensors()
    out = {}
    for k in range(len(config.targets)):
        times = [t for t in range(config.duration) if k in truth[t]]
        if not times:
            continue
        steps, agent = [], None
        for t in times:
            pos = truth[t][k][[0, 2]]
            cov = [i for i, s in enumerate(sensors) if s.in_fov(pos)]
            if len(cov) != 1 or (agent is not None and cov[0] != agent):
                break
            agent = cov[0]
            steps.append(t)
        if steps:
            out[k] = (agent, tuple(steps))
    return out


def exclusive_fov_report(config: ScenarioConfig, seed, radius: float = 100.0, max_delay: int = 5):
    """Compare MIL and GCI on targets seen by a single agent.

    Runs the same seeded trial without fusion, with MIL and with GCI fusion.
    """
    runs = {rule: run_trial(config.replace(fusion=rule), seed) for rule in ("none", "mil", "gci")}
    truth = generate_truth_and_measurements(config, seed).truth
    thr = config.extraction_threshold
    report = []
    for k, (agent, steps) in exclusive_windows(config, truth).items():
        local = runs["none"].diagnostics["fused_existence"]
        confirmed = next(
            (t for t in steps if any(r > thr for r in _near(local[t][agent], truth[t][k][[0, 2]], radius))), None
        )
        mil = runs["mil"].diagnostics["fused_existence"]
        delays = []
        if confirmed is not None:
            for i in range(config.n_agents):
                hit = next(
                    (
                        t - confirmed
                        for t in range(confirmed, config.duration)
                        if k in truth[t] and any(r > thr for r in _near(mil[t][i], truth[t][k][[0, 2]], radius))
                    ),
                    math.inf,
                )
                delays.append(hit)
        gci = runs["gci"].diagnostics["fused_existence"]
        gci_max = max(
            (r for t in steps for i in range(config.n_agents) for r in _near(gci[t][i], truth[t][k][[0, 2]], radius)),
            default=0.0,
        )
        report.append(
            ExclusiveTarget(k, agent, steps, confirmed, max(delays) if delays else math.inf, float(gci_max))
        )
    return report
