"""Ground truth and cluttered scan generation for the three-target maneuver scenario.

Three targets fly west in parallel, turn left at 1 deg/s until heading
south, fly south, turn right at 3 deg/s back to west and continue. Each scan
holds thinned, noisy target detections plus uniform Poisson clutter, in
random order.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from . import InvalidArgument
from .dynamics import ct_transition, cv_transition, process_noise
from .hypothesis import Scan

DEG = math.pi / 180.0


@dataclass(frozen=True)
class Segment:
    kind: str  # "CV" or "CT"
    duration: int
    omega: float = 0.0  # rad/s, CT only

    def __post_init__(self):
        if self.kind not in ("CV", "CT"):
            raise InvalidArgument(f"unknown segment kind {self.kind!r}")
        if self.duration < 1:
            raise InvalidArgument("segment duration must be >= 1")

    def transition(self, dt: float) -> np.ndarray:
        return ct_transition(self.omega, dt) if self.kind == "CT" else cv_transition(dt)


def default_segments():
    return [
        Segment("CV", 20),
        Segment("CT", 18, 1.0 * DEG),
        Segment("CV", 12),
        Segment("CT", 6, -3.0 * DEG),
        Segment("CV", 14),
    ]


@dataclass
class ScenarioConfig:
    dt: float = 5.0
    segments: list = field(default_factory=default_segments)
    initial_states: Optional[list] = None  # None: preset formation from start/speed/spacing
    spacing: float = 1000.0
    num_targets: int = 3
    speed: float = 120.0
    start: tuple = (15000.0, 8000.0)
    P_d: float = 0.9
    lambda_f: float = 50.0
    sigma_z: float = 400.0
    region: Optional[tuple] = None  # (xmin, xmax, ymin, ymax); None: truth bbox + margin
    region_margin: float = 2000.0
    seed: int = 0
    truth_noise_q: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.P_d <= 1.0:
            raise InvalidArgument("P_d must lie in (0, 1]")
        if self.lambda_f < 0:
            raise InvalidArgument("lambda_f must be non-negative")
        if self.dt <= 0 or self.sigma_z <= 0:
            raise InvalidArgument("dt and sigma_z must be positive")
        if self.region is not None:
            xmin, xmax, ymin, ymax = self.region
            if not (xmax > xmin and ymax > ymin):
                raise InvalidArgument("region must have positive area")

    @property
    def num_steps(self) -> int:
        return sum(s.duration for s in self.segments)

    def resolved_initial_states(self) -> list:
        if self.initial_states is not None:
            return [np.asarray(x, dtype=float) for x in self.initial_states]
        x0, y0 = self.start
        return [np.array([x0, -self.speed, y0 + i * self.spacing, 0.0])
                for i in range(self.num_targets)]


@dataclass
class GroundTruth:
    times: list  # time indices 1..K
    states: list  # per time: array (T, 4)

    def positions(self, k: int) -> np.ndarray:
        return self.states[k][:, [0, 2]]

    def bounding_box(self):
        P = np.concatenate([s[:, [0, 2]] for s in self.states])
        return P[:, 0].min(), P[:, 0].max(), P[:, 1].min(), P[:, 1].max()


def generate_truth(cfg: ScenarioConfig, rng: np.random.Generator | None = None) -> GroundTruth:
    """Propagate the formation through the segment list.

    States are recorded after each transition, so the preset yields one
    state per time index 1..70. Process noise is added only when
    ``truth_noise_q > 0``.
    """
    x = np.stack(cfg.resolved_initial_states())
    if cfg.truth_noise_q > 0:
        rng = rng or np.random.default_rng(cfg.seed)
        Q = process_noise(cfg.truth_noise_q, cfg.dt)
    times, states = [], []
    k = 0
    for seg in cfg.segments:
        F = seg.transition(cfg.dt)
        for _ in range(seg.duration):
            x = x @ F.T
            if cfg.truth_noise_q > 0:
                x = x + rng.multivariate_normal(np.zeros(4), Q, size=len(x))
            k += 1
            times.append(k)
            states.append(x.copy())
    return GroundTruth(times, states)


def surveillance_region(truth: GroundTruth, cfg: ScenarioConfig):
    if cfg.region is not None:
        return tuple(float(v) for v in cfg.region)
    xmin, xmax, ymin, ymax = truth.bounding_box()
    m = cfg.region_margin
    return (float(xmin - m), float(xmax + m), float(ymin - m), float(ymax + m))


def region_volume(region) -> float:
    xmin, xmax, ymin, ymax = region
    return (xmax - xmin) * (ymax - ymin)


def generate_scans_labeled(truth: GroundTruth, cfg: ScenarioConfig, rng: np.random.Generator):
    """Scans plus per-measurement origin labels (target 1..T, or 0 for clutter)."""
    if not truth.states:
        raise InvalidArgument("ground truth is empty")
    region = surveillance_region(truth, cfg)
    xmin, xmax, ymin, ymax = region
    scans, origins = [], []
    for k, X in zip(truth.times, truth.states):
        pos = X[:, [0, 2]]
        detected = rng.random(len(pos)) < cfg.P_d
        det = pos[detected] + cfg.sigma_z * rng.standard_normal((int(detected.sum()), 2))
        n_clutter = rng.poisson(cfg.lambda_f) if cfg.lambda_f > 0 else 0
        clutter = np.column_stack([rng.uniform(xmin, xmax, n_clutter),
                                   rng.uniform(ymin, ymax, n_clutter)])
        Z = np.vstack([det, clutter]) if n_clutter else det
        labels = np.concatenate([np.flatnonzero(detected) + 1,
                                 np.zeros(n_clutter, dtype=int)]).astype(int)
        order = rng.permutation(len(Z))
        scans.append(Scan(k, Z[order]))
        origins.append(labels[order])
    return scans, origins


def generate_scans(truth: GroundTruth, cfg: ScenarioConfig, rng: np.random.Generator):
    return generate_scans_labeled(truth, cfg, rng)[0]


# --- config and CSV I/O -------------------------------------------------

_FLOATS = {"dt", "spacing", "speed", "P_d", "lambda_f", "sigma_z", "region_margin",
           "truth_noise_q"}
_INTS = {"num_targets", "seed"}


def _floats(text: str):
    return tuple(float(v) for v in text.replace(",", " ").split())


def scenario_from_parser(cp: configparser.ConfigParser) -> ScenarioConfig:
    kw = {}
    if cp.has_section("scenario"):
        for key, value in cp.items("scenario"):
            if key in _FLOATS:
                kw[key] = float(value)
            elif key in _INTS:
                kw[key] = int(value)
            elif key in ("start", "region"):
                kw[key] = _floats(value)
            elif key == "initial_states":
                kw[key] = [np.array(_floats(s)) for s in value.split(";") if s.strip()]
            else:
                raise InvalidArgument(f"unknown scenario key {key!r}")
    segs = sorted((s for s in cp.sections() if s.startswith("segment.")),
                  key=lambda s: int(s.split(".", 1)[1]))
    if segs:
        kw["segments"] = [Segment(cp.get(s, "kind").upper(), cp.getint(s, "duration"),
                                  cp.getfloat(s, "omega", fallback=0.0)) for s in segs]
    return ScenarioConfig(**kw)


def load_config(path) -> configparser.ConfigParser:
    # option names are case-sensitive (P_d)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    with open(path) as fh:
        cp.read_file(fh)
    return cp


def load_scenario(path) -> ScenarioConfig:
    return scenario_from_parser(load_config(path))


def scenario_metadata(cfg: ScenarioConfig, truth: GroundTruth) -> dict:
    region = surveillance_region(truth, cfg)
    meta = {f.name: getattr(cfg, f.name) for f in fields(cfg)
            if f.name not in ("segments", "initial_states", "region")}
    meta["segments"] = ";".join(f"{s.kind}:{s.duration}:{s.omega!r}" for s in cfg.segments)
    meta["initial_states"] = ";".join(",".join(repr(float(v)) for v in x)
                                      for x in cfg.resolved_initial_states())
    meta["region"] = ",".join(repr(v) for v in region)
    meta["V"] = region_volume(region)
    return meta


def write_truth_csv(fh, truth: GroundTruth, header: dict | None = None):
    for k, v in (header or {}).items():
        fh.write(f"# {k}={v}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["time", "target_id", "x", "y", "vx", "vy"])
    for k, X in zip(truth.times, truth.states):
        for i, x in enumerate(X, start=1):
            w.writerow([k, i, repr(float(x[0])), repr(float(x[2])),
                        repr(float(x[1])), repr(float(x[3]))])


def write_scans_csv(fh, scans, header: dict | None = None, origins=None):
    for k, v in (header or {}).items():
        fh.write(f"# {k}={v}\n")
    w = csv.writer(fh, lineterminator="\n")
    cols = ["time", "meas_id", "x", "y"] + (["origin"] if origins is not None else [])
    w.writerow(cols)
    for idx, scan in enumerate(scans):
        for r, z in enumerate(scan.measurements, start=1):
            row = [scan.time_index, r, repr(float(z[0])), repr(float(z[1]))]
            if origins is not None:
                row.append(int(origins[idx][r - 1]))
            w.writerow(row)


def read_scans_csv(fh):
    """Inverse of :func:`write_scans_csv`; returns ``(scans, origins or None)``."""
    lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.DictReader(io.StringIO("".join(lines))))
    by_time = {}
    for row in rows:
        by_time.setdefault(int(row["time"]), []).append(row)
    scans, origins = [], []
    has_origin = bool(rows) and "origin" in rows[0]
    for t in sorted(by_time):
        rs = sorted(by_time[t], key=lambda r: int(r["meas_id"]))
        Z = np.array([[float(r["x"]), float(r["y"])] for r in rs]).reshape(-1, 2)
        scans.append(Scan(t, Z))
        if has_origin:
            origins.append(np.array([int(r["origin"]) for r in rs], dtype=int))
    return scans, (origins if has_origin else None)
