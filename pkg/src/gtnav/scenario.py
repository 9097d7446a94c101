"""Replay tracks, scenarios and run manifests, plus their file formats.

Track files
    ``FrameTable``: whitespace/tab separated ``frame id x y`` rows.
    ``ObsmatLike``: eight whitespace separated columns
    ``frame id x _ y _ _ _``.
    Both accept ``#`` comments. Positions are multiplied by ``scale``; a frame
    step (the smallest spacing between annotated frames unless given) lasts
    ``frame_dt`` seconds.

Scenario and manifest files are TOML; see the README for the schema.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import Vec2
from .errors import ConfigError, ParseError
from .game_model import ObstacleGrid
from .metrics import CONDITIONS

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)


class TrackFormat(enum.Enum):
    FRAME_TABLE = "FrameTable"
    OBSMAT_LIKE = "ObsmatLike"


@dataclass
class Track:
    """Positions of one agent at increasing times (seconds, meters)."""

    agent_id: str
    times: np.ndarray
    xy: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        if len(self.times) != len(self.xy):
            raise ValueError("times and positions differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError(f"track {self.agent_id}: times must increase")

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def covers(self, t: float, eps: float = 1e-9) -> bool:
        return self.start - eps <= t <= self.end + eps

    def position_at(self, t: float) -> np.ndarray:
        return np.array([np.interp(t, self.times, self.xy[:, 0]), np.interp(t, self.times, self.xy[:, 1])])

    def velocity_at(self, t: float) -> np.ndarray:
        """Backward finite difference over one sample interval (forward at the start)."""
        if len(self.times) < 2:
            return np.zeros(2)
        h = float(np.min(np.diff(self.times)))
        t0 = max(self.start, t - h)
        t1 = t0 + h
        if t1 > self.end:
            t1 = self.end
            t0 = t1 - h
        return (self.position_at(t1) - self.position_at(t0)) / (t1 - t0)

    def speeds(self) -> np.ndarray:
        """Finite-difference speed at every sample."""
        if len(self.times) < 2:
            return np.zeros(len(self.times))
        v = np.linalg.norm(np.diff(self.xy, axis=0), axis=1) / np.diff(self.times)
        return np.concatenate(([v[0]], v))

    def headings(self) -> np.ndarray:
        if len(self.times) < 2:
            return np.zeros(len(self.times))
        d = np.diff(self.xy, axis=0)
        h = np.arctan2(d[:, 1], d[:, 0])
        return np.concatenate(([h[0]], h))


def _parse_rows(path: Path, fmt: TrackFormat):
    ncols = 4 if fmt is TrackFormat.FRAME_TABLE else 8
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != ncols:
                raise ParseError(f"expected {ncols} columns, got {len(parts)}", path, lineno)
            try:
                frame = float(parts[0])
                x = float(parts[2])
                y = float(parts[3] if ncols == 4 else parts[4])
            except ValueError as exc:
                raise ParseError(str(exc), path, lineno) from None
            if frame != int(frame) or not (math.isfinite(x) and math.isfinite(y)):
                raise ParseError("frame must be an integer and coordinates finite", path, lineno)
            agent = parts[1]
            try:
                agent = str(int(float(agent)))
            except ValueError:
                pass
            rows.append((int(frame), agent, x, y, lineno))
    return rows


def ingest_tracks(path: Union[str, Path], fmt: Union[TrackFormat, str], scale: float, frame_dt: float,
                  frame_stride: Optional[int] = None) -> dict[str, Track]:
    """Read a track file into per-agent tracks, filling frame gaps linearly.

    Time zero is the first frame in the file. Agents seen in a single frame
    are dropped with a warning.
    """
    path = Path(path)
    fmt = TrackFormat(fmt) if not isinstance(fmt, TrackFormat) else fmt
    if not scale > 0 or not frame_dt > 0:
        raise ConfigError("scale and frame_dt must be > 0")
    rows = _parse_rows(path, fmt)
    if not rows:
        return {}
    by_agent: dict[str, dict[int, tuple[float, float]]] = {}
    for frame, agent, x, y, lineno in rows:
        frames = by_agent.setdefault(agent, {})
        if frame in frames:
            raise ParseError(f"agent {agent} appears twice in frame {frame}", path, lineno)
        frames[frame] = (x * scale, y * scale)
    first = min(r[0] for r in rows)
    if frame_stride is None:
        diffs = [b - a for fr in by_agent.values() for a, b in zip(sorted(fr), sorted(fr)[1:])]
        frame_stride = reduce(math.gcd, diffs, 0) or 1
    tracks = {}
    for agent in sorted(by_agent, key=_id_key):
        frames = by_agent[agent]
        if len(frames) < 2:
            log.warning("%s: dropping agent %s seen in a single frame", path, agent)
            continue
        fs = np.array(sorted(frames))
        full = np.arange(fs[0], fs[-1] + 1, frame_stride)
        xs = np.interp(full, fs, [frames[f][0] for f in fs])
        ys = np.interp(full, fs, [frames[f][1] for f in fs])
        times = (full - first) / frame_stride * frame_dt
        tracks[agent] = Track(agent, times, np.column_stack((xs, ys)))
    return tracks


def _id_key(agent: str):
    try:
        return (0, int(agent), agent)
    except ValueError:
        return (1, 0, agent)


def write_frame_table(tracks: dict[str, Track], path: Union[str, Path], scale: float = 1.0,
                      frame_dt: float = 0.4) -> None:
    """Write tracks as a FrameTable; inverse of :func:`ingest_tracks`."""
    lines = ["# frame\tid\tx\ty"]
    rows = []
    for agent in sorted(tracks, key=_id_key):
        tr = tracks[agent]
        for t, (x, y) in zip(tr.times, tr.xy):
            rows.append((int(round(t / frame_dt)), _id_key(agent), agent, x / scale, y / scale))
    rows.sort(key=lambda r: (r[0], r[1]))
    for frame, _, agent, x, y in rows:
        lines.append(f"{frame}\t{agent}\t{float(x)!r}\t{float(y)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class RobotSpec:
    start: Vec2
    goal: Vec2
    speed: Optional[float] = None


@dataclass
class Scenario:
    id: str
    bounds_min: Vec2
    bounds_max: Vec2
    tracks: dict[str, Track] = field(default_factory=dict)
    grid: Optional[ObstacleGrid] = None
    robot: Optional[RobotSpec] = None
    scale: float = 1.0
    frame_dt: float = 0.4
    duration: Optional[float] = None
    metadata: dict = field(default_factory=dict)

    @property
    def arena_diagonal(self) -> float:
        return self.bounds_max.dist(self.bounds_min)

    @property
    def replay_duration(self) -> float:
        if self.duration is not None:
            return self.duration
        if not self.tracks:
            return 0.0
        return max(t.end for t in self.tracks.values())

    def obstacle_grid(self) -> ObstacleGrid:
        if self.grid is not None:
            return self.grid
        return ObstacleGrid.empty(1, 1, 1.0, self.bounds_min)

    def mean_pedestrian_speed(self) -> Optional[float]:
        speeds = [s for t in self.tracks.values() for s in t.speeds()]
        return float(np.mean(speeds)) if speeds else None

    def validate(self) -> None:
        lo, hi = self.bounds_min, self.bounds_max
        if not (hi.x > lo.x and hi.y > lo.y):
            raise ConfigError(f"{self.id}: world bounds are empty")
        if not self.scale > 0:
            raise ConfigError(f"{self.id}: scale must be > 0")
        eps = 1e-9
        for tr in self.tracks.values():
            x, y = tr.xy[:, 0], tr.xy[:, 1]
            if (x < lo.x - eps).any() or (x > hi.x + eps).any() or (y < lo.y - eps).any() or (y > hi.y + eps).any():
                raise ConfigError(f"{self.id}: track {tr.agent_id} leaves the world bounds")
            if self.grid is not None:
                glo, ghi = self.grid.bounds
                if ((x < glo.x - eps).any() or (x > ghi.x + eps).any()
                        or (y < glo.y - eps).any() or (y > ghi.y + eps).any()):
                    raise ConfigError(f"{self.id}: track {tr.agent_id} lies outside the obstacle grid")
        if self.robot is not None:
            r = self.robot
            if r.start.dist(r.goal) == 0:
                raise ConfigError(f"{self.id}: robot start equals goal")
            for name, p in (("start", r.start), ("goal", r.goal)):
                if not (lo.x <= p.x <= hi.x and lo.y <= p.y <= hi.y):
                    raise ConfigError(f"{self.id}: robot {name} outside the world bounds")
                if self.grid is not None and self.grid.occupied_at([[p.x, p.y]])[0]:
                    raise ConfigError(f"{self.id}: robot {name} lies in an obstacle")
            if r.speed is not None and not r.speed > 0:
                raise ConfigError(f"{self.id}: robot speed must be > 0")


def _vec(value, what, path) -> Vec2:
    try:
        x, y = value
        return Vec2(float(x), float(y))
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: {what} must be a pair of numbers") from None


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Load and validate a scenario TOML file; relative paths resolve against it."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(str(exc), path) from None
    base = path.parent
    tracks_cfg = doc.get("tracks", {})
    scale = float(tracks_cfg.get("scale", 1.0))
    frame_dt = float(tracks_cfg.get("frame_dt", 0.4))
    tracks = {}
    if "file" in tracks_cfg:
        src = base / tracks_cfg["file"]
        if not src.exists():
            raise ConfigError(f"{path}: track file not found: {src}")
        tracks = ingest_tracks(src, tracks_cfg.get("format", "FrameTable"), scale, frame_dt,
                               tracks_cfg.get("frame_stride"))
    grid = None
    if "grid" in doc:
        gfile = base / doc["grid"]["file"]
        if not gfile.exists():
            raise ConfigError(f"{path}: grid file not found: {gfile}")
        grid = ObstacleGrid.load(gfile)
    world = doc.get("world", {})
    if "min" in world and "max" in world:
        lo, hi = _vec(world["min"], "world.min", path), _vec(world["max"], "world.max", path)
    elif grid is not None:
        lo, hi = grid.bounds
    elif tracks:
        allxy = np.concatenate([t.xy for t in tracks.values()])
        lo, hi = Vec2.of(allxy.min(axis=0)), Vec2.of(allxy.max(axis=0))
    else:
        raise ConfigError(f"{path}: world bounds cannot be inferred")
    robot = None
    if "robot" in doc:
        r = doc["robot"]
        if "start" not in r or "goal" not in r:
            raise ConfigError(f"{path}: robot needs start and goal")
        robot = RobotSpec(_vec(r["start"], "robot.start", path), _vec(r["goal"], "robot.goal", path),
                          float(r["speed"]) if "speed" in r else None)
    sc = Scenario(
        id=str(doc.get("id", path.stem)),
        bounds_min=lo,
        bounds_max=hi,
        tracks=tracks,
        grid=grid,
        robot=robot,
        scale=scale,
        frame_dt=frame_dt,
        duration=float(doc["duration"]) if "duration" in doc else None,
        metadata=dict(doc.get("metadata", {})),
    )
    sc.validate()
    return sc


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(float(v)) if isinstance(v, float) else str(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'


def save_scenario(sc: Scenario, directory: Union[str, Path]) -> Path:
    """Write ``<id>.toml`` plus its track and grid files into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = [f"id = {_toml_value(sc.id)}"]
    if sc.duration is not None:
        lines.append(f"duration = {_toml_value(float(sc.duration))}")
    lines += ["", "[world]", f"min = {_toml_value([sc.bounds_min.x, sc.bounds_min.y])}",
              f"max = {_toml_value([sc.bounds_max.x, sc.bounds_max.y])}"]
    if sc.tracks:
        tname = f"{sc.id}_tracks.tsv"
        write_frame_table(sc.tracks, d / tname, sc.scale, sc.frame_dt)
        lines += ["", "[tracks]", f"file = {_toml_value(tname)}", 'format = "FrameTable"',
                  f"scale = {_toml_value(float(sc.scale))}", f"frame_dt = {_toml_value(float(sc.frame_dt))}",
                  "frame_stride = 1"]
    if sc.grid is not None:
        gname = f"{sc.id}_grid.txt"
        sc.grid.save(d / gname)
        lines += ["", "[grid]", f"file = {_toml_value(gname)}"]
    if sc.robot is not None:
        r = sc.robot
        lines += ["", "[robot]", f"start = {_toml_value([r.start.x, r.start.y])}",
                  f"goal = {_toml_value([r.goal.x, r.goal.y])}"]
        if r.speed is not None:
            lines.append(f"speed = {_toml_value(float(r.speed))}")
    if sc.metadata:
        lines += ["", "[metadata]"] + [f"{k} = {_toml_value(v)}" for k, v in sorted(sc.metadata.items())]
    out = d / f"{sc.id}.toml"
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out


@dataclass
class RunManifest:
    scenarios: list[Path]
    conditions: list[str]
    output: Path
    seed: int = 0
    planner: dict = field(default_factory=dict)
    vfh: dict = field(default_factory=dict)
    animate: bool = False
    jobs: int = 1

    def validate(self) -> None:
        if not self.scenarios:
            raise ConfigError("manifest lists no scenarios")
        for c in self.conditions:
            if c not in CONDITIONS:
                raise ConfigError(f"unknown condition {c!r}; expected one of {CONDITIONS}")
        for s in self.scenarios:
            if not Path(s).exists():
                raise ConfigError(f"scenario not found: {s}")


def load_manifest(path: Union[str, Path]) -> RunManifest:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"manifest not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(str(exc), path) from None
    base = path.parent
    conds = doc.get("conditions")
    if conds is None:
        conds = [doc["condition"]] if "condition" in doc else list(CONDITIONS)
    m = RunManifest(
        scenarios=[base / s for s in doc.get("scenarios", [])],
        conditions=[str(c) for c in conds],
        output=base / doc.get("output", "out"),
        seed=int(doc.get("seed", 0)),
        planner=dict(doc.get("planner", {})),
        vfh=dict(doc.get("vfh", {})),
        animate=bool(doc.get("animate", False)),
        jobs=int(doc.get("jobs", 1)),
    )
    m.validate()
    return m
