"""Command-line entry point: ``gtnav {ingest,validate,run,metrics,stats,animate}``.

Exit codes: 0 success, 2 usage error, 3 configuration error, 4 parse
error, 5 runtime failure, 6 an episode had an infeasible tick that no
fallback handled.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from .core import GameConfig, default_gamma
from .errors import ConfigError, GtNavError, ParseError
from .planner import PlannerConfig
from .report import (
    bootstrap_means,
    compute_stats,
    read_metrics_table,
    summary,
    write_metrics_table,
    write_plots,
    write_stats_table,
    write_summary,
)
from .scenario import TrackFormat, ingest_tracks, load_manifest, load_scenario, write_frame_table
from .simulation import episode_from_log, episode_metrics, run_episode
from .svg import write_animation
from .vfh import VfhConfig

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_PARSE = 4
EXIT_RUNTIME = 5
EXIT_INFEASIBLE = 6

log = logging.getLogger("gtnav")

_GAME_KEYS = {f.name for f in dataclasses.fields(GameConfig)}
_PLANNER_KEYS = {f.name for f in dataclasses.fields(PlannerConfig)} - {"game"}
_VFH_KEYS = {f.name for f in dataclasses.fields(VfhConfig)}


def planner_config(values: dict) -> PlannerConfig:
    """Build a planner config from flat keys (game and planner fields mixed)."""
    unknown = set(values) - _GAME_KEYS - _PLANNER_KEYS
    if unknown:
        raise ConfigError(f"unknown planner setting(s): {', '.join(sorted(unknown))}")
    game_kw = {k: v for k, v in values.items() if k in _GAME_KEYS}
    for k in ("gamma", "action_set", "extra_check_times"):
        if k in game_kw:
            game_kw[k] = tuple(game_kw[k])
    if "horizon_T" in game_kw and "gamma" not in game_kw:
        game_kw["gamma"] = default_gamma(int(game_kw["horizon_T"]))
    try:
        game = GameConfig(**game_kw)
        return PlannerConfig(game=game, **{k: v for k, v in values.items() if k in _PLANNER_KEYS})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid planner setting: {exc}") from None


def vfh_config(values: dict, beta: float) -> VfhConfig:
    unknown = set(values) - _VFH_KEYS
    if unknown:
        raise ConfigError(f"unknown vfh setting(s): {', '.join(sorted(unknown))}")
    try:
        return VfhConfig.for_beta(beta, **values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid vfh setting: {exc}") from None


def apply_overrides(planner: dict, vfh: dict, overrides: Sequence[str]) -> tuple[dict, dict]:
    """Apply ``section.key=value`` flags; values use TOML syntax."""
    planner, vfh = dict(planner), dict(vfh)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        lhs, rhs = item.split("=", 1)
        section, key = lhs.split(".", 1)
        try:
            value = tomllib.loads(f"v = {rhs}")["v"]
        except tomllib.TOMLDecodeError:
            value = rhs
        if section == "planner":
            planner[key] = value
        elif section == "vfh":
            vfh[key] = value
        else:
            raise ConfigError(f"unknown override section {section!r}")
    return planner, vfh


def _episode_job(args):
    scenario_path, condition, planner_values, vfh_values, seed, log_path, anim_dir = args
    sc = load_scenario(scenario_path)
    cfg = planner_config(planner_values)
    vcfg = vfh_config(vfh_values, cfg.game.beta)
    res = run_episode(sc, condition, cfg, vcfg, seed)
    res.write_log(log_path)
    if anim_dir is not None:
        write_animation(res.trajectories, sc.bounds_min, sc.bounds_max, anim_dir)
    unhandled = list(res.infeasible_ticks) if not cfg.safety_check else []
    return episode_metrics(res, sc), len(res.violations), unhandled


def _write_reports(reports, out: Path, seed: int, bootstrap_iterations: int, extra: dict) -> None:
    write_metrics_table(reports, out / "metrics.tsv")
    rows = compute_stats(reports)
    write_stats_table(rows, out / "stats.tsv")
    boot = bootstrap_means(reports, seed, bootstrap_iterations) if bootstrap_iterations > 0 else {}
    write_summary(summary(reports, rows, boot, extra), out / "summary.json")
    write_plots(reports, out / "plots")


def cmd_run(ns) -> int:
    manifest = load_manifest(ns.manifest)
    planner, vfh = apply_overrides(manifest.planner, manifest.vfh, ns.set or [])
    vfh_config(vfh, planner_config(planner).game.beta)
    out = Path(ns.output) if ns.output else manifest.output
    seed = manifest.seed if ns.seed is None else ns.seed
    jobs = ns.jobs or manifest.jobs
    (out / "logs").mkdir(parents=True, exist_ok=True)
    tasks = []
    for i, sp in enumerate(manifest.scenarios):
        sc = load_scenario(sp)
        for cond in manifest.conditions:
            if cond != "HO" and sc.robot is None:
                raise ConfigError(f"{sp}: condition {cond} needs a robot start and goal")
            name = f"{sc.id}_{cond}"
            anim = out / "animations" / name if manifest.animate else None
            tasks.append((str(sp), cond, planner, vfh, seed + i, out / "logs" / f"{name}.tsv", anim))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_episode_job, tasks))
    else:
        results = [_episode_job(t) for t in tasks]
    reports = [r[0] for r in results]
    _write_reports(reports, out, seed, ns.bootstrap,
                   {"seed": seed, "conditions": manifest.conditions,
                    "scenarios": [Path(s).name for s in manifest.scenarios],
                    "planner": {k: planner[k] for k in sorted(planner)},
                    "vfh": {k: vfh[k] for k in sorted(vfh)}})
    violations = sum(r[1] for r in results)
    unhandled = sum(len(r[2]) for r in results)
    print(f"{len(results)} episodes, {violations} separation violation(s); results in {out}")
    if unhandled:
        print(f"{unhandled} infeasible tick(s) without a safety fallback", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_ingest(ns) -> int:
    tracks = ingest_tracks(ns.source, ns.format, ns.scale, ns.frame_dt, ns.frame_stride)
    write_frame_table(tracks, ns.output, 1.0, ns.frame_dt)
    n = sum(len(t.times) for t in tracks.values())
    print(f"{len(tracks)} tracks, {n} samples -> {ns.output}")
    return EXIT_OK


def cmd_validate(ns) -> int:
    for p in ns.files:
        try:
            with open(p, "rb") as fh:
                doc = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"file not found: {p}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ParseError(str(exc), p) from None
        if "scenarios" in doc:
            m = load_manifest(p)
            vfh_config(m.vfh, planner_config(m.planner).game.beta)
            for s in m.scenarios:
                load_scenario(s)
            print(f"{p}: manifest ok ({len(m.scenarios)} scenarios, conditions {','.join(m.conditions)})")
        else:
            sc = load_scenario(p)
            print(f"{p}: scenario {sc.id} ok ({len(sc.tracks)} tracks, robot {'yes' if sc.robot else 'no'})")
    return EXIT_OK


def cmd_metrics(ns) -> int:
    sc = load_scenario(ns.scenario)
    reports = []
    for path in ns.logs:
        res = episode_from_log(path)
        reports.append(episode_metrics(res, sc))
    write_metrics_table(reports, ns.output)
    print(f"{len(reports)} episode(s) -> {ns.output}")
    return EXIT_OK


def cmd_stats(ns) -> int:
    reports = [r for p in ns.tables for r in read_metrics_table(p)]
    out = Path(ns.output)
    out.mkdir(parents=True, exist_ok=True)
    rows = compute_stats(reports, ns.alpha)
    write_stats_table(rows, out / "stats.tsv")
    boot = bootstrap_means(reports, ns.seed, ns.bootstrap) if ns.bootstrap > 0 else {}
    write_summary(summary(reports, rows, boot, {"seed": ns.seed}), out / "summary.json")
    write_plots(reports, out / "plots")
    print(f"{len(rows)} test row(s) -> {out / 'stats.tsv'}")
    return EXIT_OK


def cmd_animate(ns) -> int:
    sc = load_scenario(ns.scenario)
    res = episode_from_log(ns.log)
    paths = write_animation(res.trajectories, sc.bounds_min, sc.bounds_max, ns.output, ns.stride)
    print(f"{len(paths)} frame(s) -> {ns.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gtnav", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="convert a track file to a metric FrameTable")
    s.add_argument("source")
    s.add_argument("--format", required=True, choices=[f.value for f in TrackFormat])
    s.add_argument("--scale", required=True, type=float, help="meters per raw unit")
    s.add_argument("--frame-dt", required=True, type=float, help="seconds per frame step")
    s.add_argument("--frame-stride", type=int, default=None)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("validate", help="check scenario or manifest files")
    s.add_argument("files", nargs="+")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("run", help="run the episodes of a manifest")
    s.add_argument("manifest")
    s.add_argument("-o", "--output")
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int)
    s.add_argument("--bootstrap", type=int, default=200, help="bootstrap iterations (0 disables)")
    s.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override a planner or vfh setting")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("metrics", help="metric table from episode logs")
    s.add_argument("logs", nargs="+")
    s.add_argument("--scenario", required=True)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("stats", help="tests, intervals and plots from metric tables")
    s.add_argument("tables", nargs="+")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--bootstrap", type=int, default=200)
    s.add_argument("--alpha", type=float, default=0.05)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("animate", help="SVG frames from an episode log")
    s.add_argument("log")
    s.add_argument("--scenario", required=True)
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--stride", type=int, default=1)
    s.set_defaults(func=cmd_animate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return ns.func(ns)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (GtNavError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
