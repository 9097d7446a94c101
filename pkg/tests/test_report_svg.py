import math
import re

import numpy as np
import pytest

from gtnav.core import Trajectory, Vec2
from gtnav.errors import ParseError
from gtnav.metrics import MetricReport
from gtnav.report import (
    bootstrap_means,
    compute_stats,
    read_metrics_table,
    write_metrics_table,
    write_plots,
)
from gtnav.svg import ARROW_FILL, BACKGROUND, arrow_points, frame_svg, write_animation


def _reports(seed=0, n=12):
    rng = np.random.default_rng(seed)
    out = []
    for cond, shift in (("HO", 0.0), ("GT", 0.05), ("VFH", -0.05)):
        for i in range(n):
            out.append(MetricReport(f"s{i:02d}", cond, "robot" if cond != "HO" else "p0",
                                    float(np.clip(rng.normal(0.9 + shift, 0.03), 0, 1)),
                                    float(np.clip(rng.normal(0.8 + shift, 0.05), 0, 1)),
                                    float(rng.uniform(0, 0.3)), bool(rng.random() < 0.9)))
    return out


def test_metrics_table_round_trip(tmp_path):
    reps = _reports()
    reps.append(MetricReport("z", "GT", "robot", 1.0, math.nan, 0.1, False))
    write_metrics_table(reps, tmp_path / "m.tsv")
    back = read_metrics_table(tmp_path / "m.tsv")
    key = lambda r: (r.scenario_id, r.condition, r.agent_id)
    assert sorted(map(key, back)) == sorted(map(key, reps))
    by = {key(r): r for r in back}
    for r in reps:
        b = by[key(r)]
        assert b.reached_goal == r.reached_goal
        for f in ("plr", "pr", "cpd"):
            x, y = getattr(r, f), getattr(b, f)
            assert (math.isnan(x) and math.isnan(y)) or x == pytest.approx(y, abs=1e-9)


def test_metrics_table_bad_input(tmp_path):
    p = tmp_path / "m.tsv"
    p.write_text("wrong\theader\n")
    with pytest.raises(ParseError):
        read_metrics_table(p)
    p.write_text("scenario\tcondition\tagent\tplr\tpr\tcpd\treached_goal\ns\tGT\trobot\t1\n")
    with pytest.raises(ParseError) as exc:
        read_metrics_table(p)
    assert exc.value.line == 2


def test_compute_stats_rows():
    rows = compute_stats(_reports())
    tests = {(r.metric, r.test) for r in rows}
    for m in ("plr", "pr", "cpd"):
        assert (m, "KruskalWallis") in tests and (m, "Levene") in tests
        assert sum(1 for r in rows if r.metric == m and r.test == "BonferroniPosthoc") == 3
    lv = next(r for r in rows if r.metric == "pr" and r.test == "Levene")
    assert lv.detail.startswith("spread=HO:")


def test_compute_stats_degenerate_is_skipped():
    reps = [MetricReport(f"s{i}", c, "a", 1.0, 1.0, 0.5) for i in range(4) for c in ("GT", "VFH")]
    rows = compute_stats(reps)
    kw = next(r for r in rows if r.metric == "pr" and r.test == "KruskalWallis")
    assert math.isnan(kw.statistic) and kw.detail.startswith("skipped")


def test_bootstrap_means_bit_stable():
    reps = _reports(3)
    a = bootstrap_means(reps, 11, 50)
    b = bootstrap_means(reps, 11, 50)
    assert a == b
    c = bootstrap_means(reps, 5000, 50)
    assert a != c
    for metric in a:
        for lo, hi in a[metric].values():
            assert lo <= hi


def test_plots(tmp_path):
    paths = write_plots(_reports(), tmp_path)
    assert [p.name for p in paths] == ["plr.svg", "pr.svg", "cpd.svg"]
    text = paths[0].read_text()
    assert text.startswith("<svg") and text.count(f'fill="{ARROW_FILL}"') == 3


def test_arrow_geometry():
    tip, left, right = arrow_points(1.0, 2.0, math.pi / 2, 1.0)
    assert tip == pytest.approx((1.0, 2.6))
    assert left[1] == pytest.approx(right[1])
    assert abs(left[0] - 1.0) == pytest.approx(abs(right[0] - 1.0))


def test_frame_uniform_style():
    svg = frame_svg([(1, 1, 0.0), (2, 3, 1.0), (4, 2, -2.0)], Vec2(0, 0), Vec2(5, 5))
    assert f'fill="{BACKGROUND}"' in svg
    fills = re.findall(r'<polygon [^>]*fill="([^"]+)"', svg)
    assert fills == [ARROW_FILL] * 3
    # identical shapes: every triangle has the same side lengths
    sides = []
    for pts in re.findall(r'points="([^"]+)"', svg):
        xy = [tuple(map(float, p.split(","))) for p in pts.split()]
        sides.append(sorted(round(math.dist(xy[i], xy[(i + 1) % 3]), 1) for i in range(3)))
    assert all(s == sides[0] for s in sides)


def test_write_animation(tmp_path):
    a = Trajectory.from_points([(0, 0), (1, 0), (2, 0), (3, 0)], 0.5)
    b = Trajectory.from_points([(3, 3), (3, 2)], 0.5, 1)
    paths = write_animation({"a": a, "b": b}, Vec2(-1, -1), Vec2(4, 4), tmp_path / "anim", stride=2)
    assert [p.name for p in paths] == ["frame_00000.svg", "frame_00002.svg"]
    assert paths[0].read_text().count("<polygon") == 1
    assert paths[1].read_text().count("<polygon") == 2
