import logging
from pathlib import Path

import numpy as np
import pytest

from gtnav.errors import ConfigError, ParseError
from gtnav.scenario import ingest_tracks, load_manifest, load_scenario, save_scenario, write_frame_table
from gtnav.synthetic import corridor_scenario, crossing_scenario


def test_frame_table_basic(tmp_path):
    p = tmp_path / "t.tsv"
    p.write_text("# frame id x y\n0\t1\t0.0\t0.0\n0\t2\t5\t5\n1\t1\t1\t0\n1\t2\t5\t4\n2\t1\t2\t0\n2\t2\t5\t3\n")
    tracks = ingest_tracks(p, "FrameTable", 1.0, 0.4)
    assert sorted(tracks) == ["1", "2"]
    assert all(len(t.times) == 3 for t in tracks.values())
    np.testing.assert_allclose(tracks["1"].times, [0, 0.4, 0.8])


def test_gap_interpolated(tmp_path):
    p = tmp_path / "t.tsv"
    p.write_text("0 a 0 0\n1 a 1 0\n3 a 3 2\n")
    tr = ingest_tracks(p, "FrameTable", 1.0, 0.4)["a"]
    np.testing.assert_allclose(tr.xy[2], [2.0, 1.0])
    np.testing.assert_allclose(tr.times, [0, 0.4, 0.8, 1.2])


def test_speed_estimate(tmp_path):
    p = tmp_path / "t.tsv"
    p.write_text("".join(f"{k} a {k}.0 0.0\n" for k in range(5)))
    tr = ingest_tracks(p, "FrameTable", 1.0, 0.4)["a"]
    np.testing.assert_allclose(tr.speeds(), 2.5)
    np.testing.assert_allclose(tr.headings(), 0.0)


def test_obsmat_like_with_scale_and_stride(tmp_path):
    p = tmp_path / "o.txt"
    p.write_text("0 7 100 0 50 0 0 0\n10 7 110 0 50 0 0 0\n20 7 130 0 50 0 0 0\n")
    tr = ingest_tracks(p, "ObsmatLike", 0.02, 0.4)["7"]
    np.testing.assert_allclose(tr.times, [0, 0.4, 0.8])
    np.testing.assert_allclose(tr.xy[:, 0], [2.0, 2.2, 2.6])


def test_single_frame_agent_dropped(tmp_path, caplog):
    p = tmp_path / "t.tsv"
    p.write_text("0 a 0 0\n1 a 1 0\n1 b 3 3\n")
    with caplog.at_level(logging.WARNING):
        tracks = ingest_tracks(p, "FrameTable", 1.0, 0.4)
    assert list(tracks) == ["a"]
    assert "single frame" in caplog.text


@pytest.mark.parametrize("body,line", [("0 a 0 0\n1 a 1\n", 2), ("0 a 0 0\n1 a x 0\n", 2),
                                       ("0 a 0 0\n0 a 1 1\n", 2), ("0.5 a 0 0\n", 1)])
def test_parse_errors_carry_line(tmp_path, body, line):
    p = tmp_path / "t.tsv"
    p.write_text(body)
    with pytest.raises(ParseError) as exc:
        ingest_tracks(p, "FrameTable", 1.0, 0.4)
    assert exc.value.line == line


def test_round_trip(tmp_path):
    sc = crossing_scenario(3)
    write_frame_table(sc.tracks, tmp_path / "t.tsv", 1.0, sc.frame_dt)
    back = ingest_tracks(tmp_path / "t.tsv", "FrameTable", 1.0, sc.frame_dt, frame_stride=1)
    t0 = min(t.start for t in sc.tracks.values())
    assert sorted(back) == sorted(sc.tracks)
    for aid, tr in sc.tracks.items():
        np.testing.assert_allclose(back[aid].xy, tr.xy, atol=1e-9, rtol=0)
        np.testing.assert_allclose(back[aid].times, tr.times - t0, atol=1e-9)


def test_scenario_save_load_round_trip(tmp_path):
    sc = corridor_scenario()
    path = save_scenario(sc, tmp_path)
    back = load_scenario(path)
    assert back.id == sc.id and back.robot == sc.robot
    np.testing.assert_array_equal(back.grid.occupancy, sc.grid.occupancy)
    np.testing.assert_allclose(back.tracks["p1"].xy, sc.tracks["p1"].xy, atol=1e-9)


def _write(tmp_path, text, tracks="0 a 1 1\n1 a 2 1\n"):
    (tmp_path / "t.tsv").write_text(tracks)
    p = tmp_path / "s.toml"
    p.write_text(text)
    return p


def test_minimal_scenario_has_no_robot(tmp_path):
    p = _write(tmp_path, '[tracks]\nfile = "t.tsv"\n', tracks="0 a 1 1\n1 a 2 2\n")
    sc = load_scenario(p)
    assert sc.robot is None and list(sc.tracks) == ["a"]


def test_robot_start_equals_goal_rejected(tmp_path):
    p = _write(tmp_path, '[world]\nmin = [0, 0]\nmax = [5, 5]\n[tracks]\nfile = "t.tsv"\n'
                         '[robot]\nstart = [1, 1]\ngoal = [1, 1]\n')
    with pytest.raises(ConfigError):
        load_scenario(p)


def test_track_outside_grid_rejected(tmp_path):
    (tmp_path / "g.txt").write_text("2 2 1.0 0 0\n00\n00\n")
    p = _write(tmp_path, '[world]\nmin = [0, 0]\nmax = [5, 5]\n[tracks]\nfile = "t.tsv"\n'
                         '[grid]\nfile = "g.txt"\n', tracks="0 a 1 1\n1 a 3 1\n")
    with pytest.raises(ConfigError):
        load_scenario(p)


def test_missing_files(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "nope.toml")
    p = tmp_path / "s.toml"
    p.write_text('[tracks]\nfile = "missing.tsv"\n')
    with pytest.raises(ConfigError):
        load_scenario(p)
    p.write_text("not = [toml")
    with pytest.raises(ParseError):
        load_scenario(p)


def test_manifest_validation(tmp_path):
    p = _write(tmp_path, '[tracks]\nfile = "t.tsv"\n', tracks="0 a 1 1\n1 a 2 2\n")
    m = tmp_path / "m.toml"
    m.write_text('scenarios = ["s.toml"]\nconditions = ["HO"]\nseed = 3\n')
    man = load_manifest(m)
    assert man.seed == 3 and man.conditions == ["HO"] and man.scenarios == [p]
    m.write_text('scenarios = ["s.toml"]\nconditions = ["XX"]\n')
    with pytest.raises(ConfigError):
        load_manifest(m)
    m.write_text('scenarios = ["absent.toml"]\n')
    with pytest.raises(ConfigError):
        load_manifest(m)


def test_fixture_scenarios_load():
    root = Path(__file__).resolve().parent.parent / "scenarios"
    for p in sorted(root.glob("*.toml")):
        if p.name.endswith("manifest.toml"):
            load_manifest(p)
        else:
            load_scenario(p)


def test_crossing_generator_is_seeded():
    a, b = crossing_scenario(5), crossing_scenario(5)
    assert sorted(a.tracks) == sorted(b.tracks)
    for k in a.tracks:
        np.testing.assert_array_equal(a.tracks[k].xy, b.tracks[k].xy)
    assert 3 <= len(a.tracks) <= 8
    a.validate()
