from dataclasses import replace

import pandas as pd
import pytest

from cognav.config import load_run_config
from cognav.errors import BackendUnavailable, ConfigError
from cognav.geometry import distance
from cognav.harness import ABLATIONS, Runner, resolve_subgoal, route_entry, run_ablation, run_episode
from cognav.instruction import SubInstruction
from cognav.llm_backend import Backend, ScriptedBackend
from cognav.memory_stream import MemoryStream
from cognav.prompts import ROLE_PLANNER, ROLES, parse_sections
from cognav.suite import SuiteFolder, generate_suite
from cognav.trace import TraceWriter
from cognav.world import DOOR_APPROACH, Room

STEP_ORDER = ["waypoints", "descriptions", "decision", "actions", "map-update",
              "reflection", "rationalization", "completion"]


class _FixedBackend(Backend):
    def __init__(self, reply):
        self.reply = reply

    def _complete(self, messages, params):
        return self.reply


class _DownBackend(Backend):
    def _complete(self, messages, params):
        raise BackendUnavailable("offline")


@pytest.fixture(scope="module")
def suite_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("suite")
    generate_suite(11, 3, path)
    return path


@pytest.fixture
def items(suite_dir):
    return SuiteFolder(suite_dir).load()


def small_config(**overrides):
    return load_run_config(overrides={"step_budget": 12, **overrides})


def run_one(item, config, backends=None, tmp_path=None):
    backends = backends or {role: ScriptedBackend(config.seed) for role in ROLES}
    trace = TraceWriter(tmp_path, item.episode.id)
    traj = run_episode(item.episode, item.scene, config, backends, MemoryStream(config.memory), trace)
    return traj, trace


# -------------------------------
# Single episodes
# -------------------------------
def test_trace_follows_step_order(items, tmp_path):
    traj, trace = run_one(items[0], small_config(), tmp_path=tmp_path)
    assert trace.records[0]["type"] == "start"
    assert trace.records[-1]["type"] == "end"
    assert trace.records[-1]["steps_used"] == traj.steps_used
    for step in range(1, traj.steps_used + 1):
        kinds = [r["type"] for r in trace.records if r["step"] == step and r["type"] in STEP_ORDER]
        assert kinds == STEP_ORDER[:len(kinds)]
        if step < traj.steps_used:
            assert kinds == STEP_ORDER
    decisions = [r for r in trace.records if r["type"] == "decision"]
    assert len(decisions) == sum(r["type"] == "map-update" for r in trace.records) == traj.steps_used
    assert len(traj.decisions) == traj.steps_used


def test_poses_match_action_records(items, tmp_path):
    traj, trace = run_one(items[0], small_config(), tmp_path=tmp_path)
    moved = sum(len(r["poses"]) for r in trace.records if r["type"] == "actions")
    assert len(traj.poses) == 1 + moved
    for pose in traj.poses:
        assert items[0].scene.is_free(pose.position)


def test_runs_are_deterministic(items, tmp_path):
    config = small_config(planner_noise=0.3, seed=4)
    _, first = run_one(items[1], config, tmp_path=tmp_path / "a")
    _, second = run_one(items[1], config, tmp_path=tmp_path / "b")
    assert first.records == second.records
    assert first.sidecar == second.sidecar
    assert first.lines == second.lines


def test_no_cognitive_map_sends_empty_history(items, tmp_path):
    _, full = run_one(items[0], small_config(), tmp_path=tmp_path / "full")
    _, bare = run_one(items[0], small_config(no_cognitive_map=True), tmp_path=tmp_path / "bare")
    assert any(parse_sections(x["request"])["History"] for x in full.sidecar)
    assert all(parse_sections(x["request"])["History"] == [] for x in bare.sidecar)


def test_no_reflection_skips_every_reflection(items, tmp_path):
    _, trace = run_one(items[0], small_config(no_reflection=True), tmp_path=tmp_path)
    reflections = [r for r in trace.records if r["type"] == "reflection"]
    assert reflections and all(r["skipped"] for r in reflections)


def test_planner_stop_ends_the_episode(items, tmp_path):
    config = small_config()
    backends = {role: ScriptedBackend() for role in ROLES}
    backends[ROLE_PLANNER] = _FixedBackend("STOP")
    traj, trace = run_one(items[0], config, backends, tmp_path)
    assert traj.stopped and not traj.aborted
    assert traj.steps_used == 0 and traj.decisions == []
    assert len(traj.poses) == 1
    kinds = [r["type"] for r in trace.records]
    assert kinds[-2:] == ["stop", "end"]
    assert "decision" not in kinds and "map-update" not in kinds
    assert trace.records[-1]["reason"] == "stop"


def test_planner_outage_aborts_the_episode(items, tmp_path):
    config = small_config()
    backends = {role: ScriptedBackend() for role in ROLES}
    backends[ROLE_PLANNER] = _DownBackend()
    traj, trace = run_one(items[0], config, backends, tmp_path)
    assert traj.aborted and not traj.stopped
    assert [r["type"] for r in trace.records][-2:] == ["abort", "end"]
    assert trace.records[-1]["reason"] == "planner-unavailable"


def test_route_entry():
    path = [(0.0, 0.5), (4.0, 0.5)]
    assert route_entry(path, Room(0, (1.0, 0.0, 3.0, 1.0), "kitchen")) == pytest.approx((1.75, 0.5), abs=0.06)
    assert route_entry(path, Room(0, (1.0, 0.0, 1.5, 1.0), "kitchen")) == pytest.approx((1.45, 0.5), abs=0.06)
    assert route_entry(path, Room(0, (0.0, 2.0, 4.0, 3.0), "kitchen")) is None


def test_resolve_subgoal(items):
    item = items[0]
    scene, episode = item.scene, item.episode
    room = scene.room_by_id(int(episode.sub_goal_annotations[0].region.split(":")[1]))
    to_room = SubInstruction(1, 0, f"Go to the {room.room_type}.", f"Go to the {room.room_type}.", "where")
    point = resolve_subgoal(scene, episode, to_room, episode.start)
    assert point == route_entry(episode.gt_path, room)
    assert room.contains(point)

    # a room the route never enters is approached through its nearest door
    off_route = replace(episode, gt_path=[episode.start.position])
    point = resolve_subgoal(scene, off_route, to_room, episode.start)
    assert room.contains(point)
    assert min(distance(point, d.position) for d in scene.doors_of(room.id)) == pytest.approx(DOOR_APPROACH)

    room_id, index = 0, 0
    obj = scene.room_by_id(room_id).objects[index]
    to_object = SubInstruction(2, 0, f"Find the {obj.label}.", f"Find the {obj.label}.", "what",
                               target=obj.label, region=f"object:{room_id}/{index}")
    assert resolve_subgoal(scene, episode, to_object, episode.start) == obj.position

    vague = SubInstruction(3, 0, "Keep going.", "Keep going.", "where")
    assert resolve_subgoal(scene, episode, vague, episode.start) == episode.goal


# -------------------------------
# Runs
# -------------------------------
def test_runner_writes_run_files(items, tmp_path):
    output = Runner(small_config(), tmp_path).run(items)
    for name in ("run_config.yaml", "memory.jsonl", "results.csv", "summary.txt"):
        assert (tmp_path / name).exists()
    for item in items:
        for suffix in (".jsonl", ".log", ".sidecar.jsonl"):
            assert (tmp_path / "traces" / f"{item.episode.id}{suffix}").exists()
    results = pd.read_csv(tmp_path / "results.csv")
    assert list(results["episode_id"]) == sorted(i.episode.id for i in items)
    assert sorted(results["Rank"]) == list(range(1, len(items) + 1))
    assert output.summary["episodes"] == len(items)
    assert 0 <= output.summary["SPL"] <= output.summary["SR"] <= output.summary["OSR"] <= 100
    assert "cognav" in (tmp_path / "summary.txt").read_text(encoding="utf-8")


def test_record_then_replay_reproduces_the_run(items, tmp_path):
    config = small_config(planner_noise=0.2)
    Runner(config, tmp_path / "rec", record=tmp_path / "rec" / "cassette.jsonl").run(items)
    Runner(config, tmp_path / "rep", replay_from=tmp_path / "rec").run(items)
    for item in items:
        name = f"{item.episode.id}.jsonl"
        assert (tmp_path / "rec" / "traces" / name).read_text() == (tmp_path / "rep" / "traces" / name).read_text()
    assert (tmp_path / "rec" / "results.csv").read_text() == (tmp_path / "rep" / "results.csv").read_text()


def test_parallel_matches_sequential_with_fresh_memory(items, tmp_path):
    config = small_config(fresh_memory_per_episode=True)
    sequential = Runner(config, tmp_path / "seq").run(items)
    parallel = Runner(config, tmp_path / "par", parallel=2).run(items)
    pd.testing.assert_frame_equal(sequential.results, parallel.results)


def test_parallel_needs_fresh_memory(tmp_path):
    with pytest.raises(ConfigError):
        Runner(small_config(), tmp_path, parallel=2)
    with pytest.raises(ConfigError):
        Runner(small_config(fresh_memory_per_episode=True), tmp_path, parallel=2, record=tmp_path / "c.jsonl")


def test_ablation_table_has_a_row_per_condition(items, tmp_path):
    table = run_ablation(items[:1], small_config(step_budget=4), tmp_path)
    labels = [line.split()[0] for line in table.splitlines()[2:]]
    assert labels == list(ABLATIONS)
    assert (tmp_path / "summary.txt").read_text(encoding="utf-8") == table
