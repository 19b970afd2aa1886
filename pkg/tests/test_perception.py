from pathlib import Path

from cognav.errors import BackendUnavailable
from cognav.llm_backend import Backend, ScriptedBackend
from cognav.perception import (
    SceneDescriber,
    SceneDescription,
    format_description,
    parse_description,
)
from cognav.world import Pose, SceneObject, Waypoint, open_room_scene, predict_waypoints

GOLDENS = Path(__file__).parent / "goldens"


class _FixedBackend(Backend):
    def __init__(self, reply):
        self.reply = reply

    def _complete(self, messages, params):
        return self.reply


class _DownBackend(Backend):
    def _complete(self, messages, params):
        raise BackendUnavailable("offline")


def waypoint_at(position, index=1):
    return Waypoint(index, 0, 1, "Front", 1.0, position)


def test_format_description_matches_golden():
    lines = [
        format_description(SceneDescription(1, "Right Front", ("counter", "stove"), "kitchen")),
        format_description(SceneDescription(2, "Front", (), "hallway")),
    ]
    assert "".join(line + "\n" for line in lines) == (GOLDENS / "descriptions.txt").read_text(encoding="utf-8")


def test_parse_description_recovers_fields():
    desc = SceneDescription(4, "Left Side", ("sofa", "coffee table"), "living room")
    assert parse_description(format_description(desc), 4) == desc
    assert parse_description("I see a sofa") is None


def test_oracle_description_lists_nearest_objects(box_scene):
    describer = SceneDescriber(radius=2.0)
    desc = describer.describe_oracle(waypoint_at((3.125, 4.125)), box_scene)
    assert desc.what == ("sofa",)
    assert desc.where == "living room"
    assert desc.sector_name == "Front"


def test_empty_room_description():
    scene = open_room_scene(5.0, 5.0, "hallway")
    desc = SceneDescriber().describe_oracle(waypoint_at((2.0, 2.0)), scene)
    assert desc.what == () and desc.where == "hallway"


def test_object_cap_keeps_nearest_first():
    objects = [SceneObject(f"item {i:02d}", (1.125 + 0.1 * i, 1.125)) for i in range(15)]
    scene = open_room_scene(5.0, 5.0, "playroom", objects=objects)
    desc = SceneDescriber(radius=3.0, cap=10).describe_oracle(waypoint_at((1.125, 1.125)), scene)
    assert desc.what == tuple(f"item {i:02d}" for i in range(10))


def test_generative_description_with_scripted_hints(box_scene):
    describer = SceneDescriber("generative", ScriptedBackend(), radius=2.0)
    wp = waypoint_at((3.125, 4.125))
    assert describer.describe(wp, box_scene) == describer.describe_oracle(wp, box_scene)


def test_generative_description_falls_back_to_oracle(box_scene):
    wp = waypoint_at((3.125, 4.125))
    oracle = SceneDescriber().describe_oracle(wp, box_scene)
    unknown_room = SceneDescriber("generative", _FixedBackend("In (Front), See (sofa), Is (garage)"))
    assert unknown_room.describe(wp, box_scene) == oracle
    assert SceneDescriber("generative", _DownBackend()).describe(wp, box_scene) == oracle


def test_describe_all_keeps_candidate_order(box_scene):
    waypoints = predict_waypoints(box_scene, Pose(5.25, 5.25, 0))
    descriptions = SceneDescriber().describe_all(waypoints, box_scene)
    assert [d.waypoint_index for d in descriptions] == [w.index for w in waypoints]
    assert [d.sector_name for d in descriptions] == [w.sector_name for w in waypoints]
