from pathlib import Path

import pytest

from cognav.errors import BackendUnavailable
from cognav.instruction import (
    InstructionState,
    SubInstruction,
    attach_annotations,
    check_complete,
    extract_target,
    guidance,
    judge_complete,
    rationalize,
    split,
)
from cognav.llm_backend import Backend, ScriptedBackend
from cognav.world import OBJECT_LABELS, ROOM_TYPES, SubGoal

GOLDENS = Path(__file__).parent / "goldens"

ROUTE_INSTRUCTION = (
    "Exit the living room and turn right into the kitchen. Turn left at the end of the counter "
    "and wait in the room across the hallway slightly to the left."
)


class _DownBackend(Backend):
    def _complete(self, messages, params):
        raise BackendUnavailable("offline")


class _FixedBackend(Backend):
    def __init__(self, reply):
        self.reply = reply

    def _complete(self, messages, params):
        return self.reply


def where(target, i=1):
    return SubInstruction(i, 0, f"Go to the {target}.", f"Go to the {target}.", "where", target=target)


def what(target, i=1):
    return SubInstruction(i, 0, f"Find the {target}.", f"Find the {target}.", "what", target=target)


def test_split_route_instruction():
    subs = split(ROUTE_INSTRUCTION, ScriptedBackend(), ROOM_TYPES, OBJECT_LABELS)
    assert len(subs) == 4
    assert [s.i for s in subs] == [1, 2, 3, 4]
    assert all(s.j == 0 for s in subs)
    assert (subs[0].kind, subs[0].target) == ("where", "living room")
    assert (subs[2].kind, subs[2].target) == ("what", "counter")


def test_split_single_clause_is_identity():
    subs = split("Walk to the sofa.", ScriptedBackend())
    assert [s.text for s in subs] == ["Walk to the sofa."]


def test_split_falls_back_to_clause_rule():
    subs = split(ROUTE_INSTRUCTION, _DownBackend())
    assert len(subs) == 4


def test_attach_annotations_only_when_counts_match():
    subs = split("Exit the bedroom and turn left into the kitchen. Find the stove.", ScriptedBackend(),
                 ROOM_TYPES, OBJECT_LABELS)
    notes = [SubGoal("where", "kitchen", "room:1"), SubGoal("where", "kitchen", "room:1"),
             SubGoal("what", "stove", "object:1/0")]
    tagged = attach_annotations(subs, notes)
    assert [s.target for s in tagged] == ["kitchen", "kitchen", "stove"]
    assert tagged[2].region == "object:1/0"
    assert attach_annotations(subs, notes[:2]) == subs


def test_extract_target_prefers_earliest_then_longest():
    assert extract_target("Find the alarm clock near the bed", OBJECT_LABELS) == "alarm clock"
    assert extract_target("Head toward kitchen; currently in bedroom", ROOM_TYPES) == "kitchen"
    assert extract_target("nothing to see", ROOM_TYPES) is None


def test_rationalize_scripted_template():
    sub = SubInstruction(1, 0, "Exit the living room.", "Exit the living room.", "where", target="kitchen",
                         history=("Exit the living room.",))
    revised = rationalize(sub, ["In (Front), See (stove), Is (kitchen)"], "Exit the living room.",
                          ScriptedBackend(), current_room="living room")
    assert revised.text == "Head toward kitchen; currently in living room"
    assert revised.j == 1
    assert revised.history == ("Exit the living room.", "Head toward kitchen; currently in living room")


def test_rationalize_keeps_text_on_failure():
    sub = where("kitchen")
    revised = rationalize(sub, [], sub.text, _DownBackend(), current_room="hallway")
    assert revised.text == sub.text
    assert revised.j == 1


def test_instruction_state_moves_forward_only():
    state = InstructionState("x", [where("kitchen", 1), what("stove", 2)])
    assert state.active.status == "active"
    assert state.advance() is False
    assert state.current == 2 and state.subs[0].status == "complete"
    with pytest.raises(ValueError):
        state.update_active(where("kitchen", 1))
    assert state.advance() is True
    assert state.finished


@pytest.mark.parametrize("sub, room, visible, goal_distance, final, expected", [
    (where("kitchen"), "kitchen", [], 10.0, False, True),
    (what("counter"), "kitchen", [("stove", 1.0)], 10.0, False, False),
    (what("counter"), "kitchen", [("counter", 2.1)], 2.1, True, True),
    (what("counter"), "kitchen", [("counter", 2.1)], 4.0, True, False),
])
def test_check_complete(sub, room, visible, goal_distance, final, expected):
    assert check_complete(sub, room, visible, goal_distance, final) is expected


def test_judge_complete():
    sub = where("kitchen")
    assert judge_complete(sub, "kitchen", [], 10.0, ScriptedBackend()) is True
    assert judge_complete(sub, "hallway", [], 10.0, _FixedBackend("Yes, clearly.")) is True
    assert judge_complete(sub, "kitchen", [], 10.0, _FixedBackend("perhaps")) is True
    assert judge_complete(sub, "hallway", [], 10.0, _DownBackend()) is False


def test_guidance_matches_golden():
    lines = [guidance(where("kitchen")), guidance(what("counter"))]
    assert "".join(line + "\n" for line in lines) == (GOLDENS / "guidance.txt").read_text(encoding="utf-8")
