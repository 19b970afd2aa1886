from pathlib import Path

import numpy as np
import pytest

from cognav.cognitive_map import (
    CandidateRecord,
    CognitiveMap,
    render_history_text,
    render_observation_text,
)
from cognav.config import RunConfig
from cognav.errors import MapError

GOLDENS = Path(__file__).parent / "goldens"


def three_place_map():
    cmap = CognitiveMap()
    p1 = cmap.add_place(1, (0.0, 0.0), "bedroom")
    cmap.add_object("bed", p1.id)
    p2 = cmap.add_place(2, (-0.5, 0.5), "bedroom")
    cmap.connect_places(p1.id, p2.id, 0.75, 8)
    cmap.add_object("lamp", p2.id)
    cmap.add_object("wardrobe", p2.id)
    p3 = cmap.add_place(3, (1.5, 0.5), "hallway")
    cmap.connect_places(p2.id, p3.id, 2.0, 3)
    return cmap, (p1, p2, p3)


def test_first_place():
    cmap = CognitiveMap()
    cmap.add_place(1, (0.0, 0.0), "kitchen")
    assert cmap.graph.number_of_nodes() == 1
    assert cmap.graph.number_of_edges() == 0


def test_time_labels_must_be_consecutive():
    cmap = CognitiveMap()
    cmap.add_place(1, (0.0, 0.0), "kitchen")
    with pytest.raises(MapError):
        cmap.add_place(3, (1.0, 0.0), "kitchen")


def test_objects_are_scoped_per_place():
    cmap = CognitiveMap()
    p1 = cmap.add_place(1, (0.0, 0.0), "living room")
    p2 = cmap.add_place(2, (1.0, 0.0), "living room")
    a = cmap.add_object("sofa", p1.id)
    b = cmap.add_object("sofa", p2.id)
    assert a.id != b.id
    assert cmap.graph.degree(a.id) == 1
    assert cmap.graph.edges[p1.id, a.id]["weight"] == 1
    with pytest.raises(MapError):
        cmap.add_object("sofa", 99)


def test_connect_places():
    cmap, (p1, p2, _) = three_place_map()
    edge = cmap.graph.edges[p1.id, p2.id]["edge"]
    assert (edge.distance_weight, edge.direction_weight, edge.sector_name) == (0.75, 8, "Left Front")
    # re-connecting overwrites, edge ids stay sorted
    assert cmap.connect_places(p2.id, p1.id, 1.0, 4) == (p1.id, p2.id)
    assert cmap.graph.edges[p1.id, p2.id]["edge"].origin == p2.id


@pytest.mark.parametrize("a_b, dist, direction", [
    ("self", 1.0, 1),
    ("pair", 3.25, 1),
    ("pair", 0.1, 1),
    ("pair", 1.0, 9),
    ("pair", 1.0, 2.0),
])
def test_connect_places_rejects_bad_edges(a_b, dist, direction):
    cmap, (p1, p2, _) = three_place_map()
    b = p1.id if a_b == "self" else p2.id
    with pytest.raises(MapError):
        cmap.connect_places(p1.id, b, dist, direction)


def test_history_chain_order():
    cmap, (p1, p2, p3) = three_place_map()
    chain = cmap.history_chain()
    assert [s.place for s in chain] == [p1, p2, p3]
    assert chain[0].edge is None
    assert (chain[1].edge.a, chain[1].edge.b) == (p1.id, p2.id)
    assert chain[2].objects == ()
    assert CognitiveMap().history_chain() == []


def test_history_text_matches_golden():
    cmap, _ = three_place_map()
    text = render_history_text(cmap.history_chain())
    assert text + "\n" == (GOLDENS / "history.txt").read_text(encoding="utf-8")
    assert render_history_text([]) == ""


def test_observation_chain_lists_unvisited_candidates():
    cmap, (p1, p2, p3) = three_place_map()
    cmap.record_candidates(p1.id, [
        CandidateRecord(i, "Front", 0.25 * i, (0.0, 0.25 * i)) for i in range(1, 8)
    ])
    cmap.mark_visited(p1.id, 3)
    entries = cmap.observation_chain(p2.id, depth=2)
    assert [e.place.t for e in entries] == [1, 2]
    assert [c.index for c in entries[0].candidates] == [1, 2, 4, 5, 6, 7]


def test_observation_chain_covers_current_and_previous_place():
    cmap, (_, _, p3) = three_place_map()
    p4 = cmap.add_place(4, (2.5, 0.5), "hallway")
    cmap.connect_places(p3.id, p4.id, 1.0, 1)
    assert [e.place.t for e in cmap.observation_chain(p4.id, depth=RunConfig().observation_depth)] == [3, 4]
    assert [e.place.t for e in cmap.observation_chain(p4.id, depth=1)] == [4]
    assert [e.place.t for e in cmap.observation_chain(p3.id, depth=3)] == [1, 2, 3]
    assert cmap.observation_chain(p4.id, depth=0) == []


def test_observation_text():
    cmap, (p1, _, p3) = three_place_map()
    cmap.record_candidates(p1.id, [CandidateRecord(1, "Front", 0.75, (0.0, 0.75)),
                                   CandidateRecord(2, "Behind", 1.5, (0.0, -1.5))])
    cmap.mark_visited(p1.id, 1)
    assert render_observation_text(cmap.observation_chain(p3.id, depth=3)) == [
        "t=1 in bedroom: unexplored Behind 1.5m",
        "t=2 in bedroom: unexplored none",
        "t=3 in hallway: unexplored none",
    ]


def test_single_place_observation():
    cmap = CognitiveMap()
    p1 = cmap.add_place(1, (0.0, 0.0), "kitchen")
    cmap.add_object("stove", p1.id)
    entries = cmap.observation_chain(p1.id)
    assert len(entries) == 1 and entries[0].objects == ("stove",)
    with pytest.raises(MapError):
        cmap.observation_chain(42)


def test_mark_visited_unknown_candidate():
    cmap, (p1, _, _) = three_place_map()
    with pytest.raises(MapError):
        cmap.mark_visited(p1.id, 1)


def test_serialize_is_a_fixed_point():
    cmap, (p1, _, _) = three_place_map()
    cmap.record_candidates(p1.id, [CandidateRecord(1, "Front", 0.75, (0.0, 0.75), "In (Front), See (), Is (bedroom)")])
    cmap.mark_visited(p1.id, 1)
    text = cmap.serialize()
    parsed = CognitiveMap.parse(text)
    assert parsed.serialize() == text
    assert render_history_text(parsed.history_chain()) == render_history_text(cmap.history_chain())


def assert_map_invariants(cmap):
    for node, data in cmap.graph.nodes(data=True):
        if data["kind"] == "object":
            assert cmap.graph.degree(node) == 1
            (_, _, edge), = cmap.graph.edges(node, data=True)
            assert edge["weight"] == 1
    for _, _, data in cmap.graph.edges(data=True):
        if data["kind"] == "place":
            assert 0.25 <= data["edge"].distance_weight <= 3.0
            assert data["edge"].direction_weight in range(1, 9)
    times = [step.place.t for step in cmap.history_chain()]
    assert times == sorted(set(times))
    text = cmap.serialize()
    assert CognitiveMap.parse(text).serialize() == text


def test_random_build_sequences_keep_the_map_invariants():
    rng = np.random.default_rng(0)
    rooms = ["bedroom", "hallway", "kitchen"]
    cmap = CognitiveMap()
    places = [cmap.add_place(1, (0.0, 0.0), "bedroom").id]
    for op in range(500):
        kind = rng.integers(4)
        if kind == 0:
            position = tuple(float(v) for v in rng.uniform(-10, 10, size=2))
            places.append(cmap.add_place(cmap.latest_t() + 1, position, rooms[int(rng.integers(3))]).id)
        elif kind == 1:
            cmap.add_object(f"object {op}", places[int(rng.integers(len(places)))])
        elif kind == 2 and len(places) > 1:
            a, b = (places[int(i)] for i in rng.choice(len(places), size=2, replace=False))
            distance = float(rng.uniform(0.0, 4.0))
            direction = int(rng.integers(0, 10))
            if 0.25 <= distance <= 3.0 and 1 <= direction <= 8:
                cmap.connect_places(a, b, distance, direction)
            else:
                before = cmap.serialize()
                with pytest.raises(MapError):
                    cmap.connect_places(a, b, distance, direction)
                assert cmap.serialize() == before
        elif kind == 3:
            place = places[int(rng.integers(len(places)))]
            cmap.record_candidates(place, [
                CandidateRecord(i, "Front", 0.25 * i, (float(i), 0.0), f"In (Front) {i}") for i in range(1, 4)
            ])
            cmap.mark_visited(place, int(rng.integers(1, 4)))
        if op % 50 == 0:
            assert_map_invariants(cmap)
    assert_map_invariants(cmap)
