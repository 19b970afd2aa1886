"""Topological cognitive map of visited places and the objects seen from them.

Backed by a ``networkx.Graph``. Place nodes carry a time label t (1, 2, 3, ...), object nodes hang
off the place they were seen from, and place-place edges carry a metric distance plus an
egocentric sector label (1..8).
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx

from .errors import MapError
from .geometry import SECTOR_NAMES, Point
from .world import DIST_STEP, MAX_WAYPOINT_DIST

logger = logging.getLogger(__name__)

_WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class PlaceNode:
    id: int
    t: int
    position: Point
    room_type: str


@dataclass(frozen=True)
class ObjectNode:
    id: int
    label: str
    host_place: int


@dataclass(frozen=True)
class PlaceEdge:
    a: int
    b: int
    distance_weight: float
    direction_weight: int
    origin: int  # place the move started from

    @property
    def sector_name(self) -> str:
        return SECTOR_NAMES[self.direction_weight - 1]


@dataclass
class CandidateRecord:
    index: int
    sector_name: str
    distance: float
    position: Point
    description: str = ""
    visited: bool = False


@dataclass(frozen=True)
class HistoryStep:
    place: PlaceNode
    edge: Optional[PlaceEdge]  # edge that led here; None for t = 1
    objects: Tuple[str, ...]


@dataclass(frozen=True)
class ObservationEntry:
    place: PlaceNode
    candidates: Tuple[CandidateRecord, ...]
    objects: Tuple[str, ...]


@dataclass
class CognitiveMap:
    graph: nx.Graph = field(default_factory=nx.Graph)
    candidates: Dict[int, List[CandidateRecord]] = field(default_factory=dict)
    _next_id: int = 0

    # ---- construction
    def _new_id(self) -> int:
        node_id = self._next_id
        self._next_id += 1
        return node_id

    def places(self) -> List[PlaceNode]:
        nodes = [d["node"] for _, d in self.graph.nodes(data=True) if d["kind"] == "place"]
        return sorted(nodes, key=lambda p: p.t)

    def place(self, place_id: int) -> PlaceNode:
        data = self.graph.nodes.get(place_id)
        if data is None or data["kind"] != "place":
            raise MapError(f"Unknown place id {place_id}")
        return data["node"]

    def objects_of(self, place_id: int) -> List[ObjectNode]:
        self.place(place_id)
        found = [
            self.graph.nodes[n]["node"] for n in self.graph.neighbors(place_id)
            if self.graph.nodes[n]["kind"] == "object"
        ]
        return sorted(found, key=lambda o: o.id)

    def latest_t(self) -> int:
        places = self.places()
        return places[-1].t if places else 0

    def add_place(self, t: int, position: Point, room_type: str) -> PlaceNode:
        expected = self.latest_t() + 1
        if t != expected:
            raise MapError(f"Time label {t} out of order, expected {expected}")
        node = PlaceNode(self._new_id(), t, (float(position[0]), float(position[1])), room_type)
        self.graph.add_node(node.id, kind="place", node=node)
        return node

    def add_object(self, label: str, host_place: int) -> ObjectNode:
        self.place(host_place)
        node = ObjectNode(self._new_id(), label, host_place)
        self.graph.add_node(node.id, kind="object", node=node)
        self.graph.add_edge(host_place, node.id, kind="object", weight=1)
        return node

    def connect_places(self, a: int, b: int, distance_weight: float, direction_weight: int,
                       origin: Optional[int] = None) -> Tuple[int, int]:
        """Insert (or overwrite) the undirected edge between two places."""
        self.place(a)
        self.place(b)
        if a == b:
            raise MapError("Cannot connect a place to itself")
        if not DIST_STEP - _WEIGHT_TOL <= distance_weight <= MAX_WAYPOINT_DIST + _WEIGHT_TOL:
            raise MapError(f"Distance weight {distance_weight} outside [{DIST_STEP}, {MAX_WAYPOINT_DIST}]")
        if not isinstance(direction_weight, int) or not 1 <= direction_weight <= 8:
            raise MapError(f"Direction weight must be an int in 1..8, got {direction_weight!r}")
        edge = PlaceEdge(min(a, b), max(a, b), float(distance_weight), direction_weight,
                         a if origin is None else origin)
        self.graph.add_edge(a, b, kind="place", edge=edge)
        return edge.a, edge.b

    def record_candidates(self, place_id: int, candidates: Sequence[CandidateRecord]) -> None:
        self.place(place_id)
        self.candidates[place_id] = list(candidates)

    def mark_visited(self, place_id: int, index: int) -> None:
        for c in self.candidates.get(place_id, []):
            if c.index == index:
                c.visited = True
                return
        raise MapError(f"Place {place_id} has no candidate {index}")

    # ---- queries
    def _incoming_edge(self, place: PlaceNode, previous: Optional[PlaceNode]) -> Optional[PlaceEdge]:
        if previous is None or not self.graph.has_edge(previous.id, place.id):
            return None
        return self.graph.edges[previous.id, place.id]["edge"]

    def history_chain(self) -> List[HistoryStep]:
        chain, previous = [], None
        for place in self.places():
            labels = tuple(o.label for o in self.objects_of(place.id))
            chain.append(HistoryStep(place, self._incoming_edge(place, previous), labels))
            previous = place
        return chain

    def observation_chain(self, current: int, depth: int = 2) -> List[ObservationEntry]:
        """The ``depth`` most recent places up to ``current`` (by time label) with their unvisited candidates."""
        now = self.place(current)
        entries = []
        for place in self.places():
            if not now.t - depth < place.t <= now.t:
                continue
            open_candidates = tuple(c for c in self.candidates.get(place.id, []) if not c.visited)
            labels = tuple(o.label for o in self.objects_of(place.id))
            entries.append(ObservationEntry(place, open_candidates, labels))
        return entries

    # ---- persistence
    def serialize(self) -> str:
        lines = []
        for place in self.places():
            lines.append({"record": "place", "id": place.id, "t": place.t,
                          "x": place.position[0], "y": place.position[1],
                          "room_type": place.room_type})
        objects = sorted(
            (d["node"] for _, d in self.graph.nodes(data=True) if d["kind"] == "object"),
            key=lambda o: o.id,
        )
        for obj in objects:
            lines.append({"record": "object", "id": obj.id, "label": obj.label, "host": obj.host_place})
        edges = sorted(
            (d["edge"] for _, _, d in self.graph.edges(data=True) if d["kind"] == "place"),
            key=lambda e: (e.a, e.b),
        )
        for e in edges:
            lines.append({"record": "edge", "a": e.a, "b": e.b, "distance": e.distance_weight,
                          "direction": e.direction_weight, "origin": e.origin})
        for place_id in sorted(self.candidates):
            for c in self.candidates[place_id]:
                lines.append({"record": "candidate", "place": place_id, "index": c.index,
                              "sector": c.sector_name, "distance": c.distance,
                              "x": c.position[0], "y": c.position[1],
                              "description": c.description, "visited": c.visited})
        lines.append({"record": "counter", "next_id": self._next_id})
        return "".join(json.dumps(line, sort_keys=True) + "\n" for line in lines)

    @classmethod
    def parse(cls, text: str) -> "CognitiveMap":
        cmap = cls()
        for raw in text.splitlines():
            if not raw.strip():
                continue
            r = json.loads(raw)
            kind = r["record"]
            if kind == "place":
                node = PlaceNode(r["id"], r["t"], (r["x"], r["y"]), r["room_type"])
                cmap.graph.add_node(node.id, kind="place", node=node)
            elif kind == "object":
                node = ObjectNode(r["id"], r["label"], r["host"])
                cmap.graph.add_node(node.id, kind="object", node=node)
                cmap.graph.add_edge(node.host_place, node.id, kind="object", weight=1)
            elif kind == "edge":
                edge = PlaceEdge(r["a"], r["b"], r["distance"], r["direction"], r["origin"])
                cmap.graph.add_edge(edge.a, edge.b, kind="place", edge=edge)
            elif kind == "candidate":
                cmap.candidates.setdefault(r["place"], []).append(CandidateRecord(
                    r["index"], r["sector"], r["distance"], (r["x"], r["y"]),
                    r["description"], r["visited"],
                ))
            elif kind == "counter":
                cmap._next_id = r["next_id"]
            else:
                raise MapError(f"Unknown map record {kind!r}")
        return cmap


def render_history_text(chain: Sequence[HistoryStep]) -> str:
    """One line per visited place, oldest first."""
    lines = []
    for step in chain:
        parts = []
        if step.edge is not None:
            parts.append(f"Go ({step.edge.sector_name})")
        parts.append(f"Is ({step.place.room_type})")
        parts.append(f"See ({', '.join(step.objects)})")
        lines.append(", ".join(parts))
    return "\n".join(lines)


def render_observation_text(entries: Sequence[ObservationEntry]) -> List[str]:
    lines = []
    for entry in entries:
        options = "; ".join(
            f"{c.sector_name} {c.distance:g}m" for c in entry.candidates
        ) or "none"
        lines.append(f"t={entry.place.t} in {entry.place.room_type}: unexplored {options}")
    return lines
