# perception.py
import logging
import re
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from sklearn.metrics.pairwise import pairwise_distances

from .errors import BackendError
from .llm_backend import Backend, CompletionParams, chat
from .prompts import ROLE_DESCRIBER, render_hint, render_sections
from .world import Scene, Waypoint

logger = logging.getLogger(__name__)

DESCRIBER_MODES = ("oracle", "generative")

_DESCRIPTION_RE = re.compile(r"In \(([^)]*)\),\s*See \(([^)]*)\),\s*Is \(([^)]*)\)")


@dataclass(frozen=True)
class SceneDescription:
    waypoint_index: int
    sector_name: str
    what: Tuple[str, ...]
    where: str


def format_description(desc: SceneDescription) -> str:
    return f"In ({desc.sector_name}), See ({', '.join(desc.what)}), Is ({desc.where})"


def parse_description(text: str, waypoint_index: int = 0) -> Optional[SceneDescription]:
    match = _DESCRIPTION_RE.search(text)
    if match is None:
        return None
    sector, what, where = (g.strip() for g in match.groups())
    labels = tuple(w.strip() for w in what.split(",") if w.strip())
    return SceneDescription(waypoint_index, sector, labels, where)


class SceneDescriber:

    def __init__(self, mode: str = "oracle", backend: Optional[Backend] = None,
                 radius: float = 2.0, cap: int = 10, hints: bool = True,
                 params: Optional[CompletionParams] = None):
        """
        Dual-channel describer: "what" lists landmark objects near the waypoint,
        "where" names the room it lies in.
        """
        if mode not in DESCRIBER_MODES:
            raise ValueError(f"Unknown describer mode {mode!r}")
        if mode == "generative" and backend is None:
            raise ValueError("generative mode needs a backend")
        self.mode = mode
        self.backend = backend
        self.radius = radius
        self.cap = cap
        self.hints = hints
        self.params = params

    def nearby_objects(self, scene: Scene, point, radius: Optional[float] = None) -> List[Tuple[str, float]]:
        """
        Objects of the room containing ``point`` within ``radius``, nearest first.
        """
        radius = self.radius if radius is None else radius
        room = scene.room_at(point)
        if not room.objects:
            return []
        positions = np.array([o.position for o in room.objects], dtype=float)
        dists = pairwise_distances(np.array([point], dtype=float), positions)[0]
        found = [(o.label, float(d)) for o, d in zip(room.objects, dists) if d <= radius]
        return sorted(found, key=lambda ld: (ld[1], ld[0]))

    def describe_oracle(self, waypoint: Waypoint, scene: Scene) -> SceneDescription:
        labels = [label for label, _ in self.nearby_objects(scene, waypoint.position)][:self.cap]
        where = scene.room_at(waypoint.position).room_type
        return SceneDescription(waypoint.index, waypoint.sector_name, tuple(labels), where)

    def describe_generative(self, waypoint: Waypoint, scene: Scene) -> SceneDescription:
        """
        Ask the describer backend; falls back to the oracle on transport or parse failure.
        """
        oracle = self.describe_oracle(waypoint, scene)
        hint = ""
        if self.hints:
            hint = render_hint({"sector": oracle.sector_name, "what": ", ".join(oracle.what),
                                "where": oracle.where})
        user = render_sections(
            [("Waypoint", [f"Waypoint {waypoint.index}: {waypoint.sector_name}, {waypoint.distance:g} m"])],
            hint=hint,
        )
        try:
            reply = self.backend.complete(chat(ROLE_DESCRIBER, user), self.params)
        except BackendError as e:
            logger.warning(f"⚠️ Describer backend failed for waypoint {waypoint.index}, using oracle: {e}")
            return oracle
        parsed = parse_description(reply, waypoint.index)
        if parsed is None or parsed.where not in scene.room_type_vocab:
            logger.warning(f"⚠️ Could not parse description for waypoint {waypoint.index}, using oracle")
            return oracle
        return SceneDescription(waypoint.index, waypoint.sector_name, parsed.what[:self.cap], parsed.where)

    def describe(self, waypoint: Waypoint, scene: Scene) -> SceneDescription:
        if self.mode == "generative":
            return self.describe_generative(waypoint, scene)
        return self.describe_oracle(waypoint, scene)

    def describe_all(self, waypoints: Sequence[Waypoint], scene: Scene) -> List[SceneDescription]:
        """
        Describe every candidate; a failing candidate degrades to its oracle description.
        """
        out = []
        for wp in waypoints:
            try:
                out.append(self.describe(wp, scene))
            except Exception as e:
                logger.error(f"❌ Describing waypoint {wp.index} failed: {e}")
                out.append(self.describe_oracle(wp, scene))
        return out
