"""Navigation metrics: NE, TL, SR, OSR and SPL per episode, and run-level aggregation."""
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Sequence

import pandas as pd

from .geometry import distance
from .world import Episode, Pose, Scene, geodesic

logger = logging.getLogger(__name__)

SUCCESS_RADIUS = 3.0
METRIC_COLUMNS = ("NE", "TL", "SR", "OSR", "SPL")
TABLE_HEADERS = ("NE ↓", "TL", "SR ↑", "OSR ↑", "SPL ↑")


@dataclass
class TrajectoryLog:
    episode_id: str
    poses: List[Pose]
    decisions: List[dict] = field(default_factory=list)
    stopped: bool = False
    steps_used: int = 0
    aborted: bool = False


@dataclass(frozen=True)
class EpisodeResult:
    episode_id: str
    NE: float
    TL: float
    SR: int
    OSR: int
    SPL: float


def evaluate(traj: TrajectoryLog, episode: Episode, scene: Scene, euclidean: bool = False,
             radius: float = SUCCESS_RADIUS) -> EpisodeResult:
    """Score one trajectory. Raises DisconnectedError if a geodesic is undefined."""
    if not traj.poses:
        raise ValueError(f"trajectory {traj.episode_id} has no poses")

    def dist_to_goal(p: Pose) -> float:
        if euclidean:
            return distance(p.position, episode.goal)
        return geodesic(scene, p.position, episode.goal)

    ne = dist_to_goal(traj.poses[-1])
    tl = sum(distance(a.position, b.position) for a, b in zip(traj.poses, traj.poses[1:]))
    sr = int(traj.stopped and ne <= radius)
    osr = int(min(dist_to_goal(p) for p in traj.poses) <= radius)
    shortest = dist_to_goal(episode.start)
    spl = float(sr) if shortest == 0 else sr * shortest / max(shortest, tl)
    return EpisodeResult(traj.episode_id, ne, tl, sr, osr, spl)


def results_frame(results: Sequence[EpisodeResult]) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in results], columns=["episode_id", *METRIC_COLUMNS])


def aggregate(results: Sequence[EpisodeResult]) -> Dict[str, float]:
    """Means of NE and TL; SR, OSR and SPL as percentages."""
    if not results:
        raise ValueError("aggregate needs at least one episode result")
    df = results_frame(results)
    means = df[list(METRIC_COLUMNS)].mean()
    return {
        "episodes": len(df),
        "NE": float(means["NE"]),
        "TL": float(means["TL"]),
        "SR": float(means["SR"] * 100),
        "OSR": float(means["OSR"] * 100),
        "SPL": float(means["SPL"] * 100),
    }


def render_table(rows: Mapping[str, Mapping[str, float]]) -> str:
    """Fixed-width text table, one labelled row per condition."""
    label_width = max([len("Method"), *(len(k) for k in rows)])
    header = "Method".ljust(label_width) + "".join(h.rjust(9) for h in TABLE_HEADERS)
    lines = [header, "-" * len(header)]
    for label, row in rows.items():
        cells = "".join(f"{row[c]:9.2f}" for c in METRIC_COLUMNS)
        lines.append(label.ljust(label_width) + cells)
    return "\n".join(lines) + "\n"
