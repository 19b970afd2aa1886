"""Top-down plot of a scene with the reference route and the agent's trajectory."""
import logging
from pathlib import Path
from typing import Optional, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import TrajectoryLog  # noqa: E402
from .world import CELL, Episode, Scene  # noqa: E402

logger = logging.getLogger(__name__)


def plot_episode(scene: Scene, episode: Episode, traj: Optional[TrajectoryLog],
                 out_path: Union[str, Path]) -> Path:
    nx_cells, ny_cells = scene.occupancy.shape
    fig, ax = plt.subplots(figsize=(8, 8))
    ax.imshow(scene.occupancy.T, origin="lower", cmap="Greys",
              extent=(0, nx_cells * CELL, 0, ny_cells * CELL))
    for room in scene.rooms:
        cx, cy = room.center
        ax.text(cx, cy, room.room_type, ha="center", va="center", fontsize=7, color="tab:gray")
    for _, _, obj in scene.iter_objects():
        ax.plot(*obj.position, ".", color="tab:olive", markersize=3)

    ref = list(zip(*episode.gt_path))
    ax.plot(ref[0], ref[1], "--", color="tab:blue", label="reference")
    if traj is not None and traj.poses:
        xs = [p.x for p in traj.poses]
        ys = [p.y for p in traj.poses]
        ax.plot(xs, ys, "-", color="tab:red", label="agent")
        ax.plot(xs[-1], ys[-1], "x", color="tab:red")
    ax.plot(*episode.start.position, "xg", label="start")
    ax.plot(*episode.goal, "ob", label="goal")
    ax.add_patch(plt.Circle(episode.goal, 3.0, color="tab:blue", fill=False, linestyle=":"))

    ax.set_aspect("equal")
    ax.set_title(episode.id)
    ax.legend(loc="upper right", fontsize=7)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    logger.info(f"✅ Plot saved to {out}")
    return out
