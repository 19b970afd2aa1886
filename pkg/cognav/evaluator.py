# evaluator.py
import logging
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Union

import pandas as pd

from .errors import DisconnectedError
from .metrics import EpisodeResult, TrajectoryLog, aggregate, evaluate, render_table, results_frame
from .suite import SuiteFolder, SuiteItem
from .trace import TraceReader

logger = logging.getLogger(__name__)


class RunEvaluator:
    """
    Scores trajectories against their episodes. Episodes whose goal is
    unreachable are excluded from the table with a warning.
    """

    def __init__(self, euclidean: bool = False):
        self.euclidean = euclidean
        self.episode_results: List[EpisodeResult] = []
        self.excluded: List[str] = []

    def evaluate_run(self, items: Sequence[SuiteItem], trajectories: Mapping[str, TrajectoryLog]) -> pd.DataFrame:
        self.episode_results, self.excluded = [], []
        for item in items:
            episode = item.episode
            traj = trajectories.get(episode.id)
            if traj is None:
                logger.warning(f"⚠️ No trajectory for episode {episode.id}")
                self.excluded.append(episode.id)
                continue
            try:
                self.episode_results.append(evaluate(traj, episode, item.scene, self.euclidean))
            except (DisconnectedError, ValueError) as e:
                logger.warning(f"⚠️ Episode {episode.id} excluded from metrics: {e}")
                self.excluded.append(episode.id)

        df = results_frame(self.episode_results)
        df = df.sort_values("episode_id").reset_index(drop=True)
        if not df.empty:
            df["Rank"] = df["SPL"].rank(ascending=False, method="first").astype(int)
        return df

    def summary(self, label: str) -> str:
        if not self.episode_results:
            return ""
        return render_table({label: aggregate(self.episode_results)})

    def evaluate_dir(self, suite_dir: Union[str, Path], run_dir: Union[str, Path],
                     label: str = "cognav") -> pd.DataFrame:
        """Re-score a finished run from its traces and write results.csv and summary.txt."""
        items = SuiteFolder(suite_dir).load()
        trajectories: Dict[str, TrajectoryLog] = TraceReader(run_dir).load_all()
        df = self.evaluate_run(items, trajectories)
        out = Path(run_dir)
        df.to_csv(out / "results.csv", index=False)
        table = self.summary(label)
        if table:
            (out / "summary.txt").write_text(table, encoding="utf-8")
        logger.info(f"✅ Evaluated {len(df)} episodes ({len(self.excluded)} excluded)")
        return df
