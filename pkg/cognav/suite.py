# suite.py
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Union

import numpy as np

from .errors import CogNavError, ConfigError
from .world import (
    Episode,
    Scene,
    episode_to_records,
    episodes_from_records,
    generate_episode,
    generate_scene,
    scene_from_records,
    scene_to_records,
)

logger = logging.getLogger(__name__)

SCENE_DIR = "scenes"
EPISODE_DIR = "episodes"
_SCENE_ATTEMPTS = 3


def write_jsonl(path: Union[str, Path], records: Iterable[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record) + "\n")


def read_jsonl(path: Union[str, Path]) -> List[dict]:
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


@dataclass
class SuiteItem:
    name: str
    episode: Episode
    scene: Scene


# -------------------------------
# Suite generation
# -------------------------------
def generate_suite(seed: int, n_episodes: int, out_dir: Union[str, Path],
                   min_rooms: int = 3, max_rooms: int = 6) -> int:
    """Write one scene file and one episode file per episode; returns the number written."""
    if n_episodes < 0:
        raise ValueError("n_episodes must be non-negative")
    if not 2 <= min_rooms <= max_rooms:
        raise ValueError(f"invalid room range [{min_rooms}, {max_rooms}]")
    out = Path(out_dir)
    written = 0
    for i in range(n_episodes):
        rng = np.random.default_rng([seed, i])
        name = f"{i:04d}"
        for attempt in range(1, _SCENE_ATTEMPTS + 1):
            n_rooms = int(rng.integers(min_rooms, max_rooms + 1))
            scene_seed = int(rng.integers(0, 2**31 - 1))
            try:
                scene = generate_scene(scene_seed, n_rooms)
                episode = generate_episode(scene, i, episode_id=f"ep-{name}")
            except CogNavError as e:
                logger.warning(f"⚠️ Episode {name} attempt {attempt} failed: {e}")
                continue
            write_jsonl(out / SCENE_DIR / f"scene-{name}.jsonl", scene_to_records(scene))
            write_jsonl(out / EPISODE_DIR / f"ep-{name}.jsonl", episode_to_records(episode))
            written += 1
            break
        else:
            logger.error(f"❌ Episode {name} skipped after {_SCENE_ATTEMPTS} attempts")
    logger.info(f"✅ Generated {written} episodes in {out}")
    return written


# -------------------------------
# Suite folder
# -------------------------------
class SuiteFolder:
    def __init__(self, folder_path: Union[str, Path]):
        self.folder_path = Path(folder_path)
        if not (self.folder_path / EPISODE_DIR).is_dir():
            raise ConfigError(f"No {EPISODE_DIR}/ directory in suite {self.folder_path}")

    def episode_files(self) -> List[Path]:
        return sorted((self.folder_path / EPISODE_DIR).glob("ep-*.jsonl"))

    def load(self) -> List[SuiteItem]:
        """Load every episode with its scene; broken files are reported and skipped."""
        logger.info(f"📂 Checking suite: {self.folder_path}")
        files = self.episode_files()
        if not files:
            logger.warning("⚠️ No episodes found in the suite.")
            return []
        items = []
        for path in files:
            name = path.stem[len("ep-"):]
            try:
                episodes = episodes_from_records(read_jsonl(path))
                scene_path = self.folder_path / SCENE_DIR / f"scene-{name}.jsonl"
                scene = scene_from_records(read_jsonl(scene_path))
                for episode in episodes:
                    items.append(SuiteItem(name, episode, scene))
            except (OSError, ValueError, KeyError, StopIteration) as e:
                logger.error(f"❌ Error loading episode file {path.name}: {e}")
        logger.info(f"✅ Loaded {len(items)} episodes")
        return items
