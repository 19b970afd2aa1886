# trace.py
import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import pandas as pd

from .metrics import TrajectoryLog
from .world import Pose

logger = logging.getLogger(__name__)

TRACE_DIR = "traces"

_STEP_RE = re.compile(r"^Step: (\d+)$")
_ACTION_RE = re.compile(r"^Action: go (.+) for ([\d.]+) meters$")
_IN_RE = re.compile(r"^In: (.*)$")
_SEE_RE = re.compile(r"^See: \[(.*)\]$")


def pose_record(pose: Pose) -> List[float]:
    return [pose.x, pose.y, pose.heading]


def step_lines(step: int, sector_name: str, distance: float, room: str, objects: Sequence[str]) -> List[str]:
    """Human-readable record of one step."""
    return [
        f"Step: {step}",
        f"Action: go {sector_name} for {round(distance, 2)} meters",
        f"In: {room}",
        f"See: {list(objects)}",
    ]


class TraceWriter:
    """
    Writes the three per-episode trace files: structured records (.jsonl),
    human step lines (.log) and prompts/replies (.sidecar.jsonl).
    """

    def __init__(self, run_dir: Union[str, Path], episode_id: str):
        self.dir = Path(run_dir) / TRACE_DIR
        self.dir.mkdir(parents=True, exist_ok=True)
        self.episode_id = episode_id
        self.records: List[Dict[str, Any]] = []
        self.lines: List[str] = []
        self.sidecar: List[Dict[str, Any]] = []

    def record(self, kind: str, step: int, **payload: Any) -> None:
        self.records.append({"type": kind, "step": step, **payload})

    def log_step(self, step: int, sector_name: str, distance: float, room: str, objects: Sequence[str]) -> None:
        self.lines.extend(step_lines(step, sector_name, distance, room, objects))

    def exchange(self, step: int, role: str, request: str, reply: Optional[str]) -> None:
        self.sidecar.append({"step": step, "role": role, "request": request, "reply": reply})

    def flush(self) -> None:
        base = self.dir / self.episode_id
        with open(f"{base}.jsonl", "w", encoding="utf-8") as f:
            for r in self.records:
                f.write(json.dumps(r) + "\n")
        with open(f"{base}.log", "w", encoding="utf-8") as f:
            f.write("".join(line + "\n" for line in self.lines))
        with open(f"{base}.sidecar.jsonl", "w", encoding="utf-8") as f:
            for r in self.sidecar:
                f.write(json.dumps(r) + "\n")


# -------------------------------
# Reading traces back
# -------------------------------
def trajectory_from_records(records: Sequence[Dict[str, Any]]) -> TrajectoryLog:
    start = next(r for r in records if r["type"] == "start")
    end = next((r for r in records if r["type"] == "end"), None)
    poses = [Pose(*start["pose"])]
    decisions = []
    for r in records:
        if r["type"] == "actions":
            poses.extend(Pose(*p) for p in r["poses"])
        elif r["type"] == "decision":
            decisions.append(r)
    return TrajectoryLog(
        episode_id=start["episode"],
        poses=poses,
        decisions=decisions,
        stopped=bool(end and end["stopped"]),
        steps_used=end["steps_used"] if end else len(decisions),
        aborted=bool(end and end["aborted"]),
    )


def parse_log(text: str) -> List[Dict[str, Any]]:
    """Parse the human step lines back into one dict per step."""
    steps: List[Dict[str, Any]] = []
    for line in text.splitlines():
        line = line.strip()
        if m := _STEP_RE.match(line):
            steps.append({"step": int(m.group(1))})
        elif steps and (m := _ACTION_RE.match(line)):
            steps[-1].update(sector=m.group(1), distance=float(m.group(2)))
        elif steps and (m := _IN_RE.match(line)):
            steps[-1]["room"] = m.group(1)
        elif steps and (m := _SEE_RE.match(line)):
            inner = m.group(1)
            steps[-1]["objects"] = re.findall(r"'([^']*)'", inner)
    return steps


class TraceReader:
    def __init__(self, run_dir: Union[str, Path]):
        self.dir = Path(run_dir) / TRACE_DIR
        self.df = pd.DataFrame()

    def trace_files(self) -> List[Path]:
        return sorted(p for p in self.dir.glob("*.jsonl") if not p.name.endswith(".sidecar.jsonl"))

    def load(self, episode_id: str) -> TrajectoryLog:
        with open(self.dir / f"{episode_id}.jsonl", "r", encoding="utf-8") as f:
            return trajectory_from_records([json.loads(line) for line in f if line.strip()])

    def load_all(self) -> Dict[str, TrajectoryLog]:
        """Every readable trace keyed by episode id; broken traces are logged and skipped."""
        out: Dict[str, TrajectoryLog] = {}
        rows = []
        for path in self.trace_files():
            try:
                traj = self.load(path.stem)
            except (OSError, ValueError, KeyError, StopIteration) as e:
                logger.error(f"❌ Error reading trace {path.name}: {e}")
                continue
            out[traj.episode_id] = traj
            log_path = path.with_suffix(".log")
            logged = len(parse_log(log_path.read_text(encoding="utf-8"))) if log_path.exists() else 0
            rows.append({"episode_id": traj.episode_id, "steps": traj.steps_used,
                         "logged_steps": logged, "stopped": traj.stopped, "aborted": traj.aborted})
        self.df = pd.DataFrame(rows)
        logger.info(f"📄 Read {len(out)} traces.")
        return out
