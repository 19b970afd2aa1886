"""Reflection memory stream: DTW distance to the reference route, scoring, forgetting and retrieval."""
import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import BackendError
from .geometry import Point, distance
from .llm_backend import Backend, CompletionParams, chat
from .prompts import ROLE_REFLECTOR, render_hint, render_sections

logger = logging.getLogger(__name__)


def dtw(seq_a: Sequence[Point], seq_b: Sequence[Point]) -> float:
    """Classic DTW (match / insert / delete, no window) with Euclidean point cost."""
    if len(seq_a) == 0 or len(seq_b) == 0:
        raise ValueError("dtw needs two non-empty sequences")
    cost = cdist(np.asarray(seq_a, dtype=float), np.asarray(seq_b, dtype=float))
    n, m = cost.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            acc[i, j] = cost[i - 1, j - 1] + min(acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
    return float(acc[n, m])


@dataclass
class ReflectionMemory:
    id: int
    text: str
    d_m: float
    t_m: int
    r_m: int = 1


@dataclass(frozen=True)
class MemoryStreamConfig:
    delta: float = 3.0
    forget_fraction: float = 0.10
    retrieval_k: int = 3

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not 0 <= self.forget_fraction < 1:
            raise ValueError(f"forget_fraction must be in [0, 1), got {self.forget_fraction}")
        if self.retrieval_k < 0:
            raise ValueError(f"retrieval_k must be non-negative, got {self.retrieval_k}")


def score(memory: ReflectionMemory, T: int, R: Iterable[int], delta: float) -> float:
    """|d_m - delta| / delta + t_m / T + r_m / max(R)."""
    R = list(R)
    if not R:
        raise ValueError("repeatability set R must be non-empty")
    if T <= 0:
        raise ValueError(f"current step T must be positive, got {T}")
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    return abs(memory.d_m - delta) / delta + memory.t_m / T + memory.r_m / max(R)


def _normalize(text: str) -> str:
    return " ".join(text.split())


@dataclass
class MemoryStream:
    """Run-wide store. Holds the step clock ``now`` that stamps t_m."""

    config: MemoryStreamConfig = field(default_factory=MemoryStreamConfig)
    memories: List[ReflectionMemory] = field(default_factory=list)
    now: int = 0
    _next_id: int = 0
    _lock: threading.RLock = field(default_factory=threading.RLock, repr=False)

    def advance(self) -> int:
        with self._lock:
            self.now += 1
            return self.now

    def __len__(self) -> int:
        return len(self.memories)

    def new_memory(self, text: str, d_m: float, t_m: Optional[int] = None) -> ReflectionMemory:
        with self._lock:
            memory = ReflectionMemory(self._next_id, text, float(d_m), self.now if t_m is None else t_m)
            self._next_id += 1
            return memory

    def insert(self, memory: ReflectionMemory) -> ReflectionMemory:
        """Store ``memory`` or reinforce an existing one with the same text."""
        key = _normalize(memory.text)
        with self._lock:
            for existing in self.memories:
                if _normalize(existing.text) == key:
                    existing.t_m = memory.t_m
                    existing.r_m += 1
                    logger.debug(f"Reinforced memory {existing.id} (r_m={existing.r_m})")
                    return existing
            self.memories.append(memory)
            return memory

    def scores(self, T: Optional[int] = None, delta: Optional[float] = None) -> List[float]:
        T = self.now if T is None else T
        delta = self.config.delta if delta is None else delta
        R = [m.r_m for m in self.memories]
        return [score(m, T, R, delta) for m in self.memories]

    def forget(self, T: Optional[int] = None, delta: Optional[float] = None) -> List[int]:
        """Drop the floor(forget_fraction * N) lowest-scoring memories; returns their ids."""
        with self._lock:
            n_drop = int(math.floor(self.config.forget_fraction * len(self.memories) + 1e-9))
            if n_drop == 0:
                return []
            ranked = sorted(zip(self.scores(T, delta), self.memories),
                            key=lambda sm: (sm[0], sm[1].t_m, sm[1].id))
            removed = {m.id for _, m in ranked[:n_drop]}
            self.memories = [m for m in self.memories if m.id not in removed]
            logger.debug(f"Forgot {n_drop} memories: {sorted(removed)}")
            return sorted(removed)

    def retrieve(self, k: Optional[int] = None, T: Optional[int] = None,
                 delta: Optional[float] = None) -> List[ReflectionMemory]:
        k = self.config.retrieval_k if k is None else k
        if k < 0:
            raise ValueError(f"k must be non-negative, got {k}")
        with self._lock:
            if k == 0 or not self.memories:
                return []
            ranked = sorted(zip(self.scores(T, delta), self.memories),
                            key=lambda sm: (-sm[0], -sm[1].t_m, sm[1].id))
            return [m for _, m in ranked[:k]]

    def to_records(self) -> List[dict]:
        with self._lock:
            return [{"id": m.id, "text": m.text, "d_m": m.d_m, "t_m": m.t_m, "r_m": m.r_m}
                    for m in self.memories]


def step_outcome(y: Sequence[Point], y_star: Sequence[Point]) -> str:
    """"helped" when the latest position got closer to the end of the reference route."""
    if len(y) < 2:
        return "hurt"
    end = y_star[-1]
    return "helped" if distance(y[-1], end) < distance(y[-2], end) else "hurt"


def reflect(y: Sequence[Point], y_star: Sequence[Point], cmap, stream: MemoryStream, sub,
            backend: Backend, sector_name: str,
            params: Optional[CompletionParams] = None) -> Optional[ReflectionMemory]:
    """Ask the reflector for an experience about the last step and store it.

    ``sub`` is the active sub-instruction; ``cmap`` supplies the map context. Returns the stored
    (or reinforced) memory, or None when the backend failed.
    """
    d_m = dtw(y, y_star)
    outcome = step_outcome(y, y_star)
    history = [f"t={s.place.t} {s.place.room_type}" for s in cmap.history_chain()[-3:]]
    user = render_sections(
        [
            ("Sub-instruction", [sub.text]),
            ("Step", [f"Moved {sector_name}; distance to reference route {d_m:.2f} m; {outcome}"]),
            ("Map", history),
        ],
        hint=render_hint({"sector": sector_name, "outcome": outcome, "sub": sub.i}),
    )
    try:
        text = backend.complete(chat(ROLE_REFLECTOR, user), params).strip()
    except BackendError as e:
        logger.warning(f"⚠️ Reflection skipped: {e}")
        return None
    if not text:
        logger.warning("⚠️ Reflection skipped: empty reply")
        return None
    return stream.insert(stream.new_memory(text, d_m))
