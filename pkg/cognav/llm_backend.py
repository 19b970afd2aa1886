"""Text-completion backends: scripted rules, a live chat-completion endpoint, and cassette replay.

Every agent role (splitter, rationalizer, planner, describer, reflector, judge) talks to a
``Backend`` through ``complete(messages, params)``. Recording wraps any backend and appends each
request/reply pair to a JSON-lines cassette that ``ReplayBackend`` can serve back in order.
"""
import hashlib
import json
import logging
import os
import threading
from abc import ABC, abstractmethod
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from dotenv import load_dotenv
from openai import OpenAI, OpenAIError

from .errors import BackendError, BackendUnavailable, CassetteMiss, ConfigError
from .geometry import SECTOR_NAMES
from .prompts import (
    ROLE_DESCRIBER,
    ROLE_JUDGE,
    ROLE_PLANNER,
    ROLE_RATIONALIZER,
    ROLE_REFLECTOR,
    ROLE_SPLITTER,
    ROLES,
    parse_hint,
    parse_role,
    parse_sections,
    rationalized_text,
    reflection_text,
    split_clauses,
    system_text,
)

logger = logging.getLogger(__name__)

MESSAGE_ROLES = ("system", "user", "assistant")
BACKEND_MODES = ("scripted", "live", "replay")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in MESSAGE_ROLES:
            raise ValueError(f"Unknown message role {self.role!r}")
        if not self.content:
            raise ValueError("Message content must be non-empty")


@dataclass(frozen=True)
class CompletionParams:
    temperature: float = 0.0
    max_tokens: int = 256


def digest(messages: Sequence[ChatMessage]) -> str:
    """Stable request key; params are left out on purpose so they never invalidate a cassette."""
    return hashlib.sha256(request_text(messages).encode("utf-8")).hexdigest()


def request_text(messages: Sequence[ChatMessage]) -> str:
    return "\n".join(f"{m.role}:{m.content}" for m in messages)


class Backend(ABC):
    name = "backend"
    # Whether one instance may serve several episode loops at once.
    concurrent_safe = False

    def complete(self, messages: Sequence[ChatMessage], params: Optional[CompletionParams] = None) -> str:
        if not messages:
            raise ValueError("messages must be non-empty")
        if messages[0].role != "system":
            raise ValueError("the first message must have the system role")
        return self._complete(list(messages), params or CompletionParams())

    @abstractmethod
    def _complete(self, messages: List[ChatMessage], params: CompletionParams) -> str:
        ...


# -------------------------------
# Scripted backend
# -------------------------------
_CANDIDATE_PREFIX = "Waypoint "


def _sector_gap(name: str) -> int:
    k = SECTOR_NAMES.index(name) if name in SECTOR_NAMES else 4
    return min(k, 8 - k)


def _candidate_sectors(lines: Sequence[str]) -> List[Tuple[int, str]]:
    out = []
    for line in lines:
        if not line.startswith(_CANDIDATE_PREFIX):
            continue
        head, _, rest = line.partition(":")
        index = int(head[len(_CANDIDATE_PREFIX):])
        sector = rest.strip()[len("In ("):].split(")", 1)[0]
        out.append((index, sector))
    return out


class ScriptedBackend(Backend):
    """Deterministic rules keyed on the role tag and the optional ``[hint]`` line."""

    name = "scripted"
    concurrent_safe = True

    def __init__(self, seed: int = 0):
        self.seed = seed

    def _complete(self, messages: List[ChatMessage], params: CompletionParams) -> str:
        role = parse_role(messages[0].content)
        user = "\n".join(m.content for m in messages[1:] if m.role == "user")
        hint = parse_hint(user)
        sections = parse_sections(user)
        if role == ROLE_SPLITTER:
            return "\n".join(split_clauses(" ".join(sections.get("Instruction", []))))
        if role == ROLE_RATIONALIZER:
            if "target" in hint and "room" in hint:
                return rationalized_text(hint["target"], hint["room"])
            return " ".join(sections.get("Sub-instruction", [])) or user
        if role == ROLE_PLANNER:
            return self._plan(user, hint, sections)
        if role == ROLE_DESCRIBER:
            return f"In ({hint.get('sector', '')}), See ({hint.get('what', '')}), Is ({hint.get('where', '')})"
        if role == ROLE_REFLECTOR:
            return reflection_text(hint.get("sector", "Front"), hint.get("outcome", "hurt"),
                                   int(hint.get("sub", "1")))
        if role == ROLE_JUDGE:
            return "yes" if hint.get("complete") == "yes" else "no"
        raise BackendError(f"Scripted backend has no rule for role {role!r}")

    def _plan(self, user: str, hint: Dict[str, str], sections: Dict[str, List[str]]) -> str:
        candidates = _candidate_sectors(sections.get("Candidates", []))
        if not candidates:
            return "STOP"
        noise = float(hint.get("noise", "0") or 0)
        seed_key = f"{user}\n{hint.get('seed', self.seed)}".encode("utf-8")
        rng = np.random.default_rng(int.from_bytes(hashlib.sha256(seed_key).digest()[:8], "big"))
        confused = noise > 0 and rng.random() < noise
        avoid = {int(a) for a in hint.get("avoid", "").split(",") if a.strip()}
        pool = [c for c in candidates if c[0] not in avoid] or candidates
        if confused:
            return str(pool[int(rng.integers(len(pool)))][0])
        best = hint.get("best")
        if best:
            return best
        return str(min(pool, key=lambda c: (_sector_gap(c[1]), c[0]))[0])


# -------------------------------
# Live backend
# -------------------------------
@dataclass(frozen=True)
class LiveSettings:
    model: str
    api_key: str
    base_url: Optional[str] = None
    max_retries: int = 2
    timeout: float = 60.0


class LiveBackend(Backend):
    """Chat-completion endpoint reached through the ``openai`` client (any compatible server)."""

    name = "live"
    concurrent_safe = True

    def __init__(self, settings: LiveSettings):
        self.settings = settings
        self.client = OpenAI(
            base_url=settings.base_url,
            api_key=settings.api_key,
            max_retries=settings.max_retries,
            timeout=settings.timeout,
        )

    @classmethod
    def from_env(cls, env_file: Optional[Union[str, Path]] = None) -> "LiveBackend":
        load_dotenv(env_file)
        model = os.getenv("COGNAV_LLM_MODEL")
        api_key = os.getenv("COGNAV_LLM_API_KEY")
        if not model or not api_key:
            raise ConfigError("COGNAV_LLM_MODEL and COGNAV_LLM_API_KEY must be set for the live backend")
        settings = LiveSettings(model=model, api_key=api_key, base_url=os.getenv("COGNAV_LLM_BASE_URL"))
        logger.info(f"✅ Live backend: model {model} at {settings.base_url or 'default endpoint'}")
        return cls(settings)

    def _complete(self, messages: List[ChatMessage], params: CompletionParams) -> str:
        try:
            resp = self.client.chat.completions.create(
                model=self.settings.model,
                messages=[{"role": m.role, "content": m.content} for m in messages],
                temperature=params.temperature,
                max_tokens=params.max_tokens,
            )
        except OpenAIError as e:
            logger.error(f"❌ Live backend request failed: {e}")
            raise BackendUnavailable(str(e)) from e
        content = resp.choices[0].message.content if resp.choices else None
        if not content:
            raise BackendError("Live backend returned an empty reply")
        return content


# -------------------------------
# Cassettes
# -------------------------------
@dataclass(frozen=True)
class CassetteEntry:
    digest: str
    occurrence: int
    request: str
    reply: str


class CassetteWriter:
    """Append-only JSON-lines cassette; the file is truncated when the writer opens."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"Cannot write cassette {self.path}: {e}") from e
        self._lock = threading.Lock()
        self._seen: Dict[str, int] = defaultdict(int)
        self.count = 0

    def append(self, messages: Sequence[ChatMessage], reply: str) -> CassetteEntry:
        key = digest(messages)
        with self._lock:
            entry = CassetteEntry(key, self._seen[key], request_text(messages), reply)
            self._seen[key] += 1
            self._fh.write(json.dumps({
                "digest": entry.digest, "occurrence": entry.occurrence,
                "request": entry.request, "reply": entry.reply,
            }) + "\n")
            self._fh.flush()
            self.count += 1
        return entry

    def close(self) -> None:
        with self._lock:
            if not self._fh.closed:
                self._fh.close()


def load_cassette(path: Union[str, Path]) -> Dict[Tuple[str, int], CassetteEntry]:
    entries: Dict[Tuple[str, int], CassetteEntry] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    r = json.loads(line)
                    entry = CassetteEntry(r["digest"], r["occurrence"], r["request"], r["reply"])
                    entries[(entry.digest, entry.occurrence)] = entry
    except OSError as e:
        raise ConfigError(f"Cannot read cassette {path}: {e}") from e
    logger.info(f"📂 Loaded {len(entries)} cassette entries from {path}")
    return entries


class RecordingBackend(Backend):
    name = "recording"

    def __init__(self, inner: Backend, writer: CassetteWriter):
        self.inner = inner
        self.writer = writer

    def _complete(self, messages: List[ChatMessage], params: CompletionParams) -> str:
        reply = self.inner.complete(messages, params)
        self.writer.append(messages, reply)
        return reply


class ReplayBackend(Backend):
    """Serves recorded replies by (digest, occurrence); never falls back to a live call."""

    name = "replay"

    def __init__(self, entries: Mapping[Tuple[str, int], CassetteEntry]):
        self.entries = dict(entries)
        self._seen: Dict[str, int] = defaultdict(int)
        self._lock = threading.Lock()

    def _complete(self, messages: List[ChatMessage], params: CompletionParams) -> str:
        key = digest(messages)
        with self._lock:
            occurrence = self._seen[key]
            self._seen[key] += 1
        entry = self.entries.get((key, occurrence))
        if entry is None:
            raise CassetteMiss(f"No recorded reply for request {key[:12]} (occurrence {occurrence})")
        return entry.reply


def build_backends(modes: Mapping[str, str], seed: int = 0,
                   writer: Optional[CassetteWriter] = None,
                   cassette: Optional[Mapping[Tuple[str, int], CassetteEntry]] = None) -> Dict[str, Backend]:
    """One backend per agent role; instances of the same mode are shared across roles."""
    shared: Dict[str, Backend] = {}
    backends: Dict[str, Backend] = {}
    for role in ROLES:
        mode = modes.get(role, "scripted")
        if mode not in shared:
            if mode == "scripted":
                shared[mode] = ScriptedBackend(seed)
            elif mode == "live":
                shared[mode] = LiveBackend.from_env()
            elif mode == "replay":
                if cassette is None:
                    raise ConfigError("replay mode needs a cassette")
                shared[mode] = ReplayBackend(cassette)
            else:
                raise ConfigError(f"Unknown backend mode {mode!r} for role {role}")
        backend = shared[mode]
        backends[role] = RecordingBackend(backend, writer) if writer is not None else backend
    return backends


def chat(role: str, user: str) -> List[ChatMessage]:
    """System message for ``role`` followed by one user message."""
    return [ChatMessage("system", system_text(role)), ChatMessage("user", user)]
