"""Prompt templates and the small text protocol shared by agent roles and the scripted backend.

Every system message starts with a ``[role: <name>]`` tag. User messages are made of ``# Section``
blocks and may carry one ``[hint] key=value | key=value`` line with oracle information that only the
scripted backend reads.
"""
import re
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

ROLE_SPLITTER = "splitter"
ROLE_RATIONALIZER = "rationalizer"
ROLE_PLANNER = "planner"
ROLE_DESCRIBER = "describer"
ROLE_REFLECTOR = "reflector"
ROLE_JUDGE = "judge"
ROLES: Tuple[str, ...] = (
    ROLE_SPLITTER, ROLE_RATIONALIZER, ROLE_PLANNER, ROLE_DESCRIBER, ROLE_REFLECTOR, ROLE_JUDGE,
)

PLANNER_QUESTION = "Which waypoint index, or STOP?"
FORMAT_REMINDER = "Answer with a single waypoint index from the list, or the word STOP."

SPLITTER_PREAMBLE: str = \
'''You split a navigation instruction into ordered sub-instructions.
Write one sub-instruction per line, in the order they must be carried out, and nothing else.'''

RATIONALIZER_PREAMBLE: str = \
'''You rewrite the current sub-instruction of a navigation task so it fits what the agent sees now.
Keep the goal of the sub-instruction. Answer with the rewritten sub-instruction only.'''

PLANNER_PREAMBLE: str = \
'''You are the planner of an indoor navigation agent.
Candidates are written as "In (direction), See (objects), Is (room type)".
History lines are written as "Go (direction), Is (room type), See (objects)".
Pick the candidate that best follows the guidance, or answer STOP when the goal is reached.'''

DESCRIBER_PREAMBLE: str = \
'''You describe what the agent would see at a candidate waypoint.
Answer on one line in the form "In (direction), See (object, object), Is (room type)".'''

REFLECTOR_PREAMBLE: str = \
'''You review the last navigation step against the reference route.
Answer with one short sentence of experience the agent can reuse later.'''

JUDGE_PREAMBLE: str = \
'''You decide whether the current sub-instruction has been completed.
Answer yes or no.'''

PREAMBLES: Dict[str, str] = {
    ROLE_SPLITTER: SPLITTER_PREAMBLE,
    ROLE_RATIONALIZER: RATIONALIZER_PREAMBLE,
    ROLE_PLANNER: PLANNER_PREAMBLE,
    ROLE_DESCRIBER: DESCRIBER_PREAMBLE,
    ROLE_REFLECTOR: REFLECTOR_PREAMBLE,
    ROLE_JUDGE: JUDGE_PREAMBLE,
}

_ROLE_RE = re.compile(r"^\[role:\s*([a-z]+)\]")
_HINT_PREFIX = "[hint]"
_CLAUSE_RE = re.compile(r",?\s+(?:and then|and|then)\s+")
_SENTENCE_RE = re.compile(r"(?<=[.!?;])\s+")


# -------------------------------
# Tags and sections
# -------------------------------
def role_tag(role: str) -> str:
    if role not in ROLES:
        raise ValueError(f"Unknown role {role!r}")
    return f"[role: {role}]"


def system_text(role: str) -> str:
    return f"{role_tag(role)}\n{PREAMBLES[role]}"


def parse_role(text: str) -> Optional[str]:
    match = _ROLE_RE.match(text.strip())
    return match.group(1) if match else None


def render_hint(fields: Mapping[str, object]) -> str:
    return _HINT_PREFIX + " " + " | ".join(f"{k}={v}" for k, v in fields.items())


def parse_hint(text: str) -> Dict[str, str]:
    for line in text.splitlines():
        if line.startswith(_HINT_PREFIX):
            out = {}
            for part in line[len(_HINT_PREFIX):].split(" | "):
                key, sep, value = part.strip().partition("=")
                if sep:
                    out[key.strip()] = value.strip()
            return out
    return {}


def render_sections(sections: Sequence[Tuple[str, Sequence[str]]], hint: str = "") -> str:
    blocks = ["\n".join([f"# {title}", *lines]) for title, lines in sections]
    if hint:
        blocks.append(hint)
    return "\n\n".join(blocks)


def parse_sections(text: str) -> Dict[str, List[str]]:
    sections: Dict[str, List[str]] = {}
    current = None
    for line in text.splitlines():
        if line.startswith("# "):
            current = line[2:].strip()
            sections[current] = []
        elif line.startswith(_HINT_PREFIX):
            current = None
        elif current is not None and line.strip():
            sections[current].append(line)
    return sections


# -------------------------------
# Text rules
# -------------------------------
def split_clauses(instruction: str) -> List[str]:
    """Deterministic clause split on sentence ends and the connectors "and" / "then"."""
    text = instruction.strip()
    if not text:
        return []
    pieces = []
    for sentence in _SENTENCE_RE.split(text):
        for clause in _CLAUSE_RE.split(sentence):
            clause = clause.strip()
            if clause:
                pieces.append(clause)
    if len(pieces) == 1:
        return [text]
    return pieces


def rationalized_text(target: str, room: str) -> str:
    return f"Head toward {target}; currently in {room}"


def reflection_text(sector_name: str, outcome: str, sub_index: int) -> str:
    return f"step toward {sector_name} {outcome} sub-goal {sub_index}"
