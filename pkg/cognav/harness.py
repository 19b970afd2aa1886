"""The agent loop and run orchestration.

Each step runs, in order: waypoint prediction, candidate description, planning, action execution,
map update, reflection, rationalization and the completion check. The trace mirrors that order.
"""
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import pandas as pd

from .cognitive_map import (
    CandidateRecord,
    CognitiveMap,
    render_history_text,
    render_observation_text,
)
from .config import RunConfig, dump_run_config
from .errors import ConfigError, DisconnectedError, PlannerUnavailable
from .evaluator import RunEvaluator
from .geometry import Point, distance
from .instruction import (
    SUCCESS_RADIUS,
    InstructionState,
    SubInstruction,
    attach_annotations,
    check_complete,
    extract_target,
    guidance,
    judge_complete,
    rationalize,
    split,
)
from .llm_backend import Backend, CassetteWriter, build_backends, load_cassette
from .memory_stream import MemoryStream, reflect
from .metrics import TrajectoryLog, aggregate, render_table
from .perception import SceneDescriber, format_description
from .planner import (
    StopState,
    build_prompt,
    decide_stop,
    lands_on_visited,
    oracle_choice,
    select_target,
    to_actions,
)
from .prompts import (
    ROLE_DESCRIBER,
    ROLE_JUDGE,
    ROLE_PLANNER,
    ROLE_RATIONALIZER,
    ROLE_REFLECTOR,
    ROLE_SPLITTER,
    ROLES,
    render_hint,
)
from .suite import SuiteItem
from .trace import TraceWriter, pose_record
from .world import (
    DIST_STEP,
    DOOR_APPROACH,
    MAX_WAYPOINT_DIST,
    SAMPLE_STEP,
    Episode,
    Pose,
    Room,
    Scene,
    execute,
    geodesic,
    predict_waypoints,
)

logger = logging.getLogger(__name__)

CASSETTE_FILE = "cassette.jsonl"
CONFIG_FILE = "run_config.yaml"
MEMORY_FILE = "memory.jsonl"
RESULTS_FILE = "results.csv"
SUMMARY_FILE = "summary.txt"

ABLATIONS: Dict[str, Dict[str, bool]] = {
    "full": {},
    "no_reflection": {"no_reflection": True},
    "no_rationalization": {"no_rationalization": True},
    "no_cognitive_map": {"no_cognitive_map": True},
}


def _route_samples(path: Sequence[Point], step: float = SAMPLE_STEP) -> List[Point]:
    samples = list(path[:1])
    for a, b in zip(path, path[1:]):
        n = max(1, math.ceil(distance(a, b) / step))
        samples.extend((a[0] + (b[0] - a[0]) * k / n, a[1] + (b[1] - a[1]) * k / n) for k in range(1, n + 1))
    return samples


def route_entry(path: Sequence[Point], room: Room, approach: float = DOOR_APPROACH) -> Optional[Point]:
    """Point ``approach`` metres past where ``path`` first enters ``room``; None when it never does.

    The walk stops early at the last point still inside the room.
    """
    samples = _route_samples(path)
    first = next((i for i, p in enumerate(samples) if room.contains(p)), None)
    if first is None:
        return None
    travelled, point = 0.0, samples[first]
    for a, b in zip(samples[first:], samples[first + 1:]):
        if travelled >= approach - 1e-9 or not room.contains(b):
            break
        travelled += distance(a, b)
        point = b
    return point


def _door_entry(scene: Scene, room: Room, pose: Pose) -> Point:
    """Just inside the door of ``room`` closest to ``pose``; the centre when no door is reachable."""
    best = None
    for door in scene.doors_of(room.id):
        try:
            d = geodesic(scene, pose.position, door.position)
        except DisconnectedError:
            continue
        if best is None or (d, door.id) < best[0]:
            best = ((d, door.id), door)
    if best is None:
        return room.center
    door = best[1]
    nx_, ny_ = door.normal
    inward = 1.0 if (room.center[0] - door.position[0]) * nx_ + (room.center[1] - door.position[1]) * ny_ >= 0 else -1.0
    return door.position[0] + inward * DOOR_APPROACH * nx_, door.position[1] + inward * DOOR_APPROACH * ny_


def resolve_subgoal(scene: Scene, episode: Episode, sub: SubInstruction, pose: Pose) -> Point:
    """Point the active sub-instruction currently points at, read from its current text.

    A room resolves to where the reference route enters it (a room off the route to its nearest
    door), an object to its position, anything else to the episode goal.
    """
    term = extract_target(sub.text, list(scene.room_type_vocab) + list(scene.object_vocab)) or sub.target
    room = scene.room_by_type(term) if term else None
    if room is not None:
        return route_entry(episode.gt_path, room) or _door_entry(scene, room, pose)
    if term:
        if sub.region.startswith("object:"):
            room_id, index = sub.region[len("object:"):].split("/")
            obj = scene.room_by_id(int(room_id)).objects[int(index)]
            if obj.label == term:
                return obj.position
        matches = [o.position for _, _, o in scene.iter_objects() if o.label == term]
        if matches:
            return min(matches, key=lambda p: (distance(pose.position, p), p))
    return episode.goal


def _clamp_edge(d: float) -> float:
    return min(max(d, DIST_STEP), MAX_WAYPOINT_DIST)


def run_episode(episode: Episode, scene: Scene, config: RunConfig, backends: Mapping[str, Backend],
                stream: MemoryStream, trace: Optional[TraceWriter] = None) -> TrajectoryLog:
    """Run one episode to completion, STOP, budget exhaustion or planner abort."""
    params = config.params
    trace = trace or _NullTrace()
    describer = SceneDescriber(config.describer_mode, backends[ROLE_DESCRIBER], config.visibility_radius,
                               config.object_cap, config.hints_for(ROLE_DESCRIBER), params)

    subs = split(episode.instruction, backends[ROLE_SPLITTER], scene.room_type_vocab,
                 scene.object_vocab, params)
    state = InstructionState(episode.instruction, attach_annotations(subs, episode.sub_goal_annotations))

    pose = episode.start
    cmap = CognitiveMap()
    place = cmap.add_place(1, pose.position, scene.room_at(pose.position).room_type)
    for label, _ in describer.nearby_objects(scene, pose.position)[:config.object_cap]:
        cmap.add_object(label, place.id)
    trace.record("start", 0, episode=episode.id, instruction=episode.instruction,
                 pose=pose_record(pose), subs=[s.text for s in state.subs])

    traj = TrajectoryLog(episode.id, [pose])
    y: List[Point] = [pose.position]
    tried: List[Point] = []  # chosen waypoint positions, reached or not
    reason = "budget"

    for step in range(1, config.step_budget + 1):
        sub = state.active

        # waypoints
        waypoints = predict_waypoints(scene, pose, config.K)
        trace.record("waypoints", step, candidates=[
            {"index": w.index, "rel_heading": w.rel_heading, "sector": w.sector_name,
             "distance": w.distance, "position": list(w.position)} for w in waypoints
        ])
        if not waypoints:
            trace.record("no-candidates", step)
            traj.stopped, reason = True, "no-candidates"
            break

        # descriptions
        descriptions = describer.describe_all(waypoints, scene)
        lines = [format_description(d) for d in descriptions]
        trace.record("descriptions", step, lines=lines)
        cmap.record_candidates(place.id, [
            CandidateRecord(w.index, w.sector_name, w.distance, w.position, line)
            for w, line in zip(waypoints, lines)
        ])

        # decision
        visited = [p.position for p in cmap.places()] + tried
        target_point = resolve_subgoal(scene, episode, sub, pose)
        fallback = oracle_choice(scene, waypoints, target_point, visited)
        history: List[str] = []
        if not config.no_cognitive_map:
            history = render_history_text(cmap.history_chain()).splitlines()
            history += render_observation_text(cmap.observation_chain(place.id, config.observation_depth))
        reflections = [] if config.no_reflection else [m.text for m in stream.retrieve(config.retrieval_k)]
        hint = ""
        if config.hints_for(ROLE_PLANNER):
            if config.no_cognitive_map:
                # without the map the planner cannot tell visited places apart
                fields = {"best": oracle_choice(scene, waypoints, target_point)}
            else:
                fields = {"best": fallback,
                          "avoid": ",".join(str(w.index) for w in waypoints if lands_on_visited(w, visited))}
            fields.update(noise=config.planner_noise, seed=config.seed)
            hint = render_hint(fields)
        prompt = build_prompt(sub.text, guidance(sub), history, reflections, descriptions, hint,
                              config.prompt_char_cap)
        try:
            decision = select_target(prompt, backends[ROLE_PLANNER], len(waypoints), fallback, params,
                                     config.planner_retries)
        except PlannerUnavailable as e:
            logger.error(f"❌ Episode {episode.id} aborted at step {step}: {e}")
            trace.record("abort", step, reason="planner-unavailable")
            traj.aborted, reason = True, "planner-unavailable"
            break
        trace.exchange(step, ROLE_PLANNER, prompt.render(), "\n---\n".join(decision.replies))
        # a planner STOP ends the episode without spending the step
        if decide_stop(StopState(decision.stop, False, step - 1, config.step_budget)):
            trace.record("stop", step, attempts=decision.attempts)
            traj.stopped, reason = True, "stop"
            break
        traj.steps_used = step
        decision_record = {"target": decision.target, "fallback": decision.fallback,
                           "attempts": decision.attempts}
        traj.decisions.append({"step": step, **decision_record})
        trace.record("decision", step, **decision_record)

        # actions
        waypoint = waypoints[decision.target - 1]
        chosen = descriptions[decision.target - 1]
        tried.append(waypoint.position)
        actions = to_actions(waypoint)
        step_poses = []
        for action in actions:
            pose, _ = execute(scene, pose, [action])
            step_poses.append(pose)
        traj.poses.extend(step_poses)
        trace.record("actions", step, turns=sum(a.kind == "turn" for a in actions),
                     forward=sum(a.kind == "forward" for a in actions),
                     poses=[pose_record(p) for p in step_poses])

        # map update
        room = scene.room_at(pose.position).room_type
        previous = place
        place = cmap.add_place(previous.t + 1, pose.position, room)
        edge_distance = _clamp_edge(distance(previous.position, pose.position))
        cmap.connect_places(previous.id, place.id, edge_distance, waypoint.sector, origin=previous.id)
        cmap.mark_visited(previous.id, waypoint.index)
        for label in chosen.what:
            cmap.add_object(label, place.id)
        trace.record("map-update", step, place=place.id, t=place.t, room=room,
                     edge={"distance": edge_distance, "direction": waypoint.sector},
                     objects=list(chosen.what))
        trace.log_step(step, waypoint.sector_name, waypoint.distance, room, chosen.what)

        # reflection
        y.append(pose.position)
        stream.advance()
        if config.no_reflection:
            trace.record("reflection", step, skipped=True)
        else:
            memory = reflect(y, episode.gt_path, cmap, stream, sub, backends[ROLE_REFLECTOR],
                             waypoint.sector_name, params)
            trace.record("reflection", step, skipped=memory is None,
                         text=memory.text if memory else None, d_m=memory.d_m if memory else None)
            if config.forget_cadence == "step":
                stream.forget()

        # rationalization
        if config.no_rationalization:
            trace.record("rationalization", step, skipped=True, sub=sub.i, j=sub.j)
        else:
            sub = rationalize(sub, lines, episode.instruction, backends[ROLE_RATIONALIZER], room,
                              config.hints_for(ROLE_RATIONALIZER), params)
            state.update_active(sub)
            trace.record("rationalization", step, skipped=False, sub=sub.i, j=sub.j, text=sub.text)

        # completion
        visible = describer.nearby_objects(scene, pose.position, radius=SUCCESS_RADIUS)
        goal_distance = geodesic(scene, pose.position, episode.goal)
        if config.completion_mode == "llm":
            complete = judge_complete(sub, room, visible, goal_distance, backends[ROLE_JUDGE],
                                      state.is_final, config.hints_for(ROLE_JUDGE), params)
        else:
            complete = check_complete(sub, room, visible, goal_distance, state.is_final)
        trace.record("completion", step, sub=sub.i, complete=complete)
        final_complete = complete and state.advance()
        if decide_stop(StopState(False, final_complete, step, config.step_budget)):
            if final_complete:
                traj.stopped, reason = True, "complete"
            break

    if config.forget_cadence == "episode" and not config.no_reflection:
        stream.forget()
    trace.record("end", traj.steps_used, stopped=traj.stopped, aborted=traj.aborted,
                 steps_used=traj.steps_used, reason=reason)
    logger.debug(f"Episode {episode.id}: {reason} after {traj.steps_used} steps")
    return traj


class _NullTrace:
    def record(self, *args, **kwargs) -> None:
        pass

    def log_step(self, *args, **kwargs) -> None:
        pass

    def exchange(self, *args, **kwargs) -> None:
        pass


# -------------------------------
# Runs
# -------------------------------
@dataclass
class RunOutput:
    trajectories: Dict[str, TrajectoryLog]
    results: pd.DataFrame
    summary: Dict[str, float]


class Runner:
    """Runs a suite into ``out_dir`` and writes traces, memory, results and the summary table."""

    def __init__(self, config: RunConfig, out_dir: Union[str, Path], record: Optional[Union[str, Path]] = None,
                 replay_from: Optional[Union[str, Path]] = None, parallel: int = 0, label: str = "cognav"):
        if parallel > 1 and not config.fresh_memory_per_episode:
            raise ConfigError("--parallel needs --fresh-memory-per-episode")
        if parallel > 1 and record is not None:
            raise ConfigError("--parallel cannot be combined with --record")
        self.config = config
        self.out_dir = Path(out_dir)
        self.record = Path(record) if record is not None else None
        self.replay_from = Path(replay_from) if replay_from is not None else None
        self.parallel = parallel
        self.label = label

    def _backends(self, writer: Optional[CassetteWriter]) -> Dict[str, Backend]:
        if self.replay_from is not None:
            cassette = load_cassette(self.replay_from / CASSETTE_FILE)
            return build_backends({role: "replay" for role in ROLES}, self.config.seed, cassette=cassette)
        return build_backends(self.config.backends, self.config.seed, writer)

    def _one(self, item: SuiteItem, backends: Mapping[str, Backend], stream: MemoryStream) -> TrajectoryLog:
        trace = TraceWriter(self.out_dir, item.episode.id)
        try:
            return run_episode(item.episode, item.scene, self.config, backends, stream, trace)
        finally:
            trace.flush()

    def run(self, items: Sequence[SuiteItem]) -> RunOutput:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        dump_run_config(self.config, self.out_dir / CONFIG_FILE)
        writer = CassetteWriter(self.record) if self.record is not None else None
        try:
            backends = self._backends(writer)
            trajectories, streams = self._run_items(items, backends)
        finally:
            if writer is not None:
                writer.close()
                logger.info(f"✅ Recorded {writer.count} backend calls to {self.record}")

        with open(self.out_dir / MEMORY_FILE, "w", encoding="utf-8") as f:
            for scope, stream in streams:
                for r in stream.to_records():
                    f.write(json.dumps({"scope": scope, **r}) + "\n")

        evaluator = RunEvaluator(euclidean=self.config.euclidean_ne)
        results = evaluator.evaluate_run(items, trajectories)
        summary = aggregate(evaluator.episode_results) if evaluator.episode_results else {}
        results.to_csv(self.out_dir / RESULTS_FILE, index=False)
        table = evaluator.summary(self.label)
        if table:
            (self.out_dir / SUMMARY_FILE).write_text(table, encoding="utf-8")
        logger.info(f"✅ Ran {len(trajectories)} episodes into {self.out_dir}")
        return RunOutput(trajectories, results, summary)

    def _run_items(self, items: Sequence[SuiteItem], backends: Mapping[str, Backend]
                   ) -> Tuple[Dict[str, TrajectoryLog], List[Tuple[str, MemoryStream]]]:
        trajectories: Dict[str, TrajectoryLog] = {}
        streams: List[Tuple[str, MemoryStream]] = []
        if self.parallel > 1:
            for backend in set(backends.values()):
                if not getattr(backend, "concurrent_safe", False):
                    raise ConfigError(f"Backend {backend.name} cannot be shared across parallel episodes")
            fresh = [MemoryStream(self.config.memory) for _ in items]
            with ThreadPoolExecutor(max_workers=self.parallel) as pool:
                done = list(pool.map(lambda pair: self._one(pair[0], backends, pair[1]), zip(items, fresh)))
            for item, traj, stream in zip(items, done, fresh):
                trajectories[item.episode.id] = traj
                streams.append((item.episode.id, stream))
            return trajectories, streams

        stream = MemoryStream(self.config.memory)
        for item in items:
            if self.config.fresh_memory_per_episode:
                stream = MemoryStream(self.config.memory)
                streams.append((item.episode.id, stream))
            trajectories[item.episode.id] = self._one(item, backends, stream)
        if not self.config.fresh_memory_per_episode:
            streams.append(("run", stream))
        return trajectories, streams


def run_ablation(items: Sequence[SuiteItem], config: RunConfig, out_dir: Union[str, Path]) -> str:
    """Run the full agent and each single-switch ablation; returns the combined table."""
    out = Path(out_dir)
    rows: Dict[str, Dict[str, float]] = {}
    for label, flags in ABLATIONS.items():
        variant = replace(config, **flags)
        output = Runner(variant, out / label, label=label).run(items)
        if output.summary:
            rows[label] = output.summary
    table = render_table(rows)
    out.mkdir(parents=True, exist_ok=True)
    (out / SUMMARY_FILE).write_text(table, encoding="utf-8")
    return table
