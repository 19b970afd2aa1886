"""Synthetic continuous indoor world.

Scenes are axis-aligned rooms on a 0.25 m occupancy grid joined by 1 m doors. Everything here is a
pure function of (seed, inputs): generation draws from ``numpy.random.default_rng`` seeded explicitly,
and every iteration over vocabularies happens in sorted order.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import CollisionError, DisconnectedError, UngeneratableSceneError
from .geometry import (
    Point,
    bearing,
    distance,
    heading_vector,
    normalize_heading,
    sector_of,
)

logger = logging.getLogger(__name__)

CELL = 0.25
ANGLE_STEP = 3
N_ANGLES = 120
DIST_STEP = 0.25
N_DISTANCES = 12
MAX_WAYPOINT_DIST = DIST_STEP * N_DISTANCES
SAMPLE_STEP = 0.05
CLEARANCE = 0.10
RAY_WIDTH = 1e-6

MIN_ROOMS, MAX_ROOMS = 2, 12
MIN_ROOM_CELLS, MAX_ROOM_CELLS = 16, 28  # 4.0 m .. 7.0 m
DOOR_CELLS = 4
OBJECT_MARGIN_CELLS = 2
MIN_OBJECTS, MAX_OBJECTS = 5, 12
LOOP_DOOR_PROB = 0.25
MAX_LAYOUT_ATTEMPTS = 8
DOOR_APPROACH = 0.75

_DIAGONAL = CELL * math.sqrt(2.0)
_FIELD_CACHE_SIZE = 256

ROOM_OBJECTS: Dict[str, Tuple[str, ...]] = {
    "living room": ("sofa", "lamp", "bookshelf", "rug", "painting", "coffee table", "armchair",
                    "fireplace", "television", "curtains", "clock", "potted plant"),
    "kitchen": ("stove", "refrigerator", "counter", "sink", "microwave", "oven", "dishwasher",
                "cabinet", "toaster", "kettle", "bar stool", "fruit bowl"),
    "bedroom": ("bed", "wardrobe", "nightstand", "dresser", "pillow", "alarm clock", "reading lamp",
                "blanket", "vanity", "slippers", "poster", "jewelry box"),
    "bathroom": ("bathtub", "shower", "toilet", "washbasin", "towel rack", "mirror", "bath mat",
                 "medicine cabinet", "soap dish", "hamper", "toothbrush holder", "scale"),
    "hallway": ("coat rack", "shoe cabinet", "umbrella stand", "console table", "wall mirror",
                "runner rug", "key hook", "bench", "ceiling light", "framed photo", "radiator",
                "doormat"),
    "dining room": ("dining table", "chair", "sideboard", "chandelier", "china cabinet",
                    "candle holder", "vase", "placemat", "wine rack", "serving cart", "tablecloth",
                    "buffet"),
    "office": ("desk", "swivel chair", "computer monitor", "printer", "filing cabinet", "whiteboard",
               "desk lamp", "keyboard", "bookcase", "shredder", "pinboard", "globe"),
    "laundry room": ("washing machine", "dryer", "ironing board", "detergent shelf", "drying rack",
                     "utility sink", "clothes hamper", "iron", "lint bin", "mop bucket",
                     "folding table", "broom"),
    "guest room": ("single bed", "luggage rack", "side table", "quilt", "floor lamp", "wall clock",
                   "armoire", "reading chair", "throw pillow", "window seat", "towel stack", "fan"),
    "study": ("writing desk", "leather chair", "reading nook", "encyclopedia shelf", "map",
              "typewriter", "ottoman", "magazine rack", "world globe", "lectern", "paper tray",
              "table lamp"),
    "pantry": ("shelf", "flour bin", "spice rack", "jar", "cereal box", "canned goods", "rice sack",
               "bread box", "step ladder", "storage crate", "water jug", "onion basket"),
    "nursery": ("crib", "changing table", "rocking chair", "toy chest", "mobile", "teddy bear",
                "diaper bin", "night light", "baby monitor", "play mat", "stroller", "cradle"),
    "playroom": ("toy box", "dollhouse", "bean bag", "train set", "easel", "building blocks",
                 "puzzle table", "slide", "ball pit", "puppet theater", "drum", "rocking horse"),
}
ROOM_TYPES: Tuple[str, ...] = tuple(ROOM_OBJECTS)
OBJECT_LABELS: Tuple[str, ...] = tuple(sorted({o for objs in ROOM_OBJECTS.values() for o in objs}))


# -------------------------------
# Domain types
# -------------------------------
@dataclass(frozen=True)
class SceneObject:
    label: str
    position: Point


@dataclass(frozen=True)
class Room:
    id: int
    bounds: Tuple[float, float, float, float]  # x0, y0, x1, y1
    room_type: str
    objects: Tuple[SceneObject, ...] = ()

    @property
    def center(self) -> Point:
        x0, y0, x1, y1 = self.bounds
        return (x0 + x1) / 2.0, (y0 + y1) / 2.0

    def contains(self, p: Point) -> bool:
        x0, y0, x1, y1 = self.bounds
        return x0 <= p[0] < x1 and y0 <= p[1] < y1

    def distance_to(self, p: Point) -> float:
        x0, y0, x1, y1 = self.bounds
        dx = max(x0 - p[0], 0.0, p[0] - x1)
        dy = max(y0 - p[1], 0.0, p[1] - y1)
        return math.hypot(dx, dy)


@dataclass(frozen=True)
class Door:
    id: int
    rooms: Tuple[int, int]
    position: Point
    normal: Point  # unit vector across the wall
    width: float = DOOR_CELLS * CELL


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_heading(self.heading))

    @property
    def position(self) -> Point:
        return self.x, self.y


@dataclass(frozen=True)
class SubGoal:
    """Ground-truth annotation of one instruction clause."""
    kind: str  # "where" | "what"
    target: str
    region: str  # "room:<id>" or "object:<room id>/<index>"


@dataclass
class Episode:
    id: str
    scene_seed: int
    instruction: str
    start: Pose
    goal: Point
    gt_path: List[Point]
    sub_goal_annotations: List[SubGoal]


@dataclass(frozen=True)
class Waypoint:
    index: int
    rel_heading: int
    sector: int
    sector_name: str
    distance: float
    position: Point


@dataclass(frozen=True)
class Action:
    kind: str  # "turn" | "forward" | "stop"
    degrees: int = 0


TURN_RIGHT = Action("turn", ANGLE_STEP)
TURN_LEFT = Action("turn", -ANGLE_STEP)
FORWARD = Action("forward")
STOP = Action("stop")


# -------------------------------
# Scene
# -------------------------------
@dataclass(eq=False)
class Scene:
    seed: int
    rooms: List[Room]
    doors: List[Door]
    occupancy: np.ndarray  # bool [nx, ny], True = occupied
    room_type_vocab: Tuple[str, ...] = ROOM_TYPES
    object_vocab: Tuple[str, ...] = OBJECT_LABELS
    _graph: Optional[csr_matrix] = field(default=None, init=False, repr=False)
    _fields: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict, init=False, repr=False)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.occupancy.shape

    # ---- grid lookups
    @staticmethod
    def cell_of(p: Point) -> Tuple[int, int]:
        return int(math.floor(p[0] / CELL)), int(math.floor(p[1] / CELL))

    @staticmethod
    def cell_center(cell: Tuple[int, int]) -> Point:
        return (cell[0] + 0.5) * CELL, (cell[1] + 0.5) * CELL

    def cell_free(self, ix: int, iy: int) -> bool:
        nx_, ny_ = self.occupancy.shape
        return 0 <= ix < nx_ and 0 <= iy < ny_ and not self.occupancy[ix, iy]

    def is_free(self, p: Point) -> bool:
        return self.cell_free(*self.cell_of(p))

    def blocked(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Vectorized occupancy test; anything off the grid counts as blocked."""
        ix = np.floor(np.asarray(xs) / CELL).astype(int)
        iy = np.floor(np.asarray(ys) / CELL).astype(int)
        nx_, ny_ = self.occupancy.shape
        inside = (ix >= 0) & (ix < nx_) & (iy >= 0) & (iy < ny_)
        out = np.ones(ix.shape, dtype=bool)
        out[inside] = self.occupancy[ix[inside], iy[inside]]
        return out

    def segment_is_free(self, a: Point, b: Point, step: float = SAMPLE_STEP) -> bool:
        length = distance(a, b)
        n = int(math.floor(length / step + 1e-9))
        s = np.arange(n + 1) * step
        if length > 0:
            ux, uy = (b[0] - a[0]) / length, (b[1] - a[1]) / length
        else:
            ux = uy = 0.0
        xs = np.append(a[0] + ux * s, b[0])
        ys = np.append(a[1] + uy * s, b[1])
        return not bool(self.blocked(xs, ys).any())

    def reach(self, origin: Point, headings: Sequence[float], max_dist: float) -> np.ndarray:
        """Travel distance along each ray before entering an occupied cell, capped at ``max_dist``.

        Every grid cell a ray passes through is tested at the midpoint of its crossing interval.
        The ray is thickened by ``RAY_WIDTH`` on both sides so corner grazes count as hits.
        """
        rad = np.radians(np.asarray(headings, dtype=float))
        dx, dy = np.sin(rad), np.cos(rad)
        dx[np.abs(dx) < 1e-12] = 0.0
        dy[np.abs(dy) < 1e-12] = 0.0
        n_lines = int(math.ceil(max_dist / CELL)) + 2
        j = np.arange(n_lines)
        out = np.full(dx.shape, float(max_dist))
        for offset in (-RAY_WIDTH, 0.0, RAY_WIDTH):
            ox = origin[0] + offset * dy
            oy = origin[1] - offset * dx
            crossings = [np.zeros((len(dx), 1))]
            for o, d in ((ox, dx), (oy, dy)):
                first = np.where(d > 0, np.floor(o / CELL) + 1, np.floor(o / CELL))
                lines = (first[:, None] + np.sign(d)[:, None] * j[None, :]) * CELL
                with np.errstate(divide="ignore", invalid="ignore"):
                    t = (lines - o[:, None]) / d[:, None]
                t[d == 0] = np.inf
                crossings.append(t)
            ts = np.minimum(np.sort(np.concatenate(crossings, axis=1), axis=1), max_dist)
            mids = (ts[:, :-1] + ts[:, 1:]) / 2
            hit = self.blocked(ox[:, None] + dx[:, None] * mids, oy[:, None] + dy[:, None] * mids)
            start = ts[np.arange(len(dx)), hit.argmax(axis=1)]
            out = np.minimum(out, np.where(hit.any(axis=1), np.maximum(start - 1e-6, 0.0), max_dist))
        return out

    def ray_distance(self, origin: Point, heading: float, max_dist: float) -> float:
        return float(self.reach(origin, [heading], max_dist)[0])

    def nearest_free_cell(self, p: Point, radius: int = 3) -> Tuple[int, int]:
        cell = self.cell_of(p)
        if self.cell_free(*cell):
            return cell
        ring = [
            (cell[0] + i, cell[1] + j)
            for i in range(-radius, radius + 1)
            for j in range(-radius, radius + 1)
        ]
        ring.sort(key=lambda c: (distance(self.cell_center(c), p), c))
        for c in ring:
            if self.cell_free(*c):
                return c
        raise CollisionError(f"No free cell near {p}")

    # ---- semantic lookups
    def room_at(self, p: Point) -> Room:
        for room in self.rooms:
            if room.contains(p):
                return room
        return min(self.rooms, key=lambda r: (r.distance_to(p), r.id))

    def room_by_id(self, room_id: int) -> Room:
        for room in self.rooms:
            if room.id == room_id:
                return room
        raise KeyError(room_id)

    def room_by_type(self, room_type: str) -> Optional[Room]:
        for room in self.rooms:
            if room.room_type == room_type:
                return room
        return None

    def doors_of(self, room_id: int) -> List[Door]:
        return [d for d in self.doors if room_id in d.rooms]

    def iter_objects(self) -> Iterator[Tuple[Room, int, SceneObject]]:
        for room in self.rooms:
            for index, obj in enumerate(room.objects):
                yield room, index, obj

    def door_graph(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(r.id for r in self.rooms)
        graph.add_edges_from(d.rooms for d in self.doors)
        return graph

    # ---- shortest paths
    @property
    def nav_graph(self) -> csr_matrix:
        if self._graph is None:
            self._graph = _build_nav_graph(self.occupancy)
        return self._graph

    def _flat(self, cell: Tuple[int, int]) -> int:
        return cell[0] * self.occupancy.shape[1] + cell[1]

    def distance_field(self, cell: Tuple[int, int]) -> np.ndarray:
        """Geodesic distance from every cell to ``cell`` (inf where unreachable)."""
        cached = self._fields.get(cell)
        if cached is None:
            if len(self._fields) >= _FIELD_CACHE_SIZE:
                self._fields.clear()
            dist = dijkstra(self.nav_graph, directed=False, indices=self._flat(cell))
            cached = np.asarray(dist).reshape(self.occupancy.shape)
            self._fields[cell] = cached
        return cached

    def grid_path(self, a: Tuple[int, int], b: Tuple[int, int]) -> List[Tuple[int, int]]:
        _, pred = dijkstra(self.nav_graph, directed=False, indices=self._flat(a),
                           return_predecessors=True)
        ny_ = self.occupancy.shape[1]
        node, source = self._flat(b), self._flat(a)
        if node != source and pred[node] < 0:
            raise DisconnectedError(f"No grid path from {a} to {b}")
        path = [node]
        while node != source:
            node = int(pred[node])
            path.append(node)
        return [(n // ny_, n % ny_) for n in reversed(path)]


def _build_nav_graph(occupancy: np.ndarray) -> csr_matrix:
    """8-connected free-cell graph; diagonal moves need both orthogonal cells free."""
    nx_, ny_ = occupancy.shape
    free = ~occupancy
    idx = np.arange(nx_ * ny_).reshape(nx_, ny_)
    rows, cols, weights = [], [], []
    for dx, dy, w in ((1, 0, CELL), (0, 1, CELL), (1, 1, _DIAGONAL), (1, -1, _DIAGONAL)):
        xs, xd = slice(0, nx_ - dx), slice(dx, nx_)
        if dy >= 0:
            ys, yd = slice(0, ny_ - dy), slice(dy, ny_)
        else:
            ys, yd = slice(-dy, ny_), slice(0, ny_ + dy)
        ok = free[xs, ys] & free[xd, yd]
        if dx and dy:
            ok &= free[xd, ys] & free[xs, yd]
        rows.append(idx[xs, ys][ok])
        cols.append(idx[xd, yd][ok])
        weights.append(np.full(int(ok.sum()), w))
    n = nx_ * ny_
    return csr_matrix(
        (np.concatenate(weights), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


def open_room_scene(width: float, height: float, room_type: str = "living room",
                    objects: Sequence[SceneObject] = (), seed: int = 0) -> Scene:
    """Single walled room; the interior spans [0.25, 0.25 + width) x [0.25, 0.25 + height)."""
    wx, wy = int(round(width / CELL)), int(round(height / CELL))
    occupancy = np.ones((wx + 2, wy + 2), dtype=bool)
    occupancy[1:wx + 1, 1:wy + 1] = False
    room = Room(0, (CELL, CELL, (wx + 1) * CELL, (wy + 1) * CELL), room_type, tuple(objects))
    return Scene(seed=seed, rooms=[room], doors=[], occupancy=occupancy)


# -------------------------------
# Scene generation
# -------------------------------
class _LayoutRejected(Exception):
    pass


def _lattice_neighbours(cell: Tuple[int, int], side: int) -> List[Tuple[int, int]]:
    c, r = cell
    out = []
    for dc, dr in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nc, nr = c + dc, r + dr
        if 0 <= nc < side and 0 <= nr < side:
            out.append((nc, nr))
    return out


def _place_objects(rng: np.random.Generator, room_type: str,
                   ix0: int, ix1: int, iy0: int, iy1: int) -> Tuple[SceneObject, ...]:
    vocab = ROOM_OBJECTS[room_type]
    count = int(rng.integers(MIN_OBJECTS, MAX_OBJECTS + 1))
    labels = [vocab[i] for i in rng.permutation(len(vocab))[:count]]
    m = OBJECT_MARGIN_CELLS
    cells = [(ix, iy) for ix in range(ix0 + m, ix1 - m + 1) for iy in range(iy0 + m, iy1 - m + 1)]
    picks = rng.choice(len(cells), size=count, replace=False)
    return tuple(
        SceneObject(label, Scene.cell_center(cells[int(p)])) for label, p in zip(labels, picks)
    )


def _build_scene(seed: int, n_rooms: int, rng: np.random.Generator) -> Scene:
    side = math.ceil(math.sqrt(n_rooms)) + 1
    start = (int(rng.integers(side)), int(rng.integers(side)))
    cells = [start]
    taken = {start}
    tree: List[Tuple[Tuple[int, int], Tuple[int, int]]] = []
    while len(cells) < n_rooms:
        frontier = sorted({
            (c, nb) for c in cells for nb in _lattice_neighbours(c, side) if nb not in taken
        })
        parent, child = frontier[int(rng.integers(len(frontier)))]
        cells.append(child)
        taken.add(child)
        tree.append((parent, child))

    linked = {frozenset(pair) for pair in tree}
    extra = []
    for a in sorted(taken):
        for b in _lattice_neighbours(a, side):
            if b in taken and a < b and frozenset((a, b)) not in linked:
                if rng.random() < LOOP_DOOR_PROB:
                    extra.append((a, b))

    # growth is connected, so used columns/rows form contiguous ranges
    col0 = min(c for c, _ in cells)
    row0 = min(r for _, r in cells)
    n_cols = max(c for c, _ in cells) - col0 + 1
    n_rows = max(r for _, r in cells) - row0 + 1
    widths = rng.integers(MIN_ROOM_CELLS, MAX_ROOM_CELLS + 1, size=n_cols)
    heights = rng.integers(MIN_ROOM_CELLS, MAX_ROOM_CELLS + 1, size=n_rows)
    bx = [0]
    for w in widths:
        bx.append(bx[-1] + int(w) + 1)
    by = [0]
    for h in heights:
        by.append(by[-1] + int(h) + 1)

    occupancy = np.ones((bx[-1] + 1, by[-1] + 1), dtype=bool)
    types = [ROOM_TYPES[i] for i in rng.permutation(len(ROOM_TYPES))[:n_rooms]]
    room_of: Dict[Tuple[int, int], int] = {}
    rooms: List[Room] = []
    for room_id, (c, r) in enumerate(cells):
        ci, ri = c - col0, r - row0
        ix0, ix1 = bx[ci] + 1, bx[ci] + int(widths[ci])
        iy0, iy1 = by[ri] + 1, by[ri] + int(heights[ri])
        occupancy[ix0:ix1 + 1, iy0:iy1 + 1] = False
        bounds = (ix0 * CELL, iy0 * CELL, (ix1 + 1) * CELL, (iy1 + 1) * CELL)
        objects = _place_objects(rng, types[room_id], ix0, ix1, iy0, iy1)
        rooms.append(Room(room_id, bounds, types[room_id], objects))
        room_of[(c, r)] = room_id

    doors: List[Door] = []
    for a, b in tree + extra:
        lo, hi = sorted((a, b))
        if lo[1] == hi[1]:
            # side by side: carve the shared vertical wall
            ix = bx[hi[0] - col0]
            ri = lo[1] - row0
            span = int(heights[ri])
            iy = by[ri] + 1 + 1 + int(rng.integers(0, span - DOOR_CELLS - 2 + 1))
            occupancy[ix, iy:iy + DOOR_CELLS] = False
            position = ((ix + 0.5) * CELL, (iy + DOOR_CELLS / 2) * CELL)
            normal = (1.0, 0.0)
        else:
            iy = by[hi[1] - row0]
            ci = lo[0] - col0
            span = int(widths[ci])
            ix = bx[ci] + 1 + 1 + int(rng.integers(0, span - DOOR_CELLS - 2 + 1))
            occupancy[ix:ix + DOOR_CELLS, iy] = False
            position = ((ix + DOOR_CELLS / 2) * CELL, (iy + 0.5) * CELL)
            normal = (0.0, 1.0)
        pair = tuple(sorted((room_of[a], room_of[b])))
        doors.append(Door(len(doors), pair, position, normal))

    scene = Scene(seed=seed, rooms=rooms, doors=doors, occupancy=occupancy)
    _validate_layout(scene)
    return scene


def _validate_layout(scene: Scene) -> None:
    labels, _ = ndimage.label(~scene.occupancy)
    components = {int(labels[scene.cell_of(room.center)]) for room in scene.rooms}
    if len(components) != 1 or 0 in components:
        raise _LayoutRejected("free space is not connected")
    if not nx.is_connected(scene.door_graph()):
        raise _LayoutRejected("door graph is not connected")
    for _, _, obj in scene.iter_objects():
        if not scene.is_free(obj.position):
            raise _LayoutRejected(f"object {obj.label} placed on an occupied cell")


def generate_scene(seed: int, n_rooms: int) -> Scene:
    """Build a connected multi-room scene; identical for identical (seed, n_rooms)."""
    if not MIN_ROOMS <= n_rooms <= MAX_ROOMS:
        raise ValueError(f"n_rooms must be in [{MIN_ROOMS}, {MAX_ROOMS}], got {n_rooms}")
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    rng = np.random.default_rng(seed)
    for attempt in range(1, MAX_LAYOUT_ATTEMPTS + 1):
        try:
            scene = _build_scene(seed, n_rooms, rng)
        except _LayoutRejected as e:
            logger.warning(f"⚠️ Scene {seed}: layout attempt {attempt} rejected: {e}")
            continue
        logger.debug(f"✅ Scene {seed}: {n_rooms} rooms, {len(scene.doors)} doors")
        return scene
    raise UngeneratableSceneError(
        f"Scene seed {seed} with {n_rooms} rooms failed after {MAX_LAYOUT_ATTEMPTS} attempts"
    )


# -------------------------------
# Episode generation
# -------------------------------
def _smooth_path(points: List[Point]) -> List[Point]:
    """Merge collinear grid steps, then split legs longer than the waypoint range."""
    if len(points) <= 2:
        return list(points)

    def step(a: Point, b: Point) -> Tuple[int, int]:
        return int(round((b[0] - a[0]) / CELL)), int(round((b[1] - a[1]) / CELL))

    corners = [points[0]]
    for i in range(1, len(points) - 1):
        if step(points[i - 1], points[i]) != step(points[i], points[i + 1]):
            corners.append(points[i])
    corners.append(points[-1])

    out = [corners[0]]
    for a, b in zip(corners, corners[1:]):
        n = max(1, math.ceil(distance(a, b) / MAX_WAYPOINT_DIST - 1e-9))
        for k in range(1, n + 1):
            out.append((a[0] + (b[0] - a[0]) * k / n, a[1] + (b[1] - a[1]) * k / n))
    return out


def _turn_word(v1: Point, v2: Point) -> str:
    cross = v1[0] * v2[1] - v1[1] * v2[0]
    dot = v1[0] * v2[0] + v1[1] * v2[1]
    angle = math.degrees(math.atan2(cross, dot))
    if abs(angle) < 30.0:
        return "Continue straight"
    return "Turn left" if angle > 0 else "Turn right"


def _lower_first(text: str) -> str:
    return text[:1].lower() + text[1:]


def generate_episode(scene: Scene, seed: int, episode_id: Optional[str] = None) -> Episode:
    """Sample a start/goal pair in different rooms and describe the route in clauses."""
    if len(scene.rooms) < 2:
        raise ValueError("episodes need at least two rooms")
    rng = np.random.default_rng([scene.seed, seed])
    order = rng.permutation(len(scene.rooms))
    start_room, goal_room = scene.rooms[int(order[0])], scene.rooms[int(order[1])]
    target_index = int(rng.integers(len(goal_room.objects)))
    target = goal_room.objects[target_index]

    x0, y0, x1, y1 = (int(round(v / CELL)) for v in start_room.bounds)
    m = OBJECT_MARGIN_CELLS
    start_cells = [(ix, iy) for ix in range(x0 + m, x1 - m) for iy in range(y0 + m, y1 - m)]
    start_cell = start_cells[int(rng.integers(len(start_cells)))]
    sx, sy = scene.cell_center(start_cell)
    start = Pose(sx, sy, int(rng.integers(N_ANGLES)) * ANGLE_STEP)

    cells = scene.grid_path(start_cell, scene.cell_of(target.position))
    points = [scene.cell_center(c) for c in cells]

    sequence: List[Room] = []
    entries: List[Point] = []
    for p in points:
        room = next((r for r in scene.rooms if r.contains(p)), None)
        if room is not None and (not sequence or sequence[-1].id != room.id):
            sequence.append(room)
            entries.append(p)

    clauses = [f"Exit the {sequence[0].room_type}."]
    annotations = []
    if len(sequence) > 1:
        annotations.append(SubGoal("where", sequence[1].room_type, f"room:{sequence[1].id}"))
    for i in range(2, len(sequence)):
        v1 = (entries[i - 1][0] - entries[i - 2][0], entries[i - 1][1] - entries[i - 2][1])
        v2 = (entries[i][0] - entries[i - 1][0], entries[i][1] - entries[i - 1][1])
        clauses.append(f"{_turn_word(v1, v2)} into the {sequence[i].room_type}.")
        annotations.append(SubGoal("where", sequence[i].room_type, f"room:{sequence[i].id}"))
    clauses.append(f"Find the {target.label}.")
    annotations.append(SubGoal("what", target.label, f"object:{goal_room.id}/{target_index}"))

    sentences, i = [], 0
    moves = clauses[:-1]
    while i < len(moves):
        if i + 1 < len(moves) and rng.random() < 0.5:
            joiner = " and " if rng.random() < 0.7 else ", then "
            sentences.append(moves[i][:-1] + joiner + _lower_first(moves[i + 1]))
            i += 2
        else:
            sentences.append(moves[i])
            i += 1
    sentences.append(clauses[-1])

    return Episode(
        id=episode_id or f"scene{scene.seed}-ep{seed}",
        scene_seed=scene.seed,
        instruction=" ".join(sentences),
        start=start,
        goal=target.position,
        gt_path=_smooth_path(points),
        sub_goal_annotations=annotations,
    )


# -------------------------------
# Waypoint oracle
# -------------------------------
def _door_seeds(scene: Scene, pose: Pose, feasible: Dict[int, float]) -> Iterator[Tuple[int, float]]:
    """Door-aligned candidates, nearest visible door first."""
    origin = pose.position
    here = scene.room_at(origin)
    doors = {d.id: d for d in scene.doors_of(here.id)}
    for d in scene.doors:
        if distance(origin, d.position) <= 1.0:
            doors[d.id] = d
    ranked = sorted(doors.values(), key=lambda d: (distance(origin, d.position), d.id))
    for door in ranked:
        if not scene.segment_is_free(origin, door.position):
            continue
        nx_, ny_ = door.normal
        offset = (door.position[0] - origin[0]) * nx_ + (door.position[1] - origin[1]) * ny_
        sign = 1.0 if offset >= 0 else -1.0
        targets = [
            (door.position[0] + sign * DOOR_APPROACH * nx_, door.position[1] + sign * DOOR_APPROACH * ny_),
            door.position,
            (door.position[0] - sign * DOOR_APPROACH * nx_, door.position[1] - sign * DOOR_APPROACH * ny_),
        ]
        for target in targets:
            span = distance(origin, target)
            if span < DIST_STEP:
                continue
            rel = (int(round(normalize_heading(bearing(origin, target) - pose.heading) / ANGLE_STEP))
                   * ANGLE_STEP) % 360
            d = min(MAX_WAYPOINT_DIST, math.floor(span / DIST_STEP + 1e-9) * DIST_STEP)
            if feasible.get(rel, 0.0) >= d:
                yield rel, d
                break


def _heading_gap(headings: np.ndarray, other: int) -> np.ndarray:
    d = np.abs(headings - other) % 360
    return np.minimum(d, 360 - d)


def predict_waypoints(scene: Scene, pose: Pose, k: int = 7) -> List[Waypoint]:
    """Up to ``k`` collision-free, grid-quantized candidate waypoints around ``pose``.

    Door-aligned candidates come first; the rest are spread out by maximizing the smallest
    angular gap to what is already chosen. Indices follow increasing relative heading.
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    origin = pose.position
    if not scene.is_free(origin):
        raise CollisionError(f"Pose {origin} is inside an occupied cell")
    rel = np.arange(N_ANGLES) * ANGLE_STEP
    free = scene.reach(origin, pose.heading + rel, MAX_WAYPOINT_DIST + CLEARANCE)
    steps = np.minimum(np.floor((free - CLEARANCE) / DIST_STEP + 1e-9), N_DISTANCES)
    feasible = {int(r): float(s) * DIST_STEP for r, s in zip(rel, steps) if s >= 1}

    chosen: Dict[int, float] = {}
    for r, d in _door_seeds(scene, pose, feasible):
        if len(chosen) >= k:
            break
        chosen.setdefault(r, d)

    remaining = np.array(sorted(r for r in feasible if r not in chosen), dtype=int)
    reach = np.array([feasible[int(r)] for r in remaining])
    gap = np.full(len(remaining), np.inf)
    for c in chosen:
        gap = np.minimum(gap, _heading_gap(remaining, c))
    open_ = np.ones(len(remaining), dtype=bool)
    while len(chosen) < k and open_.any():
        # widest gap first, then the longer reach, then the smaller heading
        i = np.lexsort((remaining, -reach, -np.where(open_, gap, -np.inf)))[0]
        best = int(remaining[i])
        chosen[best] = feasible[best]
        open_[i] = False
        gap = np.minimum(gap, _heading_gap(remaining, best))

    waypoints = []
    for index, r in enumerate(sorted(chosen), start=1):
        d = chosen[r]
        dx, dy = heading_vector(pose.heading + r)
        sector, name = sector_of(r)
        waypoints.append(Waypoint(index, r, sector, name, d, (pose.x + d * dx, pose.y + d * dy)))
    return waypoints


# -------------------------------
# Motion and distances
# -------------------------------
def execute(scene: Scene, pose: Pose, actions: Sequence[Action]) -> Tuple[Pose, float]:
    """Apply low-level actions; forward steps stop at the first obstacle."""
    traveled = 0.0
    for action in actions:
        if action.kind == "stop":
            break
        if action.kind == "turn":
            if action.degrees not in (ANGLE_STEP, -ANGLE_STEP):
                raise ValueError(f"turns are ±{ANGLE_STEP} degrees, got {action.degrees}")
            pose = Pose(pose.x, pose.y, pose.heading + action.degrees)
        elif action.kind == "forward":
            step = scene.ray_distance(pose.position, pose.heading, DIST_STEP)
            dx, dy = heading_vector(pose.heading)
            pose = Pose(pose.x + step * dx, pose.y + step * dy, pose.heading)
            traveled += step
        else:
            raise ValueError(f"unknown action kind {action.kind!r}")
    return pose, traveled


def geodesic(scene: Scene, a: Point, b: Point) -> float:
    """Shortest 8-connected grid distance between the free cells nearest to a and b."""
    ca, cb = scene.nearest_free_cell(a), scene.nearest_free_cell(b)
    if ca == cb:
        return 0.0
    d = float(scene.distance_field(cb)[ca])
    if not math.isfinite(d):
        raise DisconnectedError(f"No free path between {a} and {b}")
    return round(d, 9)


# -------------------------------
# Serialization
# -------------------------------
def scene_to_records(scene: Scene) -> List[dict]:
    nx_, ny_ = scene.shape
    records: List[dict] = [{
        "record": "scene", "seed": scene.seed, "nx": nx_, "ny": ny_, "cell": CELL,
        "room_type_vocab": list(scene.room_type_vocab), "object_vocab": list(scene.object_vocab),
    }]
    for room in scene.rooms:
        records.append({"record": "room", "id": room.id, "room_type": room.room_type,
                        "bounds": list(room.bounds)})
        for index, obj in enumerate(room.objects):
            records.append({"record": "object", "room": room.id, "index": index,
                            "label": obj.label, "x": obj.position[0], "y": obj.position[1]})
    for door in scene.doors:
        records.append({"record": "door", "id": door.id, "rooms": list(door.rooms),
                        "x": door.position[0], "y": door.position[1],
                        "normal": list(door.normal), "width": door.width})
    for ix in range(nx_):
        records.append({"record": "occupancy", "ix": ix,
                        "cells": "".join("1" if v else "0" for v in scene.occupancy[ix])})
    return records


def scene_from_records(records: Sequence[dict]) -> Scene:
    header = next(r for r in records if r["record"] == "scene")
    occupancy = np.ones((header["nx"], header["ny"]), dtype=bool)
    objects: Dict[int, List[Tuple[int, SceneObject]]] = {}
    rooms_raw, doors = [], []
    for r in records:
        kind = r["record"]
        if kind == "occupancy":
            occupancy[r["ix"]] = [c == "1" for c in r["cells"]]
        elif kind == "room":
            rooms_raw.append(r)
        elif kind == "object":
            objects.setdefault(r["room"], []).append(
                (r["index"], SceneObject(r["label"], (r["x"], r["y"])))
            )
        elif kind == "door":
            doors.append(Door(r["id"], tuple(r["rooms"]), (r["x"], r["y"]),
                              tuple(r["normal"]), r["width"]))
    rooms = [
        Room(r["id"], tuple(r["bounds"]), r["room_type"],
             tuple(o for _, o in sorted(objects.get(r["id"], []), key=lambda t: t[0])))
        for r in sorted(rooms_raw, key=lambda r: r["id"])
    ]
    return Scene(
        seed=header["seed"], rooms=rooms, doors=sorted(doors, key=lambda d: d.id),
        occupancy=occupancy, room_type_vocab=tuple(header["room_type_vocab"]),
        object_vocab=tuple(header["object_vocab"]),
    )


def episode_to_records(episode: Episode) -> List[dict]:
    records: List[dict] = [{
        "record": "episode", "id": episode.id, "scene_seed": episode.scene_seed,
        "instruction": episode.instruction,
        "start": {"x": episode.start.x, "y": episode.start.y, "heading": episode.start.heading},
        "goal": list(episode.goal),
    }]
    for index, p in enumerate(episode.gt_path):
        records.append({"record": "path_point", "episode": episode.id, "index": index,
                        "x": p[0], "y": p[1]})
    for index, sub in enumerate(episode.sub_goal_annotations):
        records.append({"record": "annotation", "episode": episode.id, "index": index,
                        "kind": sub.kind, "target": sub.target, "region": sub.region})
    return records


def episodes_from_records(records: Sequence[dict]) -> List[Episode]:
    episodes: Dict[str, Episode] = {}
    for r in records:
        if r["record"] == "episode":
            s = r["start"]
            episodes[r["id"]] = Episode(
                id=r["id"], scene_seed=r["scene_seed"], instruction=r["instruction"],
                start=Pose(s["x"], s["y"], s["heading"]), goal=tuple(r["goal"]),
                gt_path=[], sub_goal_annotations=[],
            )
    for r in sorted((r for r in records if r["record"] != "episode"), key=lambda r: r["index"]):
        if r["record"] == "path_point":
            episodes[r["episode"]].gt_path.append((r["x"], r["y"]))
        elif r["record"] == "annotation":
            episodes[r["episode"]].sub_goal_annotations.append(
                SubGoal(r["kind"], r["target"], r["region"])
            )
    return list(episodes.values())
