"""Expert motion planning in the zero-turning-radius car-like state space.

Optimal local connections degenerate to rotate-in-place and straight
translate segments (forward or backward). Global planning is an anytime
batch-sampling scheme: uniform SE(2) batches (informed-ellipse restricted
once a solution exists), a k-nearest-neighbor graph with lazily validated
straight-sweep edges, and an exact shortest-path search after every batch.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import InvalidEndpoint, NoPathFound, OffPath
from .geometry import Pose2, se2_relative, wrap_angle
from .scene import Scene, collision_check, collision_mask, sweep_collision_check

LIN_STEP = 0.01  # dense-state spacing, meters
ANG_STEP = math.radians(1.0)  # dense-state spacing, radians
COST_STEP = 0.025  # quadrature spacing for the look-at penalty, meters


@dataclass(frozen=True)
class Rotate:
    dtheta: float


@dataclass(frozen=True)
class Translate:
    ds: float  # negative = backward


PathSegment = Rotate | Translate


@dataclass(frozen=True)
class CostWeights:
    w_translate: float = 1.0
    w_rotate: float = 0.3
    w_backward: float = 2.0
    w_lookat: float = 0.5

    def __post_init__(self):
        if self.w_translate <= 0 or min(self.w_rotate, self.w_backward, self.w_lookat) < 0:
            raise ValueError("weights must be nonnegative with w_translate > 0")


@dataclass(frozen=True)
class PlannerBudget:
    batches: int = 4
    batch_size: int = 24
    time_limit_s: float | None = None


@dataclass
class PlannedPath:
    """A rotate/translate segment chain with its dense state trace and cost."""

    start: Pose2
    segments: list[PathSegment]
    states: np.ndarray  # (n, 3) rows of x, y, heading
    cost: float


def apply_segment(pose: Pose2, seg: PathSegment) -> Pose2:
    if isinstance(seg, Rotate):
        return Pose2(pose.x, pose.y, pose.heading + seg.dtheta)
    return Pose2(
        pose.x + seg.ds * math.cos(pose.heading),
        pose.y + seg.ds * math.sin(pose.heading),
        pose.heading,
    )


def rollout(start: Pose2, segments: list[PathSegment]) -> np.ndarray:
    """Dense states along a segment chain at <= 1 cm / 1 degree spacing."""
    rows = [start.as_array()]
    pose = start
    for seg in segments:
        if isinstance(seg, Rotate):
            k = max(1, int(math.ceil(abs(seg.dtheta) / ANG_STEP)))
            for i in range(1, k + 1):
                h = pose.heading + seg.dtheta * (i / k)
                rows.append([pose.x, pose.y, wrap_angle(h)])
        else:
            k = max(1, int(math.ceil(abs(seg.ds) / LIN_STEP)))
            c, s = math.cos(pose.heading), math.sin(pose.heading)
            for i in range(1, k + 1):
                d = seg.ds * (i / k)
                rows.append([pose.x + d * c, pose.y + d * s, pose.heading])
        pose = apply_segment(pose, seg)
    return np.array(rows)


def _branches(a: Pose2, b: Pose2) -> list[tuple[bool, float, float, float]]:
    """(backward?, rot1, dist, rot2) for the forward and backward connections."""
    dx, dy = b.x - a.x, b.y - a.y
    dist = math.hypot(dx, dy)
    if dist < 1e-12:
        rot = wrap_angle(b.heading - a.heading)
        return [(False, rot, 0.0, 0.0)]
    bearing = math.atan2(dy, dx)
    out = []
    for backward in (False, True):
        move = bearing + math.pi if backward else bearing
        rot1 = wrap_angle(move - a.heading)
        rot2 = wrap_angle(b.heading - move)
        out.append((backward, rot1, dist, rot2))
    return out


def rs0_distance(a: Pose2, b: Pose2, w: CostWeights = CostWeights()) -> float:
    """Cost of the best rotate-translate-rotate connection between two poses."""
    best = math.inf
    for backward, rot1, dist, rot2 in _branches(a, b):
        c = w.w_translate * dist + w.w_rotate * (abs(rot1) + abs(rot2))
        if backward:
            c += w.w_backward * dist
        best = min(best, c)
    return best


def steer(
    a: Pose2, b: Pose2, allow_backward: bool = True, w: CostWeights = CostWeights()
) -> list[PathSegment]:
    """Segment list realizing the cheapest rotate-translate-rotate connection."""
    best, best_cost = None, math.inf
    for backward, rot1, dist, rot2 in _branches(a, b):
        if backward and not allow_backward:
            continue
        c = w.w_translate * dist + w.w_rotate * (abs(rot1) + abs(rot2))
        if backward:
            c += w.w_backward * dist
        if c < best_cost:
            best_cost, best = c, (backward, rot1, dist, rot2)
    backward, rot1, dist, rot2 = best
    segs: list[PathSegment] = []
    if abs(rot1) > 1e-12:
        segs.append(Rotate(rot1))
    if dist > 1e-12:
        segs.append(Translate(-dist if backward else dist))
    if abs(rot2) > 1e-12:
        segs.append(Rotate(rot2))
    return segs


def _lookat_integral(
    p0: np.ndarray, p1: np.ndarray, heading: float, target: np.ndarray
) -> float:
    """Trapezoid of |heading - bearing to target| over a straight forward move."""
    dist = float(np.linalg.norm(p1 - p0))
    if dist < 1e-12:
        return 0.0
    k = max(1, int(math.ceil(dist / COST_STEP)))
    t = np.linspace(0.0, 1.0, k + 1)
    pts = p0[None, :] + t[:, None] * (p1 - p0)[None, :]
    bearing = np.arctan2(target[1] - pts[:, 1], target[0] - pts[:, 0])
    dev = np.abs((heading - bearing + math.pi) % (2 * math.pi) - math.pi)
    return float((dev[0] / 2 + dev[1:-1].sum() + dev[-1] / 2) * (dist / k))


def segments_cost(
    start: Pose2, segments: list[PathSegment], target_center, w: CostWeights
) -> float:
    """Motion cost plus the look-at penalty accumulated over forward moves."""
    target = np.asarray(target_center, dtype=float)
    cost = 0.0
    pose = start
    for seg in segments:
        if isinstance(seg, Rotate):
            cost += w.w_rotate * abs(seg.dtheta)
        else:
            cost += w.w_translate * abs(seg.ds)
            if seg.ds < 0:
                cost += w.w_backward * abs(seg.ds)
            elif w.w_lookat > 0:
                p0 = np.array([pose.x, pose.y])
                nxt = apply_segment(pose, seg)
                cost += w.w_lookat * _lookat_integral(
                    p0, np.array([nxt.x, nxt.y]), pose.heading, target
                )
        pose = apply_segment(pose, seg)
    return cost


def path_cost(path: PlannedPath, target_center, w: CostWeights) -> float:
    return segments_cost(path.start, path.segments, target_center, w)


class _Roadmap:
    """Growing vertex set with memoized steer connections and edge sweeps."""

    def __init__(self, scene: Scene, radius: float, target, w: CostWeights, step: float):
        self.scene = scene
        self.radius = radius
        self.target = target
        self.w = w
        self.step = step
        self.poses: list[Pose2] = []
        self._conn: dict[tuple[int, int], tuple[float, list[PathSegment]]] = {}
        self._valid: dict[tuple[int, int], bool] = {}

    def add(self, pose: Pose2) -> int:
        self.poses.append(pose)
        return len(self.poses) - 1

    def connection(self, i: int, j: int) -> tuple[float, list[PathSegment]]:
        key = (i, j)
        if key not in self._conn:
            segs = steer(self.poses[i], self.poses[j], allow_backward=True, w=self.w)
            self._conn[key] = (segments_cost(self.poses[i], segs, self.target, self.w), segs)
        return self._conn[key]

    def edge_free(self, i: int, j: int) -> bool:
        key = (min(i, j), max(i, j))
        if key not in self._valid:
            # sweep at an inflated radius so every pose between samples is free
            self._valid[key] = not sweep_collision_check(
                self.scene,
                self.poses[key[0]],
                self.poses[key[1]],
                self.radius + self.step / 2,
                self.step,
            )
        return self._valid[key]


def _neighbor_lists(positions: np.ndarray, k: int) -> list[set[int]]:
    n = len(positions)
    nbrs: list[set[int]] = [set() for _ in range(n)]
    if n < 2:
        return nbrs
    d = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    kk = min(k, n - 1)
    for i in range(n):
        for j in np.argpartition(d[i], kk - 1)[:kk]:
            nbrs[i].add(int(j))
            nbrs[int(j)].add(i)
    nbrs[0].add(1)
    nbrs[1].add(0)
    return nbrs


def _shortest_path(rm: _Roadmap, nbrs: list[set[int]]) -> tuple[float, list[int]]:
    """A* from vertex 0 to vertex 1; the rotate-translate metric is the
    heuristic (it lower-bounds any path cost, so the search stays exact)."""
    n = len(rm.poses)
    goal = rm.poses[1]
    h = [rs0_distance(p, goal, rm.w) for p in rm.poses]
    dist = [math.inf] * n
    prev = [-1] * n
    dist[0] = 0.0
    heap = [(h[0], 0)]
    while heap:
        f, u = heapq.heappop(heap)
        if f > dist[u] + h[u] + 1e-12:
            continue
        if u == 1:
            break
        for v in nbrs[u]:
            c, _ = rm.connection(u, v)
            nd = dist[u] + c
            if nd < dist[v] - 1e-12 and rm.edge_free(u, v):
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd + h[v], v))
    if math.isinf(dist[1]):
        return math.inf, []
    chain = [1]
    while chain[-1] != 0:
        chain.append(prev[chain[-1]])
    return dist[1], chain[::-1]


def _sample_positions(
    rng: np.random.Generator, scene: Scene, n: int, informed: tuple[np.ndarray, np.ndarray, float] | None
) -> np.ndarray:
    """n free-space positions, uniform in bounds or in the informed ellipse."""
    b = scene.bounds
    out = np.empty((n, 2))
    got = 0
    tries = 0
    while got < n and tries < 50 * n:
        tries += 1
        if informed is None:
            pt = np.array([rng.uniform(b.xmin, b.xmax), rng.uniform(b.ymin, b.ymax)])
        else:
            center, axes_rot, (sa, sb) = informed[0], informed[1], informed[2]
            r = math.sqrt(rng.uniform())
            ang = rng.uniform(0.0, 2 * math.pi)
            pt = center + axes_rot @ np.array([sa * r * math.cos(ang), sb * r * math.sin(ang)])
            if not (b.xmin <= pt[0] <= b.xmax and b.ymin <= pt[1] <= b.ymax):
                continue
        out[got] = pt
        got += 1
    return out[:got]


def plan(
    scene: Scene,
    start: Pose2,
    goal: Pose2,
    radius: float,
    target_center,
    w: CostWeights = CostWeights(),
    budget: PlannerBudget | int = PlannerBudget(),
    seed: int = 0,
    validation_step: float = LIN_STEP,
    k_neighbors: int = 8,
) -> PlannedPath:
    """Anytime informed batch-sampling planner over SE(2).

    Deterministic for a fixed seed and batch budget; returns the best path
    found, or raises NoPathFound when the budget is exhausted without one.
    """
    if isinstance(budget, int):
        budget = PlannerBudget(batches=budget)
    if collision_check(scene, start, radius):
        raise InvalidEndpoint("start pose is in collision")
    if collision_check(scene, goal, radius):
        raise InvalidEndpoint("goal pose is in collision")

    rng = np.random.default_rng(seed)
    rm = _Roadmap(scene, radius, np.asarray(target_center, dtype=float), w, validation_step)
    rm.add(start)
    rm.add(goal)
    # stage the goal approach: back off along the goal heading so tight
    # docking pockets are reachable without lucky uniform samples
    b = scene.bounds
    for back in (0.25, 0.5, 1.0):
        pose = Pose2(
            goal.x - back * math.cos(goal.heading),
            goal.y - back * math.sin(goal.heading),
            goal.heading,
        )
        if b.xmin <= pose.x <= b.xmax and b.ymin <= pose.y <= b.ymax:
            if not collision_check(scene, pose, radius):
                rm.add(pose)
    lower_bound = rs0_distance(start, goal, w)
    best_cost, best_chain = math.inf, []
    deadline = None if budget.time_limit_s is None else time.monotonic() + budget.time_limit_s

    for _ in range(max(1, budget.batches)):
        informed = None
        if math.isfinite(best_cost):
            c_min = math.hypot(goal.x - start.x, goal.y - start.y)
            a_len = max(best_cost / w.w_translate / 2, c_min / 2 + 1e-9)
            b_len = math.sqrt(max(a_len ** 2 - (c_min / 2) ** 2, 1e-18))
            center = np.array([(start.x + goal.x) / 2, (start.y + goal.y) / 2])
            ang = math.atan2(goal.y - start.y, goal.x - start.x)
            c, s = math.cos(ang), math.sin(ang)
            informed = (center, np.array([[c, -s], [s, c]]), (a_len, b_len))
        pts = _sample_positions(rng, scene, budget.batch_size, informed)
        headings = rng.uniform(-math.pi, math.pi, size=budget.batch_size)
        if len(pts):
            keep = ~collision_mask(scene, pts, radius)
            for pt, h, ok in zip(pts, headings, keep):
                if ok:
                    rm.add(Pose2(float(pt[0]), float(pt[1]), float(h)))

        positions = np.array([[p.x, p.y] for p in rm.poses])
        nbrs = _neighbor_lists(positions, k_neighbors)
        cost, chain = _shortest_path(rm, nbrs)
        if cost < best_cost:
            best_cost, best_chain = cost, chain
        if best_cost <= lower_bound + 1e-9:
            break
        if deadline is not None and time.monotonic() > deadline:
            break

    if not best_chain:
        raise NoPathFound("no collision-free path within the planning budget")
    segments: list[PathSegment] = []
    for i, j in zip(best_chain[:-1], best_chain[1:]):
        segments.extend(rm.connection(i, j)[1])
    return PlannedPath(start=start, segments=segments, states=rollout(start, segments), cost=best_cost)


def resample_keyframes(
    path: PlannedPath, trans_gap: float = 0.2, rot_gap: float = math.radians(5.0)
) -> list[Pose2]:
    """Greedy keyframe extraction on 0.2 m / 5 deg pose gaps.

    A state is emitted as soon as it differs from the last keyframe by the
    translation or rotation gap, so consecutive keyframes always satisfy the
    gap rule; the first and final states are always emitted.
    """
    states = path.states
    idx = [0]
    for i in range(1, len(states)):
        last = states[idx[-1]]
        dp = math.hypot(states[i, 0] - last[0], states[i, 1] - last[1])
        dh = abs(wrap_angle(states[i, 2] - last[2]))
        if dp >= trans_gap - 1e-9 or dh >= rot_gap - 1e-9:
            idx.append(i)
    if idx[-1] != len(states) - 1:
        idx.append(len(states) - 1)
    return [Pose2.from_array(states[i]) for i in idx]


def waypoints_from_path(
    path: PlannedPath,
    current: Pose2,
    n: int = 12,
    dt: float = 0.2,
    v_ref: float = 0.5,
    omega_ref: float = 1.0,
    max_projection: float = 0.3,
) -> list[Pose2]:
    """Time-parameterized egocentric waypoint chain along the remaining path.

    The remaining path (from the projection of ``current``) is traversed at
    v_ref / omega_ref and sampled every dt; each sample is expressed in its
    predecessor's frame (the first relative to ``current``), and the final
    pose is held once the path ends.
    """
    if v_ref * dt > 0.2 + 1e-12:
        raise ValueError("v_ref * dt must not exceed the 0.2 m step range")
    states = path.states
    d2 = (states[:, 0] - current.x) ** 2 + (states[:, 1] - current.y) ** 2
    proj = int(np.argmin(d2))
    if math.sqrt(d2[proj]) > max_projection:
        raise OffPath(f"pose projects {math.sqrt(d2[proj]):.3f} m from the path")

    rem = states[proj:]
    durations = np.empty(max(len(rem) - 1, 0))
    for i in range(len(rem) - 1):
        ds = math.hypot(rem[i + 1, 0] - rem[i, 0], rem[i + 1, 1] - rem[i, 1])
        dh = abs(wrap_angle(rem[i + 1, 2] - rem[i, 2]))
        durations[i] = ds / v_ref if ds > 1e-12 else dh / omega_ref
    tau = np.concatenate([[0.0], np.cumsum(durations)])

    world: list[Pose2] = []
    for k in range(1, n + 1):
        t = k * dt
        if len(rem) == 1 or t >= tau[-1]:
            world.append(Pose2.from_array(rem[-1]))
            continue
        i = int(np.searchsorted(tau, t, side="right"))
        f = (t - tau[i - 1]) / (tau[i] - tau[i - 1])
        x = rem[i - 1, 0] + f * (rem[i, 0] - rem[i - 1, 0])
        y = rem[i - 1, 1] + f * (rem[i, 1] - rem[i - 1, 1])
        h = rem[i - 1, 2] + f * wrap_angle(rem[i, 2] - rem[i - 1, 2])
        world.append(Pose2(x, y, h))

    steps = []
    prev = current
    for p in world:
        steps.append(se2_relative(prev, p))
        prev = p
    return steps
