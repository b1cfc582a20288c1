"""Sparse-RRT variant over belief states for one plan segment.

The tree grows in the belief space under maximum-likelihood-observation
propagation. Selection prefers low-uncertainty nodes among those near a
sampled mean-space point (active perception); insertion drains nearby
dominated nodes. A segment succeeds when some node's belief enters the
goal cone and a zero-control dwell keeps the goal satisfied for the
required number of further steps.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import SwitchedSystem, SystemMode, propagate_mlo
from .gaussian import BeliefState, uncertainty_measure
from .geometry import (
    BeliefCone,
    Polytope,
    cone_contains,
    polytope_contains,
    polytope_sample,
)

_BOX_CLIP = 10.0  # clip unbounded sampling directions this far past the start
_NUM_RANDOM_CONTROLS = 7


@dataclass(frozen=True)
class RrtParams:
    """Search tunables. rrt_timeout is wall-clock seconds; iteration_cap,
    when set, bounds the loop instead and makes runs reproducible."""

    rrt_timeout: float | None = None
    iteration_cap: int | None = None
    delta_near: float = 1.0
    delta_drain: float = 0.5
    goal_bias: float = 0.25
    min_num_of_steps: int = 1
    max_num_of_steps: int = 1

    def __post_init__(self):
        if self.rrt_timeout is None and self.iteration_cap is None:
            raise ValueError("either rrt_timeout or iteration_cap is required")
        if self.rrt_timeout is not None and self.rrt_timeout <= 0:
            raise ValueError("rrt_timeout must be positive")
        if self.iteration_cap is not None and self.iteration_cap < 1:
            raise ValueError("iteration_cap must be at least 1")
        if not self.delta_drain <= self.delta_near:
            raise ValueError("delta_drain must not exceed delta_near")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal_bias must lie in [0, 1]")
        if not 1 <= self.min_num_of_steps <= self.max_num_of_steps:
            raise ValueError("need 1 <= min_num_of_steps <= max_num_of_steps")


@dataclass
class RrtNode:
    belief: BeliefState
    parent: int | None
    control: np.ndarray | None  # constant over the extension
    steps_from_parent: int
    step_beliefs: tuple  # beliefs after each step of the extension
    depth_steps: int
    node_id: int
    active: bool = True

    @property
    def trace_cov(self) -> float:
        return uncertainty_measure(self.belief)


@dataclass(frozen=True)
class SegmentTask:
    """One plan segment packaged for the continuous layer."""

    mode: int
    stay: BeliefCone
    goal: BeliefCone
    min_dwell_in_goal: int
    max_total_steps: int

    def __post_init__(self):
        if self.max_total_steps < 1:
            raise ValueError("max_total_steps must be at least 1")
        if self.min_dwell_in_goal < 0:
            raise ValueError("min_dwell_in_goal must be nonnegative")


@dataclass(frozen=True)
class SegmentResult:
    status: str  # "success" | "timeout" | "infeasible-start"
    beliefs: tuple = ()
    controls: tuple = ()

    @property
    def ok(self) -> bool:
        return self.status == "success"

    @property
    def num_steps(self) -> int:
        return len(self.controls)


def rrt_select(tree: list, sample_point: np.ndarray, delta_near: float) -> int:
    """Among active nodes within delta_near of the sample, the one with
    the least covariance trace; otherwise the nearest active node.
    Ties break toward the lowest node id."""
    best_near = None
    best_near_key = None
    best_far = None
    best_far_key = None
    for node in tree:
        if not node.active:
            continue
        dist = float(np.linalg.norm(node.belief.mean - sample_point))
        if dist <= delta_near:
            key = (node.trace_cov, node.node_id)
            if best_near_key is None or key < best_near_key:
                best_near_key = key
                best_near = node.node_id
        key = (dist, node.node_id)
        if best_far_key is None or key < best_far_key:
            best_far_key = key
            best_far = node.node_id
    if best_near is not None:
        return best_near
    if best_far is None:
        raise ValueError("tree has no active nodes")
    return best_far


def _clamp_to_box(u: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.minimum(np.maximum(u, lo), hi)


def rrt_extend(
    mode: SystemMode,
    node: RrtNode,
    target_point: np.ndarray,
    horizon: int,
    stay: BeliefCone,
    control_domain: Polytope,
    rng: np.random.Generator,
):
    """Try 8 constant controls (7 uniform, 1 greedy least-squares toward
    the target) for `horizon` steps each; keep the survivor whose final
    mean is closest to the target. Returns (control, step beliefs) or
    None when every candidate leaves the stay cone."""
    candidates = [polytope_sample(control_domain, rng) for _ in range(_NUM_RANDOM_CONTROLS)]
    lo, hi = control_domain.bounding_box()
    reach = horizon * mode.B
    residual = target_point - node.belief.mean
    greedy, *_ = np.linalg.lstsq(reach, residual, rcond=None)
    greedy = _clamp_to_box(greedy, lo, hi)
    if polytope_contains(control_domain, greedy):
        candidates.append(greedy)

    best = None
    best_dist = None
    for u in candidates:
        beliefs = []
        b = node.belief
        ok = True
        for _ in range(horizon):
            b = propagate_mlo(mode, b, u)
            beliefs.append(b)
            if not cone_contains(stay, b):
                ok = False
                break
        if not ok:
            continue
        dist = float(np.linalg.norm(b.mean - target_point))
        if best_dist is None or dist < best_dist:
            best_dist = dist
            best = (u, tuple(beliefs))
    return best


def rrt_drain(tree: list, new_node: RrtNode, delta_drain: float) -> None:
    """Deactivate active non-ancestor nodes within delta_drain of the
    new node that carry strictly more uncertainty."""
    ancestors = set()
    cursor = new_node.parent
    while cursor is not None:
        ancestors.add(cursor)
        cursor = tree[cursor].parent
    new_trace = new_node.trace_cov
    for node in tree:
        if not node.active or node.node_id == new_node.node_id:
            continue
        if node.node_id in ancestors:
            continue
        if (
            np.linalg.norm(node.belief.mean - new_node.belief.mean) <= delta_drain
            and node.trace_cov > new_trace
        ):
            node.active = False


def _cone_mean_box(cone: BeliefCone, center: np.ndarray) -> tuple:
    """Axis-aligned sampling box from the mean-space shadow of the cone
    (h.x + c <= 0 per constraint); unbounded directions are clipped to
    +-_BOX_CLIP around the center."""
    n = center.shape[0]
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    for pred in cone.constraints:
        h = pred.expr.h
        nz = np.nonzero(h)[0]
        if nz.size != 1:
            continue  # non-axis constraints do not tighten the box
        j = nz[0]
        bound = -pred.expr.c / h[j]
        if h[j] > 0:
            hi[j] = min(hi[j], bound)
        else:
            lo[j] = max(lo[j], bound)
    lo = np.where(np.isfinite(lo), lo, center - _BOX_CLIP)
    hi = np.where(np.isfinite(hi), hi, center + _BOX_CLIP)
    hi = np.maximum(hi, lo)
    return lo, hi


def _dwell_in_goal(
    mode: SystemMode, belief: BeliefState, goal: BeliefCone, steps: int
):
    """Zero-control dwell; returns the visited beliefs or None if the
    goal cone breaks mid-dwell."""
    u0 = np.zeros(mode.control_dim)
    out = []
    b = belief
    for _ in range(steps):
        b = propagate_mlo(mode, b, u0)
        if not cone_contains(goal, b):
            return None
        out.append(b)
    return out


def _reconstruct(tree: list, node_id: int):
    """Step-by-step beliefs and controls from the root to a node."""
    chain = []
    cursor = node_id
    while cursor is not None:
        chain.append(tree[cursor])
        cursor = tree[cursor].parent
    chain.reverse()
    beliefs = [chain[0].belief]
    controls = []
    for node in chain[1:]:
        beliefs.extend(node.step_beliefs)
        controls.extend([node.control] * node.steps_from_parent)
    return beliefs, controls


def solve_segment(
    sys: SwitchedSystem,
    task: SegmentTask,
    start: BeliefState,
    params: RrtParams,
    rng: np.random.Generator,
) -> SegmentResult:
    """Steer from `start` to the goal cone while the stay cone holds.

    Runs until success, the iteration cap, or the wall-clock timeout.
    """
    mode = sys.modes[task.mode]
    start_in_stay = cone_contains(task.stay, start)
    start_in_goal = cone_contains(task.goal, start)
    if not start_in_stay and not start_in_goal:
        return SegmentResult("infeasible-start")

    if start_in_goal:
        if task.min_dwell_in_goal == 0:
            return SegmentResult("success", (start,), ())
        if task.min_dwell_in_goal <= task.max_total_steps:
            dwell = _dwell_in_goal(mode, start, task.goal, task.min_dwell_in_goal)
            if dwell is not None:
                u0 = np.zeros(mode.control_dim)
                return SegmentResult(
                    "success",
                    (start, *dwell),
                    (u0,) * task.min_dwell_in_goal,
                )

    goal_lo, goal_hi = _cone_mean_box(task.goal, start.mean)
    stay_lo, stay_hi = _cone_mean_box(task.stay, start.mean)

    root = RrtNode(
        belief=start, parent=None, control=None, steps_from_parent=0,
        step_beliefs=(), depth_steps=0, node_id=0,
    )
    tree = [root]

    deadline = (
        time.monotonic() + params.rrt_timeout
        if params.rrt_timeout is not None
        else None
    )
    iteration = 0
    while True:
        if params.iteration_cap is not None and iteration >= params.iteration_cap:
            return SegmentResult("timeout")
        if deadline is not None and time.monotonic() >= deadline:
            return SegmentResult("timeout")
        iteration += 1

        if rng.random() < params.goal_bias:
            sample = rng.uniform(goal_lo, goal_hi)
        else:
            sample = rng.uniform(stay_lo, stay_hi)
        node = tree[rrt_select(tree, sample, params.delta_near)]
        steps = int(rng.integers(params.min_num_of_steps, params.max_num_of_steps + 1))
        if node.depth_steps + steps > task.max_total_steps:
            continue
        branch = rrt_extend(
            mode, node, sample, steps, task.stay, sys.control_domain, rng
        )
        if branch is None:
            continue
        control, step_beliefs = branch
        new_node = RrtNode(
            belief=step_beliefs[-1],
            parent=node.node_id,
            control=control,
            steps_from_parent=steps,
            step_beliefs=step_beliefs,
            depth_steps=node.depth_steps + steps,
            node_id=len(tree),
        )
        tree.append(new_node)
        rrt_drain(tree, new_node, params.delta_drain)

        if not cone_contains(task.goal, new_node.belief):
            continue
        if new_node.depth_steps + task.min_dwell_in_goal > task.max_total_steps:
            continue
        dwell = (
            []
            if task.min_dwell_in_goal == 0
            else _dwell_in_goal(mode, new_node.belief, task.goal, task.min_dwell_in_goal)
        )
        if dwell is None:
            continue
        beliefs, controls = _reconstruct(tree, new_node.node_id)
        if dwell:
            u0 = np.zeros(mode.control_dim)
            beliefs.extend(dwell)
            controls.extend([u0] * task.min_dwell_in_goal)
        return SegmentResult("success", tuple(beliefs), tuple(controls))
