import numpy as np
import pytest

from beliefplan.belief_rrt import RrtParams
from beliefplan.dynamics import SwitchedSystem, SystemMode
from beliefplan.formula import Until, always, monitor, named, parse_formula
from beliefplan.gaussian import make_belief
from beliefplan.geometry import box_polytope
from beliefplan.synthesis import (
    Problem,
    SolutionTrajectory,
    solve,
    trajectory_query,
)


def _simple_problem(formula_text, named_texts=(), noise="0.01", num_modes=1):
    mode = SystemMode(
        A=np.eye(1), B=np.eye(1), W=np.zeros((1, 1)), C=np.eye(1), noise=noise
    )
    sys = SwitchedSystem((mode,) * num_modes, box_polytope([(-1, 1)]))
    names = {}
    for fname, text in named_texts:
        names[fname] = named(parse_formula(text, 1, num_modes, names), fname)
    f = parse_formula(formula_text, 1, num_modes, names)
    initial = make_belief([0.0], [[0.01]])
    return Problem(sys, initial, f)


def _params(cap=3000):
    return RrtParams(
        iteration_cap=cap, delta_near=1.0, delta_drain=0.5,
        goal_bias=0.25, min_num_of_steps=1, max_num_of_steps=5,
    )


def test_problem_dimension_check():
    mode = SystemMode(np.eye(1), np.eye(1), np.zeros((1, 1)))
    sys = SwitchedSystem((mode,), box_polytope([(-1, 1)]))
    f = parse_formula("true", 2, 1)
    with pytest.raises(ValueError):
        Problem(sys, make_belief([0.0, 0.0], np.eye(2)), f)


def test_trajectory_query_fenceposts():
    b = make_belief([0.0], [[1.0]])
    t = SolutionTrajectory((b, b, b), (0, 0), (np.zeros(1), np.zeros(1)), (0,))
    assert trajectory_query(t, "mean", 2) is t.beliefs[2].mean
    assert trajectory_query(t, "action", 1) == 0
    with pytest.raises(IndexError):
        trajectory_query(t, "control", 2)
    with pytest.raises(IndexError):
        trajectory_query(t, "mean", 3)
    with pytest.raises(ValueError):
        trajectory_query(t, "variance", 0)


def test_solve_reach_and_hold():
    problem = _simple_problem(
        "(safe) U[0,20] G[0,5] (goal)",
        named_texts=[
            ("safe", "P(-x0 <= 1) >= 0.95 & P(x0 <= 6) >= 0.95"),
            ("goal", "P(x0 - 5 <= 0.3) >= 0.9 & P(5 - x0 <= 0.3) >= 0.9"),
        ],
    )
    res = solve(problem, _params(), k_max=3, rng=np.random.default_rng(0))
    assert res.ok
    t = res.trajectory
    assert t.num_steps <= 26
    assert monitor(problem.formula, t.as_trace(), 0) is True
    # plan and log shape
    assert res.plan is not None
    assert res.candidate_log[-1]["outcome"] == "success"


def test_solve_trajectory_satisfies_monitor_always_formula():
    problem = _simple_problem(
        "G[0,10] (safe)",
        named_texts=[("safe", "P(-x0 <= 1) >= 0.95 & P(x0 <= 1) >= 0.95")],
    )
    res = solve(problem, _params(), k_max=2, rng=np.random.default_rng(2))
    assert res.ok
    assert monitor(problem.formula, res.trajectory.as_trace(), 0) is True
    assert res.trajectory.num_steps <= 11


def test_solve_no_solution_when_goal_unreachable():
    # goal region deterministically outside anything reachable while
    # staying alive: the cone requires x0 <= -50 at 0.9 confidence
    problem = _simple_problem(
        "F[0,5] (goal)",
        named_texts=[("goal", "P(x0 <= -50) >= 0.9")],
    )
    res = solve(problem, _params(cap=200), k_max=2, rng=np.random.default_rng(0))
    assert not res.ok
    assert res.trajectory is None
    assert res.counterexamples  # at least the failing plan prefix
    assert all(e["outcome"] != "success" for e in res.candidate_log)


def test_solve_records_counterexamples_and_continues():
    """The initial belief is outside the goal cone, so the single-segment
    goal plan fails with infeasible-start before the two-segment plan
    succeeds."""
    problem = _simple_problem(
        "(safe) U[0,20] G[0,5] (goal)",
        named_texts=[
            ("safe", "P(-x0 <= 1) >= 0.95 & P(x0 <= 6) >= 0.95"),
            ("goal", "P(x0 - 5 <= 0.3) >= 0.9 & P(5 - x0 <= 0.3) >= 0.9"),
        ],
    )
    res = solve(problem, _params(), k_max=3, rng=np.random.default_rng(0))
    assert res.ok
    assert res.iterations >= 2
    assert (("goal", 0),) in [tuple(p) for p in res.counterexamples]
    first = res.candidate_log[0]
    assert first["plan"] == [["goal", 0]]
    assert first["outcome"] == "infeasible-start"


def test_solve_deterministic_given_seed():
    problem = _simple_problem(
        "F[0,15] (goal)",
        named_texts=[("goal", "P(x0 - 3 <= 0.3) >= 0.9 & P(3 - x0 <= 0.3) >= 0.9")],
    )
    r1 = solve(problem, _params(), k_max=2, rng=np.random.default_rng(8))
    r2 = solve(problem, _params(), k_max=2, rng=np.random.default_rng(8))
    assert r1.ok == r2.ok
    if r1.ok:
        assert r1.trajectory.num_steps == r2.trajectory.num_steps
        for a, b in zip(r1.trajectory.beliefs, r2.trajectory.beliefs):
            assert np.array_equal(a.mean, b.mean)
            assert np.array_equal(a.cov, b.cov)


def test_segment_boundaries_consistent():
    problem = _simple_problem(
        "(safe) U[0,20] G[0,5] (goal)",
        named_texts=[
            ("safe", "P(-x0 <= 1) >= 0.95 & P(x0 <= 6) >= 0.95"),
            ("goal", "P(x0 - 5 <= 0.3) >= 0.9 & P(5 - x0 <= 0.3) >= 0.9"),
        ],
    )
    res = solve(problem, _params(), k_max=3, rng=np.random.default_rng(0))
    assert res.ok
    t = res.trajectory
    assert len(t.segment_boundaries) == len(res.plan.segments)
    assert t.segment_boundaries[0] == 0
    assert all(
        a < b for a, b in zip(t.segment_boundaries, t.segment_boundaries[1:])
    )
    assert t.segment_boundaries[-1] <= t.num_steps
