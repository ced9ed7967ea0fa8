"""Terminal, driver and obstacle evaluation on the tree."""

import numpy as np
import pytest

from rbsde import (BarrierSpec, DriverSpec, JumpTimeOffGrid, MarkSet, PenaltyTerm,
                   ProblemSpec, TerminalSpec, build_tree, eval_barrier, eval_driver)
from rbsde.processes import linear_obstacle


def test_counterexample_barrier_values_and_left_limit():
    tree = build_tree(4)
    spec = BarrierSpec(pieces=((0.0, 1.0), (0.5, 0.0)))
    vals = eval_barrier(spec, tree)
    expected = [1.0, 1.0, 0.0, 0.0, 0.0]
    for k, e in enumerate(expected):
        assert np.all(vals.values[k] == e)
    assert vals.jump_levels == (2,)
    assert np.all(vals.left[2] == 1.0)


def test_constant_barrier():
    tree = build_tree(3, MarkSet(sizes=(1.0,), intensities=(0.5,)))
    vals = eval_barrier(BarrierSpec(pieces=((0.0, -10.0),)), tree)
    assert vals.jump_levels == ()
    for level in vals.values:
        assert np.all(level == -10.0)


def test_brownian_barrier_tracks_node_state():
    tree = build_tree(2)
    vals = eval_barrier(BarrierSpec(stochastic=lambda t, w, c: w), tree)
    for k in range(3):
        assert np.array_equal(vals.values[k], tree.w[k])


def test_declared_jump_off_grid_rejected():
    tree = build_tree(4)
    spec = BarrierSpec(pieces=((0.0, 1.0),), jumps=((0.3, 1.0),))
    with pytest.raises(JumpTimeOffGrid):
        eval_barrier(spec, tree)


def test_right_continuity_at_declared_jumps():
    tree = build_tree(4)
    spec = BarrierSpec(pieces=((0.0, 2.0), (0.25, -1.0), (0.75, 0.5)))
    vals = eval_barrier(spec, tree)
    # value at the jump time is the right value, the left table keeps the limit
    assert np.all(vals.values[1] == -1.0)
    assert np.all(vals.left[1] == 2.0)
    assert np.all(vals.values[3] == 0.5)
    assert np.all(vals.left[3] == -1.0)


def test_driver_zero_and_penalty_examples():
    assert eval_driver(DriverSpec(), 0.3, 4.0, -2.0, ()) == 0.0
    pen = DriverSpec(penalty=PenaltyTerm(weight=3.0, barrier=BarrierSpec()))
    assert eval_driver(pen, 0.0, 0.4, 0.0, (), barrier_value=1.0) == pytest.approx(1.8)
    with pytest.raises(ValueError):
        eval_driver(pen, 0.0, 0.4, 0.0, ())


def test_driver_linear_arithmetic():
    marks = MarkSet(sizes=(1.0,), intensities=(0.5,))
    spec = DriverSpec(a=1.0, b=2.0, c=1.0, marks=marks)
    assert eval_driver(spec, 0.0, 1.0, 1.0, (2.0,)) == pytest.approx(4.0)
    assert spec.lipschitz_constant == pytest.approx(1.0 + 2.0 + np.sqrt(0.5))


def test_driver_lipschitz_property_sampled():
    marks = MarkSet(sizes=(1.0, 2.0), intensities=(0.5, 0.25))
    lam = marks.intensity_array
    spec = DriverSpec(base=lambda t: np.sin(t), a=-0.7, b=1.3, c=-0.9, marks=marks,
                      penalty=PenaltyTerm(weight=2.0, barrier=BarrierSpec()))
    c_f = spec.lipschitz_constant
    rng = np.random.default_rng(42)
    for _ in range(10_000):
        y1, y2, z1, z2 = rng.uniform(-3, 3, 4)
        v1, v2 = rng.uniform(-3, 3, (2, 2))
        f1 = eval_driver(spec, 0.25, y1, z1, v1, barrier_value=0.5)
        f2 = eval_driver(spec, 0.25, y2, z2, v2, barrier_value=0.5)
        bound = c_f * (abs(y1 - y2) + abs(z1 - z2)
                       + np.sqrt(((v1 - v2) ** 2 * lam).sum()))
        assert abs(f1 - f2) <= bound + 1e-12


def test_terminal_kinds():
    tree = build_tree(2)
    assert np.all(TerminalSpec(constant=1.5).evaluate(tree) == 1.5)
    payoff = TerminalSpec(payoff=lambda w, c: np.maximum(w, 0.0)).evaluate(tree)
    assert payoff == pytest.approx(np.maximum(tree.w[-1], 0.0))
    with pytest.raises(ValueError):
        TerminalSpec()
    with pytest.raises(ValueError):
        TerminalSpec(constant=1.0, payoff=lambda w, c: w)


def test_compensated_obstacle_matches_conditional_mean():
    marks = MarkSet(sizes=(1.0,), intensities=(0.6,))
    tree = build_tree(4, marks)
    fn = linear_obstacle(0.2, 0.5, (0.3,), compensate=marks)
    # backward conditional expectations of the terminal form reproduce it
    values = fn(1.0, tree.w[-1], tree.counts[-1])
    for k in range(tree.num_steps - 1, -1, -1):
        values = tree.cond_exp(values)
        expected = fn(tree.time(k), tree.w[k], tree.counts[k])
        assert np.max(np.abs(values - expected)) <= 1e-13


def test_problem_spec_validation():
    with pytest.raises(ValueError):
        ProblemSpec(num_steps=2, barrier=BarrierSpec(), lower=BarrierSpec(),
                    upper=BarrierSpec())
    with pytest.raises(ValueError):
        ProblemSpec(num_steps=2, lower=BarrierSpec())
    assert ProblemSpec(num_steps=2).kind == "standard"
    assert ProblemSpec(num_steps=2, barrier=BarrierSpec()).kind == "one_barrier"


def test_barrier_spec_validation():
    with pytest.raises(ValueError):
        BarrierSpec(pieces=((0.5, 1.0),))
    with pytest.raises(ValueError):
        BarrierSpec(pieces=((0.0, 1.0), (0.2, 2.0), (0.2, 3.0)))
    with pytest.raises(ValueError):
        BarrierSpec(jumps=((0.0, 1.0),))
