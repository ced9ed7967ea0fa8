"""One-obstacle reflected solver and its Snell-envelope cross check.

The backward induction reflects after the implicit driver solve:
Y_k = max(S_k, candidate), candidate solving y = E[Y_{k+1}] + f dt, so
the compensator increment Y_k - candidate is nonnegative and assigned
one step ahead.  The jump-type part of the compensator is extracted at
the declared predictable jump times of the obstacle via the left-limit
formula, with a binding tolerance on the preceding grid slot.
"""

from __future__ import annotations

import numpy as np

from .bsde import (SolutionQuadruple, _implicit_y, _source_term, barrier_values,
                   check_stepsize, project_level, terminal_values)
from .errors import DriverNotCoefficientFree, TerminalBelowBarrier
from .processes import DriverSpec
from .snell import BIND_TOL, snell
from .tree import Process, ScenarioTree

TERMINAL_SLACK = 1e-12


def _split_jump_mass(tree: ScenarioTree, y: Process, k_total: Process,
                     obstacle, bind_tol: float = BIND_TOL):
    """Jump-type compensator mass at declared obstacle jump times.

    At a declared level the increment is (S_left - Y_k)^+ on the event
    that the solution sat on the left limit one step earlier; the k - 1
    slot stands in for the left limit of Y.
    """
    n = tree.num_steps
    k_d: Process = [np.zeros(tree.level_size(k)) for k in range(n + 1)]
    for k in range(1, n + 1):
        inc = np.zeros(tree.level_size(k))
        if k in obstacle.left:
            left = obstacle.left[k]
            prev = tree.lift(y[k - 1])
            binding = np.abs(prev - left) <= bind_tol
            inc = np.where(binding, np.maximum(left - y[k], 0.0), 0.0)
        k_d[k] = tree.lift(k_d[k - 1]) + inc
    k_c = [k_total[k] - k_d[k] for k in range(n + 1)]
    return k_c, k_d


def solve_reflected_one(tree: ScenarioTree, driver, terminal, barrier) -> SolutionQuadruple:
    """Solve the one-obstacle problem by direct obstacle backward induction.

    Preconditions: the terminal payoff dominates the obstacle at every
    leaf and dt times the driver coefficient Lipschitz constant is below
    one.  Penalty drivers belong to the penalisation scheme, not here.
    """
    check_stepsize(driver, tree.dt)
    if getattr(driver, "penalty", None) is not None:
        raise ValueError("reflected solves take the bare driver, not a penalised one")
    obstacle = barrier_values(tree, barrier)
    xi = terminal_values(tree, terminal)
    shortfall = float(np.min(xi - obstacle.values[tree.num_steps]))
    if shortfall < -TERMINAL_SLACK:
        raise TerminalBelowBarrier(
            f"terminal payoff dips {-shortfall:.3g} below the obstacle at a leaf")

    n = tree.num_steps
    dt = tree.dt
    y: Process = [None] * (n + 1)
    y[n] = xi
    z: Process = [None] * n
    v: Process = [None] * n
    resid: Process = [None] * n
    k: Process = [np.zeros(1)]
    inc_list = []
    for kk in range(n - 1, -1, -1):
        zk, vk, rk = project_level(tree, y[kk + 1])
        rhs = tree.cond_exp(y[kk + 1]) + _source_term(driver, tree, kk, zk, vk) * dt
        candidate = _implicit_y(rhs, driver.a, dt)
        y[kk] = np.maximum(obstacle.values[kk], candidate)
        inc_list.append(y[kk] - candidate)
        z[kk], v[kk], resid[kk] = zk, vk, rk
    inc_list.reverse()
    for kk in range(n):
        k.append(tree.lift(k[kk] + inc_list[kk]))

    k_c, k_d = _split_jump_mass(tree, y, k, obstacle)
    return SolutionQuadruple(y=y, z=z, v=v, k=k, k_c=k_c, k_d=k_d,
                             projection_residual=resid)


def obstacle_payoff(tree: ScenarioTree, driver, terminal, barrier):
    """Stopping payoff whose envelope represents the reflected solution.

    eta_k = sum_{j<k} g_j dt + S_k before the horizon and the same
    accumulated source plus the terminal payoff at it.  Also returns the
    matching left-limit table and the accumulated source per level.
    """
    if isinstance(driver, DriverSpec):
        if not driver.is_coefficient_free:
            raise DriverNotCoefficientFree(
                "the stopping representation needs a driver without (y, z, v) terms")
    else:
        raise DriverNotCoefficientFree("the stopping representation needs a plain driver")
    obstacle = barrier_values(tree, barrier)
    xi = terminal_values(tree, terminal)
    n = tree.num_steps
    cum = np.concatenate(([0.0], np.cumsum(
        [driver.base_at(tree.time(k)) * tree.dt for k in range(n)])))
    payoff = [cum[k] + obstacle.values[k] for k in range(n)]
    payoff.append(cum[n] + xi)
    left = {level: cum[level] + vals for level, vals in obstacle.left.items()}
    return payoff, left, cum


def snell_representation_check(tree: ScenarioTree, solution: SolutionQuadruple,
                               driver, terminal, barrier) -> float:
    """Largest node-wise gap between the solver output and the envelope route."""
    payoff, _, cum = obstacle_payoff(tree, driver, terminal, barrier)
    envelope = snell(tree, payoff).envelope
    worst = 0.0
    for k in range(tree.num_steps + 1):
        worst = max(worst, float(np.max(np.abs(solution.y[k] + cum[k] - envelope[k]))))
    return worst
