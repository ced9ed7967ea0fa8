"""Solution-condition checker and structural probes.

Every clause of the reflected equations becomes a residual: the
projected dynamics identity, obstacle dominance, the minimality sums for
the continuous-type compensator mass, the left-limit jump formulas, and
compensator monotonicity.  The probes re-solve problems along
independent routes (uniqueness) and run the penalty ladder against the
jump-type mass (regularity dichotomy).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bsde import (SolutionQuadruple, _source_term, barrier_values, solve_bsde,
                   terminal_values)
from .fixpoint import picard_solve, random_triple
from .penalty import solve_penalized, sweep
from .processes import DriverSpec, ProblemSpec
from .reflected import obstacle_payoff, solve_reflected_one
from .snell import snell
from .tree import Process, ScenarioTree, sup_diff
from .twobarrier import picard_snell_solve, solve_double_obstacle

CHECK_TOL = 1e-10
EXACT_PENALTY_LEVEL = 1e13
DEFAULT_LADDER = (1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024)


@dataclass
class ClauseCheck:
    passed: bool
    residual: float
    note: str = ""


@dataclass
class CheckReport:
    tolerance: float
    clauses: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses.values())

    def to_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "passed": self.passed,
            "clauses": {name: {"passed": c.passed, "residual": c.residual, "note": c.note}
                        for name, c in self.clauses.items()},
        }


def _increments(tree: ScenarioTree, process: Process, level: int) -> np.ndarray:
    """Child-level increment of an adapted accumulating process."""
    return process[level + 1] - tree.lift(process[level])


def _driver_values(tree: ScenarioTree, driver, level: int, y, z, v,
                   pen_barrier=None) -> np.ndarray:
    out = _source_term(driver, tree, level, np.asarray(z, dtype=float),
                       np.asarray(v, dtype=float))
    out = out + driver.a * np.asarray(y, dtype=float)
    pen = getattr(driver, "penalty", None)
    if pen is not None:
        if pen_barrier is None:
            raise ValueError("penalty drivers need obstacle values")
        out = out + pen.weight * np.maximum(pen_barrier - np.asarray(y, dtype=float), 0.0)
    return np.asarray(out, dtype=float) + np.zeros(tree.level_size(level))


def _dynamics_residual(tree: ScenarioTree, y: Process, z: Process, v: Process,
                       driver, xi: np.ndarray, signed_increment) -> float:
    pen = getattr(driver, "penalty", None)
    pen_values = barrier_values(tree, pen.barrier).values if pen is not None else None
    worst = float(np.max(np.abs(y[tree.num_steps] - xi)))
    for k in range(tree.num_steps):
        f_val = _driver_values(tree, driver, k, y[k], z[k], v[k],
                               pen_values[k] if pen_values is not None else None)
        rhs = tree.cond_exp(y[k + 1]) + f_val * tree.dt + signed_increment(k)
        worst = max(worst, float(np.max(np.abs(y[k] - rhs))))
    return worst


def _skorokhod_max(tree: ScenarioTree, slack: Process, k_c: Process) -> float:
    """Largest per-node product of obstacle slack and continuous-type mass."""
    worst = 0.0
    for k in range(tree.num_steps):
        inc = _increments(tree, k_c, k)
        worst = max(worst, float(np.max(np.abs(tree.lift(slack[k]) * inc))))
    return worst


def _jump_formula_residual(tree: ScenarioTree, y: Process, k_d: Process,
                           obstacle, sign: int, bind_tol: float) -> float:
    worst = 0.0
    for k in range(1, tree.num_steps + 1):
        inc = _increments(tree, k_d, k - 1)
        if k in obstacle.left:
            left = obstacle.left[k]
            prev = tree.lift(y[k - 1])
            binding = np.abs(prev - left) <= bind_tol
            formula = np.where(binding, np.maximum(sign * (left - y[k]), 0.0), 0.0)
            worst = max(worst, float(np.max(np.abs(inc - formula))))
        else:
            worst = max(worst, float(np.max(np.abs(inc))))
    return worst


def _monotone_residual(tree: ScenarioTree, k: Process) -> float:
    worst = float(np.max(np.abs(k[0])))
    for level in range(tree.num_steps):
        worst = max(worst, float(np.max(-_increments(tree, k, level))))
    return worst


def _left_limit_integral(tree: ScenarioTree, y: Process, obstacle,
                         k_c: Process, k_d: Process, sign: int) -> float:
    """Probability-weighted left-limit minimality integral.

    Continuous-type mass pairs with the slack at the assigning slot;
    jump-type mass pairs with the recorded left limits against the
    previous-slot solution values.
    """
    total = 0.0
    for k in range(tree.num_steps):
        slack = tree.lift(sign * (y[k] - obstacle.values[k]))
        total += float(tree.atom_prob[k + 1] @ (slack * _increments(tree, k_c, k)))
    for k, left in obstacle.left.items():
        slack = sign * (tree.lift(y[k - 1]) - left)
        total += float(tree.atom_prob[k] @ (slack * _increments(tree, k_d, k - 1)))
    return total


def check_solution_one(tree: ScenarioTree, sol: SolutionQuadruple, driver,
                       terminal, barrier, tol: float = CHECK_TOL,
                       bind_tol: float = 1e-9) -> CheckReport:
    """Check every clause of the one-obstacle equation on a solution."""
    obstacle = barrier_values(tree, barrier)
    xi = terminal_values(tree, terminal)

    dyn = _dynamics_residual(
        tree, sol.y, sol.z, sol.v, driver, xi,
        lambda k: tree.cond_exp(_increments(tree, sol.k, k)))
    dominance = max(0.0, max(
        float(np.max(obstacle.values[k] - sol.y[k])) for k in range(tree.num_steps + 1)))
    slack = [sol.y[k] - obstacle.values[k] for k in range(tree.num_steps + 1)]
    sk_c = _skorokhod_max(tree, slack, sol.k_c)
    jump = _jump_formula_residual(tree, sol.y, sol.k_d, obstacle, +1, bind_tol)
    mono = _monotone_residual(tree, sol.k)
    split = max(float(np.max(np.abs(sol.k[k] - sol.k_c[k] - sol.k_d[k])))
                for k in range(tree.num_steps + 1))
    left = abs(_left_limit_integral(tree, sol.y, obstacle, sol.k_c, sol.k_d, +1))

    clauses = {
        "dynamics": ClauseCheck(dyn <= tol, dyn, "projected step identity and terminal"),
        "barrier_dominance": ClauseCheck(dominance <= tol, dominance, "Y >= S"),
        "skorokhod_c": ClauseCheck(sk_c <= tol, sk_c,
                                   "continuous-type mass only where Y touches S"),
        "jump_formula_d": ClauseCheck(jump <= tol, jump,
                                      "jump-type mass matches the left-limit formula"),
        "compensator_monotone": ClauseCheck(max(mono, split) <= tol, max(mono, split),
                                            "K nondecreasing from zero, split adds up"),
        "left_limit_skorokhod": ClauseCheck(left <= tol, left,
                                            "left-limit minimality integral"),
    }
    return CheckReport(tolerance=tol, clauses=clauses)


def check_solution_two(tree: ScenarioTree, sol, driver, terminal, lower, upper,
                       tol: float = CHECK_TOL, bind_tol: float = 1e-9) -> CheckReport:
    """Check every clause of the two-obstacle equation on a solution."""
    low = barrier_values(tree, lower)
    up = barrier_values(tree, upper)
    xi = terminal_values(tree, terminal)

    dyn = _dynamics_residual(
        tree, sol.y, sol.z, sol.v, driver, xi,
        lambda k: tree.cond_exp(_increments(tree, sol.k_plus, k)
                                - _increments(tree, sol.k_minus, k)))
    contain = 0.0
    for k in range(tree.num_steps + 1):
        contain = max(contain, float(np.max(low.values[k] - sol.y[k])),
                      float(np.max(sol.y[k] - up.values[k])))
    contain = max(0.0, contain)

    slack_low = [sol.y[k] - low.values[k] for k in range(tree.num_steps + 1)]
    slack_up = [up.values[k] - sol.y[k] for k in range(tree.num_steps + 1)]
    sk_low = _skorokhod_max(tree, slack_low, sol.k_plus_c)
    sk_up = _skorokhod_max(tree, slack_up, sol.k_minus_c)
    jump_low = _jump_formula_residual(tree, sol.y, sol.k_plus_d, low, +1, bind_tol)
    jump_up = _jump_formula_residual(tree, sol.y, sol.k_minus_d, up, -1, bind_tol)
    mono = max(_monotone_residual(tree, sol.k_plus), _monotone_residual(tree, sol.k_minus))
    split = 0.0
    for k in range(tree.num_steps + 1):
        split = max(split,
                    float(np.max(np.abs(sol.k_plus[k] - sol.k_plus_c[k] - sol.k_plus_d[k]))),
                    float(np.max(np.abs(sol.k_minus[k] - sol.k_minus_c[k] - sol.k_minus_d[k]))))
    simultaneous = 0.0
    for k in range(tree.num_steps):
        inc_p = _increments(tree, sol.k_plus_d, k)
        inc_m = _increments(tree, sol.k_minus_d, k)
        simultaneous = max(simultaneous, float(np.max(np.minimum(inc_p, inc_m))))
    simultaneous = max(0.0, simultaneous)
    left = max(abs(_left_limit_integral(tree, sol.y, low, sol.k_plus_c, sol.k_plus_d, +1)),
               abs(_left_limit_integral(tree, sol.y, up, sol.k_minus_c, sol.k_minus_d, -1)))

    clauses = {
        "dynamics": ClauseCheck(dyn <= tol, dyn, "projected step identity and terminal"),
        "containment": ClauseCheck(contain <= tol, contain, "L <= Y <= U"),
        "skorokhod_lower_c": ClauseCheck(sk_low <= tol, sk_low, "K+ c-mass only on L"),
        "skorokhod_upper_c": ClauseCheck(sk_up <= tol, sk_up, "K- c-mass only on U"),
        "jump_formula_lower": ClauseCheck(jump_low <= tol, jump_low, "K+ jump formula"),
        "jump_formula_upper": ClauseCheck(jump_up <= tol, jump_up, "K- jump formula"),
        "compensator_monotone": ClauseCheck(max(mono, split) <= tol, max(mono, split),
                                            "K+- nondecreasing from zero, splits add up"),
        "no_simultaneous_jumps": ClauseCheck(simultaneous <= tol, simultaneous,
                                             "K+d and K-d never fire together"),
        "left_limit_skorokhod": ClauseCheck(left <= tol, left,
                                            "left-limit minimality integrals"),
    }
    return CheckReport(tolerance=tol, clauses=clauses)


def _mean_mass_route(tree: ScenarioTree, driver: DriverSpec, xi: np.ndarray) -> Process:
    """Closed-form coefficient-free unreflected solve: E[xi + source | F]."""
    n = tree.num_steps
    y: Process = [None] * (n + 1)
    y[n] = xi.copy()
    for k in range(n - 1, -1, -1):
        y[k] = tree.cond_exp(y[k + 1]) + driver.base_at(tree.time(k)) * tree.dt
    return y


def uniqueness_probe(problem: ProblemSpec, n_restarts: int = 2,
                     witness=None) -> float:
    """Solve along independent routes; return the worst pairwise Y gap."""
    if n_restarts < 2:
        raise ValueError("need at least two restarts")
    tree = problem.build_tree()
    driver = problem.driver
    coefficient_free = driver.is_coefficient_free
    routes: list[Process] = []
    rngs = [np.random.default_rng(911 + 13 * i) for i in range(max(n_restarts - 1, 1))]

    if problem.kind == "standard":
        routes.append(solve_bsde(tree, driver, problem.terminal).y)
        if coefficient_free:
            routes.append(_mean_mass_route(tree, driver,
                                           terminal_values(tree, problem.terminal)))
        else:
            for rng in rngs:
                sol, _ = picard_solve(tree, driver, problem.terminal,
                                      initial=random_triple(tree, rng))
                routes.append(sol.y)
    elif problem.kind == "one_barrier":
        routes.append(solve_reflected_one(tree, driver, problem.terminal,
                                          problem.barrier).y)
        routes.append(solve_penalized(tree, driver, problem.barrier, problem.terminal,
                                      EXACT_PENALTY_LEVEL).solution.y)
        if coefficient_free:
            payoff, _, cum = obstacle_payoff(tree, driver, problem.terminal,
                                             problem.barrier)
            envelope = snell(tree, payoff).envelope
            routes.append([envelope[k] - cum[k] for k in range(tree.num_steps + 1)])
        else:
            for rng in rngs:
                sol, _ = picard_solve(tree, driver, problem.terminal,
                                      solver_kind="one_barrier", barrier=problem.barrier,
                                      initial=random_triple(tree, rng))
                routes.append(sol.y)
    else:
        for order in ("median", "max_min", "min_max"):
            routes.append(solve_double_obstacle(tree, driver, problem.terminal,
                                                problem.lower, problem.upper,
                                                order=order).y)
        if coefficient_free:
            sol, _ = picard_snell_solve(tree, driver, problem.terminal,
                                        problem.lower, problem.upper, witness=witness)
            routes.append(sol.y)
        else:
            for rng in rngs:
                sol, _ = picard_solve(tree, driver, problem.terminal,
                                      solver_kind="two_barrier", lower=problem.lower,
                                      upper=problem.upper,
                                      initial=random_triple(tree, rng))
                routes.append(sol.y)

    worst = 0.0
    for i in range(len(routes)):
        for j in range(i + 1, len(routes)):
            worst = max(worst, sup_diff(routes[i], routes[j]))
    return worst


@dataclass(eq=False)
class RegularityProbeReport:
    levels: tuple[float, ...]
    kd_mass: float
    y_gaps: tuple[float, ...]
    z_gaps: tuple[float, ...]
    v_gaps: tuple[float, ...]
    gaps_at_jumps: tuple[float, ...]
    verdict: str

    @property
    def zv_gaps_vanish(self) -> bool:
        return (self.z_gaps[-1] <= 1e-10) and (self.v_gaps[-1] <= 1e-10)


def regularity_probe(problem: ProblemSpec, ladder=DEFAULT_LADDER) -> RegularityProbeReport:
    """Penalty ladder against the jump-type compensator mass.

    A vanishing jump-type mass should co-occur with uniformly closing Y
    gaps; positive mass pins the gap to the declared jump times while
    the (Z, V) gaps may vanish regardless.
    """
    if problem.kind != "one_barrier":
        raise ValueError("the regularity probe takes a one-obstacle problem")
    tree = problem.build_tree()
    report = sweep(tree, problem.driver, problem.barrier, problem.terminal, ladder)
    reflected = report.reflected
    kd_mass = tree.expectation(tree.num_steps, reflected.k_d[tree.num_steps])

    obstacle = barrier_values(tree, problem.barrier)
    gaps_at_jumps = []
    for sol in report.solutions:
        worst = 0.0
        for level in obstacle.jump_levels:
            # non-uniformity shows at the slot announcing the jump
            worst = max(worst, float(np.max(np.abs(sol.solution.y[level - 1]
                                                   - reflected.y[level - 1]))))
        gaps_at_jumps.append(worst)

    verdict = "irregular" if kd_mass > 1e-10 else "regular"
    return RegularityProbeReport(levels=report.levels, kd_mass=kd_mass,
                                 y_gaps=report.sup_gaps, z_gaps=report.z_gaps,
                                 v_gaps=report.v_gaps,
                                 gaps_at_jumps=tuple(gaps_at_jumps), verdict=verdict)
