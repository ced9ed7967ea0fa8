"""Picard iteration for drivers with (y, z, v) dependence.

Each round freezes the driver inputs at the previous iterate, solves the
resulting coefficient-free problem, and measures the move in the
exponentially weighted norm.  The weight exponent defaults to
2*C_f + 4*C_f^2 + 2, the constant the uniqueness estimate produces; the
continuous-time contraction constant does not transfer verbatim to the
discrete norm, so a failure to contract is reported with the measured
ratios instead of being asserted impossible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bsde import FrozenDriver, solve_bsde
from .errors import MaxIterExceeded, NoContractionObserved
from .processes import DriverSpec
from .reflected import solve_reflected_one
from .tree import Process, ScenarioTree
from .twobarrier import solve_double_obstacle

SOLVER_KINDS = ("standard", "one_barrier", "two_barrier")


def alpha_rule(c_f: float) -> float:
    """Weight exponent from the Lipschitz constant: 2*C + 4*C^2 + 2."""
    if c_f < 0:
        raise ValueError("Lipschitz constant must be nonnegative")
    return 2.0 * c_f + 4.0 * c_f ** 2 + 2.0


def alpha_norm(tree: ScenarioTree, triple, alpha: float) -> float:
    """Exponentially weighted norm of an (Y, Z, V) triple.

    Discrete form: sqrt(sum_{k<N} e^{alpha t_k} E[Y_k^2 + Z_k^2 +
    sum_i lam_i V_{k,i}^2] dt), left-endpoint weights on the grid.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    y, z, v = triple
    lam = tree.marks.intensity_array
    total = 0.0
    for k in range(tree.num_steps):
        weight = np.exp(alpha * tree.time(k)) * tree.dt
        sq = np.asarray(y[k], dtype=float) ** 2 + np.asarray(z[k], dtype=float) ** 2
        vk = np.asarray(v[k], dtype=float)
        if vk.size:
            sq = sq + (vk ** 2) @ lam
        total += weight * tree.expectation(k, sq)
    return float(np.sqrt(total))


@dataclass(eq=False)
class FixpointTrace:
    alpha: float
    iterates: list          # (y, z, v) triples, one per solve
    distances: list         # weighted distance between consecutive iterates
    ratios: list            # successive distance ratios
    converged: bool
    iterations: int


def _freeze(tree: ScenarioTree, driver: DriverSpec, triple) -> FrozenDriver:
    y, z, v = triple
    lam = tree.marks.intensity_array
    values = []
    for k in range(tree.num_steps):
        src = driver.base_at(tree.time(k)) + driver.a * np.asarray(y[k], dtype=float) \
            + driver.b * np.asarray(z[k], dtype=float)
        vk = np.asarray(v[k], dtype=float)
        if lam.size and driver.c != 0.0:
            src = src + driver.c * (vk @ lam)
        values.append(np.asarray(src, dtype=float) + np.zeros(tree.level_size(k)))
    return FrozenDriver(values=tuple(values))


def _solve_frozen(tree, frozen, terminal, solver_kind, barrier, lower, upper):
    if solver_kind == "standard":
        return solve_bsde(tree, frozen, terminal)
    if solver_kind == "one_barrier":
        return solve_reflected_one(tree, frozen, terminal, barrier)
    return solve_double_obstacle(tree, frozen, terminal, lower, upper)


def _triple_of(solution) -> tuple[Process, Process, Process]:
    return solution.y, solution.z, solution.v


def _diff_triple(a, b):
    return ([x - y for x, y in zip(a[0], b[0])],
            [x - y for x, y in zip(a[1], b[1])],
            [x - y for x, y in zip(a[2], b[2])])


def zero_triple(tree: ScenarioTree):
    return tree.zero_adapted(), tree.zero_predictable(), tree.zero_marked()


def random_triple(tree: ScenarioTree, rng: np.random.Generator, scale: float = 1.0):
    y = [scale * rng.standard_normal(tree.level_size(k))
         for k in range(tree.num_steps + 1)]
    z = [scale * rng.standard_normal(tree.level_size(k)) for k in range(tree.num_steps)]
    v = [scale * rng.standard_normal((tree.level_size(k), tree.marks.count))
         for k in range(tree.num_steps)]
    return y, z, v


def picard_solve(tree: ScenarioTree, driver: DriverSpec, terminal,
                 solver_kind: str = "standard", barrier=None, lower=None, upper=None,
                 alpha: float | None = None, tol: float = 1e-12, max_iter: int = 200,
                 initial=None):
    """Iterate the frozen-input map until the weighted move falls below tol.

    Returns the final solve (with its compensators) and the trace.
    Raises NoContractionObserved when three consecutive distance ratios
    reach one, and MaxIterExceeded when the budget runs out.
    """
    if solver_kind not in SOLVER_KINDS:
        raise ValueError(f"solver_kind must be one of {SOLVER_KINDS}")
    if not isinstance(driver, DriverSpec) or driver.penalty is not None:
        raise ValueError("the fixed-point loop takes a plain linear driver")
    if solver_kind == "one_barrier" and barrier is None:
        raise ValueError("one_barrier solves need an obstacle")
    if solver_kind == "two_barrier" and (lower is None or upper is None):
        raise ValueError("two_barrier solves need both obstacles")
    if alpha is None:
        alpha = alpha_rule(driver.lipschitz_constant)

    current = initial if initial is not None else zero_triple(tree)
    solution = _solve_frozen(tree, _freeze(tree, driver, current), terminal,
                             solver_kind, barrier, lower, upper)
    iterates = [_triple_of(solution)]
    distances: list[float] = []
    ratios: list[float] = []
    flat_run = 0
    for _ in range(max_iter):
        solution = _solve_frozen(tree, _freeze(tree, driver, iterates[-1]), terminal,
                                 solver_kind, barrier, lower, upper)
        iterates.append(_triple_of(solution))
        d = alpha_norm(tree, _diff_triple(iterates[-1], iterates[-2]), alpha)
        if distances and distances[-1] > 0.0:
            r = d / distances[-1]
            ratios.append(r)
            flat_run = flat_run + 1 if r >= 1.0 else 0
            if flat_run >= 3:
                raise NoContractionObserved(
                    f"distance ratios stayed at or above one for three rounds: "
                    f"{ratios[-3:]}", ratios=ratios)
        distances.append(d)
        if d < tol:
            trace = FixpointTrace(alpha=alpha, iterates=iterates, distances=distances,
                                  ratios=ratios, converged=True, iterations=len(distances))
            return solution, trace
    raise MaxIterExceeded(f"no fixed point within {max_iter} rounds "
                          f"(last move {distances[-1]:.3g})")
