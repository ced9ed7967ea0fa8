"""Backward solver for the unreflected equation.

One step solves y = E[Y_next] + f(t, y, z, v) dt implicitly in y (exact,
piecewise-linear when a penalty term is present) with (z, v) obtained by
projecting Y_next against the Brownian increment and the compensated
jump increments.  The projection is not an exact martingale
representation at finite dt: the orthogonal remainder is carried as a
per-node diagnostic and must shrink under grid refinement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StepsizeTooLarge
from .processes import BarrierSpec, BarrierValues, TerminalSpec, eval_barrier
from .tree import Process, ScenarioTree


@dataclass(frozen=True, eq=False)
class FrozenDriver:
    """Coefficient-free driver whose source term is a stored process.

    Used by the Picard fixed-point loop: the source at level k is
    f(t_k, y_k, z_k, v_k) of the previous iterate, one value per node.
    """

    values: tuple[np.ndarray, ...]
    a: float = field(default=0.0, init=False)
    b: float = field(default=0.0, init=False)
    c: float = field(default=0.0, init=False)
    penalty: None = field(default=None, init=False)

    @property
    def coefficient_lipschitz(self) -> float:
        return 0.0


@dataclass(eq=False)
class StepOutput:
    y: float
    z: float
    v: np.ndarray
    representation_residual: float


@dataclass(eq=False)
class SolutionQuadruple:
    """(Y, Z, V, K) with the compensator split K = K_c + K_d."""

    y: Process
    z: Process
    v: Process
    k: Process
    k_c: Process
    k_d: Process
    projection_residual: Process


def check_stepsize(driver, dt: float) -> None:
    c = driver.coefficient_lipschitz
    if c * dt >= 1.0:
        raise StepsizeTooLarge(f"dt*C_f = {c * dt:.6g} >= 1; refine the grid")


def terminal_values(tree: ScenarioTree, terminal) -> np.ndarray:
    if isinstance(terminal, TerminalSpec):
        return terminal.evaluate(tree)
    values = np.asarray(terminal, dtype=float)
    if values.shape != (tree.level_size(tree.num_steps),):
        raise ValueError("terminal array must hold one value per leaf")
    return values.copy()


def barrier_values(tree: ScenarioTree, barrier) -> BarrierValues:
    if isinstance(barrier, BarrierValues):
        return barrier
    if isinstance(barrier, BarrierSpec):
        return eval_barrier(barrier, tree)
    raise TypeError("expected a BarrierSpec or pre-evaluated BarrierValues")


def project_level(tree: ScenarioTree, y_next: np.ndarray):
    """(z, v, residual) arrays over all nodes of the assigning level."""
    branching = tree.branching
    table = np.asarray(y_next, dtype=float).reshape(-1, branching)
    mean = table @ tree.branch_prob
    z = (table @ (tree.branch_prob * tree.branch_db)) / tree.dt
    m = tree.marks.count
    if m:
        weights = tree.branch_prob[:, None] * tree.branch_comp
        scale = tree.marks.intensity_array * tree.dt
        v = (table @ weights) / scale[None, :]
    else:
        v = np.zeros((table.shape[0], 0))
    recon = mean[:, None] + np.outer(z, tree.branch_db) + v @ tree.branch_comp.T
    resid = np.sqrt(np.maximum(((table - recon) ** 2) @ tree.branch_prob, 0.0))
    return z, v, resid


def project_zv(tree: ScenarioTree, y_children) -> tuple[float, np.ndarray, float]:
    """Single-node projection of child values against the noise increments."""
    y_children = np.asarray(y_children, dtype=float)
    if y_children.shape != (tree.branching,):
        raise ValueError("need one child value per branch")
    z, v, resid = project_level(tree, y_children)
    return float(z[0]), v[0], float(resid[0])


def _source_term(driver, tree: ScenarioTree, level: int,
                 z: np.ndarray, v: np.ndarray):
    """Everything in the driver except the implicit y and penalty parts."""
    if isinstance(driver, FrozenDriver):
        return np.asarray(driver.values[level], dtype=float)
    out = driver.base_at(tree.time(level)) + driver.b * z
    lam = tree.marks.intensity_array
    if lam.size and driver.c != 0.0:
        out = out + driver.c * (v @ lam)
    return out


def _implicit_y(rhs, a: float, dt: float, pen_weight: float = 0.0, pen_barrier=None):
    """Exact solve of y = rhs + a*dt*y + pen_weight*dt*(y - s)^-.

    Piecewise linear in y with a kink at y = s; both slopes are positive
    once a*dt < 1, so the case split below picks the unique root.
    """
    unconstrained = rhs / (1.0 - a * dt)
    if pen_weight == 0.0 or pen_barrier is None:
        return unconstrained
    penalised = (rhs + pen_weight * dt * pen_barrier) / (1.0 - a * dt + pen_weight * dt)
    return np.where(unconstrained >= pen_barrier, unconstrained, penalised)


def backward_step(tree: ScenarioTree, level: int, y_children, driver,
                  barrier_value: float | None = None) -> StepOutput:
    """One implicit backward step at a single node."""
    check_stepsize(driver, tree.dt)
    y_children = np.asarray(y_children, dtype=float)
    z, v, resid = project_zv(tree, y_children)
    mean = float(tree.branch_prob @ y_children)
    src = _source_term(driver, tree, level, np.asarray([z]), v[None, :])
    src = float(np.asarray(src).reshape(-1)[0])
    pen = getattr(driver, "penalty", None)
    if pen is not None:
        if barrier_value is None:
            raise ValueError("penalty drivers need the obstacle value at the node")
        y = _implicit_y(np.asarray([mean + src * tree.dt]), driver.a, tree.dt,
                        pen.weight, np.asarray([float(barrier_value)]))
    else:
        y = _implicit_y(np.asarray([mean + src * tree.dt]), driver.a, tree.dt)
    return StepOutput(y=float(y[0]), z=z, v=v, representation_residual=resid)


def solve_bsde(tree: ScenarioTree, driver, terminal) -> SolutionQuadruple:
    """Full backward sweep without reflection (compensator identically 0)."""
    check_stepsize(driver, tree.dt)
    n = tree.num_steps
    dt = tree.dt
    pen = getattr(driver, "penalty", None)
    pen_values = eval_barrier(pen.barrier, tree).values if pen is not None else None

    y: Process = [None] * (n + 1)
    y[n] = terminal_values(tree, terminal)
    z: Process = [None] * n
    v: Process = [None] * n
    resid: Process = [None] * n
    for k in range(n - 1, -1, -1):
        zk, vk, rk = project_level(tree, y[k + 1])
        rhs = tree.cond_exp(y[k + 1]) + _source_term(driver, tree, k, zk, vk) * dt
        if pen is not None:
            y[k] = _implicit_y(rhs, driver.a, dt, pen.weight, pen_values[k])
        else:
            y[k] = _implicit_y(rhs, driver.a, dt)
        z[k], v[k], resid[k] = zk, vk, rk

    zero = [np.zeros(tree.level_size(k)) for k in range(n + 1)]
    return SolutionQuadruple(y=y, z=z, v=v, k=zero,
                             k_c=[lv.copy() for lv in zero],
                             k_d=[lv.copy() for lv in zero],
                             projection_residual=resid)
