"""Problem data evaluated on the tree: terminals, drivers and obstacles.

Obstacles are split into a piecewise-constant deterministic part (whose
breakpoints are the declared predictable jump times) and an optional
stochastic part driven by the node state.  Left limits at declared jump
times are recorded explicitly, because the split of the reflection
compensator into continuous-type and jump-type mass needs them.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import JumpTimeOffGrid
from .tree import MarkSet, ScenarioTree, build_tree

# Terminal payoffs see the leaf state; obstacle functions also see time,
# so that conditional-mean processes with compensator drift are exact.
PathFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
ObstacleFn = Callable[[float, np.ndarray, np.ndarray], np.ndarray]

GRID_SNAP = 1e-9


@dataclass(frozen=True)
class TerminalSpec:
    """Terminal condition: a constant or a function of the leaf state."""

    constant: float | None = None
    payoff: PathFn | None = None

    def __post_init__(self) -> None:
        if (self.constant is None) == (self.payoff is None):
            raise ValueError("specify exactly one of constant or payoff")

    def evaluate(self, tree: ScenarioTree) -> np.ndarray:
        leaves = tree.level_size(tree.num_steps)
        if self.constant is not None:
            return np.full(leaves, float(self.constant))
        raw = np.asarray(self.payoff(tree.w[-1], tree.counts[-1]), dtype=float)
        values = np.array(np.broadcast_to(raw, (leaves,)), dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValueError("terminal payoff must be finite on every leaf")
        return values


@dataclass(frozen=True)
class BarrierSpec:
    """Obstacle process specification.

    ``pieces`` lists (start_time, value) pairs of a right-continuous step
    function; the first piece must start at time 0.  ``jumps`` lists the
    declared predictable jump times together with the left-value offset
    (left limit minus right value); when omitted they are derived from
    the breakpoints of the deterministic part.
    """

    pieces: tuple[tuple[float, float], ...] = ((0.0, 0.0),)
    stochastic: ObstacleFn | None = None
    jumps: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self) -> None:
        if not self.pieces:
            raise ValueError("at least one piece is required")
        times = [t for t, _ in self.pieces]
        if times[0] != 0.0:
            raise ValueError("the first piece must start at time 0")
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError("piece start times must be strictly increasing")
        if any(t < 0.0 or t > 1.0 for t in times):
            raise ValueError("piece start times must lie in [0, 1]")
        if any(not np.isfinite(v) for _, v in self.pieces):
            raise ValueError("piece values must be finite")
        if self.jumps is not None:
            jt = [t for t, _ in self.jumps]
            if len(set(jt)) != len(jt):
                raise ValueError("declared jump times must be distinct")
            if any(t <= 0.0 or t > 1.0 for t in jt):
                raise ValueError("declared jump times must lie in (0, 1]")

    @property
    def declared_jumps(self) -> tuple[tuple[float, float], ...]:
        if self.jumps is not None:
            return self.jumps
        derived = []
        for (t_prev, v_prev), (t_cur, v_cur) in zip(self.pieces, self.pieces[1:]):
            if v_prev != v_cur:
                derived.append((t_cur, v_prev - v_cur))
        return tuple(derived)

    def deterministic_at(self, t: float) -> float:
        times = [p[0] for p in self.pieces]
        idx = bisect.bisect_right(times, t) - 1
        return float(self.pieces[idx][1])


@dataclass(frozen=True, eq=False)
class BarrierValues:
    """Obstacle evaluated on a tree, with left limits at declared jumps."""

    values: tuple[np.ndarray, ...]
    left: dict[int, np.ndarray]
    jump_levels: tuple[int, ...]


def grid_level(t: float, num_steps: int) -> int:
    """Map a time to its grid level, rejecting off-grid times."""
    level = round(t * num_steps)
    if abs(t * num_steps - level) > GRID_SNAP or not 0 <= level <= num_steps:
        raise JumpTimeOffGrid(f"time {t} is not a grid point of an {num_steps}-step grid")
    return int(level)


def eval_barrier(spec: BarrierSpec, tree: ScenarioTree) -> BarrierValues:
    """Evaluate an obstacle on every node and record declared left limits."""
    n = tree.num_steps
    values = []
    for k in range(n + 1):
        t = k / n
        det = spec.deterministic_at(t)
        if spec.stochastic is None:
            vals = np.full(tree.level_size(k), det)
        else:
            raw = np.asarray(spec.stochastic(t, tree.w[k], tree.counts[k]), dtype=float)
            vals = det + np.array(np.broadcast_to(raw, (tree.level_size(k),)), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"obstacle is not finite at level {k}")
        values.append(vals)

    left: dict[int, np.ndarray] = {}
    for t_j, offset in spec.declared_jumps:
        level = grid_level(t_j, n)
        if level == 0:
            raise JumpTimeOffGrid("declared jumps at time 0 are not representable")
        base = spec.deterministic_at(t_j) + offset
        if spec.stochastic is None:
            left[level] = np.full(tree.level_size(level), base)
        else:
            raw = np.asarray(spec.stochastic(t_j, tree.w[level - 1], tree.counts[level - 1]),
                             dtype=float)
            parent = np.array(np.broadcast_to(raw, (tree.level_size(level - 1),)), dtype=float)
            left[level] = base + tree.lift(parent)

    return BarrierValues(values=tuple(values), left=left,
                         jump_levels=tuple(sorted(left)))


@dataclass(frozen=True)
class PenaltyTerm:
    """Penalisation term n*(y - S_t)^- composed onto a driver."""

    weight: float
    barrier: BarrierSpec

    def __post_init__(self) -> None:
        if self.weight < 0.0:
            raise ValueError("penalty weight must be nonnegative")


@dataclass(frozen=True)
class DriverSpec:
    """Driver f(t, y, z, v) = g(t) + a*y + b*z + c*sum_i v_i lam_i (+ penalty).

    The coefficient Lipschitz constant |a| + |b| + |c|*sqrt(sum lam) is
    the one the stepsize guard uses; the recorded ``lipschitz_constant``
    additionally counts the penalty weight, which is the constant the
    sampled Lipschitz property must hold with.
    """

    base: float | Callable[[float], float] = 0.0
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    marks: MarkSet = MarkSet()
    penalty: PenaltyTerm | None = None

    def base_at(self, t: float) -> float:
        if callable(self.base):
            return float(self.base(t))
        return float(self.base)

    @property
    def coefficient_lipschitz(self) -> float:
        return abs(self.a) + abs(self.b) + abs(self.c) * np.sqrt(self.marks.total_intensity)

    @property
    def lipschitz_constant(self) -> float:
        extra = self.penalty.weight if self.penalty is not None else 0.0
        return self.coefficient_lipschitz + extra

    @property
    def is_coefficient_free(self) -> bool:
        return self.a == 0.0 and self.b == 0.0 and self.c == 0.0 and self.penalty is None


def eval_driver(spec: DriverSpec, t: float, y: float, z: float, v,
                barrier_value: float | None = None) -> float:
    """Evaluate the driver at a single point.

    ``barrier_value`` supplies S_t when the driver carries a penalty term.
    """
    v = np.asarray(v, dtype=float)
    lam = spec.marks.intensity_array
    if v.shape != lam.shape:
        raise ValueError(f"v must have one entry per mark, got shape {v.shape}")
    value = spec.base_at(t) + spec.a * y + spec.b * z
    if lam.size:
        value += spec.c * float(v @ lam)
    if spec.penalty is not None:
        if barrier_value is None:
            raise ValueError("penalty drivers need the obstacle value at (t, node)")
        value += spec.penalty.weight * max(0.0, float(barrier_value) - y)
    return float(value)


@dataclass(frozen=True)
class ProblemSpec:
    """One solvable problem: grid, noise, data and obstacle(s)."""

    num_steps: int
    marks: MarkSet = MarkSet()
    terminal: TerminalSpec = TerminalSpec(constant=0.0)
    driver: DriverSpec = DriverSpec()
    barrier: BarrierSpec | None = None
    lower: BarrierSpec | None = None
    upper: BarrierSpec | None = None

    def __post_init__(self) -> None:
        if self.barrier is not None and (self.lower is not None or self.upper is not None):
            raise ValueError("specify either one obstacle or a lower/upper pair")
        if (self.lower is None) != (self.upper is None):
            raise ValueError("two-obstacle problems need both lower and upper")

    @property
    def kind(self) -> str:
        if self.barrier is not None:
            return "one_barrier"
        if self.lower is not None:
            return "two_barrier"
        return "standard"

    def build_tree(self, node_cap: int | None = None) -> ScenarioTree:
        if node_cap is None:
            return build_tree(self.num_steps, self.marks)
        return build_tree(self.num_steps, self.marks, node_cap=node_cap)


def linear_payoff(intercept: float = 0.0, w_coeff: float = 0.0,
                  count_coeffs: tuple[float, ...] = ()) -> PathFn:
    """Leaf payoff intercept + w_coeff*w + sum_i count_coeffs[i]*counts_i."""
    coeffs = np.asarray(count_coeffs, dtype=float)

    def payoff(w: np.ndarray, counts: np.ndarray) -> np.ndarray:
        out = intercept + w_coeff * w
        if coeffs.size:
            out = out + counts[:, :coeffs.size] @ coeffs
        return out

    return payoff


def call_payoff(strike: float, w_coeff: float = 1.0) -> PathFn:
    def payoff(w: np.ndarray, counts: np.ndarray) -> np.ndarray:
        return np.maximum(w_coeff * w - strike, 0.0)

    return payoff


def put_payoff(strike: float, w_coeff: float = 1.0) -> PathFn:
    def payoff(w: np.ndarray, counts: np.ndarray) -> np.ndarray:
        return np.maximum(strike - w_coeff * w, 0.0)

    return payoff


def linear_obstacle(intercept: float = 0.0, w_coeff: float = 0.0,
                    count_coeffs: tuple[float, ...] = (),
                    compensate: MarkSet | None = None) -> ObstacleFn:
    """Obstacle part intercept + w_coeff*w + sum_i coeffs[i]*counts_i.

    With ``compensate`` set, counts enter compensated (counts_i - lam_i*t),
    which makes conditional means of linear terminal payoffs exact
    obstacle functions.
    """
    coeffs = np.asarray(count_coeffs, dtype=float)
    lam = compensate.intensity_array if compensate is not None else None

    def obstacle(t: float, w: np.ndarray, counts: np.ndarray) -> np.ndarray:
        out = intercept + w_coeff * w
        if coeffs.size:
            counted = counts[:, :coeffs.size]
            if lam is not None:
                counted = counted - t * lam[None, :coeffs.size]
            out = out + counted @ coeffs
        return out

    return obstacle
