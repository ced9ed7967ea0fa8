"""Exact finite scenario trees for Brownian-plus-jump noise.

Each step of the uniform grid on [0, 1] branches over a Bernoulli
Brownian sign (+-sqrt(dt)) and a one-jump multinomial over the marks
(no jump, or exactly one mark firing), so every conditional expectation
is a finite weighted sum and the martingale identities hold to rounding
error.  The tree is homogeneous: every node has the same 2*(m+1) branch
layout, which keeps all per-level operations vectorisable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleIntensity, TreeTooLarge

DEFAULT_NODE_CAP = 5_000_000

# An adapted process is a list of per-level arrays (index 0 = root).
Process = list


@dataclass(frozen=True)
class MarkSet:
    """Finite set of jump marks: size labels plus arrival intensities."""

    sizes: tuple[float, ...] = ()
    intensities: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if len(self.sizes) != len(self.intensities):
            raise ValueError("one intensity per mark size is required")
        if len(set(self.sizes)) != len(self.sizes):
            raise ValueError("mark sizes must be distinct")
        if any(not np.isfinite(s) for s in self.sizes):
            raise ValueError("mark sizes must be finite")
        if any(lam <= 0.0 or not np.isfinite(lam) for lam in self.intensities):
            raise ValueError("mark intensities must be positive and finite")

    @property
    def count(self) -> int:
        return len(self.sizes)

    @property
    def total_intensity(self) -> float:
        return float(sum(self.intensities))

    @property
    def intensity_array(self) -> np.ndarray:
        return np.asarray(self.intensities, dtype=float)


@dataclass(frozen=True, eq=False)
class ScenarioTree:
    """Non-recombining tree encoding the filtration of both noises.

    Level k holds ``branching**k`` nodes (the atoms of F_{t_k}); the
    children of node ``i`` at the next level occupy the contiguous slice
    ``i*branching : (i+1)*branching``.  Branch ``b`` carries a Brownian
    sign (+ for b < m+1, - otherwise) and a jump outcome (``b % (m+1)``,
    0 meaning no jump, j > 0 meaning mark j-1 fires).
    """

    num_steps: int
    marks: MarkSet
    dt: float
    branch_prob: np.ndarray   # (B,) transition probabilities, summing to 1
    branch_db: np.ndarray     # (B,) Brownian increments +-sqrt(dt)
    branch_jump: np.ndarray   # (B, m) jump indicators per mark
    branch_comp: np.ndarray   # (B, m) compensated increments 1[jump=i] - lam_i dt
    w: tuple[np.ndarray, ...]          # cumulative Brownian value per node
    counts: tuple[np.ndarray, ...]     # cumulative jump counts per node, (n_k, m)
    atom_prob: tuple[np.ndarray, ...]  # unconditional probability of each node

    @property
    def branching(self) -> int:
        return 2 * (self.marks.count + 1)

    @property
    def node_count(self) -> int:
        return sum(len(level) for level in self.w)

    def level_size(self, level: int) -> int:
        return len(self.w[level])

    def time(self, level: int) -> float:
        return level / self.num_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.num_steps + 1) / self.num_steps

    def parent_index(self, child_index: int) -> int:
        return child_index // self.branching

    def branch_of(self, child_index: int) -> int:
        return child_index % self.branching

    def branch_sign(self, branch: int) -> int:
        """Brownian sign of a branch: +1 on the first half, -1 on the second."""
        return 1 if branch < self.marks.count + 1 else -1

    def branch_outcome(self, branch: int) -> int | None:
        """Jump outcome of a branch: None for no jump, else the mark index."""
        outcome = branch % (self.marks.count + 1)
        return None if outcome == 0 else outcome - 1

    def cond_exp(self, values_next: np.ndarray) -> np.ndarray:
        """Conditional expectation of child values, node by node."""
        values_next = np.asarray(values_next, dtype=float)
        if values_next.ndim == 1:
            return values_next.reshape(-1, self.branching) @ self.branch_prob
        parents = values_next.shape[0] // self.branching
        table = values_next.reshape(parents, self.branching, values_next.shape[-1])
        return np.einsum("nbm,b->nm", table, self.branch_prob)

    def lift(self, values: np.ndarray) -> np.ndarray:
        """Broadcast parent-level values onto the children level."""
        return np.repeat(np.asarray(values, dtype=float), self.branching, axis=0)

    def expectation(self, level: int, values: np.ndarray) -> float:
        return float(self.atom_prob[level] @ np.asarray(values, dtype=float))

    def constant(self, value: float) -> Process:
        return [np.full(self.level_size(k), float(value)) for k in range(self.num_steps + 1)]

    def zero_adapted(self) -> Process:
        return self.constant(0.0)

    def zero_predictable(self) -> Process:
        return [np.zeros(self.level_size(k)) for k in range(self.num_steps)]

    def zero_marked(self) -> Process:
        return [np.zeros((self.level_size(k), self.marks.count)) for k in range(self.num_steps)]


def build_tree(num_steps: int, mark_set: MarkSet | None = None,
               node_cap: int = DEFAULT_NODE_CAP) -> ScenarioTree:
    """Construct the scenario tree for a uniform grid with ``num_steps`` steps.

    Raises InfeasibleIntensity when the per-step jump probability mass
    reaches one, and TreeTooLarge when the full node count would exceed
    ``node_cap``.
    """
    if num_steps < 1:
        raise ValueError("num_steps must be at least 1")
    marks = mark_set if mark_set is not None else MarkSet()
    m = marks.count
    jump_prob = marks.intensity_array / num_steps
    total_jump = float(jump_prob.sum())
    if total_jump >= 1.0:
        raise InfeasibleIntensity(
            f"per-step jump probability {total_jump:.6g} >= 1 "
            f"(total intensity {marks.total_intensity:.6g}, {num_steps} steps)")

    branching = 2 * (m + 1)
    nodes = (branching ** (num_steps + 1) - 1) // (branching - 1)
    if nodes > node_cap:
        raise TreeTooLarge(f"{nodes} nodes exceed the cap of {node_cap}")

    dt = 1.0 / num_steps
    outcome_prob = np.concatenate(([1.0 - total_jump], jump_prob))
    prob = 0.5 * np.tile(outcome_prob, 2)
    prob = prob / prob.sum()  # node-local renormalisation

    root = np.sqrt(dt)
    db = np.repeat([root, -root], m + 1)
    jump = np.zeros((branching, m))
    for i in range(m):
        jump[1 + i, i] = 1.0
        jump[m + 2 + i, i] = 1.0
    comp = jump - jump_prob[None, :]

    w = [np.zeros(1)]
    counts = [np.zeros((1, m))]
    atom = [np.ones(1)]
    for _ in range(num_steps):
        w.append((w[-1][:, None] + db[None, :]).ravel())
        counts.append((counts[-1][:, None, :] + jump[None, :, :])
                      .reshape(len(counts[-1]) * branching, m))
        atom.append((atom[-1][:, None] * prob[None, :]).ravel())

    return ScenarioTree(num_steps=num_steps, marks=marks, dt=dt,
                        branch_prob=prob, branch_db=db,
                        branch_jump=jump, branch_comp=comp,
                        w=tuple(w), counts=tuple(counts), atom_prob=tuple(atom))


def compensated_increment(tree: ScenarioTree, branch: int) -> np.ndarray:
    """Per-mark compensated count increment along one branch.

    The tree is homogeneous, so the increment depends only on the branch
    index of the child (``child_index % tree.branching``), not on the node.
    """
    if not 0 <= branch < tree.branching:
        raise ValueError(f"branch must lie in [0, {tree.branching})")
    return tree.branch_comp[branch].copy()


def conditional_expectation(tree: ScenarioTree, values_next: np.ndarray) -> np.ndarray:
    """Exact one-step conditional expectation, one value per parent node."""
    return tree.cond_exp(values_next)


def sup_diff(p: Process, q: Process) -> float:
    """Largest absolute node-wise gap between two per-level processes."""
    worst = 0.0
    for a, b in zip(p, q):
        if np.asarray(a).size:
            worst = max(worst, float(np.max(np.abs(np.asarray(a) - np.asarray(b)))))
    return worst


def copy_process(p: Process) -> Process:
    return [np.array(level, dtype=float, copy=True) for level in p]
