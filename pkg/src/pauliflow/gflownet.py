"""Flow-network sampler over sequential graph colorings.

The MDP colors the conflict graph's vertices in a fixed order (descending
degree, ties by index), one vertex per step. Because the order is fixed,
every state has a unique parent and the state DAG is a tree, so the
flow-matching residual at a state compares the single incoming edge flow
against the total outgoing flow (or the terminal reward).

Actions are colors 1..color_cap. The action mask enforces, in order:
  - properness: no already-colored neighbor holds the candidate color;
  - canonical fresh colors: a candidate may exceed the current maximum
    color by at most one (the first vertex always takes color 1);
  - the cap: candidates never exceed color_cap (taken from a seeded
    random-sequential greedy run plus a user-controlled slack);
  - one-step feasibility: a candidate is dropped if assigning it would
    leave some uncolored neighbor with every color blocked.

The cap can make a partial coloring a dead end despite the feasibility
check (this needs several mutually blocking uncolored vertices, which does
not occur on the bundled systems); the sampler then restarts that
trajectory and counts the restart.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graphs import CompatGraph, Coloring, build_complement_graph, greedy_color
from .hamio import dump_hamiltonian, loads_hamiltonian
from .measurement import MeasurementConfig
from .nn import (
    AdamState,
    DenseNet,
    NumericError,
    adam_accumulate_and_step,
    check_finite,
    load_checkpoint,
    save_checkpoint,
)
from .pauli import QubitHamiltonian


class NoActionError(ValueError):
    """legal_actions / policy queried on a terminal state."""


class ColoringMDP:
    """Fixed-order coloring MDP over a conflict graph with a color cap."""

    def __init__(self, graph: CompatGraph, color_cap: int):
        if color_cap < 1:
            raise ValueError(f"color_cap must be >= 1, got {color_cap}")
        self.graph = graph
        self.color_cap = color_cap
        degrees = graph.degrees()
        n = graph.n_vertices
        self.vertex_order = np.array(
            sorted(range(n), key=lambda v: (-int(degrees[v]), v)), dtype=np.int64
        )
        self.order_position = np.empty(n, dtype=np.int64)
        self.order_position[self.vertex_order] = np.arange(n)
        # neighbors of the vertex colored at step k, split by coloring time
        self.earlier_neighbors = []
        self.later_neighbors = []
        for k in range(n):
            nbrs = graph.neighbors(int(self.vertex_order[k]))
            pos = self.order_position[nbrs]
            self.earlier_neighbors.append(nbrs[pos < k])
            self.later_neighbors.append(nbrs[pos > k])

    @property
    def n_vertices(self) -> int:
        return self.graph.n_vertices

    @property
    def n_actions(self) -> int:
        return self.color_cap

    @property
    def encoding_dim(self) -> int:
        n = self.n_vertices
        return n * (self.color_cap + 1) + n

    def initial_state(self) -> "ColoringState":
        return ColoringState(self, np.zeros(self.n_vertices, dtype=np.int64), 0)


@dataclass(frozen=True)
class ColoringState:
    """Partial coloring with the first `cursor` vertices of the order assigned."""

    mdp: ColoringMDP
    assignment: np.ndarray
    cursor: int

    def __post_init__(self):
        self.assignment.setflags(write=False)

    def is_terminal(self) -> bool:
        return self.cursor == self.mdp.n_vertices

    @property
    def current_vertex(self) -> int:
        if self.is_terminal():
            raise NoActionError("terminal state has no vertex to color")
        return int(self.mdp.vertex_order[self.cursor])

    @property
    def max_color(self) -> int:
        return int(self.assignment.max(initial=0))

    def child(self, action: int) -> "ColoringState":
        """State after coloring the current vertex with color action+1."""
        if not legal_actions(self)[action]:
            raise ValueError(f"action {action} (color {action + 1}) is masked")
        assignment = self.assignment.copy()
        assignment[self.current_vertex] = action + 1
        return ColoringState(self.mdp, assignment, self.cursor + 1)

    def coloring(self) -> Coloring:
        return Coloring(self.assignment.copy())


def encode_state(state: ColoringState) -> np.ndarray:
    """Fixed-length featurization: per-vertex one-hot over {uncolored, colors}
    followed by a one-hot of the vertex being colored (all zero at terminal)."""
    mdp = state.mdp
    n, cap = mdp.n_vertices, mdp.color_cap
    enc = np.zeros(mdp.encoding_dim)
    enc[np.arange(n) * (cap + 1) + state.assignment] = 1.0
    if not state.is_terminal():
        enc[n * (cap + 1) + state.current_vertex] = 1.0
    return enc


def legal_actions(state: ColoringState) -> np.ndarray:
    """Boolean mask over colors 1..color_cap for the vertex at the cursor."""
    if state.is_terminal():
        raise NoActionError("terminal state has no legal actions")
    mdp = state.mdp
    cap = mdp.color_cap
    assignment = state.assignment
    mask = np.zeros(cap, dtype=bool)
    limit = min(state.max_color + 1, cap)
    mask[:limit] = True
    for u in mdp.earlier_neighbors[state.cursor]:
        mask[assignment[u] - 1] = False
    # drop candidates that would block off an uncolored neighbor entirely
    for u in mdp.later_neighbors[state.cursor]:
        blocked = np.zeros(cap, dtype=bool)
        for w in mdp.graph.neighbors(int(u)):
            if assignment[w] != 0:
                blocked[assignment[w] - 1] = True
        if blocked.sum() == cap - 1:
            missing = int(np.flatnonzero(~blocked)[0])
            mask[missing] = False
    return mask


def forward_policy(net: DenseNet, state: ColoringState) -> np.ndarray:
    """Categorical over colors: softmax of the log-flows on unmasked actions."""
    mask = legal_actions(state)
    logits = net.forward(encode_state(state))
    probs = np.zeros_like(logits)
    allowed = logits[mask]
    shifted = np.exp(allowed - allowed.max())
    probs[mask] = shifted / shifted.sum()
    return probs


@dataclass
class Trajectory:
    """One rollout: actions taken per step plus terminal metrics."""

    mdp: ColoringMDP
    actions: np.ndarray  # (n_vertices,) 0-based color indices
    masks: np.ndarray  # (n_vertices, color_cap) legal-action masks seen
    coloring: Coloring
    reward: float
    m_est: float

    @property
    def n_steps(self) -> int:
        return self.actions.shape[0]

    def states(self) -> list[ColoringState]:
        out = [self.mdp.initial_state()]
        for a in self.actions:
            out.append(out[-1].child(int(a)))
        return out


def _logsumexp(values: np.ndarray) -> float:
    m = values.max()
    return float(m + np.log(np.sum(np.exp(values - m))))


# State encodings are one-hot with exactly n_vertices+1 active entries (one
# color slot per vertex plus the cursor), so the input layer never needs the
# dense encoding: forwards gather rows of W0, and along a trajectory each W0
# row is active over a contiguous step range, which turns the input-layer
# gradient into prefix/suffix sums. Equivalence with the dense DenseNet path
# is pinned by tests.


def _hidden_chain(net: DenseNet, pre: np.ndarray):
    """Network output from layer-1 preactivations; returns (out, hidden caches)."""
    if net.n_layers == 1:
        return pre, []
    h = np.tanh(pre)
    hidden = [h]
    for k in range(1, net.n_layers - 1):
        h = np.tanh(h @ net.weights[k] + net.biases[k])
        hidden.append(h)
    return h @ net.weights[-1] + net.biases[-1], hidden


def _head_backward(net: DenseNet, hidden: list[np.ndarray], gout: np.ndarray):
    """Backprop through the layers above layer 1; returns (grads, delta at
    layer-1 preactivation). grads[0:2] are left empty for the caller."""
    grads: list[np.ndarray] = [np.empty(0)] * (2 * net.n_layers)
    delta = gout
    for k in range(net.n_layers - 1, 0, -1):
        grads[2 * k] = hidden[k - 1].T @ delta
        grads[2 * k + 1] = delta.sum(axis=0)
        delta = (delta @ net.weights[k].T) * (1.0 - hidden[k - 1] ** 2)
    return grads, delta


def _trajectory_l1_pre(net: DenseNet, mdp: ColoringMDP, actions: np.ndarray) -> np.ndarray:
    """Layer-1 preactivations for states s_0 .. s_{n-1}, built incrementally
    (consecutive encodings differ in one vertex slot and the cursor)."""
    n, cap = mdp.n_vertices, mdp.color_cap
    w0, b0 = net.weights[0], net.biases[0]
    cursor_base = n * (cap + 1)
    order = mdp.vertex_order
    pre = np.empty((n, b0.shape[0]))
    current = b0 + w0[np.arange(n) * (cap + 1)].sum(axis=0) + w0[cursor_base + order[0]]
    pre[0] = current
    for k in range(1, n):
        u = int(order[k - 1])
        color = int(actions[k - 1]) + 1
        current = (
            current
            + w0[u * (cap + 1) + color]
            - w0[u * (cap + 1)]
            - w0[cursor_base + u]
            + w0[cursor_base + int(order[k])]
        )
        pre[k] = current
    return pre


def _trajectory_l1_grads(
    net: DenseNet, mdp: ColoringMDP, actions: np.ndarray, delta: np.ndarray
):
    """(dW0, db0) for sum_k enc(s_k) x delta_k.

    Along the trajectory, vertex order[k]'s uncolored slot is active at steps
    0..k, its colored slot from step k+1 on, and its cursor row exactly at
    step k, so each W0 row's coefficient is a prefix sum, a suffix sum, or a
    single delta row. All three index vectors are duplicate-free.
    """
    n, cap = mdp.n_vertices, mdp.color_cap
    cursor_base = n * (cap + 1)
    order = mdp.vertex_order
    prefix = np.cumsum(delta, axis=0)
    suffix = np.flip(np.cumsum(np.flip(delta, axis=0), axis=0), axis=0)
    dw0 = np.zeros_like(net.weights[0])
    dw0[order * (cap + 1)] += prefix
    if n > 1:
        dw0[order[:-1] * (cap + 1) + actions[:-1] + 1] += suffix[1:]
    dw0[cursor_base + order] += delta
    return dw0, delta.sum(axis=0)


def flow_matching_loss(
    trajectory: Trajectory, net: DenseNet
) -> tuple[float, list[np.ndarray]]:
    """Squared log-ratio of inflow to outflow along the trajectory, with the
    terminal outflow replaced by the reward. Returns (loss, parameter grads).
    """
    mdp = trajectory.mdp
    n = trajectory.n_steps
    pre = _trajectory_l1_pre(net, mdp, trajectory.actions)
    out, hidden = _hidden_chain(net, pre)  # (n, cap) log-flows
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite log-flows in loss evaluation")

    actions = trajectory.actions
    edge_log = out[np.arange(n), actions]  # log F(s_k -> s_{k+1})
    residuals = np.zeros(n + 1)
    softmaxes = np.zeros_like(out)
    for k in range(1, n):
        allowed = trajectory.masks[k]
        outflow_log = _logsumexp(out[k][allowed])
        residuals[k] = edge_log[k - 1] - outflow_log
        shifted = np.exp(out[k][allowed] - out[k][allowed].max())
        softmaxes[k][allowed] = shifted / shifted.sum()
    if trajectory.reward <= 0:
        raise NumericError(f"non-positive terminal reward {trajectory.reward}")
    residuals[n] = edge_log[n - 1] - np.log(trajectory.reward)
    loss = float(np.sum(residuals[1:] ** 2))
    if not np.isfinite(loss):
        raise NumericError("non-finite flow-matching loss")

    output_grads = np.zeros_like(out)
    # numerator of residual k lives on the parent row k-1, taken action
    output_grads[np.arange(n), actions] += 2.0 * residuals[1 : n + 1]
    # denominator of residual k (non-terminal) spreads over row k's softmax
    output_grads -= 2.0 * residuals[:n, None] * softmaxes
    grads, delta1 = _head_backward(net, hidden, output_grads)
    grads[0], grads[1] = _trajectory_l1_grads(net, mdp, trajectory.actions, delta1)
    return loss, grads


class _BatchRollout:
    """Lockstep sampler: every trajectory colors vertex order[k] at step k.

    Layer-1 preactivations are maintained incrementally per row, since one
    step changes a single vertex slot and the cursor in the encoding.
    """

    def __init__(self, net: DenseNet, mdp: ColoringMDP, batch: int):
        n, cap = mdp.n_vertices, mdp.color_cap
        self.net = net
        self.mdp = mdp
        self.assignments = np.zeros((batch, n), dtype=np.int64)
        self.blocked = np.zeros((batch, n, cap), dtype=bool)
        self.max_colors = np.zeros(batch, dtype=np.int64)
        self.actions = np.zeros((batch, n), dtype=np.int64)
        self.masks = np.zeros((batch, n, cap), dtype=bool)
        self.dead = np.zeros(batch, dtype=bool)
        w0, b0 = net.weights[0], net.biases[0]
        start = b0 + w0[np.arange(n) * (cap + 1)].sum(axis=0)
        start = start + w0[n * (cap + 1) + int(mdp.vertex_order[0])]
        self.l1_pre = np.tile(start, (batch, 1))

    def step_masks(self, k: int) -> np.ndarray:
        mdp = self.mdp
        cap = mdp.color_cap
        v = int(mdp.vertex_order[k])
        limit = np.minimum(self.max_colors + 1, cap)  # (B,)
        mask = np.arange(cap)[None, :] < limit[:, None]
        mask &= ~self.blocked[:, v, :]
        for u in mdp.later_neighbors[k]:
            near_full = self.blocked[:, u, :].sum(axis=1) == cap - 1
            if near_full.any():
                rows = np.flatnonzero(near_full)
                missing = np.argmin(self.blocked[rows, u, :], axis=1)
                mask[rows, missing] = False
        return mask

    def logits(self) -> np.ndarray:
        return _hidden_chain(self.net, self.l1_pre)[0]

    def apply(self, k: int, actions: np.ndarray, mask: np.ndarray) -> None:
        mdp = self.mdp
        n, cap = mdp.n_vertices, mdp.color_cap
        v = int(mdp.vertex_order[k])
        alive = ~self.dead
        picked = mask[np.arange(actions.shape[0]), actions]
        self.dead |= alive & ~picked
        alive = ~self.dead
        self.actions[:, k] = actions
        self.masks[:, k, :] = mask
        colors = actions + 1
        self.assignments[alive, v] = colors[alive]
        self.max_colors[alive] = np.maximum(self.max_colors[alive], colors[alive])
        if mdp.later_neighbors[k].size:
            rows = np.flatnonzero(alive)
            for u in mdp.later_neighbors[k]:
                self.blocked[rows, u, actions[rows]] = True
        if k + 1 < n:
            w0 = self.net.weights[0]
            rows = np.flatnonzero(alive)
            self.l1_pre[rows] += (
                w0[v * (cap + 1) + colors[rows]]
                - w0[v * (cap + 1)]
                - w0[n * (cap + 1) + v]
                + w0[n * (cap + 1) + int(mdp.vertex_order[k + 1])]
            )


def _sample_batch(
    net: DenseNet, mdp: ColoringMDP, batch: int, rng: np.random.Generator
) -> tuple[_BatchRollout, int]:
    """Roll a full lockstep batch; re-rolls dead trajectories. Returns the
    rollout and the number of dead-end restarts."""
    restarts = 0
    rollout = _roll_once(net, mdp, batch, rng)
    while rollout.dead.any():
        n_dead = int(rollout.dead.sum())
        restarts += n_dead
        if restarts > 100 * batch:
            raise NumericError(
                f"too many dead-end restarts ({restarts}); color cap {mdp.color_cap} "
                "is too tight for this graph, raise mask_extra_colors"
            )
        fresh = _roll_once(net, mdp, n_dead, rng)
        slots = np.flatnonzero(rollout.dead)
        keep = np.flatnonzero(~fresh.dead)
        for dst, src in zip(slots, keep):
            rollout.assignments[dst] = fresh.assignments[src]
            rollout.actions[dst] = fresh.actions[src]
            rollout.masks[dst] = fresh.masks[src]
            rollout.max_colors[dst] = fresh.max_colors[src]
            rollout.dead[dst] = False
    return rollout, restarts


def _roll_once(
    net: DenseNet, mdp: ColoringMDP, batch: int, rng: np.random.Generator
) -> _BatchRollout:
    rollout = _BatchRollout(net, mdp, batch)
    for k in range(mdp.n_vertices):
        mask = rollout.step_masks(k)
        logits = rollout.logits()
        probs = np.where(mask, np.exp(logits - logits.max(axis=1, keepdims=True)), 0.0)
        totals = probs.sum(axis=1)
        stuck = totals <= 0
        if stuck.any():
            # keep the lockstep shape; stuck rows take a dummy action and are
            # flagged dead inside apply()
            probs[stuck, 0] = 1.0
            totals[stuck] = 1.0
        cdf = np.cumsum(probs, axis=1)
        draws = rng.random(batch) * totals
        actions = (cdf < draws[:, None]).sum(axis=1)
        rollout.apply(k, actions.astype(np.int64), mask)
    return rollout


@dataclass
class TrainConfig:
    iterations: int = 1000
    trajectories_per_iteration: int = 16
    seed: int = 0
    mask_extra_colors: int = 0
    measurement: MeasurementConfig = field(default_factory=MeasurementConfig)
    mode: str = "fc"
    learning_rate: float = 3e-4
    hidden_sizes: tuple[int, ...] = (512, 512)
    accumulation_period: int = 10

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.trajectories_per_iteration < 1:
            raise ValueError("trajectories_per_iteration must be >= 1")
        if self.mask_extra_colors < 0:
            raise ValueError("mask_extra_colors must be >= 0")
        if self.mode not in ("fc", "qwc"):
            raise ValueError(f"mode must be 'fc' or 'qwc', got {self.mode!r}")


@dataclass
class IterationLog:
    iteration: int
    mean_loss: float
    best_reward: float
    best_m_est: float
    best_colors: int


@dataclass
class DiscoveredGrouping:
    assignment: np.ndarray
    color_count: int
    m_est: float
    reward: float
    first_iteration: int


class TrainedSampler:
    """Trained flow network bound to its Hamiltonian, graph, and color cap."""

    def __init__(
        self,
        hamiltonian: QubitHamiltonian,
        mdp: ColoringMDP,
        net: DenseNet,
        config: TrainConfig,
        adam: AdamState | None = None,
    ):
        self.hamiltonian = hamiltonian
        self.mdp = mdp
        self.net = net
        self.config = config
        self.adam = adam
        self.log: list[IterationLog] = []
        self.discovered: dict[bytes, DiscoveredGrouping] = {}
        self.dead_end_restarts = 0
        self._best: DiscoveredGrouping | None = None
        self._best_reward = -np.inf

    @property
    def best(self) -> DiscoveredGrouping:
        """Lowest measurement estimate found, ties broken by fewer groups."""
        if self._best is None:
            raise ValueError("no terminal states recorded yet")
        return self._best

    @property
    def best_reward(self) -> float:
        return self._best_reward

    def _metrics(self, assignment_row: np.ndarray) -> tuple[float, float, int]:
        return _terminal_metrics(
            self.hamiltonian, self.mdp.color_cap, assignment_row, self.config.measurement
        )

    def _record(self, rollout: _BatchRollout, iteration: int) -> np.ndarray:
        rewards = np.empty(rollout.assignments.shape[0])
        for b in range(rollout.assignments.shape[0]):
            row = rollout.assignments[b]
            m_est, rew, colors = self._metrics(row)
            rewards[b] = rew
            key = row.tobytes()
            if key not in self.discovered:
                found = DiscoveredGrouping(
                    assignment=row.copy(),
                    color_count=colors,
                    m_est=m_est,
                    reward=rew,
                    first_iteration=iteration,
                )
                self.discovered[key] = found
                self._best_reward = max(self._best_reward, rew)
                if self._best is None or (m_est, colors) < (self._best.m_est, self._best.color_count):
                    self._best = found
        return rewards

    def sample(self, n: int, rng: np.random.Generator | int = 0):
        """n independent terminal samples as (Coloring, m_est, reward) triples."""
        if n < 1:
            raise ValueError("need at least one sample")
        if not isinstance(rng, np.random.Generator):
            rng = np.random.Generator(np.random.PCG64(rng))
        rollout, restarts = _sample_batch(self.net, self.mdp, n, rng)
        self.dead_end_restarts += restarts
        out = []
        for b in range(n):
            m_est, rew, _ = self._metrics(rollout.assignments[b])
            out.append((Coloring(rollout.assignments[b].copy()), m_est, rew))
        return out

    def save(self, path) -> None:
        if self.adam is None:
            raise ValueError("sampler has no optimizer state to checkpoint")
        best = self.best if self.discovered else None
        metadata = {
            "hamiltonian": dump_hamiltonian(self.hamiltonian),
            "mode": self.config.mode,
            "color_cap": self.mdp.color_cap,
            "epsilon": self.config.measurement.epsilon,
            "lambda0": self.config.measurement.lambda0,
            "seed": self.config.seed,
            "iterations": self.config.iterations,
            "trajectories_per_iteration": self.config.trajectories_per_iteration,
            "mask_extra_colors": self.config.mask_extra_colors,
            "learning_rate": self.config.learning_rate,
            "hidden_sizes": list(self.config.hidden_sizes),
            "accumulation_period": self.config.accumulation_period,
            "best_assignment": None if best is None else best.assignment.tolist(),
        }
        save_checkpoint(path, self.net, self.adam, metadata)

    @classmethod
    def load(cls, path) -> "TrainedSampler":
        net, adam, metadata = load_checkpoint(path)
        h = loads_hamiltonian(metadata["hamiltonian"])
        graph = build_complement_graph(h, metadata["mode"])
        mdp = ColoringMDP(graph, int(metadata["color_cap"]))
        config = TrainConfig(
            iterations=int(metadata["iterations"]),
            trajectories_per_iteration=int(metadata["trajectories_per_iteration"]),
            seed=int(metadata["seed"]),
            mask_extra_colors=int(metadata["mask_extra_colors"]),
            measurement=MeasurementConfig(
                epsilon=float(metadata["epsilon"]), lambda0=float(metadata["lambda0"])
            ),
            mode=metadata["mode"],
            learning_rate=float(metadata["learning_rate"]),
            hidden_sizes=tuple(metadata["hidden_sizes"]),
            accumulation_period=int(metadata["accumulation_period"]),
        )
        sampler = cls(h, mdp, net, config, adam)
        best = metadata.get("best_assignment")
        if best is not None:
            row = np.asarray(best, dtype=np.int64)
            m_est, rew, colors = sampler._metrics(row)
            found = DiscoveredGrouping(row, colors, m_est, rew, -1)
            sampler.discovered[row.tobytes()] = found
            sampler._best = found
            sampler._best_reward = rew
        return sampler


def _terminal_metrics(
    h: QubitHamiltonian, color_cap: int, assignment: np.ndarray, cfg: MeasurementConfig
) -> tuple[float, float, int]:
    """(m_est, reward, color_count) for a complete assignment row."""
    per_color = np.bincount(
        assignment, weights=h.coefficients() ** 2, minlength=color_cap + 1
    )[1:]
    m_est = float(np.sum(np.sqrt(per_color[per_color > 0])) ** 2 / cfg.epsilon**2)
    colors = int(assignment.max(initial=0))
    rew = float(h.n_terms - colors) + cfg.lambda0 / m_est
    return m_est, rew, colors


def sample_trajectory(
    net: DenseNet,
    mdp: ColoringMDP,
    rng: np.random.Generator,
    hamiltonian: QubitHamiltonian | None = None,
    measurement: MeasurementConfig = MeasurementConfig(),
) -> Trajectory:
    """Single rollout through the masked policy. When the Hamiltonian is
    given, the terminal reward and measurement estimate are filled in."""
    rollout, _ = _sample_batch(net, mdp, 1, rng)
    assignment = rollout.assignments[0]
    if hamiltonian is not None:
        m_est, rew, _ = _terminal_metrics(hamiltonian, mdp.color_cap, assignment, measurement)
    else:
        m_est, rew = float("nan"), 1.0
    return Trajectory(
        mdp=mdp,
        actions=rollout.actions[0].copy(),
        masks=rollout.masks[0].copy(),
        coloring=Coloring(assignment.copy()),
        reward=rew,
        m_est=m_est,
    )


def train(h: QubitHamiltonian, config: TrainConfig | None = None) -> TrainedSampler:
    """Flow-matching training loop; returns the sampler with per-iteration log.

    The color cap is the random-sequential greedy color count (same seed)
    plus config.mask_extra_colors. Each iteration samples a batch, averages
    the per-trajectory loss gradients, and feeds one gradient to Adam, which
    updates parameters every accumulation_period iterations.
    """
    if config is None:
        config = TrainConfig()
    if h.n_terms == 0:
        raise ValueError("Hamiltonian has no groupable terms")
    graph = build_complement_graph(h, config.mode)
    cap = greedy_color(graph, "random_sequential", seed=config.seed).max_color
    cap += config.mask_extra_colors
    mdp = ColoringMDP(graph, cap)
    net = DenseNet.initialize(
        [mdp.encoding_dim, *config.hidden_sizes, mdp.n_actions], seed=config.seed
    )
    adam = AdamState.for_net(
        net, lr=config.learning_rate, accumulation_period=config.accumulation_period
    )
    sampler = TrainedSampler(h, mdp, net, config, adam)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    batch = config.trajectories_per_iteration

    for iteration in range(config.iterations):
        try:
            rollout, restarts = _sample_batch(net, mdp, batch, rng)
            sampler.dead_end_restarts += restarts
            rewards = sampler._record(rollout, iteration)
            total_loss = 0.0
            grad_sum = [np.zeros_like(p) for p in net.parameters()]
            for b in range(batch):
                trajectory = Trajectory(
                    mdp=mdp,
                    actions=rollout.actions[b],
                    masks=rollout.masks[b],
                    coloring=Coloring(rollout.assignments[b].copy()),
                    reward=float(rewards[b]),
                    m_est=float("nan"),
                )
                loss, grads = flow_matching_loss(trajectory, net)
                total_loss += loss
                for acc, g in zip(grad_sum, grads):
                    acc += g
            for acc in grad_sum:
                acc /= batch
            adam_accumulate_and_step(adam, net.parameters(), grad_sum)
            check_finite(net, f"iteration {iteration}")
        except NumericError as err:
            raise NumericError(f"iteration {iteration}: {err}") from err
        best = sampler.best
        sampler.log.append(
            IterationLog(
                iteration=iteration,
                mean_loss=total_loss / batch,
                best_reward=sampler.best_reward,
                best_m_est=best.m_est,
                best_colors=best.color_count,
            )
        )
    return sampler


def training_log_csv(log: list[IterationLog]) -> str:
    lines = ["iteration,mean_loss,best_reward,best_m_est,best_colors"]
    for row in log:
        lines.append(
            f"{row.iteration},{row.mean_loss!r},{row.best_reward!r},{row.best_m_est!r},{row.best_colors}"
        )
    return "\n".join(lines) + "\n"


def enumerate_terminal_assignments(mdp: ColoringMDP) -> list[np.ndarray]:
    """All reachable terminal assignments under the masked MDP (DFS)."""
    out: list[np.ndarray] = []

    def walk(state: ColoringState):
        if state.is_terminal():
            out.append(state.assignment.copy())
            return
        for action in np.flatnonzero(legal_actions(state)):
            walk(state.child(int(action)))

    walk(mdp.initial_state())
    return out
