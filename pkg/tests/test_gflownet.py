import numpy as np
import pytest

from pauliflow.gflownet import (
    ColoringMDP,
    NoActionError,
    TrainConfig,
    TrainedSampler,
    Trajectory,
    encode_state,
    enumerate_terminal_assignments,
    flow_matching_loss,
    forward_policy,
    legal_actions,
    sample_trajectory,
    train,
    training_log_csv,
)
from pauliflow.graphs import CompatGraph, build_complement_graph, greedy_color, validate_coloring
from pauliflow.hamio import bundled_path, load_hamiltonian, loads_hamiltonian
from pauliflow.measurement import MeasurementConfig, estimate_measurements
from pauliflow.graphs import Grouping
from pauliflow.nn import DenseNet
from pauliflow.pauli import PauliWord, QubitHamiltonian


def graph_from_edges(n, edges, mode="fc"):
    adj = np.zeros((n, n), dtype=bool)
    for i, j in edges:
        adj[i, j] = adj[j, i] = True
    return CompatGraph(mode=mode, adjacency=adj)


def random_graph(n, p, seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    adj = np.triu(rng.random((n, n)) < p, k=1)
    return CompatGraph(mode="fc", adjacency=adj | adj.T)


def tiny_config(**overrides):
    base = dict(
        iterations=5,
        trajectories_per_iteration=4,
        seed=0,
        hidden_sizes=(16,),
        mode="fc",
    )
    base.update(overrides)
    return TrainConfig(**base)


class TestMDPAndMasks:
    def test_vertex_order_descending_degree(self):
        g = graph_from_edges(4, [(0, 1), (1, 2), (1, 3), (2, 3)])
        mdp = ColoringMDP(g, 3)
        # degrees: 1:3, 2:2, 3:2, 0:1 -> ties by index
        assert list(mdp.vertex_order) == [1, 2, 3, 0]

    def test_first_vertex_only_fresh_color(self):
        mdp = ColoringMDP(random_graph(6, 0.5, 1), 4)
        mask = legal_actions(mdp.initial_state())
        assert mask[0] and not mask[1:].any()

    def test_edgeless_second_vertex_two_choices(self):
        mdp = ColoringMDP(graph_from_edges(3, []), 3)
        state = mdp.initial_state().child(0)
        assert list(legal_actions(state)) == [True, True, False]

    def test_neighbors_block_colors(self):
        # path 0-1-2 with cap 3: vertex order 1,0,2
        mdp = ColoringMDP(graph_from_edges(3, [(0, 1), (1, 2)]), 3)
        state = mdp.initial_state().child(0)  # vertex 1 -> color 1
        mask = legal_actions(state)  # vertex 0, adjacent to 1
        assert list(mask) == [False, True, False]

    def test_terminal_raises(self):
        mdp = ColoringMDP(graph_from_edges(1, []), 1)
        terminal = mdp.initial_state().child(0)
        assert terminal.is_terminal()
        with pytest.raises(NoActionError):
            legal_actions(terminal)

    def test_doom_avoidance_on_tight_cap(self):
        # complete bipartite {0,1}x{2,3} conflictless within sides, cap 2:
        # giving the second left vertex a second color would strand the right side
        g = graph_from_edges(4, [(0, 2), (0, 3), (1, 2), (1, 3)])
        mdp = ColoringMDP(g, 2)
        s1 = mdp.initial_state().child(0)
        mask = legal_actions(s1)  # second vertex, same side
        assert mask[0] and not mask[1]

    def test_masks_never_empty_on_bundled_h2(self):
        h = load_hamiltonian(bundled_path("h2_sto3g_1A_jw.ham"))
        for mode in ("fc", "qwc"):
            g = build_complement_graph(h, mode)
            cap = greedy_color(g, "random_sequential", seed=0).max_color
            mdp = ColoringMDP(g, cap)

            def walk(state, depth):
                if state.is_terminal():
                    return
                mask = legal_actions(state)
                assert mask.any()
                for action in np.flatnonzero(mask)[:2]:
                    walk(state.child(int(action)), depth + 1)

            walk(mdp.initial_state(), 0)

    def test_reachable_states_always_proper(self):
        for seed in range(10):
            g = random_graph(5, 0.5, seed)
            cap = greedy_color(g, "random_sequential", seed=seed).max_color
            mdp = ColoringMDP(g, cap)
            for assignment in enumerate_terminal_assignments(mdp):
                same = assignment[:, None] == assignment[None, :]
                assert not np.any(same & g.adjacency)


class TestEncoding:
    def test_initial_encoding(self):
        mdp = ColoringMDP(graph_from_edges(3, [(0, 1)]), 2)
        enc = encode_state(mdp.initial_state())
        assert enc.shape == (mdp.encoding_dim,)
        # every vertex in the "uncolored" slot
        for v in range(3):
            assert enc[v * 3] == 1.0
        # cursor = highest-degree vertex (0)
        assert enc[9 + mdp.vertex_order[0]] == 1.0

    def test_terminal_encoding_has_no_uncolored_or_cursor(self):
        mdp = ColoringMDP(graph_from_edges(2, [(0, 1)]), 2)
        state = mdp.initial_state().child(0).child(1)
        enc = encode_state(state)
        n, cap = 2, 2
        for v in range(n):
            assert enc[v * (cap + 1)] == 0.0
        assert not enc[n * (cap + 1) :].any()

    def test_injective_over_reachable_states_4_vertices(self):
        g = graph_from_edges(4, [(0, 1), (2, 3)])
        cap = greedy_color(g, "random_sequential", seed=0).max_color + 1
        mdp = ColoringMDP(g, cap)
        seen = {}

        def walk(state):
            key = encode_state(state).tobytes()
            ident = (state.assignment.tobytes(), state.cursor)
            if key in seen:
                assert seen[key] == ident, "two distinct states share an encoding"
            seen[key] = ident
            if state.is_terminal():
                return
            for action in np.flatnonzero(legal_actions(state)):
                walk(state.child(int(action)))

        walk(mdp.initial_state())
        assert len(seen) > 4


class TestForwardPolicy:
    def test_single_allowed_action_probability_one(self):
        mdp = ColoringMDP(graph_from_edges(2, [(0, 1)]), 2)
        net = DenseNet.initialize([mdp.encoding_dim, 8, 2], seed=0)
        probs = forward_policy(net, mdp.initial_state())
        assert probs[0] == pytest.approx(1.0) and probs[1] == 0.0

    def test_zero_net_uniform_over_allowed(self):
        mdp = ColoringMDP(graph_from_edges(3, []), 3)
        net = DenseNet(
            [np.zeros((mdp.encoding_dim, 3))], [np.zeros(3)]
        )
        state = mdp.initial_state().child(0)
        probs = forward_policy(net, state)
        assert probs[0] == pytest.approx(0.5) and probs[1] == pytest.approx(0.5)

    def test_shift_invariance(self):
        mdp = ColoringMDP(graph_from_edges(3, []), 3)
        state = mdp.initial_state().child(0)
        net = DenseNet.initialize([mdp.encoding_dim, 6, 3], seed=2)
        p1 = forward_policy(net, state)
        net.biases[-1] += 7.3  # constant shift of all log-flows
        p2 = forward_policy(net, state)
        assert np.allclose(p1, p2)

    def test_sums_to_one(self):
        for seed in range(5):
            g = random_graph(6, 0.4, seed)
            cap = greedy_color(g, "random_sequential", seed=seed).max_color
            mdp = ColoringMDP(g, cap)
            net = DenseNet.initialize([mdp.encoding_dim, 8, cap], seed=seed)
            state = mdp.initial_state()
            rng = np.random.Generator(np.random.PCG64(seed))
            while not state.is_terminal():
                probs = forward_policy(net, state)
                assert probs.sum() == pytest.approx(1.0, abs=1e-12)
                assert np.all(probs[~legal_actions(state)] == 0.0)
                state = state.child(int(rng.choice(cap, p=probs)))


class TestSampling:
    def test_one_vertex_deterministic(self):
        h = QubitHamiltonian(1, [(1.0, PauliWord.from_text("Z0", 1))])
        g = build_complement_graph(h, "fc")
        mdp = ColoringMDP(g, 1)
        net = DenseNet.initialize([mdp.encoding_dim, 4, 1], seed=0)
        rng = np.random.Generator(np.random.PCG64(0))
        traj = sample_trajectory(net, mdp, rng, hamiltonian=h)
        assert list(traj.coloring.assignment) == [1]
        assert traj.reward > 0

    def test_sampled_colorings_always_valid(self):
        for seed in range(6):
            g = random_graph(7, 0.45, seed)
            cap = greedy_color(g, "random_sequential", seed=seed).max_color
            mdp = ColoringMDP(g, cap)
            net = DenseNet.initialize([mdp.encoding_dim, 8, cap], seed=seed)
            rng = np.random.Generator(np.random.PCG64(seed))
            for _ in range(25):
                traj = sample_trajectory(net, mdp, rng)
                assert validate_coloring(g, traj.coloring)
                assert traj.coloring.max_color <= cap

    def test_batch_masks_match_scalar_legal_actions(self):
        """The lockstep sampler must agree with the reference state machinery."""
        for seed in range(5):
            g = random_graph(6, 0.5, seed)
            cap = greedy_color(g, "random_sequential", seed=seed).max_color
            mdp = ColoringMDP(g, cap)
            net = DenseNet.initialize([mdp.encoding_dim, 8, cap], seed=seed)
            rng = np.random.Generator(np.random.PCG64(seed + 99))
            traj = sample_trajectory(net, mdp, rng)
            state = mdp.initial_state()
            for k in range(traj.n_steps):
                assert np.array_equal(traj.masks[k], legal_actions(state))
                state = state.child(int(traj.actions[k]))
            assert state.is_terminal()
            assert np.array_equal(state.assignment, traj.coloring.assignment)


class TestSparseInputFastPath:
    """The trajectory loss avoids dense one-hot encodings; pin it to them."""

    def trajectory_and_encodings(self, seed):
        g = random_graph(6, 0.5, seed)
        cap = greedy_color(g, "random_sequential", seed=seed).max_color + 1
        mdp = ColoringMDP(g, cap)
        net = DenseNet.initialize([mdp.encoding_dim, 10, 7, cap], seed=seed)
        rng = np.random.Generator(np.random.PCG64(seed))
        traj = sample_trajectory(net, mdp, rng)
        states = traj.states()[:-1]
        enc = np.stack([encode_state(s) for s in states])
        return mdp, net, traj, enc

    @pytest.mark.parametrize("seed", range(5))
    def test_l1_pre_matches_dense(self, seed):
        from pauliflow.gflownet import _trajectory_l1_pre

        mdp, net, traj, enc = self.trajectory_and_encodings(seed)
        fast = _trajectory_l1_pre(net, mdp, traj.actions)
        dense = enc @ net.weights[0] + net.biases[0]
        assert np.allclose(fast, dense, atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_l1_grads_match_dense(self, seed):
        from pauliflow.gflownet import _trajectory_l1_grads

        mdp, net, traj, enc = self.trajectory_and_encodings(seed)
        rng = np.random.Generator(np.random.PCG64(seed + 1))
        delta = rng.normal(size=(traj.n_steps, net.layer_sizes[1]))
        dw0, db0 = _trajectory_l1_grads(net, mdp, traj.actions, delta)
        assert np.allclose(dw0, enc.T @ delta, atol=1e-12)
        assert np.allclose(db0, delta.sum(axis=0), atol=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_rollout_logits_match_dense_forward(self, seed):
        mdp, net, traj, enc = self.trajectory_and_encodings(seed)
        dense_logits = net.forward(enc)
        from pauliflow.gflownet import _hidden_chain, _trajectory_l1_pre

        fast_logits, _ = _hidden_chain(net, _trajectory_l1_pre(net, mdp, traj.actions))
        assert np.allclose(fast_logits, dense_logits, atol=1e-10)


class TestFlowMatchingLoss:
    def test_exact_flows_give_zero_loss(self):
        # 2 mutually-compatible terms, cap 2: terminals x_A (1,1), x_B (1,2)
        h = QubitHamiltonian(2, [(0.6, PauliWord.from_text("ZI")), (0.8, PauliWord.from_text("IZ"))])
        g = build_complement_graph(h, "fc")
        mdp = ColoringMDP(g, 2)
        cfg = MeasurementConfig(epsilon=1.0, lambda0=1.0)
        m_a = estimate_measurements(h, Grouping(((0, 1),)), epsilon=1.0)
        m_b = estimate_measurements(h, Grouping(((0,), (1,))), epsilon=1.0)
        r_a = (2 - 1) + 1.0 / m_a
        r_b = (2 - 2) + 1.0 / m_b

        # linear net reproducing the exact log-flows on the two decision states
        s0 = mdp.initial_state()
        s1 = s0.child(0)
        e0, e1 = encode_state(s0), encode_state(s1)
        targets = np.array([[np.log(r_a + r_b), 0.0], [np.log(r_a), np.log(r_b)]])
        w, *_ = np.linalg.lstsq(np.stack([e0, e1]), targets, rcond=None)
        net = DenseNet([w], [np.zeros(2)])
        assert np.allclose(net.forward(np.stack([e0, e1])), targets, atol=1e-9)

        rng = np.random.Generator(np.random.PCG64(0))
        for _ in range(4):
            traj = sample_trajectory(net, mdp, rng, hamiltonian=h, measurement=cfg)
            loss, grads = flow_matching_loss(traj, net)
            assert loss == pytest.approx(0.0, abs=1e-15)

    def test_loss_nonnegative_and_grads_shaped(self):
        g = random_graph(5, 0.5, 3)
        cap = greedy_color(g, "random_sequential", seed=3).max_color
        mdp = ColoringMDP(g, cap)
        h = QubitHamiltonian(
            3,
            [(c, PauliWord.from_text(t)) for c, t in zip([0.5, 0.4, 0.3, 0.2, 0.1], ["ZII", "IZI", "IIZ", "ZZI", "IZZ"])],
        )
        net = DenseNet.initialize([mdp.encoding_dim, 12, cap], seed=3)
        rng = np.random.Generator(np.random.PCG64(3))
        traj = sample_trajectory(net, mdp, rng, hamiltonian=h)
        loss, grads = flow_matching_loss(traj, net)
        assert loss >= 0.0
        for g_arr, p in zip(grads, net.parameters()):
            assert g_arr.shape == p.shape

    def test_loss_gradient_matches_finite_differences(self):
        g = random_graph(4, 0.5, 7)
        cap = greedy_color(g, "random_sequential", seed=7).max_color + 1
        mdp = ColoringMDP(g, cap)
        h = QubitHamiltonian(
            2,
            [(c, PauliWord.from_text(t)) for c, t in zip([0.7, 0.5, 0.3, 0.2], ["ZI", "IZ", "ZZ", "XX"])],
        )
        net = DenseNet.initialize([mdp.encoding_dim, 6, cap], seed=7)
        rng = np.random.Generator(np.random.PCG64(7))
        traj = sample_trajectory(net, mdp, rng, hamiltonian=h)
        _, grads = flow_matching_loss(traj, net)
        step = 1e-6
        for p, g_arr in zip(net.parameters(), grads):
            flat, gflat = p.reshape(-1), g_arr.reshape(-1)
            for i in range(0, flat.size, max(1, flat.size // 5)):
                original = flat[i]
                flat[i] = original + step
                plus, _ = flow_matching_loss(traj, net)
                flat[i] = original - step
                minus, _ = flow_matching_loss(traj, net)
                flat[i] = original
                numeric = (plus - minus) / (2 * step)
                assert numeric == pytest.approx(gflat[i], rel=2e-4, abs=1e-7)


class TestTraining:
    def test_untrained_single_iteration_emits_valid_colorings(self):
        h = loads_hamiltonian("qubits: 2\n0.5 Z0\n0.4 X0 X1\n0.3 Z0 Z1\n0.2 X0\n")
        sampler = train(h, tiny_config(iterations=1))
        g = sampler.mdp.graph
        for coloring, m_est, rew in sampler.sample(20, rng=1):
            assert validate_coloring(g, coloring)
            assert m_est > 0 and rew > 0

    def test_log_shape_and_csv(self):
        h = loads_hamiltonian("qubits: 2\n0.5 Z0\n0.4 X0 X1\n0.3 Z0 Z1\n")
        sampler = train(h, tiny_config(iterations=5))
        assert len(sampler.log) == 5
        csv_text = training_log_csv(sampler.log)
        lines = csv_text.strip().splitlines()
        assert lines[0] == "iteration,mean_loss,best_reward,best_m_est,best_colors"
        assert len(lines) == 6

    def test_deterministic_given_seed(self):
        h = loads_hamiltonian("qubits: 2\n0.5 Z0\n0.4 X0 X1\n0.3 Z0 Z1\n0.2 X0\n")
        a = train(h, tiny_config(iterations=4, seed=5))
        b = train(h, tiny_config(iterations=4, seed=5))
        for pa, pb in zip(a.net.parameters(), b.net.parameters()):
            assert np.array_equal(pa, pb)
        assert [r.mean_loss for r in a.log] == [r.mean_loss for r in b.log]
        assert a.best.m_est == b.best.m_est

    def test_best_tracks_min_m_est(self):
        h = loads_hamiltonian("qubits: 2\n0.5 Z0\n0.4 X0 X1\n0.3 Z0 Z1\n0.2 X0\n")
        sampler = train(h, tiny_config(iterations=10))
        best = sampler.best
        assert best.m_est == min(d.m_est for d in sampler.discovered.values())
        assert all(
            best.m_est <= row.best_m_est + 1e-9 for row in sampler.log[-1:]
        )

    def test_equivalent_color_permutations_share_m_est(self):
        h = loads_hamiltonian("qubits: 2\n0.5 Z0\n0.4 X0 X1\n0.3 Z0 Z1\n0.2 X0\n")
        sampler = train(h, tiny_config(iterations=8, seed=2))
        by_partition = {}
        for d in sampler.discovered.values():
            key = frozenset(
                frozenset(np.flatnonzero(d.assignment == c))
                for c in range(1, d.color_count + 1)
                if np.any(d.assignment == c)
            )
            by_partition.setdefault(key, set()).add(round(d.m_est, 6))
        for values in by_partition.values():
            assert len(values) == 1

    def test_checkpoint_round_trip_preserves_sampling(self, tmp_path):
        h = loads_hamiltonian("qubits: 2\n0.5 Z0\n0.4 X0 X1\n0.3 Z0 Z1\n")
        sampler = train(h, tiny_config(iterations=3, seed=1))
        path = tmp_path / "ckpt.npz"
        sampler.save(path)
        loaded = TrainedSampler.load(path)
        assert loaded.mdp.color_cap == sampler.mdp.color_cap
        assert loaded.config.mode == sampler.config.mode
        a = sampler.sample(10, rng=7)
        b = loaded.sample(10, rng=7)
        for (ca, ma, ra), (cb, mb, rb) in zip(a, b):
            assert np.array_equal(ca.assignment, cb.assignment)
            assert ma == mb and ra == rb
        assert loaded.best.m_est == sampler.best.m_est


class TestDistributionFidelity:
    def test_small_instance_trains_to_reward_proportional_sampling(self):
        # 4 compatible terms (edgeless conflict graph), cap 2 after slack
        h = loads_hamiltonian("qubits: 2\n0.9 Z0\n0.7 Z1\n0.5 Z0 Z1\n0.3 I\n0.3 X0 X1\n")
        assert h.n_terms == 4
        config = TrainConfig(
            iterations=4000,
            trajectories_per_iteration=32,
            seed=11,
            mask_extra_colors=1,
            mode="qwc",
            learning_rate=3e-3,
            hidden_sizes=(48, 48),
            accumulation_period=1,
            measurement=MeasurementConfig(epsilon=0.05, lambda0=10.0),
        )
        sampler = train(h, config)
        assert sampler.log[-1].mean_loss < 1e-5

        terminals = enumerate_terminal_assignments(sampler.mdp)
        rewards = {}
        for assignment in terminals:
            m_est, rew, _ = sampler._metrics(assignment)
            rewards[assignment.tobytes()] = rew
        z = sum(rewards.values())

        n = 100_000
        counts = {}
        for coloring, _, _ in sampler.sample(n, rng=123):
            key = coloring.assignment.astype(np.int64).tobytes()
            counts[key] = counts.get(key, 0) + 1
        assert set(counts) <= set(rewards)
        tv = 0.5 * sum(
            abs(counts.get(k, 0) / n - rewards[k] / z) for k in rewards
        )
        assert tv < 0.15, f"total variation {tv:.4f}"
