import numpy as np
import pytest

from ltpnet import pso as P
from ltpnet.rng import SeededRng


def sphere_cfg(dim=2, **overrides):
    args = dict(bounds=[(-5.0, 5.0)] * dim, seed=0)
    args.update(overrides)
    return P.SwarmConfig(**args)


class TestObjectives:
    def test_sphere_values(self):
        assert P.sphere(np.zeros(4)) == 0.0
        assert P.sphere([1.0, 0.0, 0.0]) == 1.0
        assert P.sphere([1.0, 2.0, 3.0]) == 14.0

    def test_rastrigin_values(self):
        assert P.rastrigin(np.zeros(3)) == 0.0
        np.testing.assert_allclose(P.rastrigin([1.0]), 1.0, atol=1e-12)
        np.testing.assert_allclose(P.rastrigin([0.5]), 20.25, atol=1e-12)

    def test_registry(self):
        assert P.make_objective("sphere", 3).dim == 3
        with pytest.raises(ValueError, match="unknown objective"):
            P.make_objective("ackley", 3)


class TestInitSwarm:
    def test_degenerate_interval(self):
        cfg = sphere_cfg(dim=1, bounds=[(0.0, 1e-9)], n_particles=10)
        state = P.init_swarm(cfg, P.make_objective("sphere", 1))
        np.testing.assert_allclose(state.positions, 0.0, atol=1e-8)

    def test_same_seed_identical(self):
        cfg = sphere_cfg(n_particles=20)
        s1 = P.init_swarm(cfg, P.make_objective("sphere", 2))
        s2 = P.init_swarm(cfg, P.make_objective("sphere", 2))
        np.testing.assert_array_equal(s1.positions, s2.positions)

    def test_positions_uniform_mean(self):
        cfg = sphere_cfg(n_particles=50, seed=3)
        state = P.init_swarm(cfg, P.make_objective("sphere", 2))
        # mean of U(-5,5) over 50 draws: std of the mean ~ 0.41
        assert np.all(np.abs(state.positions.mean(axis=0)) < 0.6)

    def test_velocities_zero_and_bests_at_start(self):
        cfg = sphere_cfg(n_particles=8)
        state = P.init_swarm(cfg, P.make_objective("sphere", 2))
        np.testing.assert_array_equal(state.velocities, 0.0)
        np.testing.assert_array_equal(state.best_positions, state.positions)
        assert state.global_best_value == state.best_values.min()

    def test_invalid_bounds(self):
        with pytest.raises(ValueError, match="bound"):
            P.init_swarm(sphere_cfg(dim=1, bounds=[(2.0, 1.0)]), P.make_objective("sphere", 1))

    def test_bounds_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            P.init_swarm(sphere_cfg(dim=1), P.make_objective("sphere", 3))


class TestStep:
    def test_velocity_update_hand_case(self):
        v = P.velocity_update(
            v=0.2, x=0.0, p=1.0, g=2.0, omega=0.5, c1=1.0, c2=1.0, r1=0.5, r2=0.5
        )
        np.testing.assert_allclose(v, 1.6)

    def test_converged_particle_stays_fixed(self):
        cfg = sphere_cfg(dim=2, n_particles=1, iterations=5)
        obj = P.make_objective("sphere", 2)
        streams = [SeededRng(0).split(0)]
        state = P.init_swarm(cfg, obj, streams)
        spot = np.array([1.5, -2.0])
        state.positions[0] = spot
        state.velocities[0] = 0.0
        state.best_positions[0] = spot
        state.best_values[0] = obj.fn(spot)
        state.global_best_position = spot.copy()
        state.global_best_value = obj.fn(spot)
        P.step(state, cfg, obj, streams)
        np.testing.assert_array_equal(state.positions[0], spot)

    def test_global_best_non_increasing(self):
        cfg = sphere_cfg(dim=3, n_particles=12, iterations=40, seed=5)
        _, _, history = P.run(cfg, P.make_objective("sphere", 3))
        assert all(b <= a for a, b in zip(history, history[1:]))

    def test_positions_stay_in_bounds(self):
        cfg = sphere_cfg(dim=2, n_particles=10, iterations=30, seed=6,
                         bounds=[(-0.5, 0.5), (-0.1, 2.0)])
        obj = P.make_objective("sphere", 2)
        streams = [SeededRng(cfg.seed).split(i) for i in range(cfg.n_particles)]
        state = P.init_swarm(cfg, obj, streams)
        lo = np.array([-0.5, -0.1])
        hi = np.array([0.5, 2.0])
        for _ in range(cfg.iterations):
            P.step(state, cfg, obj, streams)
            assert np.all(state.positions >= lo) and np.all(state.positions <= hi)

    def test_personal_best_dominates_visited_positions(self):
        cfg = sphere_cfg(dim=2, n_particles=6, iterations=25, seed=7)
        obj = P.make_objective("sphere", 2)
        streams = [SeededRng(cfg.seed).split(i) for i in range(cfg.n_particles)]
        state = P.init_swarm(cfg, obj, streams)
        for _ in range(cfg.iterations):
            P.step(state, cfg, obj, streams)
            current = np.array([obj.fn(x) for x in state.positions])
            assert np.all(state.best_values <= current + 1e-15)

    def test_velocity_decay_without_attraction(self):
        cfg = sphere_cfg(dim=2, n_particles=3, c1=0.0, c2=0.0, omega=0.5,
                         bounds=[(-100.0, 100.0)] * 2)
        obj = P.make_objective("sphere", 2)
        streams = [SeededRng(0).split(i) for i in range(3)]
        state = P.init_swarm(cfg, obj, streams)
        state.velocities[:] = SeededRng(1).uniform(-1, 1, (3, 2))
        norms = [np.linalg.norm(state.velocities, axis=1).copy()]
        for _ in range(5):
            P.step(state, cfg, obj, streams)
            norms.append(np.linalg.norm(state.velocities, axis=1).copy())
        for before, after in zip(norms, norms[1:]):
            np.testing.assert_allclose(after, 0.5 * before, rtol=1e-12)


class TestRun:
    def test_zero_iterations_returns_initial_best(self):
        cfg = sphere_cfg(dim=2, iterations=0, n_particles=15)
        obj = P.make_objective("sphere", 2)
        pos, value, history = P.run(cfg, obj)
        init = P.init_swarm(cfg, obj)
        assert value == init.global_best_value
        assert history == []

    def test_constant_objective(self):
        cfg = sphere_cfg(dim=2, iterations=10, n_particles=5)
        obj = P.Objective(name="flat", dim=2, fn=lambda x: 7.0)
        _, value, history = P.run(cfg, obj)
        assert value == 7.0
        assert all(v == 7.0 for v in history)

    def test_history_is_deterministic(self):
        cfg = sphere_cfg(dim=4, iterations=30, n_particles=10, seed=9)
        obj = P.make_objective("sphere", 4)
        h1 = P.run(cfg, obj)[2]
        h2 = P.run(cfg, obj)[2]
        assert h1 == h2

    def test_per_dimension_rand_mode_runs(self):
        cfg = sphere_cfg(dim=3, iterations=20, n_particles=8, per_dimension_rand=True)
        _, value, _ = P.run(cfg, P.make_objective("sphere", 3))
        assert np.isfinite(value)

    def test_dynamic_inertia_schedule_interpolates(self):
        cfg = sphere_cfg(iterations=11, inertia_schedule="linear",
                         omega_start=0.9, omega_end=0.4)
        assert cfg.inertia_at(0) == 0.9
        assert cfg.inertia_at(10) == pytest.approx(0.4)
        assert cfg.inertia_at(5) == pytest.approx(0.65)


class TestHistoryCsv:
    def test_header_and_rows(self, tmp_path):
        path = tmp_path / "hist.csv"
        P.write_history_csv(path, {3: [2.0, 1.0], 1: [5.0]})
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "run_seed,iteration,global_best_value"
        assert lines[1].startswith("1,0,")
        assert lines[2].startswith("3,0,")
        assert len(lines) == 4


class TestHyperparamCodec:
    def test_round_trip_on_admissible_lattice(self):
        space = P.SearchSpace()
        for hidden in space.lstm_hidden:
            for layers in space.transformer_layers:
                h = P.HyperparamPoint(
                    lstm_hidden=hidden, lstm_lr=1e-3, transformer_layers=layers,
                    attention_heads=8, d_model=256, transformer_lr=1e-4,
                )
                back = P.decode_position(P.encode_hyperparams(h, space), space)
                assert back.lstm_hidden == h.lstm_hidden
                assert back.transformer_layers == h.transformer_layers
                assert back.attention_heads == h.attention_heads
                assert back.d_model == h.d_model
                assert back.lstm_lr == pytest.approx(h.lstm_lr, rel=1e-12)
                assert back.transformer_lr == pytest.approx(h.transformer_lr, rel=1e-12)

    def test_log_axis_midpoint(self):
        space = P.SearchSpace()
        x = P.encode_hyperparams(P.HyperparamPoint(), space)
        x[1] = (np.log10(1e-3) + np.log10(1e-4)) / 2.0
        decoded = P.decode_position(x, space)
        assert decoded.lstm_lr == pytest.approx(10**-3.5, rel=1e-12)

    def test_heads_snap_to_divisor(self):
        space = P.SearchSpace()
        x = P.encode_hyperparams(P.HyperparamPoint(), space)
        x[3] = 7.0  # nearest admissible divisor of 256 is 8
        decoded = P.decode_position(x, space)
        assert decoded.attention_heads == 8

    def test_out_of_range_rejected(self):
        space = P.SearchSpace()
        with pytest.raises(ValueError, match="lstm_hidden"):
            P.encode_hyperparams(P.HyperparamPoint(lstm_hidden=48), space)
        with pytest.raises(ValueError, match="lstm_lr"):
            P.encode_hyperparams(P.HyperparamPoint(lstm_lr=0.5), space)

    def test_heads_must_divide_d_model(self):
        with pytest.raises(ValueError, match="divide"):
            P.HyperparamPoint(attention_heads=16, d_model=24)

    def test_collapsed_space_decodes_to_single_point(self):
        space = P.SearchSpace(
            lstm_hidden=(32,), lstm_lr_bounds=(1e-3, 1e-3),
            transformer_layers=(2,), attention_heads=(4,), d_model=(32,),
            transformer_lr_bounds=(1e-4, 1e-4),
        )
        bounds = space.bounds()
        assert all(hi > lo for lo, hi in bounds)
        mid = np.array([(lo + hi) / 2 for lo, hi in bounds])
        decoded = P.decode_position(mid, space)
        assert decoded.lstm_hidden == 32
        assert decoded.transformer_layers == 2
        assert decoded.attention_heads == 4
        assert decoded.d_model == 32
        assert decoded.lstm_lr == pytest.approx(1e-3, rel=1e-8)


class TestBenchmarks:
    def test_sphere_reaches_tolerance_under_reference_config(self):
        hits = 0
        for seed in range(10):
            cfg = P.SwarmConfig(bounds=[(-5.0, 5.0)] * 5, seed=seed)
            _, best, history = P.run(cfg, P.make_objective("sphere", 5))
            assert all(b <= a for a, b in zip(history, history[1:]))
            if best <= 1e-3:
                hits += 1
        assert hits >= 9

    def test_dynamic_inertia_not_worse_on_rastrigin(self):
        obj = P.make_objective("rastrigin", 5)
        static, dynamic = [], []
        for seed in range(20):
            s_cfg = P.SwarmConfig(bounds=[(-5.0, 5.0)] * 5, seed=seed)
            d_cfg = P.SwarmConfig(
                bounds=[(-5.0, 5.0)] * 5, seed=seed,
                inertia_schedule="linear", omega_start=0.9, omega_end=0.4,
            )
            static.append(P.run(s_cfg, obj)[1])
            dynamic.append(P.run(d_cfg, obj)[1])
        assert np.median(dynamic) <= np.median(static)
