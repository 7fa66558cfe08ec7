"""Batch engine: reference equivalence, batching invariance, determinism,
trace recording, and conservation under load."""

import numpy as np
import pytest

from minsurprise.networks import (
    ACTION_LENGTH,
    PREDICTION_LENGTH,
    ControllerState,
    Genome,
    Scenario,
    act,
    decode,
    predict,
    random_genome,
    scenario_prediction,
)
from minsurprise.simulation import simulate_batch, simulate_traced
from minsurprise.world import SimConfig, random_world, sense, step


def spread_genome(seed, scale=3.0):
    g = random_genome(np.random.default_rng(seed))
    return Genome(np.clip(g.action_weights * scale, -5, 5),
                  np.clip(g.prediction_weights * scale, -5, 5))


def reference_simulation(genome, config, scenario, seed):
    """Single-world mirror of the engine built on the scalar reference API.

    Returns (error_sum, comparisons, final robot tuples, final block list).
    """
    rng = np.random.default_rng(seed)
    world = random_world(config, rng)
    action_net, pred_net = decode(genome)
    n, t_steps = config.swarm_size, config.steps
    states = [ControllerState() for _ in range(n)]
    pred_prev = np.zeros((n, 12))
    fixed = None if scenario is Scenario.EMERGENT else scenario_prediction(scenario)
    err = 0.0
    for t in range(t_steps):
        sensors = np.stack([sense(world, i) for i in range(n)]).astype(float)
        if fixed is None:
            if t > 0:
                err += np.abs(pred_prev - sensors).reshape(-1).sum()
        else:
            err += np.abs(fixed - sensors).reshape(-1).sum()
        commands = [act(action_net, sensors[i], states[i]) for i in range(n)]
        if fixed is None and t + 1 < t_steps:
            for i in range(n):
                pred_prev[i] = predict(pred_net, sensors[i],
                                       commands[i].action, states[i])
        step(world, commands, rng)
    comparisons = t_steps - 1 if fixed is None else t_steps
    robots = [(p.x, p.y, int(p.heading)) for p in world.robots]
    return err, comparisons, robots, list(world.blocks)


class TestReferenceEquivalence:
    @pytest.mark.parametrize("scenario", [Scenario.EMERGENT, Scenario.PAIRS])
    def test_engine_matches_scalar_reference_bit_exactly(self, scenario):
        rng = np.random.default_rng(321)
        for trial in range(4):
            config = SimConfig(
                int(rng.integers(5, 10)), int(rng.integers(2, 6)),
                int(rng.integers(0, 8)), steps=int(rng.integers(25, 60)),
            )
            genome = spread_genome(trial)
            seed = int(rng.integers(0, 2**63))
            ref_err, ref_comp, _, _ = reference_simulation(
                genome, config, scenario, seed
            )
            errs, comp = simulate_batch(
                [genome], config, scenario,
                np.array([[seed]], dtype=np.uint64), verify_every=5,
            )
            assert comp == ref_comp
            assert errs[0, 0] == ref_err  # bitwise, not approximate

    def test_single_robot_world_matches_reference(self):
        # N=1 exercises the one-row matmul path end to end
        config = SimConfig(6, 1, 4, steps=50)
        genome = spread_genome(11)
        ref_err, _, _, _ = reference_simulation(
            genome, config, Scenario.EMERGENT, 77
        )
        errs, _ = simulate_batch([genome], config, Scenario.EMERGENT,
                                 np.array([[77]], dtype=np.uint64))
        assert errs[0, 0] == ref_err

    def test_engine_final_state_matches_reference(self):
        config = SimConfig(8, 4, 6, steps=40)
        genome = spread_genome(9)
        seed = 4242
        _, _, ref_robots, ref_blocks = reference_simulation(
            genome, config, Scenario.EMERGENT, seed
        )
        trace = simulate_traced(genome, config, Scenario.EMERGENT, seed)
        assert set(ref_blocks) == set(trace.end_blocks)
        final = trace.robot_window[-1]
        assert sorted(map(tuple, final.tolist())) == \
               sorted((x, y) for x, y, _ in ref_robots)


class TestBatchingInvariance:
    def test_population_batch_equals_single_genome_calls(self):
        # One vectorized call over many genomes must be bit-identical to
        # evaluating each genome alone: per-world purity.
        config = SimConfig(8, 3, 5, steps=50)
        genomes = [spread_genome(i) for i in range(6)]
        seeds = np.arange(18, dtype=np.uint64).reshape(6, 3) + 100
        batched, comp = simulate_batch(genomes, config, Scenario.EMERGENT, seeds)
        for i, genome in enumerate(genomes):
            alone, comp2 = simulate_batch(
                [genome], config, Scenario.EMERGENT, seeds[i:i + 1]
            )
            assert comp2 == comp
            assert np.array_equal(alone[0], batched[i])

    def test_world_columns_are_independent(self):
        config = SimConfig(8, 3, 5, steps=50)
        genome = spread_genome(3)
        seeds = np.array([[7, 8, 9]], dtype=np.uint64)
        together, _ = simulate_batch([genome], config, Scenario.EMERGENT, seeds)
        for w in range(3):
            alone, _ = simulate_batch(
                [genome], config, Scenario.EMERGENT, seeds[:, w:w + 1]
            )
            assert alone[0, 0] == together[0, w]


class TestDeterminism:
    def test_identical_inputs_identical_outputs(self):
        config = SimConfig(10, 4, 8, steps=60)
        genomes = [spread_genome(i) for i in range(3)]
        seeds = np.arange(6, dtype=np.uint64).reshape(3, 2)
        a, _ = simulate_batch(genomes, config, Scenario.EMERGENT, seeds)
        b, _ = simulate_batch(genomes, config, Scenario.EMERGENT, seeds)
        assert np.array_equal(a, b)

    def test_traced_run_reproducible(self):
        config = SimConfig(8, 3, 5, steps=40)
        genome = spread_genome(5)
        t1 = simulate_traced(genome, config, Scenario.EMERGENT, 11,
                             record_io=True)
        t2 = simulate_traced(genome, config, Scenario.EMERGENT, 11,
                             record_io=True)
        assert t1.error_sum == t2.error_sum
        assert np.array_equal(t1.robot_window, t2.robot_window)
        assert np.array_equal(t1.predictions, t2.predictions)


class TestScenarioComparisons:
    def test_emergent_has_t_minus_one_comparisons(self):
        config = SimConfig(8, 2, 3, steps=25)
        _, comp = simulate_batch([spread_genome(0)], config, Scenario.EMERGENT,
                                 np.array([[1]], dtype=np.uint64))
        assert comp == 24

    def test_predefined_has_t_comparisons(self):
        config = SimConfig(8, 2, 3, steps=25)
        for scenario in (Scenario.PAIRS, Scenario.CLUSTERS, Scenario.EMPTY):
            _, comp = simulate_batch([spread_genome(0)], config, scenario,
                                     np.array([[1]], dtype=np.uint64))
            assert comp == 25

    def test_predefined_error_is_integer_valued(self):
        config = SimConfig(8, 3, 6, steps=30)
        errs, _ = simulate_batch([spread_genome(2)], config, Scenario.CLUSTERS,
                                 np.array([[5, 6]], dtype=np.uint64))
        assert np.array_equal(errs, np.round(errs))

    def test_zero_genome_scores_half_in_emergent_mode(self):
        # all-0.5 predictions against binary sensors: error is exactly half
        # the comparison volume
        config = SimConfig(8, 3, 6, steps=30)
        genome = Genome(np.zeros(ACTION_LENGTH), np.zeros(PREDICTION_LENGTH))
        errs, comp = simulate_batch([genome], config, Scenario.EMERGENT,
                                    np.array([[3, 4, 5]], dtype=np.uint64))
        expected = 0.5 * 3 * comp * 12
        assert np.all(errs == expected)


class TestTraces:
    def test_window_shapes_and_block_identity(self):
        config = SimConfig(8, 3, 5, steps=40)  # tau = 32
        trace = simulate_traced(spread_genome(7), config, Scenario.EMERGENT, 2)
        assert trace.tau == 32
        assert trace.robot_window.shape == (33, 3, 2)
        assert trace.block_window.shape == (33, 5, 2)
        assert len(trace.start_blocks) == 5
        assert len(trace.end_blocks) == 5
        # block positions change by at most one cell per step (identity
        # tracked through pushes, never teleported)
        diffs = np.abs(np.diff(trace.block_window, axis=0))
        diffs = np.minimum(diffs, 8 - diffs)
        assert diffs.max() <= 1

    def test_io_log_matches_error_sum(self):
        config = SimConfig(8, 3, 5, steps=40)
        trace = simulate_traced(spread_genome(8), config, Scenario.EMERGENT, 3,
                                record_io=True)
        assert trace.predictions.shape == (39, 3, 12)
        recomputed = float(np.abs(trace.predictions - trace.sensor_log).sum())
        assert recomputed == pytest.approx(trace.error_sum, abs=1e-9)

    def test_too_short_run_rejected(self):
        config = SimConfig(8, 3, 5, steps=20)  # tau = 32 > 20
        with pytest.raises(ValueError):
            simulate_traced(spread_genome(0), config, Scenario.EMERGENT, 1)

    def test_snapshot_every_full_length_gives_start_and_end(self):
        config = SimConfig(8, 3, 5, steps=40)
        trace = simulate_traced(spread_genome(1), config, Scenario.EMERGENT, 4,
                                snapshot_every=40)
        assert [t for t, _ in trace.snapshots] == [0, 40]
        for _, text in trace.snapshots:
            assert len(text.splitlines()) == 8

    def test_traced_many_matches_individual_traces(self):
        from minsurprise.simulation import simulate_traced_many

        config = SimConfig(8, 3, 5, steps=40)
        genomes = [spread_genome(i) for i in range(3)]
        seeds = [4, 5, 6]
        batched = simulate_traced_many(genomes, config, Scenario.EMERGENT, seeds)
        for genome, seed, got in zip(genomes, seeds, batched):
            solo = simulate_traced(genome, config, Scenario.EMERGENT, seed)
            assert solo.error_sum == got.error_sum
            assert solo.end_blocks == got.end_blocks
            assert np.array_equal(solo.robot_window, got.robot_window)
            assert np.array_equal(solo.block_window, got.block_window)

    def test_conservation_under_fuzz(self):
        rng = np.random.default_rng(99)
        for _ in range(6):
            config = SimConfig(
                int(rng.choice([5, 8, 11])), int(rng.integers(1, 8)),
                int(rng.integers(0, 12)), steps=100,
            )
            genomes = [spread_genome(int(rng.integers(1000)))
                       for _ in range(3)]
            seeds = rng.integers(0, 2**63, (3, 4)).astype(np.uint64)
            simulate_batch(genomes, config, Scenario.EMERGENT, seeds,
                           verify_every=10)
