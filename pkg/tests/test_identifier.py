"""Tests for the invariance-penalty parent identifier."""

import numpy as np
import pytest

import scmbench as sb

OBS = sb.Environment(id=0)


def chain_batches(seed: int, n_train: int = 6000, n_eval: int = 4000):
    """x1 -> x0 with weight 2 and unit noises; returns (train, eval) batches."""
    weights = np.zeros((2, 2))
    weights[0, 1] = 2.0
    scm = sb.LinearGaussianScm(
        num_observed=2, num_latent=0, weights=weights,
        noise_means=np.zeros(2), noise_stds=np.ones(2), topo_order=(1, 0))
    rng = np.random.default_rng(seed)
    return (sb.sample(scm, OBS, n_train, rng), sb.sample(scm, OBS, n_eval, rng))


def all_parents_scm():
    """Five candidates, all of them direct parents of the outcome."""
    coef = [0.0, 1.2, -0.8, 1.7, 0.6, -1.4]
    weights = np.zeros((6, 6))
    for j in range(1, 6):
        weights[0, j] = coef[j]
    return sb.LinearGaussianScm(
        num_observed=6, num_latent=0, weights=weights,
        noise_means=np.zeros(6), noise_stds=np.ones(6),
        topo_order=(1, 2, 3, 4, 5, 0))


class TestPenaltyWeights:
    def test_lifecycle(self):
        w = sb.PenaltyWeights.all_active(3)
        assert len(w) == 3
        assert w.active_candidates() == [1, 2, 3]
        w.deactivate(2)
        assert w.active_candidates() == [1, 3]
        assert w.as_vector().tolist() == [1.0, 0.0, 1.0]

    def test_mask_accessor_returns_a_copy(self):
        w = sb.PenaltyWeights.all_active(2)
        w.mask[0] = 0
        assert w.active_candidates() == [1, 2]

    def test_equality(self):
        a = sb.PenaltyWeights.all_active(2)
        b = sb.PenaltyWeights.all_active(2)
        assert a == b
        b.deactivate(1)
        assert a != b

    def test_rejects_bad_operations(self):
        w = sb.PenaltyWeights.all_active(2)
        w.deactivate(1)
        with pytest.raises(ValueError, match="already inactive"):
            w.deactivate(1)
        with pytest.raises(ValueError, match="out of range"):
            w.deactivate(3)
        with pytest.raises(ValueError, match="binary"):
            sb.PenaltyWeights(np.array([1, 2, 0]))
        with pytest.raises(ValueError, match="at least one"):
            sb.PenaltyWeights.all_active(0)


class TestPenaltyStep:
    def test_all_zero_scores_below_threshold(self):
        assert sb.penalty_step([(1, 0.0), (2, 0.0)], 0.1) is None

    def test_picks_the_largest_score(self):
        assert sb.penalty_step([(1, 0.5), (2, 0.2)], 0.1) == 1
        assert sb.penalty_step([(1, 0.2), (2, 0.5)], 0.1) == 2

    def test_tie_breaks_toward_smallest_index(self):
        assert sb.penalty_step([(2, 0.3), (1, 0.3)], 0.1) == 1

    def test_threshold_is_strict(self):
        assert sb.penalty_step([(1, 0.1)], 0.1) is None

    def test_rejects_empty_input(self):
        with pytest.raises(ValueError, match="at least one"):
            sb.penalty_step([], 0.0)


class TestTrainRegressor:
    def test_all_masked_input_learns_the_mean(self):
        scm = sb.four_node_demo_scm()
        rng = np.random.default_rng(0)
        train = sb.sample(scm, OBS, 6000, rng)
        hold = sb.sample(scm, OBS, 4000, rng)
        w = sb.PenaltyWeights.all_active(3)
        for j in (1, 2, 3):
            w.deactivate(j)
        reg = sb.train_regressor([train], w, sb.TrainConfig(),
                                 np.random.default_rng(1))
        x = hold.data[:, 1:] * w.as_vector()
        mse = float(np.mean((reg.predict(x) - hold.data[:, 0]) ** 2))
        # Var(x0) = 2^2 + 1.5^2 + 1 = 7.25; a constant predictor can do no better
        assert mse == pytest.approx(7.25, rel=0.05)

    def test_chain_reaches_the_noise_floor(self):
        train, hold = chain_batches(seed=2)
        w = sb.PenaltyWeights.all_active(1)
        reg = sb.train_regressor([train], w, sb.TrainConfig(),
                                 np.random.default_rng(3))
        mse = float(np.mean((reg.predict(hold.data[:, 1:])
                             - hold.data[:, 0]) ** 2))
        assert mse == pytest.approx(1.0, rel=0.10)

    def test_determinism(self):
        train, _ = chain_batches(seed=4, n_train=1500, n_eval=10)
        w = sb.PenaltyWeights.all_active(1)
        cfg = sb.TrainConfig(epochs_per_round=50)
        a = sb.train_regressor([train], w, cfg, np.random.default_rng(9))
        b = sb.train_regressor([train], w, cfg, np.random.default_rng(9))
        for field in ("w1", "b1", "w2", "b2", "ws"):
            assert np.array_equal(getattr(a, field), getattr(b, field))

    def test_divergence_is_reported(self):
        train, _ = chain_batches(seed=5, n_train=500, n_eval=10)
        cfg = sb.TrainConfig(learning_rate=1e200, epochs_per_round=5)
        with np.errstate(over="ignore"), pytest.raises(sb.TrainingDivergedError):
            sb.train_regressor([train], sb.PenaltyWeights.all_active(1), cfg,
                               np.random.default_rng(0))

    def test_rejects_mismatched_width(self):
        train, _ = chain_batches(seed=6, n_train=100, n_eval=10)
        with pytest.raises(ValueError, match="width"):
            sb.train_regressor([train], sb.PenaltyWeights.all_active(3),
                               sb.TrainConfig(), np.random.default_rng(0))
        with pytest.raises(ValueError, match="at least one batch"):
            sb.train_regressor([], sb.PenaltyWeights.all_active(1),
                               sb.TrainConfig(), np.random.default_rng(0))


class TestResidualScores:
    def test_magnitudes_match_folded_gaussian_mean(self):
        train, hold = chain_batches(seed=7)
        w = sb.PenaltyWeights.all_active(1)
        reg = sb.train_regressor([train], w, sb.TrainConfig(),
                                 np.random.default_rng(8))
        scores = sb.residual_scores(reg, w, hold)
        assert scores.label == hold.env
        assert np.all(scores.values >= 0.0)
        expected = np.sqrt(2.0 / np.pi)  # E|N(0, 1)|
        assert float(scores.values.mean()) == pytest.approx(expected, rel=0.20)

    def test_perfect_predictor_gives_zero_scores(self):
        reg = sb.Regressor(w1=np.zeros((1, 2)), b1=np.zeros(2),
                           w2=np.zeros(2), b2=0.0, ws=np.array([2.0]))
        data = np.column_stack([np.arange(5.0) * 2.0, np.arange(5.0)])
        batch = sb.SampleBatch(env=1, data=data)
        scores = sb.residual_scores(reg, sb.PenaltyWeights.all_active(1), batch)
        assert np.all(scores.values == 0.0)

    def test_rejects_mismatched_width(self):
        batch = sb.SampleBatch(env=1, data=np.zeros((4, 2)))
        reg = sb.Regressor(w1=np.zeros((1, 2)), b1=np.zeros(2),
                           w2=np.zeros(2), b2=0.0, ws=np.zeros(1))
        with pytest.raises(ValueError, match="width"):
            sb.residual_scores(reg, sb.PenaltyWeights.all_active(3), batch)
        with pytest.raises(ValueError, match="width"):
            reg.predict(np.zeros((4, 3)))


class TestIdentifyParents:
    def test_recovers_demo_parents(self, demo_batches):
        result = sb.identify_parents(demo_batches(3), sb.TrainConfig(),
                                     np.random.default_rng(3))
        assert result.estimated_set == {1, 2}

    def test_observational_batch_is_accepted(self, demo_batches):
        batches = demo_batches(4, include_observational=True)
        result = sb.identify_parents(batches, sb.TrainConfig(),
                                     np.random.default_rng(4))
        assert result.estimated_set == {1, 2}

    def test_determinism(self, demo_batches):
        batches = demo_batches(5)
        a = sb.identify_parents(batches, sb.TrainConfig(),
                                np.random.default_rng(6))
        b = sb.identify_parents(batches, sb.TrainConfig(),
                                np.random.default_rng(6))
        assert a.estimated_set == b.estimated_set
        assert np.array_equal(a.fid_trace, b.fid_trace, equal_nan=True)
        assert np.array_equal(a.tau_trace, b.tau_trace)
        assert a.rounds_run == b.rounds_run

    def test_infinite_threshold_disables_elimination(self, demo_batches):
        cfg = sb.TrainConfig(tau=np.inf, tau_auto=False)
        result = sb.identify_parents(demo_batches(7), cfg,
                                     np.random.default_rng(7))
        assert result.estimated_set == {1, 2, 3}
        assert result.rounds_run == 1

    def test_trace_shapes_and_mask_monotonicity(self, demo_batches):
        result = sb.identify_parents(demo_batches(8), sb.TrainConfig(),
                                     np.random.default_rng(8))
        trace = result.fid_trace
        assert trace.shape == (result.rounds_run, 3)
        assert result.tau_trace.shape == (result.rounds_run,)
        active_sets = [set(np.nonzero(~np.isnan(row))[0]) for row in trace]
        for before, after in zip(active_sets, active_sets[1:]):
            assert after < before, "active set must shrink every round"
        assert result.estimated_set == set(result.final_weights.active_candidates())
        assert 0 not in result.estimated_set
        assert result.estimated_set <= {1, 2, 3}

    def test_rounds_cap_limits_eliminations(self, demo_batches):
        cfg = sb.TrainConfig(rounds=1)
        result = sb.identify_parents(demo_batches(9), cfg,
                                     np.random.default_rng(9))
        assert result.rounds_run == 1
        assert len(result.estimated_set) >= 2

    def test_keeps_full_parent_sets(self):
        scm = all_parents_scm()
        gen = sb.GenConfig()
        kept = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            envs = sb.environments_for(scm, gen, rng)
            batches = [sb.sample(scm, env, 2000, rng) for env in envs]
            result = sb.identify_parents(batches, sb.TrainConfig(),
                                         np.random.default_rng(seed + 77))
            kept += result.estimated_set == {1, 2, 3, 4, 5}
        assert kept >= 18, f"kept the full parent set in only {kept}/20 runs"

    def test_rejects_malformed_environments(self, demo_batches):
        batches = demo_batches(10, n=100)
        rng = np.random.default_rng(0)
        cfg = sb.TrainConfig()
        with pytest.raises(ValueError, match="duplicate"):
            sb.identify_parents(batches + [batches[0]], cfg, rng)
        with pytest.raises(ValueError, match="cover"):
            sb.identify_parents(batches[:2], cfg, rng)
        relabeled = [sb.SampleBatch(env=b.env + 4, data=b.data) for b in batches]
        with pytest.raises(ValueError, match="cover"):
            sb.identify_parents(relabeled, cfg, rng)
        narrow = [sb.SampleBatch(env=1, data=np.zeros((5, 2)) + rng.normal(size=(5, 2)))]
        with pytest.raises(ValueError, match="two candidates"):
            sb.identify_parents(narrow, cfg, rng)
        mixed = batches[:2] + [sb.SampleBatch(env=3, data=batches[2].data[:, :3])]
        with pytest.raises(ValueError, match="same width"):
            sb.identify_parents(mixed, cfg, rng)
        tiny = [sb.SampleBatch(env=b.env, data=b.data[:2]) for b in batches]
        with pytest.raises(ValueError, match="3 rows"):
            sb.identify_parents(tiny, cfg, rng)
        with pytest.raises(ValueError, match="at least one batch"):
            sb.identify_parents([], cfg, rng)


class TestTrainConfigValidation:
    @pytest.mark.parametrize("overrides", [
        dict(hidden_width=0),
        dict(learning_rate=0.0),
        dict(epochs_per_round=0),
        dict(batch_size=0),
        dict(rounds=0),
        dict(holdout_fraction=0.0),
        dict(holdout_fraction=1.0),
        dict(tau=-0.1),
        dict(tau_multiplier=0.0),
        dict(calibration_permutations=0),
    ])
    def test_rejects_bad_values(self, overrides):
        with pytest.raises(ValueError):
            sb.TrainConfig(**overrides)
