import numpy as np
import pytest

from tvcate.panel import (
    FeatureCodec,
    HistoryView,
    InterventionPair,
    Panel,
    Trajectory,
    decode_history,
    encode_block,
    encode_history,
    panel_from_arrays,
    panel_from_csv,
    panel_to_csv,
    pooled_rows,
    validate_panel,
)


def random_panel(rng, n=6, lengths=None, d=2, arity=3):
    trajs = []
    for i in range(n):
        T = int(lengths[i]) if lengths is not None else int(rng.integers(1, 6))
        X = rng.normal(size=(T, d)) * 10.0 ** rng.integers(-3, 4)
        A = rng.integers(0, arity, size=T)
        Y = rng.normal(size=T)
        trajs.append(Trajectory(X, A, Y))
    return Panel(tuple(trajs), treatment_arity=arity)


class TestValidatePanel:
    def test_well_formed_panel_passes(self):
        rng = np.random.default_rng(0)
        panel = random_panel(rng, n=3)
        assert validate_panel(panel) == []

    def test_treatment_out_of_range(self):
        tr = Trajectory([[0.0]], [2], [1.0])
        report = validate_panel(Panel((tr,), treatment_arity=2))
        assert any("treatment out of range" in msg for msg in report)

    def test_non_finite_outcome(self):
        tr = Trajectory([[0.0], [1.0]], [0, 1], [1.0, np.nan])
        report = validate_panel(Panel((tr,), treatment_arity=2))
        assert any("non-finite outcome" in msg for msg in report)

    def test_covariate_dim_mismatch(self):
        trs = (Trajectory([[0.0]], [0], [1.0]), Trajectory([[0.0, 1.0]], [0], [1.0]))
        report = validate_panel(Panel(trs, treatment_arity=2))
        assert any("covariate dimension" in msg for msg in report)


class TestEncodeHistory:
    def test_hand_layout_t1(self):
        codec = FeatureCodec(max_len=3, cov_dim=1, treatment_arity=2)
        tr = Trajectory([0.7, -1.0, 2.0], [1, 0, 1], [5.0, 6.0, 7.0])
        vec = encode_history(HistoryView(tr, 1), codec)
        expected = [0.7, 0, 0, 0, 0, 0, 0, 1, 0, 0, 1]
        np.testing.assert_array_equal(vec, expected)

    def test_differing_past_treatment_gives_distinct_vectors(self):
        codec = FeatureCodec(max_len=3, cov_dim=1, treatment_arity=2)
        tr1 = Trajectory([0.5, 0.5], [0, 0], [1.0, 1.0])
        tr2 = Trajectory([0.5, 0.5], [1, 0], [1.0, 1.0])
        v1 = encode_history(HistoryView(tr1, 2), codec)
        v2 = encode_history(HistoryView(tr2, 2), codec)
        assert not np.array_equal(v1, v2)

    def test_deterministic(self):
        codec = FeatureCodec(max_len=4, cov_dim=2, treatment_arity=3)
        rng = np.random.default_rng(3)
        tr = Trajectory(rng.normal(size=(4, 2)), rng.integers(0, 3, 4), rng.normal(size=4))
        h = HistoryView(tr, 3)
        np.testing.assert_array_equal(encode_history(h, codec), encode_history(h, codec))

    def test_history_exceeding_capacity_errors(self):
        codec = FeatureCodec(max_len=2, cov_dim=1)
        tr = Trajectory([0.0, 1.0, 2.0], [0, 1, 0], [0.0, 0.0, 0.0])
        with pytest.raises(ValueError, match="exceeds codec capacity"):
            encode_history(HistoryView(tr, 3), codec)

    def test_mask_marks_real_slots(self):
        codec = FeatureCodec(max_len=5, cov_dim=1, treatment_arity=2)
        tr = Trajectory(np.arange(5.0), [0, 1, 0, 1, 0], np.arange(5.0))
        for t in range(1, 6):
            vec = encode_history(HistoryView(tr, t), codec)
            mask_off = 5 * 1 + 4 * 1 + 4
            mask = vec[mask_off:mask_off + 5]
            np.testing.assert_array_equal(mask, (np.arange(5) < t).astype(float))

    def test_batch_matches_single(self):
        rng = np.random.default_rng(11)
        codec = FeatureCodec(max_len=4, cov_dim=2, treatment_arity=3)
        X = rng.normal(size=(7, 4, 2))
        A = rng.integers(0, 3, size=(7, 4))
        Y = rng.normal(size=(7, 4))
        for t in (1, 2, 4):
            batch = encode_block(X, A, Y, t, codec)
            for i in range(7):
                single = encode_history(HistoryView(Trajectory(X[i], A[i], Y[i]), t), codec)
                np.testing.assert_array_equal(batch[i], single)

    def test_decode_round_trip_bit_exact(self):
        rng = np.random.default_rng(7)
        codec = FeatureCodec(max_len=5, cov_dim=3, treatment_arity=4)
        for _ in range(50):
            T = int(rng.integers(1, 6))
            tr = Trajectory(rng.normal(size=(T, 3)) * 10.0 ** rng.integers(-2, 3),
                            rng.integers(0, 4, T), rng.normal(size=T))
            t = int(rng.integers(1, T + 1))
            vec = encode_history(HistoryView(tr, t), codec)
            x, a, y, t_dec = decode_history(vec, codec)
            assert t_dec == t
            np.testing.assert_array_equal(x, tr.covariates[:t])
            np.testing.assert_array_equal(a, tr.treatments[:t - 1])
            np.testing.assert_array_equal(y, tr.outcomes[:t - 1])

    def test_windowed_scheme_keeps_recent_steps(self):
        full = FeatureCodec(max_len=5, cov_dim=1, treatment_arity=2)
        win = FeatureCodec(max_len=5, cov_dim=1, treatment_arity=2, scheme="windowed:2")
        tr = Trajectory(np.arange(5.0), [0, 1, 1, 0, 1], np.arange(5.0) * 2)
        vec = encode_history(HistoryView(tr, 4), win)
        assert vec.shape[0] == win.width < full.width
        # x slots hold the last two covariates X_3, X_4
        np.testing.assert_array_equal(vec[:2], [2.0, 3.0])
        # past-treatment slot holds A_3; past-outcome slot holds Y_3
        assert vec[2] == 1.0 and vec[3] == 4.0
        # time index keeps the true t
        assert vec[-1] == 4.0


class TestPooledRows:
    def test_row_count_two_length5_tau1(self):
        rng = np.random.default_rng(1)
        panel = random_panel(rng, n=2, lengths=[5, 5], d=1, arity=2)
        rows = pooled_rows(panel, tau=1)
        assert rows.features.shape[0] == 8

    def test_boundary_tau4_one_row_each(self):
        rng = np.random.default_rng(2)
        panel = random_panel(rng, n=3, lengths=[5, 5, 5], d=1, arity=2)
        rows = pooled_rows(panel, tau=4)
        assert rows.target.shape[0] == 3
        np.testing.assert_array_equal(rows.t, [1, 1, 1])

    def test_per_trajectory_weights_lengths_5_and_3(self):
        rng = np.random.default_rng(3)
        panel = random_panel(rng, n=2, lengths=[5, 3], d=1, arity=2)
        rows = pooled_rows(panel, tau=1, weight_mode="per_trajectory")
        # per-row factors 1/4 and 1/2, globally scaled by 1/n = 1/2
        np.testing.assert_allclose(rows.weight[rows.traj_id == 0], 1 / 8)
        np.testing.assert_allclose(rows.weight[rows.traj_id == 1], 1 / 4)
        assert rows.weight.sum() == pytest.approx(1.0)

    def test_uniform_weights_sum_to_one(self):
        rng = np.random.default_rng(4)
        panel = random_panel(rng, n=5, lengths=[5, 4, 3, 5, 2], d=2, arity=2)
        rows = pooled_rows(panel, tau=1)
        expected_rows = sum(T - 1 for T in [5, 4, 3, 5, 2])
        assert rows.weight.shape[0] == expected_rows
        np.testing.assert_allclose(rows.weight, 1 / expected_rows)

    def test_target_is_future_outcome(self):
        panel = panel_from_arrays(np.zeros((1, 4)), np.zeros((1, 4), dtype=int),
                                  [[10.0, 20.0, 30.0, 40.0]])
        rows = pooled_rows(panel, tau=2)
        np.testing.assert_array_equal(rows.target, [30.0, 40.0])

    def test_supplied_target_values(self):
        rng = np.random.default_rng(5)
        panel = random_panel(rng, n=2, lengths=[3, 3], d=1, arity=2)
        vals = np.arange(4.0)
        rows = pooled_rows(panel, tau=1, target=vals)
        np.testing.assert_array_equal(rows.target, vals)

    def test_horizon_too_long_errors(self):
        rng = np.random.default_rng(6)
        panel = random_panel(rng, n=2, lengths=[5, 3], d=1, arity=2)
        with pytest.raises(ValueError, match="horizon too long"):
            pooled_rows(panel, tau=3)

    def test_rows_ordered_by_trajectory_then_time(self):
        rng = np.random.default_rng(8)
        panel = random_panel(rng, n=3, lengths=[4, 2, 3], d=1, arity=2)
        rows = pooled_rows(panel, tau=1)
        np.testing.assert_array_equal(rows.traj_id, [0, 0, 0, 1, 2, 2])
        np.testing.assert_array_equal(rows.t, [1, 2, 3, 1, 1, 2])


class TestInterventionPair:
    def test_tau_from_length(self):
        pair = InterventionPair((0, 1), (1, 0))
        assert pair.tau == 1

    def test_mismatched_lengths_error(self):
        with pytest.raises(ValueError, match="share length"):
            InterventionPair((0, 1), (1,))

    def test_equal_sequences_allowed(self):
        pair = InterventionPair((1,), (1,))
        assert pair.a_seq == pair.b_seq


class TestCsvRoundTrip:
    def test_bit_exact_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        panel = random_panel(rng, n=8, d=3, arity=3)
        path = tmp_path / "panel.csv"
        panel_to_csv(panel, path)
        back = panel_from_csv(path, treatment_arity=3)
        assert back.n == panel.n
        for tr0, tr1 in zip(panel.trajectories, back.trajectories):
            np.testing.assert_array_equal(tr0.covariates, tr1.covariates)
            np.testing.assert_array_equal(tr0.treatments, tr1.treatments)
            np.testing.assert_array_equal(tr0.outcomes, tr1.outcomes)

    def test_header_layout(self, tmp_path):
        panel = panel_from_arrays(np.zeros((1, 2, 2)), np.zeros((1, 2), dtype=int),
                                  np.zeros((1, 2)))
        path = tmp_path / "p.csv"
        panel_to_csv(panel, path)
        header = path.read_text().splitlines()[0]
        assert header == "traj_id,t,x_1,x_2,a,y"

    def test_rejects_foreign_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("foo,bar\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            panel_from_csv(path)
