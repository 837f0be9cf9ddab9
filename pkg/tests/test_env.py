import numpy as np
import pytest
from hypothesis import given, strategies as st

from alarm_annotator.env import (
    ACTION_ALARM,
    ACTION_NON_ALARM,
    AnnotationEnv,
    EpisodeExhaustedError,
    Normalizer,
    SCORE_CEILING,
    SimpleMatchReward,
    VitalThresholds,
    VitalsBandReward,
    normalcy_score,
    normalcy_scores,
    reward,
)
from alarm_annotator.ingest import AnnotatedEvent, BinaryLabel, Dataset, SeverityClass

from _fixtures import dataset_from_labels, event, sample

MID = sample()  # hr 90, sbp 145, dbp 100: all three scored channels mid-band
EDGES = sample(hr=60.0, sbp=200.0, dbp=60.0)
FAR_OUT = sample(hr=190.0, sbp=40.0, dbp=20.0)


class TestThresholds:
    def test_defaults(self):
        t = VitalThresholds()
        assert t.hr == (60.0, 120.0)
        assert t.sbp == (90.0, 200.0)
        assert t.dbp == (60.0, 140.0)

    def test_rejects_inverted_band(self):
        with pytest.raises(ValueError, match="hr"):
            VitalThresholds(hr=(120.0, 60.0))


class TestNormalcyScore:
    def test_mid_band_hits_ceiling(self):
        assert normalcy_score(MID) == pytest.approx(22.5, abs=1e-9)

    def test_all_edges_give_fifteen(self):
        assert normalcy_score(EDGES) == pytest.approx(15.0, abs=1e-6)

    def test_far_outside_gives_floor(self):
        assert normalcy_score(FAR_OUT) == pytest.approx(7.5, abs=1e-6)

    def test_single_edge_drops_one_half_term(self):
        one_edge = sample(hr=60.0)
        assert normalcy_score(one_edge) == pytest.approx(20.0, abs=1e-6)

    def test_score_brackets(self):
        for s in (MID, EDGES, FAR_OUT, sample(hr=59.0), sample(sbp=250.0)):
            assert 7.5 - 1e-9 <= normalcy_score(s) <= 22.5 + 1e-9

    def test_monotone_in_distance_past_high_edge(self):
        values = [normalcy_score(sample(hr=h)) for h in (120.0, 121.0, 125.0, 160.0)]
        assert values == sorted(values, reverse=True)

    def test_custom_thresholds_move_the_bands(self):
        t = VitalThresholds(hr=(40.0, 80.0), sbp=(90.0, 200.0), dbp=(60.0, 140.0))
        assert normalcy_score(sample(hr=60.0), t) == pytest.approx(22.5, abs=1e-9)
        assert normalcy_score(sample(hr=90.0), t) < 20.0

    def test_vectorized_matches_scalar(self):
        events = dataset_from_labels([0, 1, 0, 1]).events
        matrix = np.array([e.vitals.as_array() for e in events])
        batch = normalcy_scores(matrix)
        for i, e in enumerate(events):
            assert batch[i] == pytest.approx(normalcy_score(e.vitals), abs=1e-12)


class TestSimpleMatchReward:
    scheme = SimpleMatchReward()

    def test_payout_matrix(self):
        alarm = event(0, SeverityClass.URGENT)
        calm = event(1000, SeverityClass.NO_EVENT)
        assert self.scheme.reward(alarm, ACTION_ALARM) == 10.0
        assert self.scheme.reward(alarm, ACTION_NON_ALARM) == 0.0
        assert self.scheme.reward(calm, ACTION_NON_ALARM) == 1.0
        assert self.scheme.reward(calm, ACTION_ALARM) == 0.0

    def test_tables_match_pointwise(self):
        events = dataset_from_labels([0, 1, 1, 0]).events
        r_non, r_alarm = self.scheme.reward_tables(events)
        for i, e in enumerate(events):
            assert r_non[i] == self.scheme.reward(e, ACTION_NON_ALARM)
            assert r_alarm[i] == self.scheme.reward(e, ACTION_ALARM)

    def test_module_level_dispatch(self):
        alarm = event(0, SeverityClass.EMERGENT)
        assert reward(self.scheme, alarm, ACTION_ALARM) == 10.0


class TestVitalsBandReward:
    def test_mirror_payouts_sum_to_ceiling(self):
        scheme = VitalsBandReward()
        for s in (MID, EDGES, FAR_OUT, sample(hr=59.0)):
            e = AnnotatedEvent(0, s, SeverityClass.NO_EVENT, BinaryLabel.NON_ALARM)
            total = scheme.reward(e, ACTION_NON_ALARM) + scheme.reward(e, ACTION_ALARM)
            assert total == pytest.approx(SCORE_CEILING, abs=1e-9)

    def test_mirror_rewards_alarm_when_abnormal(self):
        scheme = VitalsBandReward()
        abnormal = event(0, hr=190.0, sbp=40.0, dbp=20.0)
        assert scheme.reward(abnormal, ACTION_ALARM) == pytest.approx(15.0, abs=1e-6)
        assert scheme.reward(abnormal, ACTION_NON_ALARM) == pytest.approx(7.5, abs=1e-6)

    def test_state_only_ignores_action(self):
        scheme = VitalsBandReward(action_mode="state_only")
        e = event(0, hr=59.0)
        assert scheme.reward(e, ACTION_ALARM) == scheme.reward(e, ACTION_NON_ALARM)

    def test_rejects_unknown_mode(self):
        with pytest.raises(ValueError):
            VitalsBandReward(action_mode="both")

    def test_tables_match_pointwise(self):
        scheme = VitalsBandReward()
        events = dataset_from_labels([1, 0, 1]).events
        r_non, r_alarm = scheme.reward_tables(events)
        for i, e in enumerate(events):
            assert r_non[i] == pytest.approx(scheme.reward(e, ACTION_NON_ALARM), abs=1e-12)
            assert r_alarm[i] == pytest.approx(scheme.reward(e, ACTION_ALARM), abs=1e-12)


@given(
    hr=st.floats(min_value=0.0, max_value=300.0),
    sbp=st.floats(min_value=0.0, max_value=300.0),
    dbp=st.floats(min_value=0.0, max_value=300.0),
)
def test_mirror_complement_everywhere(hr, sbp, dbp):
    scheme = VitalsBandReward()
    e = event(0, hr=hr, sbp=sbp, dbp=dbp)
    total = scheme.reward(e, ACTION_NON_ALARM) + scheme.reward(e, ACTION_ALARM)
    assert total == pytest.approx(SCORE_CEILING, abs=1e-9)


class TestNormalizer:
    def test_two_point_fit_maps_to_unit_scores(self):
        ds = Dataset([event(0, hr=80.0), event(1000, hr=100.0)])
        norm = Normalizer.fit(ds)
        lo = norm.transform(ds.events[0].vitals)
        hi = norm.transform(ds.events[1].vitals)
        assert lo[0] == pytest.approx(-1.0)
        assert hi[0] == pytest.approx(1.0)

    def test_zero_variance_field_pins_to_zero(self):
        ds = Dataset([event(0, hr=80.0), event(1000, hr=100.0)])
        norm = Normalizer.fit(ds)
        z = norm.transform(ds.events[0].vitals)
        assert np.all(z[1:] == 0.0)  # every other field is constant in the fixture

    def test_identity_passes_through(self):
        x = sample().as_array()
        np.testing.assert_array_equal(Normalizer.identity().transform(x), x)

    def test_fit_refuses_empty_dataset(self):
        with pytest.raises(ValueError):
            Normalizer.fit(Dataset([]))

    def test_json_round_trip(self):
        ds = dataset_from_labels([0, 1, 0])
        norm = Normalizer.fit(ds)
        clone = Normalizer.from_json_obj(norm.to_json_obj())
        x = sample(hr=123.0).as_array()
        np.testing.assert_array_equal(norm.transform(x), clone.transform(x))

    def test_transform_matrix(self):
        ds = dataset_from_labels([0, 1, 0, 1])
        norm = Normalizer.fit(ds)
        Z = norm.transform(ds.vitals_matrix())
        np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-12)


class TestAnnotationEnv:
    def make_env(self, labels=(0, 1, 0)):
        ds = dataset_from_labels(list(labels))
        return AnnotationEnv(ds.events, SimpleMatchReward()), ds

    def test_replay_never_depends_on_action(self):
        env_a, ds = self.make_env()
        env_b, _ = self.make_env()
        env_a.reset()
        env_b.reset()
        for _ in range(len(ds)):
            ta = env_a.step(ACTION_ALARM)
            tb = env_b.step(ACTION_NON_ALARM)
            np.testing.assert_array_equal(ta.next_state, tb.next_state)

    def test_step_sequence_and_terminal(self):
        env, ds = self.make_env([0, 1])
        state = env.reset()
        np.testing.assert_array_equal(state, ds.events[0].vitals.as_array())
        first = env.step(ACTION_NON_ALARM)
        assert first.reward == 1.0 and not first.terminal
        assert not env.done
        second = env.step(ACTION_ALARM)
        assert second.reward == 10.0 and second.terminal
        # terminal transition repeats the final state rather than inventing one
        np.testing.assert_array_equal(second.next_state, second.state)
        assert env.done

    def test_step_after_done_raises(self):
        env, _ = self.make_env([0])
        env.reset()
        env.step(ACTION_NON_ALARM)
        with pytest.raises(EpisodeExhaustedError):
            env.step(ACTION_NON_ALARM)

    def test_reset_rewinds(self):
        env, _ = self.make_env([0, 1])
        env.reset()
        env.step(ACTION_NON_ALARM)
        env.reset()
        assert not env.done
        t = env.step(ACTION_NON_ALARM)
        assert t.reward == 1.0

    def test_normalizer_applied_to_states(self):
        ds = dataset_from_labels([0, 1, 0, 1])
        norm = Normalizer.fit(ds)
        env = AnnotationEnv(ds.events, SimpleMatchReward(), normalizer=norm)
        state = env.reset()
        np.testing.assert_allclose(state, norm.transform(ds.events[0].vitals))

    def test_rejects_empty_episode(self):
        with pytest.raises(ValueError):
            AnnotationEnv([], SimpleMatchReward())

    def test_from_arrays_matches_event_construction(self):
        ds = dataset_from_labels([0, 1, 1])
        scheme = SimpleMatchReward()
        r_non, r_alarm = scheme.reward_tables(ds.events)
        env_a = AnnotationEnv(ds.events, scheme)
        env_b = AnnotationEnv.from_arrays(ds.vitals_matrix(), r_non, r_alarm)
        env_a.reset()
        env_b.reset()
        for _ in range(3):
            ta = env_a.step(ACTION_ALARM)
            tb = env_b.step(ACTION_ALARM)
            np.testing.assert_array_equal(ta.state, tb.state)
            assert ta.reward == tb.reward
            assert ta.terminal == tb.terminal
