import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from weibull_rul import search
from weibull_rul.dataset import SPLITS
from weibull_rul.losses import LOSS_KINDS
from weibull_rul.search import SearchSpace, Thresholds, TrialConfig, TrialResult
from weibull_rul.trainer import Metrics


def cfg(trial_id=0, arch=0, kind="MSE", **kw):
    base = dict(trial_id=trial_id, arch_index=arch, loss_kind=kind, batch_size=32, learning_rate=0.001, lam=1.0,
                hidden_layers=2, units_per_layer=16, dropout_prob=0.1, seed=1, max_epochs=10, patience=5)
    base.update(kw)
    return TrialConfig(**base)


def result(r2=0.5, rmse=0.2, kind="MSE", arch=0, trial_id=0, stop=10, status="ok", per_split=None):
    metrics = {s: Metrics(rmse**2, rmse, rmse, r2) for s in SPLITS}
    metrics.update(per_split or {})
    return TrialResult(cfg(trial_id, arch, kind), metrics, stop, stop + 5, status)


class TestSampling:
    def test_nine_configs_share_architecture(self):
        configs = search.sample_architecture(SearchSpace(), 7, 3)
        assert [c.loss_kind for c in configs] == list(LOSS_KINDS)
        assert len({(c.batch_size, c.learning_rate, c.hidden_layers, c.units_per_layer, c.dropout_prob, c.lam,
                     c.seed) for c in configs}) == 1
        assert [c.trial_id for c in configs] == list(range(27, 36))

    def test_lambda_per_trial(self):
        configs = search.sample_architecture(SearchSpace(lambda_per_trial=True), 7, 3)
        assert len({c.lam for c in configs}) == 9

    def test_deterministic(self):
        assert search.sample_architecture(SearchSpace(), 1, 2) == search.sample_architecture(SearchSpace(), 1, 2)
        assert search.sample_architecture(SearchSpace(), 1, 2) != search.sample_architecture(SearchSpace(), 2, 2)

    def test_membership_and_lambda_distribution(self):
        space = SearchSpace()
        draws = [search.sample_architecture(space, 0, a)[0] for a in range(10_000)]
        assert {d.batch_size for d in draws} == set(space.batch_sizes)
        assert {d.learning_rate for d in draws} == set(space.learning_rates)
        assert {d.hidden_layers for d in draws} == set(range(2, 8))
        assert {d.units_per_layer for d in draws} == set(space.units)
        assert {d.dropout_prob for d in draws} == set(space.dropouts)
        lams = np.array([d.lam for d in draws])
        assert lams.min() >= 0 and lams.max() <= 3
        assert stats.kstest(lams, stats.uniform(0, 3).cdf).pvalue > 0.01
        counts = np.bincount([d.hidden_layers for d in draws])[2:]
        assert stats.chisquare(counts).pvalue > 0.01


class TestFilter:
    @pytest.mark.parametrize(
        "r2, rmse, ok",
        [(0.5, 0.2, True), (0.2, 0.2, False), (0.21, 0.34, True), (0.5, 0.35, False), (0.9, 0.5, False)],
    )
    def test_thresholds(self, r2, rmse, ok):
        assert search.passes(result(r2, rmse)) is ok

    def test_every_split_must_pass(self):
        bad_val = {"validation": Metrics(0.01, 0.1, 0.1, 0.1)}
        assert not search.passes(result(0.9, 0.1, per_split=bad_val))

    def test_diverged_excluded(self):
        r = result(status="diverged", per_split={s: Metrics.missing() for s in SPLITS})
        assert search.filter_results([r]) == []

    def test_custom_thresholds(self):
        assert search.passes(result(0.15, 0.3), Thresholds(0.1, 0.4))


class TestRanking:
    def test_frequency_with_ties(self):
        rs = [
            result(0.9, kind="W-MSE", arch=0, trial_id=3), result(0.8, kind="MSE", arch=0, trial_id=0),
            result(0.7, kind="RMSE", arch=1, trial_id=10), result(0.7, kind="W-RMSE", arch=1, trial_id=13),
            result(0.6, 0.1, kind="W-MSE", arch=2, trial_id=21), result(0.6, 0.2, kind="MSE", arch=2, trial_id=18),
        ]
        winners = search.architecture_winners(rs)
        # arch 1 ties on R^2 and RMSE, so declaration order picks RMSE; arch 2 breaks on RMSE
        assert [w.config.loss_kind for w in winners] == ["W-MSE", "RMSE", "W-MSE"]
        freq = search.rank_loss_frequency(rs)
        assert [(f.kind, f.count) for f in freq[:2]] == [("W-MSE", 2), ("RMSE", 1)]
        assert freq[0].percent == pytest.approx(200 / 3)
        assert sum(f.count for f in freq) == 3 and len(freq) == 9

    def test_empty(self):
        assert search.rank_loss_frequency([]) == []


def textbook_point_biserial(x, member):
    x = np.asarray(x, float)
    member = np.asarray(member, bool)
    m1, m0 = x[member].mean(), x[~member].mean()
    n1, n0, n = member.sum(), (~member).sum(), x.size
    s_n = math.sqrt(sum((v - x.mean()) ** 2 for v in x) / n)
    return (m1 - m0) / s_n * math.sqrt(n1 * n0 / n**2)


class TestPointBiserial:
    def test_perfect_separation(self):
        pb = search.point_biserial_from_groups([1, 1], [0, 0])
        assert pb.r == 1.0 and pb.p == 0.0

    def test_against_textbook_and_scipy(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=40)
        member = rng.random(40) < 0.3
        x[member] += 0.8
        pb = search.point_biserial_from_groups(x[member], x[~member])
        assert pb.r == pytest.approx(textbook_point_biserial(x, member), rel=1e-12)
        ref = stats.pointbiserialr(member, x)
        assert pb.r == pytest.approx(ref.statistic, rel=1e-10)
        assert pb.p == pytest.approx(ref.pvalue, rel=1e-8)

    def test_degenerate_groups(self):
        assert not search.point_biserial_from_groups([1.0], [0.0, 2.0]).valid
        pb = search.point_biserial_from_groups([0.5, 0.5], [0.5, 0.5])
        assert not pb.valid and pb.reason == "zero variance"

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=2, max_size=20), st.lists(st.floats(-1, 1), min_size=2, max_size=20))
    def test_bounded(self, a, b):
        pb = search.point_biserial_from_groups(a, b)
        if pb.valid:
            assert -1 <= pb.r <= 1 and 0 <= pb.p <= 1

    def test_from_results_and_permutation(self):
        rs = [result(0.8 + 0.01 * i, kind="W-MSE", trial_id=i) for i in range(6)]
        rs += [result(0.5 + 0.01 * i, kind="MSE", trial_id=10 + i) for i in range(12)]
        pb = search.point_biserial(rs, "W-MSE")
        assert pb.r > 0.9 and pb.p < 1e-5 and (pb.n_in, pb.n_out) == (6, 12)
        assert search.point_biserial_permutation(rs, "W-MSE", n_perm=500) < 0.01
        assert len(search.correlations(rs)) == 9


def linear_quantile(values, q):
    v = sorted(values)
    pos = q * (len(v) - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, len(v) - 1)
    return v[lo] + (v[hi] - v[lo]) * (pos - lo)


class TestEpochSummary:
    def test_four_values(self):
        s = search.summarize_epochs([1, 2, 3, 4])
        assert (s.q25, s.q50, s.q75) == (1.75, 2.5, 3.25)
        assert s.std == pytest.approx(math.sqrt(5 / 3))

    def test_large_group(self):
        rng = np.random.default_rng(0)
        epochs = np.concatenate([rng.integers(1, 5, 180), [5] * 20, rng.integers(6, 60, 173)])
        s = search.summarize_epochs(epochs)
        assert s.count == 373 and s.q50 == 5
        for q, got in ((0.25, s.q25), (0.75, s.q75)):
            assert got == pytest.approx(linear_quantile(epochs.tolist(), q))
        assert s.mean == pytest.approx(sum(epochs) / 373)

    def test_empty_and_single(self):
        assert not search.summarize_epochs([]).valid
        assert math.isnan(search.summarize_epochs([7]).std)

    def test_grouping(self):
        rs = [result(kind="MSE", stop=3), result(kind="W-MSE-Comb", stop=9), result(kind="W-RMSE", stop=11)]
        g = search.early_stop_summary(rs)
        assert g["traditional"].count == 1 and g["weibull"].count == 2
        assert g["weibull"].mean == 10


class TestCsv:
    def test_round_trip(self):
        rs = [result(0.123456789012345, 0.1 / 3, kind=k, trial_id=i) for i, k in enumerate(LOSS_KINDS)]
        rs.append(result(status="diverged", trial_id=9, per_split={s: Metrics.missing() for s in SPLITS}))
        text = search.results_to_csv(rs, {"manifest_hash": "abc"})
        back, header = search.results_from_csv(text)
        assert header == {"manifest_hash": "abc"}
        assert [b.config for b in back] == [r.config for r in rs]
        assert back[0].metrics["test"] == rs[0].metrics["test"]
        assert back[-1].status == "diverged" and math.isnan(back[-1].metric("test", "r2"))
        assert search.results_to_csv(back, header) == text


class TestRunSearch:
    def test_workers_do_not_change_results(self, tiny):
        space = SearchSpace(max_epochs=4, patience=2)
        w = tiny.weibull(2.0)
        a = search.run_search(space, tiny, w, 1, master_seed=5, workers=1)
        b = search.run_search(space, tiny, w, 1, master_seed=5, workers=2)
        assert search.results_to_csv(a) == search.results_to_csv(b)
        assert len(a) == 9

    def test_injected_divergence_contained(self, tiny):
        space = SearchSpace(max_epochs=3, patience=2)
        rs = search.run_search(space, tiny, tiny.weibull(2.0), 1, master_seed=0, inject_divergence=[4])
        assert [r.status for r in rs].count("diverged") == 1
        assert rs[4].status == "diverged" and math.isnan(rs[4].metric("test", "r2"))
        assert all(r.ok for i, r in enumerate(rs) if i != 4)
        a = search.analyze(rs, Thresholds(-1e9, 1e9))
        assert len(a.surviving) == 8
