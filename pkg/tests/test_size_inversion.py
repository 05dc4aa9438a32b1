import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from renewal_sampling.dists import DiscretePareto, Geometric, Pmf, point_mass, size_pmf
from renewal_sampling.forward import sampled_size_pmf
from renewal_sampling.simulate import FlowRecord, SampledDataset, simulate_dataset
from renewal_sampling.size_inversion import (
    ContinuationPath,
    InfiniteSupport,
    InvalidPath,
    SignedSeq,
    bootstrap_sup_ci,
    build_path,
    classify_regime,
    continuation_invert,
    empirical_sampled_pmf,
    invert_S,
    normal_ci,
    project_to_simplex,
    risk_R,
)


def exact_sampled_pmf_finite(f_w: Pmf, q: float) -> Pmf:
    """Exact f_Wq for finitely supported f_W (zero tail by construction)."""
    return sampled_size_pmf(f_w, q, s_max=f_w.w_max)


class TestEmpiricalSampledPmf:
    def test_all_zero_counts(self):
        recs = [FlowRecord(0, ()) for _ in range(4)]
        ds = SampledDataset.from_records(0.5, recs)
        out = empirical_sampled_pmf(ds)
        assert out[0] == 1.0 and out.w_max == 0

    def test_counting(self):
        recs = [FlowRecord(s, tuple([1.0] * max(s - 1, 0))) for s in (0, 1, 1, 2)]
        ds = SampledDataset.from_records(0.5, recs)
        out = empirical_sampled_pmf(ds)
        assert np.allclose([out[0], out[1], out[2]], [0.25, 0.5, 0.25])


class TestInvertS:
    def test_point_mass_inversion(self):
        out = invert_S(Pmf((0.4, 0.6), min_support=0), q=0.6, w_max=4)
        assert abs(out[1] - 1.0) < 1e-12
        assert np.allclose(out.array()[1:], 0.0, atol=1e-12)

    def test_geometric_round_trip(self):
        c, q = 0.25, 0.6
        f_w = size_pmf(Geometric(c), 120)  # mass beyond is ~1e-72
        f_wq = sampled_size_pmf(f_w, q, s_max=120)
        xs = np.concatenate([[f_wq[0]], f_wq.array()[1:]])
        out = invert_S(xs, q, w_max=10)
        truth = np.array([f_w[w] for w in range(1, 11)])
        assert np.max(np.abs(out.array() - truth)) < 1e-8

    def test_zero_beyond_support(self, fig2_model):
        ds = simulate_dataset(fig2_model, 500, seed=3)
        f_wq = empirical_sampled_pmf(ds)
        s_max = int(ds.counts.max())
        out = invert_S(f_wq, 0.6, w_max=s_max + 5)
        for w in range(s_max + 1, s_max + 6):
            assert out[w] == 0.0

    def test_infinite_support_rejected(self):
        tailed = Pmf((0.5, 0.3), min_support=0, tail_mass=0.2)
        with pytest.raises(InfiniteSupport):
            invert_S(tailed, 0.6, 5)


class TestBuildPath:
    def test_default_halving(self):
        assert build_path(0.6).nodes == (0.4, 0.2, 0.1, 0.05, 0.0)

    def test_high_q_short_path(self):
        assert build_path(0.99).nodes == (1 - 0.99, 0.0)

    def test_invalid_custom_path(self):
        with pytest.raises(InvalidPath):
            ContinuationPath((0.4, 0.5, 0.0))

    def test_disk_condition_low_q(self):
        for q in (0.15, 0.2, 0.3, 0.45, 0.6, 0.9):
            path = build_path(q)
            nodes = path.nodes
            assert nodes[0] == 1 - q and nodes[-1] == 0.0
            for prev, cur in zip(nodes, nodes[1:]):
                assert abs(cur - prev) < 1 - prev

    def test_custom_step_rule(self):
        path = build_path(0.6, step_rule=lambda z: 0.0 if z < 0.3 else z / 2)
        assert path.nodes == (0.4, 0.2, 0.0)


class TestContinuationInvert:
    def test_point_mass_exact(self):
        x = Pmf((0.4, 0.6), min_support=0)
        path = build_path(0.6)
        out = continuation_invert(x, 0.6, path, w_max=4)
        direct = invert_S(x, 0.6, 4)
        assert np.allclose(out.array(), direct.array(), atol=1e-12)

    def test_geometric_truncated_exact(self):
        c, q = 0.25, 0.6
        f_w = size_pmf(Geometric(c), 120)
        f_wq = sampled_size_pmf(f_w, q, s_max=120)
        xs = f_wq.from_zero()
        out = continuation_invert(xs, q, build_path(q), w_max=10)
        direct = invert_S(xs, q, 10)
        assert np.max(np.abs(out.array() - direct.array())) < 1e-9

    def test_empirical_fig3(self, fig3_model):
        ds = simulate_dataset(fig3_model, 1000, seed=77)
        f_wq = empirical_sampled_pmf(ds)
        w_max = 12
        direct = invert_S(f_wq, 0.7, w_max)
        staged = continuation_invert(f_wq, 0.7, build_path(0.7), w_max)
        scale = np.maximum(np.abs(direct.array()), 1e-9)
        assert np.max(np.abs(staged.array() - direct.array()) / scale) < 1e-7

    def test_wrong_start_rejected(self):
        with pytest.raises(InvalidPath):
            continuation_invert([0.0, 1.0], 0.6, ContinuationPath((0.3, 0.0)), 3)

    @given(
        st.integers(min_value=1, max_value=10),
        st.floats(min_value=0.52, max_value=0.95),
        st.integers(min_value=0, max_value=2**31 - 1),
    )
    @settings(max_examples=40, deadline=None)
    def test_t_equals_s_randomized(self, support, q, seed):
        rng = np.random.default_rng(seed)
        raw = rng.dirichlet(np.ones(support))
        f_w = Pmf(tuple(raw), min_support=1)
        f_wq = exact_sampled_pmf_finite(f_w, q)
        xs = f_wq.from_zero()
        # randomized valid path: random interior nodes, halving-style
        nodes = [1 - q]
        while nodes[-1] >= 0.04:
            frac = rng.uniform(0.35, 0.65)
            nodes.append(nodes[-1] * frac)
        nodes.append(0.0)
        path = ContinuationPath(tuple(nodes))
        direct = invert_S(xs, q, support)
        staged = continuation_invert(xs, q, path, support)
        assert np.max(np.abs(direct.array() - staged.array())) < 1e-9


class TestRiskR:
    def test_point_mass_value(self):
        f_wq = Pmf((0.4, 0.6), min_support=0)
        assert abs(risk_R(f_wq, 0.6, 1) - 1 / 0.6) < 1e-12

    def test_beyond_support_is_zero(self):
        f_wq = Pmf((0.4, 0.6), min_support=0)
        assert risk_R(f_wq, 0.6, 3) == 0.0

    def test_heavy_tail_growth_lower_bound(self):
        from scipy.special import zeta

        alpha, q = 1.5, 0.7
        f_w = size_pmf(DiscretePareto(alpha), 300_000)
        f_wq = sampled_size_pmf(f_w, q, 400)
        rs = np.array([risk_R(f_wq, q, w) for w in range(1, 13)])
        lower = np.array(
            [w ** (-alpha - 1) * q ** (-w) / zeta(alpha + 1) for w in range(1, 13)]
        )
        assert np.all(rs >= lower)
        assert rs[9] / rs[1] > 100  # explosive growth across w

    def test_divergent_series_reports_inf(self):
        # q < (3-sqrt(5))/2 makes (1-q)^2/q > 1 and the fixed-w series diverge
        alpha, q = 1.5, 0.3
        f_w = size_pmf(DiscretePareto(alpha), 100_000)
        f_wq = sampled_size_pmf(f_w, q, 1200)
        assert risk_R(f_wq, q, 1) == float("inf")


class TestNormalCi:
    def test_degenerate_interval(self):
        f_wq = Pmf((1.0,), min_support=0)
        f_hat = SignedSeq((0.0, 0.0))
        lo, hi = normal_ci(f_hat, f_wq, 0.6, 2, 0.9, 100)
        assert lo == hi == 0.0

    def test_hand_chained_example(self):
        q, n, alpha = 0.6, 100, 0.9
        f_wq = Pmf((0.4, 0.6), min_support=0)
        f_hat = invert_S(f_wq, q, 2)
        lo, hi = normal_ci(f_hat, f_wq, q, 1, alpha, n)
        half = norm.ppf(0.95) * np.sqrt(1 / q - 1.0) / np.sqrt(n)
        assert abs((hi - lo) / 2 - half) < 1e-12
        assert abs((hi + lo) / 2 - 1.0) < 1e-12


class TestBootstrapSupCi:
    def test_identical_records_radius_zero(self):
        recs = [FlowRecord(2, (1.0,)) for _ in range(50)]
        ds = SampledDataset.from_records(0.5, recs)
        assert bootstrap_sup_ci(ds, l=3, b=200, alpha=0.9, seed=1) == 0.0

    def test_record_order_invariance(self, fig2_model):
        ds = simulate_dataset(fig2_model, 400, seed=5)
        perm = np.random.default_rng(0).permutation(ds.n)
        shuffled = SampledDataset.from_records(
            ds.q, [ds.records[int(k)] for k in perm], seed=ds.seed
        )
        r1 = bootstrap_sup_ci(ds, 5, 200, 0.9, seed=9)
        r2 = bootstrap_sup_ci(shuffled, 5, 200, 0.9, seed=9)
        assert r1 == r2


class TestClassifyRegime:
    def test_fig2_empirical_stable(self, ds_fig2_1m):
        small = ds_fig2_1m.head(500)
        f_wq = empirical_sampled_pmf(small)
        w_top = int(small.counts.max())
        report = classify_regime(f_wq, 0.6, list(range(1, w_top + 1)))
        assert report.classification == "Stable"

    def test_fig3_empirical_explosive(self, fig3_model):
        ds = simulate_dataset(fig3_model, 1000, seed=21)
        f_wq = empirical_sampled_pmf(ds)
        report = classify_regime(f_wq, 0.7, list(range(1, 11)))
        assert report.classification == "Explosive"
        assert report.growth_rate > np.log(1 / 0.7) / 2

    def test_geometric_sufficient_condition_stable(self):
        # c/q <= e^-3 lands in the proven stable regime
        c, q = 0.02, 0.6
        f_w = size_pmf(Geometric(c), 4000)
        f_wq = sampled_size_pmf(f_w, q, 80)
        report = classify_regime(f_wq, q, list(range(1, 9)))
        assert c / q <= np.exp(-3)
        assert report.classification == "Stable"

    def test_pareto_theoretical_explosive(self):
        f_w = size_pmf(DiscretePareto(1.5), 300_000)
        f_wq = sampled_size_pmf(f_w, 0.7, 400)
        report = classify_regime(f_wq, 0.7, list(range(1, 13)))
        assert report.classification == "Explosive"


class TestConsistency:
    def test_error_shrinks_with_n(self, ds_fig2_1m):
        f_w = size_pmf(Geometric(0.25), 2500)
        truth = np.array([f_w[w] for w in range(1, 6)])
        errs = []
        for n in (1000, 10_000, 100_000, 1_000_000):
            f_wq = empirical_sampled_pmf(ds_fig2_1m.head(n))
            f_hat = invert_S(f_wq, 0.6, 5)
            errs.append(float(np.max(np.abs(f_hat.array() - truth))))
        assert errs == sorted(errs, reverse=True)
        assert errs[-1] < 0.01


class TestProjectToSimplex:
    def test_projects_to_valid_pmf(self):
        raw = SignedSeq((0.8, -0.1, 0.4, 0.05))
        pmf = project_to_simplex(raw)
        assert abs(sum(pmf.probs) - 1.0) < 1e-12
        assert all(p >= 0 for p in pmf.probs)

    def test_fixed_point_on_valid_pmf(self):
        raw = SignedSeq((0.7, 0.2, 0.1))
        pmf = project_to_simplex(raw)
        assert np.allclose(pmf.array(), [0.7, 0.2, 0.1], atol=1e-12)
