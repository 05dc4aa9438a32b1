import numpy as np
import pytest

from renewal_sampling.dists import (
    DiscretePareto,
    Geometric,
    Pmf,
    gap_cdf,
    Exponential,
    point_mass,
    size_pmf,
)
from renewal_sampling.forward import (
    TailTooHeavy,
    ZeroConditioningMass,
    conditional_gap_cdf,
    duration_coeffs,
    gap_mix_coeffs,
    gap_mix_coeffs_geq,
    heavy_tail_diagnostics,
    joint_gap_coeffs,
    prob_count_at_least,
    sampled_size_pmf,
    size_pgf,
)
from renewal_sampling.gap_inversion import empirical_conditional_cdf
from renewal_sampling.size_inversion import empirical_sampled_pmf

from conftest import dkw_band


def polylog(n: float, a: float) -> float:
    """Li_n(a) by direct summation, |a| < 1 (geometric convergence)."""
    total = 0.0
    for w in range(1, 200_000):
        term = a**w / w**n
        total += term
        if w > 50 and abs(term) < 1e-16 * max(abs(total), 1e-300):
            break
    return total


class TestSampledSizePmf:
    def test_point_mass_one(self):
        out = sampled_size_pmf(point_mass(1), q=0.6, s_max=1)
        assert np.allclose([out[0], out[1]], [0.4, 0.6], atol=1e-15)

    def test_point_mass_two(self):
        out = sampled_size_pmf(point_mass(2), q=0.5, s_max=2)
        assert np.allclose([out[0], out[1], out[2]], [0.25, 0.5, 0.25], atol=1e-15)

    @pytest.mark.parametrize(
        "size_dist,q",
        [
            (Geometric(0.25), 0.6),
            (Geometric(0.7), 0.6),
            (DiscretePareto(1.5), 0.7),
            (point_mass(5), 0.55),
        ],
    )
    def test_pgf_identity(self, size_dist, q):
        # G_{W_q}(z) = G_W(qz + 1 - q) at 20 interior points
        w_top = 300_000 if isinstance(size_dist, DiscretePareto) else 3000
        f_w = size_pmf(size_dist, w_top)
        f_wq = sampled_size_pmf(f_w, q, s_max=300)
        z = np.linspace(0.05, 0.95, 20)
        lhs = np.array(
            [float(np.sum(f_wq.array() * zz ** np.arange(len(f_wq.probs)))) for zz in z]
        )
        rhs = size_pgf(f_w, q * z + 1 - q)
        assert np.max(np.abs(lhs - rhs)) < 1e-10

    def test_normalization(self):
        f_w = size_pmf(Geometric(0.25), 2000)
        out = sampled_size_pmf(f_w, 0.6, 60)
        assert abs(sum(out.probs) + out.tail_mass - 1.0) < 1e-9


class TestGapMixCoeffs:
    def test_enumeration_w3(self):
        # W == 3, two sampled: patterns {1,2},{1,3},{2,3} equally likely;
        # one original renewal sits between the pair only for {1,3}.
        f_w = point_mass(3)
        f_wq = sampled_size_pmf(f_w, 0.37, 3)
        a = gap_mix_coeffs(f_w, f_wq, 0.37, s=2, m_max=4)
        assert abs(a[1] - 2 / 3) < 1e-12
        assert abs(a[2] - 1 / 3) < 1e-12

    def test_geometric_closed_form(self):
        c, q = 0.25, 0.6
        rho = c * (1 - q)
        f_w = size_pmf(Geometric(c), 2500)
        f_wq = sampled_size_pmf(f_w, q, 60)
        for s in (2, 3, 4, 5):
            a = gap_mix_coeffs(f_w, f_wq, q, s, m_max=40)
            expected = (1 - rho) * rho ** (np.arange(1, 41) - 1)
            assert np.max(np.abs(a.array()[1:] - expected)) < 1e-10

    def test_geometric_s_independence(self):
        f_w = size_pmf(Geometric(0.25), 2500)
        f_wq = sampled_size_pmf(f_w, 0.6, 60)
        base = gap_mix_coeffs(f_w, f_wq, 0.6, 2, 30).array()
        for s in (3, 4, 5):
            other = gap_mix_coeffs(f_w, f_wq, 0.6, s, 30).array()
            assert np.max(np.abs(base - other)) < 1e-12

    def test_partition_sum(self):
        f_w = size_pmf(DiscretePareto(1.5), 200_000)
        f_wq = sampled_size_pmf(f_w, 0.7, 10)
        a = gap_mix_coeffs(f_w, f_wq, 0.7, 3, m_max=120)
        assert 0.0 < 1.0 - a.array().sum() < 1e-6
        assert np.all(a.array() >= 0)

    def test_zero_conditioning_mass(self):
        f_w = point_mass(1)
        f_wq = sampled_size_pmf(f_w, 0.6, 3)
        with pytest.raises(ZeroConditioningMass):
            gap_mix_coeffs(f_w, f_wq, 0.6, 2, 10)

    def test_tail_too_heavy(self):
        f_w = size_pmf(DiscretePareto(1.5), 200_000)
        f_wq = sampled_size_pmf(f_w, 0.7, 10)
        with pytest.raises(TailTooHeavy):
            gap_mix_coeffs(f_w, f_wq, 0.7, 3, m_max=3)


class TestGapMixGeq:
    def test_point_mass_two(self):
        a = gap_mix_coeffs_geq(point_mass(2), 0.5, s=2, m_max=5)
        assert abs(a[1] - 1.0) < 1e-12
        assert np.allclose(a.array()[2:], 0.0)

    @pytest.mark.parametrize("size_dist,q", [(Geometric(0.25), 0.6), (DiscretePareto(1.5), 0.7)])
    def test_mixture_identity(self, size_dist, q):
        # A_{s+,m} P(W_q >= s) = sum_{s' >= s} A_{s',m} f_Wq(s')
        w_top = 200_000 if isinstance(size_dist, DiscretePareto) else 2500
        f_w = size_pmf(size_dist, w_top)
        s_hi = 40
        f_wq = sampled_size_pmf(f_w, q, s_hi)
        s = 2
        m_max = 25
        geq = gap_mix_coeffs_geq(f_w, q, s, m_max, tail_tol=1.0)
        p_geq = prob_count_at_least(f_w, q, s)
        mix = np.zeros(m_max + 1)
        for sp in range(s, s_hi + 1):
            if f_wq[sp] < 1e-18:
                continue
            mix += gap_mix_coeffs(f_w, f_wq, q, sp, m_max, tail_tol=1.0).array() * f_wq[sp]
        # each dropped term is A_{s',m} f_Wq(s') <= f_Wq(s'), so the cut
        # s' > s_hi costs at most P(W_q > s_hi)
        tol = prob_count_at_least(f_w, q, s_hi + 1) + 1e-10
        assert np.max(np.abs(geq.array() * p_geq - mix)) < tol

    def test_geometric_matches_exact_s(self):
        c, q = 0.25, 0.6
        f_w = size_pmf(Geometric(c), 2500)
        f_wq = sampled_size_pmf(f_w, q, 60)
        exact = gap_mix_coeffs(f_w, f_wq, q, 2, 30).array()
        pooled = gap_mix_coeffs_geq(f_w, q, 2, 30).array()
        assert np.max(np.abs(exact - pooled)) < 1e-10


class TestJointGapCoeffs:
    def test_geometric_factorizes(self):
        c, q = 0.25, 0.6
        f_w = size_pmf(Geometric(c), 2500)
        f_wq = sampled_size_pmf(f_w, q, 60)
        joint = joint_gap_coeffs(f_w, f_wq, q, s=4, n=2, m_total_max=24)
        a = gap_mix_coeffs(f_w, f_wq, q, 4, 24).array()
        for m1, m2 in [(1, 1), (1, 2), (3, 2), (5, 5)]:
            assert abs(joint[(m1, m2)] - a[m1] * a[m2]) < 1e-10

    def test_pareto_polylog_counterexample(self):
        alpha, q = 1.5, 0.7
        f_w = size_pmf(DiscretePareto(alpha), 300_000)
        f_wq = sampled_size_pmf(f_w, q, 40)
        a3 = gap_mix_coeffs(f_w, f_wq, q, 3, 60, tail_tol=1.0)
        joint = joint_gap_coeffs(f_w, f_wq, q, s=3, n=2, m_total_max=10)
        x = 1 - q
        l1 = polylog(alpha - 1, x) - 3 * polylog(alpha, x) + 2 * polylog(alpha + 1, x)
        l3 = polylog(alpha - 2, x) - 3 * polylog(alpha - 1, x) + 2 * polylog(alpha, x)
        lb = x + polylog(alpha, x) - 2 * polylog(alpha + 1, x)
        a31_closed = 3 * l1 / l3
        b311_closed = 6 * lb / l3
        assert abs(a3[1] - a31_closed) < 1e-8
        assert abs(joint[(1, 1)] - b311_closed) < 1e-8
        # dependence: the joint coefficient differs from the product
        assert abs(a31_closed**2 - b311_closed) > 1e-3

    def test_total_mass(self):
        f_w = size_pmf(Geometric(0.25), 2500)
        f_wq = sampled_size_pmf(f_w, 0.6, 60)
        joint = joint_gap_coeffs(f_w, f_wq, 0.6, s=3, n=2, m_total_max=60)
        assert abs(joint.total_mass() - 1.0) < 1e-6

    def test_marginalization(self):
        f_w = size_pmf(Geometric(0.25), 2500)
        f_wq = sampled_size_pmf(f_w, 0.6, 60)
        joint = joint_gap_coeffs(f_w, f_wq, 0.6, s=3, n=2, m_total_max=80)
        a = gap_mix_coeffs(f_w, f_wq, 0.6, 3, 12).array()
        for m1 in (1, 2, 3):
            assert abs(joint.marginal(m1) - a[m1]) < 1e-6


class TestDurationCoeffs:
    def test_point_mass_two(self):
        c = duration_coeffs(point_mass(2), 0.5, 5)
        assert abs(c[1] - 1.0) < 1e-12
        assert c[0] == 0.0

    def test_geometric_closed_form(self):
        # direct evaluation gives C_m = (1-c) c^(m-1)
        cpar = 0.3
        f_w = size_pmf(Geometric(cpar), 3000)
        c = duration_coeffs(f_w, 0.5, 12)
        expected = (1 - cpar) * cpar ** (np.arange(1, 13) - 1)
        assert np.max(np.abs(c.array()[1:] - expected)) < 1e-10

    def test_heavy_tail_asymptote(self):
        from scipy.special import zeta

        alpha, q = 1.5, 0.7
        f_w = size_pmf(DiscretePareto(alpha), 300_000)
        c = duration_coeffs(f_w, q, 400)
        limit = (1.0 / zeta(alpha + 1)) / prob_count_at_least(f_w, q, 2)
        assert abs(c[400] * 400 ** (alpha + 1) / limit - 1.0) < 0.05

    def test_mass_at_most_one(self):
        f_w = size_pmf(DiscretePareto(1.5), 300_000)
        c = duration_coeffs(f_w, 0.7, 200)
        assert c.array().sum() <= 1.0 + 1e-12


class TestConditionalGapCdf:
    def test_point_mass_mixing_returns_fd(self):
        from renewal_sampling.series import CoeffSeries

        f_d = gap_cdf(Exponential(1.0), 5.0, 0.01)
        a = CoeffSeries.from_values([0.0, 1.0])
        out = conditional_gap_cdf(f_d, a)
        assert np.allclose(out.array(), f_d.array())

    def test_erlang_oracle(self):
        from renewal_sampling.series import CoeffSeries

        f_d = gap_cdf(Exponential(1.0), 10.0, 0.005)
        a = CoeffSeries.from_values([0.0, 0.0, 1.0])
        out = conditional_gap_cdf(f_d, a)
        t_idx = int(round(1.0 / 0.005))
        assert abs(out.values[t_idx] - (1 - 2 * np.exp(-1))) < 2e-3

    def test_monte_carlo_oracle_and_dkw(self, fig2_model, ds_fig2_1m):
        # model mixture CDF vs the thinning simulator's conditional ECDF
        c, q = 0.25, 0.6
        f_w = size_pmf(Geometric(c), 2500)
        f_wq = sampled_size_pmf(f_w, q, 60)
        a2 = gap_mix_coeffs(f_w, f_wq, q, 2, 60, tail_tol=1.0)
        t_max, step = 8.0, 0.004
        model_cdf = conditional_gap_cdf(gap_cdf(Exponential(1.0), t_max, step), a2)
        emp = empirical_conditional_cdf(ds_fig2_1m, 2, 1, t_max, step)
        n_cond = int(np.sum(ds_fig2_1m.counts == 2))
        diff = np.abs(emp.array() - model_cdf.array())
        # pointwise three-standard-error check
        se = np.sqrt(np.maximum(model_cdf.array() * (1 - model_cdf.array()), 1e-12) / n_cond)
        assert np.all(diff <= 3 * se + 5e-4)  # 5e-4 covers grid discretization
        # uniform DKW band at 0.999
        assert np.max(diff) <= dkw_band(n_cond) + 5e-4


class TestHeavyTailDiagnostics:
    def test_pareto_ratios(self):
        from scipy.special import zeta

        alpha, q = 1.5, 0.7
        c = 1.0 / (alpha * zeta(alpha + 1))
        rep = heavy_tail_diagnostics(alpha, c, q, w_max=512)
        # survival: converged and near the predicted constant
        s = dict(zip(rep.w_probe, rep.survival_scaled))
        assert abs(s[256] / s[512] - 1.0) < 0.10
        assert abs(s[512] / rep.survival_limit - 1.0) < 0.10
        d = dict(zip(rep.m_probe, rep.duration_scaled))
        assert abs(d[128] / d[256] - 1.0) < 0.10
        g = dict(zip(rep.m_probe, rep.gap_scaled))
        assert abs(g[64] / g[128] - 1.0) < 0.15

    def test_geometric_negative_control(self):
        f_w = size_pmf(Geometric(0.25), 3000)
        rep = heavy_tail_diagnostics(1.5, 0.25, 0.6, w_max=64, f_w=f_w)
        surv = np.asarray(rep.survival_scaled)
        # light tail: the scaled survival sequence collapses instead of
        # stabilizing at a positive constant
        assert surv[-1] < 0.01 * surv.max()
