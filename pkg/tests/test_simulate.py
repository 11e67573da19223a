"""Monte Carlo engine tests: sampler correctness, density cocycle algebra,
experiment preconditions, and bit-for-bit reproducibility."""

import math

import numpy as np
import pytest
from scipy import stats as scipy_stats

from suspension_lab.criteria import PreconditionError
from suspension_lab.dist import ParameterDomainError, poisson_log_pmf
from suspension_lab.intensity import (
    ExplicitFamily,
    IntensityProfile,
    PowerFamily,
    StepFamily,
    ZeroFamily,
    eval_intensity,
)
from suspension_lab.sampling import (
    RNGSpec,
    invert_uniform,
    invert_uniform_rows,
    poisson_cdf_tables,
    sample_poisson,
)
from suspension_lab.simulate import (
    ConfigurationWindow,
    WindowCoverageError,
    clt_experiment,
    hopf_diagnostic,
    increment_tail_decay,
    log_rn_derivative,
    sample_configuration,
    scan_intensity,
    stopping_time_experiment,
    window_for_shift,
)

HALF = PowerFamily(gamma=0.5, sign=-1)
P1 = IntensityProfile(1.0, HALF)


class TestPoissonSampler:
    def test_mean_within_band(self):
        draws = sample_poisson(1.0, 100_000, RNGSpec(seed=7).generator())
        assert abs(draws.mean() - 1.0) < 0.02

    def test_equidispersion(self):
        # Poisson variance equals the mean; allow a 3-sigma band on s^2
        for rate in (0.3, 1.0, 4.0):
            draws = sample_poisson(rate, 100_000, RNGSpec(seed=11).generator())
            s2 = draws.var(ddof=1)
            mu4 = scipy_stats.moment(draws, 4)
            se = math.sqrt((mu4 - s2**2) / len(draws))
            assert abs(s2 - draws.mean()) < 3.0 * se

    def test_chi_square_gof(self):
        rate = 2.5
        m = 100_000
        draws = sample_poisson(rate, m, RNGSpec(seed=3).generator())
        kmax = int(draws.max())
        expected = np.array([m * math.exp(poisson_log_pmf(rate, k)) for k in range(kmax + 2)])
        observed = np.bincount(draws, minlength=kmax + 2).astype(float)
        # merge the sparse right tail so every cell has expectation >= 5
        cut = int(np.argmax(np.cumsum(expected[::-1]) >= 5.0))
        cut = len(expected) - cut
        obs = np.append(observed[:cut], observed[cut:].sum())
        exp = np.append(expected[:cut], m - expected[:cut].sum())
        chi2 = float(np.sum((obs - exp) ** 2 / exp))
        assert chi2 < scipy_stats.chi2.ppf(0.999, len(obs) - 1)

    def test_monotone_coupling_in_rate(self):
        u = RNGSpec(seed=5).generator().random(10_000)
        lo = invert_uniform(poisson_cdf_tables(np.array([0.7]))[0], u)
        hi = invert_uniform(poisson_cdf_tables(np.array([1.9]))[0], u)
        assert np.all(hi >= lo)

    def test_row_inversion_matches_scalar(self):
        rates = np.array([0.2, 1.0, 3.7])
        u = RNGSpec(seed=9).generator().random((500, 3))
        rows = invert_uniform_rows(poisson_cdf_tables(rates), u)
        for j, rate in enumerate(rates):
            direct = invert_uniform(poisson_cdf_tables(np.array([rate]))[0], u[:, j])
            assert np.array_equal(rows[:, j], direct)

    def test_rejects_negative_rates(self):
        with pytest.raises(ValueError):
            poisson_cdf_tables(np.array([-1.0]))

    def test_rejects_absurd_rates(self):
        with pytest.raises(ValueError):
            poisson_cdf_tables(np.array([1e9]))

    def test_table_mass_closes(self):
        cdf = poisson_cdf_tables(np.array([0.1, 5.0, 30.0]))
        assert np.all(cdf[:, -1] >= 1.0 - 1e-15)

    def test_rng_spec_validation(self):
        with pytest.raises(ValueError):
            RNGSpec(seed=-1)
        with pytest.raises(ValueError):
            RNGSpec(seed=2**64)
        with pytest.raises(ValueError):
            RNGSpec(seed=0, stream=-2)


class TestSampleConfiguration:
    def test_counts_nonnegative_and_reproducible(self):
        win = (0, 200)
        one = sample_configuration(P1, win, RNGSpec(seed=1))
        two = sample_configuration(P1, win, RNGSpec(seed=1))
        assert np.all(one.counts >= 0)
        assert np.array_equal(one.counts, two.counts)
        assert one.index_range == win

    def test_distinct_streams_differ(self):
        one = sample_configuration(P1, (0, 200), RNGSpec(seed=1, stream=0))
        two = sample_configuration(P1, (0, 200), RNGSpec(seed=1, stream=1))
        assert not np.array_equal(one.counts, two.counts)

    def test_empirical_mean_tracks_intensity(self):
        gen = RNGSpec(seed=2).generator()
        acc = np.zeros(50)
        reps = 4_000
        for _ in range(reps):
            acc += sample_configuration(P1, (2, 52), gen).counts
        rates = np.array([eval_intensity(P1, k) for k in range(2, 52)])
        err = acc / reps - rates
        assert np.max(np.abs(err)) < 4.0 * math.sqrt(rates.max() / reps) + 0.02

    def test_bad_window_rejected(self):
        with pytest.raises(ValueError):
            sample_configuration(P1, (5, 5), RNGSpec(seed=0))


class TestLogRnDerivative:
    def test_zero_family_identically_zero(self):
        p = IntensityProfile(1.0)
        omega = sample_configuration(p, (0, 10), RNGSpec(seed=0))
        for n in (1, 2, 7):
            assert log_rn_derivative(p, omega, n) == 0.0

    def test_shift_zero(self):
        omega = sample_configuration(P1, (0, 10), RNGSpec(seed=0))
        assert log_rn_derivative(P1, omega, 0) == 0.0

    def test_pmf_ratio_oracle(self):
        # finite-support profile: the window is exact, so the sum must equal
        # the log of the product of per-site pmf ratios
        fam = ExplicitFamily.from_mapping({0: 0.4, 1: -0.3, 2: 0.15}, tail=ZeroFamily())
        p = IntensityProfile(1.0, fam)
        n = 3
        lo, hi = window_for_shift(p, n)
        omega = sample_configuration(p, (lo, hi), RNGSpec(seed=4))
        want = math.fsum(
            poisson_log_pmf(eval_intensity(p, k - n), int(c)) - poisson_log_pmf(eval_intensity(p, k), int(c))
            for k, c in zip(range(lo, hi), omega.counts)
        )
        assert log_rn_derivative(p, omega, n) == pytest.approx(want, abs=1e-10)

    def test_power_profile_ratio_oracle(self):
        n = 3
        lo, hi = window_for_shift(P1, n)
        omega = sample_configuration(P1, (lo, hi), RNGSpec(seed=6))
        want = math.fsum(
            poisson_log_pmf(eval_intensity(P1, k - n), int(c)) - poisson_log_pmf(eval_intensity(P1, k), int(c))
            for k, c in zip(range(lo, hi), omega.counts)
        )
        assert log_rn_derivative(P1, omega, n) == pytest.approx(want, abs=1e-10)

    def test_coverage_error(self):
        omega = sample_configuration(P1, (2, 30), RNGSpec(seed=0))
        with pytest.raises(WindowCoverageError):
            log_rn_derivative(P1, omega, 5)

    def test_density_moments_match_analytic(self):
        # E[RN] = 1 exactly (unit-mean factor per site), and
        # E[RN^-2] = exp(sum_k ((a_k/a_{k-n})^2 - 1) a_k) over the window;
        # the full-lattice series from the certificate layer should agree
        # up to the window's tail contribution
        p = IntensityProfile(0.2, HALF)
        n = 2
        lo, hi = window_for_shift(p, n, window_tol=1e-6)
        ks = np.arange(lo, hi)
        a_k = np.array([eval_intensity(p, int(k)) for k in ks])
        a_kn = np.array([eval_intensity(p, int(k) - n) for k in ks])
        # per-site factor of E[RN^-2]: sum_y kappa_a(y) (kappa_a/kappa_b)^2(y)
        # = exp(a^3/b^2 - 3a + 2b); the -3a + 2b part collapses to
        # ((a/b)^2 - 1) a only on the full lattice, where sum (a_k - a_{k-n}) = 0
        window_I = float(np.sum(a_k**3 / a_kn**2 - 3.0 * a_k + 2.0 * a_kn))

        gen = RNGSpec(seed=14).generator()
        m = 60_000
        cdf = poisson_cdf_tables(a_k)
        logrn = np.empty(m)
        theta = np.log(a_kn) - np.log(a_k)
        drift = float(np.sum(a_k - a_kn))
        chunk = 4_096
        done = 0
        while done < m:
            c = min(chunk, m - done)
            counts = invert_uniform_rows(cdf, gen.random((c, len(ks)))).astype(float)
            logrn[done:done + c] = drift + counts @ theta
            done += c

        rn = np.exp(logrn)
        mean = float(np.mean(rn))
        se = float(np.std(rn, ddof=1) / math.sqrt(m))
        assert abs(mean - 1.0) <= 4.0 * se

        inv2 = np.exp(-2.0 * logrn)
        mean2 = float(np.mean(inv2))
        se2 = float(np.std(inv2, ddof=1) / math.sqrt(m))
        assert abs(mean2 - math.exp(window_I)) <= 4.0 * se2
        # the analytic full-lattice series sits within the window tail error
        from suspension_lab.criteria import rn_square_integral
        assert math.exp(rn_square_integral(p, n)) == pytest.approx(math.exp(window_I), rel=0.08)

    def test_cocycle_identity(self):
        n, m = 4, 6
        lo, hi = window_for_shift(P1, n + m)
        hi += n + m
        gen = RNGSpec(seed=8).generator()
        for _ in range(100):
            omega = sample_configuration(P1, (lo, hi), gen)
            lhs = log_rn_derivative(P1, omega, n + m)
            rhs = log_rn_derivative(P1, omega, n) + log_rn_derivative(P1, omega.shifted(n), m)
            assert lhs == pytest.approx(rhs, abs=1e-9)

    def test_window_validation(self):
        with pytest.raises(ValueError):
            ConfigurationWindow(0, np.array([1, -1]))


class TestHopfDiagnostic:
    def test_zero_family_partial_sums_count(self):
        p = IntensityProfile(1.0)
        s = hopf_diagnostic(p, N=16, samples=40, rng=RNGSpec(seed=0))
        assert s.statistics["partial_sum_median"] == pytest.approx(s.statistics["checkpoints"])

    def test_dissipative_regime_growth_flattens(self):
        s = hopf_diagnostic(IntensityProfile(8.0, HALF), N=64, samples=1_000, rng=RNGSpec(seed=0))
        assert s.statistics["growth_exponent"] < 0.5
        assert s.statistics["heuristic"] is True

    def test_markov_bound_holds(self):
        s = hopf_diagnostic(IntensityProfile(0.1, HALF), N=64, samples=10_000, rng=RNGSpec(seed=0))
        mk = s.statistics["markov"]
        freq = np.array(mk["event_freq"])
        bound = np.array(mk["bound"])
        assert np.all(freq <= bound)

    def test_reproducible(self):
        a = hopf_diagnostic(P1, N=32, samples=200, rng=RNGSpec(seed=12))
        b = hopf_diagnostic(P1, N=32, samples=200, rng=RNGSpec(seed=12))
        assert a.statistics == b.statistics


class TestCltExperiment:
    def test_refuses_wrong_regime(self):
        with pytest.raises(PreconditionError):
            clt_experiment(IntensityProfile(1.0, PowerFamily(1.0, -1)), n=100, samples=10, rng=RNGSpec(0))
        with pytest.raises(PreconditionError):
            clt_experiment(IntensityProfile(1.0), n=100, samples=10, rng=RNGSpec(0))

    def test_small_run_statistics(self):
        s = clt_experiment(P1, n=1_000, samples=4_000, rng=RNGSpec(seed=0))
        snap = s.statistics["snapshots"][-1]
        assert snap["n"] == 1_000
        # exact finite-n variance: beta^2 sum eps^2 (a0 + a_j)
        js = np.arange(2, 1_001)
        eps = -1.0 / np.sqrt(js)
        exact = float(np.sum(eps**2 * (1.0 + np.exp(eps))) / np.sum(eps**2))
        assert snap["exact_variance"] == pytest.approx(exact, rel=1e-12)
        assert abs(snap["empirical_variance"] - exact) < 4.0 * exact * math.sqrt(2.0 / 3_999)
        assert snap["drift"] < 0.0

    def test_drift_matches_closed_form(self):
        s = clt_experiment(P1, n=500, samples=16, rng=RNGSpec(seed=0))
        snap = s.statistics["snapshots"][-1]
        js = np.arange(2, 501)
        eps = -1.0 / np.sqrt(js)
        want = float(np.sum(eps * (1.0 - np.exp(eps))) / math.sqrt(np.sum(eps**2)))
        assert snap["drift"] == pytest.approx(want, rel=1e-12)

    def test_reproducible(self):
        a = clt_experiment(P1, n=300, samples=500, rng=RNGSpec(seed=21))
        b = clt_experiment(P1, n=300, samples=500, rng=RNGSpec(seed=21))
        assert a.statistics == b.statistics


class TestIncrementTailDecay:
    def test_monte_carlo_within_three_se(self):
        s = increment_tail_decay(P1, RNGSpec(seed=0), samples=100_000, ns=(10, 100))
        for row in s.statistics["rows"]:
            assert row["mc_within_3se"]

    def test_threshold_guarantee_consistent(self):
        s = increment_tail_decay(P1, RNGSpec(seed=0), samples=100, ns=(10, 100_000))
        L = s.statistics["tail_threshold_L"]
        n_guaranteed = s.statistics["guaranteed_beyond_n"]
        assert n_guaranteed == L ** 4
        for row in s.statistics["rows"]:
            if row["guaranteed"]:
                assert row["beats_eps_fourth"]

    def test_deep_threshold_tail_is_tiny(self):
        # deviation threshold 10 at unit level: the exact tail sits below 1e-8
        s = increment_tail_decay(P1, RNGSpec(seed=0), samples=2, ns=(10_000,), mc_max=0)
        row = s.statistics["rows"][0]
        assert row["threshold"] == pytest.approx(10.0)
        assert 1e-9 < row["exact_tail"] < 1e-8


class TestStoppingTime:
    def test_domain_errors(self):
        with pytest.raises(ParameterDomainError):
            stopping_time_experiment(P1, r=-0.5, eps=0.1, M=10, N=100, samples=5, rng=RNGSpec(0))
        with pytest.raises(ParameterDomainError):
            stopping_time_experiment(P1, r=-2.0, eps=-0.1, M=10, N=100, samples=5, rng=RNGSpec(0))
        with pytest.raises(ValueError):
            stopping_time_experiment(P1, r=-2.0, eps=0.1, M=100, N=100, samples=5, rng=RNGSpec(0))

    def test_short_run_crossing_properties(self):
        s = stopping_time_experiment(P1, r=-1.5, eps=0.5, M=100, N=60_000, samples=300, rng=RNGSpec(seed=0))
        st = s.statistics
        assert st["success_freq"] > 0.5
        assert st["overshoot_le_last_step"] is True
        if st["conditional_overshoot_below_eps"] is not None:
            assert st["conditional_overshoot_below_eps"] == 1.0

    def test_reproducible(self):
        a = stopping_time_experiment(P1, r=-1.5, eps=0.5, M=50, N=5_000, samples=100, rng=RNGSpec(seed=33))
        b = stopping_time_experiment(P1, r=-1.5, eps=0.5, M=50, N=5_000, samples=100, rng=RNGSpec(seed=33))
        assert a.statistics == b.statistics


class TestScanIntensity:
    def test_requires_monotone_grid(self):
        with pytest.raises(ValueError):
            scan_intensity(P1, [1.0, 0.5], N=8, samples=10, rng=RNGSpec(0))

    def test_small_scan_monotone(self):
        s = scan_intensity(P1, [0.1, 1.0, 8.0], N=32, samples=500, rng=RNGSpec(seed=0))
        g = s.statistics["growth_exponents"]
        assert g[0] > g[1] > g[2]
        assert s.statistics["anomaly"] is False
        # endpoints sit on the expected sides: near-linear growth of the
        # partial sums at small scale, flattening at large scale
        assert g[0] > 0.85
        assert g[2] < 0.5

    def test_reproducible(self):
        a = scan_intensity(P1, [0.5, 2.0], N=16, samples=100, rng=RNGSpec(seed=44))
        b = scan_intensity(P1, [0.5, 2.0], N=16, samples=100, rng=RNGSpec(seed=44))
        assert a.statistics == b.statistics

    def test_worker_env_does_not_change_results(self, monkeypatch):
        base = scan_intensity(P1, [0.5, 2.0], N=16, samples=100, rng=RNGSpec(seed=44))
        monkeypatch.setenv("SUSPENSION_LAB_WORKERS", "4")
        par = scan_intensity(P1, [0.5, 2.0], N=16, samples=100, rng=RNGSpec(seed=44))
        assert base.statistics == par.statistics


class TestWindowPolicy:
    def test_step_window_exact(self):
        p = IntensityProfile(1.0, StepFamily(0.0, 0.5))
        assert window_for_shift(p, 5) == (1, 6)

    def test_power_window_grows_with_shift(self):
        w1 = window_for_shift(P1, 8)
        w2 = window_for_shift(P1, 64)
        assert w2[1] > w1[1]

    def test_tighter_tolerance_widens(self):
        loose = window_for_shift(P1, 8, window_tol=1e-2)
        tight = window_for_shift(P1, 8, window_tol=1e-6)
        assert tight[1] > loose[1]
