import math
from dataclasses import replace

import numpy as np
import pytest

from ivtrans import CaseSpec, FitOptions, calibrate_censoring, coverage_study, generate_case, run_study
from ivtrans.errors import CalibrationError, PreconditionError, StudyQualityError, ValidationError
from ivtrans.simulate import calibrated, summarize


def test_case_defaults():
    a = CaseSpec.for_case("i", 50, 1.0)
    assert a.Q == ((3.0,),) and a.instrument_means == (4.0,) and (a.p, a.q) == (1, 1)
    b = CaseSpec.for_case("ii", 50, 1.0)
    assert b.Q == ((2.0,), (3.0,)) and b.instrument_means == (2.0, 4.0) and (b.p, b.q) == (1, 2)
    c = CaseSpec.for_case("iii", 50, (2.0, 4.0))
    assert c.Q == ((2.0, 0.0), (0.0, 5.0)) and (c.p, c.q) == (2, 2)
    assert a.error_sd_v == a.error_sd_eps == 1.0 and a.target_censoring == 0.2


def test_spec_validation():
    with pytest.raises(ValidationError):
        CaseSpec.for_case("iv", 50, 1.0)
    with pytest.raises(ValidationError):
        CaseSpec.for_case("iii", 50, 1.0)
    with pytest.raises(ValidationError):
        CaseSpec.for_case("i", 50, 1.0, target_censoring=1.0)


def test_uncalibrated_generation_refused():
    with pytest.raises(PreconditionError):
        generate_case(CaseSpec.for_case("i", 50, 1.0), 0)


def test_instrument_mean_case_i():
    spec = CaseSpec.for_case("i", 100_000, 1.0, censoring_constant=1.0)
    W = generate_case(spec, 0).dataset.W
    assert abs(W.mean() - 4.0) <= 0.05


def test_surrogate_correlation_case_i():
    spec = CaseSpec.for_case("i", 100_000, 1.0, censoring_constant=1.0)
    sim = generate_case(spec, 1)
    corr = np.corrcoef(sim.X[:, 0], sim.dataset.Z[:, 0])[0, 1]
    assert abs(corr - math.sqrt(145 / 146)) <= 0.002


def test_zero_noise_gives_exact_design():
    spec = CaseSpec.for_case("ii", 200, 1.0, error_sd_v=0.0, error_sd_eps=0.0, censoring_constant=1.0)
    sim = generate_case(spec, 0)
    ds = sim.dataset
    Q = np.asarray(spec.Q)
    # dataset rows are kept in generation order
    np.testing.assert_array_equal(ds.Z, ds.W @ Q)
    np.testing.assert_array_equal(sim.X, ds.W @ Q)


def test_generation_deterministic_and_distinct():
    spec = calibrated(CaseSpec.for_case("i", 30, 1.0, seed=5))
    a, b, c = generate_case(spec, 3), generate_case(spec, 3), generate_case(spec, 4)
    np.testing.assert_array_equal(a.dataset.times, b.dataset.times)
    assert not np.array_equal(a.dataset.times, c.dataset.times)


def test_observed_data_consistent_with_truth():
    spec = calibrated(CaseSpec.for_case("i", 500, 1.0, seed=1))
    sim = generate_case(spec, 0)
    ds = sim.dataset
    np.testing.assert_array_equal(ds.status, (sim.log_T <= sim.log_C).astype(int))
    np.testing.assert_allclose(np.log(ds.times), np.minimum(sim.log_T, sim.log_C) - sim.log_time_shift,
                               rtol=1e-12)


def test_case_iii_times_rescaled_not_underflowed():
    spec = calibrated(CaseSpec.for_case("iii", 200, (2.0, 4.0), seed=3))
    sim = generate_case(spec, 0)
    assert np.all(sim.dataset.times > 0) and np.all(np.isfinite(sim.dataset.times))
    order_true = np.argsort(np.minimum(sim.log_T, sim.log_C), kind="stable")
    order_obs = np.argsort(sim.dataset.times, kind="stable")
    np.testing.assert_array_equal(order_true, order_obs)


@pytest.mark.parametrize("case,beta,r", [("i", 1.0, 0.0), ("i", 1.0, 1.0), ("ii", 1.0, 0.0),
                                         ("iii", (2.0, 4.0), 0.0)])
def test_calibration_hits_target(case, beta, r):
    spec = CaseSpec.for_case(case, 50, beta, family_r=r, seed=17)
    c = calibrate_censoring(spec)
    # fresh draws, not the calibration sample
    sim = generate_case(replace(spec, n=100_000, censoring_constant=c), 0)
    assert 0.19 <= 1 - sim.dataset.status.mean() <= 0.21


def test_calibration_monotone():
    spec = CaseSpec.for_case("i", 50, 1.0)
    assert calibrate_censoring(replace(spec, target_censoring=0.4)) < calibrate_censoring(spec)


def test_calibration_limits():
    spec = CaseSpec.for_case("i", 50, 1.0)
    with pytest.raises(ValidationError):
        calibrate_censoring(replace(spec, target_censoring=0.95))
    with pytest.raises(ValidationError):
        calibrate_censoring(replace(spec, target_censoring=0.0))
    # log T is about 3 X, far beyond log(1e12) for most records
    with pytest.raises(CalibrationError):
        calibrate_censoring(CaseSpec.for_case("i", 50, -3.0))


def test_zero_noise_study_unbiased():
    spec = CaseSpec.for_case("i", 400, 1.0, reps=200, seed=8, error_sd_v=0.0, error_sd_eps=0.0)
    rep = run_study(spec, options=FitOptions(variance="none"))
    assert abs(rep.bias[0]) < 0.01


def test_report_invariants():
    rep = coverage_study(CaseSpec.for_case("ii", 50, 1.0, family_r=1.0, reps=60, seed=4))
    assert np.all(rep.mse >= rep.bias ** 2 - 1e-15)
    assert np.all((0 <= rep.coverage_probability) & (rep.coverage_probability <= 1))
    assert np.all(rep.average_width > 0)
    assert 0 <= rep.convergence_rate <= 1
    assert rep.spec.censoring_constant is not None


def test_wider_level_covers_more():
    spec = CaseSpec.for_case("i", 50, 1.0, reps=200, seed=6)
    lo = coverage_study(spec, ci_level=0.95)
    hi = coverage_study(spec, ci_level=0.99)
    assert np.all(hi.coverage_probability >= lo.coverage_probability)
    np.testing.assert_array_equal(hi.estimates, lo.estimates)


def test_worker_count_does_not_change_report():
    spec = CaseSpec.for_case("iii", 40, (2.0, 4.0), reps=24, seed=10)
    base = coverage_study(spec, workers=1).to_dict()
    assert coverage_study(spec, workers=3).to_dict() == base


def test_failures_excluded_and_counted():
    spec = calibrated(CaseSpec.for_case("i", 30, 1.0, reps=5, seed=2))
    rows = [
        {"index": 0, "beta": np.array([1.1]), "se": np.array([0.1]), "ci": np.array([[0.9, 1.3]]),
         "censored": 0.2, "error": None},
        {"index": 1, "beta": None, "se": None, "ci": None, "censored": 0.2, "error": "NonConvergenceError"},
        {"index": 2, "beta": np.array([0.9]), "se": None, "ci": None, "censored": 0.1, "error": None,
         "variance_error": "InvalidCovarianceError"},
        {"index": 3, "beta": np.array([1.0]), "se": np.array([0.1]), "ci": np.array([[1.05, 1.2]]),
         "censored": 0.3, "error": None},
        {"index": 4, "beta": None, "se": None, "ci": None, "censored": math.nan, "error": "ValidationError"},
    ]
    rep = summarize(spec, rows, 0.95)
    assert rep.n_converged == 3 and rep.convergence_rate == 0.6
    assert rep.bias[0] == pytest.approx(0.0)
    assert rep.coverage_probability[0] == 0.5 and rep.n_with_ci == 2
    assert rep.failures == {"NonConvergenceError": 1, "InvalidCovarianceError": 1, "ValidationError": 1}


def test_low_convergence_raises_with_report():
    spec = CaseSpec.for_case("i", 30, 1.0, reps=10, seed=2)
    opts = FitOptions(max_outer_iters=1, beta_tol=1e-300, score_tol=1e-300)
    with pytest.raises(StudyQualityError) as info:
        run_study(spec, options=opts)
    assert info.value.report.convergence_rate == 0.0
    assert info.value.report.failures == {"NonConvergenceError": 10}
