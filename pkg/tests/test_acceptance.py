"""Long Monte Carlo checks of the learning guarantees and of the policy comparison.

Run with ``pytest --runslow``.
"""
import os
from concurrent.futures import ProcessPoolExecutor
from functools import partial

import numpy as np
import pytest

from distlearn.distlearn_core.commands import PROBLEMS_DIR_PATH, tune_baseline
from distlearn.distlearn_core.estimators import EstimatorKind
from distlearn.distlearn_core.policies import PolicyKind
from distlearn.distlearn_core.problem import load_problem_from_file
from distlearn.distlearn_core.simulation import RunConfiguration, run_experiment, run_trial, trial_seed

LB_ML = RunConfiguration(PolicyKind.LB_PULL, EstimatorKind.MAX_LIKELIHOOD)
UB_ML = RunConfiguration(PolicyKind.UB_PULL, EstimatorKind.MAX_LIKELIHOOD)
RR_ML = RunConfiguration(PolicyKind.ROUND_ROBIN, EstimatorKind.MAX_LIKELIHOOD)
RR_PI = RunConfiguration(PolicyKind.ROUND_ROBIN, EstimatorKind.PSEUDOINVERSE)
WORKERS = os.cpu_count() or 1


def not_worse(better, worse, attr_mean, attr_se):
    """better <= worse, or the two are within two standard errors (a tie)."""
    gap = getattr(better, attr_mean) - getattr(worse, attr_mean)
    se = np.hypot(getattr(better, attr_se), getattr(worse, attr_se))
    return gap <= 2 * se


@pytest.fixture(scope="module")
def seven_symbol_report():
    spec = load_problem_from_file("seven_symbol", PROBLEMS_DIR_PATH).with_overrides(horizon=5000, trials=200)
    return run_experiment(spec, [LB_ML, UB_ML, RR_ML, RR_PI], target_error=1e-3, workers=WORKERS)


@pytest.mark.slow
class TestRoundRobinPseudoinverse:
    def test_unbiased_at_t_300(self):
        spec = load_problem_from_file("example_one", PROBLEMS_DIR_PATH).with_overrides(horizon=300)
        trials = 20_000
        seeds = [trial_seed(spec.master_seed, i) for i in range(trials)]
        with ProcessPoolExecutor(WORKERS) as pool:
            traces = pool.map(partial(run_trial, spec, RR_PI), seeds, chunksize=500)
            estimates = np.array([trace.final_estimate for trace in traces])
        se = estimates.std(axis=0, ddof=1) / np.sqrt(trials)
        assert np.all(np.abs(estimates.mean(axis=0) - spec.true_distribution) <= 3 * se)

    def test_error_decays_like_one_over_t(self):
        spec = load_problem_from_file("example_one", PROBLEMS_DIR_PATH).with_overrides(horizon=4000, trials=200)
        steps = [250, 500, 1000, 2000, 4000]
        report = run_experiment(spec, [RR_PI], log_steps=steps, workers=WORKERS)
        scaled = np.array([t * report.results["RRpull+PIest"].error_at(t) for t in steps])
        assert scaled.max() / scaled.min() < 2.0

    def test_invertible_arm_reaches_direct_observation_error(self, identity_spec):
        spec = identity_spec.with_overrides(horizon=2000, trials=400)
        steps = [500, 1000, 2000]
        result = run_experiment(spec, [RR_PI], log_steps=steps, workers=WORKERS).results["RRpull+PIest"]
        expected = float(np.sum(spec.true_distribution * (1 - spec.true_distribution)))
        for t in steps:
            assert t * result.error_at(t) == pytest.approx(expected, rel=0.2)


@pytest.mark.slow
class TestPolicyOrdering:
    def test_pulls_to_target_ordering(self, seven_symbol_report):
        results = seven_symbol_report.results
        chain = [results[label] for label in ("LBpull+MLest", "UBpull+MLest", "RRpull+MLest", "RRpull+PIest")]
        for better, worse in zip(chain, chain[1:]):
            assert not_worse(better, worse, "pulls_to_target_mean", "pulls_to_target_se"), (better.label, worse.label)

    def test_output_probabilities_bounded_away_from_zero(self, seven_symbol_report):
        for label in ("LBpull+MLest", "UBpull+MLest", "RRpull+MLest"):
            result = seven_symbol_report.results[label]
            assert result.nonpositive_outputs == 0
            assert result.min_output_probability > 0


@pytest.mark.slow
class TestStaticAllocationOnShiftedDistribution:
    def test_adaptive_policies_beat_tuned_baseline(self):
        tuned_on = load_problem_from_file("seven_symbol", PROBLEMS_DIR_PATH)
        shifted = load_problem_from_file("seven_symbol_shifted", PROBLEMS_DIR_PATH).with_overrides(
            horizon=1000, trials=200)
        baseline = RunConfiguration(PolicyKind.FIXED_FRACTION, EstimatorKind.MAX_LIKELIHOOD,
                                    tune_baseline(tuned_on, 0.01))
        report = run_experiment(shifted, [UB_ML, LB_ML, baseline], workers=WORKERS)
        base = report.results["Baseline+MLest"]
        for label in ("UBpull+MLest", "LBpull+MLest"):
            adaptive = report.results[label]
            gap = base.error_at(1000) - adaptive.error_at(1000)
            assert gap > 2 * np.hypot(base.error_se_at(1000), adaptive.error_se_at(1000)), label
