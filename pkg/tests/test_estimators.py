import math

import numpy as np
import pytest

from multiindex_qmc.errors import EstimatorFailure
from multiindex_qmc.estimators import EstimatorParams, run_estimator
from multiindex_qmc.estimators.levels import difference_samples
from multiindex_qmc.grid import DEFAULT_SOLVER, functional_batch
from multiindex_qmc.model import make_problem
from multiindex_qmc.reference import ExpectationOracle
from oracles import COMBINATION_2D, EXPECTED_P

D1 = make_problem("sine_modes", d=1)
D2 = make_problem("sine_modes", d=2)
ALL = ["mc", "mlmc", "mlmc-comb", "mimc", "mlqmc", "miqmc"]


def replicate(spec, driver, eps, reps, seed0=5000, **kw):
    return [run_estimator(spec, driver, eps, EstimatorParams(seed=seed0 + r, **kw))
            for r in range(reps)]


def test_drivers_coincide_in_one_dimension():
    mc_like = [run_estimator(D1, drv, 1e-3, EstimatorParams(seed=3)).estimate
               for drv in ("mlmc", "mlmc-comb", "mimc")]
    assert mc_like[0] == mc_like[1] == mc_like[2]
    qmc_like = [run_estimator(D1, drv, 1e-3, EstimatorParams(seed=3)).estimate
                for drv in ("mlqmc", "miqmc")]
    assert qmc_like[0] == qmc_like[1]


def test_large_eps_gives_one_level():
    rep = run_estimator(D1, "mlmc", 0.3, EstimatorParams(seed=0))
    assert rep.L == 0 and len(rep.levels) == 1


@pytest.mark.parametrize("driver", ALL)
def test_report_invariants(driver):
    rep = run_estimator(D2, driver, 4e-3, EstimatorParams(seed=11))
    assert rep.converged
    vom = sum(r.variance_of_mean for r in rep.levels)
    assert vom <= 0.5 * rep.eps**2 * 1.05
    assert rep.bias_estimate**2 + vom <= rep.eps**2 * (0.5 + 0.5 * 1.05)
    for r in rep.levels:
        assert r.N >= 1 and r.R >= 1 and r.variance_of_mean >= 0
        assert r.total_cost == pytest.approx(r.N * r.R * r.cost_per_sample)
        if rep.driver in ("mc", "mlmc", "mlmc-comb", "mimc"):
            assert r.R == 1
        else:
            assert r.N & (r.N - 1) == 0
    assert rep.estimate == pytest.approx(sum(r.mean for r in rep.levels), rel=1e-12)


def test_reproducible_across_worker_counts():
    a = run_estimator(D2, "miqmc", 4e-3, EstimatorParams(seed=2, threads=1))
    b = run_estimator(D2, "miqmc", 4e-3, EstimatorParams(seed=2, threads=4))
    assert a.estimate == b.estimate
    assert [r.to_dict() for r in a.levels] == [r.to_dict() for r in b.levels]


def test_constant_integrand_qmc_hits_minimum():
    rep = run_estimator(make_problem("poisson", d=1), "mlqmc", 1e-3, EstimatorParams(seed=0))
    assert all(r.N == 1 and r.variance_of_mean == 0.0 for r in rep.levels)


def test_failure_reports_diagnostics():
    with pytest.raises(EstimatorFailure) as info:
        run_estimator(D1, "mlmc", 1e-5, EstimatorParams(seed=0, max_level=4))
    assert info.value.diagnostics["max_level"] == 4
    assert info.value.diagnostics["required_level"] > 4


def test_fixed_level_is_respected():
    rep = run_estimator(D2, "mimc", 1e-3, EstimatorParams(seed=0, fixed_L=3))
    assert rep.L == 3 and len(rep.levels) == 10


@pytest.mark.parametrize("driver", ["mlmc", "miqmc"])
def test_modeled_cost_monotone_in_eps(driver):
    costs = [run_estimator(D2, driver, e, EstimatorParams(seed=4)).modeled_cost
             for e in (8e-3, 4e-3, 2e-3, 1e-3)]
    assert all(a <= b for a, b in zip(costs, costs[1:]))


def test_combination_telescoping_per_sample():
    Y = np.random.default_rng(1).random((5, 4)) - 0.5
    for level in range(5):
        comb = difference_samples(D2, "combination", level, Y, DEFAULT_SOLVER)[0]
        mi = sum(difference_samples(D2, "multiindex", (j, level - j), Y, DEFAULT_SOLVER)[0]
                 for j in range(level + 1))
        np.testing.assert_allclose(comb, mi, rtol=1e-12, atol=1e-15)


def test_full_telescoping_per_sample():
    Y = np.random.default_rng(2).random((6, 4)) - 0.5
    total = sum(difference_samples(D2, "full", l, Y, DEFAULT_SOLVER)[0] for l in range(5))
    top = functional_batch(D2, (4, 4), Y)[0]
    np.testing.assert_allclose(total, top, rtol=1e-12)


def test_combination_variance_bound_on_shared_samples():
    # Var[sum of n shell members] <= n * sum Var[member], with all terms on the same 10^4 points
    Y = np.random.default_rng(3).random((10_000, 4)) - 0.5
    for level in range(2, 6):
        comb = difference_samples(D2, "combination", level, Y, DEFAULT_SOLVER)[0]
        members = [difference_samples(D2, "multiindex", (j, level - j), Y, DEFAULT_SOLVER)[0]
                   for j in range(level + 1)]
        assert comb.var(ddof=1) <= (level + 1) * sum(m.var(ddof=1) for m in members) * (1 + 1e-12)


def test_selected_level_close_to_oracle_level():
    eps = 5e-4
    tol = eps / math.sqrt(2)
    oracle_L = min(L for L, v in COMBINATION_2D.items()
                   if all(abs(EXPECTED_P[2] - COMBINATION_2D[k]) <= tol
                          for k in COMBINATION_2D if k >= L))
    Ls = [r.L for r in replicate(D2, "mimc", eps, 10)]
    assert all(abs(L - oracle_L) <= 1 for L in Ls)


def test_mlmc_d1_accuracy_over_replications():
    eps = 2e-4
    est = np.array([r.estimate for r in replicate(D1, "mlmc", eps, 100)])
    assert np.sum(np.abs(est - EXPECTED_P[1]) <= 2 * eps) >= 90


def test_mimc_d2_accuracy_over_replications():
    eps = 5e-4
    est = np.array([r.estimate for r in replicate(D2, "mimc", eps, 100)])
    assert np.sum(np.abs(est - EXPECTED_P[2]) <= 2 * eps) >= 90


def test_mlqmc_d1_mse_over_replications():
    eps = 2e-4
    est = np.array([r.estimate for r in replicate(D1, "mlqmc", eps, 100)])
    assert np.mean((est - EXPECTED_P[1]) ** 2) <= 1.2 * eps**2


def test_coarse_qmc_variance_slope():
    rep = run_estimator(D1, "mlqmc", 1e-3, EstimatorParams(seed=0))
    assert rep.p is not None and rep.p >= 1.5


def test_fixed_level_mean_matches_quadrature():
    oracle = ExpectationOracle(D1)
    est = np.array([r.estimate for r in replicate(D1, "mlmc", 1e-3, 40, fixed_L=3)])
    se = est.std(ddof=1) / math.sqrt(len(est))
    assert abs(est.mean() - oracle.full(3)) <= 4 * se
