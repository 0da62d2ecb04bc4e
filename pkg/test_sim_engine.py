from types import SimpleNamespace

import numpy as np
import pytest

import policybound.estimands_analytic as ea
import policybound.sim_engine as sim
from policybound.config import slow_tests_enabled
from policybound.errors import DomainError
from policybound.estimands_analytic import DGPParams, ErrorLaw


#################### Fixtures ####################
# https://docs.pytest.org/en/stable/fixture.html


@pytest.fixture(scope="module")
def dataset():
    yield sim.draw_dataset(DGPParams(), 40, 7)


@pytest.fixture(scope="module")
def small_report():
    """A short run at N=30, shared by the report tests."""
    yield sim.run_replications(n=30, reps=12, base_seed=5, workers=2)


def fake_dataset(true_ite, arms):
    return SimpleNamespace(true_ite=np.asarray(true_ite), latent=SimpleNamespace(a=np.asarray(arms)))


#################### Draws ####################


def test_dataset_invariants(dataset):
    panel, latent = dataset.panel, dataset.latent
    assert panel.n_units == 40 and panel.T == 10
    assert panel.units[0] == "u01"
    np.testing.assert_array_equal(panel.coarsened, latent.a)
    np.testing.assert_array_equal(latent.m, latent.a * latent.m1)
    rows = np.arange(40)
    np.testing.assert_array_equal(panel.outcomes[:, -1], dataset.potential_outcomes[rows, latent.m])
    np.testing.assert_allclose(
        dataset.true_ite, dataset.potential_outcomes[rows, latent.m1] - dataset.potential_outcomes[:, 0]
    )
    untreated = latent.a == 0
    np.testing.assert_array_equal(
        dataset.true_counterfactual[untreated], dataset.potential_outcomes[rows, latent.m1][untreated]
    )


def test_draws_are_reproducible():
    one = sim.draw_dataset(DGPParams(), 25, 99)
    two = sim.draw_dataset(DGPParams(), 25, 99)
    assert one.panel == two.panel
    np.testing.assert_array_equal(one.true_ite, two.true_ite)


def test_tiny_dataset_rejected():
    with pytest.raises(DomainError):
        sim.draw_dataset(DGPParams(), 1, 0)


def test_latent_marginals():
    latent = sim.draw_latent(DGPParams(), 200000, np.random.default_rng(12))
    assert latent.a.mean() == pytest.approx(2.0 / 3.0, abs=0.005)
    shares = [np.mean(latent.m == m) for m in (0, 1, 2)]
    assert shares == pytest.approx([0.33, 0.26, 0.41], abs=0.01)
    assert np.corrcoef(latent.x, latent.u)[0, 1] == pytest.approx(0.125, abs=0.01)


def test_effect_slopes_within_version():
    params = DGPParams()
    rng = np.random.default_rng(23)
    n = 400000
    latent = sim.draw_latent(params, n, rng)
    for m, expected in ((1, 1.125), (2, -1.6875)):
        eps = params.version_errors[m - 1].draw(rng, n)
        ite = ea.unit_ite(params, latent.x, latent.u, eps, m=m)
        keep = latent.m1 == m
        slope = np.polyfit(latent.x[keep], ite[keep], 1)[0]
        assert slope == pytest.approx(expected, abs=0.02)


def test_effects_vary_within_version():
    params = DGPParams(alpha=(0.5, 0.0, 0.0), beta=(0.5, 0.0, 0.0), version_errors=(ErrorLaw.zero(), ErrorLaw.zero()))
    ds = sim.draw_dataset(params, 60, 3)
    treated = ds.true_ite[ds.latent.a == 1]
    assert set(np.round(treated, 12)) == {1.0, -1.5}


def test_acceptance():
    ok = SimpleNamespace(latent=SimpleNamespace(m=np.array([0, 0, 0, 1, 1, 1, 2, 2, 2]), a=np.array([0] * 3 + [1] * 6)))
    thin = SimpleNamespace(latent=SimpleNamespace(m=np.array([0, 0, 0, 1, 1, 2, 2, 2, 2]), a=np.array([0] * 3 + [1] * 6)))
    assert sim.accept_dataset(ok)
    assert not sim.accept_dataset(thin)
    assert sim.accept_dataset(thin, arm_levels="coarsened")
    with pytest.raises(DomainError):
        sim.accept_dataset(ok, arm_levels="everything")


#################### Evaluation ####################


def test_interval_counts():
    counts = sim.interval_counts(
        [1.0, -1.0, 0.5, 2.0], [0.5, -2.0, -1.0, 2.5], [1.5, -0.5, 1.0, 3.0], [1, 0, 1, 0]
    )
    assert counts[1] == sim.ArmCounts(2, 1, 2)
    assert counts[0] == sim.ArmCounts(1, 2, 2)


def test_evaluate_intervals():
    ds = fake_dataset([1.0, -1.0, 0.5, 2.0], [1, 0, 1, 0])
    out = sim.evaluate_intervals(ds, np.array([0.5, -2.0, -1.0, 2.5]), np.array([1.5, -0.5, 1.0, 3.0]))
    assert out[1] == (1.0, 0.5)
    assert out[0] == (0.5, 1.0)


def test_evaluate_intervals_zero_truth_is_never_signed():
    ds = fake_dataset([0.0, 0.0], [1, 0])
    out = sim.evaluate_intervals(ds, np.array([-1.0, 0.0]), np.array([1.0, 1.0]))
    assert out[1] == (1.0, 0.0)
    assert out[0] == (1.0, 0.0)


def test_evaluate_intervals_empty_arm():
    out = sim.evaluate_intervals(fake_dataset([1.0], [1]), np.array([0.5]), np.array([2.0]))
    assert out[1] == (1.0, 1.0)
    assert all(np.isnan(v) for v in out[0])


def test_estimator_intervals(dataset):
    intervals = sim.estimator_intervals(dataset)
    assert list(intervals) == ["tau", "tau_star", "tau_x", "tau_star_x", "cate"]
    for lo, hi in intervals.values():
        assert lo.shape == (40,)
        assert (lo <= hi).all()


def test_oracle_bounds_always_cover(dataset):
    intervals = sim.estimator_intervals(dataset)
    for name in ("tau_star", "tau_star_x"):
        lo, hi = intervals[name]
        out = sim.evaluate_intervals(dataset, lo, hi, sim.COVERAGE_TOLERANCE)
        assert out[1][0] == 1.0 and out[0][0] == 1.0


#################### Replications ####################


def test_report_oracle_coverage(small_report):
    assert small_report.reps == 12
    for arm in sim.ARMS:
        assert small_report.fraction("tau_star", arm, "coverage") == 1.0
        assert small_report.fraction("tau_star_x", arm, "coverage") == 1.0
    assert sum(small_report.failed.values()) == 0


def test_report_frame(small_report):
    frame = small_report.to_frame()
    assert len(frame) == len(sim.ESTIMATORS) * len(sim.ARMS) * len(sim.METRICS)
    assert frame["value"].between(0.0, 1.0).all()


def test_results_do_not_depend_on_workers():
    one = sim.run_replications(n=20, reps=6, base_seed=100, workers=1)
    many = sim.run_replications(n=20, reps=6, base_seed=100, workers=4)
    assert one.totals == many.totals
    assert one.rejected == many.rejected


def test_replication_uses_index_seed():
    outcome = sim.run_replication(DGPParams(), 30, 17, index=12)
    assert (outcome.index, outcome.seed) == (12, 17)
    assert outcome.status in ("accepted", "rejected", "failed")


def test_report_table(small_report):
    other = sim.run_replications(n=40, reps=4, base_seed=9, workers=2)
    table = sim.report_table([small_report, other])
    assert list(table.columns) == [
        "Estimator", "Statistic", "Treatment N=40", "Treatment N=30", "Control N=40", "Control N=30",
    ]
    assert len(table) == 10
    assert list(table["Statistic"][:5]) == ["Coverage"] * 5
    assert list(table["Estimator"][:5]) == list(sim.ESTIMATORS.values())


def test_bad_run_settings():
    with pytest.raises(DomainError):
        sim.run_replications(reps=0)
    with pytest.raises(DomainError):
        sim.run_replications(reps=1, arm_levels="levels")


def test_illustration():
    bundle = sim.make_illustration(seed=1, n=200)
    assert len(bundle.grid) == 121
    assert len(bundle.scatter) == 200
    assert bundle.metadata["sigma_xu"] == 0.25
    assert set(bundle.scatter["m1"]) <= {1, 2}
    own = np.where(bundle.scatter["m1"] == 1, bundle.scatter["ite_1"], bundle.scatter["ite_2"])
    np.testing.assert_allclose(own, bundle.scatter["ite"])


def test_illustration_version_means():
    bundle = sim.make_illustration(seed=42, n=20000)
    assert bundle.scatter["ite_1"].mean() == pytest.approx(1.0, abs=0.15)
    assert bundle.scatter["ite_2"].mean() == pytest.approx(-1.5, abs=0.15)


# Coverage and power-and-sign fractions at 1000 replications, keyed by estimator and
# statistic, as (treated N=50, 25, 15, control N=50, 25, 15).
EXPECTED_TABLE = {
    ("tau", "coverage"): (0.833, 0.835, 0.842, 0.570, 0.587, 0.585),
    ("tau_x", "coverage"): (0.841, 0.842, 0.842, 0.543, 0.566, 0.572),
    ("tau_star", "coverage"): (1.0, 1.0, 1.0, 1.0, 1.0, 1.0),
    ("tau_star_x", "coverage"): (1.0, 1.0, 1.0, 1.0, 1.0, 1.0),
    ("cate", "coverage"): (0.544, 0.653, 0.685, 0.516, 0.637, 0.694),
    ("tau", "power_and_sign"): (0.511, 0.489, 0.477, 0.213, 0.208, 0.197),
    ("tau_x", "power_and_sign"): (0.462, 0.396, 0.338, 0.132, 0.136, 0.145),
    ("tau_star", "power_and_sign"): (0.779, 0.767, 0.768, 0.438, 0.440, 0.432),
    ("tau_star_x", "power_and_sign"): (0.756, 0.733, 0.703, 0.326, 0.342, 0.355),
    ("cate", "power_and_sign"): (0.324, 0.252, 0.226, 0.110, 0.080, 0.087),
}
TABLE_SIZES = (50, 25, 15)


@pytest.mark.skipif(not slow_tests_enabled(), reason="set POLICYBOUND_SLOW=1 for the full simulation")
def test_full_simulation_table():
    reports = {n: sim.run_replications(n=n, reps=1000, base_seed=1, arm_levels="coarsened") for n in TABLE_SIZES}
    for (estimator, metric), row in EXPECTED_TABLE.items():
        cells = [(arm, n) for arm in (1, 0) for n in TABLE_SIZES]
        for (arm, n), expected in zip(cells, row):
            value = reports[n].fraction(estimator, arm, metric)
            assert value == pytest.approx(expected, abs=0.03), (estimator, metric, arm, n)
