import numpy as np
import pytest

from treedhazards.data import CATEGORICAL, CONTINUOUS
from treedhazards.errors import ConfigError
from treedhazards.simgen import (DEFAULT_CENSORING, SimSpec, calibrate_censor_rate, g_sample,
                                 g_survival, gen_biomarker, gen_cox_ph, gen_tree_nonph, simulate,
                                 weibull_from_uniform, weibull_sample, weibull_survival)


def test_weibull_inverse_transform_orientation():
    # At u = exp(-1) the draw equals the scale for any shape.
    assert weibull_from_uniform(np.exp(-1.0), 2.5, 7.0) == pytest.approx(2.5)
    r = np.random.default_rng(0)
    x = weibull_sample(1.2, 1.5, r, size=200_000)
    assert np.mean(x > 1.0) == pytest.approx(weibull_survival(1.0, 1.2, 1.5), abs=3e-3)
    with pytest.raises(ValueError):
        weibull_sample(-1.0, 1.0, r)


def test_g_distribution():
    assert g_survival([0, 1, 2, 5, 8, 9]).tolist() == [1.0, 0.7, 0.6, 0.1, 0.0, 0.0]
    x = g_sample(np.random.default_rng(1), 200_000)
    for t in (0.5, 1.5, 3.0, 6.0):
        assert np.mean(x > t) == pytest.approx(float(g_survival(t)), abs=3e-3)


def test_tree_nonph_branches_match_rules():
    sim = gen_tree_nonph(3000, seed=2)
    d, tr = sim.data, sim.truth
    x1, x2 = d.X[:, 0], d.X[:, 1]
    assert d.kinds == (CONTINUOUS, CATEGORICAL) and d.labels[1] == ("A", "B", "C", "D")
    expect = np.where(x2 <= 1, np.where(x1 > 5, 0, np.where(x2 == 0, 1, 2)),
                      np.where(x1 <= 3, 3, np.where(x1 <= 7, 4, 5)))
    np.testing.assert_array_equal(tr["branch"], expect)
    g = tr["branch"] == 5
    assert (tr.loc[g, "dist"] == "G").all() and (tr.loc[~g, "dist"] == "weibull").all()
    b1 = tr[tr["branch"] == 1].iloc[0]
    assert (b1["scale"], b1["shape"]) == (1.0, 5.0)
    ev = d.status == 1
    np.testing.assert_array_equal(d.times[ev], tr["event_time"].to_numpy()[ev])
    assert np.all(d.times[~ev] < tr["event_time"].to_numpy()[~ev])


def test_cox_rates():
    sim = gen_cox_ph(500, seed=1)
    X = sim.data.X
    rate = 0.5 * np.exp(-X[:, 0] + X[:, 1] + 2 * X[:, 2] - 2 * X[:, 5])
    np.testing.assert_allclose(sim.truth["rate"], rate, rtol=1e-14)
    assert set(np.unique(X[:, 5])) <= {0.0, 1.0}
    assert sim.data.names == ("x1", "x2", "x3", "x4", "x5", "x6")


def test_biomarker_parameters():
    sim = gen_biomarker(500, seed=1)
    a, b = sim.data.X.T
    np.testing.assert_allclose(sim.truth["scale"], 1 + 2 * a * b)
    np.testing.assert_allclose(sim.truth["shape"], 1 + 5 * b)
    assert sim.true_survival([0], [0.0]).tolist() == [1.0]


def test_simulate_deterministic_and_seed_sensitive():
    a, b = gen_tree_nonph(200, seed=4), gen_tree_nonph(200, seed=4)
    np.testing.assert_array_equal(a.data.times, b.data.times)
    c = gen_tree_nonph(200, seed=5)
    assert not np.array_equal(a.data.times, c.data.times)


def test_spec_validation():
    with pytest.raises(ConfigError):
        SimSpec("nope", 10)
    with pytest.raises(ConfigError):
        SimSpec("cox-ph", 0)
    with pytest.raises(ConfigError):
        SimSpec("cox-ph", 10, censoring=1.0)
    with pytest.raises(ConfigError):
        simulate(SimSpec("cox-ph", 10, params={"scale": 2.0}))


def test_zero_censoring():
    sim = simulate(SimSpec("cox-ph", 300, censoring=0.0))
    assert sim.censor_rate == 0.0 and sim.data.status.all()


def test_custom_scenario():
    sim = simulate(SimSpec("custom", 20_000, 0.2, 3, {"scale": 2.0, "shape": 3.0}))
    assert sim.data.censoring_proportion == pytest.approx(0.2, abs=0.01)
    assert sim.truth["scale"].eq(2.0).all()


@pytest.mark.parametrize("scenario", ["tree-nonph", "cox-ph", "biomarker"])
def test_calibration_medium_n(scenario):
    rate = calibrate_censor_rate(scenario, DEFAULT_CENSORING[scenario])
    assert rate > 0
    sim = simulate(SimSpec(scenario, 20_000, seed=9))
    assert sim.censor_rate == rate
    assert sim.data.censoring_proportion == pytest.approx(DEFAULT_CENSORING[scenario], abs=0.01)


def test_write(tmp_path):
    sim = gen_cox_ph(50, seed=0)
    sim.write(tmp_path / "d.csv", tmp_path / "t.csv")
    import pandas as pd
    t = pd.read_csv(tmp_path / "t.csv")
    assert list(t.columns) == ["row", "branch", "dist", "scale", "shape", "rate", "event_time"]
    assert len(t) == 50
