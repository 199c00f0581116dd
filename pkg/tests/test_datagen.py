import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from helpers import dc_flows, make_grid
from swodt.datagen import (
    LabeledDataset, SamplerConfig, Scaling, feature_names_for, generate_dataset, kfold_indices,
    kfold_split, load_dataset, sample_scenarios, save_dataset, sidecar_path, with_offset,
)
from swodt.errors import DatasetError, SamplerError
from swodt.grid import build_dc_network

GEN = {"bus": 1, "p_min_MW": 0.0, "p_max_MW": 500.0, "marginal_cost": 10.0}


def triangle(rating, load=100.0, gen_max=500.0):
    return make_grid(3, [(1, 2, 0.1, rating), (2, 3, 0.1, rating), (1, 3, 0.1, rating)],
                     [dict(GEN, p_max_MW=gen_max)], loads={3: load})


# sampler --------------------------------------------------------------------------

def test_zero_variance_sampler_returns_the_mean(case6):
    cfg = SamplerConfig(load_std=0.0, wind_std=0.0, pv_std=0.0)
    scen = sample_scenarios(case6, 5, cfg, seed=3)
    pmax = np.array([g.p_max_MW for g in case6.renewables])
    means = np.array([cfg.wind_mean if g.kind == "wind" else cfg.pv_mean for g in case6.renewables])
    for sc in scen:
        np.testing.assert_array_equal(sc.load_MW, case6.nominal_loads())
        np.testing.assert_allclose(sc.renewable_MW, means * pmax)
        assert sc.cost_scale is None


def test_same_seed_is_bit_identical(ieee30):
    a = sample_scenarios(ieee30, 50, seed=9)
    b = sample_scenarios(ieee30, 50, seed=9)
    c = sample_scenarios(ieee30, 50, seed=10)
    assert all(np.array_equal(x.load_MW, y.load_MW) and np.array_equal(x.renewable_MW, y.renewable_MW)
               for x, y in zip(a, b))
    assert not np.array_equal(a[0].load_MW, c[0].load_MW)


def test_scenario_bounds(ieee30):
    scen = sample_scenarios(ieee30, 500, SamplerConfig(load_std=0.5, wind_std=0.45), seed=1)
    pmax = np.array([g.p_max_MW for g in ieee30.renewables])
    R = np.array([s.renewable_MW for s in scen])
    L = np.array([s.load_MW for s in scen])
    assert np.all(R >= 0) and np.all(R <= pmax)
    assert np.all(L >= 0)
    no_load = ieee30.nominal_loads() == 0
    assert np.all(L[:, no_load] == 0)


def copula_pearson(rho, a, b, nodes=80):
    """Pearson correlation of two Beta(a, b) marginals joined by a Gaussian
    copula, by Gauss-Hermite quadrature over the bivariate normal."""
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / w.sum()
    z1, z2 = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    u = z1
    v = rho * z1 + np.sqrt(1 - rho ** 2) * z2
    fu = stats.beta.ppf(stats.norm.cdf(u), a, b)
    fv = stats.beta.ppf(stats.norm.cdf(v), a, b)
    mean = a / (a + b)
    var = a * b / ((a + b) ** 2 * (a + b + 1))
    return float((W * (fu - mean) * (fv - mean)).sum() / var)


def test_copula_correlation_of_two_wind_sites():
    wind = dict(GEN, kind="wind", p_max_MW=100.0, marginal_cost=0.0)
    spec = make_grid(2, [(1, 2, 0.1, 1000)], [GEN, dict(wind, bus=2), dict(wind, bus=2)], loads={2: 50.0})
    cfg = SamplerConfig(renewable_correlation=0.8, wind_mean=0.4, wind_std=0.2)
    R = np.array([s.renewable_MW for s in sample_scenarios(spec, 10_000, cfg, seed=0)])
    r = np.corrcoef(R.T)[0, 1]
    m, s = 0.4, 0.2
    k = m * (1 - m) / s ** 2 - 1
    expect = copula_pearson(0.8, m * k, (1 - m) * k)
    assert abs(expect - 0.8) < 0.05
    assert abs(r - 0.8) < 0.05
    assert abs(r - expect) < 0.02


@pytest.mark.parametrize("kw", [
    {"load_std": -0.1}, {"wind_mean": 1.5}, {"pv_std": 0.6}, {"load_correlation": 1.0},
    {"renewable_correlation": -1.0}, {"load_scale": -1.0}, {"cost_jitter": 1.0}, {"cost_jitter": -0.1},
])
def test_invalid_sampler_configs(case6, kw):
    with pytest.raises(SamplerError):
        sample_scenarios(case6, 3, SamplerConfig(**kw))


def test_sampler_other_errors(case6):
    with pytest.raises(SamplerError):
        sample_scenarios(case6, 0)
    with pytest.raises(SamplerError):
        sample_scenarios(case6, 3, SamplerConfig(renewable_corr_matrix=[[1.0]]))
    with pytest.raises(SamplerError):
        SamplerConfig.from_dict({"bogus": 1})


def test_cost_jitter_range_and_zero_default(case6):
    scen = sample_scenarios(case6, 200, SamplerConfig(cost_jitter=0.3), seed=2)
    C = np.array([s.cost_scale for s in scen])
    assert C.shape == (200, len(case6.dispatchable))
    assert C.min() >= 0.7 and C.max() <= 1.3
    plain = sample_scenarios(case6, 200, SamplerConfig(), seed=2)
    # jitter is drawn last, so the physical draws are unchanged
    for a, b in zip(scen, plain):
        np.testing.assert_array_equal(a.load_MW, b.load_MW)


# dataset generation ---------------------------------------------------------------

def test_huge_ratings_label_everything_secure():
    spec = triangle(1e6)
    ds = generate_dataset(spec, build_dc_network(spec), sample_scenarios(spec, 40, seed=0))
    assert len(ds) == 40 and ds.y.tolist() == [1] * 40


def test_always_overloading_contingency_labels_everything_insecure():
    # base flow on 1-3 is 2/3 of the load (< 80); losing 1-3 pushes the whole
    # load (> 88 = emergency rating) over the remaining path
    spec = triangle(80.0)
    cfg = SamplerConfig(load_std=0.02)
    ds = generate_dataset(spec, build_dc_network(spec), sample_scenarios(spec, 40, cfg, seed=0))
    assert len(ds) == 40 and ds.y.tolist() == [0] * 40


def test_feature_layout_and_flow_consistency(case6, case6_net):
    ds = generate_dataset(case6, case6_net, sample_scenarios(case6, 60, seed=4))
    names = feature_names_for(case6)
    assert ds.feature_names == names and names[-1] == "const"
    assert ds.dim == len(case6.dispatchable) + len(case6.renewables) + case6.n_branches + len(case6.load_buses) + 1
    assert np.all(ds.X[:, -1] == 1.0)
    idx = {p: [i for i, n in enumerate(names) if n.startswith(p + ":")] for p in "grld"}
    load_bus = [case6.bus_index()[b.id] for b in case6.load_buses]
    inc_g = case6.incidence("dispatchable")
    inc_r = case6.incidence("renewable")
    for row in ds.X:
        inj = inc_g @ row[idx["g"]] + inc_r @ row[idx["r"]]
        inj[load_bus] -= row[idx["d"]]
        assert abs(inj.sum()) < 1e-6
        np.testing.assert_allclose(row[idx["l"]], dc_flows(case6, inj), atol=1e-8)


def test_skipped_infeasible_scenarios_are_recorded():
    spec = triangle(1e6, load=95.0, gen_max=100.0)
    scen = sample_scenarios(spec, 60, SamplerConfig(load_std=0.1), seed=0)
    too_big = [i for i, s in enumerate(scen) if s.load_MW.sum() > 100.0]
    assert 0 < len(too_big) < 60
    ds = generate_dataset(spec, build_dc_network(spec), scen)
    assert ds.meta["skipped_infeasible"] == too_big
    assert len(ds) == 60 - len(too_big) and ds.meta["n_scenarios"] == 60
    with pytest.raises(DatasetError):
        generate_dataset(spec, build_dc_network(spec), [scen[i] for i in too_big])


def test_worker_count_does_not_change_the_dataset(case6, case6_net):
    scen = sample_scenarios(case6, 30, SamplerConfig(cost_jitter=0.2), seed=5)
    a = generate_dataset(case6, case6_net, scen, workers=1)
    b = generate_dataset(case6, case6_net, scen, workers=2)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.y, b.y)
    assert a.meta == b.meta


# folds ----------------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.integers(2, 60), st.integers(2, 10), st.integers(0, 1000))
def test_kfold_partition(n, k, seed):
    if k > n:
        with pytest.raises(DatasetError):
            kfold_indices(n, k, seed)
        return
    folds = kfold_indices(n, k, seed)
    vals = [va for _, va in folds]
    assert sorted(np.concatenate(vals).tolist()) == list(range(n))
    sizes = [len(v) for v in vals]
    assert max(sizes) - min(sizes) <= 1
    for tr, va in folds:
        assert not set(tr) & set(va)
        assert len(tr) + len(va) == n
    assert all(np.array_equal(a[1], b[1]) for a, b in zip(folds, kfold_indices(n, k, seed)))


def test_leave_one_out_and_bad_k():
    folds = kfold_indices(5, 5)
    assert sorted(int(va[0]) for _, va in folds) == [0, 1, 2, 3, 4]
    assert all(len(va) == 1 for _, va in folds)
    with pytest.raises(DatasetError):
        kfold_indices(5, 1)
    ds = LabeledDataset(with_offset(np.arange(6.0)[:, None]), [0, 1] * 3, ["x", "const"])
    pairs = kfold_split(ds, 3, seed=1)
    assert sum(len(va) for _, va in pairs) == 6


# scaling --------------------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_unscaled_theta_gives_same_margin(seed):
    rng = np.random.default_rng(seed)
    X = with_offset(rng.normal(rng.uniform(-100, 100, 4), rng.uniform(0.01, 50, 4), (30, 4)))
    sc = Scaling.fit(X)
    assert sc.mean[-1] == 0.0 and sc.std[-1] == 1.0
    np.testing.assert_array_equal(sc.apply(X)[:, -1], 1.0)
    theta = rng.normal(size=5)
    raw = sc.unscale_theta(theta)
    np.testing.assert_allclose(X @ raw, sc.apply(X) @ theta, rtol=1e-9, atol=1e-9)
    assert Scaling.from_dict(sc.to_dict()).to_dict() == sc.to_dict()


def test_constant_feature_scaling_is_safe():
    X = with_offset(np.column_stack([np.full(5, 3.0), np.arange(5.0)]))
    sc = Scaling.fit(X)
    assert sc.std[0] == 1.0
    assert np.all(np.isfinite(sc.apply(X)))


# persistence ----------------------------------------------------------------------

def test_round_trip_is_bit_exact(tmp_path, case6, case6_net):
    ds = generate_dataset(case6, case6_net, sample_scenarios(case6, 25, seed=6), meta={"seed": 6})
    path = tmp_path / "ds.csv"
    save_dataset(ds, path)
    back = load_dataset(path)
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.y, ds.y)
    assert back.feature_names == ds.feature_names
    assert back.meta["seed"] == 6 and back.meta["grid_hash"] == case6.content_hash()
    assert sidecar_path(path).name == "ds.meta.json"


@pytest.mark.parametrize("line, bad", [
    (4, "1.0,abc,1,0"), (3, "1.0,2.0,1"), (5, "1.0,2.0,1,7"), (2, "1.0,inf,1,0"), (4, "1.0,2.0,3.0,0"),
])
def test_corrupted_csv_reports_line(tmp_path, line, bad):
    rows = ["a,b,const,label"] + ["%d.0,2.0,1,%d" % (i, i % 2) for i in range(5)]
    rows[line - 1] = bad
    path = tmp_path / "bad.csv"
    path.write_text("\n".join(rows) + "\n")
    with pytest.raises(DatasetError) as info:
        load_dataset(path)
    assert info.value.line == line
    assert "line {}".format(line) in str(info.value)


def test_other_load_errors(tmp_path):
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "missing.csv")
    p = tmp_path / "e.csv"
    p.write_text("")
    with pytest.raises(DatasetError):
        load_dataset(p)
    p.write_text("a,b,klass\n1,1,0\n")
    with pytest.raises(DatasetError):
        load_dataset(p)
    p.write_text("a,const,label\n")
    with pytest.raises(DatasetError):
        load_dataset(p)
    with pytest.raises(DatasetError):
        LabeledDataset(np.ones((2, 2)), [0, 2], ["a", "const"])
    with pytest.raises(DatasetError):
        LabeledDataset(np.ones((2, 2)), [0, 1, 1], ["a", "const"])
