import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import oblique_dataset
from swodt.errors import RuleError
from swodt.rules import RuleMatrix, RuleSet, big_m_system, extract_rules, interval_min, load_rules
from swodt.tree import Internal, Leaf, TrainConfig, TreeModel, fit_tree

THETA_A = np.array([1.0, 0.0, -2.0])
THETA_B = np.array([0.0, 3.0, 1.0])


def hand_tree():
    # root a: left insecure leaf; right child b: left secure, right insecure
    b = Internal(THETA_B, Leaf(1, (0, 3)), Leaf(0, (2, 0)), (2, 3))
    root = Internal(THETA_A, Leaf(0, (4, 1)), b, (6, 4))
    return TreeModel(root, ["x", "y", "const"], TrainConfig())


def test_depth_one_rule_is_the_split():
    model = TreeModel(Internal(THETA_A, Leaf(0, (1, 0)), Leaf(1, (0, 1)), (1, 1)), ["x", "y", "const"],
                      TrainConfig())
    rs = extract_rules(model)
    assert rs.G == 1
    np.testing.assert_array_equal(rs.rules[0].rows, [THETA_A])
    assert rs.rules[0].leaf_id == 1


def test_right_then_left_path():
    rs = extract_rules(hand_tree())
    assert rs.G == 1 and rs.rules[0].depth == 2
    np.testing.assert_array_equal(rs.rules[0].rows, [THETA_A, -THETA_B])


def test_no_secure_leaf_warns_and_returns_empty():
    model = TreeModel(Leaf(0, (3, 1)), ["x", "const"], TrainConfig())
    with pytest.warns(UserWarning):
        rs = extract_rules(model)
    assert rs.G == 0 and rs.sparsity == 0.0


def test_single_secure_leaf_has_empty_rule_satisfied_everywhere():
    model = TreeModel(Leaf(1, (0, 3)), ["x", "const"], TrainConfig())
    rs = extract_rules(model)
    assert rs.G == 1 and rs.rules[0].depth == 0
    assert rs.n_satisfied(np.ones((4, 2))).tolist() == [1] * 4


def near_boundary(model, X, band=1e-9):
    """States within ``band`` of a split boundary they actually meet."""
    mask = np.zeros(len(X), dtype=bool)

    def rec(node, idx):
        if node.is_leaf or idx.size == 0:
            return
        m = X[idx] @ node.theta
        mask[idx[np.abs(m) <= band]] = True
        rec(node.left, idx[m < 0])
        rec(node.right, idx[m >= 0])

    rec(model.root, np.arange(len(X)))
    return mask


@pytest.mark.parametrize("seed", range(3))
def test_traversal_equals_rules(seed):
    ds = oblique_dataset(600, seed, dim=8)
    model = fit_tree(ds, TrainConfig(depth=5, lam1=0.01, lam2=0.01))
    rs = extract_rules(model)
    assert rs.G == sum(1 for l in model.leaves if l.label == 1)
    rng = np.random.default_rng(seed)
    X = np.hstack([rng.normal(0, 1.5, (5000, 8)), np.ones((5000, 1))])
    X = np.vstack([X, ds.X])
    keep = ~near_boundary(model, X)
    pred = model.predict(X[keep])
    n_sat = rs.n_satisfied(X[keep])
    np.testing.assert_array_equal(n_sat, (pred == 1).astype(int))


def test_rule_counts_and_sparsity_over_paths():
    ds = oblique_dataset(500, 7, dim=10)
    model = fit_tree(ds, TrainConfig(depth=4, lam1=0.02, lam2=0.02))
    rs = extract_rules(model)
    # independent path enumeration
    nz = total = 0

    def rec(node, path):
        nonlocal nz, total
        if node.is_leaf:
            if node.label == 1:
                for th in path:
                    nz += np.count_nonzero(th)
                    total += th.size
            return
        rec(node.left, path + [node.theta])
        rec(node.right, path + [node.theta])

    rec(model.root, [])
    assert rs.sparsity == pytest.approx(nz / total)
    leaf_ids = {l.id for l in model.leaves if l.label == 1}
    assert {r.leaf_id for r in rs.rules} == leaf_ids
    depths = {}
    for node, d in _leaf_depths(model.root):
        depths[node.id] = d
    assert all(r.depth == depths[r.leaf_id] for r in rs.rules)


def _leaf_depths(node, d=0):
    if node.is_leaf:
        yield node, d
    else:
        yield from _leaf_depths(node.left, d + 1)
        yield from _leaf_depths(node.right, d + 1)


def test_big_m_hand_example():
    rs = RuleSet([], ["a", "b"])
    rs.rules.append(RuleMatrix(np.array([[1.0, -1.0]]), 0))
    sysm = big_m_system(rs, [0.0, 0.0], [10.0, 10.0], margin=1.0)
    assert sysm.M.tolist() == [11.0]
    assert interval_min([[1.0, -1.0]], [0, 0], [10, 10]).tolist() == [-10.0]
    assert sysm.satisfied([0.0, 10.0], [0])
    assert not sysm.satisfied([0.0, 10.0], [1])
    assert rs.big_M is not None


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_big_m_deactivates_and_reduces(seed):
    rng = np.random.default_rng(seed)
    dim = 4
    rules = [RuleMatrix(rng.normal(size=(int(rng.integers(1, 4)), dim)) * (rng.random((1, dim)) < 0.7), i)
             for i in range(3)]
    rs = RuleSet(rules, ["f%d" % i for i in range(dim)])
    lo = rng.uniform(-5, 0, dim)
    hi = lo + rng.uniform(0, 5, dim)
    sysm = big_m_system(rs, lo, hi, margin=0.5)
    for p in rng.uniform(lo, hi, (50, dim)):
        for i in range(3):
            ind = np.zeros(3)
            ind[i] = 1.0
            assert sysm.satisfied(p, ind) == bool(rules[i].satisfied(p, tol=1e-9)[0])
        assert sysm.satisfied(p, np.zeros(3))
    corner_min = np.array([min((row * c).sum() for c in _corners(lo, hi)) for row in sysm.A])
    np.testing.assert_allclose(sysm.row_min, corner_min, atol=1e-12)


def _corners(lo, hi):
    for bits in range(2 ** len(lo)):
        yield np.array([hi[i] if (bits >> i) & 1 else lo[i] for i in range(len(lo))])


def test_big_m_errors():
    rs = extract_rules(hand_tree())
    with pytest.raises(RuleError):
        big_m_system(rs, [0, 0, 1], [1, np.inf, 1])
    with pytest.raises(RuleError):
        big_m_system(rs, [0, 0], [1, 1])
    with pytest.raises(RuleError):
        big_m_system(rs, [2, 0, 1], [1, 1, 1])


def test_json_round_trip_and_errors(tmp_path):
    ds = oblique_dataset(400, 8, dim=6)
    rs = extract_rules(fit_tree(ds, TrainConfig(depth=3, lam1=0.02, lam2=0.02)))
    path = tmp_path / "rules.json"
    path.write_text(rs.to_json())
    back = load_rules(path)
    assert back.to_json() == rs.to_json()
    for a, b in zip(rs.rules, back.rules):
        np.testing.assert_array_equal(a.rows, b.rows)
    bad = tmp_path / "bad.json"
    bad.write_text('{"feature_names": ["a"], "rules": [{"leaf_id": 0, "rows": [[[5, 1.0]]]}]}')
    with pytest.raises(RuleError):
        load_rules(bad)
    with pytest.raises(RuleError):
        load_rules(tmp_path / "none.json")
