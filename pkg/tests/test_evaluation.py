import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tgasi.evaluation import (
    aed, baseline_reports, degree_baseline, distance_matrix, evaluate_sets, f1,
    random_baseline, render_table)
from tgasi.graph import Graph, hop_distance

from conftest import random_graph


def brute_aed(truth, pred, g):
    best = min(sum(hop_distance(g, p, t) for p, t in zip(perm, truth))
               for perm in itertools.permutations(pred))
    return best / len(truth)


def test_f1_examples():
    assert f1({1, 2, 3}, {1, 2, 3}) == (1.0, 1.0, 1.0)
    assert f1({1, 2}, {3, 4})[2] == 0.0
    assert f1({0, 1, 2, 3}, {0, 1, 8, 9}) == (0.5, 0.5, 0.5)
    assert f1({0, 1}, set()) == (0.0, 0.0, 0.0)


def test_f1_general_formula():
    p, r, score = f1({0, 1, 2, 3}, {0, 5})
    assert (p, r) == (0.5, 0.25)
    assert score == pytest.approx(2 * p * r / (p + r))


def test_f1_order_invariant():
    assert f1([3, 1, 2], [2, 9]) == f1([1, 2, 3], [9, 2])


def test_f1_rejects_empty_truth():
    with pytest.raises(ValueError):
        f1(set(), {1})


def test_aed_path_examples():
    g = Graph.from_edges([(i, i + 1) for i in range(5)])
    assert aed({0, 5}, {0, 5}, g) == 0.0
    assert aed({0, 5}, {1, 4}, g) == 1.0
    # crossing pairing would cost 4 each; matching undoes it
    assert aed({0, 5}, {4, 1}, g) == 1.0


def test_aed_matches_permutation_enumeration():
    rng = np.random.default_rng(0)
    for trial in range(50):
        n = int(rng.integers(7, 16))
        g = random_graph(n, 0.3, trial)
        q = int(rng.integers(1, 7))
        truth = rng.choice(n, q, replace=False).tolist()
        pred = rng.choice(n, q, replace=False).tolist()
        assert aed(truth, pred, g) == pytest.approx(brute_aed(truth, pred, g), abs=1e-12)


def test_aed_not_above_fixed_pairing():
    rng = np.random.default_rng(1)
    g = random_graph(20, 0.2, 1)
    for _ in range(20):
        truth = sorted(rng.choice(20, 4, replace=False).tolist())
        pred = sorted(rng.choice(20, 4, replace=False).tolist())
        fixed = np.mean([hop_distance(g, p, t) for p, t in zip(pred, truth)])
        assert aed(truth, pred, g) <= fixed + 1e-12


def test_aed_symmetric_and_relabel_invariant():
    g = random_graph(12, 0.3, 2)
    perm = np.random.default_rng(2).permutation(12)
    h = Graph.from_edges([(perm[u], perm[v]) for u, v in g.edges], node_count=12)
    truth, pred = [0, 4, 7], [2, 3, 11]
    assert aed(truth, pred, g) == aed(pred, truth, g)
    assert aed(perm[truth], perm[pred], h) == aed(truth, pred, g)


def test_aed_errors():
    g = Graph.from_edges([(0, 1), (2, 3)])
    with pytest.raises(ValueError):
        aed({0, 1}, {0}, g)
    with pytest.raises(ValueError):
        aed({0}, {2}, g)
    with pytest.raises(ValueError):
        aed(set(), set(), g)


def test_distance_matrix_orientation(path3):
    d = distance_matrix(path3, [0], [1, 2])
    assert d.tolist() == [[1.0, 2.0]]


def test_degree_baseline_picks_hubs(star5):
    assert degree_baseline(star5, 1) == [0]
    assert degree_baseline(star5, 3) == [0, 1, 2]
    with pytest.raises(ValueError):
        degree_baseline(star5, 6)


def test_random_baseline_deterministic_and_valid(karate):
    a = random_baseline(karate, 4, 5)
    assert a == random_baseline(karate, 4, 5)
    assert len(set(a)) == 4 and all(0 <= v < 34 for v in a)
    with pytest.raises(ValueError):
        random_baseline(karate, 0, 0)


def test_random_baseline_expected_f1_is_z_over_n(karate):
    # with |R| = Z, E|R ∩ R*| = Z^2 / |V|, so E[F1] = Z / |V|
    truth = [0, 5, 11, 30]
    scores = [f1(truth, random_baseline(karate, 4, s))[2] for s in range(20000)]
    assert np.mean(scores) == pytest.approx(4 / 34, abs=0.005)


def test_evaluate_sets_means_per_episode(path3):
    rep = evaluate_sets(path3, [[0], [2]], [[0], [0]])
    assert rep.episode_count == 2
    assert rep.f1 == 0.5 and rep.aed == 1.0
    assert [r["aed"] for r in rep.per_episode] == [0.0, 2.0]
    assert "per_episode" not in rep.summary()
    with pytest.raises(ValueError):
        evaluate_sets(path3, [], [])


def test_baseline_reports(karate):
    from tgasi.diffusion import PropagationModel, generate_dataset

    ds = generate_dataset(karate, PropagationModel("IC"), 10, master_seed=1)
    reps = baseline_reports(karate, ds.episodes, seed=3)
    assert set(reps) == {"degree", "random"}
    assert reps["random"].f1 == baseline_reports(karate, ds.episodes, seed=3)["random"].f1
    assert all(0 <= r.f1 <= 1 and r.aed >= 0 for r in reps.values())


def test_render_table():
    text = render_table([{"name": "full", "f1": 0.5}, {"name": "W-", "f1": float("nan")}],
                        ["name", "f1"])
    lines = text.splitlines()
    assert lines[0].split() == ["name", "f1"]
    assert lines[2].split() == ["full", "0.5000"]
    assert lines[3].split() == ["W-", "nan"]


@settings(max_examples=100, deadline=None)
@given(st.sets(st.integers(0, 20), min_size=1), st.sets(st.integers(0, 20)))
def test_f1_bounds_property(truth, pred):
    p, r, score = f1(truth, pred)
    assert 0 <= score <= 1
    assert min(p, r) - 1e-12 <= score <= max(p, r) + 1e-12
