import igraph as ig
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.covariance import graphical_lasso
from sklearn.metrics import normalized_mutual_info_score

from taigha.netreduce import (
    ItemNetwork,
    ItemPartition,
    NetworkError,
    PartitionError,
    detect_communities,
    ebic_sparse_network,
    glasso_path,
    lambda_grid,
    nmi,
    partial_correlations,
    similarity_from_embeddings,
    walktrap,
)
from taigha.netreduce.network import correlation_from_data


def _blocks(sizes, r):
    p = sum(sizes)
    S = np.zeros((p, p))
    start = 0
    for s in sizes:
        S[start : start + s, start : start + s] = r
        start += s
    np.fill_diagonal(S, 1.0)
    return S


def _random_corr(rng, p, k=None):
    B = rng.standard_normal((p, k or p + 3))
    C = B @ B.T
    d = 1 / np.sqrt(np.diag(C))
    return C * np.outer(d, d)


def test_similarity_examples():
    E = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 2.0], [3.0, 0.0]])
    S = similarity_from_embeddings(E)
    assert S[0, 1] == pytest.approx(1 / np.sqrt(2))
    assert S[0, 2] == pytest.approx(0.0, abs=1e-12)
    assert S[0, 3] == pytest.approx(1.0)
    assert np.allclose(np.diag(S), 1.0)
    with pytest.raises(NetworkError, match="zero-norm"):
        similarity_from_embeddings(np.array([[1.0, 0.0], [0.0, 0.0]]))


def test_similarity_is_psd(rng):
    S = similarity_from_embeddings(rng.standard_normal((40, 8)))
    assert np.linalg.eigvalsh(S).min() > -1e-10
    assert np.allclose(np.diag(S), 1.0) and np.allclose(S, S.T)


@pytest.mark.parametrize("lam", [0.02, 0.08, 0.2])
def test_glasso_matches_sklearn(rng, lam):
    S = _random_corr(rng, 12, 20)
    K = glasso_path(S, [lam], tol=1e-10, max_iter=5000)[0]
    _, K_ref = graphical_lasso(S, alpha=lam, tol=1e-10, max_iter=5000, enet_tol=1e-10)
    np.testing.assert_allclose(K, K_ref, atol=1e-4)


def test_infinite_penalty_gives_empty_network(rng):
    S = _random_corr(rng, 8)
    K = glasso_path(S, [10.0])[0]
    assert np.count_nonzero(np.triu(K, 1)) == 0
    net = ebic_sparse_network(S, 100, lambdas=[10.0])
    assert net.n_edges == 0


def test_zero_penalty_inverts(rng):
    S = _random_corr(rng, 6)
    K = glasso_path(S, [0.0])[0]
    np.testing.assert_allclose(K, np.linalg.inv(S), atol=1e-10)


def test_zero_penalty_selected_on_dense_structure(rng):
    S = _random_corr(rng, 6, 7)
    grid = np.concatenate([lambda_grid(S, 20), [0.0]])
    net = ebic_sparse_network(S, 1e6, 0.5, lambdas=grid)
    assert net.chosen_lambda == 0.0
    np.testing.assert_allclose(net.weights, partial_correlations(np.linalg.inv(S)), atol=1e-4)


def test_block_diagonal_support():
    S = _blocks([5, 5], 0.6)
    net = ebic_sparse_network(S, 385)
    assert np.all(net.weights[:5, 5:] == 0)
    assert net.n_edges > 0


def test_network_invariants(rng):
    X = rng.standard_normal((300, 9)) + rng.standard_normal((300, 1))
    net = ebic_sparse_network(correlation_from_data(X), 300)
    W = net.weights
    assert np.allclose(W, W.T) and np.all(np.diag(W) == 0) and np.abs(W).max() <= 1
    assert all(a != b for a, b, _ in net.edge_list())


def test_support_nested_on_factor_structure(preset):
    from taigha.simulate import ordinal_correlation

    S = ordinal_correlation(preset)
    path = glasso_path(S, lambda_grid(S, 100))
    supports = [np.abs(np.triu(K, 1)) > 0 for K in path]
    for hi, lo in zip(supports, supports[1:]):
        assert np.all(lo[hi])


def test_edge_counts_follow_sklearn_on_dense_input(rng):
    # on unstructured input the lasso path is not nested; the counts still match the reference solver
    S = _random_corr(rng, 10, 14)
    grid = lambda_grid(S, 30)
    ours = [np.count_nonzero(np.triu(K, 1)) for K in glasso_path(S, grid, tol=1e-10, max_iter=10000)]
    ref = [
        np.count_nonzero(np.abs(np.triu(graphical_lasso(S, alpha=lam, tol=1e-10, enet_tol=1e-12, max_iter=5000)[1], 1)) > 1e-12)
        for lam in grid
    ]
    assert ours == ref


def test_input_validation():
    with pytest.raises(NetworkError, match="unit diagonal"):
        ebic_sparse_network(2 * np.eye(3), 10)
    with pytest.raises(NetworkError, match="smaller"):
        ebic_sparse_network(np.eye(5), 3)
    with pytest.raises(NetworkError, match="empty"):
        ebic_sparse_network(np.eye(3), 10, lambdas=[])


def _net(A):
    return ItemNetwork(tuple(f"i{k}" for k in range(A.shape[0])), A, 0.5, 0.0)


def test_disconnected_blocks_and_clique():
    A = _blocks([5, 5], 0.3)
    np.fill_diagonal(A, 0)
    part = detect_communities(_net(A))
    assert part.canonical() == (1,) * 5 + (2,) * 5
    C = np.ones((6, 6)) - np.eye(6)
    assert detect_communities(_net(C)).n_communities == 1


def test_isolated_items_are_singletons():
    A = _blocks([4, 1, 4], 0.4)
    np.fill_diagonal(A, 0)
    assert detect_communities(_net(A)).n_communities == 3


def _planted(rng, sizes, p_in=0.8, p_out=0.08):
    labels = np.repeat(np.arange(len(sizes)), sizes)
    n = labels.size
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, p_in, p_out)
    A = np.triu((rng.random((n, n)) < prob) * rng.uniform(0.05, 0.6, (n, n)), 1)
    return A + A.T


def test_walktrap_matches_igraph(rng):
    agree = 0
    trials = 60
    for _ in range(trials):
        sizes = rng.integers(3, 9, size=rng.integers(2, 5)).tolist()
        A = _planted(rng, sizes)
        ours, _, _ = walktrap(A, 4)
        g = ig.Graph.Weighted_Adjacency(A.tolist(), mode="undirected", attr="weight", loops=False)
        theirs = g.community_walktrap(weights="weight", steps=4).as_clustering().membership
        agree += normalized_mutual_info_score(ours, theirs) > 1 - 1e-12
    assert agree == trials


def test_walktrap_rejects_negative():
    with pytest.raises(PartitionError):
        walktrap(-np.ones((3, 3)))


def test_permutation_invariance(rng):
    A = _planted(rng, [6, 5, 7])
    perm = rng.permutation(A.shape[0])
    a = detect_communities(_net(A))
    items = tuple(f"i{k}" for k in perm)
    b = detect_communities(ItemNetwork(items, A[np.ix_(perm, perm)], 0.5, 0.0))
    assert nmi(a, b) == pytest.approx(1.0)


def _p(labels):
    return ItemPartition.from_labels([f"x{k}" for k in range(len(labels))], labels)


def test_nmi_examples():
    assert nmi(_p([1, 1, 2, 2]), _p([1, 1, 2, 2])) == 1.0
    assert nmi(_p([1, 1, 2, 2]), _p([1, 2, 1, 2])) == pytest.approx(0.0, abs=1e-12)
    assert round(nmi(_p([1, 1, 2, 2]), _p([1, 1, 1, 2])), 3) == 0.344
    assert nmi(_p([1, 1, 1]), _p([5, 5, 5])) == 1.0
    with pytest.raises(PartitionError):
        nmi(_p([1, 2]), _p([1, 2, 3]))


def test_partition_relabels_from_one():
    p = ItemPartition({"a": 7, "b": 3, "c": 7})
    assert p.canonical() == (1, 2, 1) and p.n_communities == 2


labels = st.integers(2, 30).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 5), min_size=n, max_size=n), st.lists(st.integers(0, 5), min_size=n, max_size=n))
)


@settings(max_examples=200, deadline=None)
@given(labels, st.permutations(range(6)))
def test_nmi_properties(pair, perm):
    a, b = pair
    pa, pb = _p(a), _p(b)
    v = nmi(pa, pb)
    assert 0.0 <= v <= 1.0 + 1e-12
    assert v == pytest.approx(nmi(pb, pa), abs=1e-12)
    assert v == pytest.approx(nmi(_p([perm[x] for x in a]), pb), abs=1e-12)
    if len(set(a)) > 1 or len(set(b)) > 1:
        assert v == pytest.approx(normalized_mutual_info_score(a, b, average_method="arithmetic"), abs=1e-9)
