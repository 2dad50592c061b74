import numpy as np
import pytest
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import squareform

from synflow.exceptions import AsymmetricInput, EmptyMatrix, InputError
from synflow.network import best_cut, dendrogram, modularity, modularity_by_community


def _cliques(k=3, w=1.0, eps=0.0):
    n = 2 * k
    W = np.full((n, n), eps)
    W[:k, :k] = w
    W[k:, k:] = w
    np.fill_diagonal(W, 0)
    return W


def _random_weights(rng, n):
    A = rng.random((n, n))
    W = A + A.T
    np.fill_diagonal(W, 0)
    return W


def test_two_cliques():
    W = _cliques()
    d = dendrogram(W)
    # intra-clique merges come first, at distance zero
    assert [h for _, _, h in d.merges[:4]] == [0.0] * 4
    assert d.merges[-1][2] == pytest.approx(1.0)
    cut = best_cut(d, W)
    assert cut.communities == (0, 0, 0, 1, 1, 1)
    assert cut.modularity == pytest.approx(0.5, abs=1e-12)


def test_all_equal_weights():
    W = np.ones((5, 5)) - np.eye(5)
    d = dendrogram(W)
    assert len({h for _, _, h in d.merges}) == 1
    assert [m[:2] for m in d.merges[:2]] == [(0, 1), (2, 3)]
    cut = best_cut(d, W)
    assert set(cut.communities) == {0}
    assert cut.modularity == pytest.approx(0.0, abs=1e-12)


def test_modularity_forms_agree(rng):
    for n in (4, 7, 12):
        W = _random_weights(rng, n)
        c = rng.integers(0, 3, size=n)
        assert modularity(W, c) == pytest.approx(modularity_by_community(W, c), abs=1e-12)
        assert modularity(W, np.zeros(n)) == pytest.approx(0.0, abs=1e-12)


def test_modularity_of_empty_network():
    assert modularity(np.zeros((3, 3)), [0, 1, 2]) == 0.0
    with pytest.raises(InputError):
        modularity(np.zeros((3, 3)), [0, 1])


def test_linkage_matches_scipy_heights(rng):
    for n in (5, 9, 15):
        W = _random_weights(rng, n)
        D = W.max() - W
        np.fill_diagonal(D, 0)
        ref = linkage(squareform(D, checks=False), method="average")
        Z = dendrogram(W).linkage_matrix()
        assert np.allclose(Z[:, 2], ref[:, 2], atol=1e-12)
        assert np.array_equal(Z[:, 3], ref[:, 3])


def test_permutation_equivariance(rng):
    W = _random_weights(rng, 8)
    perm = rng.permutation(8)
    labels = [f"v{k}" for k in range(8)]
    a = best_cut(dendrogram(W, labels), W)
    Wp = W[np.ix_(perm, perm)]
    b = best_cut(dendrogram(Wp, [labels[k] for k in perm]), Wp)
    assert a.modularity == pytest.approx(b.modularity, abs=1e-12)
    groups = lambda cut: {frozenset(l for l, c in cut.to_dict().items() if c == g) for g in set(cut.communities)}
    assert groups(a) == groups(b)
    ha = sorted(h for _, _, h in dendrogram(W).merges)
    hb = sorted(h for _, _, h in dendrogram(Wp).merges)
    assert np.allclose(ha, hb, atol=1e-12)


def test_invalid_weights():
    with pytest.raises(EmptyMatrix):
        dendrogram(np.zeros((0, 0)))
    with pytest.raises(AsymmetricInput):
        dendrogram(np.array([[0, 1.0], [0.5, 0]]))
    with pytest.raises(InputError):
        dendrogram(np.array([[0, -1.0], [-1.0, 0]]))
    with pytest.raises(InputError):
        dendrogram(np.ones((2, 3)))


def test_single_node():
    d = dendrogram(np.zeros((1, 1)), ["only"])
    assert d.merges == () and d.to_newick() == "only;"
    assert best_cut(d, np.zeros((1, 1))).communities == (0,)


def test_newick():
    W = _cliques(k=2)
    text = dendrogram(W, ["a", "b", "c d", "e"]).to_newick("config_hash=abc")
    assert text.startswith("[config_hash=abc]") and text.endswith(";")
    assert "'c d'" in text
    assert text.count("(") == text.count(")") == 3
    assert "(a:0,b:0)" in text


def test_memberships_are_nested():
    d = dendrogram(_random_weights(np.random.default_rng(3), 6))
    prev = None
    for _, clusters in d.memberships():
        if prev is not None:
            assert all(any(set(c) <= set(p) for p in clusters) for c in prev)
        prev = clusters
    assert prev == [tuple(range(6))]
