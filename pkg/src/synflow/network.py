"""Network summaries of synergy matrices: dendrograms and modularity."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .exceptions import AsymmetricInput, EmptyMatrix, InputError


@dataclass(frozen=True)
class Dendrogram:
    """Agglomerative merge history.

    Leaves are ``0..n-1``; the cluster created by merge ``k`` gets id
    ``n + k`` (the scipy convention). Each merge is ``(id_a, id_b, height)``
    with ``id_a < id_b``.
    """

    merges: tuple
    labels: tuple

    @property
    def n(self) -> int:
        return len(self.labels)

    def linkage_matrix(self) -> np.ndarray:
        """The merges as a scipy ``linkage`` matrix."""
        sizes = [1] * self.n
        Z = []
        for a, b, h in self.merges:
            sizes.append(sizes[a] + sizes[b])
            Z.append([a, b, h, sizes[-1]])
        return np.array(Z, dtype=float).reshape(-1, 4)

    def memberships(self):
        """Yield ``(height, clusters)`` for every horizontal cut, finest first."""
        clusters = {k: (k,) for k in range(self.n)}
        yield -np.inf, sorted(clusters.values())
        k = 0
        merges = list(self.merges)
        while k < len(merges):
            h = merges[k][2]
            while k < len(merges) and merges[k][2] == h:
                a, b, _ = merges[k]
                clusters[self.n + k] = tuple(sorted(clusters.pop(a) + clusters.pop(b)))
                k += 1
            yield h, sorted(clusters.values())

    def to_newick(self, comment: str | None = None) -> str:
        """Newick text with branch lengths equal to height differences."""
        heights = {k: 0.0 for k in range(self.n)}
        text = {k: _newick_label(lab) for k, lab in enumerate(self.labels)}
        for k, (a, b, h) in enumerate(self.merges):
            node = self.n + k
            heights[node] = h
            text[node] = f"({text.pop(a)}:{h - heights[a]:.10g},{text.pop(b)}:{h - heights[b]:.10g})"
        body = text[self.n + len(self.merges) - 1] if self.merges else text[0]
        prefix = f"[{comment}]" if comment else ""
        return f"{prefix}{body};"


def _newick_label(label: str) -> str:
    if re.fullmatch(r"[A-Za-z0-9_.\-]+", label):
        return label
    return "'" + label.replace("'", "''") + "'"


def _check_weights(weights):
    W = np.asarray(weights, dtype=float)
    if W.size == 0:
        raise EmptyMatrix("empty weight matrix")
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise InputError("weights must be a square matrix")
    if np.max(np.abs(W - W.T)) > 1e-9:
        raise AsymmetricInput("weights must be symmetric")
    if np.any(W < 0):
        raise InputError("weights must be nonnegative")
    return W


def dendrogram(weights, labels=None) -> Dendrogram:
    """Average-linkage clustering on ``d(i, j) = max(w) - w(i, j)``.

    Ties are broken by the smallest ``(id_a, id_b)`` pair of current cluster
    ids, so all-equal weights merge in index order.
    """
    W = _check_weights(weights)
    n = W.shape[0]
    labels = tuple(labels) if labels is not None else tuple(str(k) for k in range(n))
    off = W[~np.eye(n, dtype=bool)]
    D = (off.max() if off.size else 0.0) - W
    members = {k: [k] for k in range(n)}
    # average distances between live clusters
    dist = {(i, j): D[i, j] for i in range(n) for j in range(i + 1, n)}
    merges = []
    next_id = n
    while len(members) > 1:
        (a, b), h = min(dist.items(), key=lambda kv: (kv[1], kv[0]))
        merged = members.pop(a) + members.pop(b)
        dist = {k: v for k, v in dist.items() if a not in k and b not in k}
        for c, mem in members.items():
            dist[(c, next_id)] = float(np.mean(D[np.ix_(mem, merged)]))
        members[next_id] = merged
        merges.append((a, b, float(h)))
        next_id += 1
    return Dendrogram(tuple(merges), labels)


def modularity(weights, assignment) -> float:
    """Newman weighted modularity of a community assignment.

    ``Q = 1/(2W) sum_ij [w_ij - s_i s_j / (2W)] delta(c_i, c_j)`` with node
    strengths ``s`` and ``2W`` the sum of all entries. A network without
    weight has ``Q = 0``.
    """
    W = _check_weights(weights)
    c = np.asarray(assignment)
    if c.shape != (W.shape[0],):
        raise InputError("one community label per node is required")
    two_w = W.sum()
    if two_w <= 0:
        return 0.0
    s = W.sum(axis=1)
    same = c[:, None] == c[None, :]
    return float(np.sum((W - np.outer(s, s) / two_w) * same) / two_w)


def modularity_by_community(weights, assignment) -> float:
    """Same value as :func:`modularity`, summed community by community."""
    W = _check_weights(weights)
    c = np.asarray(assignment)
    two_w = W.sum()
    if two_w <= 0:
        return 0.0
    s = W.sum(axis=1)
    q = 0.0
    for label in np.unique(c):
        idx = np.flatnonzero(c == label)
        q += W[np.ix_(idx, idx)].sum() / two_w - (s[idx].sum() / two_w) ** 2
    return float(q)


@dataclass(frozen=True)
class CommunityAssignment:
    labels: tuple
    communities: tuple
    modularity: float
    height: float

    def to_dict(self) -> dict:
        return {lab: int(c) for lab, c in zip(self.labels, self.communities)}


def _assignment(clusters, n):
    out = np.empty(n, dtype=int)
    for cid, members in enumerate(sorted(clusters, key=min)):
        out[list(members)] = cid
    return out


def best_cut(dend: Dendrogram, weights) -> CommunityAssignment:
    """Cut of the dendrogram with the highest modularity (ties: fewer communities)."""
    W = _check_weights(weights)
    best = None
    for h, clusters in dend.memberships():
        assign = _assignment(clusters, dend.n)
        q = modularity(W, assign)
        key = (q, -len(clusters))
        if best is None or key > best[0]:
            best = (key, assign, h)
    (q, _), assign, h = best
    return CommunityAssignment(dend.labels, tuple(int(a) for a in assign), q, float(h))
