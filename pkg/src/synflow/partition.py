"""Grouping redundant drivers by maximizing total unnormalized causality."""

from __future__ import annotations

from dataclasses import dataclass

from .causality import ErrorCache
from .data import TimeSeriesSet
from .exceptions import ConfigError, InvalidPartition, TooManyDrivers
from .regression import ModelSpec

MAX_EXHAUSTIVE = 8
TIE_RTOL = 1e-3
MERGE_TOL = 1e-3


@dataclass(frozen=True)
class Partition:
    """Blocks of driver indices with their total causality ``delta``."""

    target: int
    blocks: tuple
    total: float
    per_block: tuple
    mode: str = "exhaustive"

    def labelled(self, labels) -> list:
        return [[labels[k] for k in block] for block in self.blocks]

    def to_dict(self, labels) -> dict:
        return {
            "target": labels[self.target],
            "mode": self.mode,
            "blocks": self.labelled(labels),
            "delta_total": self.total,
            "delta_per_block": list(self.per_block),
        }


def restricted_growth_strings(n: int):
    """Yield every restricted growth string of length ``n`` in lexicographic order."""
    if n == 0:
        yield ()
        return
    a = [0] * n
    while True:
        yield tuple(a)
        # rightmost position that can still grow
        i = n - 1
        while i > 0 and a[i] > max(a[:i]):
            i -= 1
        if i == 0:
            return
        a[i] += 1
        a[i + 1 :] = [0] * (n - i - 1)


def set_partitions(items):
    """All partitions of ``items``; blocks ordered by first element."""
    items = list(items)
    for rgs in restricted_growth_strings(len(items)):
        blocks = [[] for _ in range(max(rgs, default=-1) + 1)]
        for item, b in zip(items, rgs):
            blocks[b].append(item)
        yield tuple(tuple(b) for b in blocks)


def bell(n: int) -> int:
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def _canonical(blocks):
    return tuple(sorted(tuple(sorted(b)) for b in blocks))


def _validate(blocks, drivers):
    seen = [k for b in blocks for k in b]
    if any(len(b) == 0 for b in blocks):
        raise InvalidPartition("empty block")
    if len(seen) != len(set(seen)):
        raise InvalidPartition("blocks overlap")
    if set(seen) != set(drivers):
        raise InvalidPartition(f"blocks cover {sorted(set(seen))}, drivers are {sorted(drivers)}")


def _cache(ts, target, spec, cache):
    return cache if cache is not None else ErrorCache(ts, target, spec)


def total_gc(ts: TimeSeriesSet, target, blocks, spec: ModelSpec, cache: ErrorCache | None = None) -> float:
    """Sum over blocks of the unnormalized set causality, conditioning on all variables."""
    cache = _cache(ts, target, spec, cache)
    blocks = [tuple(ts.index(k) for k in b) for b in blocks]
    _validate(blocks, cache.universe)
    return sum(cache.unnormalized(b) for b in blocks)


def _score(cache, blocks):
    per = tuple(cache.unnormalized(b) for b in blocks)
    return sum(per), per


def best_partition_exhaustive(
    ts: TimeSeriesSet, target, spec: ModelSpec, tie_rtol: float = TIE_RTOL, cache: ErrorCache | None = None
) -> Partition:
    """Maximizer of the total causality over every partition of the drivers.

    Partitions whose total lies within ``tie_rtol * max(|best|, 0.01)`` of the
    best one count as tied; among them the one with most blocks wins, then
    the lexicographically smallest sorted block list.
    """
    cache = _cache(ts, target, spec, cache)
    drivers = cache.universe
    if len(drivers) > MAX_EXHAUSTIVE:
        raise TooManyDrivers(f"{len(drivers)} drivers; exhaustive search is capped at {MAX_EXHAUSTIVE}")
    scored = [(blocks, *_score(cache, blocks)) for blocks in set_partitions(drivers)]
    best = max(s[1] for s in scored)
    tol = tie_rtol * max(abs(best), 0.01)
    tied = [s for s in scored if s[1] >= best - tol]
    blocks, total, per = min(tied, key=lambda s: (-len(s[0]), _canonical(s[0])))
    return Partition(cache.target, blocks, total, per, "exhaustive")


def best_partition_greedy(
    ts: TimeSeriesSet, target, spec: ModelSpec, merge_tol: float = MERGE_TOL, cache: ErrorCache | None = None
) -> Partition:
    """Agglomerative search from singletons.

    At each step the pair of blocks whose merge raises the total the most is
    merged, as long as that gain exceeds ``merge_tol``.
    """
    cache = _cache(ts, target, spec, cache)
    blocks = [(d,) for d in cache.universe]
    while len(blocks) > 1:
        best_gain, best_pair = None, None
        for i in range(len(blocks)):
            for j in range(i + 1, len(blocks)):
                merged = tuple(sorted(blocks[i] + blocks[j]))
                gain = cache.unnormalized(merged) - cache.unnormalized(blocks[i]) - cache.unnormalized(blocks[j])
                if best_gain is None or gain > best_gain:
                    best_gain, best_pair = gain, (i, j)
        if best_gain <= merge_tol:
            break
        i, j = best_pair
        merged = tuple(sorted(blocks[i] + blocks[j]))
        blocks = [b for k, b in enumerate(blocks) if k not in (i, j)] + [merged]
        blocks.sort()
    total, per = _score(cache, blocks)
    return Partition(cache.target, tuple(blocks), total, per, "greedy")


def best_partition(ts: TimeSeriesSet, target, spec: ModelSpec, mode: str = "auto", **kw) -> Partition:
    """Dispatch on ``mode``: ``auto`` runs exhaustive up to 8 drivers, greedy above."""
    if mode == "auto":
        mode = "exhaustive" if ts.n - 1 <= MAX_EXHAUSTIVE else "greedy"
    if mode == "exhaustive":
        kw.pop("merge_tol", None)
        return best_partition_exhaustive(ts, target, spec, **kw)
    if mode == "greedy":
        kw.pop("tie_rtol", None)
        return best_partition_greedy(ts, target, spec, **kw)
    raise ConfigError(f"unknown partition mode {mode!r}")
