"""Interval Assignment Problem: solver, partition, and property checkers.

Intervals are closed on both ends. Indices are 0-based throughout the
library; the CLI renders them 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class IapInstance:
    intervals: tuple[tuple[int, int], ...]

    def __post_init__(self):
        lefts = [a for a, _ in self.intervals]
        for a, b in self.intervals:
            if a > b:
                raise ValueError(f"empty interval [{a}, {b}]")
        if any(a2 <= a1 for a1, a2 in zip(lefts, lefts[1:])):
            raise ValueError("left endpoints must be strictly increasing")

    def __len__(self):
        return len(self.intervals)


@dataclass(frozen=True)
class IapAssignment:
    labels: tuple[int, ...]
    q: tuple[int, ...]            # trigger link: q[j] selected j's label
    p: tuple[int | None, ...]     # predecessor link (next lower label), or None
    chains: tuple[tuple[int, ...], ...]


def _intervals_of(inst) -> list[tuple[int, int]]:
    if isinstance(inst, IapInstance):
        return list(inst.intervals)
    return [(int(a), int(b)) for a, b in inst]


def _coverage_matrix(intervals) -> np.ndarray:
    """cov[i, j] is True iff interval j covers the left endpoint of i."""
    a = np.array([iv[0] for iv in intervals])
    b = np.array([iv[1] for iv in intervals])
    return (a[None, :] <= a[:, None]) & (a[:, None] <= b[None, :])


def coverage(inst, i: int) -> set[int]:
    """N_i: indices of intervals covering the left endpoint of interval i."""
    intervals = _intervals_of(inst)
    if not 0 <= i < len(intervals):
        raise IndexError(f"interval index {i} out of range")
    ai = intervals[i][0]
    return {j for j, (a, b) in enumerate(intervals) if a <= ai <= b}


def solve(inst: IapInstance) -> IapAssignment:
    """Label intervals by repeated removal of maximally covered ones.

    Each round picks the interval i whose left endpoint lies in the most
    surviving intervals (largest index on ties), removes the earliest
    surviving interval j covering a_i, and gives j that count as its label.
    Predecessor links connect each labelled interval to the interval one
    label below it whose trigger it covers; following them yields chains
    carrying labels {1..len}.  O(s^2) overall.
    """
    intervals = _intervals_of(inst)
    s = len(intervals)
    if s == 0:
        return IapAssignment((), (), (), ())
    cov = _coverage_matrix(intervals)
    counts = cov.sum(axis=1)
    alive = np.ones(s, dtype=bool)
    labels = np.zeros(s, dtype=np.int64)
    q = np.zeros(s, dtype=np.int64)

    for _ in range(s):
        best = (counts * alive).max()
        i = int(np.nonzero(alive & (counts == best))[0][-1])
        j = int(np.nonzero(cov[i] & alive)[0][0])
        labels[j] = best
        q[j] = i
        alive[j] = False
        counts = counts - cov[:, j]

    p = _staircase_links([int(v) for v in labels])
    return IapAssignment(tuple(int(v) for v in labels), tuple(int(v) for v in q),
                         tuple(p), _chains_from_links(p))


def _chains_from_links(p: list[int | None]) -> tuple[tuple[int, ...], ...]:
    """Walk predecessor links down from every chain head."""
    preds = {v for v in p if v is not None}
    chains = []
    for head in range(len(p)):
        if head in preds:
            continue
        chain = [head]
        cur = p[head]
        while cur is not None:
            chain.append(cur)
            cur = p[cur]
        chains.append(tuple(chain))
    return tuple(chains)


def chains_from_labels(labels) -> tuple[tuple[int, ...], ...] | None:
    """A chain partition induced by arbitrary labels, or None if none exists.

    A partition into chains carrying {1..len} exists iff consecutive label
    classes nest, which is exactly when the staircase matching goes through.
    """
    try:
        p = _staircase_links([int(v) for v in labels])
    except AssertionError:
        return None
    return _chains_from_links(p)


def _staircase_links(labels: list[int]) -> list[int | None]:
    """Match every label-v interval to a distinct label-(v-1) interval.

    Any injective matching between consecutive label classes induces a
    partition into chains carrying exactly {1..len}: links strictly lower
    the label, so every walk ends at a label-1 interval.  Preferring the
    nearest partner to the right keeps chains index-ordered.
    """
    s = len(labels)
    p: list[int | None] = [None] * s
    taken = [False] * s
    by_label: dict[int, list[int]] = {}
    for k, v in enumerate(labels):
        by_label.setdefault(v, []).append(k)
    for v in sorted(by_label, reverse=True):
        if v == 1:
            continue
        for k in by_label[v]:
            free = [j for j in by_label.get(v - 1, []) if not taken[j]]
            rightward = [j for j in free if j > k]
            pick = rightward[0] if rightward else (free[0] if free else None)
            if pick is None:
                raise AssertionError(
                    "label classes do not nest; solver invariant broken")
            p[k] = pick
            taken[pick] = True
    return p


def check_local_dominance(inst, labels) -> bool:
    """Sorted labels over each coverage set dominate 1..|N_i| pointwise."""
    intervals = _intervals_of(inst)
    labels = list(labels)
    cov = _coverage_matrix(intervals)
    for i in range(len(intervals)):
        got = sorted(labels[j] for j in np.nonzero(cov[i])[0])
        if any(v < k + 1 for k, v in enumerate(got)):
            return False
    return True


def check_global_dominance(inst, labels) -> bool:
    """Test-basis form of sum Psi_bar(label) >= sum Psi_bar(|N|).

    Decreasing concave functions on the positive integers are nonneg
    combinations of constants, -k, and -(k-m)_+, so it suffices to compare
    plain sums and per-threshold excesses.
    """
    intervals = _intervals_of(inst)
    lab = np.asarray(list(labels), dtype=np.int64)
    covs = _coverage_matrix(intervals).sum(axis=1)
    if lab.sum() > covs.sum():
        return False
    top = int(max(lab.max(initial=0), covs.max(initial=0)))
    for m in range(1, top + 1):
        if np.maximum(lab - m, 0).sum() > np.maximum(covs - m, 0).sum():
            return False
    return True


def check_partition_monotonicity(inst, labels, chains) -> bool:
    """Chains are disjoint, cover all intervals, and carry labels 1..|chain|."""
    intervals = _intervals_of(inst)
    labels = list(labels)
    seen: set[int] = set()
    for chain in chains:
        members = set(chain)
        if len(members) != len(chain) or members & seen:
            return False
        seen |= members
        if sorted(labels[k] for k in chain) != list(range(1, len(chain) + 1)):
            return False
    return seen == set(range(len(intervals)))


def parse_intervals(text: str) -> IapInstance:
    """Parse the CLI text format: one 'a b' integer pair per line."""
    intervals = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'a b', got {raw!r}")
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise ValueError(f"line {lineno}: non-integer endpoint in {raw!r}")
        intervals.append((a, b))
    if not intervals:
        raise ValueError("no intervals in input")
    return IapInstance(tuple(intervals))
