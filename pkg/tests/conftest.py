"""Shared builders and reference oracles for the test suite.

The oracles here are deliberately independent re-derivations: a memoized
offline allocation recursion, a literal vertex enumerator for small LPs,
and random-instance factories with fully seeded randomness.
"""

from __future__ import annotations

import math
from functools import lru_cache
from itertools import combinations

import numpy as np
import pytest

from bibsim import ChoiceModel, Instance, PenaltyFunction, Product

# ---------------------------------------------------------------------------
# canonical interval instances

PATH_INTERVALS = ((1, 4), (3, 6), (5, 8), (7, 10))
PATH_LABELS = (2, 1, 2, 1)
PATH_CHAINS = ({0, 1}, {2, 3})

TREE_INTERVALS = ((1, 14), (2, 7), (3, 4), (5, 6), (8, 13), (9, 10), (11, 12))
TREE_LABELS = (3, 2, 1, 1, 2, 1, 1)
TREE_CHAINS = ({0, 1, 2}, {4, 5}, {3}, {6})

# the tree with the left endpoints of the first and third intervals swapped,
# re-indexed so left endpoints increase again
MODIFIED_TREE_INTERVALS = ((1, 4), (2, 7), (3, 14), (5, 6), (8, 13),
                           (9, 10), (11, 12))
MODIFIED_TREE_LABELS = (3, 2, 1, 1, 2, 1, 1)

GREEDY_TREE_LABELS = (1, 2, 3, 3, 2, 3, 3)
NAIVE_PATH_LABELS = (1, 2, 2, 2)


def random_iap_intervals(seed: int, max_s: int = 200):
    """Random mixes of nested, overlapping, and disjoint intervals."""
    rng = np.random.default_rng(seed)
    s = int(rng.integers(1, max_s + 1))
    lefts = np.cumsum(rng.integers(1, 4, size=s))
    style = rng.random(s)
    lengths = np.where(
        style < 0.4, rng.integers(0, 3, size=s),          # short / disjoint
        np.where(style < 0.8, rng.integers(2, 12, size=s),  # overlapping
                 rng.integers(10, 80, size=s)))             # nesting
    return tuple((int(a), int(a + w)) for a, w in zip(lefts, lengths))


def random_concave_decreasing(rng, top: int):
    """Table f(1..top) of a random decreasing concave function."""
    drops = np.sort(rng.uniform(0.0, 2.0, size=max(top - 1, 1)))
    f = [float(rng.uniform(-1.0, 5.0))]
    for d in drops[:top - 1]:
        f.append(f[-1] - float(d))
    return f


# ---------------------------------------------------------------------------
# tiny instances


def singleton_instance(prices, inventories, durations, accepts, shocks=None,
                       negative=False, meta=None):
    """Deterministic instance: one singleton-choice consumer per period."""
    products = tuple(Product(i, float(p), int(c), d)
                     for i, (p, c, d) in
                     enumerate(zip(prices, inventories, durations)))
    consumers = tuple(ChoiceModel.singleton(a) for a in accepts)
    return Instance(products, len(accepts), dict(shocks or {}), consumers,
                    negative_shocks=negative, meta=dict(meta or {}))


def random_tiny_det_instance(seed: int, max_t: int = 20,
                             micro: bool = False) -> tuple[Instance, int]:
    """Seeded deterministic instance (n <= 3, T <= max_t) plus a gamma.

    micro instances stay small enough for literal vertex enumeration of
    the induced LP.
    """
    rng = np.random.default_rng(seed)
    if micro:
        n = int(rng.integers(1, 3))
        T = int(rng.integers(3, 6))
        total_shock_budget = 1
    else:
        n = int(rng.integers(1, 4))
        T = int(rng.integers(4, max_t + 1))
        total_shock_budget = int(rng.integers(0, 4))
    prices = rng.uniform(1.0, 2.0, size=n)
    inventories = rng.integers(1, 4, size=n)
    durations = [float(rng.choice([1, 2, 3, math.inf])) for _ in range(n)]
    accepts = []
    for _ in range(T):
        k = int(rng.integers(1, n + 1))
        accepts.append(tuple(sorted(rng.choice(n, size=k, replace=False))))
    shocks: dict[int, dict[int, int]] = {}
    for _ in range(total_shock_budget):
        t = int(rng.integers(1, T + 1))
        i = int(rng.integers(0, n))
        shocks.setdefault(t, {})
        shocks[t][i] = shocks[t].get(i, 0) + 1
    gamma = int(rng.integers(1, int(inventories.min()) + 1))
    inst = singleton_instance(prices, inventories, durations, accepts, shocks)
    return inst, gamma


def random_tiny_mnl_instance(seed: int) -> Instance:
    """Seeded MNL instance small enough for the LP benchmark (c_i >= 3)."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 4))
    T = int(rng.integers(8, 15))
    products = tuple(Product(i, float(rng.uniform(1.0, 2.0)),
                             int(rng.integers(3, 5)),
                             float(rng.choice([2, 3, math.inf])))
                     for i in range(n))
    consumers = tuple(
        ChoiceModel.mnl(rng.uniform(0.2, 1.0, size=n),
                        outside=float(rng.uniform(0.1, 0.3)))
        for _ in range(T))
    shocks: dict[int, dict[int, int]] = {}
    for _ in range(int(rng.integers(1, 5))):
        t = int(rng.integers(1, T + 1))
        i = int(rng.integers(0, n))
        shocks.setdefault(t, {})
        shocks[t][i] = shocks[t].get(i, 0) + 1
    return Instance(products, T, shocks, consumers)


# ---------------------------------------------------------------------------
# offline clairvoyant oracle


def offline_optimum(inst: Instance) -> float:
    """Exact clairvoyant revenue for deterministic singleton instances.

    Memoized recursion over (period, on-hand vector, outstanding return
    times); the clairvoyant serves any accepting consumer from any product
    with an on-hand unit, or skips.
    """
    n, T = inst.n, inst.horizon
    prices = [p.price for p in inst.products]
    durations = [p.duration for p in inst.products]
    accepts = []
    for model in inst.consumers:
        if model.kind != "singleton":
            raise ValueError("offline oracle needs singleton consumers")
        accepts.append(tuple(sorted(model.accepts)))

    @lru_cache(maxsize=None)
    def best(t: int, onhand: tuple, pending: tuple) -> float:
        if t > T:
            return 0.0
        onhand = list(onhand)
        live = []
        for i, ret in pending:
            if ret == t:
                onhand[i] += 1
            else:
                live.append((i, ret))
        for i, v in inst.shock_row(t).items():
            onhand[i] = max(onhand[i] + v, 0)
        base_state = (tuple(onhand), tuple(sorted(live)))
        value = best(t + 1, *base_state)
        for i in accepts[t - 1]:
            if i < n and onhand[i] >= 1:
                onhand[i] -= 1
                nxt = live
                if math.isfinite(durations[i]):
                    nxt = tuple(sorted(live + [(i, t + int(durations[i]))]))
                value = max(value,
                            prices[i] + best(t + 1, tuple(onhand),
                                             tuple(nxt)))
                onhand[i] += 1
        return value

    start = tuple(p.initial_inventory for p in inst.products)
    result = best(1, start, ())
    best.cache_clear()
    return result


# ---------------------------------------------------------------------------
# LP oracles


def lp_value_by_vertex_enumeration(objective, rows, rhs) -> float:
    """max c.x s.t. sparse rows <= rhs, x >= 0, by literal basis search.

    Enumerates every choice of n active constraints out of the inequality
    rows plus the nonnegativity bounds, solves the square system, keeps
    feasible points.  Exponential; callers must keep the LP micro.
    """
    n = len(objective)
    m = len(rows)
    a = np.zeros((m + n, n))
    b = np.zeros(m + n)
    for r, row in enumerate(rows):
        for col, coef in row.items():
            a[r, col] = coef
        b[r] = rhs[r]
    for k in range(n):
        a[m + k, k] = -1.0  # -x_k <= 0
    best = 0.0  # x = 0 is always feasible
    c = np.array(objective)
    for active in combinations(range(m + n), n):
        sub = a[list(active)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, b[list(active)])
        if np.all(a @ x <= b + 1e-9):
            best = max(best, float(c @ x))
    return best


def lp_value_by_scipy(objective, rows, rhs) -> float:
    from scipy.optimize import linprog

    n = len(objective)
    a = np.zeros((len(rows), n))
    for r, row in enumerate(rows):
        for col, coef in row.items():
            a[r, col] = coef
    res = linprog([-c for c in objective], A_ub=a, b_ub=list(rhs),
                  bounds=[(0, None)] * n, method="highs")
    assert res.status == 0, res.message
    return -float(res.fun)


@pytest.fixture
def exp_psi():
    return PenaltyFunction.exponential()
