"""Consumer choice models and the offline assortment oracle."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

ENUMERATION_CUTOFF = 20


class InstanceTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class FeasibleCollection:
    kind: str = "all"
    cap: int | None = None

    def __post_init__(self):
        if self.kind not in ("all", "cardinality"):
            raise ValueError(f"unknown feasible collection {self.kind!r}")
        if self.kind == "cardinality" and (self.cap is None or self.cap < 0):
            raise ValueError("cardinality collection needs a nonnegative cap")

    @classmethod
    def all_subsets(cls) -> "FeasibleCollection":
        return cls("all")

    @classmethod
    def cardinality_cap(cls, k: int) -> "FeasibleCollection":
        return cls("cardinality", k)

    def is_feasible(self, assortment) -> bool:
        if self.kind == "cardinality":
            return len(assortment) <= self.cap
        return True


@dataclass(frozen=True)
class ChoiceModel:
    """Either an MNL model or a deterministic single-product acceptor.

    MNL weights are dense over product ids 0..n-1; a zero weight keeps the
    product out of the consideration set.  The outside option carries a
    fixed probability mass regardless of what is offered, which pins the
    no-purchase weight per offered set rather than globally.
    """

    kind: str
    alpha: tuple[float, ...] = field(default=())
    outside: float = 0.0
    accepts: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.kind not in ("mnl", "singleton"):
            raise ValueError(f"unknown choice model kind {self.kind!r}")
        if self.kind == "mnl":
            if any(a < 0 for a in self.alpha):
                raise ValueError("MNL weights must be nonnegative")
            if not 0.0 <= self.outside < 1.0:
                raise ValueError("outside probability must lie in [0, 1)")

    @classmethod
    def mnl(cls, alpha, outside: float = 0.0) -> "ChoiceModel":
        return cls("mnl", alpha=tuple(float(a) for a in alpha), outside=outside)

    @classmethod
    def singleton(cls, accepts) -> "ChoiceModel":
        return cls("singleton", accepts=frozenset(int(i) for i in accepts))

    def support(self) -> tuple[int, ...]:
        if self.kind == "singleton":
            return tuple(sorted(self.accepts))
        return tuple(i for i, a in enumerate(self.alpha) if a > 0.0)

    def to_json(self) -> dict:
        if self.kind == "mnl":
            return {"kind": "mnl", "alpha": list(self.alpha),
                    "outside": self.outside}
        return {"kind": "singleton", "accepts": sorted(self.accepts)}

    @classmethod
    def from_json(cls, obj: dict) -> "ChoiceModel":
        if obj["kind"] == "mnl":
            return cls.mnl(obj["alpha"], obj.get("outside", 0.0))
        return cls.singleton(obj["accepts"])


def choice_probability(model: ChoiceModel, offered, i: int) -> float:
    offered = frozenset(offered)
    if i not in offered or not offered:
        return 0.0
    if model.kind == "singleton":
        return 1.0 if offered == {i} and i in model.accepts else 0.0
    a_i = model.alpha[i] if i < len(model.alpha) else 0.0
    total = sum(model.alpha[j] for j in offered if j < len(model.alpha))
    if total <= 0.0:
        return 0.0
    # outside weight chosen per offered set so the no-purchase mass is
    # exactly model.outside
    return (1.0 - model.outside) * a_i / total


def sample_choice(model: ChoiceModel, offered, u: float) -> int | None:
    """Inverse-CDF sample over products sorted by id; one uniform consumed."""
    cum = 0.0
    for i in sorted(offered):
        cum += choice_probability(model, offered, i)
        if u < cum:
            return i
    return None


def _assortment_value(model: ChoiceModel, reduced, offered) -> float:
    return sum(reduced[i] * choice_probability(model, offered, i)
               for i in offered)


_mnl_cache: dict[tuple, tuple] = {}


def _mnl_subset_tables(alpha_key: tuple[float, ...], support: tuple[int, ...]):
    """All nonempty subsets of the support as masks plus their weight sums."""
    key = (alpha_key, support)
    hit = _mnl_cache.get(key)
    if hit is not None:
        return hit
    m = len(support)
    masks = np.arange(1, 1 << m, dtype=np.int64)
    member = ((masks[:, None] >> np.arange(m)) & 1).astype(float)
    weights = np.array([alpha_key[i] for i in support])
    denom = member @ weights
    tables = (masks, member, weights, denom)
    _mnl_cache[key] = tables
    return tables


def assortment_oracle(model: ChoiceModel, reduced_prices,
                      feasible: FeasibleCollection | None = None) -> frozenset[int]:
    """Reward-maximizing feasible assortment under the model.

    Ties go to the smallest cardinality, then the lexicographically
    smallest sorted id tuple, so the result is a pure function of its
    arguments.
    """
    feasible = feasible or FeasibleCollection.all_subsets()
    if model.kind == "singleton":
        best, best_val = None, 0.0
        for i in sorted(model.accepts):
            if not feasible.is_feasible((i,)):
                continue
            val = reduced_prices[i]
            if val > best_val:
                best, best_val = i, val
        return frozenset() if best is None else frozenset((best,))

    support = model.support()
    n = len(support)
    if n == 0:
        return frozenset()
    if n <= ENUMERATION_CUTOFF:
        return _oracle_enumerate(model, reduced_prices, feasible, support)
    if feasible.kind == "all":
        return _oracle_revenue_ordered(model, reduced_prices, support)
    raise InstanceTooLargeError(
        f"{n} products exceed the enumeration cutoff {ENUMERATION_CUTOFF}")


def _oracle_enumerate(model, reduced_prices, feasible, support):
    masks, member, weights, denom = _mnl_subset_tables(model.alpha, support)
    red = np.array([reduced_prices[i] for i in support])
    numer = member @ (red * weights)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(denom > 0.0,
                          (1.0 - model.outside) * numer / denom, 0.0)
    if feasible.kind == "cardinality":
        sizes = member.sum(axis=1)
        values = np.where(sizes <= feasible.cap, values, -np.inf)
    best = values.max(initial=0.0)
    if best <= 0.0:
        return frozenset()
    cand = np.nonzero(values == best)[0]
    chosen = min(
        (tuple(support[b] for b in range(len(support)) if masks[c] >> b & 1)
         for c in cand),
        key=lambda ids: (len(ids), ids))
    return frozenset(chosen)


def _oracle_revenue_ordered(model, reduced_prices, support):
    # classical MNL structure: some prefix of products sorted by decreasing
    # reduced price is optimal among all subsets
    order = sorted(support, key=lambda i: (-reduced_prices[i], i))
    best_set, best_val = frozenset(), 0.0
    for k in range(1, len(order) + 1):
        prefix = order[:k]
        val = _assortment_value(model, reduced_prices, frozenset(prefix))
        if val > best_val:
            best_set, best_val = frozenset(prefix), val
    return best_set


def brute_force_oracle(model: ChoiceModel, reduced_prices,
                       feasible: FeasibleCollection | None = None) -> frozenset[int]:
    """Reference implementation by literal subset enumeration (tests only)."""
    feasible = feasible or FeasibleCollection.all_subsets()
    ids = sorted(set(model.support()) | set(range(len(reduced_prices))))
    best_set, best_val = frozenset(), 0.0
    for k in range(len(ids) + 1):
        for combo in combinations(ids, k):
            if not feasible.is_feasible(combo):
                continue
            val = _assortment_value(model, reduced_prices, frozenset(combo))
            if val > best_val:
                best_set, best_val = frozenset(combo), val
    return best_set
