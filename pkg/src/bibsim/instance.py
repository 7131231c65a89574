"""Problem instances and generators.

Two generator families: the randomized MNL experiments (seasonal consumer
types, geometric shocks) and the adversarial stylized constructions built
by co-simulating a deterministic target policy against nested singleton
consumers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .choice import ChoiceModel, FeasibleCollection
from .penalty import PenaltyFunction

DENSE_SHOCK_LIMIT = 2_000_000


@dataclass(frozen=True)
class Product:
    id: int
    price: float
    initial_inventory: int
    duration: float  # positive integer or math.inf

    def __post_init__(self):
        if self.price <= 0:
            raise ValueError("price must be positive")
        if self.initial_inventory < 0:
            raise ValueError("initial inventory must be nonnegative")
        if not (self.duration >= 1):
            raise ValueError("duration must be at least 1")


@dataclass(frozen=True)
class Instance:
    products: tuple[Product, ...]
    horizon: int
    shocks: dict[int, dict[int, int]]  # period t (1-based) -> {product: units}
    consumers: tuple[ChoiceModel, ...]
    feasible: FeasibleCollection = field(default_factory=FeasibleCollection.all_subsets)
    negative_shocks: bool = False
    duration_p: float | None = None  # per-sale geometric duration Geo(p) on {1,2,...}
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.consumers) != self.horizon:
            raise ValueError("need exactly one consumer model per period")
        for t, row in self.shocks.items():
            if not 1 <= t <= self.horizon:
                raise ValueError(f"shock period {t} outside horizon")
            if not self.negative_shocks and any(v < 0 for v in row.values()):
                raise ValueError("negative shocks require the variant flag")

    @property
    def n(self) -> int:
        return len(self.products)

    def shock_row(self, t: int) -> dict[int, int]:
        return self.shocks.get(t, {})

    def to_json(self) -> dict:
        n, T = self.n, self.horizon
        if n * T > DENSE_SHOCK_LIMIT:
            raise ValueError("instance too large for dense JSON serialization")
        dense = [[0] * T for _ in range(n)]
        for t, row in self.shocks.items():
            for i, v in row.items():
                dense[i][t - 1] = v
        return {
            "products": [
                {"id": p.id, "price": p.price, "inventory": p.initial_inventory,
                 "duration": "inf" if math.isinf(p.duration) else int(p.duration)}
                for p in self.products],
            "horizon": T,
            "shocks": dense,
            "consumers": [c.to_json() for c in self.consumers],
            "feasible": {"kind": self.feasible.kind, "cap": self.feasible.cap},
            "negative_shocks": self.negative_shocks,
            "duration_p": self.duration_p,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Instance":
        products = tuple(
            Product(p["id"], p["price"], p["inventory"],
                    math.inf if p["duration"] == "inf" else p["duration"])
            for p in obj["products"])
        shocks: dict[int, dict[int, int]] = {}
        for i, row in enumerate(obj["shocks"]):
            for t0, v in enumerate(row):
                if v:
                    shocks.setdefault(t0 + 1, {})[i] = v
        consumers = tuple(ChoiceModel.from_json(c) for c in obj["consumers"])
        feas = obj.get("feasible", {"kind": "all", "cap": None})
        return cls(products, obj["horizon"], shocks, consumers,
                   FeasibleCollection(feas["kind"], feas.get("cap")),
                   obj.get("negative_shocks", False), obj.get("duration_p"))


# ---------------------------------------------------------------------------
# random MNL experiments


@dataclass(frozen=True)
class RandomMnlParams:
    n: int = 6
    horizon: int = 3000
    c0: int = 30
    price_range: tuple[float, float] = (10.0, 25.0)
    alpha_range: tuple[float, float] = (0.9, 1.1)
    outside: float = 0.1
    shock_q: float = 0.98
    kappa: int = 0
    seed: int = 0


def gen_random_mnl(params: RandomMnlParams) -> Instance:
    """Seasonal-type MNL instance: type j considers the prefix [j].

    Type j peaks around tau_j inside each third of the horizon; kappa
    controls how concentrated arrivals are (kappa = 0 is uniform).
    """
    rng = np.random.default_rng(params.seed)
    n, T = params.n, params.horizon

    prices = np.sort(rng.uniform(*params.price_range, size=n))[::-1]
    alphas = []
    for j in range(1, n + 1):
        row = np.zeros(n)
        row[:j] = rng.uniform(*params.alpha_range, size=j)
        alphas.append(row)
    # geometric on {0,1,...}: number of failures before the first success
    shock_matrix = rng.geometric(params.shock_q, size=(n, T)) - 1

    season = T / 3.0
    taus = np.array([(n - j) * (T / 18.0) + 1.0 for j in range(1, n + 1)])
    t_prime = ((np.arange(1, T + 1) - 1) % int(season)) + 1
    weights = np.exp(-0.001 * params.kappa *
                     np.abs(t_prime[None, :] - taus[:, None]))
    cdf = np.cumsum(weights / weights.sum(axis=0), axis=0)
    u = rng.random(T)
    types = (u[None, :] < cdf).argmax(axis=0)  # first index where cdf exceeds u

    type_models = tuple(ChoiceModel.mnl(alphas[j], params.outside)
                        for j in range(n))
    consumers = tuple(type_models[j] for j in types)

    duration = T // 3
    products = tuple(Product(i, float(prices[i]), params.c0, duration)
                     for i in range(n))
    shocks: dict[int, dict[int, int]] = {}
    for i in range(n):
        for t0 in np.nonzero(shock_matrix[i])[0]:
            shocks.setdefault(int(t0) + 1, {})[i] = int(shock_matrix[i, t0])
    meta = {"kind": "random_mnl", "kappa": params.kappa, "seed": params.seed,
            "types": types.tolist()}
    return Instance(products, T, shocks, consumers, meta=meta)


def apply_negative_shocks(inst: Instance, flip_prob: float, seed: int) -> Instance:
    """Negate each nonzero shock independently with the given probability."""
    if inst.negative_shocks:
        raise ValueError("instance already carries negative shocks")
    rng = np.random.default_rng(seed)
    new_shocks: dict[int, dict[int, int]] = {}
    for t in sorted(inst.shocks):
        row = inst.shocks[t]
        new_row = {}
        for i in sorted(row):
            v = row[i]
            if v != 0 and rng.random() < flip_prob:
                v = -v
            new_row[i] = v
        new_shocks[t] = new_row
    meta = dict(inst.meta)
    meta["negative_flip_prob"] = flip_prob
    return Instance(inst.products, inst.horizon, new_shocks, inst.consumers,
                    inst.feasible, negative_shocks=True,
                    duration_p=inst.duration_p, meta=meta)


def with_stochastic_durations(inst: Instance, p: float) -> Instance:
    """Switch to per-sale geometric usage durations with mean 1/p."""
    if not 0 < p <= 1:
        raise ValueError("duration success probability must lie in (0, 1]")
    return Instance(inst.products, inst.horizon, inst.shocks, inst.consumers,
                    inst.feasible, inst.negative_shocks, duration_p=p,
                    meta=dict(inst.meta))


# ---------------------------------------------------------------------------
# stylized adversarial families


@dataclass(frozen=True)
class StylizedParams:
    family: str  # "G", "Ghat", or "Gbar"
    N: int = 0
    r: float = 0.5
    s: float = 0.32
    n0: int = 100
    c: int = 50
    eps: float = 0.1  # Gbar only

    def __post_init__(self):
        if self.family not in ("G", "Ghat", "Gbar"):
            raise ValueError(f"unknown stylized family {self.family!r}")
        if self.family != "Gbar":
            if not (0 <= self.r <= 1 and 0 <= self.s <= 1):
                raise ValueError("r and s must lie in [0, 1]")


class _TargetSim:
    """Scalar co-simulation of SCIB, DCIB, or USIB over a growing product set.

    USIB needs one extra piece of state: shock units form their own one-unit
    batches, so a product with an unsold shock unit has normalized level 1
    regardless of how depleted its initial pool is.
    """

    def __init__(self, policy: str, psi: PenaltyFunction, c: int):
        if policy not in ("scib", "dcib", "usib"):
            raise ValueError(
                "target policy must be deterministic (scib, dcib, or usib)")
        self.policy = policy
        self.psi = psi
        self.c = c
        self.prices = np.zeros(0)
        self.inv = np.zeros(0)
        self.denom = np.zeros(0)  # c + cumulative shocks, for dcib
        self.unit_stock = np.zeros(0, dtype=int)  # unsold shock units, usib
        self.revenue = 0.0

    def add_products(self, count: int, price: float):
        self.prices = np.concatenate([self.prices, np.full(count, price)])
        self.inv = np.concatenate([self.inv, np.full(count, float(self.c))])
        self.denom = np.concatenate([self.denom, np.full(count, float(self.c))])
        self.unit_stock = np.concatenate([self.unit_stock,
                                          np.zeros(count, dtype=int)])

    def apply_shocks(self, xi: dict[int, int]):
        for i, v in xi.items():
            self.inv[i] += v
            self.denom[i] += v
            if self.policy == "usib":
                self.unit_stock[i] += v

    def _level(self, i: int) -> float:
        if self.policy == "usib" and self.unit_stock[i] > 0:
            return 1.0
        pool = self.inv[i] - self.unit_stock[i]
        if self.policy == "dcib":
            return min(max(pool / self.denom[i], 0.0), 1.0)
        return min(max(pool / self.c, 0.0), 1.0)

    def _sell(self, i: int) -> None:
        if self.policy == "usib" and self.unit_stock[i] > 0:
            self.unit_stock[i] -= 1
        self.inv[i] -= 1.0
        self.revenue += float(self.prices[i])

    def serve_prefix(self, start: int, k: int) -> None:
        pool = self.inv[start:start + k] - self.unit_stock[start:start + k]
        if self.policy == "dcib":
            ratio = np.clip(pool / self.denom[start:start + k], 0.0, 1.0)
        else:
            ratio = np.clip(pool / self.c, 0.0, 1.0)
        if self.policy == "usib":
            ratio = np.where(self.unit_stock[start:start + k] > 0, 1.0, ratio)
        reduced = self.prices[start:start + k] * self.psi.eval_array(ratio)
        best = int(np.argmax(reduced))  # first max = smallest id
        if reduced[best] > 0.0:
            self._sell(start + best)

    def serve_pair(self, a: int, b: int) -> None:
        best, best_val = None, 0.0
        for i in sorted((a, b)):
            val = self.prices[i] * self.psi(self._level(i))
            if val > best_val:
                best, best_val = i, val
        if best is not None:
            self._sell(best)


def gen_stylized(params: StylizedParams, target_policy: str = "scib",
                 psi: PenaltyFunction | None = None,
                 n_rounding: str = "nearest") -> Instance:
    """Build a stylized adversarial instance (plus metadata).

    Families G and Ghat are constructed level by level: the target policy
    is simulated forward, its leftover inventory at each level boundary
    determines the exogenous shock sizes, and fresh higher-priced product
    subgroups lure the policy away from the shocked units.  Family Gbar
    needs no co-simulation.  `n_rounding` picks how the fractional fresh
    subgroup size is turned into an integer ("nearest" or "up").
    """
    psi = psi or PenaltyFunction.exponential()
    if params.family == "Gbar":
        return _gen_gbar(params)
    if n_rounding not in ("nearest", "up"):
        raise ValueError("n_rounding must be 'nearest' or 'up'")
    n_round = round if n_rounding == "nearest" else math.ceil
    ratio = psi(params.s) / params.r if params.r > 0 else math.inf
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("construction requires Psi(s)/r in [0, 1]")
    denom_units = params.c * (1.0 - psi.inverse(ratio))

    sim = _TargetSim(target_policy, psi, params.c)
    group_start = [0]
    group_size = [params.n0]
    sim.add_products(params.n0, 1.0)

    consumer_blocks: list[tuple[frozenset, int]] = []  # (accept set, copies)
    shocks: dict[int, dict[int, int]] = {}
    xi_per_level: list[int] = []
    period = 0

    def run_prefix_blocks(start: int, size: int):
        nonlocal period
        for b in range(size):
            accept = frozenset(range(start, start + size - b))
            consumer_blocks.append((accept, params.c))
            for _ in range(params.c):
                period += 1
                sim.serve_prefix(start, size - b)

    run_prefix_blocks(0, params.n0)

    for level in range(1, params.N + 1):
        prev_start, prev_size = group_start[-1], group_size[-1]
        xi_row: dict[int, int] = {}
        for i in range(prev_start, prev_start + prev_size):
            gap = params.s * params.c - sim.inv[i]
            if params.family == "Ghat":
                gap = gap / (1.0 - params.s)
            units = max(int(round(gap)), 0)
            if units:
                xi_row[i] = units
        xi_total = sum(xi_row.values())
        xi_per_level.append(xi_total)

        n_l = max(1, int(n_round(xi_total / denom_units))) if denom_units > 0 else 1
        new_start = group_start[-1] + group_size[-1]
        group_start.append(new_start)
        group_size.append(n_l)
        sim.add_products(n_l, params.r ** level)

        if xi_total:
            shocks[period + 1] = xi_row
        # interleaved consumers: one per shocked unit, each accepting the
        # shocked product and one fresh product; round-robin over the fresh
        # subgroup keeps the fan-in as even as possible
        targets = [new_start + (k % n_l) for k in range(xi_total)]
        sources = [i for i in sorted(xi_row) for _ in range(xi_row[i])]
        first = True
        for src, tgt in zip(sources, targets):
            accept = frozenset((src, tgt))
            consumer_blocks.append((accept, 1))
            period += 1
            if first:
                sim.apply_shocks(xi_row)
                first = False
            sim.serve_pair(src, tgt)

        run_prefix_blocks(new_start, n_l)

    horizon = period
    n_total = group_start[-1] + group_size[-1]
    products = tuple(Product(i, float(sim.prices[i]), params.c, math.inf)
                     for i in range(n_total))
    consumers = []
    for accept, copies in consumer_blocks:
        model = ChoiceModel.singleton(accept)
        consumers.extend([model] * copies)

    n_per_level = list(group_size)
    clairvoyant = sum((params.r ** l) * params.c * n_per_level[l]
                      for l in range(params.N + 1))
    clairvoyant += sum((params.r ** (l - 1)) * xi_per_level[l - 1]
                       for l in range(1, params.N + 1))
    meta = {
        "kind": "stylized", "family": params.family,
        "target_policy": target_policy,
        "n_rounding": n_rounding,
        "target_revenue": sim.revenue,
        "n_per_level": n_per_level,
        "xi_per_level": xi_per_level,
        "clairvoyant": clairvoyant,
    }
    return Instance(products, horizon, shocks, tuple(consumers), meta=meta)


def _gen_gbar(params: StylizedParams) -> Instance:
    c, eps = params.c, params.eps
    T = c + 2 * c * c
    # the second product is effectively uncapacitated; T units can never
    # run out within the horizon
    products = (Product(0, 1.0, c, math.inf),
                Product(1, 1.0 - eps, T, math.inf))
    only_first = ChoiceModel.singleton({0})
    both = ChoiceModel.singleton({0, 1})
    consumers = []
    shocks: dict[int, dict[int, int]] = {}
    for t in range(1, T + 1):
        if t <= c:
            consumers.append(only_first)
        elif (t - c) % 2 == 1:  # odd t beyond c (c+1, c+3, ...)
            consumers.append(both)
            shocks[t] = {0: 1}
        else:
            consumers.append(only_first)
    meta = {
        "kind": "stylized", "family": "Gbar",
        "clairvoyant": c + 2 * c * c - c * c * eps,
        "usib_hand_value": c + c * c,
    }
    return Instance(products, T, shocks, tuple(consumers), meta=meta)
