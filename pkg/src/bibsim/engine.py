"""Deterministic simulation loop and Monte-Carlo harness."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .choice import assortment_oracle, sample_choice
from .instance import Instance
from .policy import PolicyKind, make_policy
from .rng import counter_geometric, counter_uniform


@dataclass
class SimTrace:
    policy_kind: str
    horizon: int
    offered: list[frozenset]
    designated: list[dict[int, int] | None]
    chosen: list[int | None]
    revenue_inc: list[float]
    shocks_applied: list[dict[int, int]]
    returns_applied: list[dict[int, int]]
    clamps: list[tuple[int, int, int]]
    allocations: list[tuple[int, int, int | None, float]]  # (t, i, batch j, return t)
    total_revenue: float
    h: dict[int, int] = field(default_factory=dict)
    tau: dict[tuple[int, int], int] = field(default_factory=dict)
    batch_sizes: dict[tuple[int, int], int] = field(default_factory=dict)

    def alloc_times(self) -> dict[tuple[int, int], list[tuple[int, float]]]:
        """Per ready batch: (sale period, return period) pairs."""
        out: dict[tuple[int, int], list[tuple[int, float]]] = {}
        for t, i, j, ret in self.allocations:
            if j is not None:
                out.setdefault((i, j), []).append((t, ret))
        return out

    def to_json(self) -> dict:
        return {
            "policy": self.policy_kind,
            "horizon": self.horizon,
            "total_revenue": self.total_revenue,
            "periods": [
                {"t": t + 1,
                 "offered": sorted(self.offered[t]),
                 "chosen": self.chosen[t],
                 "revenue": self.revenue_inc[t],
                 "shocks": self.shocks_applied[t],
                 "returns": self.returns_applied[t]}
                for t in range(self.horizon)],
            "clamps": list(self.clamps),
            "h": dict(self.h),
            "tau": {f"{i},{j}": v for (i, j), v in self.tau.items()},
            "batch_sizes": {f"{i},{j}": v
                            for (i, j), v in self.batch_sizes.items()},
            "allocations": [[t, i, j, "inf" if math.isinf(ret) else ret]
                            for t, i, j, ret in self.allocations],
        }

    def to_csv_rows(self):
        cum = 0.0
        for t in range(self.horizon):
            cum += self.revenue_inc[t]
            chosen = self.chosen[t]
            yield (t + 1, "" if chosen is None else chosen,
                   self.revenue_inc[t], cum)


def run(inst: Instance, spec: PolicyKind, seed: int = 0) -> SimTrace:
    """One replication.  All randomness is keyed by (seed, period)."""
    policy = make_policy(spec, inst)
    offered_log, designated_log, chosen_log = [], [], []
    rev_log, shock_log, return_log = [], [], []
    clamps: list[tuple[int, int, int]] = []
    total = 0.0
    for t in range(1, inst.horizon + 1):
        shocks = inst.shock_row(t)
        events = policy.on_period_start(t, shocks)
        clamps.extend(events["clamps"])
        model = inst.consumers[t - 1]
        support = model.support()
        reduced = {i: policy.reduced_price(i) for i in support}
        offered = assortment_oracle(model, reduced, inst.feasible)
        designated = None
        if spec.kind in ("bib", "usib"):
            designated = {i: policy.designated_batch(i) for i in offered}
        u = counter_uniform(seed, t, 0)
        chosen = sample_choice(model, offered, u) if offered else None
        rev = 0.0
        if chosen is not None:
            if inst.duration_p is not None:
                duration = counter_geometric(seed, t, 1, p=inst.duration_p)
            else:
                duration = inst.products[chosen].duration
            _, rev = policy.on_choice(chosen, t, duration)
            total += rev
        offered_log.append(offered)
        designated_log.append(designated)
        chosen_log.append(chosen)
        rev_log.append(rev)
        shock_log.append(dict(shocks))
        return_log.append(dict(events["returns"]))

    trace = SimTrace(spec.kind, inst.horizon, offered_log, designated_log,
                     chosen_log, rev_log, shock_log, return_log, clamps,
                     list(policy.allocations), total)
    if spec.kind == "bib":
        table = policy.ready_batch_table()
        trace.h = table["h"]
        trace.tau = table["tau"]
        trace.batch_sizes = table["sizes"]
    return trace


@dataclass
class RunStats:
    policy: str
    values: list[float]
    seeds: list[int]

    @property
    def mean(self) -> float:
        return sum(self.values) / len(self.values)

    @property
    def sd(self) -> float:
        m = self.mean
        if len(self.values) < 2:
            return 0.0
        return math.sqrt(sum((v - m) ** 2 for v in self.values)
                         / (len(self.values) - 1))

    @property
    def minimum(self) -> float:
        return min(self.values)

    @property
    def maximum(self) -> float:
        return max(self.values)


def monte_carlo(generator, policies: list[PolicyKind], replications: int,
                base_seed: int = 0) -> dict[str, RunStats]:
    """Common-random-numbers harness.

    `generator` maps a seed to an Instance; replication k regenerates the
    instance with seed base_seed + k and runs every policy on it with the
    same choice-uniform stream.
    """
    names = [_policy_name(p) for p in policies]
    stats = {name: RunStats(name, [], []) for name in names}
    for k in range(replications):
        seed = base_seed + k
        inst = generator(seed)
        for name, spec in zip(names, policies):
            trace = run(inst, spec, seed)
            stats[name].values.append(trace.total_revenue)
            stats[name].seeds.append(seed)
    return stats


def _policy_name(spec: PolicyKind) -> str:
    if spec.kind == "bib":
        return f"bib(gamma={spec.gamma})"
    return spec.kind
