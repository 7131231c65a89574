"""Online allocation policies.

All policies share one engine-facing surface: shock/return processing at
the start of a period, reduced prices for the oracle, and an allocation
callback when the consumer buys.  BIB keeps a full batch ledger; SCIB,
DCIB, and GREED only track scalar inventories; USIB re-implements the
one-unit-batch special case independently so the BIB(gamma=1) equivalence
stays a real cross-check rather than an alias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .instance import Instance
from .penalty import PenaltyFunction


@dataclass
class PolicyKind:
    kind: str  # bib | scib | dcib | usib | greed
    psi: PenaltyFunction | None = None
    gamma: int | None = None

    def __post_init__(self):
        if self.kind not in ("bib", "scib", "dcib", "usib", "greed"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "bib" and (self.gamma is None or self.gamma < 1):
            raise ValueError("bib needs a batch threshold gamma >= 1")
        if self.kind in ("bib", "scib", "dcib", "usib") and self.psi is None:
            raise ValueError(f"{self.kind} needs a penalty function")

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.psi is not None:
            out["penalty"] = self.psi.to_json()
        if self.gamma is not None:
            out["gamma"] = self.gamma
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "PolicyKind":
        psi = PenaltyFunction.from_json(obj["penalty"]) if "penalty" in obj else None
        return cls(obj["kind"], psi, obj.get("gamma"))


@dataclass
class Batch:
    size: int  # current member-unit count
    out: int = 0  # sold, not yet returned
    ready: bool = False
    tau: int | None = None  # period the batch became ready

    @property
    def available(self) -> int:
        return self.size - self.out

    @property
    def level(self) -> float:
        return self.available / self.size if self.size > 0 else 0.0


class BibPolicy:
    """Batched Inventory Balancing with threshold gamma."""

    kind = "bib"

    def __init__(self, inst: Instance, psi: PenaltyFunction, gamma: int):
        c0 = min((p.initial_inventory for p in inst.products), default=0)
        if not 1 <= gamma:
            raise ValueError("gamma must be at least 1")
        self.inst = inst
        self.psi = psi
        self.gamma = gamma
        # per product: creation-ordered batches; the last one is charging
        self.batches: list[list[Batch]] = []
        for p in inst.products:
            first = Batch(p.initial_inventory, ready=True, tau=1)
            self.batches.append([first, Batch(0)])
        self.pending: dict[int, list[tuple[int, int]]] = {}  # t -> [(i, batch idx)]
        self.allocations: list[tuple[int, int, int, float]] = []  # (t, i, j, ret)

    def on_period_start(self, t: int, shocks: dict[int, int]) -> dict:
        returns: dict[int, int] = {}
        for i, b in self.pending.pop(t, ()):  # returns rejoin their own batch
            self.batches[i][b].out -= 1
            returns[i] = returns.get(i, 0) + 1
        clamps = []
        for i in sorted(shocks):
            v = shocks[i]
            if v >= 0:
                for _ in range(v):
                    charging = self.batches[i][-1]
                    charging.size += 1
                    if charging.size == self.gamma:
                        charging.ready = True
                        charging.tau = t
                        self.batches[i].append(Batch(0))
            else:
                need = -v
                # shed on-hand units newest-first, charging batch included
                for batch in reversed(self.batches[i]):
                    take = min(batch.available, need)
                    batch.size -= take
                    need -= take
                    if need == 0:
                        break
                if need > 0:
                    clamps.append((t, i, need))
        return {"returns": returns, "clamps": clamps}

    def _best_batch(self, i: int) -> tuple[float, int | None]:
        best_f, best_j = 0.0, None
        for j, batch in enumerate(self.batches[i]):
            if batch.ready and batch.size > 0 and batch.level > best_f:
                best_f, best_j = batch.level, j
        return best_f, best_j

    def reduced_price(self, i: int) -> float:
        f, _ = self._best_batch(i)
        return self.inst.products[i].price * self.psi(f)

    def designated_batch(self, i: int) -> int | None:
        _, j = self._best_batch(i)
        return None if j is None else j + 1  # report 1-based

    def on_choice(self, i: int, t: int, duration: float) -> tuple[int, float]:
        _, j = self._best_batch(i)
        assert j is not None and self.batches[i][j].available >= 1, \
            f"allocation from an empty batch of product {i} at period {t}"
        self.batches[i][j].out += 1
        ret = t + duration
        if math.isfinite(ret):
            self.pending.setdefault(int(ret), []).append((i, j))
        self.allocations.append((t, i, j + 1, ret))
        return j + 1, self.inst.products[i].price

    # trace metadata ------------------------------------------------------

    def ready_batch_table(self) -> dict:
        h, tau, sizes = {}, {}, {}
        for i, blist in enumerate(self.batches):
            ready = [b for b in blist if b.ready]
            h[i] = len(ready)
            for j, b in enumerate(ready, start=1):
                tau[(i, j)] = b.tau
                sizes[(i, j)] = b.size
        return {"h": h, "tau": tau, "sizes": sizes}


class UsibPolicy:
    """Unit-specific balancing: every shock unit is its own one-unit batch."""

    kind = "usib"

    def __init__(self, inst: Instance, psi: PenaltyFunction):
        self.inst = inst
        self.psi = psi
        self.init_size = [p.initial_inventory for p in inst.products]
        self.init_out = [0] * inst.n
        self.units: list[list[bool]] = [[] for _ in range(inst.n)]  # True = out
        self.unit_dead: list[list[bool]] = [[] for _ in range(inst.n)]
        self.pending: dict[int, list[tuple[int, int]]] = {}  # t -> [(i, slot)]
        self.allocations: list[tuple[int, int, int, float]] = []

    def on_period_start(self, t: int, shocks: dict[int, int]) -> dict:
        returns: dict[int, int] = {}
        for i, slot in self.pending.pop(t, ()):
            if slot < 0:
                self.init_out[i] -= 1
            else:
                self.units[i][slot] = False
            returns[i] = returns.get(i, 0) + 1
        clamps = []
        for i in sorted(shocks):
            v = shocks[i]
            if v >= 0:
                for _ in range(v):
                    self.units[i].append(False)
                    self.unit_dead[i].append(False)
            else:
                need = -v
                for slot in reversed(range(len(self.units[i]))):
                    if need == 0:
                        break
                    if not self.units[i][slot] and not self.unit_dead[i][slot]:
                        self.unit_dead[i][slot] = True
                        need -= 1
                if need > 0:
                    take = min(self.init_size[i] - self.init_out[i], need)
                    self.init_size[i] -= take
                    need -= take
                if need > 0:
                    clamps.append((t, i, need))
        return {"returns": returns, "clamps": clamps}

    def _best(self, i: int) -> tuple[float, int | None]:
        # batch 1 is the initial pool; shock units follow in arrival order
        size = self.init_size[i]
        f0 = (size - self.init_out[i]) / size if size > 0 else 0.0
        if f0 >= 1.0 and size > 0:
            return 1.0, -1
        for slot, out in enumerate(self.units[i]):
            if not out and not self.unit_dead[i][slot]:
                return 1.0, slot
        if f0 > 0.0:
            return f0, -1
        return 0.0, None

    def reduced_price(self, i: int) -> float:
        f, _ = self._best(i)
        return self.inst.products[i].price * self.psi(f)

    def designated_batch(self, i: int) -> int | None:
        _, slot = self._best(i)
        if slot is None:
            return None
        return 1 if slot == -1 else slot + 2

    def on_choice(self, i: int, t: int, duration: float) -> tuple[int, float]:
        _, slot = self._best(i)
        assert slot is not None, f"no available unit of product {i} at {t}"
        if slot == -1:
            self.init_out[i] += 1
        else:
            self.units[i][slot] = True
        ret = t + duration
        if math.isfinite(ret):
            self.pending.setdefault(int(ret), []).append((i, slot))
        j = 1 if slot == -1 else slot + 2
        self.allocations.append((t, i, j, ret))
        return j, self.inst.products[i].price


class ScalarPolicy:
    """SCIB / DCIB / GREED: one inventory number per product."""

    def __init__(self, inst: Instance, kind: str, psi: PenaltyFunction | None):
        self.inst = inst
        self.kind = kind
        self.psi = psi
        self.inventory = [float(p.initial_inventory) for p in inst.products]
        self.denominator = [float(p.initial_inventory) for p in inst.products]
        self.pending: dict[int, dict[int, int]] = {}
        self.allocations: list[tuple[int, int, None, float]] = []

    def on_period_start(self, t: int, shocks: dict[int, int]) -> dict:
        returns = self.pending.pop(t, {})
        for i, k in returns.items():
            self.inventory[i] += k
        clamps = []
        for i in sorted(shocks):
            v = shocks[i]
            self.denominator[i] += v
            if v >= 0:
                self.inventory[i] += v
            else:
                take = min(self.inventory[i], float(-v))
                self.inventory[i] -= take
                if take < -v:
                    clamps.append((t, i, int(-v - take)))
        return {"returns": returns, "clamps": clamps}

    def reduced_price(self, i: int) -> float:
        price = self.inst.products[i].price
        inv = self.inventory[i]
        if self.kind == "greed":
            return price if inv > 0 else 0.0
        c = self.inst.products[i].initial_inventory
        if self.kind == "scib":
            ratio = min(inv / c, 1.0) if c > 0 else (1.0 if inv > 0 else 0.0)
        else:  # dcib
            denom = max(self.denominator[i], 1.0)
            ratio = min(max(inv / denom, 0.0), 1.0)
        return price * self.psi(ratio)

    def designated_batch(self, i: int) -> None:
        return None

    def on_choice(self, i: int, t: int, duration: float) -> tuple[None, float]:
        assert self.inventory[i] >= 1, f"product {i} oversold at period {t}"
        self.inventory[i] -= 1
        ret = t + duration
        if math.isfinite(ret):
            row = self.pending.setdefault(int(ret), {})
            row[i] = row.get(i, 0) + 1
        self.allocations.append((t, i, None, ret))
        return None, self.inst.products[i].price


def make_policy(spec: PolicyKind, inst: Instance):
    if spec.kind == "bib":
        return BibPolicy(inst, spec.psi, spec.gamma)
    if spec.kind == "usib":
        return UsibPolicy(inst, spec.psi)
    return ScalarPolicy(inst, spec.kind, spec.psi)
