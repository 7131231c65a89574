"""Penalty functions used by the balancing policies and the ratio bound."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

# Fixed tolerances; deliberately not configurable so acceptance runs are
# comparable across machines.
BOUNDARY_TOL = 1e-12
CONCAVITY_TOL = 1e-12
INVERSE_TOL = 1e-12

_E = math.e


class NotInvertibleError(ValueError):
    pass


@dataclass(frozen=True)
class PenaltyFunction:
    """Concave increasing map [0,1] -> [0,1] with Psi(0)=0 and Psi(1)=1.

    The step kind breaks both invariants at x=0 and exists only so the
    myopic greedy policy can be expressed as a balancing policy; it is
    refused wherever concavity matters.
    """

    kind: str
    knots: tuple[tuple[float, float], ...] = field(default=())

    def __post_init__(self):
        if self.kind not in ("exponential", "identity", "step", "tabulated"):
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if self.kind == "tabulated":
            self._validate_knots()
        elif self.knots:
            raise ValueError("knots only apply to the tabulated kind")

    def _validate_knots(self):
        ks = self.knots
        if len(ks) < 2:
            raise ValueError("tabulated penalty needs at least two knots")
        xs = [x for x, _ in ks]
        ys = [y for _, y in ks]
        if any(x2 <= x1 for x1, x2 in zip(xs, xs[1:])):
            raise ValueError("knot x-coordinates must be strictly increasing")
        if abs(xs[0]) > BOUNDARY_TOL or abs(xs[-1] - 1.0) > BOUNDARY_TOL:
            raise ValueError("knots must span [0, 1]")
        if abs(ys[0]) > BOUNDARY_TOL or abs(ys[-1] - 1.0) > BOUNDARY_TOL:
            raise ValueError("tabulated penalty must satisfy Psi(0)=0, Psi(1)=1")
        slopes = [(y2 - y1) / (x2 - x1)
                  for (x1, y1), (x2, y2) in zip(ks, ks[1:])]
        if any(s < -CONCAVITY_TOL for s in slopes):
            raise ValueError("tabulated penalty must be non-decreasing")
        if any(s2 - s1 > CONCAVITY_TOL for s1, s2 in zip(slopes, slopes[1:])):
            raise ValueError("tabulated penalty knots must be concave")

    # -- constructors ------------------------------------------------------

    @classmethod
    def exponential(cls) -> "PenaltyFunction":
        return cls("exponential")

    @classmethod
    def identity(cls) -> "PenaltyFunction":
        return cls("identity")

    @classmethod
    def step(cls) -> "PenaltyFunction":
        return cls("step")

    @classmethod
    def tabulated(cls, knots) -> "PenaltyFunction":
        return cls("tabulated", tuple((float(x), float(y)) for x, y in knots))

    # -- evaluation --------------------------------------------------------

    def __call__(self, x: float) -> float:
        if not (-BOUNDARY_TOL <= x <= 1.0 + BOUNDARY_TOL):
            raise ValueError(f"penalty argument {x} outside [0, 1]")
        x = min(max(x, 0.0), 1.0)
        if self.kind == "exponential":
            return (math.exp(1.0 - x) - _E) / (1.0 - _E)
        if self.kind == "identity":
            return x
        if self.kind == "step":
            return 1.0 if x > 0.0 else 0.0
        return self._interp(x)

    def _interp(self, x: float) -> float:
        ks = self.knots
        lo, hi = 0, len(ks) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if ks[mid][0] <= x:
                lo = mid
            else:
                hi = mid
        (x1, y1), (x2, y2) = ks[lo], ks[hi]
        w = (x - x1) / (x2 - x1)
        return y1 + w * (y2 - y1)

    def eval_array(self, x):
        """Vectorized evaluation over a numpy array clipped to [0, 1]."""
        import numpy as np

        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        if self.kind == "exponential":
            return (np.exp(1.0 - x) - _E) / (1.0 - _E)
        if self.kind == "identity":
            return x
        if self.kind == "step":
            return (x > 0.0).astype(float)
        xs = [k[0] for k in self.knots]
        ys = [k[1] for k in self.knots]
        return np.interp(x, xs, ys)

    def inverse(self, y: float) -> float:
        if self.kind == "step":
            raise NotInvertibleError("step penalty has no inverse")
        if not (-BOUNDARY_TOL <= y <= 1.0 + BOUNDARY_TOL):
            raise ValueError(f"inverse argument {y} outside [0, 1]")
        y = min(max(y, 0.0), 1.0)
        if self.kind == "exponential":
            return 1.0 - math.log(_E + y * (1.0 - _E))
        if self.kind == "identity":
            return y
        # bisection; valid because tabulated/other kinds are monotone
        lo, hi = 0.0, 1.0
        while hi - lo > INVERSE_TOL:
            mid = 0.5 * (lo + hi)
            if self(mid) < y:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "tabulated":
            out["knots"] = [[x, y] for x, y in self.knots]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "PenaltyFunction":
        kind = obj["kind"]
        if kind == "tabulated":
            return cls.tabulated(obj["knots"])
        return cls(kind)


def check_concave(psi: PenaltyFunction, grid_points: int = 1001) -> bool:
    """Boundary, monotonicity, and concavity on a uniform grid.

    The step kind is refused outright: its jump at 0 sits between any two
    grid points, and it exists only to express the myopic greedy policy.
    """
    if getattr(psi, "kind", None) == "step":
        return False
    if grid_points < 3:
        raise ValueError("need at least 3 grid points")
    h = 1.0 / (grid_points - 1)
    ys = [psi(k * h) for k in range(grid_points)]
    if abs(ys[0]) > BOUNDARY_TOL or abs(ys[-1] - 1.0) > BOUNDARY_TOL:
        return False
    if any(y2 - y1 < -BOUNDARY_TOL for y1, y2 in zip(ys, ys[1:])):
        return False
    for k in range(1, grid_points - 1):
        if ys[k + 1] - 2.0 * ys[k] + ys[k - 1] > CONCAVITY_TOL:
            return False
    return True
