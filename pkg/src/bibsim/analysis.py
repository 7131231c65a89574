"""Competitive-ratio machinery around the batched policy.

Four pieces: the closed-form ratio bound Gamma(Psi, gamma), the
batch-specified LP benchmark with its own simplex solver, analytic
clairvoyant values for the stylized families, and the randomized dual
certifier that audits a single batched run against the bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np

from .choice import InstanceTooLargeError, choice_probability
from .engine import SimTrace, run
from .iap import IapInstance
from .iap import solve as iap_solve
from .instance import Instance, StylizedParams
from .penalty import PenaltyFunction, check_concave
from .policy import PolicyKind

SIMPSON_PANELS = 10_000
GRID_POINTS = 10_000
GOLDEN_TOL = 1e-8
POINTWISE_TOL = 1e-9
OBJECTIVE_TOL = 1e-9
SIMPLEX_TOL = 1e-9
FEASIBILITY_TOL = 1e-7
SIMPLEX_MAX_ITER = 1_000_000

# tractability guards for the desk-scale LP
LP_MAX_PRODUCTS = 4
LP_MAX_HORIZON = 40
LP_MAX_BATCHES = 8


class NumericalFailureError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# ratio bound


@dataclass(frozen=True)
class GammaBound:
    gamma1: float
    gamma2: float
    value: float
    x1: float  # minimizing inventory level for gamma1
    x2: float  # minimizing inventory level for gamma2
    psi: PenaltyFunction
    gamma: int
    c0: int


def _simpson(psi: PenaltyFunction, lo: float, hi: float,
             panels: int = SIMPSON_PANELS) -> float:
    """Composite Simpson integral of psi over [lo, hi]."""
    if hi - lo <= 0.0:
        return 0.0
    if panels % 2:
        panels += 1
    xs = np.linspace(lo, hi, panels + 1)
    ys = psi.eval_array(xs)
    w = np.ones(panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float((hi - lo) / (3.0 * panels) * (w @ ys))


def _minimize(f, hi: float) -> tuple[float, float]:
    """Grid scan over [0, hi] then golden-section refinement."""
    if hi <= 0.0:
        return 0.0, f(0.0)
    xs = np.linspace(0.0, hi, GRID_POINTS)
    vals = [f(float(x)) for x in xs]
    k = int(np.argmin(vals))
    a = float(xs[max(k - 1, 0)])
    b = float(xs[min(k + 1, GRID_POINTS - 1)])
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    while b - a > GOLDEN_TOL:
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        if f(c) <= f(d):
            b = d
        else:
            a = c
    x = 0.5 * (a + b)
    return x, f(x)


def gamma_bound(psi: PenaltyFunction, gamma: int, c0: int,
                panels: int = SIMPSON_PANELS) -> GammaBound:
    """Worst-case revenue ratio of the batched policy: min(Gamma1, Gamma2)."""
    if not check_concave(psi):
        raise ValueError("penalty must be concave with Psi(0)=0, Psi(1)=1")
    if not 1 <= gamma <= c0:
        raise ValueError(f"need 1 <= gamma <= c0, got gamma={gamma}, c0={c0}")

    def ratio1(x: float) -> float:
        denom = (1.0 / c0 + (1.0 + gamma / c0) * (1.0 - psi(x))
                 + _simpson(psi, x + 1.0 / c0, 1.0, panels))
        return (1.0 - x) / denom

    def ratio2(x: float) -> float:
        denom = (1.0 / gamma + 1.0 - psi(x)
                 + _simpson(psi, x + 1.0 / gamma, 1.0, panels))
        return (1.0 - x) / denom

    x1, g1 = _minimize(ratio1, 1.0 - 1.0 / c0)
    x2, g2 = _minimize(ratio2, 1.0 - 1.0 / gamma)
    return GammaBound(g1, g2, min(g1, g2), x1, x2, psi, gamma, c0)


_GAMMA_CACHE: dict[tuple, GammaBound] = {}


def cached_gamma_bound(psi: PenaltyFunction, gamma: int, c0: int) -> GammaBound:
    key = (psi.kind, psi.knots, gamma, c0)
    hit = _GAMMA_CACHE.get(key)
    if hit is None:
        hit = _GAMMA_CACHE[key] = gamma_bound(psi, gamma, c0)
    return hit


# ---------------------------------------------------------------------------
# batch-specified LP benchmark


@dataclass
class LpProblem:
    objective: list[float]
    rows: list[dict[int, float]]  # sparse <= rows: column -> coefficient
    rhs: list[float]
    # column k sells batch-specified assortment var_index[k] = (L, t) with
    # L a frozenset of (product, ready-batch) pairs, batches 1-based
    var_index: list[tuple[frozenset, int]]

    @property
    def n_vars(self) -> int:
        return len(self.objective)

    @property
    def n_rows(self) -> int:
        return len(self.rows)


@dataclass
class LpSolution:
    value: float
    x: list[float]
    iterations: int


def _feasible_batch_assortments(inst: Instance, h: dict[int, int],
                                tau: dict[tuple[int, int], int], t: int):
    """All feasible (product set, batch choice) pairs for consumer t."""
    model = inst.consumers[t - 1]
    support = model.support()
    out = []
    for k in range(1, len(support) + 1):
        for subset in combinations(support, k):
            if not inst.feasible.is_feasible(subset):
                continue
            per_product = []
            for i in subset:
                js = [(i, j) for j in range(1, h.get(i, 0) + 1)
                      if tau[(i, j)] <= t]
                if not js:
                    break
                per_product.append(js)
            else:
                for combo in product(*per_product):
                    out.append((frozenset(subset), frozenset(combo)))
    return out


def _duration_window(inst: Instance, i: int, start: int) -> range:
    d = inst.products[i].duration
    end = inst.horizon if math.isinf(d) else min(start + int(d) - 1,
                                                 inst.horizon)
    return range(start, end + 1)


def build_lp(trace: SimTrace, inst: Instance, gamma: int) -> LpProblem:
    """Clairvoyant revenue relaxation induced by one batched execution.

    Variables are offer probabilities x_{L,t} over batch-specified
    assortments; capacity rows aggregate choice probabilities over rolling
    usage windows, with the first batch's capacity relaxed by gamma.
    """
    if trace.policy_kind != "bib":
        raise ValueError("the LP benchmark is induced by a batched run")
    if inst.duration_p is not None:
        raise ValueError("LP windows need deterministic usage durations")
    if inst.n > LP_MAX_PRODUCTS or inst.horizon > LP_MAX_HORIZON:
        raise InstanceTooLargeError(
            f"LP benchmark capped at {LP_MAX_PRODUCTS} products and "
            f"{LP_MAX_HORIZON} periods")
    if sum(trace.h.values()) > LP_MAX_BATCHES:
        raise InstanceTooLargeError(
            f"LP benchmark capped at {LP_MAX_BATCHES} ready batches")

    T = inst.horizon
    objective: list[float] = []
    var_index: list[tuple[frozenset, int]] = []
    cols_by_period: dict[int, list[int]] = {}
    # (i, j) -> period -> [(column, phi)]
    usage: dict[tuple[int, int], dict[int, list[tuple[int, float]]]] = {}
    for t in range(1, T + 1):
        model = inst.consumers[t - 1]
        for subset, L in _feasible_batch_assortments(inst, trace.h,
                                                     trace.tau, t):
            col = len(objective)
            coef = 0.0
            for i, j in sorted(L):
                phi = choice_probability(model, subset, i)
                coef += inst.products[i].price * phi
                if phi > 0.0:
                    usage.setdefault((i, j), {}).setdefault(t, []).append(
                        (col, phi))
            objective.append(coef)
            var_index.append((L, t))
            cols_by_period.setdefault(t, []).append(col)

    rows: list[dict[int, float]] = []
    rhs: list[float] = []
    inflow = {i: sum(max(row.get(i, 0), 0) for row in inst.shocks.values())
              for i in range(inst.n)}
    for i in sorted(trace.h):
        for j in range(1, trace.h[i] + 1):
            # the first capacity row merges the initial batch with the one
            # after it, which holds at most min(gamma, total inflow) units
            cap = (inst.products[i].initial_inventory
                   + min(gamma, inflow[i])) if j == 1 else float(gamma)
            by_period = usage.get((i, j), {})
            for start in range(trace.tau[(i, j)], T + 1):
                row: dict[int, float] = {}
                for t in _duration_window(inst, i, start):
                    for col, phi in by_period.get(t, ()):
                        row[col] = row.get(col, 0.0) + phi
                rows.append(row)
                rhs.append(float(cap))
    for t in range(1, T + 1):
        rows.append({col: 1.0 for col in cols_by_period.get(t, ())})
        rhs.append(1.0)
    return LpProblem(objective, rows, rhs, var_index)


def solve_lp(lp: LpProblem) -> LpSolution:
    """Primal simplex with Bland's rule on the slack-form tableau.

    All right-hand sides are nonnegative, so the slack basis is feasible;
    the offer-probability rows bound the objective, so the LP is bounded.
    """
    m, n = lp.n_rows, lp.n_vars
    tableau = np.zeros((m + 1, n + m + 1))
    for r, row in enumerate(lp.rows):
        for col, coef in row.items():
            tableau[r, col] = coef
        tableau[r, n + r] = 1.0
        tableau[r, -1] = lp.rhs[r]
    tableau[-1, :n] = [-c for c in lp.objective]
    basis = list(range(n, n + m))

    iterations = 0
    while True:
        reduced = tableau[-1, :n + m]
        entering = -1
        for j in range(n + m):  # Bland: smallest eligible index
            if reduced[j] < -SIMPLEX_TOL:
                entering = j
                break
        if entering < 0:
            break
        col = tableau[:m, entering]
        candidates = [r for r in range(m) if col[r] > SIMPLEX_TOL]
        if not candidates:
            raise NumericalFailureError("LP unbounded; model invariant broken")
        leaving = min(candidates,
                      key=lambda r: (tableau[r, -1] / col[r], basis[r]))
        pivot = tableau[leaving, entering]
        tableau[leaving] /= pivot
        for r in range(m + 1):
            if r != leaving and tableau[r, entering] != 0.0:
                tableau[r] -= tableau[r, entering] * tableau[leaving]
        basis[leaving] = entering
        iterations += 1
        if iterations > SIMPLEX_MAX_ITER:
            raise NumericalFailureError("simplex iteration cap exceeded")

    x = [0.0] * n
    for r, b in enumerate(basis):
        if b < n:
            x[b] = float(tableau[r, -1])
    # post-hoc feasibility audit of the floating-point solution
    for row, cap in zip(lp.rows, lp.rhs):
        lhs = sum(coef * x[col] for col, coef in row.items())
        if lhs > cap + FEASIBILITY_TOL:
            raise NumericalFailureError(
                f"simplex returned an infeasible point: {lhs} > {cap}")
    if any(v < -FEASIBILITY_TOL for v in x):
        raise NumericalFailureError("simplex returned a negative variable")
    value = sum(c * v for c, v in zip(lp.objective, x))
    return LpSolution(value, x, iterations)


# ---------------------------------------------------------------------------
# analytic clairvoyant values


def analytic_opt(params: StylizedParams, meta: dict) -> float:
    """Closed-form clairvoyant revenue for a generated stylized instance."""
    if meta.get("kind") != "stylized" or meta.get("family") != params.family:
        raise ValueError("metadata does not match the stylized family")
    if params.family == "Gbar":
        c, eps = params.c, params.eps
        return c + 2.0 * c * c - c * c * eps
    n_per_level = meta["n_per_level"]
    xi_per_level = meta["xi_per_level"]
    value = sum((params.r ** level) * params.c * n_per_level[level]
                for level in range(params.N + 1))
    value += sum((params.r ** (level - 1)) * xi_per_level[level - 1]
                 for level in range(1, params.N + 1))
    return value


# ---------------------------------------------------------------------------
# randomized dual certification


@dataclass
class DualCertificate:
    lam: dict[int, float]  # period -> lambda_t
    theta: dict[tuple[int, int], dict[int, float]]  # (i, j) -> {t: theta}
    g: dict[tuple[int, int], dict[int, float]]  # surrogate levels at sales
    gamma_used: float
    primal: float
    dual: float
    pointwise_ok: bool
    objective_ok: bool
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.pointwise_ok and self.objective_ok

    def to_json(self) -> dict:
        return {
            "gamma_used": self.gamma_used,
            "primal": self.primal,
            "dual": self.dual,
            "pointwise_ok": self.pointwise_ok,
            "objective_ok": self.objective_ok,
            "violations": list(self.violations),
            "lambda": {str(t): v for t, v in sorted(self.lam.items())},
            "theta": {f"{i},{j}": {str(t): v for t, v in sorted(row.items())}
                      for (i, j), row in sorted(self.theta.items())},
        }


def _dual_assignment(trace: SimTrace, inst: Instance, psi: PenaltyFunction):
    """Per-sale dual variables (lambda, theta, g) for one batched run."""
    T = trace.horizon
    lam: dict[int, float] = {}
    theta: dict[tuple[int, int], dict[int, float]] = {}
    g: dict[tuple[int, int], dict[int, float]] = {}
    alloc = trace.alloc_times()
    for (i, j), sales in alloc.items():
        size = trace.batch_sizes[(i, j)]
        price = inst.products[i].price
        sales = sorted(sales)
        times = [t for t, _ in sales]
        # right endpoint = last period the unit is out; anything past the
        # final left endpoint is coverage-equivalent, so clamp at T
        ends = [min(int(ret) - 1, T) if math.isfinite(ret) else T
                for _, ret in sales]
        labels = iap_solve(IapInstance(tuple(zip(times, ends)))).labels
        theta_row: dict[int, float] = {}
        g_row: dict[int, float] = {}
        for (t, _), label in zip(sales, labels):
            level = 1.0 - (label - 1) / size
            theta_row[t] = price * (psi(level) - psi(level - 1.0 / size))
            g_row[t] = level
            out = sum(1 for t2, ret2 in sales if t2 < t and ret2 > t)
            lam[t] = price * psi((size - out) / size)
        theta[(i, j)] = theta_row
        g[(i, j)] = g_row
    return lam, theta, g


def certify_run(trace: SimTrace, inst: Instance, psi: PenaltyFunction,
                gamma: int, c0: int | None = None) -> DualCertificate:
    """Audit one batched run: dual feasibility pointwise and the ratio.

    Check (A): at every period each ready batch's reduced price plus the
    theta mass of its units still in use covers the full price.  Check
    (B): realized revenue is at least Gamma times the dual objective.
    """
    if trace.policy_kind != "bib":
        raise ValueError("certification needs a trace from the batched policy")
    if c0 is None:
        c0 = min(p.initial_inventory for p in inst.products)
    bound = cached_gamma_bound(psi, gamma, c0)
    lam, theta, g = _dual_assignment(trace, inst, psi)
    alloc = trace.alloc_times()
    T = trace.horizon
    violations: list[str] = []

    pointwise_ok = True
    for (i, j), tau in trace.tau.items():
        size = trace.batch_sizes[(i, j)]
        if size <= 0:
            continue
        price = inst.products[i].price
        sales = sorted(alloc.get((i, j), []))
        theta_row = theta.get((i, j), {})
        for t in range(tau, T + 1):
            in_use = [t2 for t2, ret2 in sales if t2 < t and ret2 > t]
            f = (size - len(in_use)) / size
            lhs = price * psi(f) + sum(theta_row[t2] for t2 in in_use)
            if lhs < price - POINTWISE_TOL:
                pointwise_ok = False
                violations.append(
                    f"pointwise: product {i} batch {j} period {t}: "
                    f"{lhs:.12f} < {price:.12f}")

    dual = sum(lam.values())
    for (i, j), row in theta.items():
        cap = inst.products[i].initial_inventory + gamma if j == 1 else gamma
        dual += cap * sum(row.values())
    primal = trace.total_revenue
    slack = OBJECTIVE_TOL * max(1.0, abs(dual))
    objective_ok = primal >= bound.value * dual - slack
    if not objective_ok:
        violations.append(
            f"objective: primal {primal:.12f} < Gamma*dual "
            f"{bound.value * dual:.12f}")
    return DualCertificate(lam, theta, g, bound.value, primal, dual,
                           pointwise_ok, objective_ok, violations)


@dataclass
class ExpectationReport:
    period: int
    assortment: tuple
    lhs_mean: float
    rhs: float
    stderr: float
    ok: bool


def dual_expectation_check(inst: Instance, psi: PenaltyFunction, gamma: int,
                           replications: int,
                           base_seed: int = 0) -> tuple[bool, list[ExpectationReport]]:
    """Monte-Carlo audit of the dual constraints in expectation.

    For each feasible (period, batch-specified assortment) pair, the
    average of lambda_t plus the phi-weighted theta mass over the usage
    window must cover the expected offered revenue up to three standard
    errors.
    """
    if inst.n > 3 or inst.horizon > 15:
        raise ValueError("expectation check is capped at 3 products, 15 periods")
    if inst.duration_p is not None:
        raise ValueError("expectation check needs deterministic durations")
    spec = PolicyKind("bib", psi, gamma)
    traces = [run(inst, spec, base_seed + k) for k in range(replications)]
    assignments = [_dual_assignment(trace, inst, psi) for trace in traces]
    # batch structure is shock-driven, hence identical across replications
    h, tau = traces[0].h, traces[0].tau
    T = inst.horizon

    reports: list[ExpectationReport] = []
    all_ok = True
    for t in range(1, T + 1):
        model = inst.consumers[t - 1]
        for subset, L in _feasible_batch_assortments(inst, h, tau, t):
            rhs = 0.0
            samples = np.zeros(replications)
            for k, (lam, theta, _) in enumerate(assignments):
                samples[k] = lam.get(t, 0.0)
            for i, j in sorted(L):
                phi = choice_probability(model, subset, i)
                if phi <= 0.0:
                    continue
                rhs += inst.products[i].price * phi
                d = inst.products[i].duration
                lo = 1 if math.isinf(d) else max(1, t - int(d) + 1)
                for k, (lam, theta, _) in enumerate(assignments):
                    row = theta.get((i, j), {})
                    samples[k] += phi * sum(v for t2, v in row.items()
                                            if lo <= t2 <= t)
            mean = float(samples.mean())
            sd = float(samples.std(ddof=1)) if replications > 1 else 0.0
            stderr = sd / math.sqrt(replications)
            ok = mean >= rhs - 3.0 * stderr - 1e-12
            all_ok = all_ok and ok
            reports.append(ExpectationReport(t, tuple(sorted(L)), mean, rhs,
                                             stderr, ok))
    return all_ok, reports
