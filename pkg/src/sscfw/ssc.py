"""The short step chain: an inner loop that chains maximal-stepsize moves
with a frozen gradient until a two-ball stopping region is exited, plus the
outer first-order method built on it and the descent certificate checker.

The stopping region for inner index j is the intersection of

    descent ball   {y : L ||y - x||^2 - <y - x, g> <= 0}
                   (ball of radius ||g||/2L centered at x + g/2L), and
    slope ball     {y : ||y - x|| <= <g, d_j>/(L ||d_j||)},

where g = -grad f(x) is frozen for the whole chain.  Every point of the
descent ball satisfies f(y) <= f(x) - (L/2)||y - x||^2, and inside the
slope ball the frozen gradient is still a descent certificate for the true
objective, so f decreases monotonically along the chain.

One chain is strictly sequential; distinct runs share no mutable state.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import Objective, OuterStepRecord, RunTrace, TerminationCase
from .domains import Domain, InfeasiblePointError

MEMBER_TOL = 1e-10       # relative ball-membership slack
ACTIVE_TOL = 1e-9        # which-ball-binds classification window
INNER_CAP = 10 ** 6


class NonTerminationError(RuntimeError):
    """Inner cap exceeded: a bug or an oracle outside the supported set."""


@dataclass(frozen=True)
class StepRegion:
    """Two-ball stopping region for a chain started at x with ascent g."""

    x: np.ndarray
    g: np.ndarray
    L: float

    @property
    def descent_center(self):
        return self.x + self.g / (2.0 * self.L)

    @property
    def descent_radius(self):
        return float(np.linalg.norm(self.g) / (2.0 * self.L))

    def slope_radius(self, d):
        d = np.asarray(d, dtype=float)
        nd = np.linalg.norm(d)
        if nd == 0.0:
            return 0.0
        return max(float(self.g @ d) / (self.L * nd), 0.0)

    def in_descent_ball(self, y, tol=MEMBER_TOL):
        delta = np.asarray(y, dtype=float) - self.x
        q = self.L * float(delta @ delta) - float(delta @ self.g)
        return q <= tol * (1.0 + self.L * float(delta @ delta))

    def in_slope_ball(self, y, d, tol=MEMBER_TOL):
        r = self.slope_radius(d)
        return float(np.linalg.norm(np.asarray(y) - self.x)) <= r * (1.0 + tol)


def _ball_exit(y, d, center, radius):
    """Positive root of ||y + beta d - center|| = radius (0 if none ahead)."""
    w = y - center
    dd = float(d @ d)
    if dd == 0.0:
        return np.inf
    b = float(w @ d)
    c = float(w @ w) - radius * radius
    disc = max(b * b - dd * c, 0.0)
    return (-b + np.sqrt(disc)) / dd


def beta_step(region: StepRegion, y, d, j_radius=None) -> float:
    """Largest step keeping y + beta d inside the stopping region.

    Returns 0 when y is already outside either ball (beyond the relative
    membership tolerance); otherwise the closed-form exit stepsize, the
    smaller of the two single-ball exits.
    """
    y = np.asarray(y, dtype=float)
    d = np.asarray(d, dtype=float)
    if np.linalg.norm(d) == 0.0:
        raise ValueError("direction must be nonzero")
    r_j = region.slope_radius(d) if j_radius is None else j_radius
    if not region.in_descent_ball(y):
        return 0.0
    if float(np.linalg.norm(y - region.x)) > r_j * (1.0 + MEMBER_TOL):
        return 0.0
    b1 = _ball_exit(y, d, region.descent_center, region.descent_radius)
    b2 = _ball_exit(y, d, region.x, r_j)
    return max(min(b1, b2), 0.0)


@dataclass
class InnerStep:
    y: np.ndarray            # point the step starts from
    d: np.ndarray
    alpha: float
    beta: float
    alpha_max: float
    maximal: bool
    gdot: float              # <g, d>
    slope_ratio: Optional[float] = None   # <g,d>/(pi_y(g) ||d||) when recorded


@dataclass
class ChainTrace:
    inner: list = field(default_factory=list)
    y_final: Optional[np.ndarray] = None
    case: TerminationCase = TerminationCase.CASE1
    tilde_index: int = 0

    @property
    def T(self):
        return len(self.inner)

    def y_at(self, j):
        return self.inner[j].y if j < len(self.inner) else self.y_final

    @property
    def x_aux(self):
        return self.y_at(self.tilde_index)


def auxiliary_index(trace: ChainTrace, g) -> int:
    """Index of the auxiliary point carrying the slope certificate.

    Final index for case 1/2, the penultimate point for case 3, and the
    argmin of the unit slopes <g, d_j/||d_j||> over the executed steps
    (ties to the smallest j) for case 4.
    """
    T = trace.T
    if trace.case in (TerminationCase.CASE1, TerminationCase.CASE2):
        return T
    if trace.case == TerminationCase.CASE3:
        return T - 1
    g = np.asarray(g, dtype=float)
    slopes = [st.gdot / np.linalg.norm(st.d) for st in trace.inner]
    return int(np.argmin(slopes))


def ssc(x, g, method, state, dom: Domain, L: float, *,
        record_slopes=False, max_inner=INNER_CAP):
    """Run one chain from x with frozen ascent vector g = -grad f(x).

    Returns (exit point, ChainTrace, updated method state).  The linear
    minimizer for g is computed once per call and reused by every oracle
    query (the gradient never changes inside the chain).
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    if not L > 0:
        raise ValueError("L must be positive")
    region = StepRegion(x=x, g=g, L=L)
    trace = ChainTrace()
    cache = {}
    y = x.copy()
    for j in range(max_inner):
        choice = method.choose(dom, y, g, state, cache)
        if choice.is_zero:
            trace.y_final = y
            trace.case = TerminationCase.CASE1
            trace.tilde_index = auxiliary_index(trace, g)
            return y, trace, state

        ratio = None
        if record_slopes:
            _, pi = dom.tangent_projection(y, g)
            nd = float(np.linalg.norm(choice.d))
            ratio = choice.gdot / (pi * nd) if pi > 0 and nd > 0 else np.inf

        b1 = _ball_exit(y, choice.d, region.descent_center, region.descent_radius)
        r_j = region.slope_radius(choice.d)
        inside = (region.in_descent_ball(y)
                  and float(np.linalg.norm(y - x)) <= r_j * (1.0 + MEMBER_TOL))
        if not inside:
            beta = 0.0
            b2 = 0.0
        else:
            b2 = _ball_exit(y, choice.d, x, r_j)
            beta = max(min(b1, b2), 0.0)
        alpha = min(choice.alpha_max, beta)

        if alpha <= 0.0:
            trace.y_final = y
            trace.case = TerminationCase.CASE2
            trace.tilde_index = auxiliary_index(trace, g)
            return y, trace, state

        maximal = choice.alpha_max <= beta
        y_next = y + alpha * choice.d
        trace.inner.append(InnerStep(y=y, d=choice.d, alpha=alpha, beta=beta,
                                     alpha_max=choice.alpha_max, maximal=maximal,
                                     gdot=choice.gdot, slope_ratio=ratio))
        state = method.update(state, choice, alpha, maximal)

        if beta <= choice.alpha_max:          # alpha == beta: region exit
            # classify by which ball produced the binding exit
            if b1 <= b2 * (1.0 + ACTIVE_TOL):
                trace.case = TerminationCase.CASE4
            else:
                trace.case = TerminationCase.CASE3
            trace.y_final = y_next
            trace.tilde_index = auxiliary_index(trace, g)
            return y_next, trace, state
        y = y_next
    raise NonTerminationError(f"chain exceeded {max_inner} inner steps")


# ---------------------------------------------------------------------------
# outer loop


def outer_solve(obj: Objective, dom: Domain, method, x0, *,
                tau: float, eps_stat: float = 1e-8, max_iter: int = 1000,
                improve: Optional[Callable] = None,
                record_slopes: bool = False,
                config_hash: str = "adhoc") -> RunTrace:
    """First-order method with chained short steps.

    Each outer iteration freezes g = -grad f(x_k), runs one chain, takes its
    output (or a caller-supplied improvement validated against
    f(x+) <= min(f(chain out), f(x_k) - L/2 ||x+ - x_k||^2)), and stops when
    the stationarity proxy ||chain out - x_k|| / K with K = tau/(L(1+tau))
    drops to eps_stat, a chain detects stationarity, or max_iter is hit.
    """
    x0 = np.asarray(x0, dtype=float)
    if not dom.contains(x0):
        raise InfeasiblePointError("x0 infeasible")
    L = obj.lipschitz_L
    K = tau / (L * (1.0 + tau))
    state = method.init_state(dom, x0)
    records = []
    x = x0.copy()
    t_run = time.perf_counter()
    for k in range(max_iter):
        t0 = time.perf_counter()
        g = -obj.gradient(x)
        x_out, trace, state = ssc(x, g, method, state, dom, L,
                                  record_slopes=record_slopes)
        x_aux = trace.x_aux
        _, pi_aux = dom.tangent_projection(x_aux, -obj.gradient(x_aux))
        stationary = trace.case == TerminationCase.CASE1 and trace.T == 0
        if stationary and records and K * pi_aux > 1e-8 * (1.0 + abs(records[0].f)):
            # the oracle found no direction it can resolve at working
            # precision, but pi is not yet small enough to certify a
            # stationary record; end the run on the previous record
            break
        case = TerminationCase.STATIONARY if stationary else trace.case
        records.append(OuterStepRecord(
            k=k, x=x, x_out=x_out, x_aux=x_aux, f=obj.value(x),
            inner_steps=trace.T, case=case, pi_aux=pi_aux,
            ssc_trace=trace, g=g,
            wall_ms=(time.perf_counter() - t0) * 1e3))
        if stationary:
            break
        x_next = x_out
        if improve is not None:
            cand = np.asarray(improve(x, x_out, g), dtype=float)
            bound = min(obj.value(x_out),
                        obj.value(x) - 0.5 * L * float(np.sum((cand - x) ** 2)))
            if dom.contains(cand) and obj.value(cand) <= bound + 1e-12 * (1.0 + abs(bound)):
                x_next = cand
                # active sets tracked through the chain describe x_out, not
                # the improved point; rebuild them at the accepted iterate
                if getattr(method, "needs_active_set", False):
                    state = method.init_state(dom, x_next)
        proxy = float(np.linalg.norm(x_out - x)) / K
        x = x_next
        if proxy <= eps_stat:
            break
    return RunTrace(records=records, config_hash=config_hash,
                    wall_time=time.perf_counter() - t_run)


# ---------------------------------------------------------------------------
# descent certification


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst_violation: float
    failures: list = field(default_factory=list)   # offending k indices


@dataclass
class DescentReport:
    checks: list
    tau: float
    K: float
    tol: float

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def summary(self):
        return {c.name: {"passed": c.passed, "worst_violation": c.worst_violation}
                for c in self.checks}


def verify_descent(run: RunTrace, obj: Objective, dom: Domain, tau: float) -> DescentReport:
    """Check the per-iteration descent inequalities on a completed run.

    With K = tau/(L(1+tau)) and tol = 1e-8 (1 + |f(x0)|):
      sufficient_decrease   f(x_k) - f(out_k)   >= (L/2)||x_k - out_k||^2 - tol
      aux_slope             ||x_k - out_k||     >= K pi_aux_k - tol
      aux_sandwich          f(out_k) <= f(aux_k) <= f(x_k) - (L/2)||x_k - aux_k||^2 + tol
      gap_decrease          f(x_k) - f(out_k)   >= (L/2) K^2 pi_aux_k^2 - tol
      rate_bound            min_{i<=k} ||out_i - x_i||/K
                               <= sqrt(2 (f(x0) - f(out_k)) / (K^2 L (k+1))) + tol
    gap_decrease is the projected-gradient decrease condition with its
    descent-sequence constants a = L/2, b = 1/K (the auxiliary slope bound
    reads pi_aux <= (1/K)||step||, so 1/K plays the subgradient-bound role;
    a/b^2 = (L/2)K^2).  f(out_k) lower-bounds every admissible next iterate
    value, so the running-min bound is valid at each k for any step-4
    improvement.
    """
    L = obj.lipschitz_L
    K = tau / (L * (1.0 + tau))
    recs = run.records
    f0 = recs[0].f
    tol = 1e-8 * (1.0 + abs(f0))

    checks = {name: CheckResult(name, True, 0.0) for name in
              ("f_consistent", "sufficient_decrease", "aux_slope",
               "aux_sandwich", "gap_decrease", "rate_bound")}

    def record(name, k, violation):
        c = checks[name]
        if violation > tol:
            c.passed = False
            c.failures.append(k)
        c.worst_violation = max(c.worst_violation, violation)

    running_min = np.inf
    for r in recs:
        step2 = float(np.sum((r.x - r.x_out) ** 2))
        f_out = obj.value(r.x_out)
        record("f_consistent", r.k, abs(r.f - obj.value(r.x)))
        record("sufficient_decrease", r.k, 0.5 * L * step2 - (r.f - f_out))
        record("aux_slope", r.k, K * r.pi_aux - np.sqrt(step2))
        f_aux = obj.value(r.x_aux)
        aux2 = float(np.sum((r.x - r.x_aux) ** 2))
        v = max(f_out - f_aux, f_aux - (r.f - 0.5 * L * aux2))
        record("aux_sandwich", r.k, v)
        record("gap_decrease", r.k,
               0.5 * L * (K * r.pi_aux) ** 2 - (r.f - f_out))
        running_min = min(running_min, np.sqrt(step2) / K)
        bound = np.sqrt(2.0 * max(f0 - f_out, 0.0) / (K * K * L * (r.k + 1)))
        record("rate_bound", r.k, running_min - bound)

    return DescentReport(checks=list(checks.values()), tau=tau, K=K, tol=tol)


def min_observed_slope(run: RunTrace) -> float:
    """Smallest slope ratio over every recorded direction selection.

    A valid per-run constant for the descent certificates: the chain
    analysis only invokes the slope condition at selections actually made.
    Requires the run to have been produced with record_slopes=True.
    """
    worst = np.inf
    for r in run.records:
        tr = r.ssc_trace
        if tr is None:
            raise ValueError("run carries no inner traces")
        for st in tr.inner:
            if st.slope_ratio is None:
                raise ValueError("run was not recorded with record_slopes=True")
            worst = min(worst, st.slope_ratio)
    return worst
