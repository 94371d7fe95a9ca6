"""Problem generation, configuration, trace persistence, and batch
certification reports.

Config files are versioned JSON (schema 1).  Traces persist as CSV with one
row per outer iteration and columns

    k,f,gap_proxy,inner_steps,case,pi_tilde,cum_len,wall_ms

(LF line endings, '.' decimal separator, 17 significant digits), next to a
summary JSON carrying the constants (L, tau, K) needed to re-check the
persisted inequalities.  Identical (config, seed) re-runs reproduce every
column except wall_ms bit for bit.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import rates
from .core import Objective, RunTrace, quadratic_objective
from .directions import (AwayFrankWolfe, PairwiseFrankWolfe, ProductRule,
                         ShortRetraction, make_method)
from .domains import Box, L1Ball, LpBall, ProductDomain, Simplex, SublevelSet
from .ssc import min_observed_slope, outer_solve, verify_descent

SCHEMA_VERSION = 1
TRACE_COLUMNS = ["k", "f", "gap_proxy", "inner_steps", "case", "pi_tilde",
                 "cum_len", "wall_ms"]


class ConfigError(ValueError):
    pass


@dataclass
class ProblemConfig:
    name: str
    domain: dict
    objective: dict
    method: dict
    eps_stat: float = 1e-8
    max_iter: int = 1000
    tau: dict = field(default_factory=lambda: {"source": "theoretical"})
    seed: int = 0
    l_override: Optional[float] = None
    schema: int = SCHEMA_VERSION

    @staticmethod
    def from_json(path):
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        return ProblemConfig.from_dict(raw)

    @staticmethod
    def from_dict(raw):
        if raw.get("schema") != SCHEMA_VERSION:
            raise ConfigError(f"config schema must be {SCHEMA_VERSION}")
        known = {"name", "domain", "objective", "method", "eps_stat",
                 "max_iter", "tau", "seed", "l_override", "schema"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return ProblemConfig(**raw)

    def canonical_json(self):
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    def hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# domain / objective / method construction


def build_domain(spec: dict):
    fam = spec.get("family")
    if fam == "simplex":
        return Simplex(scale=float(spec.get("scale", 1.0)), dim=int(spec["dim"]))
    if fam == "l1ball":
        return L1Ball(scale=float(spec.get("scale", 1.0)), dim=int(spec["dim"]))
    if fam == "box":
        return Box(scale=float(spec.get("scale", 1.0)), dim=int(spec["dim"]))
    if fam == "sublevel":
        dim = int(spec["dim"])
        if "matrix" in spec:
            H = np.asarray(spec["matrix"], dtype=float)
        else:
            H = random_spd(int(spec.get("seed", 0)), float(spec.get("mu", 1.0)),
                           float(spec.get("l", 1.0)), dim)
        center = np.asarray(spec.get("center", np.zeros(dim)), dtype=float)
        return SublevelSet(H, center=center, level=float(spec.get("level", 0.5)))
    if fam == "lpball":
        return LpBall(p=float(spec["p"]), radius=float(spec.get("radius", 1.0)),
                      dim=int(spec["dim"]))
    if fam == "product":
        return ProductDomain([build_domain(b) for b in spec["blocks"]])
    raise ConfigError(f"unknown domain family {fam!r}")


def build_method(spec: dict, domain=None):
    name = spec.get("name")
    if name == "sor":
        return ShortRetraction(tau_bar=float(spec.get("tau_bar", 0.5)),
                               nu_hat=float(spec.get("nu_hat", 1.0)))
    if name == "product":
        blocks = [build_method(b) for b in spec["blocks"]]
        return ProductRule(blocks, mode=spec.get("mode", "case2"))
    if name in ("fw", "afw", "pfw", "fdfw"):
        return make_method(name)
    raise ConfigError(f"unknown method {spec.get('name')!r}")


def validate_admissible(dom, method):
    if isinstance(method, ShortRetraction) and not isinstance(dom, (SublevelSet, LpBall)):
        raise ConfigError("sor requires a smooth-boundary domain")
    if isinstance(method, (AwayFrankWolfe, PairwiseFrankWolfe)) and \
            not isinstance(dom, (Simplex, L1Ball, Box)):
        raise ConfigError("afw/pfw require an atom polytope")
    if isinstance(method, ProductRule):
        if not isinstance(dom, ProductDomain):
            raise ConfigError("product method requires a product domain")
        if len(method.block_methods) != len(dom.blocks):
            raise ConfigError("one block method per block domain required")
        for b, m in zip(dom.blocks, method.block_methods):
            validate_admissible(b, m)


def random_spd(seed: int, mu: float, L: float, n: int) -> np.ndarray:
    """Symmetric matrix with spectrum in [mu, L] (endpoints pinned),
    deterministic in the seed."""
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    Qmat, _ = np.linalg.qr(A)
    if n == 1:
        evs = np.array([L])
    else:
        evs = np.sort(rng.uniform(mu, L, size=n))
        evs[0], evs[-1] = mu, L
    return (Qmat * evs) @ Qmat.T


def random_indefinite(seed: int, n: int, lo: float = -1.0, hi: float = 10.0) -> np.ndarray:
    """Symmetric matrix with at least one negative eigenvalue, by
    construction (smallest eigenvalue pinned at lo < 0)."""
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    Qmat, _ = np.linalg.qr(A)
    evs = np.sort(rng.uniform(lo, hi, size=n))
    evs[0] = lo
    return (Qmat * evs) @ Qmat.T


def named_objective(name: str, dim: int, params=None) -> Objective:
    """Named smooth test functions with documented Lipschitz constants.

    double_well: f(x) = sum (x_i^2 - 1)^2 / 4, nonconvex; the stated L is
    valid on the box [-s, s]^dim for s = params.get("span", 2).
    """
    params = params or {}
    if name == "double_well":
        span = float(params.get("span", 2.0))
        L = 3.0 * span * span + 1.0

        def f(x):
            return float(np.sum((x * x - 1.0) ** 2) / 4.0)

        def grad(x):
            return (x * x - 1.0) * x

        return Objective(f=f, grad=grad, lipschitz_L=L)
    raise ConfigError(f"unknown named objective {name!r}")


def build_objective(spec: dict, dim: int) -> Objective:
    kind = spec.get("kind", "quadratic")
    if kind == "named":
        return named_objective(spec["name"], dim, spec.get("params"))
    if kind != "quadratic":
        raise ConfigError(f"unknown objective kind {kind!r}")
    qspec = spec.get("q", {"source": "explicit"})
    src = qspec.get("source", "explicit")
    if src == "explicit":
        Q = np.asarray(qspec["matrix"], dtype=float)
    elif src == "random-spd":
        Q = random_spd(int(qspec.get("seed", 0)), float(qspec.get("mu", 1.0)),
                       float(qspec.get("l", 10.0)), dim)
    elif src == "random-indefinite":
        Q = random_indefinite(int(qspec.get("seed", 0)), dim)
    else:
        raise ConfigError(f"unknown Q source {src!r}")
    bspec = spec.get("b", {"values": [0.0] * dim})
    if "values" in bspec:
        b = np.asarray(bspec["values"], dtype=float)
    else:
        rng = np.random.default_rng(int(bspec.get("seed", 0)))
        b = rng.normal(scale=float(bspec.get("scale", 1.0)), size=dim)
    return quadratic_objective(Q, b)


def default_start(dom) -> np.ndarray:
    """Barycenter for simplex/box, the center point otherwise."""
    if isinstance(dom, Simplex):
        return np.full(dom.dim, dom.scale / dom.dim)
    if isinstance(dom, Box):
        return np.full(dom.dim, dom.scale / 2.0)
    if isinstance(dom, L1Ball) or isinstance(dom, LpBall):
        return np.zeros(dom.dim)
    if isinstance(dom, SublevelSet):
        return dom.center.copy()
    if isinstance(dom, ProductDomain):
        return np.concatenate([default_start(b) for b in dom.blocks])
    raise ConfigError(f"no default start for {type(dom).__name__}")


def generate_problem(config: ProblemConfig):
    """(objective, domain, x0), deterministic in the config seed."""
    dom = build_domain({**config.domain, "seed": config.domain.get("seed", config.seed)})
    obj = build_objective({**config.objective}, dom.dim)
    if config.l_override is not None:
        obj = Objective(f=obj.f, grad=obj.grad, lipschitz_L=float(config.l_override))
    x0 = default_start(dom)
    return obj, dom, x0


def resolve_tau(config: ProblemConfig, dom, method, run=None) -> float:
    src = config.tau.get("source", "theoretical")
    if src == "user":
        return float(config.tau["value"])
    if src == "theoretical":
        return rates.theoretical_tau(dom, method, pwidth=config.tau.get("pwidth"))
    if src == "observed":
        if run is None:
            raise ConfigError("observed tau needs a completed recorded run")
        return min_observed_slope(run)
    raise ConfigError(f"unknown tau source {src!r}")


# ---------------------------------------------------------------------------
# solve + persistence


def run_config(config: ProblemConfig, record_slopes=None):
    """Solve the configured problem.  Returns (run, obj, dom, method, tau).

    For tau source "observed" the stopping proxy uses the running minimum of
    the observed slope ratios and the reported tau is the final minimum.
    """
    obj, dom, x0 = generate_problem(config)
    method = build_method(config.method)
    validate_admissible(dom, method)
    observed = config.tau.get("source") == "observed"
    if record_slopes is None:
        record_slopes = observed
    if observed and not record_slopes:
        raise ConfigError("observed tau requires slope recording")
    tau0 = 0.5 if observed else resolve_tau(config, dom, method)
    run = outer_solve(obj, dom, method, x0, tau=tau0,
                      eps_stat=config.eps_stat, max_iter=config.max_iter,
                      record_slopes=record_slopes,
                      config_hash=config.hash())
    tau = min_observed_slope(run) if observed else tau0
    return run, obj, dom, method, tau


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_trace_csv(path, run: RunTrace, obj: Objective, tau: float):
    L = obj.lipschitz_L
    K = tau / (L * (1.0 + tau))
    lines = [",".join(TRACE_COLUMNS)]
    cum = 0.0
    prev_x = None
    for r in run.records:
        if prev_x is not None:
            cum += float(np.linalg.norm(r.x - prev_x))
        prev_x = r.x
        gap_proxy = float(np.linalg.norm(r.x_out - r.x)) / K
        lines.append(",".join([
            str(r.k), _fmt(r.f), _fmt(gap_proxy), str(r.inner_steps),
            r.case.value, _fmt(r.pi_aux), _fmt(cum), _fmt(r.wall_ms)]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_summary_json(path, config: ProblemConfig, run: RunTrace,
                       obj: Objective, tau: float):
    L = obj.lipschitz_L
    K = tau / (L * (1.0 + tau))
    last = run.records[-1]
    summary = {
        "schema": SCHEMA_VERSION,
        "name": config.name,
        "config_hash": run.config_hash,
        "L": L,
        "tau": tau,
        "K": K,
        "iterations": len(run.records),
        "f_first": run.records[0].f,
        "f_last": last.f,
        "termination_case": last.case.value,
        "wall_time_s": run.wall_time,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_trace_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header != TRACE_COLUMNS:
            raise ConfigError(f"unexpected trace columns {header}")
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            rows.append({
                "k": int(parts[0]), "f": float(parts[1]),
                "gap_proxy": float(parts[2]), "inner_steps": int(parts[3]),
                "case": parts[4], "pi_tilde": float(parts[5]),
                "cum_len": float(parts[6]), "wall_ms": float(parts[7])})
    return rows


# ---------------------------------------------------------------------------
# persisted-trace certification (CLI `verify`)


def verify_trace_rows(rows, L: float, K: float):
    """Re-check every inequality recoverable from the persisted columns.

    Named checks (violation > tol = 1e-8 (1+|f_0|) fails the trace):
      f_monotone        f strictly decreasing until the final row
      sufficient_decrease  f_k - f_{k+1} >= (L/2)(K gap_proxy_k)^2
      aux_slope         gap_proxy_k >= pi_tilde_k
      rate_bound        min_{i<=k} gap_proxy_i <= sqrt(2(f_0 - f_{k+1})/(K^2 L (k+1)))
      cum_len_consistent   cum_len_k = sum_{i<k} K gap_proxy_i
      k_contiguous      row indices contiguous from zero
    """
    failures = []
    f0 = rows[0]["f"]
    tol = 1e-8 * (1.0 + abs(f0))
    cum = 0.0
    running = np.inf
    for i, row in enumerate(rows):
        if row["k"] != i:
            failures.append(("k_contiguous", i, float(abs(row["k"] - i))))
        if i > 0:
            cum += K * rows[i - 1]["gap_proxy"]
        if abs(row["cum_len"] - cum) > tol * (1.0 + abs(cum)):
            failures.append(("cum_len_consistent", i, abs(row["cum_len"] - cum)))
        running = min(running, row["gap_proxy"])
        if i + 1 < len(rows):
            nxt = rows[i + 1]
            step = K * row["gap_proxy"]
            v = 0.5 * L * step * step - (row["f"] - nxt["f"])
            if v > tol:
                failures.append(("sufficient_decrease", i, v))
            if nxt["f"] - row["f"] > tol:
                failures.append(("f_monotone", i, nxt["f"] - row["f"]))
            bound = np.sqrt(2.0 * max(f0 - nxt["f"], 0.0) / (K * K * L * (i + 1)))
            if running - bound > tol:
                failures.append(("rate_bound", i, running - bound))
        v = K * (row["pi_tilde"] - row["gap_proxy"])
        if v > tol and row["case"] != "stationary":
            failures.append(("aux_slope", i, v))
    return failures


# ---------------------------------------------------------------------------
# bench


@dataclass
class Report:
    """Per-problem certification summary; every inequality gets a verdict
    with its worst observed violation."""

    name: str
    iterations: int
    f_first: float
    f_last: float
    tau: float
    certifications: dict
    fit_slope: Optional[float] = None
    fit_r2: Optional[float] = None


def log_gap_fit(f_values, f_star):
    """Least-squares slope and R^2 of log10(gap) over the last half of the
    resolvable decay window.

    Rows whose gap has saturated at the float resolution of f carry no
    decay information (runs routinely land on the exact optimum mid-trace
    and then move at rounding scale), so the window is the rows with gap
    above the resolution floor and the fit covers its last half.
    """
    gaps = np.asarray(f_values, dtype=float) - f_star
    floor = rates.gap_resolution_floor(float(f_values[0]), f_star)
    idx = np.nonzero(gaps > floor)[0]
    if idx.size < 6:
        return 0.0, 0.0
    idx = idx[idx.size // 2:]
    ks = idx.astype(float)
    ys = np.log10(gaps[idx])
    A = np.vstack([ks, np.ones_like(ks)]).T
    coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), r2


def bench_one(config: ProblemConfig) -> Report:
    run, obj, dom, method, tau = run_config(config, record_slopes=True)
    report = verify_descent(run, obj, dom, tau)
    certs = report.summary()
    slope_min = min_observed_slope(run)
    certs["slope"] = {"passed": slope_min >= tau - 1e-8,
                      "worst_violation": max(tau - slope_min, 0.0)}
    kl = config.tau.get("kl")
    if kl:
        rc = rates.descent_rate_constants(obj.lipschitz_L, tau)
        desing = rates.Desingularizer(M=float(kl["M"]), theta=float(kl["theta"]),
                                      eta=float(kl.get("eta", np.inf)))
        cert = rates.certify_objective_rate(run, desing, rc, float(kl["f_star"]))
        certs["kl_objective"] = {"passed": cert.passed,
                                 "worst_violation": cert.worst_violation}
    slope, r2 = log_gap_fit(run.f_values, run.records[-1].f)
    return Report(name=config.name, iterations=len(run.records),
                  f_first=run.records[0].f, f_last=run.records[-1].f,
                  tau=tau, certifications=certs, fit_slope=slope, fit_r2=r2)


def bench_suite(configs, max_workers=None) -> list:
    """Run a suite; parallelism capped by SSC_FW_THREADS, results in input
    order regardless of completion order."""
    if max_workers is None:
        max_workers = int(os.environ.get("SSC_FW_THREADS", "1"))
    if max_workers <= 1:
        return [bench_one(c) for c in configs]
    with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as ex:
        return list(ex.map(bench_one, configs))


# ---------------------------------------------------------------------------
# reference solvers (independent of the projection-free stack; used by the
# acceptance suite to obtain f*)


def project_simplex(v, scale=1.0):
    """Euclidean projection onto {x >= 0, sum x = scale} (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - scale
    ks = np.arange(1, v.size + 1)
    cond = u - css / ks > 0
    rho = int(np.nonzero(cond)[0][-1])
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def reference_qp_simplex(Q, b, scale=1.0, tol=1e-12, max_iter=200_000):
    """Accelerated projected gradient (FISTA with restarts) for
    min 0.5 x'Qx - b'x over the simplex; independent reference solver."""
    Q = np.asarray(Q, dtype=float)
    b = np.asarray(b, dtype=float)
    n = b.size
    L = float(np.linalg.eigvalsh(Q)[-1])
    x = np.full(n, scale / n)
    y = x.copy()
    t = 1.0
    for _ in range(max_iter):
        g = Q @ y - b
        x_new = project_simplex(y - g / L, scale)
        if np.linalg.norm(x_new - y) * L <= tol * max(1.0, np.linalg.norm(g)):
            x = x_new
            break
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_new
        if float((y - x_new) @ (x_new - x)) > 0:     # restart
            t_new, mom = 1.0, 0.0
        y = x_new + mom * (x_new - x)
        x, t = x_new, t_new
    return x, 0.5 * float(x @ (Q @ x)) - float(b @ x)
