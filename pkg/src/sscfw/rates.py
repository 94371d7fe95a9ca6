"""Convergence-rate machinery: desingularizing functions, the
one-dimensional worst-case gap recursion, rate certificates for recorded
runs, Hoelder rate envelopes, brute-force pyramidal width on tiny atom
sets, and certified slope constants per (domain, method) pair.

All operations are pure.  KL constants (M, theta) are caller-supplied and
never inferred, except the PL-derived M = 1/sqrt(2 mu) fixture that the
test suite validates numerically before use.  The KL neighborhood data
(delta, eta) cannot be verified without knowing delta; certificates check
the conclusions only and say so in their reports.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import RunTrace
from .domains import Box, Domain, L1Ball, LpBall, ProductDomain, Simplex, SublevelSet


# ---------------------------------------------------------------------------
# desingularizers and rate constants


@dataclass(frozen=True)
class Desingularizer:
    """phi(t) = (M/theta) t^theta on [0, eta), or a general phi' evaluator.

    For the power form phi'(t) = M t^(theta-1) is positive and decreasing on
    (0, eta) for theta in (0, 1/2].  delta (the KL neighborhood radius) is
    optional metadata; certificates treat the neighborhood condition as
    assumed.
    """

    M: Optional[float] = None
    theta: Optional[float] = None
    phi_prime: Optional[Callable[[float], float]] = None
    eta: float = np.inf
    delta: Optional[float] = None

    def __post_init__(self):
        if self.phi_prime is None:
            if self.M is None or self.theta is None:
                raise ValueError("power form needs M and theta")
            if not (self.M > 0 and 0 < self.theta <= 0.5):
                raise ValueError("need M > 0 and theta in (0, 1/2]")

    def dphi(self, t: float) -> float:
        if self.phi_prime is not None:
            return float(self.phi_prime(t))
        if t <= 0.0:
            return np.inf
        return self.M * t ** (self.theta - 1.0)

    def phi(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        if self.phi_prime is None:
            return (self.M / self.theta) * t ** self.theta
        # general form: quadrature of phi' (integrable blow-up at 0)
        from scipy.integrate import quad
        val, _ = quad(self.phi_prime, 0.0, t, limit=200)
        return float(val)


@dataclass(frozen=True)
class RateConstants:
    """Constants (a, b) of the descent-sequence conditions

        f(x_k) - f(x_{k+1}) >= a ||x_{k+1} - x_k||^2,
        pi at the auxiliary point <= b ||x_{k+1} - x_k||,

    entering the recursion through alpha(t) = (b/sqrt(a)) phi'(t)."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("a and b must be positive")

    def alpha_of(self, desing: Desingularizer):
        return lambda t: (self.b / np.sqrt(self.a)) * desing.dphi(t)


def descent_rate_constants(L: float, tau: float) -> RateConstants:
    """Rate constants certified for a chained-short-step run: a = L/2, and
    b = 1/K = L(1+tau)/tau since the certified auxiliary slope bound reads
    pi_aux <= (1/K) ||x_{k+1} - x_k||."""
    if not (L > 0 and tau > 0):
        raise ValueError("need L > 0 and tau > 0")
    return RateConstants(a=L / 2.0, b=L * (1.0 + tau) / tau)


# ---------------------------------------------------------------------------
# worst-case gap recursion


def worst_case_gap(rc: RateConstants, desing: Desingularizer, t: float) -> float:
    """The largest s in [0, t] with s + 1/alpha(s)^2 <= t, where
    alpha(s) = (b/sqrt(a)) phi'(s); 0 when no such s exists.

    The map s -> s + 1/alpha(s)^2 is continuous and strictly increasing, so
    bisection is unconditionally robust, including at the degenerate branch
    where the feasible set is empty.  Residual <= 1e-13 (1 + t).
    """
    if not (0.0 <= t < desing.eta):
        raise ValueError("t outside [0, eta)")
    if t == 0.0:
        return 0.0
    alpha = rc.alpha_of(desing)

    def excess(s):
        a_s = alpha(s)
        if not np.isfinite(a_s) or a_s > 1e150:
            return 0.0
        return 1.0 / (a_s * a_s)

    if excess(0.0) > t:
        return 0.0                     # empty branch: max over the empty set
    lo, hi = 0.0, t
    target = 1e-13 * (1.0 + t)
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        r = mid + excess(mid) - t
        if abs(r) <= target:
            return mid
        if r < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-17 * (1.0 + t):
            break
    return lo


def worst_case_gap_iterates(rc, desing, f0: float, k: int):
    """[f0, sigma(f0), ..., sigma^(k)(f0)]: strictly decreasing until 0."""
    if not (0.0 <= f0 < desing.eta):
        raise ValueError("f0 outside [0, eta)")
    out = [float(f0)]
    for _ in range(k):
        out.append(worst_case_gap(rc, desing, out[-1]))
    return out


# ---------------------------------------------------------------------------
# run certificates


@dataclass
class RateCertificate:
    name: str
    per_k: list                      # bool per iteration
    worst_violation: float
    note: str = ("KL neighborhood condition (delta, eta) assumed, not "
                 "verified; conclusions checked only")

    @property
    def passed(self):
        return all(self.per_k)


def certify_objective_rate(run: RunTrace, desing: Desingularizer,
                           rc: RateConstants, f_star: float) -> RateCertificate:
    """Check f(x_k) - f* <= sigma^(k)(f(x_0) - f*) + tol for every k."""
    fs = run.f_values
    if f_star > fs.min() + 1e-12 * (1.0 + abs(f_star)):
        raise ValueError("f_star must lower-bound the recorded values")
    tol = 1e-9 * (1.0 + abs(fs[0]))
    gap0 = max(fs[0] - f_star, 0.0)
    env = worst_case_gap_iterates(rc, desing, gap0, len(fs) - 1)
    per_k, worst = [], 0.0
    for k, f in enumerate(fs):
        v = (f - f_star) - env[k]
        per_k.append(v <= tol)
        worst = max(worst, v)
    return RateCertificate("objective_rate", per_k, worst)


def gap_resolution_floor(f0: float, f_star: float) -> float:
    """Smallest objective gap float arithmetic can still resolve against
    the recorded f values; below it the rate inequalities compare noise."""
    return 64.0 * np.finfo(float).eps * (1.0 + abs(f0) + abs(f_star))


def certify_tail_length(run: RunTrace, desing: Desingularizer,
                        rc: RateConstants, f_star: float) -> RateCertificate:
    """Check the tail-length bound
    sum_{i>=k} ||x_{i+1} - x_i|| <= (b/a) phi(gap_k) + 2 sqrt((gap_k -
    sigma(gap_k))/a) + tol at every k (computed iterates only).

    Rows whose measured gap sits below the float-resolution floor are
    reported as passing: there the right side is built from a saturated
    gap while the iterates still move at rounding scale, so the
    exact-arithmetic inequality is not observable.
    """
    recs = run.records
    fs = run.f_values
    tol = 1e-9 * (1.0 + abs(fs[0]))
    floor = gap_resolution_floor(fs[0], f_star)
    steps = [float(np.linalg.norm(recs[i + 1].x - recs[i].x))
             for i in range(len(recs) - 1)]
    tails = np.concatenate([np.cumsum(steps[::-1])[::-1], [0.0]]) if steps else np.zeros(1)
    per_k, worst = [], 0.0
    for k in range(len(recs)):
        gap = max(fs[k] - f_star, 0.0)
        if gap < floor and k > 0:
            per_k.append(True)
            continue
        sig = worst_case_gap(rc, desing, gap)
        rhs = (rc.b / rc.a) * desing.phi(gap) + 2.0 * np.sqrt(max(gap - sig, 0.0) / rc.a)
        v = tails[k] - rhs
        per_k.append(v <= tol)
        worst = max(worst, v)
    return RateCertificate("tail_length", per_k, worst)


def holder_envelope(theta: float, M: float, a: float, b: float, k: int,
                    f0: float = 0.0) -> float:
    """Predicted gap envelope at iteration k.

    theta = 1/2: the geometric multiplier (1 + a/(b^2 M^2))^(-k).
    theta < 1/2: P / (k+1)^r with r = 1/(1-2 theta) and
    P = max(f0, (2^(r+2) r b^2 M^2 / a)^r).
    """
    if not (0.0 < theta <= 0.5):
        raise ValueError("theta must lie in (0, 1/2]")
    if theta == 0.5:
        return float((1.0 + a / (b * b * M * M)) ** (-k))
    r = 1.0 / (1.0 - 2.0 * theta)
    P = max(f0, (2.0 ** (r + 2.0) * r * b * b * M * M / a) ** r)
    return float(P / (k + 1.0) ** r)


# ---------------------------------------------------------------------------
# brute-force pyramidal width (tiny atom sets only; test fixture currency)


def _proper_weights(atoms, subset, x, tol=1e-9):
    """Weights making x a strictly positive convex combination of
    atoms[subset], or None.  Solved as a max-min-weight LP."""
    from scipy.optimize import linprog
    sub = atoms[list(subset)]
    k, n = sub.shape
    # variables: w (k), t; maximize t s.t. sub'w = x, 1'w = 1, w - t >= 0
    c = np.zeros(k + 1)
    c[-1] = -1.0
    A_eq = np.zeros((n + 1, k + 1))
    A_eq[:n, :k] = sub.T
    A_eq[n, :k] = 1.0
    b_eq = np.concatenate([x, [1.0]])
    A_ub = np.zeros((k, k + 1))
    A_ub[:, :k] = -np.eye(k)
    A_ub[:, -1] = 1.0
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(k), A_eq=A_eq, b_eq=b_eq,
                  bounds=[(None, None)] * k + [(None, None)], method="highs")
    if not res.success or res.x is None:
        return None
    w, t = res.x[:k], res.x[-1]
    if t <= tol:
        return None
    return w


def _is_face(atoms, subset, tol=1e-7):
    """True when conv(atoms[subset]) is a face of conv(atoms): a supporting
    functional is constant on the subset and strictly smaller elsewhere."""
    from scipy.optimize import linprog
    m, n = atoms.shape
    inside = list(subset)
    outside = [i for i in range(m) if i not in subset]
    if not outside:
        return True                    # the improper face (whole hull)
    # variables w (n), c; <w, a_i> = c on the face, <w, a_o> <= c - 1 off it
    nv = n + 1
    A_eq = np.zeros((len(inside), nv))
    for r, i in enumerate(inside):
        A_eq[r, :n] = atoms[i]
        A_eq[r, n] = -1.0
    A_ub = np.zeros((len(outside), nv))
    for r, o in enumerate(outside):
        A_ub[r, :n] = atoms[o]
        A_ub[r, n] = -1.0
    res = linprog(np.zeros(nv), A_ub=A_ub, b_ub=-np.ones(len(outside)),
                  A_eq=A_eq, b_eq=np.zeros(len(inside)),
                  bounds=[(None, None)] * nv, method="highs")
    return bool(res.success)


def _simplex_lattice(k, resolution):
    """All barycentric weight vectors with denominator `resolution`."""
    if k == 1:
        return [np.array([1.0])]
    out = []
    for comp in itertools.combinations_with_replacement(range(k), resolution):
        w = np.zeros(k)
        for c in comp:
            w[c] += 1.0
        out.append(w / resolution)
    return out


def _sphere_grid(n, count):
    """Deterministic direction grid (low-discrepancy on the sphere)."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    ii = np.arange(1, count + 1, dtype=float)
    pts = np.empty((count, n))
    primes = [2, 3, 5, 7, 11, 13, 17][: n]
    for j, p in enumerate(primes):
        # van der Corput radical inverse -> Gaussian via inverse transform
        vdc = np.array([_radical_inverse(int(i), p) for i in ii])
        from scipy.special import ndtri
        pts[:, j] = ndtri(np.clip(vdc, 1e-12, 1 - 1e-12))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return pts


def _radical_inverse(i, base):
    f, r = 1.0, 0.0
    while i > 0:
        f /= base
        r += f * (i % base)
        i //= base
    return r


def pyramidal_width_bruteforce(atoms, grid: int = 4) -> float:
    """Enumerate faces, sample face points / directions / active sets, and
    return the smallest min-max pyramidal directional width found.

    Limits: at most 8 atoms in dimension at most 4.  The result converges
    to the true width as the grid refines and is used to instantiate slope
    constants in tests; single-atom input is degenerate (no admissible
    direction) and reported as +inf.
    """
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    m, n = atoms.shape
    if m > 8 or n > 4:
        raise ValueError("brute force limited to <= 8 atoms in dimension <= 4")
    if m == 1:
        return np.inf

    sphere = _sphere_grid(n, 64)
    best = np.inf
    for size in range(1, m + 1):
        for subset in itertools.combinations(range(m), size):
            if not _is_face(atoms, subset):
                continue
            face_atoms = atoms[list(subset)]
            k = face_atoms.shape[0]
            if k == 1:
                continue               # vertex face: cone(F - x) = {0}
            # subsets of the face usable as active sets are enumerated per x
            for w in _simplex_lattice(k, grid):
                x = w @ face_atoms
                edges = face_atoms - x
                keep = np.linalg.norm(edges, axis=1) > 1e-12
                if not np.any(keep):
                    continue
                edges = edges[keep]
                gs = [e for e in edges]
                for lam in _simplex_lattice(edges.shape[0], 2):
                    gs.append(lam @ edges)
                for v in sphere:
                    if _in_cone(v, edges):
                        gs.append(v)
                sets_x = []
                for ssize in range(1, k + 1):
                    for sub2 in itertools.combinations(range(k), ssize):
                        if _proper_weights(face_atoms, sub2, x) is not None:
                            sets_x.append(face_atoms[list(sub2)])
                if not sets_x:
                    continue
                for gvec in gs:
                    ng = np.linalg.norm(gvec)
                    if ng <= 1e-12:
                        continue
                    ghat = gvec / ng
                    proj = face_atoms @ ghat
                    hi = proj.max()
                    pdir = min(hi - min(S @ ghat) for S in sets_x)
                    if pdir > 1e-12:
                        best = min(best, pdir)
    return float(best)


def _in_cone(v, edges, tol=1e-9):
    """v in cone(edges), tested by nonnegative least squares residual."""
    from scipy.optimize import nnls
    try:
        coef, resid = nnls(edges.T, v)
    except Exception:
        return False
    return resid <= tol * max(1.0, np.linalg.norm(v))


# ---------------------------------------------------------------------------
# certified slope constants


def lp_fdfw_tau_estimate(dom: LpBall, refine: int = 60) -> float:
    """Deterministic lower estimate of the in-face Frank-Wolfe slope
    constant on an Lp ball with p != 2 (no closed form is available):
    min of the interior width/(2 diam) bound and a refined minimization of
    the boundary normal-map ratio, scaled by a 0.85 safety margin.
    """
    n, p, r = dom.dim, dom.p, dom.radius
    q = dom.q
    interior = min(1.0, n ** (1.0 / q - 0.5)) / (2.0 * max(1.0, n ** (0.5 - 1.0 / p)))

    def ratio(x, y):
        jy = dom.defining_gradient(y)
        jy = jy / np.linalg.norm(jy)
        diff = y - x
        nd = np.linalg.norm(diff)
        if nd <= 1e-12 * r:
            return np.inf
        tang, pi = dom.tangent_projection(x, jy)
        if pi <= 1e-14:
            return np.inf
        return float(jy @ diff) / (pi * nd)

    def to_sphere(z):
        nz = np.sum(np.abs(z) ** p) ** (1.0 / p)
        return r * z / nz

    # coarse deterministic boundary pairs, then local coordinate refinement
    base = _sphere_grid(n, 160)
    pairs = []
    worst = np.inf
    for i in range(len(base)):
        for j in range(i + 1, len(base)):
            x = to_sphere(base[i])
            y = to_sphere(base[j])
            v = ratio(x, y)
            if v < worst:
                worst = v
                pairs = [(x, y)]
    if pairs:
        x, y = pairs[0]
        step = 0.3
        for _ in range(refine):
            improved = False
            for vec, other in ((0, 1), (1, 0)):
                pt = [x, y][vec]
                for axis in range(n):
                    for s in (+step, -step):
                        cand = pt.copy()
                        cand[axis] += s * r
                        cand = to_sphere(cand)
                        trial = ratio(cand, y) if vec == 0 else ratio(x, cand)
                        if trial < worst - 1e-12:
                            worst = trial
                            if vec == 0:
                                x = cand
                            else:
                                y = cand
                            improved = True
            if not improved:
                step *= 0.5
                if step < 1e-4:
                    break
    return 0.85 * min(interior, worst)


def theoretical_tau(dom: Domain, method, pwidth: Optional[float] = None) -> float:
    """Certified slope constant for a supported (domain, method) pair.

    Polytopes need the pyramidal width of their atom set (brute-forced on
    tiny instances or caller-supplied): pairwise -> PW/D, away -> PW/(2D),
    in-face -> PW(V)/(2D).  Quadratic sublevel sets: mu/(2L) for plain or
    in-face Frank-Wolfe (plain holds on the boundary only).  Short
    retractions: tau_bar.  Products: min block constant (case1) or
    min/(number of blocks) (case2).  Lp balls with in-face FW: exact 1/2
    for p = 2, a documented numerical lower estimate otherwise.
    """
    from .directions import (AwayFrankWolfe, FaceFrankWolfe, FrankWolfe,
                             PairwiseFrankWolfe, ProductRule, ShortRetraction)

    if isinstance(dom, ProductDomain):
        if not isinstance(method, ProductRule):
            raise ValueError("product domains need a ProductRule method")
        taus = [theoretical_tau(b, m) for b, m in zip(dom.blocks, method.block_methods)]
        t = min(taus)
        return t if method.mode == "case1" else t / len(dom.blocks)

    if isinstance(dom, (Simplex, L1Ball, Box)):
        if isinstance(method, (AwayFrankWolfe, PairwiseFrankWolfe, FaceFrankWolfe)):
            if pwidth is None:
                pwidth = pyramidal_width_bruteforce(dom.vertices())
            D = dom.diameter()
            if D <= 0.0:
                raise ValueError("degenerate domain (zero diameter)")
            if isinstance(method, PairwiseFrankWolfe):
                return pwidth / D
            return pwidth / (2.0 * D)
        raise ValueError(f"unsupported pair ({type(dom).__name__}, {type(method).__name__})")

    if isinstance(dom, SublevelSet):
        if isinstance(method, (FrankWolfe, FaceFrankWolfe)):
            return dom.mu_h / (2.0 * dom.L_h)
        if isinstance(method, ShortRetraction):
            return method.tau_bar
        raise ValueError(f"unsupported pair (SublevelSet, {type(method).__name__})")

    if isinstance(dom, LpBall):
        if isinstance(method, ShortRetraction):
            return method.tau_bar
        if isinstance(method, (FrankWolfe, FaceFrankWolfe)):
            if abs(dom.p - 2.0) < 1e-12:
                return 0.5             # the p = 2 ball is {0.5||x||^2 <= r^2/2}
            return lp_fdfw_tau_estimate(dom)
        raise ValueError(f"unsupported pair (LpBall, {type(method).__name__})")

    raise ValueError(f"unsupported domain {type(dom).__name__}")
