"""Feasible-set geometry: linear minimization, minimal faces, feasibility
stepsizes, tangent-cone projections, outward normals, and orthographic
retractions for each supported family.

Supported families
    Simplex(scale, n)        {x >= 0, sum x = scale}
    L1Ball(scale, n)         {||x||_1 <= scale}
    Box(scale, n)            [0, scale]^n
    SublevelSet(H, c, a)     {0.5 (x-c)'H(x-c) <= a}, H symmetric positive definite
    LpBall(p, r, n)          {||x||_p <= r}, p in (1, inf)
    ProductDomain(blocks)    cartesian product of the above

Domains are immutable after construction; every operation here is a pure
function of its inputs and safe for concurrent callers.

Tolerances: boundary/pinning detection is 1e-12 relative to the domain
scale; feasibility slack for preconditions is 1e-10.  Tie-breaks in linear
minimization are lexicographic (lowest coordinate index, positive sign
preferred) so traces are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

PIN_TOL = 1e-12      # pinned-coordinate / boundary detection, relative to scale
FEAS_TOL = 1e-10     # feasibility slack for preconditions


class InfeasiblePointError(ValueError):
    pass


class RetractionUndefinedError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# face descriptors


@dataclass(frozen=True)
class PolytopeFace:
    """Minimal face of a coordinate polytope: pinned indices and the bound
    value each one sits at (0 for simplex zeros, 0/scale for box)."""

    pinned: tuple
    values: tuple


@dataclass(frozen=True)
class L1Face:
    """Face of the cross-polytope: the whole ball when x is interior, else
    the support-and-sign pattern of the boundary point."""

    full: bool
    support: tuple = ()
    signs: tuple = ()


@dataclass(frozen=True)
class SmoothFace:
    """Interior (face = whole set) or a singleton boundary face at `point`
    (sublevel sets and Lp balls are strictly convex)."""

    interior: bool
    point: Optional[np.ndarray] = None


# ---------------------------------------------------------------------------
# piecewise-linear root helper (exact active-set projection workhorse)


def _hinge_root(base: np.ndarray, hinge: np.ndarray) -> float:
    """Solve sum(base - t) + sum(max(hinge - t, 0)) = 0 for t.

    The left side is continuous, piecewise linear and strictly decreasing
    (slope <= -len(base)), so the root is unique.  Solved exactly by
    scanning sorted hinge breakpoints; this is the closed-form active-set
    solution of the polytope tangent-cone projections.
    """
    base_sum = float(np.sum(base))
    nb = base.size
    if nb == 0:
        raise ValueError("need at least one un-hinged term")
    bp = np.sort(hinge)[::-1]  # descending breakpoints
    # above all breakpoints only base terms are active
    t = base_sum / nb
    if bp.size == 0 or t >= bp[0]:
        return t
    # walk down: after passing breakpoint j, hinges bp[0..j] are active
    run = base_sum
    for j in range(bp.size):
        run += bp[j]
        cnt = nb + j + 1
        t = run / cnt
        upper = bp[j]
        lower = bp[j + 1] if j + 1 < bp.size else -np.inf
        if lower <= t <= upper:
            return t
    return run / (nb + bp.size)


# ---------------------------------------------------------------------------
# base class


class Domain:
    """Base feasible set.  Subclasses fill in the family-specific geometry."""

    dim: int

    # -- feasibility -------------------------------------------------------
    def contains(self, x, tol=FEAS_TOL) -> bool:
        raise NotImplementedError

    def _check_feasible(self, x):
        if not self.contains(x):
            raise InfeasiblePointError(f"point is not feasible for {self!r}")

    # -- oracles -----------------------------------------------------------
    def lmo(self, g: np.ndarray) -> np.ndarray:
        """A maximizer of <s, g> over the set (a vertex for polytopes)."""
        raise NotImplementedError

    def minimal_face(self, x: np.ndarray):
        raise NotImplementedError

    def face_lmo(self, face, g: np.ndarray) -> np.ndarray:
        """argmin of <g, y> over the given face (same tie-break as lmo)."""
        raise NotImplementedError

    def max_feasible_step(self, x: np.ndarray, d: np.ndarray) -> float:
        """Largest alpha >= 0 with x + alpha d feasible (inf if unbounded,
        0 if d exits immediately)."""
        raise NotImplementedError

    def tangent_projection(self, x: np.ndarray, g: np.ndarray):
        """(projection of g onto the tangent cone at x, its norm)."""
        raise NotImplementedError

    def diameter(self) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """count feasible points, one per row (used by Monte Carlo checks)."""
        raise NotImplementedError

    # smooth-boundary extras; polytopes raise
    def outward_normal(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no smooth boundary")

    def orthographic_retraction(self, x, u):
        raise NotImplementedError(f"{type(self).__name__} has no smooth boundary")


def slope_oracle(dom: Domain, x, g, samples: int, seed: int = 0) -> float:
    """Monte Carlo estimate of the best feasible slope of g at x.

    max over sampled feasible h of <g, (h-x)/||h-x||>, clipped below at 0.
    Converges to the tangent-projection norm from below as samples grow;
    test-only cross-check for tangent_projection, deliberately independent
    of it.
    """
    if samples < 1:
        raise ValueError("samples >= 1 required")
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    rng = np.random.default_rng(seed)
    best = 0.0
    left = samples
    while left > 0:
        m = min(left, 200_000)
        H = dom.sample(rng, m)
        diff = H - x
        norms = np.linalg.norm(diff, axis=1)
        ok = norms > 1e-14 * (1.0 + np.linalg.norm(x))
        if np.any(ok):
            vals = (diff[ok] @ g) / norms[ok]
            best = max(best, float(vals.max()))
        left -= m
    return best


# ---------------------------------------------------------------------------
# Simplex


@dataclass(frozen=True)
class Simplex(Domain):
    scale: float
    dim: int

    def __post_init__(self):
        if self.scale <= 0 or self.dim < 1:
            raise ValueError("need scale > 0 and dim >= 1")

    def contains(self, x, tol=FEAS_TOL):
        x = np.asarray(x, dtype=float)
        s = self.scale
        return bool(np.all(x >= -tol * s) and abs(x.sum() - s) <= tol * s * max(1, self.dim))

    def lmo(self, g):
        g = np.asarray(g, dtype=float)
        s = np.zeros(self.dim)
        s[int(np.argmax(g))] = self.scale
        return s

    def minimal_face(self, x):
        self._check_feasible(x)
        x = np.asarray(x, dtype=float)
        pinned = tuple(int(i) for i in np.nonzero(x <= PIN_TOL * self.scale)[0])
        return PolytopeFace(pinned=pinned, values=tuple(0.0 for _ in pinned))

    def face_lmo(self, face, g):
        g = np.asarray(g, dtype=float)
        free = np.setdiff1d(np.arange(self.dim), np.array(face.pinned, dtype=int))
        if free.size == 0:
            raise ValueError("face pins every coordinate; not a simplex face")
        i = free[int(np.argmin(g[free]))]
        out = np.zeros(self.dim)
        out[i] = self.scale
        return out

    def max_feasible_step(self, x, d):
        x = np.asarray(x, dtype=float)
        d = np.asarray(d, dtype=float)
        dnorm = float(np.abs(d).sum())
        if dnorm == 0.0:
            return np.inf
        if abs(d.sum()) > 1e-10 * max(self.scale, dnorm):
            return 0.0  # leaves the affine hull
        neg = d < -1e-14 * np.abs(d).max()
        if not np.any(neg):
            return np.inf
        return float(np.min(np.maximum(x[neg], 0.0) / (-d[neg])))

    def tangent_projection(self, x, g):
        self._check_feasible(x)
        x = np.asarray(x, dtype=float)
        g = np.asarray(g, dtype=float)
        pinned = x <= PIN_TOL * self.scale
        free = ~pinned
        # KKT: t_i = g_i - mu (free), max(g_i - mu, 0) (pinned), sum t = 0
        mu = _hinge_root(g[free], g[pinned])
        t = np.where(free, g - mu, np.maximum(g - mu, 0.0))
        return t, float(np.linalg.norm(t))

    def diameter(self):
        return float(np.sqrt(2.0) * self.scale) if self.dim > 1 else 0.0

    def sample(self, rng, count):
        e = rng.exponential(size=(count, self.dim))
        return self.scale * e / e.sum(axis=1, keepdims=True)

    def vertices(self):
        return self.scale * np.eye(self.dim)


# ---------------------------------------------------------------------------
# L1 ball (cross-polytope)


@dataclass(frozen=True)
class L1Ball(Domain):
    scale: float
    dim: int

    def __post_init__(self):
        if self.scale <= 0 or self.dim < 1:
            raise ValueError("need scale > 0 and dim >= 1")

    def contains(self, x, tol=FEAS_TOL):
        x = np.asarray(x, dtype=float)
        return bool(np.abs(x).sum() <= self.scale * (1 + tol))

    def lmo(self, g):
        g = np.asarray(g, dtype=float)
        i = int(np.argmax(np.abs(g)))
        s = np.zeros(self.dim)
        s[i] = self.scale if g[i] >= 0 else -self.scale
        return s

    def minimal_face(self, x):
        self._check_feasible(x)
        x = np.asarray(x, dtype=float)
        if np.abs(x).sum() < self.scale * (1 - PIN_TOL):
            return L1Face(full=True)
        sup = np.nonzero(np.abs(x) > PIN_TOL * self.scale)[0]
        return L1Face(full=False,
                      support=tuple(int(i) for i in sup),
                      signs=tuple(1 if x[i] > 0 else -1 for i in sup))

    def face_lmo(self, face, g):
        g = np.asarray(g, dtype=float)
        if face.full:
            return self.lmo(-g)
        vals = [face.signs[j] * g[i] for j, i in enumerate(face.support)]
        j = int(np.argmin(vals))
        out = np.zeros(self.dim)
        out[face.support[j]] = face.signs[j] * self.scale
        return out

    def max_feasible_step(self, x, d):
        x = np.asarray(x, dtype=float)
        d = np.asarray(d, dtype=float)
        dnorm = float(np.abs(d).sum())
        if dnorm == 0.0:
            return np.inf
        # phi(a) = ||x + a d||_1 is convex piecewise linear; walk its
        # positive breakpoints until it crosses the radius.  Face-parallel
        # directions have slope 0 up to roundoff, so the slope test needs a
        # relative threshold and the crossing numerator a clamp.
        with np.errstate(divide="ignore", invalid="ignore"):
            bp = np.where(d != 0.0, -x / d, -1.0)
        bp = np.unique(bp[bp > 0.0])
        lo = 0.0
        phi_lo = float(np.abs(x).sum())
        for t in np.append(bp, np.inf):
            mid = lo + 1.0 if not np.isfinite(t) else 0.5 * (lo + t)
            sgn = np.sign(x + mid * d)
            sgn[sgn == 0.0] = np.sign(d)[sgn == 0.0]
            slope = float(sgn @ d)
            if slope > 1e-12 * dnorm:
                cross = lo + max(self.scale - phi_lo, 0.0) / slope
                if cross <= t:
                    return max(cross, 0.0)
            if not np.isfinite(t):
                return np.inf
            phi_lo = float(np.abs(x + t * d).sum())
            if phi_lo > self.scale * (1 + 1e-12):
                # crossed inside the segment despite the slope test
                return max(lo, 0.0)
            lo = t
        return np.inf

    def tangent_projection(self, x, g):
        self._check_feasible(x)
        x = np.asarray(x, dtype=float)
        g = np.asarray(g, dtype=float)
        face = self.minimal_face(x)
        if face.full:
            return g.copy(), float(np.linalg.norm(g))
        sup = np.array(face.support, dtype=int)
        sgn = np.array(face.signs, dtype=float)
        off = np.setdiff1d(np.arange(self.dim), sup)
        # normal cone: v_i = t*s_i on the support, |v_i| <= t elsewhere, t >= 0
        resid = float(np.sum(sgn * g[sup])) + float(np.sum(np.maximum(np.abs(g[off]) - 0.0, 0.0)))
        if resid <= 0.0:
            return g.copy(), float(np.linalg.norm(g))
        t = _hinge_root(sgn * g[sup], np.abs(g[off]))
        if t <= 0.0:
            return g.copy(), float(np.linalg.norm(g))
        v = np.zeros(self.dim)
        v[sup] = t * sgn
        v[off] = np.clip(g[off], -t, t)
        tang = g - v
        return tang, float(np.linalg.norm(tang))

    def diameter(self):
        return 2.0 * self.scale

    def sample(self, rng, count):
        e = rng.exponential(size=(count, self.dim))
        y = e / e.sum(axis=1, keepdims=True)
        signs = rng.integers(0, 2, size=(count, self.dim)) * 2 - 1
        radii = rng.uniform(size=(count, 1)) ** (1.0 / self.dim)
        return self.scale * radii * signs * y

    def vertices(self):
        eye = self.scale * np.eye(self.dim)
        return np.vstack([eye, -eye])


# ---------------------------------------------------------------------------
# Box


@dataclass(frozen=True)
class Box(Domain):
    scale: float
    dim: int

    def __post_init__(self):
        if self.scale <= 0 or self.dim < 1:
            raise ValueError("need scale > 0 and dim >= 1")

    def contains(self, x, tol=FEAS_TOL):
        x = np.asarray(x, dtype=float)
        s = self.scale
        return bool(np.all(x >= -tol * s) and np.all(x <= s * (1 + tol)))

    def lmo(self, g):
        g = np.asarray(g, dtype=float)
        return np.where(g > 0.0, self.scale, 0.0)

    def minimal_face(self, x):
        self._check_feasible(x)
        x = np.asarray(x, dtype=float)
        s = self.scale
        pinned, values = [], []
        for i in range(self.dim):
            if x[i] <= PIN_TOL * s:
                pinned.append(i)
                values.append(0.0)
            elif s - x[i] <= PIN_TOL * s:
                pinned.append(i)
                values.append(s)
        return PolytopeFace(pinned=tuple(pinned), values=tuple(values))

    def face_lmo(self, face, g):
        g = np.asarray(g, dtype=float)
        out = np.where(g < 0.0, self.scale, 0.0)
        for i, v in zip(face.pinned, face.values):
            out[i] = v
        return out

    def max_feasible_step(self, x, d):
        x = np.asarray(x, dtype=float)
        d = np.asarray(d, dtype=float)
        if np.abs(d).max(initial=0.0) == 0.0:
            return np.inf
        thresh = 1e-14 * np.abs(d).max()
        alpha = np.inf
        up = d > thresh
        dn = d < -thresh
        if np.any(up):
            alpha = min(alpha, float(np.min(np.maximum(self.scale - x[up], 0.0) / d[up])))
        if np.any(dn):
            alpha = min(alpha, float(np.min(np.maximum(x[dn], 0.0) / (-d[dn]))))
        return alpha

    def tangent_projection(self, x, g):
        self._check_feasible(x)
        x = np.asarray(x, dtype=float)
        g = np.asarray(g, dtype=float)
        s = self.scale
        t = g.copy()
        low = x <= PIN_TOL * s
        high = s - x <= PIN_TOL * s
        t[low] = np.maximum(g[low], 0.0)
        t[high] = np.minimum(g[high], 0.0)
        return t, float(np.linalg.norm(t))

    def diameter(self):
        return float(np.sqrt(self.dim) * self.scale)

    def sample(self, rng, count):
        return self.scale * rng.uniform(size=(count, self.dim))

    def vertices(self):
        if self.dim > 20:
            raise ValueError("explicit box vertex list limited to dim <= 20")
        n = self.dim
        bits = ((np.arange(2 ** n)[:, None] >> np.arange(n)) & 1).astype(float)
        return self.scale * bits


# ---------------------------------------------------------------------------
# quadratic sublevel set


class SublevelSet(Domain):
    """Omega = {x : h(x) <= a} with h(x) = 0.5 (x-c)' H (x-c), H spd.

    Strong convexity / smoothness constants mu_h, L_h are the extreme
    eigenvalues of H; all line intersections are exact quadratic roots.
    """

    def __init__(self, H, center=None, level=0.5):
        H = np.asarray(H, dtype=float)
        if np.abs(H - H.T).max() > 1e-12 * max(1.0, np.abs(H).max()):
            raise ValueError("H must be symmetric")
        evals, evecs = np.linalg.eigh(H)
        if evals[0] <= 0:
            raise ValueError("H must be positive definite")
        if not level > 0:
            raise ValueError("level must exceed min h = 0")
        self.H = H
        self.dim = H.shape[0]
        self.center = np.zeros(self.dim) if center is None else np.asarray(center, dtype=float)
        self.level = float(level)
        self.mu_h = float(evals[0])
        self.L_h = float(evals[-1])
        self._evals = evals
        self._evecs = evecs

    def __repr__(self):
        return f"SublevelSet(dim={self.dim}, mu={self.mu_h:.3g}, L={self.L_h:.3g}, a={self.level:.3g})"

    def h(self, x):
        d = np.asarray(x, dtype=float) - self.center
        return 0.5 * float(d @ (self.H @ d))

    def grad_h(self, x):
        return self.H @ (np.asarray(x, dtype=float) - self.center)

    def contains(self, x, tol=FEAS_TOL):
        return self.h(x) <= self.level * (1 + tol)

    def on_boundary(self, x, tol=FEAS_TOL):
        return abs(self.h(x) - self.level) <= tol * max(1.0, self.level)

    def lmo(self, g):
        g = np.asarray(g, dtype=float)
        if np.linalg.norm(g) == 0.0:
            return self.center.copy()
        w = self._evecs @ ((self._evecs.T @ g) / self._evals)  # H^{-1} g
        return self.center + w * np.sqrt(2.0 * self.level / float(g @ w))

    def minimal_face(self, x):
        self._check_feasible(x)
        x = np.asarray(x, dtype=float)
        if self.on_boundary(x):
            return SmoothFace(interior=False, point=x.copy())
        return SmoothFace(interior=True)

    def face_lmo(self, face, g):
        if face.interior:
            return self.lmo(-np.asarray(g, dtype=float))
        return face.point.copy()

    def max_feasible_step(self, x, d):
        x = np.asarray(x, dtype=float)
        d = np.asarray(d, dtype=float)
        if np.linalg.norm(d) == 0.0:
            return np.inf
        v = x - self.center
        A = 0.5 * float(d @ (self.H @ d))
        B = float(v @ (self.H @ d))
        C = self.h(x) - self.level
        disc = max(B * B - 4.0 * A * C, 0.0)
        root = (-B + np.sqrt(disc)) / (2.0 * A)
        return max(float(root), 0.0)

    def tangent_projection(self, x, g):
        self._check_feasible(x)
        g = np.asarray(g, dtype=float)
        if not self.on_boundary(x):
            return g.copy(), float(np.linalg.norm(g))
        J = self.outward_normal(x)
        t = g - max(0.0, float(g @ J)) * J
        return t, float(np.linalg.norm(t))

    def outward_normal(self, x):
        if not self.on_boundary(x):
            raise ValueError("outward normal requires a boundary point")
        w = self.grad_h(x)
        return w / np.linalg.norm(w)

    def orthographic_retraction(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if not self.on_boundary(x):
            raise ValueError("retraction base point must be on the boundary")
        J = self.outward_normal(x)
        nu = np.linalg.norm(u)
        if abs(float(u @ J)) > 1e-10 * max(1.0, nu):
            raise ValueError("u must be tangent at x")
        if nu == 0.0:
            return x.copy()
        # h(x + u - tJ) = a is an exact quadratic in t; smallest root >= 0
        v = x + u - self.center
        A = 0.5 * float(J @ (self.H @ J))
        B = -float(v @ (self.H @ J))
        C = 0.5 * float(v @ (self.H @ v)) - self.level
        disc = B * B - 4.0 * A * C
        if disc < 0.0:
            if disc > -1e-12 * max(1.0, B * B):
                disc = 0.0
            else:
                raise RetractionUndefinedError("tangent step too long; no boundary intersection")
        t = (-B - np.sqrt(disc)) / (2.0 * A)
        if t < -1e-9 * max(1.0, nu):
            raise RetractionUndefinedError("first intersection behind the base point")
        return x + u - max(t, 0.0) * J

    def diameter(self):
        return float(2.0 * np.sqrt(2.0 * self.level / self.mu_h))

    def sample(self, rng, count):
        z = rng.normal(size=(count, self.dim))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        radii = rng.uniform(size=(count, 1)) ** (1.0 / self.dim)
        ball = z * radii
        # map unit ball through H^{-1/2} scaled to the level set
        scaled = ball * np.sqrt(2.0 * self.level / self._evals)
        return self.center + scaled @ self._evecs.T


# ---------------------------------------------------------------------------
# Lp ball, p in (1, inf)


class LpBall(Domain):
    def __init__(self, p, radius, dim):
        if not (1.0 < p < np.inf):
            raise ValueError("p must lie in (1, inf)")
        if radius <= 0 or dim < 1:
            raise ValueError("need radius > 0 and dim >= 1")
        self.p = float(p)
        self.q = p / (p - 1.0)
        self.radius = float(radius)
        self.dim = int(dim)

    def __repr__(self):
        return f"LpBall(p={self.p}, r={self.radius}, dim={self.dim})"

    def norm(self, x):
        return float(np.sum(np.abs(np.asarray(x, dtype=float)) ** self.p) ** (1.0 / self.p))

    def contains(self, x, tol=FEAS_TOL):
        return self.norm(x) <= self.radius * (1 + tol)

    def on_boundary(self, x, tol=FEAS_TOL):
        return abs(self.norm(x) - self.radius) <= tol * self.radius

    def defining_gradient(self, x):
        """Gradient of sum |x_i|^p / p, an (unnormalized) outward normal."""
        x = np.asarray(x, dtype=float)
        return np.sign(x) * np.abs(x) ** (self.p - 1.0)

    def lmo(self, g):
        g = np.asarray(g, dtype=float)
        if np.abs(g).max(initial=0.0) == 0.0:
            return np.zeros(self.dim)
        w = np.sign(g) * np.abs(g) ** (self.q - 1.0)
        return self.radius * w / np.sum(np.abs(w) ** self.p) ** (1.0 / self.p)

    def minimal_face(self, x):
        self._check_feasible(x)
        x = np.asarray(x, dtype=float)
        if self.on_boundary(x):
            return SmoothFace(interior=False, point=x.copy())
        return SmoothFace(interior=True)

    def face_lmo(self, face, g):
        if face.interior:
            return self.lmo(-np.asarray(g, dtype=float))
        return face.point.copy()

    def max_feasible_step(self, x, d):
        x = np.asarray(x, dtype=float)
        d = np.asarray(d, dtype=float)
        dn = np.sum(np.abs(d) ** self.p) ** (1.0 / self.p)
        if dn == 0.0:
            return np.inf
        phi = lambda a: self.norm(x + a * d) - self.radius

        hi = (2.0 * self.radius + self.norm(x)) / dn
        lo = None
        phi0 = phi(0.0)
        if phi0 <= 0.0:
            lo = 0.0
        else:
            # boundary point with float slack; phi is convex, so probe
            # geometrically for a feasible anchor (an increasing sample means
            # no feasible interval lies ahead)
            t, prev = 1e-9 * self.radius / dn, phi0
            while t < hi:
                v = phi(t)
                if v <= 0.0:
                    lo = t
                    break
                if v >= prev:
                    return 0.0
                prev, t = v, 4.0 * t
            if lo is None:
                return 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if phi(mid) <= 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-14 * max(1.0, hi):
                break
        return lo

    def tangent_projection(self, x, g):
        self._check_feasible(x)
        g = np.asarray(g, dtype=float)
        if not self.on_boundary(x):
            return g.copy(), float(np.linalg.norm(g))
        J = self.outward_normal(x)
        t = g - max(0.0, float(g @ J)) * J
        return t, float(np.linalg.norm(t))

    def outward_normal(self, x):
        if not self.on_boundary(x):
            raise ValueError("outward normal requires a boundary point")
        w = self.defining_gradient(x)
        return w / np.linalg.norm(w)

    def orthographic_retraction(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if not self.on_boundary(x):
            raise ValueError("retraction base point must be on the boundary")
        J = self.outward_normal(x)
        nu = np.linalg.norm(u)
        if abs(float(u @ J)) > 1e-10 * max(1.0, nu):
            raise ValueError("u must be tangent at x")
        if nu == 0.0:
            return x.copy()
        base = x + u
        phi = lambda t: self.norm(base - t * J) - self.radius
        # phi is convex with phi(0) >= 0; scan for a negative value, then
        # bisect back to the first crossing
        step = max(nu, 1e-3 * self.radius) / 8.0
        t_neg = None
        t = step
        for _ in range(400):
            if phi(t) < 0.0:
                t_neg = t
                break
            t += step
            if t > 4.0 * self.radius + 2.0 * nu:
                break
        if t_neg is None:
            raise RetractionUndefinedError("tangent step too long; no boundary intersection")
        lo, hi = 0.0, t_neg
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if phi(mid) >= 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15 * max(1.0, hi):
                break
        t = 0.5 * (lo + hi)
        # Newton polish on the smooth residual
        for _ in range(8):
            pt = base - t * J
            r = self.norm(pt) - self.radius
            w = self.defining_gradient(pt)
            denom = -float(w @ J) / max(np.sum(np.abs(pt) ** self.p) ** (1.0 - 1.0 / self.p), 1e-300)
            if denom == 0.0:
                break
            t_new = t - r / denom
            if not np.isfinite(t_new) or abs(t_new - t) > max(step, 1e-2 * self.radius):
                break
            t = max(t_new, 0.0)
            if abs(self.norm(base - t * J) - self.radius) <= 1e-13 * self.radius:
                break
        return base - t * J

    def diameter(self):
        n = self.dim
        return float(2.0 * self.radius * max(1.0, n ** (0.5 - 1.0 / self.p)))

    def sample(self, rng, count):
        g = rng.gamma(1.0 / self.p, size=(count, self.dim)) ** (1.0 / self.p)
        signs = rng.integers(0, 2, size=(count, self.dim)) * 2 - 1
        w = signs * g
        norms = np.sum(np.abs(w) ** self.p, axis=1, keepdims=True) ** (1.0 / self.p)
        radii = rng.uniform(size=(count, 1)) ** (1.0 / self.dim)
        return self.radius * radii * w / norms


# ---------------------------------------------------------------------------
# product domain


class ProductDomain(Domain):
    def __init__(self, blocks):
        blocks = list(blocks)
        if not blocks:
            raise ValueError("need at least one block")
        self.blocks = blocks
        self.dims = [b.dim for b in blocks]
        offs = np.cumsum([0] + self.dims)
        self.slices = [slice(int(offs[i]), int(offs[i + 1])) for i in range(len(blocks))]
        self.dim = int(offs[-1])

    def __repr__(self):
        return f"ProductDomain({self.blocks!r})"

    def split(self, x):
        x = np.asarray(x, dtype=float)
        return [x[sl] for sl in self.slices]

    def contains(self, x, tol=FEAS_TOL):
        return all(b.contains(xb, tol) for b, xb in zip(self.blocks, self.split(x)))

    def lmo(self, g):
        return np.concatenate([b.lmo(gb) for b, gb in zip(self.blocks, self.split(g))])

    def max_feasible_step(self, x, d):
        alpha = np.inf
        for b, xb, db in zip(self.blocks, self.split(x), self.split(d)):
            if np.abs(db).max(initial=0.0) > 0.0:
                alpha = min(alpha, b.max_feasible_step(xb, db))
        return alpha

    def tangent_projection(self, x, g):
        parts = [b.tangent_projection(xb, gb)[0]
                 for b, xb, gb in zip(self.blocks, self.split(x), self.split(g))]
        t = np.concatenate(parts)
        return t, float(np.linalg.norm(t))

    def diameter(self):
        return float(np.sqrt(sum(b.diameter() ** 2 for b in self.blocks)))

    def sample(self, rng, count):
        return np.hstack([b.sample(rng, count) for b in self.blocks])
