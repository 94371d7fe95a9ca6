"""Descent-direction oracles: Frank-Wolfe, away-step, pairwise, in-face,
short orthographic retraction, and product-domain combiners.

Each oracle maps (domain, point, ascent vector g) to a feasible descent
direction together with its maximal stepsize and any active-set
bookkeeping.  Oracles are pure; active sets are owned by a single run and
updated functionally.

A selection is declared Zero when <g, d> <= 1e-12 ||g|| ||d|| for every
candidate, which is exactly first-order stationarity for -g up to float.
Ties between the plain Frank-Wolfe candidate and away/in-face candidates
resolve to Frank-Wolfe.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .domains import (Box, Domain, L1Ball, LpBall, ProductDomain, Simplex,
                      SublevelSet)

ZERO_TOL = 1e-12
DROP_TOL = 1e-12


class InvalidActiveSetError(ValueError):
    pass


# ---------------------------------------------------------------------------
# active sets


@dataclass
class ActiveSet:
    """Vertices whose strictly positive convex combination is the iterate."""

    atoms: np.ndarray          # (k, n)
    weights: np.ndarray        # (k,), positive, sums to 1

    def __post_init__(self):
        self.atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.atoms.shape[0] != self.weights.shape[0]:
            raise InvalidActiveSetError("atom/weight count mismatch")

    def point(self) -> np.ndarray:
        return self.weights @ self.atoms

    def validate(self, x, tol=1e-9):
        if np.any(self.weights <= 0):
            raise InvalidActiveSetError("weights must be strictly positive")
        if abs(self.weights.sum() - 1.0) > 1e-10:
            raise InvalidActiveSetError("weights must sum to 1")
        if np.linalg.norm(self.point() - x) > tol * (1.0 + np.linalg.norm(x)):
            raise InvalidActiveSetError("active set does not reconstruct the point")

    def find(self, atom, tol=1e-10) -> int:
        """Index of a matching atom, or -1."""
        scale = 1.0 + np.abs(self.atoms).max(initial=0.0)
        diffs = np.abs(self.atoms - atom).max(axis=1)
        hits = np.nonzero(diffs <= tol * scale)[0]
        return int(hits[0]) if hits.size else -1


def initial_active_set(dom: Domain, x: np.ndarray) -> ActiveSet:
    """Exact vertex decomposition of standard start points.

    Simplex: weights x_i/scale on the coordinate vertices.  Box: the
    sorted-threshold chain decomposition (at most dim+1 vertices).  L1 ball:
    signed support atoms plus a +/- e_1 pair absorbing slack at the center.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(dom, Simplex):
        idx = np.nonzero(x > 1e-14 * dom.scale)[0]
        atoms = np.zeros((idx.size, dom.dim))
        atoms[np.arange(idx.size), idx] = dom.scale
        return ActiveSet(atoms, x[idx] / dom.scale)
    if isinstance(dom, Box):
        u = np.clip(x / dom.scale, 0.0, 1.0)
        levels = np.unique(u[u > 1e-14])[::-1]
        atoms, weights = [], []
        for j, t in enumerate(levels):
            nxt = levels[j + 1] if j + 1 < levels.size else 0.0
            atoms.append(dom.scale * (u >= t - 1e-14).astype(float))
            weights.append(t - nxt)
        slack = 1.0 - float(levels[0]) if levels.size else 1.0
        if slack > 1e-14 or not atoms:
            atoms.append(np.zeros(dom.dim))
            weights.append(slack)
        return ActiveSet(np.array(atoms), np.array(weights))
    if isinstance(dom, L1Ball):
        atoms, weights = [], []
        for i in np.nonzero(np.abs(x) > 1e-14 * dom.scale)[0]:
            a = np.zeros(dom.dim)
            a[i] = dom.scale * np.sign(x[i])
            atoms.append(a)
            weights.append(abs(x[i]) / dom.scale)
        slack = 1.0 - sum(weights)
        if slack > 1e-14 or not atoms:
            half = (slack if atoms else 1.0) / 2.0
            for sgn in (1.0, -1.0):
                a = np.zeros(dom.dim)
                a[0] = sgn * dom.scale
                atoms.append(a)
                weights.append(half)
        # merge duplicates the slack pair may have introduced
        merged_atoms, merged_w = [], []
        for a, w in zip(atoms, weights):
            hit = -1
            for j, m in enumerate(merged_atoms):
                if np.abs(m - a).max() <= 1e-12 * dom.scale:
                    hit = j
                    break
            if hit >= 0:
                merged_w[hit] += w
            else:
                merged_atoms.append(a)
                merged_w.append(w)
        return ActiveSet(np.array(merged_atoms), np.array(merged_w))
    raise ValueError(f"no standard vertex decomposition for {type(dom).__name__}")


# ---------------------------------------------------------------------------
# direction choices


@dataclass
class DirectionChoice:
    kind: str                       # fw | away | pairwise | inface | sor | zero | product
    d: np.ndarray
    alpha_max: float = 0.0
    gdot: float = 0.0               # <g, d>
    add_atom: Optional[np.ndarray] = None
    drop_index: int = -1
    block_data: Optional[list] = None   # product mode: (i, choice, scale) per moving block

    @property
    def is_zero(self):
        return self.kind == "zero"


def _zero(dim):
    return DirectionChoice(kind="zero", d=np.zeros(dim))


def _descent(g, d, xscale=1.0):
    """<g,d> if d clears the stationarity tolerances, else None.

    Rejects both flat slopes (<g,d> <= 1e-12 ||g|| ||d||) and directions
    shorter than the float resolution of the iterate (||d|| <= 1e-12 xscale),
    which arise as exact-zero in-face/away candidates contaminated by
    roundoff at vertices and must not be stepped along.
    """
    nd = float(np.linalg.norm(d))
    if nd <= ZERO_TOL * xscale:
        return None
    gd = float(g @ d)
    if gd <= ZERO_TOL * np.linalg.norm(g) * nd:
        return None
    return gd


def _cached_lmo(dom, g, cache, key="lmo"):
    if cache is None:
        return dom.lmo(g)
    if key not in cache:
        cache[key] = dom.lmo(g)
    return cache[key]


# ---------------------------------------------------------------------------
# oracles


class FrankWolfe:
    """Classic toward-the-best-vertex direction; alpha_max = 1."""

    needs_active_set = False

    def init_state(self, dom, x):
        return None

    def choose(self, dom, x, g, state=None, cache=None):
        return fw_direction(dom, x, g, cache)

    def update(self, state, choice, alpha, maximal):
        return None


def fw_direction(dom, x, g, cache=None):
    g = np.asarray(g, dtype=float)
    x = np.asarray(x, dtype=float)
    s = _cached_lmo(dom, g, cache)
    d = s - x
    gd = _descent(g, d, 1.0 + np.linalg.norm(x))
    if gd is None:
        return _zero(dom.dim)
    return DirectionChoice(kind="fw", d=d, alpha_max=1.0, gdot=gd, add_atom=s)


class AwayFrankWolfe:
    needs_active_set = True

    def init_state(self, dom, x):
        return initial_active_set(dom, x)

    def choose(self, dom, x, g, state, cache=None):
        return afw_direction(dom, x, g, state, cache)

    def update(self, state, choice, alpha, maximal):
        return apply_bookkeeping(state, choice, alpha)


def afw_direction(dom, x, g, S: ActiveSet, cache=None):
    """Better of the Frank-Wolfe and away directions (FW wins ties).

    Away steps cap at lam_q/(1-lam_q), which keeps weights feasible and
    makes a maximal away step drop its atom.
    """
    g = np.asarray(g, dtype=float)
    x = np.asarray(x, dtype=float)
    S.validate(x)
    xs = 1.0 + np.linalg.norm(x)
    s = _cached_lmo(dom, g, cache)
    d_fw = s - x
    gd_fw = float(g @ d_fw)

    q = int(np.argmin(S.atoms @ g))
    d_aw = x - S.atoms[q]
    gd_aw = float(g @ d_aw)

    if gd_aw > gd_fw and _descent(g, d_aw, xs) is not None:
        lam = float(S.weights[q])
        if lam >= 1.0 - DROP_TOL:
            alpha_max = dom.max_feasible_step(x, d_aw)
        else:
            alpha_max = lam / (1.0 - lam)
        return DirectionChoice(kind="away", d=d_aw, alpha_max=alpha_max,
                               gdot=gd_aw, drop_index=q)
    if _descent(g, d_fw, xs) is None:
        return _zero(dom.dim)
    return DirectionChoice(kind="fw", d=d_fw, alpha_max=1.0, gdot=gd_fw, add_atom=s)


class PairwiseFrankWolfe:
    needs_active_set = True

    def init_state(self, dom, x):
        return initial_active_set(dom, x)

    def choose(self, dom, x, g, state, cache=None):
        return pfw_direction(dom, x, g, state, cache)

    def update(self, state, choice, alpha, maximal):
        return apply_bookkeeping(state, choice, alpha)


def pfw_direction(dom, x, g, S: ActiveSet, cache=None):
    """Pairwise direction s - q; moves weight from the worst active atom to
    the linear minimizer, capped at lam_q."""
    g = np.asarray(g, dtype=float)
    x = np.asarray(x, dtype=float)
    S.validate(x)
    s = _cached_lmo(dom, g, cache)
    q = int(np.argmin(S.atoms @ g))
    d = s - S.atoms[q]
    gd = _descent(g, d, 1.0 + np.linalg.norm(x))
    if gd is None:
        return _zero(dom.dim)
    return DirectionChoice(kind="pairwise", d=d, alpha_max=float(S.weights[q]),
                           gdot=gd, add_atom=s, drop_index=q)


class FaceFrankWolfe:
    """Frank-Wolfe with in-face (away-over-the-minimal-face) directions."""

    needs_active_set = False

    def init_state(self, dom, x):
        return None

    def choose(self, dom, x, g, state=None, cache=None):
        return fdfw_direction(dom, x, g, cache)

    def update(self, state, choice, alpha, maximal):
        return None


def fdfw_direction(dom, x, g, cache=None):
    g = np.asarray(g, dtype=float)
    x = np.asarray(x, dtype=float)
    s = _cached_lmo(dom, g, cache)
    d_fw = s - x
    gd_fw = float(g @ d_fw)

    face = dom.minimal_face(x)
    x_a = dom.face_lmo(face, g)
    d_a = x - x_a
    gd_a = float(g @ d_a)

    xs = 1.0 + np.linalg.norm(x)
    if gd_a > gd_fw and _descent(g, d_a, xs) is not None:
        return DirectionChoice(kind="inface", d=d_a,
                               alpha_max=dom.max_feasible_step(x, d_a), gdot=gd_a)
    if _descent(g, d_fw, xs) is None:
        return _zero(dom.dim)
    return DirectionChoice(kind="fw", d=d_fw, alpha_max=1.0, gdot=gd_fw, add_atom=s)


# ---------------------------------------------------------------------------
# short orthographic retraction


def shrink_coefficient_bound(dom, x, g) -> float:
    """Certified lower bound on the largest tangential scaling whose
    retraction keeps the slope ratio at least 1/2.

    Sublevel sets: ||grad h(x)|| / (||g|| L_h) via the inscribed
    descent-lemma ball.  Lp balls, p >= 2: the same bound for
    h_p = sum|x_i|^p / p with the gradient-Lipschitz constant
    (p-1)(2r)^{p-2}, valid on ||z||_inf <= 2r which contains the inscribed
    ball.  Lp balls, p in (1, 2): derived from the p-uniform smoothness
    modulus eta(t) = (2/p) n^{1-p/2} t^p of h_p; at the returned scaling the
    retraction slope is provably >= 0.72 > 1/2.
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    gn = float(np.linalg.norm(g))
    _, pi = dom.tangent_projection(x, g)
    if pi <= ZERO_TOL * max(gn, 1.0):
        raise ValueError("gradient has no tangential component at x")
    if isinstance(dom, SublevelSet):
        if not dom.on_boundary(x):
            raise ValueError("shrink bound requires a boundary point")
        return float(np.linalg.norm(dom.grad_h(x)) / (gn * dom.L_h))
    if isinstance(dom, LpBall):
        if not dom.on_boundary(x):
            raise ValueError("shrink bound requires a boundary point")
        p, r = dom.p, dom.radius
        w = dom.defining_gradient(x)
        wn = float(np.linalg.norm(w))
        if p >= 2.0:
            L0 = (p - 1.0) * (2.0 * r) ** (p - 2.0)
            return float(wn / (gn * L0))
        C = (2.0 / p) * dom.dim ** (1.0 - p / 2.0)
        lam = (wn * pi ** (2.0 - p) / (2.0 ** (p / 2.0 + 2.0) * C * gn)) ** (1.0 / (p - 1.0))
        return float(lam)
    raise ValueError(f"no shrink bound for {type(dom).__name__}")


class ShortRetraction:
    """Orthographic-retraction direction with a certified shrinking
    coefficient, enlarged by doubling while the slope ratio holds."""

    needs_active_set = False

    def __init__(self, tau_bar=0.5, nu_hat=1.0, max_doublings=30):
        if not (0.0 < tau_bar < 1.0) or not (0.0 < nu_hat <= 1.0):
            raise ValueError("need tau_bar in (0,1) and nu_hat in (0,1]")
        self.tau_bar = tau_bar
        self.nu_hat = nu_hat
        self.max_doublings = max_doublings

    def init_state(self, dom, x):
        return None

    def choose(self, dom, x, g, state=None, cache=None):
        return sor_direction(dom, x, g, self.tau_bar, self.nu_hat, self.max_doublings)

    def update(self, state, choice, alpha, maximal):
        return None


def sor_direction(dom, x, g, tau_bar=0.5, nu_hat=1.0, max_doublings=30):
    from .domains import RetractionUndefinedError

    g = np.asarray(g, dtype=float)
    x = np.asarray(x, dtype=float)
    gn = float(np.linalg.norm(g))
    if gn == 0.0:
        return _zero(dom.dim)
    tangent, pi = dom.tangent_projection(x, g)
    if pi <= ZERO_TOL * gn:
        return _zero(dom.dim)                     # g normal: stationary

    boundary = dom.on_boundary(x)
    inward = boundary and float(g @ dom.outward_normal(x)) < -ZERO_TOL * gn
    if not boundary or inward:
        d = g.copy()
        return DirectionChoice(kind="sor", d=d, alpha_max=dom.max_feasible_step(x, d),
                               gdot=float(g @ d))

    def slope(lam):
        P = dom.orthographic_retraction(x, lam * tangent)
        v = P - x
        nv = np.linalg.norm(v)
        if nv <= 1e-15 * (1.0 + np.linalg.norm(x)):
            return None, v
        return float(g @ v) / (pi * nv), v

    bound = shrink_coefficient_bound(dom, x, g)
    # displacements below the float resolution of x cannot be measured
    # (cancellation noise in P - x swamps the slope); clamp the search to
    # resolvable scales and give up (numerically stationary) if no
    # resolvable scaling meets the slope threshold
    lam_min = 1e-9 * (1.0 + np.linalg.norm(x)) / pi
    floor = max(min(nu_hat, nu_hat * bound), lam_min)
    lam = max(bound, lam_min)
    try:
        ratio, v = slope(lam)
    except RetractionUndefinedError:
        ratio, v = None, None
    halvings = 0
    while (ratio is None or ratio < tau_bar) and lam > floor * (1.0 + 1e-12) and halvings < 60:
        lam = max(0.5 * lam, floor)
        try:
            ratio, v = slope(lam)
        except RetractionUndefinedError:
            ratio = None
        halvings += 1
    if ratio is None or ratio < tau_bar:
        return _zero(dom.dim)
    for _ in range(max_doublings):
        try:
            r2, v2 = slope(2.0 * lam)
        except RetractionUndefinedError:
            break
        if r2 is None or r2 < tau_bar:
            break
        lam, ratio, v = 2.0 * lam, r2, v2
    gd = _descent(g, v, 1.0 + np.linalg.norm(x))
    if gd is None:
        return _zero(dom.dim)
    return DirectionChoice(kind="sor", d=v, alpha_max=dom.max_feasible_step(x, v), gdot=gd)


# ---------------------------------------------------------------------------
# product domains


class ProductRule:
    """Blockwise composition of per-block oracles.

    mode "case1": every block moves along its unit block direction scaled by
    the block slope (requires all blocks away/pairwise so chained maximal
    steps stay finitely many).  mode "case2": one-hot on a block with the
    largest slope, which also permits in-face and retraction blocks.
    """

    def __init__(self, block_methods, mode="case2"):
        if mode not in ("case1", "case2"):
            raise ValueError("mode must be case1 or case2")
        if mode == "case1":
            bad = [m for m in block_methods
                   if not isinstance(m, (AwayFrankWolfe, PairwiseFrankWolfe, FrankWolfe))]
            if bad:
                raise ValueError("case1 products require FW/away/pairwise blocks")
        self.block_methods = list(block_methods)
        self.mode = mode

    needs_active_set = True   # per-block states carried as a tuple

    def init_state(self, dom: ProductDomain, x):
        return tuple(m.init_state(b, xb) for m, b, xb
                     in zip(self.block_methods, dom.blocks, dom.split(x)))

    def choose(self, dom: ProductDomain, x, g, state, cache=None):
        return product_direction(dom, x, g, self.block_methods, state,
                                 mode=self.mode, cache=cache)

    def update(self, state, choice, alpha, maximal):
        new = list(state)
        if choice.block_data:
            for (i, bc, scale) in choice.block_data:
                block_alpha = alpha * scale
                bmax = bc.alpha_max
                bmaximal = np.isfinite(bmax) and block_alpha >= bmax - DROP_TOL * (1.0 + bmax)
                new[i] = self.block_methods[i].update(state[i], bc, block_alpha, bmaximal)
        return tuple(new)


def product_direction(dom: ProductDomain, x, g, block_methods, states,
                      mode="case2", cache=None):
    g = np.asarray(g, dtype=float)
    xs = dom.split(x)
    gs = dom.split(g)
    choices, slopes, norms = [], [], []
    for i, (m, b) in enumerate(zip(block_methods, dom.blocks)):
        sub_cache = None
        if cache is not None:
            sub_cache = cache.setdefault(f"block{i}", {})
        c = m.choose(b, xs[i], gs[i], states[i] if states else None, sub_cache)
        choices.append(c)
        if c.is_zero:
            slopes.append(0.0)
            norms.append(0.0)
        else:
            nd = float(np.linalg.norm(c.d))
            norms.append(nd)
            slopes.append(c.gdot / nd)
    if all(c.is_zero for c in choices):
        return _zero(dom.dim)

    weights = np.zeros(len(choices))
    if mode == "case1":
        for i, c in enumerate(choices):
            if not c.is_zero:
                weights[i] = slopes[i]
    else:
        live = [i for i, c in enumerate(choices) if not c.is_zero]
        top = max(live, key=lambda i: slopes[i])
        weights[top] = slopes[top]

    d = np.zeros(dom.dim)
    block_data = []
    alpha_max = np.inf
    for i, c in enumerate(choices):
        if weights[i] <= 0.0:
            continue
        scale = weights[i] / norms[i]          # composite alpha -> block alpha
        d[dom.slices[i]] = scale * c.d
        block_data.append((i, c, scale))
        if np.isfinite(c.alpha_max):
            alpha_max = min(alpha_max, c.alpha_max / scale)
    gd = _descent(g, d, 1.0 + np.linalg.norm(np.asarray(x, dtype=float)))
    if gd is None:
        return _zero(dom.dim)
    return DirectionChoice(kind="product", d=d, alpha_max=alpha_max, gdot=gd,
                           block_data=block_data)


# ---------------------------------------------------------------------------
# bookkeeping


def apply_bookkeeping(S: ActiveSet, choice: DirectionChoice, alpha: float) -> ActiveSet:
    """Weight update after stepping alpha along the chosen direction.

    fw: scale by (1-alpha), merge the linear minimizer at alpha.
    away: scale by (1+alpha), subtract alpha from the away atom (dropped when
    the step is maximal).  pairwise: move alpha from the away atom to the
    linear minimizer.  Weights are renormalized; a weight that would go
    negative beyond 1e-12 is a numeric-consistency error.
    """
    if not (-DROP_TOL <= alpha <= choice.alpha_max * (1.0 + 1e-9) + DROP_TOL):
        raise ValueError("alpha outside [0, alpha_max]")
    if alpha <= 0.0 or choice.is_zero:
        return ActiveSet(S.atoms.copy(), S.weights.copy())

    atoms = [a.copy() for a in S.atoms]
    weights = list(S.weights)

    def merge(atom, w):
        probe = ActiveSet(np.array(atoms), np.array(weights))
        j = probe.find(atom)
        if j >= 0:
            weights[j] += w
        else:
            atoms.append(np.asarray(atom, dtype=float).copy())
            weights.append(w)

    if choice.kind == "fw":
        weights = [w * (1.0 - alpha) for w in weights]
        merge(choice.add_atom, alpha)
    elif choice.kind == "away":
        q = choice.drop_index
        weights = [w * (1.0 + alpha) for w in weights]
        weights[q] -= alpha
        if weights[q] < -DROP_TOL:
            raise ValueError("away update drove a weight negative")
    elif choice.kind == "pairwise":
        q = choice.drop_index
        if weights[q] - alpha < -DROP_TOL:
            raise ValueError("pairwise update drove a weight negative")
        weights[q] -= alpha
        merge(choice.add_atom, alpha)
    else:
        return ActiveSet(S.atoms.copy(), S.weights.copy())

    keep = [i for i, w in enumerate(weights) if w > DROP_TOL]
    atoms = np.array([atoms[i] for i in keep])
    w = np.array([weights[i] for i in keep])
    w = np.maximum(w, 0.0)
    w /= w.sum()
    return ActiveSet(atoms, w)


METHOD_NAMES = {
    "fw": FrankWolfe,
    "afw": AwayFrankWolfe,
    "pfw": PairwiseFrankWolfe,
    "fdfw": FaceFrankWolfe,
    "sor": ShortRetraction,
}


def make_method(name, **kwargs):
    if name not in METHOD_NAMES:
        raise ValueError(f"unknown method {name!r}")
    return METHOD_NAMES[name](**kwargs)
