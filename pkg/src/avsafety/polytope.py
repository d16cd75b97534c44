"""Half-space representations of scenario sets and polytope volume methods.

For a linear car-following law the safe-scenario set and the admissible
scenario space are convex polytopes in the stacked trajectory variables
(accelerations for t < T, speeds and gaps for t <= T; ambient dimension
5T + 3).  The vehicle-dynamics and control-law equalities confine the
feasible set to an affine subspace of dimension T + 3; projecting through an
orthonormal null-space basis preserves Lebesgue measure there, so volume
ratios computed in the projected space are the scenario-space proportions.

Volume computation offers an exact route (vertex enumeration + simplex
decomposition) for low dimensions and two randomized estimators driven by
hit-and-run walks: a sequence of concentric balls and a schedule of cooling
Gaussians.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection
from scipy.special import gammaln, ndtr, ndtri

from .models import LinearCfParams
from .scenario import ScenarioBounds

VERTEX_RESIDUAL_TOL = 1e-9
VERTEX_MERGE_TOL = 1e-7
VE_DIM_GUARD = 10


class PolytopeError(ValueError):
    pass


class InfeasiblePolytope(PolytopeError):
    """Empty interior (Chebyshev radius <= 0) or inconsistent equalities."""


class DimensionGuardError(PolytopeError):
    """Exact vertex enumeration refused above the configured dimension."""


@dataclass
class HPolytope:
    """{z : A z <= b, A_eq z = b_eq}."""

    A: np.ndarray
    b: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    labels: Optional[List[str]] = None

    def __post_init__(self) -> None:
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.A.shape[0] != self.b.shape[0]:
            raise PolytopeError("inequality row count mismatch")
        if (self.A_eq is None) != (self.b_eq is None):
            raise PolytopeError("equality block must provide both matrix and rhs")
        if self.A_eq is not None:
            self.A_eq = np.atleast_2d(np.asarray(self.A_eq, dtype=float))
            self.b_eq = np.asarray(self.b_eq, dtype=float).ravel()
            if self.A_eq.shape[0] != self.b_eq.shape[0]:
                raise PolytopeError("equality row count mismatch")
            if self.A_eq.shape[1] != self.dim:
                raise PolytopeError("equality column count mismatch")
        if self.labels is not None and len(self.labels) != self.dim:
            raise PolytopeError("one label per column required")

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def has_equalities(self) -> bool:
        return self.A_eq is not None and self.A_eq.shape[0] > 0

    def contains(self, z: np.ndarray, tol: float = 1e-9) -> bool:
        z = np.asarray(z, dtype=float)
        if np.any(self.A @ z - self.b > tol):
            return False
        if self.has_equalities and np.any(np.abs(self.A_eq @ z - self.b_eq) > tol):
            return False
        return True

    def translated(self, offset: np.ndarray) -> "HPolytope":
        """Polytope in coordinates y = z - offset."""
        b = self.b - self.A @ offset
        eq = beq = None
        if self.has_equalities:
            eq = self.A_eq.copy()
            beq = self.b_eq - self.A_eq @ offset
        return HPolytope(self.A.copy(), b, eq, beq, self.labels)


@dataclass
class VolumeEstimate:
    value: float
    method: str  # "ve" | "sob" | "cg" | "mc_box"
    rel_error_target: Optional[float] = None
    samples_used: int = 0
    vertices_found: int = 0
    runtime: float = 0.0


# ---------------------------------------------------------------------------
# Construction of the scenario polytopes
# ---------------------------------------------------------------------------

def _trajectory_labels(T: int) -> List[str]:
    labels = [f"a_f_{t}" for t in range(T)]
    labels += [f"a_l_{t}" for t in range(T)]
    labels += [f"v_f_{t}" for t in range(T + 1)]
    labels += [f"v_l_{t}" for t in range(T + 1)]
    labels += [f"d_{t}" for t in range(T + 1)]
    return labels


def _column_index(T: int):
    def af(t): return t
    def al(t): return T + t
    def vf(t): return 2 * T + t
    def vl(t): return 3 * T + 1 + t
    def d(t): return 4 * T + 2 + t
    return af, al, vf, vl, d


def _scenario_polytope(
    params: LinearCfParams,
    bounds: ScenarioBounds,
    eta: Optional[float],
) -> HPolytope:
    if params.form != "generalized":
        raise PolytopeError("polytope construction requires generalized-form params")
    T = bounds.horizon_T
    dt = bounds.dt
    n = 5 * T + 3
    af, al, vf, vl, d = _column_index(T)

    eq_rows, eq_rhs = [], []

    def eq(coeffs, rhs):
        row = np.zeros(n)
        for col, c in coeffs:
            row[col] += c
        eq_rows.append(row)
        eq_rhs.append(rhs)

    for t in range(T):
        # gap dynamics with the second-order dt^2/2 terms
        eq([(d(t + 1), 1.0), (d(t), -1.0), (vl(t), -dt), (al(t), -0.5 * dt * dt),
            (vf(t), dt), (af(t), 0.5 * dt * dt)], 0.0)
        eq([(vl(t + 1), 1.0), (vl(t), -1.0), (al(t), -dt)], 0.0)
        eq([(vf(t + 1), 1.0), (vf(t), -1.0), (af(t), -dt)], 0.0)
        # control law a_f = k1 v_f + k2 v_l + k3 d + k4
        eq([(af(t), 1.0), (vf(t), -params.k1), (vl(t), -params.k2), (d(t), -params.k3)],
           params.k4)

    ineq_rows, ineq_rhs = [], []

    def le(coeffs, rhs):
        row = np.zeros(n)
        for col, c in coeffs:
            row[col] += c
        ineq_rows.append(row)
        ineq_rhs.append(rhs)

    if eta is not None:
        l = bounds.vehicle_length_l
        for t in range(T + 1):
            # d_t - l >= eta (v_f_t - v_l_t)  and  d_t >= l
            le([(vf(t), eta), (vl(t), -eta), (d(t), -1.0)], -l)
            le([(d(t), -1.0)], -l)
    le([(d(0), 1.0)], bounds.d_max)
    le([(d(0), -1.0)], -bounds.d_min)
    for t in range(T):
        for col in (al(t), af(t)):
            le([(col, 1.0)], bounds.a_max)
            le([(col, -1.0)], -bounds.a_min)
    for t in range(T + 1):
        for col in (vf(t), vl(t)):
            le([(col, 1.0)], bounds.v_max)
            le([(col, -1.0)], -bounds.v_min)

    return HPolytope(
        np.array(ineq_rows), np.array(ineq_rhs),
        np.array(eq_rows), np.array(eq_rhs),
        labels=_trajectory_labels(T),
    )


def build_safe_polytope(params: LinearCfParams, bounds: ScenarioBounds, eta: float) -> HPolytope:
    """Half-space system of the safe set: dynamics and control equalities,
    TTC safety rows at every step, and the domain boxes."""
    return _scenario_polytope(params, bounds, eta)


def build_omega_polytope(params: LinearCfParams, bounds: ScenarioBounds) -> HPolytope:
    """The admissible scenario space: the safe polytope minus the safety
    rows (gaps after t=0 may collapse; crashes are part of the space)."""
    return _scenario_polytope(params, bounds, None)


# ---------------------------------------------------------------------------
# Null-space projection
# ---------------------------------------------------------------------------

def equality_basis(p: HPolytope, rcond: float = 1e-10) -> Tuple[np.ndarray, np.ndarray]:
    """Orthonormal null-space basis and a particular solution of the
    equality block."""
    if not p.has_equalities:
        return np.eye(p.dim), np.zeros(p.dim)
    A_eq, b_eq = p.A_eq, p.b_eq
    z0, _, rank, _ = np.linalg.lstsq(A_eq, b_eq, rcond=rcond)
    if not np.allclose(A_eq @ z0, b_eq, atol=1e-8):
        raise InfeasiblePolytope("inconsistent equality constraints")
    if rank < A_eq.shape[0]:
        raise PolytopeError(f"equality block rank-deficient ({rank} < {A_eq.shape[0]})")
    N = null_space(A_eq, rcond=rcond)
    return N, z0


def project_equalities(p: HPolytope, basis: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> HPolytope:
    """Eliminate the equality block via y -> z0 + N y.

    N is orthonormal, so the projected polytope's Lebesgue volume equals the
    measure of the original feasible set within its affine hull.  Passing a
    shared ``basis`` keeps two polytopes with identical equality blocks in
    the same projected coordinates.
    """
    if not p.has_equalities:
        return HPolytope(p.A.copy(), p.b.copy(), labels=p.labels)
    N, z0 = basis if basis is not None else equality_basis(p)
    return HPolytope(p.A @ N, p.b - p.A @ z0)


# ---------------------------------------------------------------------------
# Chebyshev center and bounding geometry
# ---------------------------------------------------------------------------

def chebyshev_center(p: HPolytope) -> Tuple[np.ndarray, float]:
    """Center and radius of the largest inscribed ball (LP over the rows)."""
    m, n = p.A.shape
    norms = np.linalg.norm(p.A, axis=1)
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([p.A, norms[:, None]])
    lp_kwargs = dict(c=c, A_ub=A_ub, b_ub=p.b, bounds=[(None, None)] * n + [(0, None)],
                     method="highs")
    if p.has_equalities:
        lp_kwargs["A_eq"] = np.hstack([p.A_eq, np.zeros((p.A_eq.shape[0], 1))])
        lp_kwargs["b_eq"] = p.b_eq
    res = linprog(**lp_kwargs)
    if not res.success:
        raise InfeasiblePolytope(f"Chebyshev LP failed: {res.message}")
    center, radius = res.x[:-1], float(res.x[-1])
    if radius <= 0:
        raise InfeasiblePolytope("polytope has empty interior")
    return center, radius


def bounding_radius(p: HPolytope, center: np.ndarray) -> float:
    """Radius of a ball around ``center`` containing the polytope, from
    per-coordinate support LPs (bounding-box corner distance)."""
    n = p.dim
    lo = np.empty(n)
    hi = np.empty(n)
    for j in range(n):
        c = np.zeros(n)
        c[j] = 1.0
        r_min = linprog(c, A_ub=p.A, b_ub=p.b, bounds=[(None, None)] * n, method="highs")
        r_max = linprog(-c, A_ub=p.A, b_ub=p.b, bounds=[(None, None)] * n, method="highs")
        if not (r_min.success and r_max.success):
            raise PolytopeError("polytope appears unbounded")
        lo[j], hi[j] = r_min.fun, -r_max.fun
    corner = np.maximum(np.abs(lo - center), np.abs(hi - center))
    return float(np.linalg.norm(corner))


def unit_ball_volume(p: int) -> float:
    return math.exp(p / 2 * math.log(math.pi) - gammaln(p / 2 + 1))


# ---------------------------------------------------------------------------
# Exact volume: vertex enumeration + simplex decomposition
# ---------------------------------------------------------------------------

def enumerate_vertices(p: HPolytope, tolerance: float = VERTEX_RESIDUAL_TOL) -> np.ndarray:
    """Vertex set of a bounded full-dimensional inequality-only polytope."""
    if p.has_equalities:
        raise PolytopeError("project equalities before vertex enumeration")
    center, radius = chebyshev_center(p)
    halfspaces = np.hstack([p.A, -p.b[:, None]])
    # Qx (approximate merged-facet handling) keeps qhull from thrashing on
    # highly non-simple vertices in dimension > 4; it does not perturb input.
    options = "Qx" if p.dim > 4 else None
    try:
        hs = HalfspaceIntersection(halfspaces, center, qhull_options=options)
    except Exception:
        try:  # joggle through qhull degeneracies
            hs = HalfspaceIntersection(halfspaces, center, qhull_options="QJ")
        except Exception as exc:
            raise PolytopeError(f"vertex enumeration failed: {exc}") from exc
    verts = hs.intersections
    finite = np.all(np.isfinite(verts), axis=1)
    if not np.all(finite):
        raise PolytopeError("unbounded polytope")
    verts = verts[finite]
    resid = p.A @ verts.T - p.b[:, None]
    ok = np.all(resid <= max(tolerance, 1e-7) * (1.0 + np.abs(p.b[:, None])), axis=0)
    verts = verts[ok]
    return _merge_close(verts, VERTEX_MERGE_TOL)


def _merge_close(points: np.ndarray, tol: float) -> np.ndarray:
    if len(points) == 0:
        return points
    keys = np.round(points / tol).astype(np.int64)
    _, idx = np.unique(keys, axis=0, return_index=True)
    return points[np.sort(idx)]


def simplex_sum_volume(vertices: np.ndarray) -> float:
    """Hull volume via simplicial decomposition (sum of |det| / p! terms,
    evaluated inside the hull construction).  Axes are rescaled to the unit
    box first so qhull's absolute precision thresholds see comparable
    coordinates; raises on qhull merge failures (callers fall back to the
    facet-pyramid recursion)."""
    lo, hi = vertices.min(axis=0), vertices.max(axis=0)
    scale = np.where(hi - lo > 0, hi - lo, 1.0)
    hull = ConvexHull((vertices - lo) / scale)
    return float(hull.volume * float(np.prod(scale)))


# Above this dimension qhull's facet merging becomes unreliable on the highly
# non-simple polytopes produced by the scenario construction, so the exact
# volume switches to a facet-pyramid recursion that only calls qhull on
# lower-dimensional faces.
DIRECT_HULL_DIM = 6

_HYPERPLANE_ROUND = 9


def _dedupe_hyperplanes(A: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    key = np.round(np.hstack([A, b[:, None]]), _HYPERPLANE_ROUND)
    _, idx = np.unique(key, axis=0, return_index=True)
    idx = np.sort(idx)
    return A[idx], b[idx]


def _hrep_volume(A: np.ndarray, b: np.ndarray) -> float:
    """Exact volume of {x : Ax <= b} from the inequality description alone.

    Decomposes the body into pyramids from the Chebyshev center over its
    facets; each facet is itself an H-polytope one dimension down, handled
    recursively.  Direct hull evaluation is attempted once the dimension is
    small enough for qhull to be dependable, with a further recursion step
    as the fallback when it is not.
    """
    dim = A.shape[1]
    if dim == 1:
        a = A[:, 0]
        hi = np.min(b[a > 1e-12] / a[a > 1e-12]) if np.any(a > 1e-12) else math.inf
        lo = np.max(b[a < -1e-12] / a[a < -1e-12]) if np.any(a < -1e-12) else -math.inf
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise PolytopeError("unbounded one-dimensional section")
        return max(0.0, hi - lo)
    nrm = np.linalg.norm(A, axis=1)
    trivial = nrm <= 1e-12
    if np.any(b[trivial] < -1e-9):
        return 0.0  # 0 <= negative: empty
    A, b, nrm = A[~trivial], b[~trivial], nrm[~trivial]
    A = A / nrm[:, None]
    b = b / nrm
    A, b = _dedupe_hyperplanes(A, b)
    p = HPolytope(A=A, b=b)
    try:
        center, radius = chebyshev_center(p)
    except InfeasiblePolytope:
        return 0.0
    if radius <= 1e-9:
        return 0.0
    if dim <= DIRECT_HULL_DIM:
        try:
            verts = enumerate_vertices(p)
            if len(verts) > dim:
                return simplex_sum_volume(verts)
        except Exception:
            pass  # qhull degeneracy: recurse one level further
    total = 0.0
    for j in range(len(b)):
        dist = float(b[j] - A[j] @ center)
        if dist <= 1e-12:
            continue
        foot = center + dist * A[j]  # orthogonal projection onto hyperplane j
        basis = null_space(A[j:j + 1])
        mask = np.arange(len(b)) != j
        area = _hrep_volume(A[mask] @ basis, b[mask] - A[mask] @ foot)
        total += dist * area
    return total / dim


def ve_volume(p: HPolytope, tolerance: float = VERTEX_RESIDUAL_TOL,
              dim_guard: int = VE_DIM_GUARD) -> VolumeEstimate:
    """Exact volume (up to floating point) by vertex enumeration."""
    if p.dim > dim_guard:
        raise DimensionGuardError(
            f"vertex enumeration refused at dimension {p.dim} (guard {dim_guard})"
        )
    t0 = time.perf_counter()
    verts = enumerate_vertices(p, tolerance)
    if len(verts) < p.dim + 1:
        raise PolytopeError("too few vertices; polytope is lower-dimensional")
    if p.dim <= DIRECT_HULL_DIM:
        try:
            vol = simplex_sum_volume(verts)
        except Exception:
            vol = _hrep_volume(p.A, p.b)
    else:
        vol = _hrep_volume(p.A, p.b)
    return VolumeEstimate(value=vol, method="ve", vertices_found=len(verts),
                          runtime=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# Hit-and-run sampling
# ---------------------------------------------------------------------------

def _chord(p: HPolytope, x: np.ndarray, u: np.ndarray) -> Tuple[float, float]:
    au = p.A @ u
    slack = p.b - p.A @ x
    lam_lo, lam_hi = -np.inf, np.inf
    pos = au > 1e-14
    neg = au < -1e-14
    if np.any(pos):
        lam_hi = np.min(slack[pos] / au[pos])
    if np.any(neg):
        lam_lo = np.max(slack[neg] / au[neg])
    return lam_lo, lam_hi


def hit_and_run_step(
    p: HPolytope,
    current_point: np.ndarray,
    rng: np.random.Generator,
    gaussian_sigma: Optional[float] = None,
    ball_radius: Optional[float] = None,
) -> np.ndarray:
    """One hit-and-run move: a uniform random chord direction, then a point
    drawn on the chord (uniform, or the restricted 1-D Gaussian for the
    cooling-Gaussian sampler).  ``ball_radius`` intersects the chord with a
    ball centered at the origin."""
    x = np.asarray(current_point, dtype=float)
    u = rng.normal(size=p.dim)
    u /= np.linalg.norm(u)
    lam_lo, lam_hi = _chord(p, x, u)
    if ball_radius is not None:
        xu = float(x @ u)
        disc = xu * xu - (float(x @ x) - ball_radius * ball_radius)
        if disc < 0:
            raise PolytopeError("current point outside the restricting ball")
        root = math.sqrt(disc)
        lam_lo = max(lam_lo, -xu - root)
        lam_hi = min(lam_hi, -xu + root)
    if not (math.isfinite(lam_lo) and math.isfinite(lam_hi)):
        raise PolytopeError("unbounded chord; polytope must be bounded")
    if lam_hi - lam_lo <= 0:
        raise PolytopeError("zero-length chord (point on boundary)")
    if gaussian_sigma is None:
        lam = rng.uniform(lam_lo, lam_hi)
    else:
        mu = -float(x @ u)  # mode of the Gaussian along the chord
        a = (lam_lo - mu) / gaussian_sigma
        bq = (lam_hi - mu) / gaussian_sigma
        ca, cb = ndtr(a), ndtr(bq)
        if cb - ca < 1e-300:
            lam = min(max(mu, lam_lo), lam_hi)
        else:
            lam = mu + gaussian_sigma * float(ndtri(ca + rng.uniform() * (cb - ca)))
            lam = min(max(lam, lam_lo), lam_hi)
    return x + lam * u


def hit_and_run_chains(
    p: HPolytope,
    points: np.ndarray,
    rng: np.random.Generator,
    sweeps: int = 1,
    gaussian_sigma: Optional[float] = None,
    ball_radius: Optional[float] = None,
) -> np.ndarray:
    """Advance several independent hit-and-run chains at once.

    ``points`` has shape (chains, dim); each sweep moves every chain by one
    hit-and-run step.  Vectorized equivalent of :func:`hit_and_run_step`.
    """
    X = np.array(points, dtype=float)
    A, b = p.A, p.b
    C = X.shape[0]
    for _ in range(sweeps):
        U = rng.normal(size=X.shape)
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        AU = U @ A.T
        slack = b[None, :] - X @ A.T
        with np.errstate(divide="ignore", invalid="ignore"):
            t = slack / AU
        lam_hi = np.min(np.where(AU > 1e-14, t, np.inf), axis=1)
        lam_lo = np.max(np.where(AU < -1e-14, t, -np.inf), axis=1)
        xu = np.einsum("ij,ij->i", X, U)
        if ball_radius is not None:
            disc = xu * xu - (np.einsum("ij,ij->i", X, X) - ball_radius**2)
            root = np.sqrt(np.maximum(disc, 0.0))
            lam_lo = np.maximum(lam_lo, -xu - root)
            lam_hi = np.minimum(lam_hi, -xu + root)
        lam_hi = np.maximum(lam_hi, lam_lo)  # numeric guard
        if gaussian_sigma is None:
            lam = lam_lo + rng.uniform(size=C) * (lam_hi - lam_lo)
        else:
            mu = -xu
            ca = ndtr((lam_lo - mu) / gaussian_sigma)
            cb = ndtr((lam_hi - mu) / gaussian_sigma)
            u = np.clip(ca + rng.uniform(size=C) * (cb - ca), 1e-16, 1 - 1e-16)
            lam = np.clip(mu + gaussian_sigma * ndtri(u), lam_lo, lam_hi)
        X += lam[:, None] * U
    return X


# ---------------------------------------------------------------------------
# Sequence of balls
# ---------------------------------------------------------------------------

def sob_volume(
    p: HPolytope,
    epsilon: float = 0.05,
    seed: int = 0,
    walk_length: Optional[int] = None,
) -> VolumeEstimate:
    """Randomized volume via a telescoping product of ball-restricted
    uniform measures.

    The polytope is centered at its Chebyshev center; radii double the ball
    volume per stage (r * 2^(1/p)) from the inscribed radius to the
    circumscribing-box radius.  Each ratio vol(P & B_i)/vol(P & B_{i-1}) is
    estimated by hit-and-run sampling inside P & B_i.
    """
    t0 = time.perf_counter()
    center, r0 = chebyshev_center(p)
    if r0 <= 0:
        raise InfeasiblePolytope("no inscribed ball")
    q = p.translated(center)
    dim = q.dim
    r_max = bounding_radius(q, np.zeros(dim))
    radii = [r0]
    while radii[-1] < r_max:
        radii.append(min(radii[-1] * 2.0 ** (1.0 / dim), r_max))
    n_stages = len(radii) - 1
    if walk_length is None:
        walk_length = 10 + dim
    n_per_stage = max(256, math.ceil(2.0 * max(n_stages, 1) / (epsilon * epsilon)))

    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0xB0,)))
    log_vol = dim * math.log(r0) + math.log(unit_ball_volume(dim))
    samples_used = 0
    n_chains = 64
    X = np.zeros((n_chains, dim))
    rounds = math.ceil(n_per_stage / n_chains)
    for i in range(n_stages, 0, -1):  # largest ball first, reusing the chains
        r_outer, r_inner = radii[i], radii[i - 1]
        inside = 0
        total = 0
        X = hit_and_run_chains(q, X, rng, sweeps=walk_length, ball_radius=r_outer)  # burn-in
        for _ in range(rounds):
            X = hit_and_run_chains(q, X, rng, sweeps=walk_length, ball_radius=r_outer)
            r2 = np.einsum("ij,ij->i", X, X)
            inside += int(np.count_nonzero(r2 <= r_inner * r_inner))
            total += n_chains
        samples_used += total
        if inside == 0:
            raise PolytopeError("sequence-of-balls ratio estimate collapsed")
        log_vol += math.log(total / inside)
        # pull chains into the next (inner) ball
        norms = np.sqrt(np.einsum("ij,ij->i", X, X))
        scale = np.where(norms > r_inner, 0.99 * r_inner / np.maximum(norms, 1e-300), 1.0)
        X = X * scale[:, None]
    return VolumeEstimate(
        value=math.exp(log_vol), method="sob", rel_error_target=epsilon,
        samples_used=samples_used, runtime=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# Cooling Gaussians
# ---------------------------------------------------------------------------

def cg_volume(
    p: HPolytope,
    epsilon: float = 0.1,
    walk_length_L: Optional[int] = None,
    cooling_gamma: Optional[float] = None,
    seed: int = 0,
) -> VolumeEstimate:
    """Randomized volume via an annealed sequence of Gaussians.

    Starting from a sharp Gaussian whose mass the polytope essentially
    contains (normalizer known in closed form), the standard deviation is
    widened geometrically by the cooling factor until the density is nearly
    flat across the body; successive normalizer ratios are estimated with
    Gaussian hit-and-run samples and a final flat-density correction turns
    the last normalizer into the volume.
    """
    t0 = time.perf_counter()
    center, r0 = chebyshev_center(p)
    q = p.translated(center)
    dim = q.dim
    if cooling_gamma is None:
        cooling_gamma = 1.0 - 0.5 / math.sqrt(dim)
    if not 0.0 < cooling_gamma < 1.0:
        raise PolytopeError("cooling factor must lie in (0, 1)")
    if walk_length_L is None:
        walk_length_L = 10 + dim
    r_max = bounding_radius(q, np.zeros(dim))

    sigma0 = r0 / math.sqrt(dim)
    sigmas = [sigma0]
    while sigmas[-1] < 2.0 * r_max:
        sigmas.append(sigmas[-1] / cooling_gamma)
    n_stages = len(sigmas)

    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0xC6,)))
    n_per_stage = max(256, math.ceil(2.0 * (n_stages + 1) / (epsilon * epsilon)))

    # Z_0 by direct sampling from the untruncated sharp Gaussian
    n0 = max(n_per_stage, 2048)
    pts = rng.normal(scale=sigma0, size=(n0, dim))
    inside = np.count_nonzero(np.all(pts @ q.A.T <= q.b, axis=1))
    if inside == 0:
        raise PolytopeError("initial Gaussian places no mass in the polytope")
    log_z = dim / 2 * math.log(2 * math.pi * sigma0 * sigma0) + math.log(inside / n0)
    samples_used = n0

    n_chains = 64
    X = np.zeros((n_chains, dim))
    rounds = math.ceil(n_per_stage / n_chains)
    for s in range(n_stages):
        sigma = sigmas[s]
        sigma_next = sigmas[s + 1] if s + 1 < n_stages else None
        acc = 0.0
        total = 0
        X = hit_and_run_chains(q, X, rng, sweeps=walk_length_L, gaussian_sigma=sigma)  # burn-in
        for _ in range(rounds):
            X = hit_and_run_chains(q, X, rng, sweeps=walk_length_L, gaussian_sigma=sigma)
            r2 = np.einsum("ij,ij->i", X, X)
            if sigma_next is not None:
                w = np.exp(0.5 * r2 * (1.0 / sigma**2 - 1.0 / sigma_next**2))
            else:
                w = np.exp(0.5 * r2 / sigma**2)  # flat-density correction
            acc += float(w.sum())
            total += n_chains
        samples_used += total
        log_z += math.log(acc / total)
    return VolumeEstimate(
        value=math.exp(log_z), method="cg", rel_error_target=epsilon,
        samples_used=samples_used, runtime=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# Rejection sampling in the bounding box (cross-validation estimator)
# ---------------------------------------------------------------------------

def mc_box_volume(p: HPolytope, n_samples: int = 100_000, seed: int = 0) -> VolumeEstimate:
    """Uniform rejection sampling inside the bounding box."""
    t0 = time.perf_counter()
    dim = p.dim
    lo = np.empty(dim)
    hi = np.empty(dim)
    for j in range(dim):
        c = np.zeros(dim)
        c[j] = 1.0
        rmin = linprog(c, A_ub=p.A, b_ub=p.b, bounds=[(None, None)] * dim, method="highs")
        rmax = linprog(-c, A_ub=p.A, b_ub=p.b, bounds=[(None, None)] * dim, method="highs")
        if not (rmin.success and rmax.success):
            raise PolytopeError("polytope appears unbounded")
        lo[j], hi[j] = rmin.fun, -rmax.fun
    box_vol = float(np.prod(hi - lo))
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0xBB,)))
    inside = 0
    chunk = 1 << 14
    left = n_samples
    while left > 0:
        m = min(chunk, left)
        pts = rng.uniform(lo, hi, size=(m, dim))
        inside += int(np.count_nonzero(np.all(pts @ p.A.T <= p.b, axis=1)))
        left -= m
    return VolumeEstimate(
        value=box_vol * inside / n_samples, method="mc_box",
        samples_used=n_samples, runtime=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# Dangerous proportion via polytope volumes
# ---------------------------------------------------------------------------

@dataclass
class ProportionResult:
    dangerous_proportion: float
    safe_volume: VolumeEstimate
    omega_volume: VolumeEstimate
    projected_dim: int


def dangerous_proportion_polytope(
    params: LinearCfParams,
    bounds: ScenarioBounds,
    eta: float,
    method: str = "ve",
    **kwargs,
) -> ProportionResult:
    """1 - vol(S)/vol(Omega) with both volumes computed by the selected
    method on polytopes projected through a shared null-space basis."""
    safe = build_safe_polytope(params, bounds, eta)
    omega = build_omega_polytope(params, bounds)
    basis = equality_basis(safe)
    safe_p = project_equalities(safe, basis)
    omega_p = project_equalities(omega, basis)
    estimators = {"ve": ve_volume, "sob": sob_volume, "cg": cg_volume, "mc_box": mc_box_volume}
    if method not in estimators:
        raise PolytopeError(f"unknown volume method {method!r}")
    fn = estimators[method]
    vol_s = fn(safe_p, **kwargs)
    vol_o = fn(omega_p, **kwargs)
    if vol_o.value <= 0:
        raise PolytopeError("scenario-space volume is zero")
    ratio = min(1.0, vol_s.value / vol_o.value)
    return ProportionResult(
        dangerous_proportion=1.0 - ratio,
        safe_volume=vol_s,
        omega_volume=vol_o,
        projected_dim=safe_p.dim,
    )


# ---------------------------------------------------------------------------
# Plain-text H-rep interchange
# ---------------------------------------------------------------------------

def write_hrep(p: HPolytope, path) -> None:
    """Text format: a header line "dim m_ineq m_eq", then one inequality per
    line as "b a_1 ... a_p" (meaning a.z <= b), then the equality rows in the
    same layout."""
    m_eq = p.A_eq.shape[0] if p.has_equalities else 0
    lines = [f"{p.dim} {p.A.shape[0]} {m_eq}"]
    for row, rhs in zip(p.A, p.b):
        lines.append(" ".join([repr(float(rhs))] + [repr(float(v)) for v in row]))
    if m_eq:
        for row, rhs in zip(p.A_eq, p.b_eq):
            lines.append(" ".join([repr(float(rhs))] + [repr(float(v)) for v in row]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_hrep(path) -> HPolytope:
    with open(path) as fh:
        tokens = fh.read().split("\n")
    header = tokens[0].split()
    if len(header) != 3:
        raise PolytopeError("malformed H-rep header")
    dim, m_ineq, m_eq = (int(v) for v in header)
    rows = [ln.split() for ln in tokens[1:] if ln.strip()]
    if len(rows) != m_ineq + m_eq:
        raise PolytopeError("H-rep row count does not match header")
    data = np.array([[float(v) for v in r] for r in rows])
    if data.shape[1] != dim + 1:
        raise PolytopeError("H-rep column count does not match header")
    A, b = data[:m_ineq, 1:], data[:m_ineq, 0]
    A_eq = b_eq = None
    if m_eq:
        A_eq, b_eq = data[m_ineq:, 1:], data[m_ineq:, 0]
    return HPolytope(A, b, A_eq, b_eq)
