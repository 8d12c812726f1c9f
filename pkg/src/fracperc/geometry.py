"""Affine planes, principal angles, plane-cube measures, transversality.

Measures use half-open cube semantics throughout so that level-n cubes tile
[0,1)^M exactly and per-cube measures are additive.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .errors import ConfigError, DegenerateInputError

ORTHO_TOL = 1e-10
RANK_TOL = 1e-8
# singular value threshold above which two basis directions are considered
# a shared (zero-angle) direction
_COS_ONE = 1.0 - 1e-9

DEFAULT_MC_SAMPLES = 1 << 16


def orthonormalize(vectors):
    """Orthonormal row basis of the span of the given row vectors."""
    a = np.atleast_2d(np.asarray(vectors, dtype=float))
    u, sv, vt = np.linalg.svd(a, full_matrices=False)
    rank = int((sv > RANK_TOL * max(1.0, sv[0] if sv.size else 1.0)).sum())
    return vt[:rank]


@dataclass(frozen=True)
class AffinePlane:
    """k-dimensional affine subspace of R^M: offset + row-span of basis."""

    basis: np.ndarray   # (k, M), orthonormal rows
    offset: np.ndarray  # (M,)

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.basis, dtype=float))
        o = np.asarray(self.offset, dtype=float)
        object.__setattr__(self, "basis", b)
        object.__setattr__(self, "offset", o)
        if b.shape[0] > 0:
            g = b @ b.T
            if not np.allclose(g, np.eye(b.shape[0]), atol=ORTHO_TOL):
                raise DegenerateInputError("basis is not orthonormal")
        if b.shape[1] != o.shape[0]:
            raise DegenerateInputError("basis/offset ambient mismatch")

    @classmethod
    def from_spanning(cls, vectors, offset=None):
        b = orthonormalize(vectors)
        if offset is None:
            offset = np.zeros(b.shape[1])
        return cls(basis=b, offset=np.asarray(offset, dtype=float))

    @property
    def ambient(self):
        return self.basis.shape[1]

    @property
    def dim(self):
        return self.basis.shape[0]

    def point_distance(self, x):
        """Euclidean distance from point(s) x to the plane. x: (..., M)."""
        y = np.asarray(x, dtype=float) - self.offset
        if self.dim == 0:
            return np.linalg.norm(y, axis=-1)
        resid = y - (y @ self.basis.T) @ self.basis
        return np.linalg.norm(resid, axis=-1)

    def project(self, x):
        y = np.asarray(x, dtype=float) - self.offset
        return self.offset + (y @ self.basis.T) @ self.basis

    def metric_distance(self, other):
        """Operator-norm distance between the affine projections onto the
        planes: ||pi_V - pi_W|| + distance between the projected offsets."""
        pv = self.basis.T @ self.basis
        pw = other.basis.T @ other.basis
        dir_part = np.linalg.norm(pv - pw, ord=2)
        off_part = np.linalg.norm(
            self.project(np.zeros(self.ambient)) - other.project(np.zeros(self.ambient))
        )
        return dir_part + off_part


def principal_angle_spectrum(v, w):
    """All principal angles between the direction spans of v and w."""
    if v.dim == 0 or w.dim == 0:
        return np.array([])
    sv = np.linalg.svd(v.basis @ w.basis.T, compute_uv=False)
    return np.arccos(np.clip(sv, -1.0, 1.0))


def principal_angle(v, w):
    """Transversality angle between (the directions of) two affine planes.

    0 when dim(V cap W) exceeds the generic value max(0, dimV+dimW-M);
    otherwise the j-th smallest principal angle with j = dim(V cap W) + 1.
    By convention the angle with a 0-dimensional plane is 1, and pi/2 is
    returned when the j-th angle does not exist (e.g. W is the full space).
    """
    if v.ambient != w.ambient:
        raise ConfigError("ambient dimension mismatch")
    if v.dim == 0 or w.dim == 0:
        return 1.0
    angles = np.sort(principal_angle_spectrum(v, w))
    shared = int((np.cos(angles) > _COS_ONE).sum())  # dim of direction overlap
    generic = max(0, v.dim + w.dim - v.ambient)
    if shared > generic:
        return 0.0
    if shared >= angles.size:
        return np.pi / 2
    return float(angles[shared])


# ---------------------------------------------------------------------------
# Plane-cube measures

def _line_box_length(plane, lo, side):
    """Exact H^1 of a line intersected with the half-open box."""
    b = plane.basis[0]
    o = plane.offset
    tmin, tmax = -np.inf, np.inf
    for i in range(lo.shape[0]):
        if abs(b[i]) < 1e-14:
            if not (lo[i] <= o[i] < lo[i] + side):
                return 0.0
        else:
            t0 = (lo[i] - o[i]) / b[i]
            t1 = (lo[i] + side - o[i]) / b[i]
            tmin = max(tmin, min(t0, t1))
            tmax = min(tmax, max(t0, t1))
    return max(0.0, tmax - tmin)


def _hyperplane_box_section(normal, offset_val, lo, side):
    """H^(M-1) of {n.x = v} within the half-open box prod [lo_i, lo_i+side)."""
    n = np.asarray(normal, dtype=float)
    m = n.shape[0]
    act = np.abs(n) > 1e-12
    r = int(act.sum())
    if r == 0:
        return 0.0
    # axes with zero normal component contribute a factor side each
    par_factor = side ** (m - r)
    u = n[act]
    # shift to the unit box: x = lo + side*y
    c = (offset_val - float(n[act] @ lo[act])) / side
    if r == 1:
        # axis-parallel hyperplane: a full (M-1)-face if the slice position
        # falls inside the half-open extent of that axis
        t = c / u[0]
        return par_factor if 0.0 <= t < 1.0 else 0.0
    # normalize and reflect so components are positive
    scale = np.linalg.norm(u)
    u = u / scale
    c = c / scale
    neg = u < 0
    c = c - float(u[neg].sum())
    u = np.abs(u)
    area_unit = _hyperplane_unitbox_area_pos(u, c)
    return par_factor * side ** (r - 1) * area_unit


def _hyperplane_unitbox_area_pos(u, c):
    """H^(r-1) of {u.y = c} in [0,1]^r, u unit with all u_i > 0."""
    r = u.shape[0]
    fact = math.factorial(r - 1)
    total = 0.0
    for bits in itertools.product((0, 1), repeat=r):
        t = c - float(u @ np.array(bits, dtype=float))
        if t > 0.0:
            total += (-1) ** int(sum(bits)) * t ** (r - 1)
    return total / (fact * float(np.prod(u)))


def _plane_box_mc(plane, lo, side, n_samples, seed=0):
    """Low-discrepancy estimate of H^k(V cap box) for 1 < k < M-1.

    Samples a Sobol grid on the parameter box covering the cube's shadow on
    V and rejects against the half-open cube. Returns (estimate, se)."""
    k, m = plane.dim, plane.ambient
    corners = lo + side * np.array(
        list(itertools.product((0.0, 1.0), repeat=m)), dtype=float
    )
    t = (corners - plane.offset) @ plane.basis.T
    t_lo, t_hi = t.min(axis=0), t.max(axis=0)
    vol = float(np.prod(t_hi - t_lo))
    if vol <= 0.0:
        return 0.0, 0.0
    sob = qmc.Sobol(d=k, scramble=False)
    pts = sob.random(n_samples)
    t_pts = t_lo + pts * (t_hi - t_lo)
    x = plane.offset + t_pts @ plane.basis
    inside = np.all((x >= lo) & (x < lo + side), axis=1)
    frac = inside.mean()
    est = vol * frac
    se = vol * float(np.sqrt(max(frac * (1 - frac), 0.0) / n_samples))
    return est, se


def plane_cube_measure(plane, cube, n_samples=DEFAULT_MC_SAMPLES, with_se=False):
    """H^k measure of plane (cap) half-open dyadic cube.

    Exact for k = 1 (parametric clipping) and k = M-1 (vertex decomposition
    of the halfspace-box volume derivative); quasi-Monte Carlo rejection
    sampling otherwise, with a standard-error estimate.
    """
    m = plane.ambient
    if cube.ambient != m:
        raise ConfigError("plane/cube ambient mismatch")
    k = plane.dim
    if k == 0:
        raise ConfigError("0-dimensional targets are not supported")
    if k > m:
        raise DegenerateInputError("plane dimension exceeds ambient")
    lo = cube.lower
    side = cube.side
    if k == m:
        val = float(side ** m)  # the whole box
        return (val, 0.0) if with_se else val
    if k == 1:
        val = _line_box_length(plane, lo, side)
        return (val, 0.0) if with_se else val
    if k == m - 1:
        normal = orthonormalize_complement(plane.basis)[0]
        val = _hyperplane_box_section(normal, float(normal @ plane.offset), lo, side)
        return (val, 0.0) if with_se else val
    est, se = _plane_box_mc(plane, lo, side, n_samples)
    return (est, se) if with_se else est


def orthonormalize_complement(basis):
    """Orthonormal basis of the orthogonal complement of the row span."""
    b = np.atleast_2d(basis)
    k, m = b.shape
    u, sv, vt = np.linalg.svd(b, full_matrices=True)
    return vt[k:]


# ---------------------------------------------------------------------------
# Coordinate planes H^I, H^{I,j,i} and transversality reports

def coordinate_plane(m, d, zero_factors, zero_coord=None):
    """H^I (and H^{I,j,i} when zero_coord=(j,i)) as an AffinePlane in R^(md).

    H^I = {x : x_j = 0 for j in I}; H^{I,j,i} additionally has x_j^i = 0.
    Factors and coordinates are 0-based here.
    """
    killed = set()
    for j in zero_factors:
        for i in range(d):
            killed.add(j * d + i)
    if zero_coord is not None:
        j, i = zero_coord
        killed.add(j * d + i)
    keep = [a for a in range(m * d) if a not in killed]
    basis = np.eye(m * d)[keep]
    return AffinePlane(basis=basis, offset=np.zeros(m * d))


@dataclass
class TransversalityEntry:
    zero_factors: tuple
    zero_coord: tuple | None  # (j, i) or None
    angle: float
    passed: bool


@dataclass
class TransversalityReport:
    threshold: float
    entries: list
    min_angle: float
    passed: bool


def transversality_check(planes, m, d, threshold):
    """Angles of each plane against every H^I and H^{I,j,i}.

    planes: a single AffinePlane or an iterable (e.g. sampled tangents).
    Pass iff every measured angle is >= threshold.  I ranges over proper
    subsets of the m factors; I = empty set contributes only the coordinate
    hyperplanes H^{0,j,i}.
    """
    if isinstance(planes, AffinePlane):
        planes = [planes]
    entries = []
    factor_ids = range(m)
    for plane in planes:
        if plane.ambient != m * d:
            raise ConfigError("plane ambient must be m*d")
        for r in range(m):
            for subset in itertools.combinations(factor_ids, r):
                if subset:
                    h = coordinate_plane(m, d, subset)
                    ang = principal_angle(plane, h)
                    entries.append(
                        TransversalityEntry(subset, None, ang, ang >= threshold)
                    )
                for j in factor_ids:
                    if j in subset:
                        continue
                    for i in range(d):
                        h = coordinate_plane(m, d, subset, zero_coord=(j, i))
                        ang = principal_angle(plane, h)
                        entries.append(
                            TransversalityEntry(subset, (j, i), ang, ang >= threshold)
                        )
    min_angle = min(e.angle for e in entries) if entries else np.pi / 2
    return TransversalityReport(
        threshold=threshold,
        entries=entries,
        min_angle=float(min_angle),
        passed=all(e.passed for e in entries),
    )


def gradient_independence_check(poly, point, m, d):
    """Fast sufficient transversality test from the per-factor gradient blocks.

    For q = d: the q gradients restricted to each factor block must be
    linearly independent.  For q < d: they must stay independent after
    adjoining any canonical direction of the block.
    """
    x = np.asarray(point, dtype=float)
    jac = poly.jacobian(x[None, :])[0]  # (q, m*d)
    q = jac.shape[0]
    if q > d:
        raise ConfigError("gradient criterion applies only for q <= d")
    for j in range(m):
        block = jac[:, j * d : (j + 1) * d]  # (q, d)
        if q == d:
            if np.linalg.matrix_rank(block, tol=RANK_TOL) < q:
                return False
        else:
            for i in range(d):
                stacked = np.vstack([block, np.eye(d)[i]])
                if np.linalg.matrix_rank(stacked, tol=RANK_TOL) < q + 1:
                    return False
    return True


# ---------------------------------------------------------------------------
# Text format: "k offset; basis rows"

def plane_to_text(plane):
    off = " ".join(repr(float(v)) for v in plane.offset)
    rows = "; ".join(
        " ".join(repr(float(v)) for v in row) for row in plane.basis
    )
    return f"{plane.dim} {off}; {rows}"


def plane_from_text(text):
    head, *rows = text.split(";")
    toks = head.split()
    k = int(toks[0])
    offset = np.array([float(t) for t in toks[1:]])
    basis = np.array([[float(t) for t in row.split()] for row in rows if row.strip()])
    if len(basis) != k:
        raise ConfigError("basis row count does not match declared dimension")
    return AffinePlane(basis=basis, offset=offset)
