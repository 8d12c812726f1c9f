"""Polynomial maps R^M -> R^q: evaluation, Jacobians, interval enclosures,
variety-cube measures via the coarea formula, and tangent planes.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import ConfigError, DegenerateInputError, SingularityError
from .geometry import AffinePlane, RANK_TOL

DEFAULT_MC_SAMPLES = 1 << 18
DEFAULT_SUBDIV_LEVELS = 4
DEFAULT_EPSILON_DIVISOR = 32.0


@dataclass(frozen=True)
class PolynomialMap:
    """Polynomial map given per component as a dict {multi_index: coeff}.

    A multi-index is a length-M tuple of nonnegative integer exponents.
    """

    ambient: int
    components: tuple  # tuple of dicts

    def __post_init__(self):
        comps = []
        for comp in self.components:
            clean = {}
            for alpha, c in comp.items():
                alpha = tuple(int(a) for a in alpha)
                if len(alpha) != self.ambient or any(a < 0 for a in alpha):
                    raise ConfigError(f"bad multi-index {alpha}")
                c = float(c)
                if c != 0.0:
                    clean[alpha] = clean.get(alpha, 0.0) + c
            comps.append(dict(clean))
        object.__setattr__(self, "components", tuple(comps))

    @property
    def codomain(self):
        return len(self.components)

    @property
    def degree(self):
        return max(
            (sum(a) for comp in self.components for a in comp), default=0
        )

    def __call__(self, x):
        """Evaluate at points x of shape (..., M); returns (..., q)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (self.codomain,))
        for ci, comp in enumerate(self.components):
            acc = out[..., ci]
            for alpha, c in comp.items():
                term = np.full(x.shape[:-1], c)
                for i, a in enumerate(alpha):
                    if a:
                        term = term * x[..., i] ** a
                acc += term
        return out

    def jacobian(self, x):
        """Analytic Jacobian at points x of shape (..., M); returns (..., q, M)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (self.codomain, self.ambient))
        for ci, comp in enumerate(self.components):
            for alpha, c in comp.items():
                for i, a in enumerate(alpha):
                    if not a:
                        continue
                    term = np.full(x.shape[:-1], c * a)
                    for k, ak in enumerate(alpha):
                        e = ak - 1 if k == i else ak
                        if e:
                            term = term * x[..., k] ** e
                    out[..., ci, i] += term
        return out

    def partial(self, i):
        """The polynomial map of partial derivatives d/dx_i."""
        comps = []
        for comp in self.components:
            dcomp = {}
            for alpha, c in comp.items():
                if alpha[i] == 0:
                    continue
                beta = list(alpha)
                beta[i] -= 1
                dcomp[tuple(beta)] = dcomp.get(tuple(beta), 0.0) + c * alpha[i]
            comps.append(dcomp)
        return PolynomialMap(ambient=self.ambient, components=tuple(comps))

    def interval(self, lo, hi):
        """Interval-arithmetic enclosure of the range over the box [lo, hi].

        lo, hi: arrays of shape (..., M).  Returns (enc_lo, enc_hi) each of
        shape (..., q).  Exact monomial intervals, summed; the enclosure is
        inclusion-monotone in the box.
        """
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        out_lo = np.zeros(lo.shape[:-1] + (self.codomain,))
        out_hi = np.zeros(lo.shape[:-1] + (self.codomain,))
        for ci, comp in enumerate(self.components):
            for alpha, c in comp.items():
                t_lo = np.full(lo.shape[:-1], 1.0)
                t_hi = np.full(lo.shape[:-1], 1.0)
                for i, a in enumerate(alpha):
                    if not a:
                        continue
                    p_lo, p_hi = _power_interval(lo[..., i], hi[..., i], a)
                    cands = np.stack(
                        [t_lo * p_lo, t_lo * p_hi, t_hi * p_lo, t_hi * p_hi]
                    )
                    t_lo, t_hi = cands.min(axis=0), cands.max(axis=0)
                if c >= 0:
                    out_lo[..., ci] += c * t_lo
                    out_hi[..., ci] += c * t_hi
                else:
                    out_lo[..., ci] += c * t_hi
                    out_hi[..., ci] += c * t_lo
        return out_lo, out_hi

    def may_vanish(self, lo, hi):
        """True where 0 is inside the interval enclosure of every component."""
        enc_lo, enc_hi = self.interval(lo, hi)
        return np.all((enc_lo <= 0.0) & (enc_hi >= 0.0), axis=-1)


def _power_interval(lo, hi, a):
    """Tight interval of x^a over [lo, hi] (elementwise)."""
    pl, ph = lo ** a, hi ** a
    if a % 2 == 1:
        return pl, ph
    low = np.where((lo <= 0.0) & (hi >= 0.0), 0.0, np.minimum(pl, ph))
    return low, np.maximum(pl, ph)


# ---------------------------------------------------------------------------
# Text format: "component multi_index coefficient" per line

def polynomial_to_text(poly):
    lines = [f"# ambient {poly.ambient} codomain {poly.codomain}"]
    for ci, comp in enumerate(poly.components):
        for alpha in sorted(comp):
            lines.append(f"{ci} {' '.join(str(a) for a in alpha)} {comp[alpha]!r}")
    return "\n".join(lines) + "\n"


def polynomial_from_text(text):
    ambient = None
    comps = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            toks = line.split()
            ambient = int(toks[2])
            q = int(toks[4])
            comps = {i: {} for i in range(q)}
            continue
        toks = line.split()
        ci = int(toks[0])
        coeff = float(toks[-1])
        alpha = tuple(int(t) for t in toks[1:-1])
        if ambient is None:
            ambient = len(alpha)
        comps.setdefault(ci, {})[alpha] = coeff
    if ambient is None:
        raise ConfigError("empty polynomial text")
    q = max(comps) + 1 if comps else 0
    return PolynomialMap(
        ambient=ambient, components=tuple(comps.get(i, {}) for i in range(q))
    )


# ---------------------------------------------------------------------------
# Variety measures

def _coarea_jacobian_factor(jac):
    """J_q(DP) = sqrt(det(DP DP^T)) for jac of shape (..., q, M)."""
    gram = jac @ np.swapaxes(jac, -1, -2)
    det = np.linalg.det(gram)
    return np.sqrt(np.maximum(det, 0.0))


@dataclass
class VarietyMeasureResult:
    estimate: float
    se: float
    epsilon: float
    n_samples: int
    min_jacobian: float


def variety_cube_measure(
    poly,
    cube,
    epsilon=None,
    n_samples=DEFAULT_MC_SAMPLES,
    singular_tol=1e-6,
    with_detail=False,
):
    """H^(M-q) measure of {P = 0} within a half-open dyadic cube.

    Smoothed-coarea estimator: H^(M-q)(V cap Q) is approximated by
    vol(Q) * mean over QMC points of J_q(DP)(x) * prod_k 1[|P_k(x)| < eps]/(2 eps),
    valid when DP has full rank q on the variety inside Q.  Raises
    SingularityError when a sample point near the variety has a nearly
    rank-deficient differential.
    """
    m = poly.ambient
    q = poly.codomain
    if q >= m:
        raise ConfigError("variety codimension must be < ambient dimension")
    lo = cube.lower
    side = cube.side
    if epsilon is None:
        epsilon = side / DEFAULT_EPSILON_DIVISOR
    sob = qmc.Sobol(d=m, scramble=False)
    x = lo + side * sob.random(n_samples)
    vals = poly(x)                      # (N, q)
    near = np.all(np.abs(vals) < epsilon, axis=-1)
    contrib = np.zeros(n_samples)
    min_jac = np.inf
    if near.any():
        jac = poly.jacobian(x[near])
        jfac = _coarea_jacobian_factor(jac)
        min_jac = float(jfac.min())
        if min_jac < singular_tol:
            raise SingularityError(
                f"differential nearly rank-deficient near the variety "
                f"(J_q = {min_jac:.3e} < {singular_tol:g})"
            )
        contrib[near] = jfac / (2.0 * epsilon) ** q
    vol = side ** m
    est = vol * float(contrib.mean())
    se = vol * float(contrib.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
    if with_detail:
        return VarietyMeasureResult(
            estimate=est,
            se=se,
            epsilon=float(epsilon),
            n_samples=n_samples,
            min_jacobian=(min_jac if np.isfinite(min_jac) else float("nan")),
        )
    return est


def variety_box_count(poly, cube, levels=DEFAULT_SUBDIV_LEVELS):
    """Diagnostic: counts of subcubes whose interval enclosure contains 0.

    Subdivides the cube `levels` times; returns the list of counts N_j for
    j = 0..levels.  For a well-behaved codimension-q variety the counts grow
    like 2^(j(M-q)); the ratio log2(N_last/N_prev) estimates the box dimension.
    """
    m = poly.ambient
    lo0 = cube.lower[None, :]
    side = cube.side
    counts = []
    active = lo0
    offsets = np.array(
        list(itertools.product((0, 1), repeat=m)), dtype=float
    )
    for j in range(levels + 1):
        h = side / (1 << j)
        keep = poly.may_vanish(active, active + h)
        active = active[keep]
        counts.append(int(active.shape[0]))
        if j < levels:
            if active.shape[0] * (1 << m) > 20_000_000:
                raise ConfigError("subdivision diagnostic exceeds cube budget")
            active = (active[:, None, :] + offsets[None, :, :] * (h / 2.0)).reshape(
                -1, m
            )
    return counts


def variety_tangent(poly, point, rank_tol=RANK_TOL):
    """Tangent plane of {P = 0} at a (near-)root: nullspace of the Jacobian.

    Raises SingularityError when the differential is rank-deficient there.
    """
    x = np.asarray(point, dtype=float)
    jac = poly.jacobian(x[None, :])[0]  # (q, M)
    u, sv, vt = np.linalg.svd(jac)
    scale = max(1.0, sv[0] if sv.size else 1.0)
    rank = int((sv > rank_tol * scale).sum())
    if rank < poly.codomain:
        raise SingularityError(
            f"Jacobian rank {rank} < {poly.codomain} at tangent point"
        )
    basis = vt[rank:]
    return AffinePlane(basis=basis, offset=x)


def newton_refine(poly, x0, max_iter=30, tol=1e-12):
    """Gauss-Newton projection of x0 towards {P = 0}; returns (x, converged)."""
    x = np.asarray(x0, dtype=float).copy()
    for _ in range(max_iter):
        f = poly(x[None, :])[0]
        if np.max(np.abs(f)) < tol:
            return x, True
        jac = poly.jacobian(x[None, :])[0]
        step, *_ = np.linalg.lstsq(jac, -f, rcond=None)
        if not np.all(np.isfinite(step)):
            return x, False
        x = x + step
        if np.linalg.norm(step) < 1e-15:
            break
    return x, bool(np.max(np.abs(poly(x[None, :])[0])) < tol)
