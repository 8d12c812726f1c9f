"""Fractal percolation trees on the dyadic grid of [0,1]^d.

Three variants:

* ``extinction`` -- every child of a retained cube is kept independently with
  probability p (plain Bernoulli percolation on the 2^d-ary tree).
* ``surviving`` -- the process conditioned on non-extinction: each surviving
  cube draws an offspring count k from the conditional law (p_1,...,p_{2^d})
  and a uniformly random k-subset of its children survives.
* ``coupled`` -- the extinction variant read off a single field of per-cube
  uniforms U_Q, retained iff U_Q <= p; slices are monotone in p for a fixed
  seed, which yields the coupled ensemble (A_p)_p.

All randomness is counter-based (see :mod:`fracperc.rng`), so trees replay
exactly from (seed, variant, law) and distinct replicates never share state.
"""

from dataclasses import dataclass, field
from math import comb, log2

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .errors import BudgetError, ConfigError
from .rng import RESAMPLE_SALT, derive, root_key

DEFAULT_MAX_CUBES = 20_000_000


def extinction_probability(d, p):
    """Smallest fixed point in [0,1] of f(t) = (1-p+pt)^(2^d).

    Returns 1.0 for p <= 2^-d (subcritical/critical: a.s. extinction).
    Absolute error <= 1e-12.
    """
    if d < 1:
        raise ConfigError("ambient dimension must be >= 1")
    if not (0.0 < p <= 1.0):
        raise ConfigError("retention probability must be in (0, 1]")
    n = 1 << d
    if p <= 1.0 / n:
        return 1.0

    def g(t):
        return (1.0 - p + p * t) ** n - t

    # g(0) = (1-p)^n >= 0, g decreasing through the root, g(1) = 0 with
    # g'(1) = 2^d p - 1 > 0, so g < 0 just below 1.
    hi = 1.0 - 1e-13
    if g(hi) >= 0.0:  # root indistinguishable from 1 at this resolution
        return 1.0 if p < 1.0 else 0.0
    q = brentq(g, 0.0, hi, xtol=1e-15, rtol=8.9e-16)
    # Newton polish (monotone-safe near the simple root)
    for _ in range(3):
        fq = (1.0 - p + p * q) ** n
        dq = n * p * (1.0 - p + p * q) ** (n - 1) - 1.0
        if dq != 0.0:
            q -= (fq - q) / dq
    return min(max(q, 0.0), 1.0)


def offspring_distribution(d, p):
    """Conditional offspring law (p_1, ..., p_{2^d}) of the surviving process.

    p_k = C(2^d, k) p^k (1-q)^(k-1) (1 - p(1-q))^(2^d - k).
    """
    n = 1 << d
    if p <= 1.0 / n:
        raise ConfigError("surviving law undefined for p <= 2^-d")
    q = extinction_probability(d, p)
    k = np.arange(1, n + 1)
    binom = np.array([comb(n, int(i)) for i in k], dtype=float)
    pk = binom * p ** k * (1.0 - q) ** (k - 1) * (1.0 - p * (1.0 - q)) ** (n - k)
    return pk


@dataclass(frozen=True)
class GaltonWatsonLaw:
    """Branching law of fractal percolation in [0,1]^d with retention p."""

    d: int
    p: float
    q: float
    offspring: np.ndarray | None  # None when p <= 2^-d
    s: float

    @classmethod
    def create(cls, d, p):
        if not (1 <= d <= _kernels.MAX_DIM):
            raise ConfigError(f"d must be in 1..{_kernels.MAX_DIM}")
        if not (0.0 < p <= 1.0):
            raise ConfigError("p must be in (0, 1]")
        q = extinction_probability(d, p)
        off = offspring_distribution(d, p) if p > 2.0 ** -d else None
        return cls(d=d, p=p, q=q, offspring=off, s=d + log2(p))

    @property
    def supercritical(self):
        return self.p > 2.0 ** -self.d


@dataclass(frozen=True)
class DyadicCube:
    """Half-open cube prod_i [index_i 2^-n, (index_i+1) 2^-n) in [0,1]^M."""

    level: int
    index: tuple

    def __post_init__(self):
        if self.level < 0 or any(
            not (0 <= i < (1 << self.level)) for i in self.index
        ):
            raise ConfigError("cube index out of range for its level")

    @property
    def ambient(self):
        return len(self.index)

    @property
    def side(self):
        return 2.0 ** -self.level

    @property
    def lower(self):
        return np.array(self.index, dtype=float) * self.side

    @property
    def center(self):
        return (np.array(self.index, dtype=float) + 0.5) * self.side

    def parent(self):
        if self.level == 0:
            raise ConfigError("the root cube has no parent")
        return DyadicCube(self.level - 1, tuple(i >> 1 for i in self.index))

    def child(self, offsets):
        return DyadicCube(
            self.level + 1, tuple(2 * i + o for i, o in zip(self.index, offsets))
        )

    def contains(self, x):
        lo = self.lower
        return bool(np.all(x >= lo) and np.all(x < lo + self.side))


def _lexsort(idx, keys):
    order = np.lexsort(idx.T[::-1])
    return idx[order], keys[order]


@dataclass
class PercolationTree:
    """Per-level surviving cube sets with replayable per-cube randomness.

    levels[n] is an (N_n, d) int64 array, lexicographically sorted; _keys[n]
    carries the per-cube hash keys used to extend or re-randomize the tree.
    Immutable after construction.
    """

    law: GaltonWatsonLaw
    variant: str
    seed: int
    levels: list = field(default_factory=list)
    _keys: list = field(default_factory=list)

    @property
    def depth(self):
        return len(self.levels) - 1

    def count(self, n):
        return self.levels[n].shape[0]

    def level_set(self, n):
        """Set of index tuples at level n."""
        return set(map(tuple, self.levels[n].tolist()))


def _expand_raw(law, variant, idx, keys):
    if variant in ("extinction", "coupled"):
        return _kernels.expand_extinction(idx, keys, law.d, law.p)
    if variant == "surviving":
        cdf = np.cumsum(law.offspring)
        return _kernels.expand_surviving(idx, keys, law.d, cdf)
    raise ConfigError(f"unknown variant {variant!r}")


def _expand(law, variant, idx, keys, max_cubes):
    cidx, ckeys, _ = _expand_raw(law, variant, idx, keys)
    if cidx.shape[0] > max_cubes:
        raise BudgetError(
            f"level would hold {cidx.shape[0]} cubes (budget {max_cubes})"
        )
    return _lexsort(cidx, np.ascontiguousarray(ckeys))


def sample_tree(law, variant, seed, n_max, max_cubes=DEFAULT_MAX_CUBES):
    """Sample a percolation tree down to level n_max."""
    if variant == "surviving" and not law.supercritical:
        raise ConfigError("surviving variant requires p > 2^-d")
    if variant not in ("extinction", "surviving", "coupled"):
        raise ConfigError(f"unknown variant {variant!r}")
    idx = np.zeros((1, law.d), dtype=np.int64)
    keys = np.atleast_1d(root_key(seed))
    tree = PercolationTree(law=law, variant=variant, seed=int(seed))
    tree.levels.append(idx)
    tree._keys.append(keys)
    for _ in range(n_max):
        idx, keys = _expand(law, variant, idx, keys, max_cubes)
        tree.levels.append(idx)
        tree._keys.append(keys)
    return tree


def coupled_slice(d, seed, p, n_max, max_cubes=DEFAULT_MAX_CUBES):
    """Extinction-variant realization A_p of the coupled ensemble.

    For a fixed seed the level sets are monotone nondecreasing in p.
    """
    if not (0.0 <= p <= 1.0):
        raise ConfigError("p must be in [0, 1]")
    if p == 0.0:
        law = GaltonWatsonLaw(d=d, p=0.0, q=1.0, offspring=None, s=float("-inf"))
    else:
        law = GaltonWatsonLaw.create(d, p)
    return sample_tree(law, "coupled", seed, n_max, max_cubes=max_cubes)


def resample_level(tree, n, resample_index):
    """Fresh copy of level n+1 keeping levels <= n frozen.

    Randomness comes from a stream derived from (cube key, resample_index),
    so distinct indices give independent re-expansions and the same index
    replays exactly.
    """
    if n >= len(tree.levels):
        raise ConfigError("level not materialized")
    idx = tree.levels[n]
    keys = derive(tree._keys[n], RESAMPLE_SALT + int(resample_index) + 1)
    cidx, _ = _expand(tree.law, tree.variant, idx, keys, DEFAULT_MAX_CUBES)
    return cidx


@dataclass(frozen=True)
class NaturalMeasure:
    """nu_n = p^-n Leb|_{A_n}: density p^-n on the surviving level-n cubes."""

    tree: PercolationTree
    n: int

    @property
    def total_mass(self):
        # ||nu_n|| = N_n p^-n 2^-dn = N_n 2^-sn
        law = self.tree.law
        return self.tree.count(self.n) * (law.p * 2.0 ** law.d) ** -self.n

    def mass(self, region):
        """Mass of a union of dyadic cubes of level <= n."""
        law = self.tree.law
        idx = self.tree.levels[self.n]
        total = 0
        for cube in region:
            if cube.level > self.n:
                raise ConfigError("region not resolvable at this level")
            if cube.ambient != law.d:
                raise ConfigError("region ambient dimension mismatch")
            anc = idx >> (self.n - cube.level)
            inside = np.all(anc == np.array(cube.index, dtype=np.int64), axis=1)
            total += int(inside.sum())
        return total * (law.p * 2.0 ** law.d) ** -self.n


def natural_measure(tree, n):
    if n > tree.depth:
        raise ConfigError("level not materialized")
    return NaturalMeasure(tree=tree, n=n)


def survivor_count(tree, n):
    """N_n: exact number of surviving level-n cubes."""
    return tree.count(n)


def serialize_level(tree, n):
    """Text form of level n: one line "n idx_1 ... idx_M" per cube, sorted
    lexicographically. Round-trips bit-exactly through parse_level."""
    idx = tree.levels[n]
    return "".join(
        f"{n} " + " ".join(str(int(v)) for v in row) + "\n" for row in idx
    )


def parse_level(text):
    """Inverse of serialize_level: returns (level, (N, M) int64 index array)."""
    rows = []
    level = None
    for line in text.splitlines():
        if not line.strip():
            continue
        parts = [int(tok) for tok in line.split()]
        if level is None:
            level = parts[0]
        elif parts[0] != level:
            raise ConfigError("mixed levels in serialized cube set")
        rows.append(parts[1:])
    if level is None:
        raise ConfigError("empty serialized cube set")
    return level, np.array(rows, dtype=np.int64)


# ---------------------------------------------------------------------------
# Batched forests: many replicates expanded together (hot path for the
# growth / dimension / moment experiments).

def sample_forest(law, variant, seeds, n_max, max_cubes=DEFAULT_MAX_CUBES):
    """Sample len(seeds) independent trees in one batched structure.

    Returns (rep, idx) per level: rep[n] is an (N,) int64 array of replicate
    ids and idx[n] the matching (N, d) cube indices.  Bit-identical to
    sampling each tree separately with its own seed.
    """
    if variant == "surviving" and not law.supercritical:
        raise ConfigError("surviving variant requires p > 2^-d")
    seeds = np.asarray(seeds, dtype=np.uint64)
    r = seeds.shape[0]
    rep = np.arange(r, dtype=np.int64)
    idx = np.zeros((r, law.d), dtype=np.int64)
    keys = np.atleast_1d(root_key(seeds))
    levels = [(rep.copy(), idx.copy())]
    for _ in range(n_max):
        cidx, ckeys, par = _expand_raw(law, variant, idx, keys)
        if cidx.shape[0] > max_cubes:
            raise BudgetError("forest level exceeds cube budget")
        rep = rep[par]
        order = np.lexsort(tuple(cidx.T[::-1]) + (rep,))
        rep, idx, keys = rep[order], cidx[order], np.ascontiguousarray(ckeys[order])
        levels.append((rep, idx))
    return levels
