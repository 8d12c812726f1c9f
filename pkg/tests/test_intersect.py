"""Unit tests for intersection masses of product measures with planes and
varieties: exact base cases, pruning, caching, modes, and diagnostics."""

import math

import numpy as np
import pytest

import fracperc as fp
from fracperc.errors import ConfigError
from fracperc.geometry import orthonormalize


def line(direction, through):
    basis = orthonormalize(np.array([direction], dtype=float))
    off = np.asarray(through, dtype=float)
    return fp.AffinePlane(basis=basis, offset=off - basis.T @ (basis @ off))


def tree_d(d, p, seed, n, variant="extinction"):
    return fp.sample_tree(fp.GaltonWatsonLaw.create(d, p), variant, seed, n)


def spec_indep(trees):
    m = len(trees)
    return fp.ProductMeasureSpec(mode="independent", trees=trees, m=m, diag_level=0)


def test_level_zero_mass_is_section_measure():
    # Before any percolation the measure is Lebesgue on the cube, so the
    # level-0 mass is the plain section length.
    t = tree_d(2, 0.7, 1, 0)
    ms = fp.intersection_mass(spec_indep([t]), line([1, 1], [0, 0]), 0)
    assert ms.values[0] == pytest.approx(math.sqrt(2), abs=1e-12)


def test_full_retention_keeps_mass_constant():
    t = tree_d(2, 1.0, 3, 4)
    target = line([1, 0], [0.0, 0.3])
    ms = fp.intersection_mass(spec_indep([t]), target, 4)
    assert list(ms.levels) == [0, 1, 2, 3, 4]
    for v in ms.values:
        assert v == pytest.approx(1.0, abs=1e-12)


def test_pruned_equals_unpruned():
    target = line([2, 1], [0.0, 0.37])
    for seed in range(5):
        t = tree_d(2, 0.6, seed, 3)
        a = fp.intersection_mass(spec_indep([t]), target, 3, pruned=True)
        b = fp.intersection_mass(spec_indep([t]), target, 3, pruned=False)
        assert a.values == pytest.approx(b.values, abs=1e-12)
        # Pruning only skips zero-mass cubes, so visited counts may differ
        # while every reported mass agrees exactly.


def test_density_scaling_mean_one():
    # E[Y_n] = 1 for an axis line in d = 2 under the unconditioned process:
    # quick 2000-replicate check at 5 sigma.
    target = line([1, 0], [0.0, 0.25])
    cache = fp.MeasureCache()
    vals = []
    for seed in range(2000):
        t = tree_d(2, 0.5, seed, 1)
        vals.append(
            fp.intersection_mass(spec_indep([t]), target, 1, cache=cache).values[-1]
        )
    vals = np.array(vals)
    z = abs(vals.mean() - 1.0) / (vals.std(ddof=1) / math.sqrt(len(vals)))
    assert z < 5


def test_cache_shared_across_calls():
    target = line([3, 1], [0.0, 0.41])
    t = tree_d(2, 0.7, 8, 3)
    cache = fp.MeasureCache()
    a = fp.intersection_mass(spec_indep([t]), target, 3, cache=cache)
    filled = len(cache)
    b = fp.intersection_mass(spec_indep([t]), target, 3, cache=cache)
    assert len(cache) == filled
    assert a.values == pytest.approx(b.values, abs=0)


def test_product_of_two_factors():
    # Two independent d=1 factors against the anti-diagonal x + y = 1:
    # level-0 mass is the full diagonal length sqrt(2).
    ta, tb = tree_d(1, 0.8, 1, 2), tree_d(1, 0.8, 2, 2)
    target = line([1, -1], [0.5, 0.5])
    ms = fp.intersection_mass(spec_indep([ta, tb]), target, 2)
    assert ms.values[0] == pytest.approx(math.sqrt(2), abs=1e-12)
    assert all(v >= 0 for v in ms.values)


def test_power_mode_excludes_diagonal():
    # The diagonal line x = y only meets off-diagonal product cubes in corner
    # points, so the diagonal-free power measure gives it zero mass.
    t = tree_d(1, 0.9, 4, 3)
    spec = fp.ProductMeasureSpec(mode="power", trees=[t], m=2, diag_level=1)
    ms = fp.intersection_mass(spec, line([1, 1], [0, 0]), 3)
    assert math.isnan(ms.values[0])  # below the decomposition level
    for v in ms.values[1:]:
        assert v == pytest.approx(0.0, abs=1e-12)
    # An off-diagonal line does pick up mass.
    ms2 = fp.intersection_mass(spec, line([1, -1], [0.5, 0.5]), 3)
    assert any(v > 0 for v in ms2.values[1:])


def test_power_mode_matches_distinct_pair_enumeration():
    # Brute force at level 1 in d = 1: distinct index pairs only.
    t = tree_d(1, 0.9, 11, 1)
    spec = fp.ProductMeasureSpec(mode="power", trees=[t], m=2, diag_level=1)
    target = line([1, -1], [0.5, 0.5])
    ms = fp.intersection_mass(spec, target, 1)
    side = 0.5
    idx = t.levels[1][:, 0]
    total = 0.0
    for i in idx:
        for j in idx:
            if i == j:
                continue
            lo = np.array([i * side, j * side])
            seg = fp.plane_cube_measure(
                target, fp.DyadicCube(level=1, index=np.array([i, j]))
            )
            total += seg
    expected = (0.9**-2) * total
    assert ms.values[-1] == pytest.approx(expected, abs=1e-12)


def test_spec_validation():
    t = tree_d(1, 0.8, 0, 1)
    with pytest.raises(ConfigError):
        fp.ProductMeasureSpec(mode="bogus", trees=[t], m=1, diag_level=0)
    with pytest.raises(ConfigError):
        fp.ProductMeasureSpec(mode="independent", trees=[t], m=2, diag_level=0)
    with pytest.raises(ConfigError):
        fp.ProductMeasureSpec(mode="power", trees=[t], m=2, diag_level=0)


def test_martingale_resample_small():
    t = tree_d(2, 0.7, 2, 3)
    y, mean, se = fp.martingale_resample_check(
        spec_indep([t]), line([1, 0], [0.0, 0.3]), 1, 200
    )
    if se == 0:
        assert mean == pytest.approx(y, abs=1e-12)
    else:
        assert abs(mean - y) <= 6 * se


def test_second_moment_degenerate_at_full_retention():
    t = tree_d(2, 1.0, 5, 2)
    rep = fp.second_moment_estimate(
        spec_indep([t]), line([1, 0], [0.0, 0.3]), 2, 50, base_seed=3
    )
    assert rep.ratio == pytest.approx(1.0, abs=1e-12)
    assert rep.positive_frequency == 1.0
    assert rep.pz_lower_bound == pytest.approx(1.0, abs=1e-12)


def test_second_moment_survival_bound_consistent():
    t = tree_d(2, 0.7, 5, 3)
    rep = fp.second_moment_estimate(
        spec_indep([t]), line([1, 0], [0.0, 0.3]), 3, 300, base_seed=9
    )
    assert rep.pz_lower_bound == pytest.approx(rep.mean**2 / rep.mean_sq)
    # The Paley-Zygmund bound must not exceed the observed positive frequency
    # by more than sampling noise.
    assert rep.pz_lower_bound <= rep.positive_frequency + 0.1


def test_dependency_graph_shape():
    t = tree_d(2, 0.8, 6, 3)
    rep = fp.dependency_graph(spec_indep([t]), line([1, 0], [0.0, 0.3]), 3)
    assert rep.n == 3
    assert rep.num_vertices > 0
    assert sum(rep.degree_histogram.values()) == rep.num_vertices
    assert rep.max_degree == max(rep.degree_histogram)
    assert sum(rep.bucket_sizes.values()) == rep.num_vertices


def test_holder_modulus_tables():
    t = tree_d(2, 0.8, 7, 3)
    spec = spec_indep([t])
    targets = {f"t{i}": line([1, 0], [0.0, 0.2 + 0.1 * i]) for i in range(4)}
    metric = lambda a, b: a.metric_distance(b)
    out = fp.holder_modulus(spec, targets, metric, 3, [0.25, 0.5])
    assert set(out) == {"sup_ratio", "growth", "series"}
    assert set(out["sup_ratio"]) == {0.25, 0.5}
    assert set(out["series"]) == set(targets)
    for gamma, ratios in out["sup_ratio"].items():
        assert ratios >= 0
    for gamma, seq in out["growth"].items():
        assert len(seq) == 4  # levels 0..3


def test_mass_series_deterministic():
    t = tree_d(2, 0.6, 12, 3)
    target = line([1, 2], [0.0, 0.11])
    a = fp.intersection_mass(spec_indep([t]), target, 3)
    b = fp.intersection_mass(spec_indep([t]), target, 3)
    assert a.values == b.values and a.counts == b.counts
