"""Experiment orchestration: flat key=value configs, seeded deterministic
runs, CSV/JSON/SVG emission, and deterministic thread parallelism.
"""

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import BudgetError, ConfigError
from .geometry import AffinePlane, plane_from_text
from .polynomials import polynomial_from_text
from .percolation import (
    GaltonWatsonLaw,
    NaturalMeasure,
    sample_tree,
)
from .intersect import (
    ProductMeasureSpec,
    MeasureCache,
    holder_modulus,
    intersection_mass,
    second_moment_estimate,
)
from .patterns import (
    ConfigDescriptor,
    box_dimension_estimate,
    configuration_plane,
    configuration_polynomial,
    harris_check,
    pattern_parameter_dimension,
    percolation_dimension_test,
    presence_profile,
    subset_stress_test,
    wilson_interval,
)
from .rng import derive, root_key
from . import io as fio

COMMANDS = (
    "sample", "sweep", "intersect", "holder", "second-moment",
    "dimension", "pattern-dim", "perc-dim-test", "harris", "stress",
)

MASS_COLUMNS = ("seed", "param_id", "n", "Y", "kernel", "se")
FREQ_COLUMNS = (
    "family", "params", "p", "n", "replicates", "frequency", "ci_lo", "ci_hi"
)

# Per-command defaults; smoke presets are sized to finish within seconds.
_BASE_DEFAULTS = {
    "d": "1", "p": "0.8", "variant": "surviving", "n": "6",
    "replicates": "50", "seed": "0", "threads": "1",
    "coupled": "1", "tolerance_c": "", "mode": "independent", "m": "2",
    "family": "homothetic", "sites": "0,1,2", "lam": "0.5", "vol": "0.25",
    "ratios": "1.0,1.0", "p_grid": "0.4,0.55,0.7,0.85",
    "target_kind": "family", "target_spec": "",
    "grid_size": "4", "grid_delta": "0.05", "gammas": "0.5,1.0",
    "j_lo": "3", "j_hi": "", "fraction": "0.2", "strategy": "random",
    "shape": "line", "mc_samples": "4096", "diag_level": "1",
}

_COMMAND_DEFAULTS = {
    "perc-dim-test": {"d": "2", "p_grid": "0.3,0.4,0.45,0.5,0.55,0.6,0.7"},
    "intersect": {"d": "1", "m": "3"},
    "holder": {"d": "1", "m": "3"},
    "second-moment": {"d": "1", "m": "3"},
}

_PRESETS = {
    "smoke": {
        "n": "5", "replicates": "20", "p_grid": "0.45,0.6,0.75,0.9",
        "grid_size": "3", "j_lo": "2",
    },
    "paper": {
        "n": "8", "replicates": "400",
        "p_grid": "0.35,0.45,0.55,0.63,0.7,0.8,0.9",
        "grid_size": "6", "j_lo": "4",
    },
}


def parse_config_file(path):
    out = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"bad config line {line!r} (expected key=value)")
            k, _, v = line.partition("=")
            out[k.strip()] = v.strip()
    return out


class ExperimentConfig:
    """Resolved flat key=value configuration for one command."""

    def __init__(self, command, overrides=None, config_path=None, preset=None):
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}")
        self.command = command
        raw = dict(_BASE_DEFAULTS)
        raw.update(_COMMAND_DEFAULTS.get(command, {}))
        if preset:
            if preset not in _PRESETS:
                raise ConfigError(f"unknown preset {preset!r}")
            raw.update(_PRESETS[preset])
        if config_path:
            raw.update(parse_config_file(config_path))
        for k, v in (overrides or {}).items():
            if v is not None:
                raw[k] = str(v)
        unknown = set(raw) - set(_BASE_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        self.raw = raw
        self.preset = preset

    def i(self, key):
        try:
            return int(self.raw[key])
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {self.raw[key]!r}")

    def f(self, key):
        try:
            return float(self.raw[key])
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {self.raw[key]!r}")

    def s(self, key):
        return self.raw[key]

    def flag(self, key):
        return self.raw[key] not in ("0", "false", "no", "")

    def floats(self, key):
        try:
            return [float(t) for t in self.raw[key].split(",") if t.strip()]
        except ValueError:
            raise ConfigError(f"{key} must be comma-separated numbers")

    @property
    def tolerance(self):
        c = self.raw["tolerance_c"]
        if not c:
            return None
        return float(c) * math.sqrt(self.i("d")) * 2.0 ** -self.i("n")

    def law(self, p=None):
        return GaltonWatsonLaw.create(self.i("d"), self.f("p") if p is None else p)

    def descriptor(self):
        fam = self.s("family")
        d = self.i("d")
        if fam in ("homothetic", "translate", "isometric", "polygon"):
            vals = self.floats("sites")
            params = {"sites": np.array(vals).reshape(-1, d)}
        elif fam == "distance":
            params = {"lam": self.f("lam")}
        elif fam == "angle":
            params = {"lam": self.f("lam")}
        elif fam == "volume":
            params = {"vol": self.f("vol")}
        elif fam == "triangle":
            params = {"ratios": tuple(self.floats("ratios"))}
        else:
            raise ConfigError(f"unknown family {fam!r}")
        return ConfigDescriptor(family=fam, d=d, params=params)

    def target(self):
        kind = self.s("target_kind")
        if kind == "plane":
            return plane_from_text(self.s("target_spec"))
        if kind == "poly":
            return polynomial_from_text(self.s("target_spec"))
        if kind == "family":
            desc = self.descriptor()
            if desc.family in ("homothetic", "translate"):
                return configuration_plane(desc)
            return configuration_polynomial(desc)
        raise ConfigError(f"unknown target_kind {kind!r}")


def parallel_map(fn, args_list, threads):
    """Order-preserving map; results identical for any thread count because
    each task depends only on its own arguments and reduction is in task order."""
    if threads <= 1 or len(args_list) <= 1:
        return [fn(a) for a in args_list]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, args_list))


def _rep_seed(base_seed, r):
    return int(derive(root_key(int(base_seed)), r + 1))


def _product_spec(cfg, seed, n, m=None):
    mode = cfg.s("mode")
    d = cfg.i("d")
    m = cfg.i("m") if m is None else m
    law = cfg.law()
    variant = cfg.s("variant")
    key = root_key(seed)
    if mode == "power":
        tree = sample_tree(law, variant, int(derive(key, 1)), n)
        return ProductMeasureSpec(
            mode="power", trees=(tree,), m=m, diag_level=cfg.i("diag_level")
        )
    trees = tuple(
        sample_tree(law, variant, int(derive(key, j + 1)), n) for j in range(m)
    )
    if mode == "weighted":
        aux_law = GaltonWatsonLaw.create(m * d, cfg.f("p"))
        aux = sample_tree(aux_law, variant, int(derive(key, m + 1)), n)
        return ProductMeasureSpec(
            mode="weighted", trees=trees, m=m, aux_tree=aux
        )
    return ProductMeasureSpec(mode="independent", trees=trees, m=m)


# ---------------------------------------------------------------------------
# Command implementations.  Each returns a JSON-serializable result dict and
# writes its CSV/SVG files under out_dir.

def _run_sample(cfg, out_dir):
    n, reps = cfg.i("n"), cfg.i("replicates")
    law = cfg.law()
    variant = cfg.s("variant")

    def one(r):
        seed = _rep_seed(cfg.i("seed"), r)
        tree = sample_tree(law, variant, seed, n)
        counts = [tree.count(j) for j in range(n + 1)]
        masses = [NaturalMeasure(tree, j).total_mass for j in range(n + 1)]
        return seed, counts, masses

    results = parallel_map(one, range(reps), cfg.i("threads"))
    with fio.CsvWriter(os.path.join(out_dir, "results.csv"), MASS_COLUMNS) as csv:
        for seed, counts, masses in results:
            for j in range(n + 1):
                csv.row(seed, "count", j, float(counts[j]), "exact", 0.0)
                csv.row(seed, "natural_mass", j, masses[j], "exact", 0.0)
    mean_counts = [
        float(np.mean([res[1][j] for res in results])) for j in range(n + 1)
    ]
    mean_mass = [
        float(np.mean([res[2][j] for res in results])) for j in range(n + 1)
    ]
    js = list(range(1, n + 1))
    slope = float(
        np.polyfit(js, np.log2([max(c, 1e-300) for c in mean_counts[1:]]), 1)[0]
    )
    fio.svg_line_plot(
        os.path.join(out_dir, "growth.svg"),
        [("log2 mean count", js, [math.log2(max(c, 1e-300)) for c in mean_counts[1:]])],
        title="level-set growth", xlabel="level", ylabel="log2 N",
    )
    return {
        "mean_counts": mean_counts,
        "mean_natural_mass": mean_mass,
        "log2_slope": slope,
        "expected_dimension": law.s,
    }


def _run_sweep(cfg, out_dir):
    desc = cfg.descriptor()
    p_grid = sorted(cfg.floats("p_grid"))
    n, reps = cfg.i("n"), cfg.i("replicates")
    coupled = cfg.flag("coupled")

    def one(r):
        seed = _rep_seed(cfg.i("seed"), r)
        prof = presence_profile(
            desc, p_grid, n, seed, coupled=coupled, tolerance=cfg.tolerance,
            variant=cfg.s("variant"),
        )
        return seed, prof

    results = parallel_map(one, range(reps), cfg.i("threads"))
    with fio.CsvWriter(
        os.path.join(out_dir, "detail.csv"),
        ["replicate", "seed"] + [f"present_p{p!r}" for p in p_grid],
    ) as csv:
        for r, (seed, prof) in enumerate(results):
            csv.row(*([r, seed] + [int(v) for v in prof]))
    freqs = []
    with fio.CsvWriter(os.path.join(out_dir, "results.csv"), FREQ_COLUMNS) as csv:
        for i, p in enumerate(p_grid):
            hits = sum(res[1][i] for res in results)
            lo, hi = wilson_interval(hits, reps)
            freqs.append(hits / reps)
            csv.row(desc.family, desc.to_text(), p, n, reps, hits / reps, lo, hi)
    fio.svg_line_plot(
        os.path.join(out_dir, "frequency.svg"),
        [("presence frequency", p_grid, freqs)],
        title=f"{desc.family} presence vs p", xlabel="p", ylabel="frequency",
    )
    monotone = all(
        all(a <= b for a, b in zip(prof, prof[1:])) for _, prof in results
    )
    return {
        "p_grid": p_grid,
        "frequencies": freqs,
        "per_replicate_monotone": monotone,
        "coupled": coupled,
    }


def _run_intersect(cfg, out_dir):
    target = cfg.target()
    n, reps = cfg.i("n"), cfg.i("replicates")
    m = target.ambient // cfg.i("d")
    cache = MeasureCache()

    def one(r):
        seed = _rep_seed(cfg.i("seed"), r)
        spec = _product_spec(cfg, seed, n, m=m)
        series = intersection_mass(
            spec, target, n, cache=cache, mc_samples=cfg.i("mc_samples"),
            param_id=cfg.s("target_kind"),
        )
        return seed, series

    results = parallel_map(one, range(reps), cfg.i("threads"))
    with fio.CsvWriter(os.path.join(out_dir, "results.csv"), MASS_COLUMNS) as csv:
        for seed, series in results:
            for j in series.levels:
                csv.row(seed, series.param_id, j, series.values[j],
                        series.kernel, series.ses[j])
    mean_y = [
        float(np.nanmean([res[1].values[j] for res in results]))
        for j in range(n + 1)
    ]
    fio.svg_line_plot(
        os.path.join(out_dir, "mass.svg"),
        [("mean Y", list(range(n + 1)), mean_y)],
        title="intersection mass vs level", xlabel="level", ylabel="Y",
    )
    return {"mean_Y": mean_y, "final_mean_Y": mean_y[-1]}


def _run_holder(cfg, out_dir):
    n = cfg.i("n")
    gammas = cfg.floats("gammas")
    grid_size = cfg.i("grid_size")
    delta = cfg.f("grid_delta")
    desc = cfg.descriptor()
    if desc.family not in ("homothetic", "translate"):
        raise ConfigError("holder command expects a plane family")
    base = configuration_plane(desc)
    targets = {}
    for k in range(grid_size):
        off = base.offset.copy().astype(float)
        off[-1] += k * delta
        targets[f"shift{k}"] = AffinePlane(basis=base.basis, offset=off)
    seed = _rep_seed(cfg.i("seed"), 0)
    spec = _product_spec(cfg, seed, n, m=base.ambient // cfg.i("d"))
    table = holder_modulus(
        spec, targets, lambda a, b: a.metric_distance(b), n, gammas,
        mc_samples=cfg.i("mc_samples"),
    )
    with fio.CsvWriter(os.path.join(out_dir, "results.csv"), MASS_COLUMNS) as csv:
        for tid, series in sorted(table["series"].items()):
            for j in series.levels:
                csv.row(seed, tid, j, series.values[j], series.kernel, series.ses[j])
    return {
        "sup_ratio": {repr(g): table["sup_ratio"][g] for g in gammas},
        "growth": {repr(g): table["growth"][g] for g in gammas},
    }


def _run_second_moment(cfg, out_dir):
    target = cfg.target()
    n, reps = cfg.i("n"), cfg.i("replicates")
    seed = cfg.i("seed")
    spec = _product_spec(cfg, _rep_seed(seed, 0), n, m=target.ambient // cfg.i("d"))
    rep = second_moment_estimate(
        spec, target, n, reps, base_seed=seed, mc_samples=cfg.i("mc_samples")
    )
    with fio.CsvWriter(os.path.join(out_dir, "results.csv"), MASS_COLUMNS) as csv:
        csv.row(seed, "mean_Y", n, rep.mean, "aggregate", 0.0)
        csv.row(seed, "mean_Y2", n, rep.mean_sq, "aggregate", 0.0)
    return {
        "mean": rep.mean,
        "mean_sq": rep.mean_sq,
        "ratio": rep.ratio,
        "pz_lower_bound": rep.pz_lower_bound,
        "positive_frequency": rep.positive_frequency,
    }


def _run_dimension(cfg, out_dir):
    n, reps = cfg.i("n"), cfg.i("replicates")
    law = cfg.law()

    def one(r):
        seed = _rep_seed(cfg.i("seed"), r)
        tree = sample_tree(law, cfg.s("variant"), seed, n)
        return seed, box_dimension_estimate(tree, max(1, n - 6), n)

    results = parallel_map(one, range(reps), cfg.i("threads"))
    with fio.CsvWriter(os.path.join(out_dir, "results.csv"), MASS_COLUMNS) as csv:
        for seed, slope in results:
            csv.row(seed, "box_dim_slope", n, slope, "fit", 0.0)
    slopes = [s for _, s in results]
    return {
        "mean_slope": float(np.mean(slopes)),
        "se": float(np.std(slopes, ddof=1) / math.sqrt(len(slopes))) if reps > 1 else 0.0,
        "expected": law.s,
    }


def _run_pattern_dim(cfg, out_dir):
    n, reps = cfg.i("n"), cfg.i("replicates")
    d = cfg.i("d")
    law = cfg.law()
    sites = np.array(cfg.floats("sites")).reshape(-1, d)
    j_lo = cfg.i("j_lo")
    j_hi = int(cfg.raw["j_hi"]) if cfg.raw["j_hi"] else n - 1

    def one(r):
        seed = _rep_seed(cfg.i("seed"), r)
        tree = sample_tree(law, cfg.s("variant"), seed, n)
        est = pattern_parameter_dimension(tree, sites, n, j_lo=j_lo, j_hi=j_hi)
        return seed, est

    results = parallel_map(one, range(reps), cfg.i("threads"))
    with fio.CsvWriter(os.path.join(out_dir, "results.csv"), MASS_COLUMNS) as csv:
        for seed, est in results:
            csv.row(seed, "pattern_dim_slope", n, est.slope, "fit", 0.0)
    slopes = [est.slope for _, est in results]
    predicted = results[0][1].predicted
    return {
        "mean_slope": float(np.mean(slopes)),
        "se": float(np.std(slopes, ddof=1) / math.sqrt(len(slopes))) if reps > 1 else 0.0,
        "predicted": predicted,
    }


def _shape_cubes(shape, d, n):
    if shape == "line":
        if d < 2:
            raise ConfigError("line shape needs d >= 2")
        ax = np.arange(1 << n, dtype=np.int64)
        out = np.zeros(((1 << n), d), dtype=np.int64)
        out[:, 0] = ax
        return out
    if shape == "full":
        import itertools as it

        return np.array(list(it.product(range(1 << n), repeat=d)), dtype=np.int64)
    if shape == "point":
        return np.zeros((1, d), dtype=np.int64)
    raise ConfigError(f"unknown shape {shape!r}")


def _run_perc_dim_test(cfg, out_dir):
    d, n, reps = cfg.i("d"), cfg.i("n"), cfg.i("replicates")
    cubes = _shape_cubes(cfg.s("shape"), d, n)
    res = percolation_dimension_test(
        cubes, n, d, cfg.floats("p_grid"), reps, base_seed=cfg.i("seed")
    )
    with fio.CsvWriter(os.path.join(out_dir, "results.csv"), FREQ_COLUMNS) as csv:
        for row in res.curve:
            csv.row("percolation-hit", cfg.s("shape"), row.p, n, reps,
                    row.frequency, row.ci_lo, row.ci_hi)
    fio.svg_line_plot(
        os.path.join(out_dir, "survival.svg"),
        [("hit frequency", [r.p for r in res.curve],
          [r.frequency for r in res.curve])],
        title="percolation hit frequency", xlabel="p", ylabel="frequency",
    )
    return {
        "p_star": res.p_star,
        "dim_estimate": res.dim_estimate,
        "curve": [(r.p, r.frequency) for r in res.curve],
    }


def _harris_battery(d, n):
    def survives(c, nn):
        return c.shape[0] > 0

    def left(c, nn):
        return bool(np.any(c[:, 0] < (1 << max(nn - 1, 0))))

    def right(c, nn):
        return bool(np.any(c[:, 0] >= (1 << max(nn - 1, 0))))

    def at_least_two(c, nn):
        return c.shape[0] >= 2

    return [
        ("left-hit/right-hit", left, right),
        ("survive/survive", survives, survives),
        ("survive/at-least-two", survives, at_least_two),
    ]


def _run_harris(cfg, out_dir):
    n, reps = cfg.i("n"), cfg.i("replicates")
    law = cfg.law()
    rows = []
    for name, e1, e2 in _harris_battery(law.d, n):
        res = harris_check(
            e1, e2, law, n, reps, base_seed=cfg.i("seed"), variant="extinction"
        )
        rows.append((name, res))
    with fio.CsvWriter(
        os.path.join(out_dir, "results.csv"),
        ("pair", "p1", "p2", "p12", "bound", "margin", "sigma", "violated"),
    ) as csv:
        for name, res in rows:
            csv.row(name, res.p1, res.p2, res.p12, res.bound, res.margin,
                    res.sigma, int(res.violated))
    return {
        name: {"margin": res.margin, "violated": res.violated}
        for name, res in rows
    }


def _run_stress(cfg, out_dir):
    desc = cfg.descriptor()
    n, reps = cfg.i("n"), cfg.i("replicates")
    law = cfg.law()
    tree = sample_tree(law, cfg.s("variant"), _rep_seed(cfg.i("seed"), 0), n)
    row = subset_stress_test(
        tree, desc, cfg.f("fraction"), cfg.s("strategy"), n, reps,
        base_seed=cfg.i("seed"), tolerance=cfg.tolerance,
    )
    with fio.CsvWriter(os.path.join(out_dir, "results.csv"), FREQ_COLUMNS) as csv:
        csv.row(desc.family, desc.to_text(), cfg.f("p"), n, reps,
                row.frequency, row.ci_lo, row.ci_hi)
    return {
        "fraction": cfg.f("fraction"),
        "strategy": cfg.s("strategy"),
        "frequency": row.frequency,
        "ci": [row.ci_lo, row.ci_hi],
    }


_RUNNERS = {
    "sample": _run_sample,
    "sweep": _run_sweep,
    "intersect": _run_intersect,
    "holder": _run_holder,
    "second-moment": _run_second_moment,
    "dimension": _run_dimension,
    "pattern-dim": _run_pattern_dim,
    "perc-dim-test": _run_perc_dim_test,
    "harris": _run_harris,
    "stress": _run_stress,
}


def run(cfg, out_dir):
    """Execute one configured experiment; returns the JSON summary dict."""
    fio.ensure_dir(out_dir)
    t0 = time.monotonic()
    summary = {
        "command": cfg.command,
        "config": dict(sorted(cfg.raw.items())),
        "preset": cfg.preset,
        "complete": False,
    }
    try:
        summary["results"] = _RUNNERS[cfg.command](cfg, out_dir)
        summary["complete"] = True
    finally:
        summary["wall_time_s"] = round(time.monotonic() - t0, 3)
        fio.write_json(os.path.join(out_dir, "summary.json"), summary)
    return summary


def aggregate(csv_paths, out_path=None):
    """Pool frequency CSVs with identical schema; Wilson intervals recomputed
    from pooled counts."""
    if not csv_paths:
        raise ConfigError("no inputs")
    header0 = None
    pooled = {}
    for path in csv_paths:
        header, rows = fio.read_csv(path)
        if header0 is None:
            header0 = header
            if "frequency" not in header:
                raise ConfigError("aggregate expects frequency-table CSVs")
        elif header != header0:
            raise ConfigError("schema mismatch between inputs")
        for row in rows:
            key = (row["family"], row["params"], row["p"], row["n"])
            reps = int(row["replicates"])
            hits = round(float(row["frequency"]) * reps)
            cur = pooled.setdefault(key, [0, 0])
            cur[0] += hits
            cur[1] += reps
    out_rows = []
    for key in sorted(pooled):
        hits, reps = pooled[key]
        lo, hi = wilson_interval(hits, reps)
        out_rows.append(
            dict(zip(FREQ_COLUMNS,
                     [key[0], key[1], float(key[2]), int(key[3]), reps,
                      hits / reps, lo, hi]))
        )
    if out_path:
        with fio.CsvWriter(out_path, FREQ_COLUMNS) as csv:
            for row in out_rows:
                csv.row(**row)
    return out_rows
