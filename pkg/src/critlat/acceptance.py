"""The acceptance suite: exact small-instance checks plus banded finite-n checks.

Each criterion is a function returning a :class:`CriterionResult`.  Seeds
are fixed per criterion so a rerun reproduces every number.
"""
from __future__ import annotations

import io
import csv
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

PI2_OVER_24 = math.pi**2 / 24


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"criterion {self.number:>2} {'PASS' if self.passed else 'FAIL'}  {self.name}"


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    return v


# -- 1: Wilson uniformity ------------------------------------------------------------

def _uniformity(g, samples, seed, workers):
    from .oracle import enumerate_spanning_trees, matrix_tree_count
    from .wilson import WiredGraph, sample_trees, tree_counts

    trees = enumerate_spanning_trees(g)
    det = matrix_tree_count(g)
    wg = WiredGraph.from_small(g)
    _, slots = sample_trees(wg, samples, seed, workers=workers)
    counts = tree_counts(wg, slots)
    obs = np.array([counts.get(t, 0) for t in trees])
    stray = samples - int(obs.sum())
    p = float(stats.chisquare(obs).pvalue)
    return {"trees": len(trees), "determinant": det, "stray": stray, "chi2_p": p,
            "ok": len(trees) == det and stray == 0 and p > 1e-3}


def criterion_1(seed=101, workers=None, samples=200_000) -> CriterionResult:
    from .oracle import SmallGraph

    out = {"grid3x3": _uniformity(SmallGraph.wired_grid(3, 3), samples, seed, workers),
           "k4": _uniformity(SmallGraph.complete(4), samples, seed + 1, workers)}
    return CriterionResult(1, "Wilson uniformity", all(v["ok"] for v in out.values()), out)


# -- 2: loop-erased walk law ------------------------------------------------------------

def criterion_2(seed=102, workers=None, samples=200_000) -> CriterionResult:
    from .lattice import ExplicitSet
    from .oracle import SmallGraph, exact_lerw_law, total_variation
    from .paths import loop_erase, srw_until_exit
    from .rng import SeedStream

    sites = [(i, j) for i in range(2) for j in range(3)]
    region = ExplicitSet(sites)
    g = SmallGraph.from_region(region)
    label = {s: v for v, s in g.embedding.items()}
    start = 0
    exact = exact_lerw_law(g, start)
    root = SeedStream(seed)
    counts: dict = {}
    for i in range(samples):
        saw = loop_erase(srw_until_exit(g.embedding[start], region, root.child(i)))
        beta = tuple(label.get(tuple(int(c) for c in x), g.root) for x in saw.sites)
        counts[beta] = counts.get(beta, 0) + 1
    emp = {b: c / samples for b, c in counts.items()}
    tv = total_variation(exact, emp)
    return CriterionResult(2, "loop-erased walk law", tv < 0.02,
                           {"interior_vertices": len(sites), "paths": len(exact), "tv": tv})


# -- 3: Green function asymptotics ------------------------------------------------------------

def criterion_3(seed=103, workers=None, mc_samples=4_000_000) -> CriterionResult:
    from .green import green_free, green_free_array, green_free_mc
    from .harness import _canonical_points

    pts = _canonical_points(900, 4)
    r2 = np.einsum("ij,ij->i", pts, pts)
    pts, r2 = pts[r2 >= 100], r2[r2 >= 100]
    g = green_free_array(pts, r_exact=31.0)
    dev = np.abs(g * math.pi**2 * r2 / 2 - 1)
    sup = float(dev.max())
    g0 = green_free(np.zeros(4, np.int64))
    mc = green_free_mc(np.zeros(4, np.int64), mc_samples, seed, workers=workers)
    same3 = round(g0, 3) == round(mc.value, 3)
    ok = sup <= 0.02 and same3
    return CriterionResult(3, "Green function asymptotics", ok,
                           {"points": int(pts.shape[0]), "sup_dev": sup,
                            "argmax": [int(c) for c in pts[int(dev.argmax())]],
                            "G0_quadrature": g0, "G0_mc": mc.value, "G0_mc_stderr": mc.stderr,
                            "agree_3_decimals": same3})


# -- 4: squared Dirichlet Green function regression ---------------------------------------------

def criterion_4(seed=104, workers=None) -> CriterionResult:
    from .green import EIGHT_OVER_PI2, g2_log_regression

    fit = g2_log_regression(10, 2, 5)
    rel = abs(fit.slope / EIGHT_OVER_PI2 - 1)
    return CriterionResult(4, "squared Green function regression",
                           rel <= 0.10 and fit.residual_sd < 0.1,
                           {"slope": fit.slope, "reference": EIGHT_OVER_PI2, "rel_dev": rel,
                            "residual_sd": fit.residual_sd, "points": fit.points})


# -- 5: the constant lambda ---------------------------------------------------------------------

def criterion_5(seed=105, workers=None) -> CriterionResult:
    from .green import f_lambda, lambda_constant

    f60, f100 = f_lambda(60), f_lambda(100)
    lam = lambda_constant(200, 20)
    diff = abs(f100 - f60)
    return CriterionResult(5, "lambda constant", diff <= 0.05,
                           {"f60": f60, "f100": f100, "diff": diff,
                            "lambda": round(lam.value, 3)})


# -- 6: field moments ---------------------------------------------------------------------------

def criterion_6(seed=106, workers=None, samples=5000, n=8) -> CriterionResult:
    from .field import bump_diff, covariance_quadrature, moment_experiment

    h = bump_diff()
    m = moment_experiment(h, n, samples, seed, workers=workers)
    cov = covariance_quadrature(h)
    a = abs(m.mean.value) <= 3 * m.mean.stderr
    b = 0.5 <= m.var.value / cov <= 2
    c = 0.7 <= m.kurtosis_ratio.value <= 1.3
    return CriterionResult(6, "field moments", a and b and c,
                           {"n": n, "samples": samples, "mean": m.mean.value,
                            "mean_stderr": m.mean.stderr, "var": m.var.value, "quadrature": cov,
                            "var_ratio": m.var.value / cov, "kurtosis_ratio": m.kurtosis_ratio.value,
                            "checks": [a, b, c]})


# -- 7: exact relation between hitting and escape -------------------------------------------------

def criterion_7(seed=107, workers=None, outer=2000, inner_u=4, n=4) -> CriterionResult:
    from .lerw_stats import NestedConfig, ratio_check_exact_relation

    r = ratio_check_exact_relation(n, NestedConfig(outer=outer, inner=1, inner_u=inner_u), seed,
                                   workers=workers)
    ratio = r["ratio"].value
    ok = 0.5 <= ratio <= 1.25 and r["overlap"]
    return CriterionResult(7, "hitting versus escape relation", ok,
                           {"n": n, "lhs": r["lhs"].value, "lhs_stderr": r["lhs"].stderr,
                            "rhs": r["rhs"].value, "rhs_stderr": r["rhs"].stderr, "ratio": ratio,
                            "ratio_stderr": r["ratio"].stderr, "overlap": r["overlap"]})


# -- 8: intersection bands ------------------------------------------------------------------------

def criterion_8(seed=108, workers=None, ns=(16, 64, 256), outer=100, inner=40,
                joint_samples=2000, delta=1.0) -> CriterionResult:
    from .lerw_stats import NestedConfig, estimate_Xn, joint_nonintersection
    from .rng import SeedStream

    root = SeedStream(seed)
    rows = []
    for i, n in enumerate(ns):
        x = estimate_Xn(n, NestedConfig(outer=outer, inner=inner, delta=delta), root.child(i, 0),
                        workers=workers)
        j = joint_nonintersection(n, joint_samples, root.child(i, 1), delta, workers=workers)
        rows.append({"n": n, "X_mean": x.mean.value, "X_stderr": x.mean.stderr,
                     "moment_ratio": x.moment_ratio, "scaled_joint": j.scaled.value,
                     "scaled_stderr": j.scaled.stderr, "mean_field_ratio": j.mean_field_ratio})
    xs_ok = all(0.1 <= r["X_mean"] <= 3 for r in rows)
    js_ok = all(0.1 <= r["scaled_joint"] <= 1.2 for r in rows)
    shrink = []
    for k in range(1, len(rows) - 1):
        d1 = abs(rows[k]["scaled_joint"] - rows[k - 1]["scaled_joint"])
        d2 = abs(rows[k + 1]["scaled_joint"] - rows[k]["scaled_joint"])
        se = math.sqrt(rows[k + 1]["scaled_stderr"] ** 2 + 2 * rows[k]["scaled_stderr"] ** 2
                       + rows[k - 1]["scaled_stderr"] ** 2)
        shrink.append(d2 <= d1 + 3 * se)
    return CriterionResult(8, "intersection exponent bands", xs_ok and js_ok and all(shrink),
                           {"rows": rows, "reference": PI2_OVER_24, "delta": delta,
                            "shrinking": shrink})


# -- 9: two-sided sampler -----------------------------------------------------------------------

def criterion_9(seed=109, workers=None, tiny_samples=100_000, n=3, attempts=4000, outer=400,
                inner=50, paths=300) -> CriterionResult:
    from .lerw_stats import NestedConfig, mean_Zn
    from .oracle import SmallGraph
    from .rng import SeedStream
    from .twosided import acceptance_rate, sample_many, validate_marginal_tiny

    root = SeedStream(seed)
    m = validate_marginal_tiny(SmallGraph.wired_grid(2, 3), tiny_samples, root.child(0),
                               workers=workers)
    rate = acceptance_rate(n, attempts, root.child(1), workers=workers).rate
    z = mean_Zn(n, NestedConfig(outer=outer, inner=inner), root.child(2), convention="twosided",
                workers=workers)
    lattice_z = rate.zscore(z)
    ps, st = sample_many(n, paths, root.child(3), workers=workers)
    disjoint = sum(p.disjoint() for p in ps)
    ok = m.tv < 0.05 and abs(m.rate_z) <= 3 and abs(lattice_z) <= 3 and disjoint == len(ps)
    return CriterionResult(9, "two-sided sampler", ok,
                           {"tiny_tv": m.tv, "tiny_rate": m.stats.rate.value,
                            "tiny_normalizer": float(m.normalizer), "tiny_z": m.rate_z,
                            "lattice_rate": rate.value, "lattice_rate_stderr": rate.stderr,
                            "lattice_EZ": z.value, "lattice_EZ_stderr": z.stderr,
                            "lattice_z": lattice_z, "disjoint": disjoint, "accepted": len(ps),
                            "attempted": st.attempted})


# -- 10: reproducibility --------------------------------------------------------------------------

REPRO_CONFIGS = [
    ("wilson", {"N": 3.0, "mode": "forest"}),
    ("wilson", {"N": 4.0, "mode": "q", "samples": 2000}),
    ("field", {"n": 4.0, "samples": 300, "block": 64}),
    ("lerw", {"estimator": "pn-hat", "n": [2.0, 3.0], "outer": 64, "inner_u": 2}),
    ("lerw", {"estimator": "joint", "n": [4.0], "samples": 128, "delta": 1.0}),
    ("lerw", {"estimator": "xn", "n": [4.0], "outer": 16, "inner": 8, "delta": 1.0}),
    ("green", {"kind": "free", "r2_max": 6}),
    ("green", {"kind": "dirichlet", "N": 4.0, "r2_max": 6}),
    ("twosided", {"n": 2.0, "samples": 40}),
    ("oracle", {"graph": "k4", "task": "trees"}),
    ("oracle", {"graph": "grid2x3", "task": "lerw"}),
]


def criterion_10(seed=110, workers=None, configs=None) -> CriterionResult:
    from .harness import ExperimentConfig, run

    configs = REPRO_CONFIGS if configs is None else configs
    rows = []
    with tempfile.TemporaryDirectory() as tmp:
        for k, (exp, params) in enumerate(configs):
            digests = []
            for rep, w in enumerate((1, 8, 8)):
                out = os.path.join(tmp, f"{k}-{rep}")
                cfg = ExperimentConfig(exp, dict(params), seed=seed + k, workers=w, out_dir=out)
                digests.append(run(cfg).digests)
            rows.append({"experiment": exp, "params": params,
                         "identical": digests[0] == digests[1] == digests[2],
                         "files": sorted(digests[0])})
    return CriterionResult(10, "reproducibility", all(r["identical"] for r in rows),
                           {"runs": rows})


# -- 11: invariant suite -------------------------------------------------------------------------

def _inv_loop_erase(seed, cases):
    from .paths import loop_erase, srw_fixed_steps
    from .rng import SeedStream

    root = SeedStream(seed)
    rng = np.random.default_rng(seed)
    bad = 0
    for i in range(cases):
        d = int(rng.integers(2, 5))
        k = int(rng.integers(0, 400))
        w = srw_fixed_steps((0,) * d, k, root.child(i))
        le = loop_erase(w)
        s = le.sites
        ok = (len({tuple(x) for x in s}) == len(s) and np.array_equal(loop_erase(le).sites, s)
              and np.array_equal(s[0], w.sites[0]) and np.array_equal(s[-1], w.sites[-1]))
        bad += not ok
    return {"cases": cases, "failures": bad}


def _inv_green(seed, cases):
    from .green import DirichletSolver, green_free_array
    from .lattice import EuclideanBall

    rng = np.random.default_rng(seed)
    big, small = DirichletSolver(EuclideanBall(6, 4)), DirichletSolver(EuclideanBall(4, 4))
    k = int(math.ceil(math.sqrt(cases))) + 1
    iy = rng.choice(big.n, k, replace=False)
    cols = [big.column(big.points[i]) for i in iy]
    sym = sum(abs(cols[a][iy[b]] - cols[b][iy[a]]) > 1e-8
              for a in range(k) for b in range(k) if a != b)
    res = max(big.laplacian_residual(big.points[i]) for i in iy)
    mono = 0
    per = cases // k + 1
    for a, i in enumerate(iy):
        y = big.points[i]
        xs = rng.choice(big.n, per)
        gf = green_free_array(big.points[xs] - y)
        for x, g_big, g_free in zip(big.points[xs], cols[a][xs], gf):
            g_small = small.green(x, y)
            mono += not (0 <= g_small <= g_big + 1e-9 and g_big <= g_free + 1e-9)
    return {"symmetry_pairs": k * (k - 1), "monotonicity_cases": per * k,
            "symmetry_failures": int(sym), "monotonicity_failures": mono,
            "max_harmonic_residual": res, "ok": sym == 0 and mono == 0 and res < 1e-8}


def _inv_g2_chain(seed, cases):
    from .green import _solver, g2_free, green_free_array
    from .lattice import EuclideanBall

    rng = np.random.default_rng(seed)
    region = EuclideanBall(4, 5)
    s = _solver(region, 10**6)
    ys = s.points[rng.choice(s.n, 4, replace=False)]
    bad, checked = 0, 0
    per = cases // len(ys)
    for y in ys:
        g2n = s.g2_column(y)
        gf = green_free_array(s.points - y, 12.0)
        for i in rng.choice(s.n, per):
            # G~(x, y) = sum_z G_N(x, z) G(z, y); column(x) is G_N(x, .) by symmetry
            tilde = math.fsum(s.column(s.points[i]) * gf)
            full = g2_free(s.points[i], y) if checked < 40 else None
            ok = g2n[i] <= tilde + 1e-9 and (full is None or tilde <= full + 1e-9)
            bad += not ok
            checked += 1
    return {"cases": checked, "free_checked": min(checked, 40), "failures": bad}


def _inv_escape(seed, cases):
    from .lattice import EuclideanBall
    from .lerw_stats import escape_prob, hitting_prob
    from .rng import SeedStream

    rng = np.random.default_rng(seed)
    root = SeedStream(seed)
    guard = EuclideanBall(12, 4)
    bad = 0
    sets = 100
    for i in range(sets):
        k = int(rng.integers(1, 6))
        V = [tuple(int(c) for c in rng.integers(-3, 4, 4)) for _ in range(k)]
        h = hitting_prob(V, (0, 0, 0, 0), guard, cases // sets, root.child(i))
        e = escape_prob(V, (0, 0, 0, 0), guard, cases // sets, root.child(i))
        bad += not (e.value == 1 - h.value and 0 <= h.value <= 1)
    return {"sets": sets, "walks": sets * (cases // sets), "failures": bad}


def _inv_clamp(seed, cases, workers):
    from .lerw_stats import NestedConfig, sample_zn

    b = sample_zn(2, NestedConfig(outer=cases, inner=1, inner_u=1, inner_g=2), seed,
                  workers=workers)
    g = b.g
    return {"paths": int(g.size), "min": float(g.min()), "max": float(g.max()),
            "failures": int(np.count_nonzero((g < 1) | (g > 8)))}


def criterion_11(seed=111, workers=None, cases=10_000) -> CriterionResult:
    from .invariants import exhaustive_window_check

    d = {}
    d["loop_erase"] = _inv_loop_erase(seed, cases)
    walks, fails = exhaustive_window_check(12)
    d["window"] = {"walks": walks, "failures": fails}
    d["green"] = _inv_green(seed + 1, cases)
    d["g2_chain"] = _inv_g2_chain(seed + 2, 400)
    d["escape"] = _inv_escape(seed + 3, cases)
    d["clamp"] = _inv_clamp(seed + 4, cases, workers)
    ok = (d["loop_erase"]["failures"] == 0 and fails == 0 and d["green"]["ok"]
          and d["g2_chain"]["failures"] == 0 and d["escape"]["failures"] == 0
          and d["clamp"]["failures"] == 0)
    return CriterionResult(11, "invariant suite", ok, d)


CRITERIA: dict[int, Callable[..., CriterionResult]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
    11: criterion_11,
}


def run_criterion(number: int, seed: int | None = None, workers=None) -> CriterionResult:
    """Run one criterion; ``seed`` offsets the default per-criterion seed."""
    fn = CRITERIA[number]
    kw = {"workers": workers}
    if seed:
        kw["seed"] = fn.__defaults__[0] + 1000 * int(seed)
    t = time.monotonic()
    r = fn(**kw)
    r.seconds = round(time.monotonic() - t, 2)
    r.detail = _clean(r.detail)
    return r


def results_csv(results) -> str:
    """The pass/fail table; timings stay out so the file is reproducible."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["criterion", "name", "passed", "detail"])
    for r in results:
        w.writerow([r.number, r.name, "pass" if r.passed else "fail",
                    json.dumps(_clean(r.detail), sort_keys=True)])
    return buf.getvalue()
