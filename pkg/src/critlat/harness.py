"""Experiment orchestration: configuration, runs, manifests, plots and the CLI.

A run is fully determined by its :class:`ExperimentConfig` minus the
scheduling fields (worker count, output directory, time budget).  Every CSV
it writes starts with a ``#config_hash=`` line, and the manifest records a
SHA-256 digest of each output so reruns can be compared byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from . import __version__
from .estimate import Estimate, thread_count

SCHEMA_VERSION = 1
CHECKPOINT_INTERVAL = 60.0
PI2_OVER_24 = math.pi**2 / 24


class HarnessError(Exception):
    code = 1


class UnknownExperiment(HarnessError):
    code = 2


class InvalidParameters(HarnessError):
    code = 3


class BudgetExceeded(HarnessError):
    code = 4


class SchemaMismatch(HarnessError):
    code = 5


class Interrupted(HarnessError):
    """Raised by the ``stop_after`` test hook once a checkpoint is on disk."""

    code = 6


# -- configuration -------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """A named experiment with its parameters and seed.

    ``workers``, ``out_dir`` and ``budget_seconds`` control scheduling only
    and are excluded from the hash.
    """

    experiment: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    workers: int | None = None
    out_dir: str = "."
    budget_seconds: float | None = None
    schema: int = SCHEMA_VERSION

    def canonical(self) -> dict:
        return {"schema": self.schema, "experiment": self.experiment,
                "params": _jsonable(self.params), "seed": int(self.seed)}

    @property
    def hash(self) -> str:
        raw = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(raw.encode()).hexdigest()

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if d.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise InvalidParameters(f"unsupported config schema {d.get('schema')!r}")
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise InvalidParameters(f"unknown config fields {sorted(unknown)}")
        if "experiment" not in d:
            raise InvalidParameters("config needs an 'experiment' field")
        if not isinstance(d.get("params", {}), dict):
            raise InvalidParameters("'params' must be an object")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as e:
                raise InvalidParameters(f"config is not valid JSON: {e}") from None


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in sorted(v.items())}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


@dataclass
class RunManifest:
    config_hash: str
    code_version: str
    wall_time: float
    criteria: dict
    digests: dict
    experiment: str = ""
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def effective_workers(requested: int | None) -> int:
    """Requested worker count, capped by ``CRITLAT_THREADS`` when set."""
    w = requested or (os.cpu_count() or 1)
    if os.environ.get("CRITLAT_THREADS"):
        w = min(w, thread_count())
    return max(1, int(w))


# -- run context and checkpoints -------------------------------------------------

class Checkpoint:
    """Completed-work watermark plus partial results, saved atomically."""

    def __init__(self, path: str, config_hash: str, interval: float):
        self.path = path
        self.hash = config_hash
        self.interval = interval
        self.last = time.monotonic()

    def load(self):
        if not os.path.exists(self.path):
            return None
        with np.load(self.path, allow_pickle=False) as z:
            if str(z["hash"]) != self.hash:
                return None
            state = json.loads(str(z["state"]))
            arrays = {k[2:]: z[k] for k in z.files if k.startswith("a_")}
        return int(state.pop("_watermark")), state, arrays

    def save(self, watermark: int, state: dict | None = None, arrays: dict | None = None):
        st = dict(state or {})
        st["_watermark"] = int(watermark)
        tmp = self.path + ".tmp.npz"
        np.savez(tmp, hash=np.array(self.hash), state=np.array(json.dumps(st, sort_keys=True)),
                 **{f"a_{k}": v for k, v in (arrays or {}).items()})
        os.replace(tmp, self.path)
        self.last = time.monotonic()

    def due(self) -> bool:
        return time.monotonic() - self.last >= self.interval

    def clear(self):
        if os.path.exists(self.path):
            os.remove(self.path)


class RunContext:
    def __init__(self, cfg: ExperimentConfig, interval: float, stop_after: int | None):
        self.cfg = cfg
        self.p = cfg.params
        self.hash = cfg.hash
        self.workers = effective_workers(cfg.workers)
        self.out_dir = cfg.out_dir
        self.outputs: list[str] = []
        self.criteria: dict = {}
        self.start = time.monotonic()
        self.units = 0
        self.stop_after = stop_after
        self.ckpt = Checkpoint(os.path.join(cfg.out_dir, f".checkpoint-{self.hash[:16]}.npz"),
                               self.hash, interval)

    def write(self, name: str, text: str, header: bool = True) -> str:
        """Write an output file with LF endings; CSVs get the hash line."""
        path = os.path.join(self.out_dir, name)
        if header and not text.startswith("#config_hash="):
            text = f"#config_hash={self.hash}\n" + text
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
        self.outputs.append(name)
        return path

    def write_json(self, name: str, obj: dict) -> str:
        obj = dict(obj, config_hash=self.hash)
        return self.write(name, json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n",
                          header=False)

    def unit_done(self, watermark: int, state=None, arrays=None, final: bool = False):
        """Bookkeeping after a unit of work: periodic checkpoint, budget and
        the interruption hook."""
        self.units += 1
        stop = self.stop_after is not None and self.units >= self.stop_after
        over = (self.cfg.budget_seconds is not None
                and time.monotonic() - self.start > self.cfg.budget_seconds)
        if not final and (stop or over or self.ckpt.due()):
            self.ckpt.save(watermark, state, arrays)
        if final:
            return
        if over:
            raise BudgetExceeded(f"time budget of {self.cfg.budget_seconds} s exhausted "
                                 f"at watermark {watermark}; rerun to resume")
        if stop:
            raise Interrupted(f"stopped at watermark {watermark}")


def _rows_csv(cols: list, rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


# -- parameter handling ----------------------------------------------------------

def _params(ctx: RunContext, defaults: dict) -> dict:
    unknown = set(ctx.p) - set(defaults)
    if unknown:
        raise InvalidParameters(f"unknown parameters for {ctx.cfg.experiment}: {sorted(unknown)}")
    out = dict(defaults)
    for k, v in ctx.p.items():
        d = defaults[k]
        try:
            if isinstance(d, bool):
                v = bool(v)
            elif isinstance(d, int) and not isinstance(v, list):
                if float(v) != int(float(v)):
                    raise ValueError
                v = int(float(v))
            elif isinstance(d, float):
                v = float(v)
        except (TypeError, ValueError):
            raise InvalidParameters(f"parameter {k!r} has invalid value {v!r}") from None
        out[k] = v
    return out


def _positive(p: dict, *names):
    for k in names:
        if not p[k] > 0:
            raise InvalidParameters(f"parameter {k!r} must be positive")


def _choice(p: dict, name: str, options):
    if p[name] not in options:
        raise InvalidParameters(f"{name} must be one of {sorted(options)}, got {p[name]!r}")


# -- experiments -------------------------------------------------------------------

def _exp_wilson(ctx: RunContext):
    from . import wilson as W

    p = _params(ctx, {"N": 4.0, "d": 4, "mode": "forest", "x": [0, 0, 0, 0], "y": [1, 0, 0, 0],
                      "samples": 1000, "method": "walks"})
    _choice(p, "mode", {"forest", "q"})
    _positive(p, "N", "samples")
    if p["mode"] == "forest":
        g = W.WiredGraph.ball(p["N"], p["d"])
        f = W.wilson_ust(g, seed=ctx.cfg.seed)
        coords = g.points
        rows = [[v] + [int(c) for c in coords[v]] for v in range(g.n)]
        ctx.write("vertices.csv", _rows_csv(["vertex"] + [f"x{i + 1}" for i in range(p["d"])], rows))
        ctx.write("forest.csv", f.to_csv())
        ctx.write("partition.csv", W.usf_components(f).to_csv())
        return
    _choice(p, "method", {"walks", "wilson"})
    if len(p["x"]) != p["d"] or len(p["y"]) != p["d"]:
        raise InvalidParameters("x and y must have d coordinates")
    try:
        q = W.same_component_prob(p["N"], p["x"], p["y"], p["samples"], ctx.cfg.seed, p["method"],
                                  p["d"], workers=ctx.workers)
    except ValueError as e:
        raise InvalidParameters(str(e)) from None
    ctx.write("q.csv", _rows_csv(["N", "x", "y", "method", "value", "stderr", "samples", "seed"],
                                 [[p["N"], " ".join(map(str, p["x"])), " ".join(map(str, p["y"])),
                                   p["method"], q.value, q.stderr, q.samples, ctx.cfg.seed]]))


def _exp_field(ctx: RunContext):
    from . import field as F

    p = _params(ctx, {"n": 8.0, "samples": 5000, "h": "bump-diff", "d": 4, "radius": 0.75,
                      "offset": 0.25, "block": 256})
    _positive(p, "n", "samples", "block")
    _choice(p, "h", {"bump-diff"})
    try:
        h = F.bump_diff(p["d"], p["radius"], p["offset"])
        F._graph_for(p["n"], p["d"], F.FIELD_SITE_BUDGET)
    except F.LatticeBudgetExceeded as e:
        raise BudgetExceeded(str(e)) from None
    except ValueError as e:
        raise InvalidParameters(str(e)) from None
    done, vals = 0, np.zeros(0)
    resumed = ctx.ckpt.load()
    if resumed is not None:
        done, _, arrays = resumed
        vals = arrays["values"]
    while done < p["samples"]:
        k = min(p["block"], p["samples"] - done)
        part = F.pairings([h], p["n"], k, ctx.cfg.seed, p["d"], workers=ctx.workers, start=done)
        vals = np.concatenate([vals, part[:, 0]])
        done += k
        ctx.unit_done(done, arrays={"values": vals}, final=done >= p["samples"])
    ctx.write("field.csv", F.pairings_csv(vals))
    m = F.moments(vals) if vals.size >= 100 else None
    ctx.write_json("field.moments.json", {"n": p["n"], "samples": p["samples"],
                                          "moments": m.as_dict() if m else None,
                                          "covariance_quadrature": F.covariance_quadrature(h)})
    ctx.ckpt.clear()


LERW_ESTIMATORS = ("pn-hat", "pn-hat-plugin", "pn", "hn", "zn", "zn-twosided", "xn", "joint", "bn",
                   "ratio")


def _lerw_rows(est: str, n, p, seed, workers, label) -> list:
    from . import lerw_stats as L

    cfg = L.NestedConfig(outer=p["outer"], inner=p["inner"], delta=p["delta"],
                         horizon=p["horizon"], inner_u=p["inner_u"], inner_g=p["inner_g"])
    samples = p["samples"] or p["outer"]

    def row(name, e: Estimate, outer=cfg.outer, inner=cfg.inner):
        return [n, name, float(e.value), float(e.stderr), outer, inner, label]

    if est == "pn-hat":
        return [row("pn-hat", L.estimate_pn_hat(n, cfg, seed, workers), inner=3 * cfg.inner_u)]
    if est == "pn-hat-plugin":
        return [row("pn-hat-plugin", L.sample_zn(n, cfg, seed, workers=workers).pn_hat_plugin())]
    if est == "pn":
        return [row(f"pn[r={p['r']!r}]", L.estimate_pn(n, p["r"], cfg, seed, workers))]
    if est == "hn":
        return [row("hn", L.estimate_hn(n, samples, seed, cfg.delta, workers=workers), samples, 1)]
    if est in ("zn", "zn-twosided"):
        conv = "shell" if est == "zn" else "twosided"
        return [row(est, L.mean_Zn(n, cfg, seed, conv, workers=workers))]
    if est == "xn":
        x = L.estimate_Xn(n, cfg, seed, workers=workers)
        return [row("xn", x.mean), row("xn2", x.second_moment)]
    if est == "joint":
        j = L.joint_nonintersection(n, samples, seed, cfg.delta, cfg.horizon, workers=workers)
        return [row("joint", j.joint, samples, 1), row("single", j.single, samples, 1),
                row("joint-scaled", j.scaled, samples, 1)]
    if est == "bn":
        b = L.estimate_bn(n, cfg, seed, workers=workers)
        a = L.a_n_from_bn(b)
        # the closed form sqrt(3 log n) and the b_n-based a_n, side by side
        return [row("bn", b, inner=cfg.inner_u), row("a_n", a, inner=cfg.inner_u),
                row("a_n-ratio", a.scaled(1 / L.scaling_a_n(n)), inner=cfg.inner_u)]
    r = L.ratio_check_exact_relation(n, cfg, seed, p["samples"] or None, workers=workers)
    return [row("hn", r["lhs"]), row("pn-hat-scaled", r["rhs"]), row("ratio", r["ratio"])]


def _exp_lerw(ctx: RunContext):
    p = _params(ctx, {"estimator": "pn-hat", "n": [4.0], "outer": 1000, "inner": 0, "inner_u": 1,
                      "inner_g": 16, "delta": 2.0, "horizon": "steps", "r": 1.0, "samples": 0})
    _choice(p, "estimator", set(LERW_ESTIMATORS))
    _choice(p, "horizon", {"steps", "shell"})
    ns = p["n"] if isinstance(p["n"], list) else [p["n"]]
    try:
        ns = [float(v) for v in ns]
    except (TypeError, ValueError):
        raise InvalidParameters("n must be a number or a list of numbers") from None
    _positive(p, "outer", "inner_u", "inner_g", "delta")
    if not ns or min(ns) < 2:
        raise InvalidParameters("every n must be at least 2")
    if p["estimator"] == "ratio" and min(ns) < 3:
        raise InvalidParameters("the ratio check needs n >= 3")
    rows, done = [], 0
    resumed = ctx.ckpt.load()
    if resumed is not None:
        done, state, _ = resumed
        rows = state["rows"]
    from .rng import SeedStream

    root = SeedStream(ctx.cfg.seed)
    for i in range(done, len(ns)):
        n = ns[i]
        nv = int(n) if n.is_integer() else n
        rows += _lerw_rows(p["estimator"], nv, p, root.child(i), ctx.workers, ctx.cfg.seed)
        ctx.unit_done(i + 1, {"rows": rows}, final=i + 1 == len(ns))
    ctx.write("lerw.csv", _rows_csv(["n", "estimator", "value", "stderr", "outer", "inner", "seed"],
                                    rows))
    ctx.ckpt.clear()


def _canonical_points(r2_max: int, d: int) -> np.ndarray:
    """Points ``x_1 >= ... >= x_d >= 0`` with ``|x|^2 <= r2_max``."""
    r = int(math.isqrt(r2_max))
    out = []

    def rec(prefix, bound, rem):
        if len(prefix) == d:
            out.append(prefix)
            return
        for c in range(min(bound, math.isqrt(rem)), -1, -1):
            rec(prefix + [c], c, rem - c * c)

    rec([], r, r2_max)
    return np.array(sorted(out, key=lambda x: (sum(c * c for c in x), x)), dtype=np.int64)


def _exp_green(ctx: RunContext):
    from . import green as G
    from .lattice import EuclideanBall

    p = _params(ctx, {"kind": "free", "r2_max": 16, "N": 10.0, "d": 4, "tol": 1e-10, "rmin": 2.0,
                      "rmax": 5.0, "r_max": 200, "step": 20})
    _choice(p, "kind", {"free", "dirichlet", "regression", "lambda"})
    _positive(p, "N", "tol", "r_max", "step")
    if p["r2_max"] < 0:
        raise InvalidParameters("r2_max must be non-negative")
    origin = np.zeros(p["d"], np.int64)
    try:
        if p["kind"] == "free":
            t = G.GreenTable("free", "quadrature", p["tol"], p["d"])
            for x in _canonical_points(p["r2_max"], p["d"]):
                t.add(x, origin, G.green_free(x, p["tol"]))
            ctx.write("green.csv", t.to_csv())
        elif p["kind"] == "dirichlet":
            region = EuclideanBall(p["N"], p["d"])
            s = G.DirichletSolver(region)
            t = G.GreenTable(region.descriptor(), "solve", s.rtol, p["d"])
            for x in _canonical_points(p["r2_max"], p["d"]):
                if region.contains(tuple(int(c) for c in x)):
                    t.add(x, origin, s.green(x, origin))
            ctx.write("green.csv", t.to_csv())
        elif p["kind"] == "regression":
            fit = G.g2_log_regression(p["N"], p["rmin"], p["rmax"], p["d"])
            ctx.write("g2.csv", _rows_csv(["log_ratio", "g2"], [[float(a), float(b)]
                                                                for a, b in zip(fit.x, fit.y)]))
            ctx.write_json("g2.fit.json", {"slope": fit.slope, "intercept": fit.intercept,
                                           "residual_sd": fit.residual_sd, "points": fit.points,
                                           "reference_slope": G.EIGHT_OVER_PI2})
        else:
            lam = G.lambda_constant(p["r_max"], p["step"])
            ctx.write("lambda.csv", _rows_csv(["r", "f"], [[int(r), float(f)]
                                                           for r, f in zip(lam.radii, lam.f)]))
            ctx.write_json("lambda.json", {"lambda": round(lam.value, 3), "f_r_max": lam.value})
    except G.SiteBudgetExceeded as e:
        raise BudgetExceeded(str(e)) from None


def _exp_twosided(ctx: RunContext):
    from . import twosided as T

    p = _params(ctx, {"n": 3.0, "samples": 100, "delta": 2.0, "max_attempts": 10_000})
    _positive(p, "n", "samples", "delta", "max_attempts")
    try:
        paths, stats = T.sample_many(p["n"], p["samples"], ctx.cfg.seed, p["max_attempts"],
                                     p["delta"], workers=ctx.workers)
    except T.RejectionExhausted as e:
        raise BudgetExceeded(str(e)) from None
    ctx.write("paths.csv", T.paths_csv(paths))
    rate = stats.rate
    ctx.write_json("twosided.stats.json", {"accepted": stats.accepted, "attempted": stats.attempted,
                                           "rate": rate.value, "rate_stderr": rate.stderr,
                                           "disjoint": all(q.disjoint() for q in paths)})


ORACLE_GRAPHS = {"k4": lambda G: G.complete(4), "cycle4": lambda G: G.cycle(4),
                 "path4": lambda G: G.path(4), "grid3x3": lambda G: G.wired_grid(3, 3),
                 "grid2x3": lambda G: G.wired_grid(2, 3)}


def _exp_oracle(ctx: RunContext):
    from . import oracle as O

    p = _params(ctx, {"graph": "k4", "task": "trees", "start": ""})
    _choice(p, "task", {"trees", "lerw", "components"})
    try:
        if p["graph"] in ORACLE_GRAPHS:
            g = ORACLE_GRAPHS[p["graph"]](O.SmallGraph)
        else:
            g = O.SmallGraph.load(p["graph"])
    except (OSError, ValueError) as e:
        raise InvalidParameters(f"cannot load graph {p['graph']!r}: {e}") from None
    ctx.write("graph.txt", g.dumps(), header=False)
    try:
        if p["task"] == "trees":
            trees = O.enumerate_spanning_trees(g)
            det = O.matrix_tree_count(g)
            rows = [[i, " ".join(str(e) for e in sorted(t))] for i, t in enumerate(
                sorted(trees, key=lambda t: sorted(t)))]
            ctx.write("trees.csv", _rows_csv(["tree_id", "edge_ids"], rows))
            ctx.write_json("trees.json", {"enumerated": len(trees), "matrix_tree": det,
                                          "equal": len(trees) == det})
        elif p["task"] == "lerw":
            start = p["start"] if p["start"] != "" else g.nonroot[0]
            if isinstance(start, str) and start.lstrip("-").isdigit():
                start = int(start)
            law = O.exact_lerw_law(g, start)
            rows = [[" ".join(map(str, b)), str(q)] for b, q in sorted(law.items(), key=str)]
            ctx.write("lerw_law.csv", _rows_csv(["path", "probability"], rows))
        else:
            law = O.count_components_law(g)
            ctx.write("components.csv", _rows_csv(["components", "probability"],
                                                  [[k, str(Fraction(v))] for k, v in sorted(law.items())]))
    except O.OracleSizeError as e:
        raise BudgetExceeded(str(e)) from None


def _exp_acceptance(ctx: RunContext):
    from . import acceptance as A

    p = _params(ctx, {"criteria": list(range(1, 12))})
    sel = p["criteria"] if isinstance(p["criteria"], list) else [p["criteria"]]
    if not sel or any(c not in A.CRITERIA for c in sel):
        raise InvalidParameters(f"criteria must be drawn from 1..{len(A.CRITERIA)}")
    results = [A.run_criterion(c, seed=ctx.cfg.seed, workers=ctx.workers) for c in sel]
    ctx.write("acceptance.csv", A.results_csv(results))
    ctx.criteria = {str(r.number): {"name": r.name, "passed": r.passed, "seconds": r.seconds,
                                    "detail": r.detail} for r in results}


def _exp_plot(ctx: RunContext):
    p = _params(ctx, {"input": "", "kind": "pn-hat"})
    _choice(p, "kind", set(PLOT_KINDS))
    if not p["input"]:
        raise InvalidParameters("plot needs an input CSV")
    try:
        with open(p["input"]) as fh:
            text = fh.read()
    except OSError as e:
        raise InvalidParameters(f"cannot read {p['input']!r}: {e}") from None
    svg, slice_csv = emit_plot_data(text, p["kind"])
    ctx.write("plot.svg", svg, header=False)
    ctx.write("plot.csv", slice_csv)


EXPERIMENTS: dict[str, Callable[[RunContext], None]] = {
    "wilson": _exp_wilson, "field": _exp_field, "lerw": _exp_lerw, "green": _exp_green,
    "twosided": _exp_twosided, "oracle": _exp_oracle, "acceptance": _exp_acceptance,
    "plot": _exp_plot,
}


def file_digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def run(config: ExperimentConfig, checkpoint_interval: float = CHECKPOINT_INTERVAL,
        stop_after: int | None = None) -> RunManifest:
    """Execute ``config`` and write its outputs plus ``manifest.json``.

    ``stop_after`` interrupts the run after that many units of work, leaving
    a checkpoint that the next identical run resumes from.
    """
    if config.experiment not in EXPERIMENTS:
        raise UnknownExperiment(f"unknown experiment {config.experiment!r}; "
                                f"choose from {sorted(EXPERIMENTS)}")
    if not isinstance(config.seed, int) or config.seed < 0:
        raise InvalidParameters("seed must be a non-negative integer")
    os.makedirs(config.out_dir, exist_ok=True)
    ctx = RunContext(config, checkpoint_interval, stop_after)
    t0 = time.monotonic()
    EXPERIMENTS[config.experiment](ctx)
    digests = {name: file_digest(os.path.join(config.out_dir, name)) for name in ctx.outputs}
    m = RunManifest(ctx.hash, __version__, round(time.monotonic() - t0, 3), ctx.criteria, digests,
                    config.experiment, config.canonical())
    with open(os.path.join(config.out_dir, "manifest.json"), "w", newline="\n") as fh:
        fh.write(m.to_json() + "\n")
    return m


# -- plots ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlotKind:
    estimator: str | None
    scale_by_n: bool
    log_x: bool
    reference: float | None
    ylabel: str


PLOT_KINDS = {
    "pn-hat": PlotKind("pn-hat", True, True, PI2_OVER_24, "n * p_hat_n"),
    "joint": PlotKind("joint-scaled", False, True, PI2_OVER_24, "log(n) * joint"),
    "xn": PlotKind("xn", False, True, None, "E[X_n]"),
    "bn": PlotKind("bn", False, True, None, "b_n"),
    "series": PlotKind(None, False, False, None, "value"),
}

_W, _H, _ML, _MR, _MT, _MB = 640, 400, 70, 20, 20, 50


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def emit_plot_data(result_csv: str, kind: str) -> tuple[str, str]:
    """Scatter plot with error bars for a result CSV; returns ``(svg, csv)``.

    Output is a pure function of the input text, so identical input gives
    identical bytes.
    """
    if kind not in PLOT_KINDS:
        raise SchemaMismatch(f"unknown plot kind {kind!r}")
    spec = PLOT_KINDS[kind]
    lines = [ln for ln in result_csv.splitlines() if ln and not ln.startswith("#")]
    pts = []
    if lines:
        reader = csv.DictReader(lines)
        if not {"n", "value", "stderr"} <= set(reader.fieldnames or []):
            raise SchemaMismatch("result file must have columns n, value, stderr")
        for r in reader:
            if spec.estimator and r.get("estimator", spec.estimator) != spec.estimator:
                continue
            try:
                n, v, s = float(r["n"]), float(r["value"]), float(r["stderr"])
            except ValueError:
                raise SchemaMismatch(f"non-numeric entry in row {r}") from None
            if spec.log_x and n <= 0:
                raise SchemaMismatch("log-x plots need positive n")
            c = n if spec.scale_by_n else 1.0
            pts.append((n, c * v, c * (s if math.isfinite(s) else 0.0)))
    pts.sort()

    xs = [math.log10(p[0]) if spec.log_x else p[0] for p in pts]
    lo_y = [p[1] - p[2] for p in pts] + ([spec.reference] if spec.reference is not None else [])
    hi_y = [p[1] + p[2] for p in pts] + ([spec.reference] if spec.reference is not None else [])
    x0, x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    y0, y1 = (min(lo_y), max(hi_y)) if lo_y else (0.0, 1.0)
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad_x, pad_y = 0.05 * (x1 - x0), 0.08 * (y1 - y0)
    x0, x1, y0, y1 = x0 - pad_x, x1 + pad_x, y0 - pad_y, y1 + pad_y
    pw, ph = _W - _ML - _MR, _H - _MT - _MB

    def sx(x):
        return _ML + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return _MT + (y1 - y) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
           f'<line x1="{_ML}" y1="{_MT + ph}" x2="{_ML + pw}" y2="{_MT + ph}" stroke="black"/>',
           f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_MT + ph}" stroke="black"/>']
    for k in range(5):
        y = y0 + (y1 - y0) * k / 4
        out.append(f'<line x1="{_ML - 4}" y1="{_fmt(sy(y))}" x2="{_ML}" y2="{_fmt(sy(y))}" '
                   f'stroke="black"/>')
        out.append(f'<text x="{_ML - 6}" y="{_fmt(sy(y) + 4)}" text-anchor="end">{y:.3g}</text>')
    for (n, _, _), x in zip(pts, xs):
        out.append(f'<line x1="{_fmt(sx(x))}" y1="{_MT + ph}" x2="{_fmt(sx(x))}" '
                   f'y2="{_MT + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{_fmt(sx(x))}" y="{_MT + ph + 16}" text-anchor="middle">{n:g}</text>')
    xl = "n (log scale)" if spec.log_x else "n"
    out.append(f'<text x="{_ML + pw // 2}" y="{_H - 10}" text-anchor="middle">{xl}</text>')
    out.append(f'<text x="14" y="{_MT + ph // 2}" text-anchor="middle" '
               f'transform="rotate(-90 14 {_MT + ph // 2})">{spec.ylabel}</text>')
    if spec.reference is not None:
        ry = _fmt(sy(spec.reference))
        out.append(f'<line x1="{_ML}" y1="{ry}" x2="{_ML + pw}" y2="{ry}" stroke="gray" '
                   f'stroke-dasharray="6 4"/>')
        out.append(f'<text x="{_ML + pw - 4}" y="{_fmt(sy(spec.reference) - 4)}" '
                   f'text-anchor="end" fill="gray">pi^2/24 = {spec.reference:.4f}</text>')
    if len(pts) > 1:
        path = " ".join(f"{_fmt(sx(x))},{_fmt(sy(p[1]))}" for p, x in zip(pts, xs))
        out.append(f'<polyline points="{path}" fill="none" stroke="steelblue"/>')
    for p, x in zip(pts, xs):
        cx = _fmt(sx(x))
        out.append(f'<line x1="{cx}" y1="{_fmt(sy(p[1] - p[2]))}" x2="{cx}" '
                   f'y2="{_fmt(sy(p[1] + p[2]))}" stroke="steelblue"/>')
        out.append(f'<circle cx="{cx}" cy="{_fmt(sy(p[1]))}" r="3" fill="steelblue"/>')
    out.append("</svg>")
    svg = "\n".join(out) + "\n"
    slice_csv = _rows_csv(["n", "y", "err"], [list(p) for p in pts])
    return svg, slice_csv


# -- command line ----------------------------------------------------------------------

def _add_common(sp):
    sp.add_argument("--config", help="JSON config file; flags override its fields")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--out-dir", dest="out_dir")
    sp.add_argument("--budget-seconds", dest="budget_seconds", type=float)
    sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="extra parameter, value parsed as JSON when possible")


FLAGS = {
    "wilson": [("--N", float), ("--d", int), ("--mode", str), ("--samples", int),
               ("--method", str)],
    "field": [("--n", float), ("--samples", int), ("--h", str), ("--d", int), ("--block", int)],
    "lerw": [("--n", float), ("--outer", int), ("--inner", int), ("--inner-u", int),
             ("--inner-g", int), ("--delta", float), ("--horizon", str), ("--r", float),
             ("--samples", int)],
    "green": [("--kind", str), ("--r2-max", int), ("--N", float), ("--d", int), ("--tol", float)],
    "twosided": [("--n", float), ("--samples", int), ("--delta", float), ("--max-attempts", int)],
    "oracle": [("--graph", str), ("--task", str), ("--start", str)],
    "acceptance": [],
    "plot": [("--in", str), ("--kind", str)],
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="critlat", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name, flags in FLAGS.items():
        sp = sub.add_parser(name)
        if name == "lerw":
            sp.add_argument("estimator", nargs="?", choices=LERW_ESTIMATORS)
            sp.add_argument("--n", dest="n", type=float, action="append")
            flags = flags[1:]
        if name == "acceptance":
            sp.add_argument("--criteria", type=int, nargs="+")
        for flag, typ in flags:
            sp.add_argument(flag, dest=flag[2:].replace("-", "_"), type=typ)
        sp.add_argument("--out", help="copy the main output to this path")
        _add_common(sp)
    return ap


MAIN_OUTPUT = {"wilson": None, "field": "field.csv", "lerw": "lerw.csv", "green": None,
               "twosided": "paths.csv", "oracle": None, "acceptance": "acceptance.csv",
               "plot": "plot.svg"}


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    base = ExperimentConfig.load(ns.config).__dict__ if ns.config else {"experiment": ns.experiment}
    base = dict(base)
    if base.get("experiment") != ns.experiment:
        raise InvalidParameters(f"config is for {base.get('experiment')!r}, not {ns.experiment!r}")
    params = dict(base.get("params", {}))
    skip = {"experiment", "config", "seed", "workers", "out_dir", "budget_seconds", "set", "out"}
    for k, v in vars(ns).items():
        if k in skip or v is None:
            continue
        key = {"in": "input", "r2_max": "r2_max"}.get(k, k)
        if k == "n" and isinstance(v, list):
            v = v if len(v) > 1 else v[0]
        params[key] = v
    for item in ns.set:
        if "=" not in item:
            raise InvalidParameters(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        try:
            params[k] = json.loads(v)
        except json.JSONDecodeError:
            params[k] = v
    base["params"] = params
    for k in ("seed", "workers", "out_dir", "budget_seconds"):
        if getattr(ns, k) is not None:
            base[k] = getattr(ns, k)
    return ExperimentConfig.from_dict(base)


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
        if ns.out and cfg.out_dir == ".":
            cfg.out_dir = os.path.dirname(os.path.abspath(ns.out))
        m = run(cfg)
    except HarnessError as e:
        print(f"critlat: error: {e}", file=sys.stderr)
        return e.code
    main_out = MAIN_OUTPUT[cfg.experiment]
    if ns.out and main_out:
        src = os.path.join(cfg.out_dir, main_out)
        if os.path.abspath(src) != os.path.abspath(ns.out):
            with open(src, "rb") as a, open(ns.out, "wb") as b:
                b.write(a.read())
    if m.criteria:
        for k in sorted(m.criteria, key=int):
            c = m.criteria[k]
            print(f"criterion {k:>2} {'PASS' if c['passed'] else 'FAIL'}  {c['name']}")
    print(json.dumps({"config_hash": m.config_hash, "outputs": m.digests}, indent=2))
    if m.criteria and not all(c["passed"] for c in m.criteria.values()):
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
