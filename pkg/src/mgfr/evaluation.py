"""Monte-Carlo experiment harness: loss sweeps, rate fits, normality and estimator ranking.

Every replicate draws from a substream that is a pure function of
``(master_seed, replicate)``, while the design matrices (predictor and
response covariances) are fixed by the master seed. Results are gathered in
task order, so a parallel run is byte-identical to a sequential one.
"""
import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from contextlib import ExitStack
from dataclasses import dataclass, field, replace

import numpy as np

from ._errors import DegenerateRate, DegenerateWeights, IllConditioned, InvalidConfiguration, InvalidInput
from .covariance import ThetaConfig
from .metric_spaces import SolverConfig
from .regression import EstimatorKind, in_sample_loss, predict_batch, train
from .simulation import (
    METRICS,
    SimConfig,
    derive_seed,
    gen_predictors,
    inject_collinearity,
    simulate,
    true_objects,
)

CSV_COLUMNS = ("estimator", "n", "replicate", "loss", "skipped")
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SweepConfig:
    n_grid: tuple = (50, 100, 200, 400, 800)
    replicates: int = 50
    estimators: tuple = ("GFR", "MGFR", "DMGFR")
    noise_sigma: float = 0.0
    collinear_pairs: tuple = ()
    collinear_jitter: float = 1e-3
    master_seed: int = 0
    metric: str = "quantile"
    sim: SimConfig = field(default_factory=SimConfig)
    theta: ThetaConfig = field(default_factory=ThetaConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    n_jobs: int = 1
    held_out: bool = False

    def __post_init__(self):
        def bad(key, why):
            raise InvalidConfiguration(f"invalid value for {key}: {why}", key=key)

        grid = tuple(int(n) for n in self.n_grid)
        if not grid:
            bad("n_grid", "must not be empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            bad("n_grid", f"must be strictly increasing, got {list(grid)}")
        if grid[0] < 2:
            bad("n_grid", "sample sizes must be >= 2")
        object.__setattr__(self, "n_grid", grid)
        if int(self.replicates) != self.replicates or self.replicates < 1:
            bad("replicates", f"must be a positive integer, got {self.replicates!r}")
        ests = tuple(EstimatorKind.parse(e).value for e in self.estimators)
        if not ests:
            bad("estimators", "must not be empty")
        object.__setattr__(self, "estimators", ests)
        if not (np.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            bad("noise_sigma", f"must be >= 0, got {self.noise_sigma!r}")
        pairs = tuple((int(a), int(b)) for a, b in self.collinear_pairs)
        object.__setattr__(self, "collinear_pairs", pairs)
        if not (np.isfinite(self.collinear_jitter) and self.collinear_jitter >= 0):
            bad("collinear_jitter", "must be >= 0")
        if self.metric not in METRICS:
            bad("metric", f"must be one of {METRICS}, got {self.metric!r}")
        if int(self.n_jobs) != self.n_jobs or self.n_jobs < 1:
            bad("n_jobs", "must be a positive integer")

    def cell_config(self, n, replicate):
        design = self.sim.design if self.sim.design_seed is not None else self.master_seed
        return replace(self.sim, n=int(n), seed=derive_seed(self.master_seed, replicate), design_seed=design)


@dataclass(frozen=True)
class Record:
    estimator: str
    n: int
    replicate: int
    loss: float  # nan when skipped
    skipped: bool
    reason: str = ""


@dataclass(frozen=True)
class Aggregate:
    estimator: str
    n: int
    completed: int
    skipped: int
    mean: float
    median: float
    q25: float
    q75: float

    @property
    def iqr(self):
        return self.q75 - self.q25


def _fmt(x):
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else format(float(x), ".17g")


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


@dataclass(frozen=True, eq=False)
class SweepResult:
    records: tuple
    estimators: tuple
    n_grid: tuple
    replicates: int
    config: SweepConfig = None

    def losses(self, estimator, n):
        return np.array([r.loss for r in self.records
                         if r.estimator == estimator and r.n == n and not r.skipped])

    def aggregate(self, estimator, n):
        cell = [r for r in self.records if r.estimator == estimator and r.n == n]
        vals = np.array([r.loss for r in cell if not r.skipped])
        skipped = sum(r.skipped for r in cell)
        if vals.size == 0:
            nan = float("nan")
            return Aggregate(estimator, n, 0, skipped, nan, nan, nan, nan)
        q25, med, q75 = np.percentile(vals, [25, 50, 75])
        return Aggregate(estimator, n, int(vals.size), skipped, float(vals.mean()),
                         float(med), float(q25), float(q75))

    def aggregates(self):
        return [self.aggregate(e, n) for e in self.estimators for n in self.n_grid]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow([r.estimator, r.n, r.replicate, _fmt(r.loss), int(r.skipped)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        """Rebuild a result from CSV text; raises InvalidInput naming any missing column."""
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or not any(rows):
            raise InvalidInput("result CSV is empty")
        header = rows[0]
        for col in CSV_COLUMNS:
            if col not in header:
                raise InvalidInput(f"result CSV is missing column {col!r}")
        idx = {c: header.index(c) for c in CSV_COLUMNS}
        records = []
        for row in rows[1:]:
            if not row:
                continue
            records.append(Record(
                estimator=row[idx["estimator"]],
                n=int(row[idx["n"]]),
                replicate=int(row[idx["replicate"]]),
                loss=float(row[idx["loss"]]),
                skipped=bool(int(row[idx["skipped"]])),
            ))
        if not records:
            raise InvalidInput("result CSV has no data rows")
        estimators = tuple(dict.fromkeys(r.estimator for r in records))
        n_grid = tuple(sorted({r.n for r in records}))
        replicates = len({r.replicate for r in records})
        return cls(tuple(records), estimators, n_grid, replicates)

    def summary(self):
        """JSON-ready dictionary: aggregates, per-estimator rate fits and skip accounting."""
        aggs = []
        for a in self.aggregates():
            aggs.append({
                "estimator": a.estimator, "n": a.n, "completed": a.completed, "skipped": a.skipped,
                "mean": _json_safe(a.mean), "median": _json_safe(a.median),
                "q25": _json_safe(a.q25), "q75": _json_safe(a.q75), "iqr": _json_safe(a.iqr),
            })
        rates = {}
        for e in self.estimators:
            try:
                slope, se = rate_estimate(self, e, min_points=2, min_replicates=1)
                rates[e] = {"slope": _json_safe(slope), "stderr": _json_safe(se)}
            except (InvalidInput, DegenerateRate) as exc:
                rates[e] = {"slope": None, "stderr": None, "note": str(exc)}
        report = comparison_report(self) if len(self.estimators) >= 2 else None
        return {
            "schema_version": SCHEMA_VERSION,
            "estimators": list(self.estimators),
            "n_grid": list(self.n_grid),
            "replicates": self.replicates,
            "aggregates": aggs,
            "rates": rates,
            "ordering": report.ordering if report else list(self.estimators),
            "skipped_total": sum(r.skipped for r in self.records),
        }

    def summary_json(self):
        return json.dumps(self.summary(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _run_cell(cfg, n, replicate):
    sim_cfg = cfg.cell_config(n, replicate)
    ds = simulate(sim_cfg, metric=cfg.metric, noise_sigma=cfg.noise_sigma,
                  collinear_pairs=cfg.collinear_pairs, collinear_jitter=cfg.collinear_jitter,
                  with_truth=not cfg.held_out)
    if cfg.held_out:
        q_cfg = replace(sim_cfg, seed=derive_seed(sim_cfg.seed, 200))
        Xq = gen_predictors(q_cfg)
        if cfg.collinear_pairs:
            Xq = inject_collinearity(Xq, cfg.collinear_pairs, cfg.collinear_jitter, derive_seed(q_cfg.seed, 100))
        truth = true_objects(sim_cfg, Xq, cfg.metric)
    else:
        Xq = ds.X
        truth = ds.truth.objects
    out = []
    for est in cfg.estimators:
        try:
            model = train(ds.X, ds.responses, ds.Y, kind=est, theta_cfg=cfg.theta)
            fits = predict_batch(model, Xq, cfg.solver)
            loss = in_sample_loss(model, fits, truth)
            out.append(Record(est, n, replicate, float(loss), False))
        except (IllConditioned, DegenerateWeights) as exc:
            out.append(Record(est, n, replicate, float("nan"), True, type(exc).__name__))
    return out


def _run_cell_args(args):
    return _run_cell(*args)


def run_sweep(cfg, on_record=None):
    """Run every ``(n, replicate)`` cell and every estimator.

    Ill-conditioned replicates are recorded with ``skipped=True`` rather than
    dropped. ``on_record`` receives each record in final output order
    (estimator, n, replicate) as soon as every record before it is known; the
    first estimator therefore streams while later ones arrive at the end.

    If a cell raises, the exception gets a ``partial_records`` attribute with
    every completed record in output order before it propagates.
    """
    tasks = [(cfg, n, r) for n in cfg.n_grid for r in range(cfg.replicates)]
    order = [(e, n, r) for e in cfg.estimators for n in cfg.n_grid for r in range(cfg.replicates)]
    by_key = {}
    emitted = 0

    def flush():
        nonlocal emitted
        while emitted < len(order) and order[emitted] in by_key:
            if on_record is not None:
                on_record(by_key[order[emitted]])
            emitted += 1

    with ExitStack() as stack:
        if cfg.n_jobs > 1:
            pool = stack.enter_context(ProcessPoolExecutor(max_workers=cfg.n_jobs))
            cells = pool.map(_run_cell_args, tasks, chunksize=max(1, len(tasks) // (4 * cfg.n_jobs)))
        else:
            cells = map(_run_cell_args, tasks)
        try:
            for cell in cells:
                for rec in cell:
                    by_key[(rec.estimator, rec.n, rec.replicate)] = rec
                flush()
        except BaseException as exc:
            exc.partial_records = tuple(by_key[k] for k in order if k in by_key)
            raise
    records = tuple(by_key[k] for k in order)
    return SweepResult(records, cfg.estimators, cfg.n_grid, cfg.replicates, cfg)


def rate_estimate(result, estimator, min_points=3, min_replicates=10):
    """Least-squares slope of ``log(median loss)`` against ``log(n)``.

    Squared-distance losses of a root-n consistent estimator give a slope
    near -1.

    Returns
    -------
    (slope, stderr)
    """
    estimator = EstimatorKind.parse(estimator).value
    if estimator not in result.estimators:
        raise InvalidInput(f"estimator {estimator} not in result")
    ns, meds = [], []
    for n in result.n_grid:
        vals = result.losses(estimator, n)
        if vals.size < min_replicates:
            raise InvalidInput(f"{estimator} at n={n} has {vals.size} completed replicates; need {min_replicates}")
        med = float(np.median(vals))
        if not med > 0:
            raise DegenerateRate(f"median loss of {estimator} at n={n} is {med!r}; log undefined")
        ns.append(n)
        meds.append(med)
    if len(ns) < min_points:
        raise InvalidInput(f"need at least {min_points} grid points, got {len(ns)}")
    x = np.log(np.array(ns, dtype=np.float64))
    y = np.log(np.array(meds))
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (y - y.mean()) / sxx)
    if len(ns) > 2:
        resid = y - (y.mean() + slope * xc)
        stderr = float(np.sqrt((resid @ resid) / (len(ns) - 2) / sxx))
    else:
        stderr = float("nan")
    return slope, stderr


def normality_diagnostic(replicate_estimates, max_skew=0.3, max_excess_kurtosis=0.5):
    """Moment check of asymptotic normality for a scalar functional.

    The functional is the first coordinate of each replicate's estimate
    (scalars are used as-is). Passes iff ``|skewness| < 0.3`` and
    ``|excess kurtosis| < 0.5``.

    Returns
    -------
    (skewness, excess_kurtosis, passed)
    """
    vals = []
    for est in replicate_estimates:
        arr = np.ravel(np.asarray(getattr(est, "q", est), dtype=np.float64))
        if arr.size == 0:
            raise InvalidInput("empty replicate estimate")
        vals.append(arr[0])
    v = np.array(vals)
    if v.size < 200:
        raise InvalidInput(f"normality diagnostic needs >= 200 replicates, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise InvalidInput("replicate estimates must be finite")
    sd = v.std()
    if not sd > 0:
        raise InvalidInput("replicate estimates have zero variance")
    z = (v - v.mean()) / sd
    skew = float(np.mean(z ** 3))
    exkurt = float(np.mean(z ** 4) - 3.0)
    return skew, exkurt, bool(abs(skew) < max_skew and abs(exkurt) < max_excess_kurtosis)


def _functional_cell(cfg, estimator, n, replicate, query):
    sim_cfg = cfg.cell_config(n, replicate)
    ds = simulate(sim_cfg, metric="quantile", noise_sigma=cfg.noise_sigma,
                  collinear_pairs=cfg.collinear_pairs, collinear_jitter=cfg.collinear_jitter,
                  with_truth=False)
    try:
        model = train(ds.X, ds.responses, ds.Y, kind=estimator, theta_cfg=cfg.theta)
    except IllConditioned:
        return None
    return float(predict_batch(model, query.reshape(1, -1), cfg.solver)[0].omega.q[0])


def _functional_cell_args(args):
    return _functional_cell(*args)


def replicate_functional(cfg, estimator, n, replicates, query=None):
    """First quantile coordinate of the fit at a fixed query across replicates.

    The default query is the predictor mean vector (normalized for spherical
    predictors). Ill-conditioned replicates are dropped; the returned array may
    therefore be shorter than ``replicates``.
    """
    if query is None:
        query = cfg.sim.mean_vector
        if cfg.sim.spherical:
            query = query / np.linalg.norm(query)
    query = np.asarray(query, dtype=np.float64)
    tasks = [(cfg, EstimatorKind.parse(estimator).value, n, r, query) for r in range(replicates)]
    if cfg.n_jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.n_jobs) as pool:
            vals = list(pool.map(_functional_cell_args, tasks))
    else:
        vals = [_functional_cell(*t) for t in tasks]
    return np.array([v for v in vals if v is not None])


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple  # dicts with n, estimator, mean, median, wins, completed, skipped
    ordering: list
    overall_mean: dict

    def to_text(self):
        lines = ["rank  estimator  overall_mean_loss"]
        for i, e in enumerate(self.ordering, 1):
            lines.append(f"{i:>4}  {e:<9}  {self.overall_mean[e]:.6g}")
        lines.append("")
        lines.append(f"{'n':>6}  {'estimator':<9}  {'mean':>12}  {'median':>12}  {'wins':>5}  {'done':>5}  {'skip':>5}")
        for r in self.rows:
            lines.append(f"{r['n']:>6}  {r['estimator']:<9}  {r['mean']:>12.6g}  {r['median']:>12.6g}  "
                         f"{r['wins']:>5}  {r['completed']:>5}  {r['skipped']:>5}")
        return "\n".join(lines) + "\n"

    def to_dict(self):
        return {
            "ordering": list(self.ordering),
            "overall_mean": {k: _json_safe(v) for k, v in self.overall_mean.items()},
            "rows": [{k: _json_safe(v) for k, v in r.items()} for r in self.rows],
        }


def comparison_report(result):
    """Per-n mean/median losses, per-replicate win counts and the overall ordering.

    A replicate is won by the estimator with the lowest loss; ties go to the
    estimator listed first. The overall ordering sorts estimators by their
    mean loss across all cells, again breaking ties by listing order.
    """
    ests = list(result.estimators)
    if len(ests) < 2:
        raise InvalidInput("comparison needs at least two estimators")
    lookup = {(r.estimator, r.n, r.replicate): r for r in result.records}
    replicate_ids = sorted({r.replicate for r in result.records})
    wins = {(e, n): 0 for e in ests for n in result.n_grid}
    for n in result.n_grid:
        for rep in replicate_ids:
            best, best_loss = None, None
            for e in ests:
                rec = lookup.get((e, n, rep))
                if rec is None or rec.skipped:
                    continue
                if best is None or rec.loss < best_loss:
                    best, best_loss = e, rec.loss
            if best is not None:
                wins[(best, n)] += 1
    rows = []
    for n in result.n_grid:
        for e in ests:
            a = result.aggregate(e, n)
            rows.append({"n": n, "estimator": e, "mean": a.mean, "median": a.median,
                         "wins": wins[(e, n)], "completed": a.completed, "skipped": a.skipped})
    overall = {}
    for e in ests:
        vals = np.concatenate([result.losses(e, n) for n in result.n_grid])
        overall[e] = float(vals.mean()) if vals.size else float("inf")
    ordering = sorted(ests, key=lambda e: (overall[e], ests.index(e)))
    return ComparisonReport(tuple(rows), ordering, overall)
