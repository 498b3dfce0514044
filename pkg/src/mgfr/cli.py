"""Command-line front end: ``mgfr {simulate,fit,sweep,rate-check,report,plot}``.

Exit codes: 0 success, 1 runtime or numeric failure (including a rate outside
its band), 2 configuration error. Every command writes a manifest holding the
resolved config with SHA-256 hashes of its outputs; given the same config and
seed every output file is byte-identical.
"""
import argparse
import csv
import hashlib
import io
import json
import os
import sys

import numpy as np

from . import __version__
from ._errors import FrechetError, InvalidConfiguration
from .config import SCHEMA, ensure_output_dir, load_file, merge_layers, parse_literal, resolve
from .evaluation import CSV_COLUMNS, SCHEMA_VERSION, SweepResult, comparison_report, rate_estimate, run_sweep
from .metric_spaces import GaussianPoint, QuantileFunction
from .plotting import render_sweep_svg
from .regression import predict_batch, train
from .simulation import build_responses, dataset_to_csv, fmt, read_dataset_csv, simulate

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _sha256(data):
    return hashlib.sha256(data).hexdigest()


def _write(path, text):
    data = text.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(data)
    return data


def write_manifest(out_dir, command, cfg, outputs):
    """Write ``manifest-<command>.json``; ``outputs`` maps file name to written bytes."""
    files = {name: {"sha256": _sha256(data), "bytes": len(data)} for name, data in sorted(outputs.items())}
    content = _sha256(json.dumps(files, sort_keys=True).encode())
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.echo(),
        "outputs": files,
        "content_hash": content,
    }
    name = f"manifest-{command}.json"
    _write(os.path.join(out_dir, name), json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _log(msg):
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(cfg, args):
    s = cfg.sweep
    ds = simulate(cfg.sim, metric=s.metric, noise_sigma=s.noise_sigma, collinear_pairs=s.collinear_pairs,
                  collinear_jitter=s.collinear_jitter, with_truth=False)
    data = _write(os.path.join(cfg.output_dir, "dataset.csv"), dataset_to_csv(ds.X, ds.Y, ds.beta))
    m = write_manifest(cfg.output_dir, "simulate", cfg, {"dataset.csv": data})
    print(f"wrote {cfg.sim.n} rows to {os.path.join(cfg.output_dir, 'dataset.csv')} (hash {m['content_hash'][:12]})")
    return EXIT_OK


def _omega_columns(omega):
    if isinstance(omega, QuantileFunction):
        return [f"q{j}" for j in range(omega.q.shape[0])], list(omega.q)
    if isinstance(omega, GaussianPoint):
        d = omega.dim
        names = [f"mu{j}" for j in range(d)] + [f"sigma{i}{j}" for i in range(d) for j in range(d)]
        return names, list(omega.mu) + list(omega.sigma.ravel())
    return [f"p{j}" for j in range(omega.p.shape[0])], list(omega.p)


def cmd_fit(cfg, args):
    s = cfg.sweep
    if cfg.fit_dataset:
        X, Y, _ = read_dataset_csv(cfg.fit_dataset)
    else:
        ds = simulate(cfg.sim, metric=s.metric, noise_sigma=s.noise_sigma, collinear_pairs=s.collinear_pairs,
                      collinear_jitter=s.collinear_jitter, with_truth=False)
        X, Y = ds.X, ds.Y
    Xq = read_dataset_csv(cfg.fit_queries)[0] if cfg.fit_queries else X
    responses = build_responses(Y, s.metric, cfg.sim.M)
    model = train(X, responses, Y, kind=cfg.fit_estimator, theta_cfg=cfg.theta)
    fits = predict_batch(model, Xq, cfg.solver)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names, _ = _omega_columns(fits[0].omega)
    w.writerow(["row", "estimator", "iterations", "converged", "objective"] + names)
    for i, f in enumerate(fits):
        w.writerow([i, cfg.fit_estimator, f.iterations, int(f.converged), fmt(f.objective)]
                   + [fmt(v) for v in _omega_columns(f.omega)[1]])
    data = _write(os.path.join(cfg.output_dir, "fits.csv"), buf.getvalue())
    write_manifest(cfg.output_dir, "fit", cfg, {"fits.csv": data})
    print(f"fitted {len(fits)} queries with {cfg.fit_estimator} on n={X.shape[0]}")
    return EXIT_OK


def _run_and_store(cfg):
    """Run the configured sweep, streaming rows into results.csv."""
    path = os.path.join(cfg.output_dir, "results.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        fh.flush()

        def on_record(rec):
            w.writerow([rec.estimator, rec.n, rec.replicate, "nan" if rec.skipped else fmt(rec.loss),
                        int(rec.skipped)])
            fh.flush()

        try:
            result = run_sweep(cfg.sweep, on_record=on_record)
        except BaseException as exc:
            partial = getattr(exc, "partial_records", ())
            if partial:
                part = SweepResult(partial, cfg.sweep.estimators, cfg.sweep.n_grid, cfg.sweep.replicates)
                _write(os.path.join(cfg.output_dir, "results.partial.csv"), part.to_csv())
                _log(f"sweep aborted; {len(partial)} completed records saved to results.partial.csv")
            raise
    csv_text = result.to_csv()
    with open(path, "rb") as fh:
        written = fh.read()
    if written != csv_text.encode():  # pragma: no cover - streaming and batch writers disagree
        written = _write(path, csv_text)
    return result, written


def _load_results(cfg, args):
    """Results from ``--results`` or a fresh sweep; returns (result, outputs dict)."""
    if getattr(args, "results", None):
        with open(args.results, newline="") as fh:
            return SweepResult.from_csv(fh.read()), {}
    result, data = _run_and_store(cfg)
    return result, {"results.csv": data}


def cmd_sweep(cfg, args):
    result, data = _run_and_store(cfg)
    summary = _write(os.path.join(cfg.output_dir, "summary.json"), result.summary_json())
    write_manifest(cfg.output_dir, "sweep", cfg, {"results.csv": data, "summary.json": summary})
    skipped = sum(r.skipped for r in result.records)
    print(f"sweep done: {len(result.records)} records, {skipped} skipped")
    return EXIT_OK


def cmd_rate_check(cfg, args):
    result, outputs = _load_results(cfg, args)
    slope, stderr = rate_estimate(result, cfg.rate_estimator, min_replicates=cfg.rate_min_replicates)
    lo, hi = cfg.rate_band
    ok = lo <= slope <= hi
    payload = {"estimator": cfg.rate_estimator, "slope": slope, "stderr": None if np.isnan(stderr) else stderr,
               "band": [lo, hi], "within_band": ok}
    outputs["rate.json"] = _write(os.path.join(cfg.output_dir, "rate.json"),
                                  json.dumps(payload, indent=2, sort_keys=True) + "\n")
    write_manifest(cfg.output_dir, "rate-check", cfg, outputs)
    print(f"{cfg.rate_estimator} slope {slope:.4f} (band [{lo}, {hi}]): {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_report(cfg, args):
    result, outputs = _load_results(cfg, args)
    rep = comparison_report(result)
    text = rep.to_text()
    outputs["report.txt"] = _write(os.path.join(cfg.output_dir, "report.txt"), text)
    outputs["report.json"] = _write(os.path.join(cfg.output_dir, "report.json"),
                                    json.dumps(rep.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n")
    write_manifest(cfg.output_dir, "report", cfg, outputs)
    print(text, end="")
    return EXIT_OK


def cmd_plot(cfg, args):
    with open(args.results, newline="") as fh:
        result = SweepResult.from_csv(fh.read())
    log_axes = cfg.log_axes or args.log_axes
    out = args.out or os.path.join(cfg.output_dir, "loss.svg")
    _write(out, render_sweep_svg(result, log_axes=log_axes))
    print(f"wrote {out}")
    return EXIT_OK


COMMANDS = {
    "simulate": (cmd_simulate, "generate one dataset CSV"),
    "fit": (cmd_fit, "train an estimator and write fitted objects"),
    "sweep": (cmd_sweep, "run the Monte-Carlo loss sweep"),
    "rate-check": (cmd_rate_check, "fit the log-log loss slope and compare it with the band"),
    "report": (cmd_report, "rank estimators by loss"),
    "plot": (cmd_plot, "render a result CSV as SVG"),
}


def _add_overrides(p):
    g = p.add_argument_group("config overrides (TOML literals)")
    for section, keys in SCHEMA.items():
        for key, (default, _) in keys.items():
            g.add_argument(f"--{section}.{key}", dest=f"ov:{section}.{key}", metavar="VALUE",
                           default=argparse.SUPPRESS, help=f"default: {json.dumps(default)}")


def build_parser():
    parser = argparse.ArgumentParser(prog="mgfr", description="Frechet regression experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("-c", "--config", help="TOML config file")
        if name in ("rate-check", "report"):
            p.add_argument("--results", help="existing result CSV (skips running a sweep)")
        if name == "plot":
            p.add_argument("results", help="result CSV written by `mgfr sweep`")
            p.add_argument("--out", help="SVG path (default: <output.dir>/loss.svg)")
            p.add_argument("--log-axes", action="store_true", help="log10-scale both axes")
        _add_overrides(p)
    return parser


def main(argv=None, environ=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    overrides = {k[3:]: parse_literal(v) for k, v in vars(args).items() if k.startswith("ov:")}
    try:
        cfg = resolve(merge_layers(load_file(args.config) if args.config else None, overrides, environ))
        ensure_output_dir(cfg.output_dir)
    except InvalidConfiguration as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    func = COMMANDS[args.command][0]
    try:
        return func(cfg, args)
    except InvalidConfiguration as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except (FrechetError, OSError) as exc:
        _log(f"error: {exc}")
        return EXIT_RUNTIME
    except Exception as exc:  # still a runtime failure, reported rather than a traceback
        _log(f"error: {type(exc).__name__}: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
