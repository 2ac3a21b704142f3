"""``astralora`` command line: train, sweep, probe, gen-data, psi-test."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import diagnostics, plotting
from .config import ConfigError, load_config, load_probe_config, replace_train
from .data import DataFormatError, generate, load_csv, split, write_csv
from .numlin import RngStream
from .trainer import TrainingDiverged, train_run

log = logging.getLogger("astralora")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
AGGREGATE_COLUMNS = ("rank", "M", "seeds", "n_ok", "acc_mean", "acc_min", "acc_max",
                     "loss_mean", "q_total_mean")


class UsageError(Exception):
    pass


def _setup_logging():
    level = os.environ.get("ASTRALORA_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _int_list(text, minimum=1):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < minimum:
        raise argparse.ArgumentTypeError(f"grid values must be >= {minimum}")
    return vals


def _seed_list(text):
    return _int_list(text, minimum=0)


def _prepare_out(path, force):
    path = Path(path)
    if path.exists() and any(path.iterdir()):
        if not force:
            raise UsageError(f"{path} exists and is not empty (use --force to overwrite)")
        shutil.rmtree(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def load_datasets(run, base_dir="."):
    ds_cfg = run.dataset
    if ds_cfg.kind == "csv":
        path = Path(ds_cfg.path)
        ds = load_csv(path if path.is_absolute() else Path(base_dir) / path)
    else:
        ds = generate(ds_cfg.kind, ds_cfg.n, ds_cfg.noise, ds_cfg.seed, ds_cfg.classes)
    return split(ds, ds_cfg.test_fraction, ds_cfg.seed)


def _write_run_files(out, run, text, result, plot):
    if text is not None:
        (out / "config.toml").write_text(text)
    (out / "config.resolved.json").write_text(run.dumps())
    if plot:
        plotting.plot_metrics(result.rows, out / "metrics.png")


def run_cell(run, text, train, test, out, plot=False):
    """Run one configuration into ``out``; returns a result dict (never raises)."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        res = train_run(run, train, test, out_dir=out)
        _write_run_files(out, run, text, res, plot)
        return {"ok": True, "accuracy": res.final_accuracy, "loss": res.final_loss,
                "q_total": sum(res.queries[p] for p in ("forward", "zo", "psi"))}
    except TrainingDiverged as exc:
        (out / "diverged.json").write_text(json.dumps(exc.dump, indent=2))
        return {"ok": False, "error": str(exc)}
    except Exception as exc:  # per-cell failures are recorded, not fatal
        log.exception("cell %s failed", out)
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}


def cmd_train(args):
    run, text = load_config(args.config)
    if args.seed is not None:
        run = replace_train(run, seed=args.seed)
    out = _prepare_out(args.out or run.out_dir or Path("runs") / run.name, args.force)
    train, test = load_datasets(run, Path(args.config).parent)
    try:
        res = train_run(run, train, test, out_dir=out)
    except TrainingDiverged as exc:
        (out / "diverged.json").write_text(json.dumps(exc.dump, indent=2))
        raise
    _write_run_files(out, run, text, res, not args.no_plot)
    q = res.queries
    print(f"{run.name}: final_accuracy={res.final_accuracy:.4f} final_loss={res.final_loss:.4f} "
          f"total_queries={q['forward'] + q['zo'] + q['psi']} run_dir={out}")
    return EXIT_OK


def aggregate(cells):
    """Mean / min / max over seeds for each ``(rank, M)`` cell."""
    groups = {}
    for c in cells:
        groups.setdefault((c["rank"], c["M"]), []).append(c)
    rows = []
    for (rank, m), group in sorted(groups.items()):
        ok = [c for c in group if c["ok"]]
        acc = [c["accuracy"] for c in ok]
        rows.append({
            "rank": rank, "M": m, "seeds": len(group), "n_ok": len(ok),
            "acc_mean": float(np.mean(acc)) if ok else float("nan"),
            "acc_min": float(np.min(acc)) if ok else float("nan"),
            "acc_max": float(np.max(acc)) if ok else float("nan"),
            "loss_mean": float(np.mean([c["loss"] for c in ok])) if ok else float("nan"),
            "q_total_mean": float(np.mean([c["q_total"] for c in ok])) if ok else float("nan"),
        })
    return rows


def monotone_flag(rows):
    """Accuracy at (largest rank, largest M) >= accuracy at (smallest rank, smallest M)."""
    by_key = {(r["rank"], r["M"]): r["acc_mean"] for r in rows}
    hi = by_key[(max(r["rank"] for r in rows), max(r["M"] for r in rows))]
    lo = by_key[(min(r["rank"] for r in rows), min(r["M"] for r in rows))]
    return bool(hi >= lo), hi, lo


def _write_csv(path, columns, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (r[c] for c in columns)])


def cmd_sweep(args):
    run, text = load_config(args.config)
    out = _prepare_out(args.out or Path(run.out_dir or Path("runs") / run.name) / "sweep", args.force)
    train, test = load_datasets(run, Path(args.config).parent)
    jobs = []
    for rank in args.ranks:
        for m in args.budgets:
            for seed in args.seeds:
                cell = replace_train(run, rank=rank, m_bb=m, m_sm=m, seed=seed)
                jobs.append(((rank, m, seed), cell, out / f"r{rank}_M{m}_seed{seed}"))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(run_cell, cell, text, train, test, d) for _, cell, d in jobs]
            results = [f.result() for f in futures]
    else:
        results = [run_cell(cell, text, train, test, d) for _, cell, d in jobs]

    cells = []
    for ((rank, m, seed), _, d), res in zip(jobs, results):
        cells.append({"rank": rank, "M": m, "seed": seed, "run_dir": d.name, **res})
        if not res["ok"]:
            log.warning("cell r=%d M=%d seed=%d failed: %s", rank, m, seed, res["error"])
    cell_cols = ("rank", "M", "seed", "run_dir", "ok", "accuracy", "loss", "q_total", "error")
    _write_csv(out / "cells.csv", cell_cols, [{c: x.get(c, "") for c in cell_cols} for x in cells])
    rows = aggregate(cells)
    _write_csv(out / "aggregate.csv", AGGREGATE_COLUMNS, rows)
    flag, hi, lo = monotone_flag(rows)
    (out / "summary.json").write_text(json.dumps(
        {"monotone": flag, "acc_high": hi, "acc_low": lo,
         "failed_cells": sum(not c["ok"] for c in cells)}, indent=2) + "\n")
    if not args.no_plot:
        plotting.plot_sweep(rows, out / "aggregate.png")
    for r in rows:
        print(f"r={r['rank']:<4d} M={r['M']:<6d} acc={r['acc_mean']:.4f} "
              f"[{r['acc_min']:.4f}, {r['acc_max']:.4f}] ok={r['n_ok']}/{r['seeds']}")
    print(f"monotone={flag} sweep_dir={out}")
    return EXIT_OK if any(c["ok"] for c in cells) else EXIT_RUNTIME


PROBE_COLUMNS = ("study", "budget", "trials", "rel_err", "rel_err_std", "cosine", "slope")


def cmd_probe(args):
    cfg = load_probe_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    out = _prepare_out(args.out or "probe", args.force)
    rows = diagnostics.zo_error_study(cfg.d_inp, cfg.d_out, cfg.m_bb_grid, cfg.trials, seed, cfg.mu)
    rows += diagnostics.zo_error_study(cfg.d_inp, cfg.d_out, cfg.m_bb_grid[:1], 1, seed, cfg.mu,
                                       zero_error=True)
    rows += diagnostics.transpose_error_study(cfg.d_inp, cfg.d_out, cfg.rank, cfg.m_sm_grid,
                                              cfg.trials, seed)
    _write_csv(out / "probe.csv", PROBE_COLUMNS, [vars(r) for r in rows])
    if not args.no_plot:
        plotting.plot_probe(rows, out / "probe.png")
    for r in rows:
        print(f"{r.study:16s} budget={r.budget:<6d} rel_err={r.rel_err:.3e} slope={r.slope:.3f}")
    return EXIT_OK


def cmd_gen_data(args):
    try:
        ds = generate(args.kind, args.n, args.noise, args.seed, args.classes)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(ds, out)
    print(f"wrote {len(ds)} rows ({ds.dim} features, {ds.n_classes} classes) to {out}")
    return EXIT_OK


def cmd_psi_test(args):
    seed = 0 if args.seed is None else args.seed
    out = _prepare_out(args.out or "psi-test", args.force)
    stream = RngStream(seed, "psi-test")
    rows, ok = [], True

    def record(check, value, limit, passed):
        nonlocal ok
        ok &= passed
        rows.append({"check": check, "value": value, "limit": limit, "pass": passed})
        print(f"[{'PASS' if passed else 'FAIL'}] {check}: {value:.3e} (limit {limit:.1e})")

    errs, orth = [], []
    for _ in range(args.trials):
        d_out, d_inp = (int(v) for v in stream.integers(args.rank, args.dim + 1, 2))
        r = int(stream.integers(1, args.rank + 1, 1)[0])
        e, o = diagnostics.psi_exactness_trial(d_out, d_inp, r, stream)
        errs.append(e)
        orth.append(o)
    record("exactness_max_frobenius", max(errs), 1e-8, max(errs) <= 1e-8)
    record("orthonormality_max", max(orth), 1e-10, max(orth) <= 1e-10)
    spent, expected = diagnostics.psi_accounting_check(args.dim, args.dim, args.rank, args.m_sm, stream)
    record("query_accounting_delta", float(spent - expected), 0.0, spent == expected)
    tracked, frozen = diagnostics.psi_tracking(args.dim, args.dim, args.rank, max(1, args.rank // 2),
                                               args.steps, args.m_sm, seed)
    record("tracking_final_error", float(tracked[-1]), float(frozen[-1]), tracked[-1] < frozen[-1])
    _write_csv(out / "psi.csv", ("check", "value", "limit", "pass"), rows)
    with (out / "tracking.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("update", "ipsi_rel_err", "frozen_rel_err"))
        for i, (a, b) in enumerate(zip(tracked, frozen), start=1):
            w.writerow((i, repr(float(a)), repr(float(b))))
    if not args.no_plot:
        plotting.plot_tracking(tracked, frozen, out / "tracking.png")
    return EXIT_OK if ok else EXIT_RUNTIME


def build_parser():
    p = argparse.ArgumentParser(prog="astralora", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="TOML config file")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, help="override the seed")
        sp.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
        sp.add_argument("--no-plot", action="store_true", help="skip PNG figures")

    sp = sub.add_parser("train", help="train one configuration")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("sweep", help="rank x budget x seed grid")
    common(sp)
    sp.add_argument("--ranks", type=_int_list, required=True)
    sp.add_argument("--budgets", type=_int_list, required=True, help="M, used for both m_bb and m_sm")
    sp.add_argument("--seeds", type=_seed_list, default=[0])
    sp.add_argument("--jobs", type=int, default=1, help="concurrent cells")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("probe", help="estimator error vs query budget")
    common(sp)
    sp.set_defaults(func=cmd_probe)

    sp = sub.add_parser("gen-data", help="write a synthetic dataset CSV")
    sp.add_argument("--kind", required=True, choices=("spirals", "blobs", "xor-grid"))
    sp.add_argument("--n", type=int, default=1000)
    sp.add_argument("--noise", type=float, default=0.1)
    sp.add_argument("--classes", type=int, default=2)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("psi-test", help="I-PSI exactness, accounting and tracking checks")
    common(sp, config=False)
    sp.add_argument("--trials", type=int, default=50)
    sp.add_argument("--dim", type=int, default=64)
    sp.add_argument("--rank", type=int, default=8)
    sp.add_argument("--m-sm", type=int, default=1000)
    sp.add_argument("--steps", type=int, default=100)
    sp.set_defaults(func=cmd_psi_test)
    return p


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
