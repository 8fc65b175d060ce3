"""Command-line interface: ``hrkriging {fit,predict,al,bench-list}``."""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import benchmarks as bm
from . import kernel as km
from .active import MODELS, ALConfig, derive_seed, fit_model, run_active_learning
from .errors import ConfigError, HRKError, InvalidArgumentError, ParseError
from .hrk import make_context, objective_g
from .models import Dataset, FitOptions, HRKFit, make_fit, predict, tau

log = logging.getLogger("hrkriging")

THREADS_ENV = "HRKRIGING_THREADS"
SUMMARY_FIELDS = ["model", "n", "reps", "rmse_median", "rmse_p05", "rmse_p95",
                  "is_median", "is_p05", "is_p95"]


# ---------------------------------------------------------------- CSV helpers


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "nan" if np.isnan(v) else repr(float(v))
    return str(v)


def read_table(path, want_y: bool):
    """Read a numeric CSV with header ``x1..xp[,y]``; errors name the offending cell."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    if not rows:
        raise ParseError(f"{path}: missing header")
    header = [h.strip() for h in rows[0]]
    p = len(header) - 1 if want_y else len(header)
    expected = [f"x{j + 1}" for j in range(p)] + (["y"] if want_y else [])
    if p < 1 or header != expected:
        raise ParseError(f"{path}: expected header {','.join(expected) if p >= 1 else 'x1,...,xp'}, got {','.join(header)}")
    values = []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"{path}: line {i} has {len(row)} fields, expected {len(header)}")
        vals = []
        for name, cell in zip(header, row):
            try:
                vals.append(float(cell))
            except ValueError:
                raise ParseError(f"{path}: line {i}, column {name}: non-numeric value {cell!r}") from None
        values.append(vals)
    arr = np.array(values, dtype=float).reshape(-1, len(header))
    if want_y:
        return arr[:, :-1], arr[:, -1]
    return arr


# ---------------------------------------------------------------- model files


def fit_to_dict(fit: HRKFit) -> dict:
    return {
        "kind": fit.kind,
        "X": fit.data.X.tolist(),
        "Y": fit.data.Y.tolist(),
        "lower": fit.data.lower.tolist(),
        "upper": fit.data.upper.tolist(),
        "theta": fit.theta.tolist(),
        "jitter": fit.sys.jitter,
        "mu": fit.mu,
        "nu2": fit.nu2,
        "ctilde": fit.ctilde.tolist(),
        "loglik": fit.loglik,
        "flags": {k: v for k, v in fit.flags.items() if isinstance(v, (bool, int, float, str))},
    }


def fit_from_dict(obj: dict) -> HRKFit:
    data = Dataset(np.array(obj["X"]), np.array(obj["Y"]), np.array(obj["lower"]), np.array(obj["upper"]))
    sys_ = km.build_system(data.X, km.KernelSpec(np.array(obj["theta"]), obj["jitter"]))
    return make_fit(obj["kind"], data, sys_, np.array(obj["ctilde"]),
                    mu=obj["mu"], nu2=obj["nu2"], flags=obj.get("flags"))


def load_model(path) -> HRKFit:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: model file not found")
    with open(path) as fh:
        return fit_from_dict(json.load(fh))


# ---------------------------------------------------------------- commands


def cmd_fit(args) -> int:
    X, Y = read_table(args.data, want_y=True)
    if len(Y) < 2:
        raise ParseError(f"{args.data}: need at least 2 data rows")
    data = Dataset.from_native(X, Y)
    if np.ptp(Y) == 0:
        warnings.warn("constant response: returning a degenerate constant predictor", stacklevel=1)
    t0 = time.perf_counter()
    fit = fit_model(args.model, data, FitOptions(seed=args.seed))
    wall = time.perf_counter() - t0
    summary = {
        "model": fit.kind,
        "n": data.n,
        "p": data.p,
        "theta": [float(t) for t in fit.theta],
        "mu": fit.mu,
        "nu2": fit.nu2,
        "c0": fit.c0,
        "c_norm": float(np.linalg.norm(fit.c)),
        "jitter": fit.sys.jitter,
        "loglik": fit.loglik,
        "wall_time_s": wall,
    }
    if fit.kind == "hrk" and "g_rk" in fit.flags:
        summary.update(g_rk=fit.flags["g_rk"], g_final=fit.flags["g_final"],
                       optimizer=fit.flags["optimizer"])
    if fit.flags.get("degenerate"):
        summary["degenerate"] = True
    out = Path(args.out) if args.out else Path(args.data).with_suffix(".model.json")
    with open(out, "w") as fh:
        json.dump(fit_to_dict(fit), fh, indent=1)
    summary["model_file"] = str(out)
    json.dump(summary, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def cmd_predict(args) -> int:
    fit = load_model(args.model)
    pts = read_table(args.points, want_y=False)
    p = fit.data.p
    if pts.size and pts.shape[1] != p:
        raise InvalidArgumentError(f"points have {pts.shape[1]} columns, model expects {p}")
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow([f"x{j + 1}" for j in range(p)] + ["mean", "sd", "tau"])
        if len(pts):
            U = fit.data.to_unit(pts.reshape(-1, p))
            pred = predict(fit, U)
            t = tau(fit, U)
            for row, m, v, tt in zip(pts.reshape(-1, p), pred.mean, pred.variance, t):
                w.writerow([_fmt(float(a)) for a in row] + [_fmt(m), _fmt(np.sqrt(v)), _fmt(tt)])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_bench_list(args) -> int:
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["id", "p", "lower", "upper", "description"])
    for fid, f in bm.REGISTRY.items():
        w.writerow([fid, f.p, " ".join(_fmt(float(v)) for v in f.lower),
                    " ".join(_fmt(float(v)) for v in f.upper), f.description])
    return 0


# ---------------------------------------------------------------- experiments


_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def load_experiment(path, seed=None, out_dir=None) -> dict:
    """Parse a flat ``key = value`` experiment file into a validated dict.

    Keys: ``function`` or ``dataset``, ``models``, ``n_ini``, ``budget``,
    ``replicates``, ``seed``, ``out_dir``, ``test_size``, ``test_seed``,
    ``warm_start``, ``init``, ``interval``, ``alpha``.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: config file not found")
    text = path.read_text()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text if text.lstrip().startswith("[") else "[experiment]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    raw = dict(cp[cp.sections()[0]]) if cp.sections() else {}
    known = {"function", "dataset", "models", "n_ini", "budget", "replicates", "seed", "out_dir",
             "test_size", "test_seed", "warm_start", "init", "interval", "alpha"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")

    def num(key, cast, default):
        if key not in raw:
            return default
        try:
            return cast(raw[key])
        except ValueError:
            raise ConfigError(f"{path}: {key} = {raw[key]!r} is not a valid {cast.__name__}") from None

    cfg = {}
    if ("function" in raw) == ("dataset" in raw):
        raise ConfigError(f"{path}: give exactly one of 'function' and 'dataset'")
    if "function" in raw:
        cfg["function"] = raw["function"]
        f = bm.get_function(raw["function"])
        p = f.p
        cfg["pool"] = None
    else:
        ds = (path.parent / raw["dataset"]) if not Path(raw["dataset"]).is_absolute() else Path(raw["dataset"])
        X, Y = read_table(ds, want_y=True)
        cfg["function"] = None
        cfg["dataset"] = str(ds)
        cfg["pool"] = (X, Y)
        p = X.shape[1]
    models = [m.strip() for m in raw.get("models", "ok,hrk").split(",") if m.strip()]
    bad = [m for m in models if m not in MODELS]
    if bad or not models:
        raise ConfigError(f"{path}: unknown models {bad}; choose from {MODELS}")
    cfg["models"] = models
    cfg["p"] = p
    cfg["n_ini"] = num("n_ini", int, 10 * p)
    cfg["budget"] = num("budget", int, cfg["n_ini"] + 25)
    cfg["replicates"] = num("replicates", int, 10)
    cfg["seed"] = seed if seed is not None else num("seed", int, 0)
    cfg["out_dir"] = out_dir if out_dir is not None else raw.get("out_dir", "al_out")
    cfg["test_size"] = num("test_size", int, None)
    cfg["test_seed"] = num("test_seed", int, None)
    ws = raw.get("warm_start", "true").lower()
    if ws not in _BOOL:
        raise ConfigError(f"{path}: warm_start must be true/false")
    cfg["warm_start"] = _BOOL[ws]
    cfg["init"] = raw.get("init", "lhd")
    cfg["interval"] = raw.get("interval", "quantile")
    cfg["alpha"] = num("alpha", float, 0.05)
    if cfg["replicates"] < 1:
        raise ConfigError(f"{path}: replicates must be >= 1")
    # validate every run up front so configuration errors surface before any work
    for m in models:
        _al_config(cfg, m, 0)
    return cfg


def _al_config(cfg, model, rep) -> ALConfig:
    pool = cfg["pool"]
    return ALConfig(
        model=model, budget=cfg["budget"], n_ini=cfg["n_ini"], function=cfg["function"],
        pool_X=None if pool is None else pool[0], pool_Y=None if pool is None else pool[1],
        seed=cfg["seed"], rep=rep, test_size=cfg["test_size"], test_seed=cfg["test_seed"],
        warm_start=cfg["warm_start"], init=cfg["init"], alpha=cfg["alpha"],
        interval=cfg["interval"],
    )


def _header_lines(cfg, model, rep=None):
    lines = [
        f"function={cfg['function'] or cfg.get('dataset')}",
        f"model={model}",
        f"base_seed={cfg['seed']}",
        "seed_derivation=blake2b-xor: step seed = base ^ blake2b(repr((rep, step)))",
        f"n_ini={cfg['n_ini']}",
        f"budget={cfg['budget']}",
        f"init={cfg['init']}",
        f"interval={cfg['interval']}",
        f"alpha={cfg['alpha']}",
        f"warm_start={cfg['warm_start']}",
        "candidates=100(p+1)^2 farthest-point subset of a 1000(p+1)^2 random LHD, regenerated per step",
    ]
    if cfg["function"] == "oscillator":
        lines.append("oscillator=exp(-6x)cos(6 pi x) stand-in")
    if rep is not None:
        lines.append(f"rep={rep}")
    return ["# " + s for s in lines]


def write_trace(path, trace, cfg, model, rep):
    p = cfg["p"]
    with open(path, "w", newline="") as fh:
        for line in _header_lines(cfg, model, rep):
            fh.write(line + "\n")
        if not trace.complete:
            fh.write("# incomplete: " + "; ".join(trace.events) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep", "step", "n"] + [f"x{j + 1}" for j in range(p)]
                   + ["y", "rmse", "is", "fit_ms", "status"])
        for r in trace.records:
            w.writerow([rep, r.step, r.n] + [_fmt(float(v)) for v in r.x_native]
                       + [_fmt(r.y), _fmt(r.rmse), _fmt(r.interval_score),
                          f"{r.fit_ms:.3f}", r.status])


def summarize(metrics: dict) -> list[dict]:
    """Per-step median and 5th/95th percentiles across replicates.

    ``metrics`` maps ``(model, rep)`` to ``{n: (rmse, is)}``.
    """
    rows = []
    models = sorted({m for m, _ in metrics}, key=MODELS.index)
    for m in models:
        per_n: dict = {}
        for (mm, rep), series in sorted(metrics.items()):
            if mm != m:
                continue
            for n, (e, s) in series.items():
                per_n.setdefault(n, []).append((e, s))
        for n in sorted(per_n):
            arr = np.array(per_n[n], dtype=float)
            e, s = arr[:, 0], arr[:, 1]
            rows.append({
                "model": m, "n": n, "reps": len(arr),
                "rmse_median": float(np.percentile(e, 50)),
                "rmse_p05": float(np.percentile(e, 5)),
                "rmse_p95": float(np.percentile(e, 95)),
                "is_median": float(np.percentile(s, 50)),
                "is_p05": float(np.percentile(s, 5)),
                "is_p95": float(np.percentile(s, 95)),
            })
    return rows


def run_experiment(cfg: dict, threads: int = 1) -> tuple[int, dict]:
    """Run every (model, replicate), write trace files and the summary CSV."""
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(m, r) for m in cfg["models"] for r in range(cfg["replicates"])]

    def one(job):
        m, r = job
        try:
            trace = run_active_learning(_al_config(cfg, m, r))
        except Exception as exc:  # noqa: BLE001 - recorded and skipped
            log.error("model %s replicate %d failed: %s", m, r, exc)
            return job, None, str(exc)
        write_trace(out / f"trace_{m}_rep{r:03d}.csv", trace, cfg, m, r)
        return job, trace, None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]

    metrics, failures = {}, []
    for (m, r), trace, err in results:
        if trace is None or not trace.complete:
            failures.append(f"{m} rep {r}: {err or '; '.join(trace.events)}")
            continue
        series = {}
        for rec in trace.records:
            series.setdefault(rec.n, (rec.rmse, rec.interval_score))
        metrics[(m, r)] = series
    rows = summarize(metrics)
    with open(out / "summary.csv", "w", newline="") as fh:
        for line in _header_lines(cfg, ",".join(cfg["models"])):
            fh.write(line + "\n")
        fh.write(f"# replicates={cfg['replicates']}\n")
        for f in failures:
            fh.write(f"# failed: {f}\n")
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) for k, v in row.items()})
    ok_models = {m for m, _ in metrics}
    status = 0 if all(m in ok_models for m in cfg["models"]) else 1
    return status, {"rows": rows, "failures": failures, "metrics": metrics}


def cmd_al(args) -> int:
    cfg = load_experiment(args.config, seed=args.seed, out_dir=args.out_dir)
    status, res = run_experiment(cfg, threads=args.threads)
    for f in res["failures"]:
        print(f"failed: {f}", file=sys.stderr)
    print(f"wrote {cfg['out_dir']}/summary.csv")
    return status


# ---------------------------------------------------------------- entry point


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hrkriging", description="OK / RK / HRK surrogates and ALM experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a model to a CSV with header x1..xp,y")
    f.add_argument("data")
    f.add_argument("--model", choices=MODELS, default="hrk")
    f.add_argument("--out", help="model file (default: <data>.model.json)")
    f.add_argument("--seed", type=int, default=0)
    f.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict at native-unit points (CSV header x1..xp)")
    p.add_argument("model")
    p.add_argument("points")
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_predict)

    a = sub.add_parser("al", help="run a replicated active-learning experiment")
    a.add_argument("config")
    a.add_argument("--seed", type=int, default=None, help="override the base seed")
    a.add_argument("--out-dir", default=None)
    a.add_argument("--threads", type=int, default=_default_threads(),
                   help=f"worker threads (default ${THREADS_ENV} or 1)")
    a.set_defaults(func=cmd_al)

    b = sub.add_parser("bench-list", help="list built-in test functions")
    b.set_defaults(func=cmd_bench_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except HRKError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
