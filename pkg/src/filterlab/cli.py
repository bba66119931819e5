"""Scenario-driven command line entry point.

Usage:  filterlab <command> --config scenario.json [--out DIR] [--seed N]
                  [--threads N] [--plot]

Commands: bayes, sde, cfilter, ito-check, qfilter, ensemble.  Scenarios are
JSON documents {"version": 1, "parameters": {...}, "master_seed": ...,
"output_dir": ...}; --out and --seed override the config.  All randomness
flows from the master seed through ``seed_derive``; no ambient entropy.

Outputs are CSV with a header row and time column first, written atomically
(temp file then rename), plus a JSON summary per run containing the config
echo, the seed, wall time and the pass/fail status of built-in checks.  With
``--plot`` each command also renders PNG figures next to the CSV output; the
figures are derived from the CSV data and never feed back into results.

Exit codes: 0 success, 1 a built-in check failed, 2 invalid configuration,
3 numeric failure (filter collapse, stability violation).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
import time

import numpy as np

from . import bayes as _bayes
from . import belavkin as _bel
from . import classical as _cl
from . import qsc as _qsc
from . import sde as _sde
from .errors import ConfigError, FilterLabError
from .operators import Ket
from .seeds import RngStream, seed_derive
from .serialize import ket_from_json, operator_from_json, operator_to_json

SUPPORTED_VERSION = 1
COMMANDS = ("bayes", "sde", "cfilter", "ito-check", "qfilter", "ensemble")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_BAD_CONFIG = 2
EXIT_NUMERIC = 3


def _atomic_write_text(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str, header: list, columns: list):
    """Write columns (equal-length 1-D arrays) as CSV, atomically."""
    rows = zip(*[np.asarray(c) for c in columns])
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) for v in row])
    _atomic_write_text(path, buf.getvalue())


def write_json(path: str, doc: dict):
    _atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _require(params: dict, *names):
    for name in names:
        if name not in params:
            raise ConfigError(f"missing required field {name!r}")


def _load_config(args) -> dict:
    try:
        with open(args.config) as f:
            cfg = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}")
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if int(cfg.get("version", -1)) != SUPPORTED_VERSION:
        raise ConfigError(f"missing required field 'version' or unsupported "
                          f"value (supported: {SUPPORTED_VERSION})")
    if "command" in cfg and cfg["command"] != args.command:
        raise ConfigError(f"config field 'command' = {cfg['command']!r} does "
                          f"not match invoked command {args.command!r}")
    if "parameters" not in cfg or not isinstance(cfg["parameters"], dict):
        raise ConfigError("missing required field 'parameters'")
    if args.seed is not None:
        cfg["master_seed"] = args.seed
    if "master_seed" not in cfg:
        cfg["master_seed"] = 0
    cfg["master_seed"] = int(cfg["master_seed"])
    if args.out is not None:
        cfg["output_dir"] = args.out
    if "output_dir" not in cfg:
        raise ConfigError("missing required field 'output_dir' (or pass --out)")
    return cfg


def _diffusion_from_params(p: dict) -> _sde.DiffusionSpec:
    """Named drift/diffusion presets; callables cannot come from JSON."""
    _require(p, "model")
    x0 = float(p.get("x0", 0.0))
    model = p["model"]
    if model == "wiener":
        return _sde.DiffusionSpec(lambda x: 0.0 * x, lambda x: np.ones_like(x) + 0.0 * x, x0)
    if model == "linear":
        # dX = -a X dt + sig dW
        a, sig = float(p.get("a", 1.0)), float(p.get("sig", 1.0))
        return _sde.DiffusionSpec(lambda x: -a * x, lambda x: sig + 0.0 * x, x0)
    if model == "geometric":
        # dX = -gamma X dt + sig X dW
        g, sig = float(p.get("gamma", 1.0)), float(p.get("sig", 1.0))
        return _sde.DiffusionSpec(lambda x: -g * x, lambda x: sig * x, x0)
    raise ConfigError(f"unknown diffusion model {model!r} "
                      "(expected wiener, linear or geometric)")


def _prior_from_params(p: dict) -> _bayes.GridDensity:
    _require(p, "type")
    n = int(p.get("n", _bayes.DEFAULT_N))
    if p["type"] == "uniform":
        _require(p, "lo", "hi")
        return _bayes.uniform_density(float(p["lo"]), float(p["hi"]), n)
    if p["type"] == "gaussian":
        _require(p, "mean", "var")
        return _bayes.gaussian_density(float(p["mean"]), float(p["var"]), n)
    raise ConfigError(f"unknown prior type {p['type']!r}")


def _likelihood_from_params(p: dict) -> _bayes.Likelihood:
    _require(p, "type")
    if p["type"] == "coin":
        _require(p, "sequence")
        return _bayes.coin_likelihood(list(p["sequence"]))
    if p["type"] == "gaussian":
        _require(p, "var_noise")
        return _bayes.gaussian_likelihood(float(p["var_noise"]))
    raise ConfigError(f"unknown likelihood type {p['type']!r}")


def _cmd_bayes(cfg, outdir, plot):
    p = cfg["parameters"]
    _require(p, "prior", "likelihood")
    prior = _prior_from_params(p["prior"])
    lik = _likelihood_from_params(p["likelihood"])
    y = float(p.get("observation", 0.0))
    post = _bayes.posterior_grid(prior, lik, y)
    stats = _bayes.density_stats(post)
    csv_path = os.path.join(outdir, "posterior.csv")
    write_csv(csv_path, ["x", "density"], [post.x, post.values])
    outputs = [csv_path]
    if plot:
        from . import plots

        png = os.path.join(outdir, "posterior.png")
        plots.render_density(post.x, post.values, png)
        outputs.append(png)
    checks = {"posterior_normalized": abs(post.integral() - 1.0) <= _bayes.TOL_INT}
    return {"stats": stats, "outputs": outputs, "checks": checks}


def _cmd_sde(cfg, outdir, plot):
    p = cfg["parameters"]
    _require(p, "T", "dt")
    spec = _diffusion_from_params(p)
    T, dt = float(p["T"]), float(p["dt"])
    rng = RngStream(cfg["master_seed"], int(p.get("stream_index", 0)))
    path = _sde.euler_maruyama(spec, T, dt, rng)
    csv_path = os.path.join(outdir, "path.csv")
    write_csv(csv_path, ["t", "x"], [path.times, path.values])
    outputs = [csv_path]
    if plot:
        from . import plots

        png = os.path.join(outdir, "path.png")
        plots.render_paths(path.times, path.values, png)
        outputs.append(png)
    checks = {"finite": bool(np.all(np.isfinite(path.values)))}
    return {"terminal_value": float(path.values[-1]), "outputs": outputs,
            "checks": checks}


def _cmd_ensemble(cfg, outdir, plot):
    """Ensemble of diffusion paths, summarized as per-time mean and variance."""
    p = cfg["parameters"]
    _require(p, "T", "dt", "M")
    spec = _diffusion_from_params(p)
    T, dt, M = float(p["T"]), float(p["dt"]), int(p["M"])
    if M < 2:
        raise ConfigError("ensemble needs M >= 2")
    vals = []
    for m in range(M):
        rng = RngStream(cfg["master_seed"], m)
        vals.append(_sde.euler_maruyama(spec, T, dt, rng).values)
    arr = np.asarray(vals)
    t = np.arange(arr.shape[1]) * dt
    mean = arr.mean(axis=0)
    var = arr.var(axis=0, ddof=1)
    csv_path = os.path.join(outdir, "ensemble.csv")
    write_csv(csv_path, ["t", "mean", "var"], [t, mean, var])
    outputs = [csv_path]
    if plot:
        from . import plots

        png = os.path.join(outdir, "ensemble.png")
        plots.render_paths(t, arr[:20], png, title=f"{M}-path ensemble")
        outputs.append(png)
    return {"terminal_mean": float(mean[-1]), "terminal_var": float(var[-1]),
            "outputs": outputs, "checks": {"finite": bool(np.all(np.isfinite(arr)))}}


def _cmd_cfilter(cfg, outdir, plot):
    """Linear-Gaussian twin experiment filtered on a grid, with oracle."""
    p = cfg["parameters"]
    _require(p, "T", "dt")
    a = float(p.get("a", 1.0))
    c = float(p.get("c", 1.0))
    sig = float(p.get("sig", 0.5))
    x0 = float(p.get("x0", 0.0))
    T, dt = float(p["T"]), float(p["dt"])
    lo = float(p.get("lo", -4.0))
    hi = float(p.get("hi", 4.0))
    n = int(p.get("n", 1024))
    spec = _sde.DiffusionSpec(lambda x: -a * x, lambda x: sig + 0.0 * x, x0)
    obs = _cl.ObservationModel(lambda x: c * x)
    rng = RngStream(cfg["master_seed"], int(p.get("stream_index", 0)))
    X, record = _cl.simulate_truth_and_observation(spec, obs, T, dt, rng)
    prior_var = float(p.get("prior_var", 0.5))
    shell = _bayes.GridDensity(lo, hi, np.zeros(n))
    prior = _bayes.GridDensity(
        lo, hi, np.exp(-(shell.x - x0) ** 2 / (2 * prior_var))).normalized()
    out = _cl.kushner_run(prior, spec, obs, record,
                          {"mean": lambda x: x, "second": lambda x: x ** 2})
    km, kv = _cl.kalman_bucy_reference(a, c, sig, x0, prior_var, record)
    truth_csv = os.path.join(outdir, "truth.csv")
    record_csv = os.path.join(outdir, "record.csv")
    filter_csv = os.path.join(outdir, "filter.csv")
    write_csv(truth_csv, ["t", "x"], [X.times, X.values])
    write_csv(record_csv, ["t", "dY"], [record.times[1:], record.dY])
    dI_col = np.concatenate([[0.0], out.dI])
    write_csv(filter_csv, ["t", "pi_mean", "pi_second", "dI"],
              [out.times, out.pi["mean"], out.pi["second"], dI_col])
    var_path = out.pi["second"] - out.pi["mean"] ** 2
    I_T = float(np.sum(out.dI))
    qv = float(np.sum(out.dI ** 2))
    summary = {
        "terminal_mean": float(out.pi["mean"][-1]),
        "terminal_var": float(var_path[-1]),
        "kalman_terminal_mean": float(km[-1]),
        "kalman_terminal_var": float(kv[-1]),
        "sup_mean_error_vs_kalman": float(np.max(np.abs(out.pi["mean"] - km))),
        "innovation_total": I_T,
        "innovation_quadratic_variation": qv,
        "outputs": [truth_csv, record_csv, filter_csv],
        "checks": {"innovation_qv_near_T": abs(qv - T) <= 0.2 * T},
    }
    if plot:
        from . import plots

        png = os.path.join(outdir, "filter.png")
        plots.render_filter_tracks(out.times, {"pi_mean": out.pi["mean"],
                                               "kalman_mean": km},
                                   png, truth=X.values)
        summary["outputs"].append(png)
    return summary


def _slh_from_params(p: dict) -> _qsc.SLHTriple:
    _require(p, "L", "H")
    L = operator_from_json(p["L"]).matrix
    H = operator_from_json(p["H"]).matrix
    S = operator_from_json(p["S"]).matrix if "S" in p else None
    return _qsc.slh(L, H, S)


def _cmd_ito_check(cfg, outdir, plot):
    p = cfg["parameters"]
    triple = _slh_from_params(p)
    theta = _qsc.hp_increment(triple)
    x_probe = np.asarray(operator_from_json(p["X"]).matrix) if "X" in p \
        else np.eye(triple.dim, dtype=complex)
    flow = _qsc.heisenberg_increment(triple, x_probe)
    defect = _qsc.unitarity_defect(triple)
    doc = {
        "unitary_increment": {str(b): operator_to_json(c)
                              for b, c in sorted(theta.terms.items(), key=lambda i: str(i[0]))},
        "heisenberg_increment": {str(b): operator_to_json(c)
                                 for b, c in sorted(flow.terms.items(), key=lambda i: str(i[0]))},
        "output_fields": [{str(b): operator_to_json(c) for b, c in e.terms.items()}
                          for e in _qsc.output_increment(triple)],
        "unitarity_defect": defect,
    }
    out_path = os.path.join(outdir, "ito_check.json")
    write_json(out_path, doc)
    print(f"unitarity defect: {defect:.3e}")
    return {"unitarity_defect": defect, "outputs": [out_path],
            "checks": {"unitarity_defect_small": defect <= 1e-8}}


def _cmd_qfilter(cfg, outdir, plot):
    p = cfg["parameters"]
    _require(p, "L", "H", "psi0", "T", "dt", "M")
    model = _bel.EmissionAbsorptionModel(operator_from_json(p["L"]).matrix,
                                         operator_from_json(p["H"]).matrix)
    psi0 = ket_from_json(p["psi0"])
    T, dt, M = float(p["T"]), float(p["dt"]), int(p["M"])
    observables = {name: operator_from_json(doc).matrix
                   for name, doc in p.get("observables", {}).items()}
    if not observables:
        raise ConfigError("qfilter needs at least one entry in 'observables'")
    rng = RngStream(cfg["master_seed"], 0)
    record, _states = _bel.generate_record(psi0, model, T, dt, rng,
                                           observables=observables)
    traj_csv = os.path.join(outdir, "trajectory.csv")
    names = list(observables)
    dcol = [np.concatenate([[0.0], record.dY]), np.concatenate([[0.0], record.dI])]
    write_csv(traj_csv, ["t", "dY", "dI"] + [f"pi_{n}" for n in names],
              [record.times] + dcol + [record.pi[n] for n in names])
    res = _bel.ensemble_average(model, psi0, T, dt, M, observables,
                                cfg["master_seed"],
                                record_every=int(p.get("record_every", 10)))
    ens_csv = os.path.join(outdir, "ensemble.csv")
    cols = [res.times]
    header = ["t"]
    for n_ in names:
        header += [f"mean_{n_}", f"se_{n_}", f"master_{n_}"]
        cols += [res.mean[n_], res.se[n_], res.master[n_]]
    write_csv(ens_csv, header, cols)
    qv = float(np.sum(record.dY ** 2))
    checks = {}
    for n_ in names:
        tol = 4.0 * float(np.max(res.se[n_])) + 1e-12
        checks[f"ensemble_matches_master_{n_}"] = res.sup_deviation[n_] <= tol
    checks["record_qv_near_T"] = abs(qv - T) <= 0.1 * T
    summary = {
        "sup_deviation": res.sup_deviation,
        "record_quadratic_variation": qv,
        "clip_events": res.clip_events,
        "outputs": [traj_csv, ens_csv],
        "checks": checks,
    }
    if plot:
        from . import plots

        for n_ in names:
            png = os.path.join(outdir, f"ensemble_{n_}.png")
            plots.render_ensemble(res.times, res.mean[n_], res.se[n_],
                                  res.master[n_], png, name=n_)
            summary["outputs"].append(png)
    return summary


_HANDLERS = {
    "bayes": _cmd_bayes,
    "sde": _cmd_sde,
    "ensemble": _cmd_ensemble,
    "cfilter": _cmd_cfilter,
    "ito-check": _cmd_ito_check,
    "qfilter": _cmd_qfilter,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="filterlab",
                                 description="classical and quantum filtering laboratory")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="scenario JSON file")
    ap.add_argument("--out", default=None, help="output directory (overrides config)")
    ap.add_argument("--seed", type=int, default=None,
                    help="master seed (overrides config)")
    ap.add_argument("--threads", type=int, default=1,
                    help="worker count; affects speed only, never results")
    ap.add_argument("--plot", action="store_true",
                    help="also render PNG figures next to the CSV output")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t_start = time.monotonic()
    try:
        cfg = _load_config(args)
        outdir = cfg["output_dir"]
        os.makedirs(outdir, exist_ok=True)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        result = _HANDLERS[args.command](cfg, outdir, args.plot)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except FilterLabError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    checks = result.pop("checks", {})
    summary = {
        "command": args.command,
        "config": {k: cfg[k] for k in ("version", "parameters", "master_seed")},
        "seed": cfg["master_seed"],
        "derived_seed_stream0": seed_derive(cfg["master_seed"], 0),
        "wall_time_s": time.monotonic() - t_start,
        "checks": checks,
        **result,
    }
    write_json(os.path.join(outdir, "summary.json"), summary)
    if not all(checks.values()):
        failed = [k for k, v in checks.items() if not v]
        print(f"built-in checks failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
