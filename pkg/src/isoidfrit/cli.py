"""Command-line front end: collect, tune, evaluate, reference and presets."""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import math
import os
import sys
import warnings

import numpy as np

from . import __version__
from .config import PRESETS, TuneConfig, load_config, preset
from .discretize import tustin
from .errors import BadData, ConfigError, IsoFritError, NoCrossing, ReferenceModelUnstable
from .frac import build_reference_model, reference_open_loop
from .freq import (bode_arrays, default_band, estimated_loop_margins, flatness_metric,
                   loop_margins)
from .poly_tf import DiscreteTF
from .sim import ExperimentData, Signal, closed_loop_sim, impulse_response, step_metrics, toeplitz_mul
from .tuning import (FritLoss, build_controller, gain_robustness_report, tune_controller)

EXIT_OK, EXIT_ERROR, EXIT_SUSPECT = 0, 1, 2
DATA_COLUMNS = ("k", "t", "r", "u", "y")
BODE_POINTS = 200


# -- small I/O helpers -------------------------------------------------------
def _clean(x):
    """JSON-safe copy: NaN/Inf become null, numpy scalars become Python floats."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def _dump_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_csv(path, header, columns):
    cols = [np.asarray(c) for c in columns]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([str(int(v)) if isinstance(v, (np.integer, int)) else "%.17g" % v
                        for v in row])


def write_data_csv(path, data: ExperimentData):
    k = np.arange(data.N + 1)
    write_csv(path, DATA_COLUMNS, [k, k * data.t_s, data.r.samples, data.u.samples, data.y.samples])


def read_data_csv(path, t_s) -> ExperimentData:
    """Parse a ``k,t,r,u,y`` record, checking the sample grid against ``t_s``."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise BadData(f"{path}: {exc.strerror}") from None
    if not rows or tuple(h.strip() for h in rows[0]) != DATA_COLUMNS:
        raise BadData(f"{path}: header must be {','.join(DATA_COLUMNS)}")
    body = [r for r in rows[1:] if r]
    if not body:
        raise BadData(f"{path}: no samples")
    try:
        arr = np.array([[float(v) for v in r] for r in body])
    except ValueError as exc:
        raise BadData(f"{path}: {exc}") from None
    if arr.shape[1] != len(DATA_COLUMNS):
        raise BadData(f"{path}: expected {len(DATA_COLUMNS)} columns")
    k, t = arr[:, 0], arr[:, 1]
    if not np.array_equal(k, np.arange(k.size)):
        raise BadData(f"{path}: k must count 0, 1, 2, ...")
    if np.any(np.abs(t - k * t_s) > 1e-9 * max(1.0, k[-1] * t_s)):
        raise BadData(f"{path}: t column disagrees with t_s = {t_s:g}")
    return ExperimentData.from_arrays(arr[:, 2], arr[:, 3], arr[:, 4], t_s)


def _file_digest(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _step(n, amplitude, t_s):
    return Signal(np.full(n + 1, float(amplitude)), t_s)


def _discrete_plant(cfg: TuneConfig) -> DiscreteTF:
    if cfg.plant is None:
        raise ConfigError("config.plant: required for this command")
    return tustin(cfg.plant, cfg.t_s)


def _margins(l: DiscreteTF):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            wc, pm = loop_margins(l)
    except NoCrossing:
        return {"omega_c": None, "phi_m": None, "flatness_deg_per_decade": None}
    try:
        slope = flatness_metric(l, wc)
    except ValueError:
        slope = math.nan
    return {"omega_c": wc, "phi_m": pm, "flatness_deg_per_decade": slope}


def _step_summary(y, setpoint, t_s):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        m = step_metrics(y, setpoint, t_s)
    return {"overshoot_percent": m.overshoot_percent, "settling_time": m.settling_time,
            "steady_state": m.steady_state, "settled": not caught}


def _reference_model(cfg: TuneConfig, n):
    mdl = build_reference_model(cfg.reference)
    return mdl, impulse_response(mdl, n)


# -- commands ----------------------------------------------------------------
def cmd_collect(cfg: TuneConfig, out_dir, theta=None):
    """Simulate the initial closed-loop experiment and write ``data.csv``."""
    n = cfg.samples()
    p = _discrete_plant(cfg)
    spec = cfg.controller if theta is None else cfg.controller.with_theta(theta)
    c = build_controller(spec)
    r = _step(n, cfg.amplitude, cfg.t_s)
    u, y = closed_loop_sim(p, c, r)
    data = ExperimentData(r, u, y)
    path = os.path.join(out_dir, "data.csv")
    write_data_csv(path, data)
    return path


def _tune_body(cfg: TuneConfig, data: ExperimentData, result, m_ref_tf, m_ref, data_digest):
    names = cfg.parameter_names
    t_s = data.t_s
    ref_loop = reference_open_loop(cfg.reference)
    body = {
        "tool": {"name": "isoidfrit", "version": __version__},
        "config": cfg.raw,
        "seed": cfg.pso.seed,
        "data": {"samples": data.N + 1, "t_s": t_s, "sha256": data_digest},
        "result": {
            "structure": cfg.structure,
            "parameter_names": list(names),
            "theta_star": list(result.theta_star),
            "J_star": result.J_star,
            "J_threshold": result.J_threshold,
            "verdict": result.verdict,
            "iterations": result.iterations,
            "evaluations": result.evaluations,
            "history": result.history,
        },
        "reference_model": {
            "gamma": cfg.reference.gamma,
            "max_pole_radius": float(np.max(np.abs(m_ref_tf.poles))) if len(m_ref_tf.poles) else 0.0,
            "loop": _margins(ref_loop),
            "step": _step_summary(toeplitz_mul(data.r.samples, m_ref), data.r.samples[-1], t_s),
        },
    }
    est = {"omega_c": None, "phi_m": None}
    step_est = None
    if result.restored_impulse is not None:
        t = result.restored_impulse.samples
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                wc, pm = estimated_loop_margins(t, t_s)
            est = {"omega_c": wc, "phi_m": pm}
        except NoCrossing:
            pass
        step_est = _step_summary(toeplitz_mul(data.r.samples, t), data.r.samples[-1], t_s)
    body["estimated_loop"] = {**est, "step": step_est}
    if cfg.plant is not None:
        p = _discrete_plant(cfg)
        c = build_controller(cfg.controller.with_theta(result.theta_star))
        body["validation"] = _margins(p * c)
    return body


def cmd_tune(cfg: TuneConfig, data_path, out_dir, threads=1):
    """Run the tuning procedure; returns ``(report, exit_code)``."""
    data = read_data_csv(data_path, cfg.t_s)
    m_ref_tf, m_ref = _reference_model(cfg, data.N)
    result = tune_controller(cfg.controller, cfg.bounds, data, m_ref, cfg.pso,
                             threads=threads, J_threshold=cfg.j_threshold)
    body = _tune_body(cfg, data, result, m_ref_tf, m_ref, _file_digest(data_path))
    report = {"body": body, "sidecar": {
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "threads": threads, "data_path": os.path.abspath(data_path)}}
    _dump_json(report, os.path.join(out_dir, "report.json"))
    if result.restored_impulse is not None:
        t = result.restored_impulse.samples
        k = np.arange(t.size)
        write_csv(os.path.join(out_dir, "restored_impulse.csv"), ("k", "t", "impulse"),
                  [k, k * data.t_s, t])
    code = EXIT_OK if result.verdict == "likely_bibo" else EXIT_SUSPECT
    return report, code


def cmd_evaluate(cfg: TuneConfig, theta, out_dir, data_path=None):
    """Plot data and metrics for one parameter vector, with the plant and/or logged data."""
    spec = cfg.controller.with_theta(theta)
    metrics = {"structure": cfg.structure, "parameter_names": list(cfg.parameter_names),
               "theta": list(spec.theta)}
    c = build_controller(spec)
    if cfg.plant is not None:
        p = _discrete_plant(cfg)
        n = cfg.samples()
        r = _step(n, cfg.amplitude, cfg.t_s)
        mdl, m_ref = _reference_model(cfg, n)
        cols, header = [np.arange(n + 1) * cfg.t_s, r.samples], ["t", "r"]
        for g in cfg.gains:
            cols.append(closed_loop_sim(float(g) * p, c, r)[1].samples)
            header.append(f"y_gain_{g:g}")
        cols.append(toeplitz_mul(r.samples, m_ref.samples))
        header.append("y_ref")
        write_csv(os.path.join(out_dir, "step.csv"), header, cols)

        lo, hi = default_band(cfg.t_s)
        grid = np.geomspace(lo, hi, BODE_POINTS)
        _, mag, ph = bode_arrays(p * c, grid)
        _, rmag, rph = bode_arrays(reference_open_loop(cfg.reference), grid)
        write_csv(os.path.join(out_dir, "bode.csv"),
                  ("omega", "loop_db", "loop_deg", "ref_loop_db", "ref_loop_deg"),
                  [grid, mag, ph, rmag, rph])

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rows = gain_robustness_report(p, c, cfg.gains, r)
        write_csv(os.path.join(out_dir, "robustness.csv"),
                  ("gain", "overshoot_percent", "settling_time", "omega_c", "phi_m"),
                  [[getattr(row, f) for row in rows] for f in
                   ("gain", "overshoot_percent", "settling_time", "omega_c", "phi_m")])
        over = [row.overshoot_percent for row in rows]
        metrics["plant"] = {
            "loop": _margins(p * c),
            "robustness": [row.__dict__ for row in rows],
            "overshoot_spread": max(over) - min(over),
        }
    if data_path is not None:
        data = read_data_csv(data_path, cfg.t_s)
        _, m_ref = _reference_model(cfg, data.N)
        loss = FritLoss(cfg.controller, data, m_ref)
        J = loss(spec.theta)
        entry = {"J": J}
        try:
            t = loss.restore(spec.theta)
        except (IsoFritError, FloatingPointError, ValueError):
            t = None
        if t is not None:
            k = np.arange(t.size)
            y_hat = toeplitz_mul(data.r.samples, t)
            write_csv(os.path.join(out_dir, "restored_impulse.csv"), ("k", "t", "impulse"),
                      [k, k * data.t_s, t])
            write_csv(os.path.join(out_dir, "estimated_step.csv"), ("k", "t", "y_hat", "y_ref"),
                      [k, k * data.t_s, y_hat, loss.y_ref])
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    wc, pm = estimated_loop_margins(t, data.t_s)
                entry.update(omega_c=wc, phi_m=pm)
            except NoCrossing:
                entry.update(omega_c=None, phi_m=None)
        metrics["data"] = entry
    if "plant" not in metrics and "data" not in metrics:
        raise ConfigError("evaluate needs a plant in the config or --data")
    _dump_json(metrics, os.path.join(out_dir, "metrics.json"))
    return metrics


def cmd_reference(cfg: TuneConfig, out_dir):
    """Reference-model impulse/step series, pole radii and flatness of the BITF loop."""
    n = cfg.samples()
    mdl, m = _reference_model(cfg, n)
    k = np.arange(n + 1)
    step = np.cumsum(m.samples)
    write_csv(os.path.join(out_dir, "reference.csv"), ("k", "t", "impulse", "step"),
              [k, k * cfg.t_s, m.samples, step])
    radii = np.abs(mdl.poles)
    summary = {
        "gamma": cfg.reference.gamma,
        "pole_radii": sorted(radii.tolist(), reverse=True),
        "max_pole_radius": float(radii.max()) if radii.size else 0.0,
        "loop": _margins(reference_open_loop(cfg.reference)),
        "step": _step_summary(step, 1.0, cfg.t_s),
    }
    _dump_json(summary, os.path.join(out_dir, "reference.json"))
    return summary


# -- argument handling -------------------------------------------------------
def _parse_theta(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"--theta: cannot parse {text!r}") from None


def _resolve_config(args) -> TuneConfig:
    if args.config and args.preset:
        raise ConfigError("use either --config or --preset, not both")
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = preset(args.preset)
    else:
        raise ConfigError("one of --config or --preset is required")
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _out_dir(args, cfg):
    out = args.out or cfg.out_dir or "."
    os.makedirs(out, exist_ok=True)
    return out


def _theta_for_evaluate(args, cfg):
    picks = [x for x in (args.theta, args.baseline, args.report) if x is not None]
    if len(picks) > 1:
        raise ConfigError("use only one of --theta, --baseline, --report")
    if args.theta is not None:
        return _parse_theta(args.theta)
    if args.baseline is not None:
        if args.baseline not in cfg.baselines:
            raise ConfigError(f"unknown baseline {args.baseline!r}; have {sorted(cfg.baselines)}")
        return cfg.baselines[args.baseline]
    if args.report is not None:
        with open(args.report, encoding="utf-8") as fh:
            return tuple(json.load(fh)["body"]["result"]["theta_star"])
    return cfg.controller.theta


def build_parser():
    ap = argparse.ArgumentParser(prog="isoidfrit",
                                 description="Data-driven tuning of fractional-order controllers.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, data=False):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--preset", help="built-in configuration name")
        p.add_argument("--out", help="output directory (default: config paths.out or .)")
        if data:
            p.add_argument("--data", help="data CSV with columns k,t,r,u,y")

    p = sub.add_parser("collect", help="simulate the initial closed-loop experiment")
    common(p)
    p.add_argument("--theta", help="comma-separated controller parameters (default theta0)")

    p = sub.add_parser("tune", help="tune the controller from logged data")
    common(p, data=True)
    p.add_argument("--seed", type=int, help="override the PSO seed")
    p.add_argument("--threads", type=int, default=1, help="particle evaluation threads")

    p = sub.add_parser("evaluate", help="emit plot data and metrics for one parameter vector")
    common(p, data=True)
    p.add_argument("--theta", help="comma-separated controller parameters")
    p.add_argument("--baseline", help="named parameter vector from the config")
    p.add_argument("--report", help="take theta_star from a tune report")

    p = sub.add_parser("reference", help="emit the reference model and its pole report")
    common(p)

    p = sub.add_parser("preset", help="list or show built-in presets")
    psub = p.add_subparsers(dest="preset_command", required=True)
    psub.add_parser("list", help="list preset names")
    show = psub.add_parser("show", help="print a preset as a config file")
    show.add_argument("name")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "preset":
            if args.preset_command == "list":
                for name in sorted(PRESETS):
                    print(f"{name}\t{PRESETS[name].get('description', '')}")
            else:
                cfg = preset(args.name)
                print(json.dumps(cfg.raw, indent=2, sort_keys=True))
            return EXIT_OK
        cfg = _resolve_config(args)
        out = _out_dir(args, cfg)
        if args.command == "collect":
            theta = _parse_theta(args.theta) if args.theta else None
            print(cmd_collect(cfg, out, theta))
            return EXIT_OK
        if args.command == "tune":
            data = args.data or cfg.data_path
            if data is None:
                raise ConfigError("tune needs --data or config paths.data")
            if args.threads < 1:
                raise ConfigError("--threads must be at least 1")
            report, code = cmd_tune(cfg, data, out, args.threads)
            res = report["body"]["result"]
            print(f"theta*={res['theta_star']} J*={res['J_star']:.6g} verdict={res['verdict']}")
            return code
        if args.command == "evaluate":
            metrics = cmd_evaluate(cfg, _theta_for_evaluate(args, cfg), out, args.data)
            print(json.dumps(_clean(metrics), indent=2, sort_keys=True))
            return EXIT_OK
        if args.command == "reference":
            summary = cmd_reference(cfg, out)
            print(f"gamma={summary['gamma']:.6g} max|pole|={summary['max_pole_radius']:.9f}")
            return EXIT_OK
    except ReferenceModelUnstable as exc:
        poles = ", ".join(f"{complex(p):.6g}" for p in exc.poles)
        print(f"error: {exc}; poles: {poles}", file=sys.stderr)
        return EXIT_ERROR
    except (IsoFritError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
