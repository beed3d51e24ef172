"""Command-line experiment runner.

Every experiment reads a flat ``key = value`` configuration (file and/or
``--set`` overrides), validates it, runs the estimator and writes a CSV
plus a JSON manifest holding the resolved configuration, seed, tool
version and wall time. ``ddfsim rerun MANIFEST`` repeats a run from its
manifest and checks the CSV digest.

Precedence is dedicated flags > ``--set`` > config file > defaults.
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
from pathlib import Path

from . import __version__
from . import metrics
from .engine import (
    OUTAGE_FAMILY,
    ConfigError,
    ConstantThreshold,
    CriterionKind,
    DecisionCriterion,
    FrameConfig,
)

__all__ = ["main", "resolve_settings", "build_config", "run_experiment", "parse_config_text"]

EXPERIMENTS = ("outage", "fer", "t1dist", "slope", "awgn-ref")
CURVE_HEADER = ("snr_db", "estimate", "ci_halfwidth", "trials", "errors")
T1_HEADER = ("snr_db", "block", "count", "probability")


def _int(v):
    f = float(v)
    if not f.is_integer():
        raise ValueError(f"expected an integer, got {v!r}")
    return int(f)


def _opt(conv):
    def parse(v):
        return None if str(v).strip().lower() in ("", "none", "default") else conv(v)
    return parse


def _snr_list(v):
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    text = str(v).strip().strip("[]")
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


# key -> (parser, default)
FRAME_KEYS = {
    "n_relays": (_int, 1),
    "frame_length": (_int, 6),
    "block_length": (_int, 1),
    "order": (_int, 4),
    "rate": (_opt(float), None),
    "scheme": (str, "rotation"),
    "criterion": (_opt(str), None),
    "target_pe": (float, 1e-2),
    "forney_threshold": (_opt(float), None),
    "activity_model": (str, "genie"),
    "rotation_set_size": (_int, 4),
    "assignment_rule": (str, "product"),
    "spreading_phase": (_opt(float), None),
}
RUN_KEYS = {
    "seed": (_int, 1),
    "trials": (_int, 10_000),
    "target_errors": (_opt(_int), None),
    "snr_start": (float, 0.0),
    "snr_stop": (float, 30.0),
    "snr_step": (float, 5.0),
    "snr": (_opt(_snr_list), None),
    "observed_slots": (_opt(_int), None),
    "measure": (str, "fer"),
}
ALIASES = {"N": "n_relays", "T": "frame_length", "Tb": "block_length", "T_b": "block_length",
           "M": "order", "R": "rate", "L": "rotation_set_size"}


def parse_config_text(text: str, origin: str = "config") -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{n}: expected 'key = value', got {raw.strip()!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _canonical(raw: dict) -> dict:
    out = {}
    for k, v in raw.items():
        key = ALIASES.get(k, k)
        if key not in FRAME_KEYS and key not in RUN_KEYS:
            raise ConfigError(f"unknown configuration key {k!r}")
        out[key] = v
    return out


def resolve_settings(experiment: str, layers) -> dict:
    """Merge raw layers (lowest precedence first) into typed settings."""
    merged = {}
    for layer in layers:
        merged.update(_canonical(layer))
    table = {**FRAME_KEYS, **RUN_KEYS}
    settings = {}
    for key, (conv, default) in table.items():
        if key in merged:
            try:
                settings[key] = conv(merged[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid value for {key}: {exc}") from None
        else:
            settings[key] = default
    if settings["criterion"] is None:
        settings["criterion"] = "outage" if experiment in ("outage", "t1dist") else "genie"
    if settings["snr"] is None:
        settings["snr"] = _sweep(settings["snr_start"], settings["snr_stop"], settings["snr_step"])
    if not settings["snr"]:
        raise ConfigError("the SNR sweep is empty")
    if settings["trials"] <= 0:
        raise ConfigError(f"trials must be positive, got {settings['trials']}")
    if settings["target_errors"] is not None and settings["target_errors"] <= 0:
        raise ConfigError("target_errors must be positive")
    if settings["measure"] not in ("fer", "outage"):
        raise ConfigError(f"measure must be 'fer' or 'outage', got {settings['measure']!r}")
    for k in ("snr_start", "snr_stop", "snr_step"):
        settings.pop(k)
    return settings


def _sweep(start, stop, step):
    if step <= 0:
        raise ConfigError(f"snr_step must be positive, got {step}")
    if stop < start:
        raise ConfigError("snr_stop must not be below snr_start")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + k * step, 10) for k in range(n)]


def build_config(settings: dict, experiment: str) -> FrameConfig:
    """FrameConfig for the settings; raises :class:`ConfigError` on any invariant."""
    try:
        kind = CriterionKind(settings["criterion"])
    except ValueError:
        names = ", ".join(k.value for k in CriterionKind)
        raise ConfigError(f"criterion must be one of {names}, got {settings['criterion']!r}") from None
    thr = settings["forney_threshold"]
    crit = DecisionCriterion(kind, target_pe=settings["target_pe"],
                             forney_threshold=None if thr is None else ConstantThreshold(thr))
    try:
        cfg = FrameConfig(
            n_relays=settings["n_relays"],
            frame_length=settings["frame_length"],
            block_length=settings["block_length"],
            order=settings["order"],
            rate=settings["rate"],
            snr_db=settings["snr"][0],
            scheme=settings["scheme"],
            criterion=crit,
            activity_model=settings["activity_model"],
            rotation_set_size=settings["rotation_set_size"],
            assignment_rule=settings["assignment_rule"],
            spreading_phase=settings["spreading_phase"],
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    needs_outage = experiment in ("outage", "t1dist") or (experiment == "slope" and settings["measure"] == "outage")
    if needs_outage and kind not in OUTAGE_FAMILY:
        raise ConfigError(f"{experiment} runs in outage mode and needs an outage-family criterion, got {kind.value}")
    if experiment == "t1dist" and cfg.n_relays < 1:
        raise ConfigError("t1dist needs n_relays >= 1")
    return cfg


def _fmt(x) -> str:
    return repr(float(x))


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _curve_rows(points):
    return [(_fmt(p.snr_db), _fmt(p.estimate), _fmt(p.ci_halfwidth), p.trials, p.errors_observed)
            for p in points]


def run_experiment(experiment: str, settings: dict, workers: int | None = None) -> dict:
    """Run one experiment. Returns ``{"csv": text, "extra": dict, "plot": callable}``."""
    cfg = build_config(settings, experiment)
    snr = settings["snr"]
    seed, trials = settings["seed"], settings["trials"]
    extra = {}
    if experiment == "outage" or (experiment == "slope" and settings["measure"] == "outage"):
        points = [metrics.outage_probability(cfg.with_(snr_db=s), trials, seed, workers, kind=cfg.criterion.kind)
                  for s in snr]
    elif experiment in ("fer", "slope"):
        points = metrics.fer_curve(cfg, snr, trials, settings["target_errors"], seed, workers)
    elif experiment == "t1dist":
        rows = []
        for s in snr:
            hist = metrics.t1_distribution(cfg.with_(snr_db=s), trials, seed, workers)
            for b, (count, p) in hist.items():
                rows.append((_fmt(s), b, count, _fmt(p)))
        return {"csv": _csv_text(T1_HEADER, rows), "extra": extra,
                "plot": lambda path: _plot_t1(rows, path)}
    elif experiment == "awgn-ref":
        curve = metrics.awgn_reference_curve(cfg.constellation, cfg.spreading, settings["observed_slots"],
                                             snr, trials, seed)
        pts = [metrics.CurvePoint.from_counts(s, round(f * n), n) for s, f, n in curve]
        return {"csv": metrics.reference_csv_text(curve), "extra": extra,
                "plot": lambda path: _plot_points(pts, path, "AWGN reference")}
    else:
        raise ConfigError(f"unknown experiment {experiment!r}")
    if experiment == "slope":
        try:
            est = metrics.diversity_slope(points[0], points[-1])
            extra["slope"] = est.slope
            extra["snr_window"] = list(est.snr_window)
        except (metrics.InsufficientErrors, ValueError) as exc:
            extra["slope"] = None
            extra["slope_error"] = str(exc)
    label = cfg.criterion.kind.value
    return {"csv": _csv_text(CURVE_HEADER, _curve_rows(points)), "extra": extra,
            "plot": lambda path: _plot_points(points, path, label)}


def _plot_points(points, path, label):
    from .plotting import plot_curve
    return plot_curve(points, path, label=label)


def _plot_t1(rows, path):
    from .plotting import plot_histogram
    return plot_histogram([(float(r[0]), r[1], r[2], float(r[3])) for r in rows], path)


def _companions(out: Path):
    return out.with_suffix(".manifest.json"), out.with_suffix(".png")


def _check_writable(out: Path):
    parent = out.parent if str(out.parent) else Path(".")
    if not parent.is_dir() or not os.access(parent, os.W_OK):
        raise OSError(f"cannot write output {out}: directory {parent} is missing or not writable")
    if out.exists() and not os.access(out, os.W_OK):
        raise OSError(f"cannot write output {out}: file is not writable")


def _execute(experiment: str, settings: dict, out: Path, plot: bool) -> tuple[int, str]:
    _check_writable(out)
    workers = metrics.worker_count()
    t0 = time.perf_counter()
    result = run_experiment(experiment, settings, workers)
    wall = time.perf_counter() - t0
    text = result["csv"]
    digest = hashlib.sha256(text.encode()).hexdigest()
    manifest_path, png_path = _companions(out)
    manifest = {
        "tool": "ddfsim",
        "version": __version__,
        "experiment": experiment,
        "config": settings,
        "seed": settings["seed"],
        "output": out.name,
        "sha256": digest,
        "workers": workers,
        "wall_time_s": round(wall, 3),
        **result["extra"],
    }
    with open(out, "w", newline="") as fh:
        fh.write(text)
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if plot:
        result["plot"](png_path)
    status = 0
    if experiment == "slope":
        if result["extra"].get("slope") is None:
            print(f"slope unavailable: {result['extra'].get('slope_error')}", file=sys.stderr)
            status = 1
        else:
            print(f"diversity slope {result['extra']['slope']:.3f} over {result['extra']['snr_window']}")
    return status, digest


def _add_run_flags(p):
    p.add_argument("--config", type=Path, help="flat key = value configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")
    p.add_argument("--seed", type=str)
    p.add_argument("--trials", type=str, help="trials per SNR point (maximum for fer)")
    p.add_argument("--target-errors", type=str, help="stop a fer point after this many frame errors")
    p.add_argument("--snr-start", type=str)
    p.add_argument("--snr-stop", type=str)
    p.add_argument("--snr-step", type=str)
    p.add_argument("--out", type=Path, help="CSV path; the manifest and plot go next to it")
    p.add_argument("--plot", action="store_true", help="also render a PNG next to the CSV")


def _parser():
    ap = argparse.ArgumentParser(prog="ddfsim", description="Dynamic decode-and-forward relay simulator.")
    ap.add_argument("--version", action="version", version=f"ddfsim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        _add_run_flags(sub.add_parser(name, help=f"run the {name} experiment"))
    rr = sub.add_parser("rerun", help="repeat a run from its manifest and compare the CSV digest")
    rr.add_argument("manifest", type=Path)
    rr.add_argument("--out", type=Path)
    rr.add_argument("--plot", action="store_true")
    return ap


def _layers(args) -> list[dict]:
    layers = []
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        layers.append(parse_config_text(text, str(args.config)))
    sets = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        sets[k.strip()] = v.strip()
    layers.append(sets)
    flags = {k: getattr(args, k) for k in ("seed", "trials", "target_errors", "snr_start", "snr_stop", "snr_step")
             if getattr(args, k) is not None}
    if any(k in flags for k in ("snr_start", "snr_stop", "snr_step")):
        flags["snr"] = None  # a flag-level sweep replaces an explicit list from lower layers
    layers.append(flags)
    return layers


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "rerun":
            manifest = json.loads(args.manifest.read_text())
            experiment = manifest["experiment"]
            settings = resolve_settings(experiment, [manifest["config"]])
            out = args.out or args.manifest.parent / manifest["output"]
            status, digest = _execute(experiment, settings, out, args.plot)
            if digest != manifest["sha256"]:
                print(f"rerun of {args.manifest} differs from the recorded output", file=sys.stderr)
                return 1
            print(f"reproduced {out} ({digest[:12]})")
            return status
        layers = _layers(args)
        settings = resolve_settings(args.command, layers)
        build_config(settings, args.command)
        out = args.out or Path(f"{args.command}.csv")
        status, _ = _execute(args.command, settings, out, args.plot)
        return status
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
