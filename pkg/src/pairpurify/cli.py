"""Configuration-driven experiment runner.

Configs are YAML documents; the grammar (sections, keys, defaults) is the
``SCHEMA`` table below and is documented in the README. Usage::

    pairpurify run pair.yaml [--verify] [--seed N] [--out-dir D] [--nmax N] [--format csv|json]
    pairpurify sweep sweep.yaml
    pairpurify verify pair.yaml
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import itertools
import json
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import reference
from .channels import (ChannelSample, FluctuationProcess, compensate, f_factors, fiber_scenario,
                       purifiability)
from .detection import DetectorKind, DetectorModel
from .protocol import DETECTOR_NAMES, RunConfig, dark_count_budget, run
from .sources import PairSpec, PdcSpec

__all__ = ["ConfigError", "ExperimentConfig", "SCHEMA", "parse_config", "render_config",
           "expand_sweep", "run_configs", "execute_point", "execute", "main", "OUT_DIR_ENV"]

OUT_DIR_ENV = "PAIRPURIFY_OUT_DIR"
EXPERIMENTS = ("pair", "pdc", "channel", "fiber", "dark_budget", "sweep")
VERIFY_TOL = 1e-10
EXIT_VERIFY = 1
EXIT_CONFIG = 2


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-6`` (no dot) as a float, as YAML 1.2 does."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"))


def load_yaml(text: str):
    return yaml.load(text, Loader=_Loader)


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# -- schema -------------------------------------------------------------------
# Each key maps to (default, check). A check returns an error string or None.

def _num(lo=-math.inf, hi=math.inf, lo_open=False, hi_open=False, integer=False):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or (integer and not isinstance(v, int)):
            return f"expected {'an integer' if integer else 'a number'}, got {v!r}"
        if not math.isfinite(v) and not integer:
            return f"must be finite, got {v!r}"
        if (v <= lo if lo_open else v < lo) or (v >= hi if hi_open else v > hi):
            lb = "(" if lo_open else "["
            rb = ")" if hi_open else "]"
            return f"value {v!r} outside {lb}{lo}, {hi}{rb}"
        return None
    return check


def _choice(*options):
    def check(v):
        return None if v in options else f"value {v!r} not one of {list(options)}"
    return check


def _opt(check):
    return lambda v: None if v is None else check(v)


def _bool(v):
    return None if isinstance(v, bool) else f"expected true/false, got {v!r}"


def _mu_map(v):
    if not isinstance(v, dict):
        return f"expected a mapping of mode -> [re, im], got {v!r}"
    try:
        ChannelSample.from_mapping({k: complex(*x) if isinstance(x, list) else complex(x) for k, x in v.items()})
    except (ValueError, TypeError, KeyError) as e:
        return str(e)
    return None


def _mode_list(v):
    if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
        return f"expected a list of mode labels, got {v!r}"
    return None


_DETECTOR = {
    "kind": ("single_photon", _choice("single_photon", "conventional")),
    "eta": (1.0, _num(0, 1)),
    "nu": (0.0, _num(0)),
}

SCHEMA: dict[str, dict[str, tuple[Any, Callable]]] = {
    "source": {
        "alpha_sq": (0.5, _num(0, 1)),
        "phase": (0.0, _num()),
        "gamma": (0.1, _num(0, 1, hi_open=True)),
        "pump_phase": (0.0, _num()),
    },
    "detector": dict(_DETECTOR),
    # models for D5'V / D4'V; null means "same as detector"
    "veto_detector": {k: (None, _opt(c)) for k, (_, c) in _DETECTOR.items()},
    "protocol": {
        "combination": ("HH", _choice("HH", "VV", "HV", "VH")),
        "veto": (True, _bool),
        "postselect": (False, _bool),
        "phase_average": (True, _bool),
    },
    "channel": {
        "process": ("common_mode", _choice("constant", "common_mode", "phase_noise", "uniform")),
        "mu": ({}, _mu_map),
        "depth": (0.5, _num(0, 1)),
        "noise_modes": (["1H"], _mode_list),
        "n_samples": (10_000, _num(1, integer=True)),
        "compensate": (False, _bool),
    },
    "fiber": {
        "case": (None, _opt(_choice("a", "b", "c", "d"))),
        "tau_plus": (1.0, _num(0, lo_open=True)),
        "tau_minus": (1.0, _num(0, lo_open=True)),
        "dt": (1.0, _num(0)),
        "process": ("idealized", _choice("idealized", "ou")),
        "swap": ("auto", _choice("auto", "none", "1V-3H", "1V-3V")),
        "sigma": (math.pi, _num(0)),
        "steps": (8, _num(1, integer=True)),
        "n_samples": (10_000, _num(1, integer=True)),
    },
    "dark_budget": {
        "gamma_sq": (1e-4, _num(0, 1, lo_open=True, hi_open=True)),
        "nu": (1e-6, _num(0)),
        "threshold": (100.0, _num(0, lo_open=True)),
    },
    "output": {
        "name": ("run", lambda v: None if isinstance(v, str) and v and "/" not in v else f"bad file stem {v!r}"),
        "format": ("csv", _choice("csv", "json")),
    },
}

TOP_LEVEL = {
    "experiment": (None, _choice(*EXPERIMENTS)),
    "seed": (0, _num(0, integer=True)),
    "n_max": (4, _num(2, integer=True)),
    "tolerance": (VERIFY_TOL, _num(0, lo_open=True)),
}
SWEEP_KEYS = {"of", "axes", "workers"}
AXIS_KEYS = {"param", "start", "stop", "steps", "values"}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    n_max: int = 4
    tolerance: float = VERIFY_TOL
    sections: dict = field(default_factory=dict)
    sweep: dict | None = None

    def get(self, dotted: str):
        sec, key = dotted.split(".")
        return self.sections[sec][key]

    def with_values(self, values: dict[str, Any]) -> "ExperimentConfig":
        secs = copy.deepcopy(self.sections)
        top = {}
        for k, v in values.items():
            if "." in k:
                sec, key = k.split(".")
                secs[sec][key] = v
            else:
                top[k] = v
        return replace(self, sections=secs, **top)

    def to_dict(self) -> dict:
        d = {"experiment": self.experiment, "seed": self.seed, "n_max": self.n_max,
             "tolerance": self.tolerance}
        d.update(copy.deepcopy(self.sections))
        if self.sweep is not None:
            d["sweep"] = copy.deepcopy(self.sweep)
        return d


def _validate_sections(raw: dict, errors: list[str]) -> dict:
    sections = {}
    for sec, keys in SCHEMA.items():
        given = raw.get(sec) or {}
        if not isinstance(given, dict):
            errors.append(f"{sec}: expected a mapping")
            given = {}
        for k in sorted(set(given) - set(keys)):
            errors.append(f"{sec}.{k}: unknown key")
        vals = {}
        for k, (default, check) in keys.items():
            v = given.get(k, copy.deepcopy(default))
            if isinstance(v, int) and not isinstance(v, bool) and isinstance(default, float):
                v = float(v)
            msg = check(v)
            if msg:
                errors.append(f"{sec}.{k}: {msg}")
            vals[k] = v
        sections[sec] = vals
    return sections


def _axis_values(ax: dict) -> list:
    if "values" in ax:
        return list(ax["values"])
    return [float(x) for x in np.linspace(ax["start"], ax["stop"], ax["steps"])]


def _validate_sweep(sw, experiment: str, errors: list[str]) -> dict | None:
    if experiment != "sweep":
        if sw is not None:
            errors.append("sweep: only allowed with experiment: sweep")
        return None
    if not isinstance(sw, dict):
        errors.append("sweep: experiment 'sweep' needs a sweep mapping with 'of' and 'axes'")
        return None
    for k in sorted(set(sw) - SWEEP_KEYS):
        errors.append(f"sweep.{k}: unknown key")
    of = sw.get("of")
    if of not in EXPERIMENTS[:-1]:
        errors.append(f"sweep.of: value {of!r} not one of {list(EXPERIMENTS[:-1])}")
    workers = sw.get("workers", 1)
    if _num(1, integer=True)(workers):
        errors.append(f"sweep.workers: {_num(1, integer=True)(workers)}")
    axes = sw.get("axes")
    if not isinstance(axes, list) or not axes:
        errors.append("sweep.axes: expected a non-empty list")
        axes = []
    clean = []
    for i, ax in enumerate(axes):
        where = f"sweep.axes[{i}]"
        if not isinstance(ax, dict):
            errors.append(f"{where}: expected a mapping")
            continue
        for k in sorted(set(ax) - AXIS_KEYS):
            errors.append(f"{where}.{k}: unknown key")
        p = ax.get("param", "")
        if p in TOP_LEVEL and p != "experiment":
            pass
        elif not (isinstance(p, str) and p.count(".") == 1 and p.split(".")[0] in SCHEMA
                  and p.split(".")[1] in SCHEMA[p.split(".")[0]]):
            errors.append(f"{where}.param: {p!r} is not a known parameter")
        if "values" in ax:
            if not isinstance(ax["values"], list) or not ax["values"]:
                errors.append(f"{where}.values: expected a non-empty list")
        elif not all(k in ax for k in ("start", "stop", "steps")):
            errors.append(f"{where}: give either 'values' or 'start', 'stop', 'steps'")
        elif _num(1, integer=True)(ax["steps"]) or _num()(ax["start"]) or _num()(ax["stop"]):
            errors.append(f"{where}: start/stop must be numbers and steps a positive integer")
        clean.append(dict(ax))
    return {"of": of, "axes": clean, "workers": workers}


def parse_config(text: str | dict) -> ExperimentConfig:
    """Parse and validate a YAML config; raises ConfigError listing every violation."""
    raw = load_yaml(text) if isinstance(text, str) else copy.deepcopy(text)
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a mapping"])
    errors: list[str] = []
    known = set(TOP_LEVEL) | set(SCHEMA) | {"sweep"}
    for k in sorted(set(raw) - known, key=str):
        errors.append(f"{k}: unknown key")
    top = {}
    for k, (default, check) in TOP_LEVEL.items():
        v = raw.get(k, default)
        if k == "experiment" and v is None:
            errors.append("experiment: required")
            continue
        msg = check(v)
        if msg:
            errors.append(f"{k}: {msg}")
        top[k] = v
    sections = _validate_sections(raw, errors)
    sweep = _validate_sweep(raw.get("sweep"), top.get("experiment"), errors)
    if errors:
        raise ConfigError(errors)
    cfg = ExperimentConfig(top["experiment"], top["seed"], top["n_max"], float(top["tolerance"]),
                           sections, sweep)
    if sweep is not None:
        # every sweep point must itself be a valid config
        for _, pt in expand_sweep(cfg):
            try:
                parse_config(pt.to_dict())
            except ConfigError as e:
                errors.extend(f"sweep point: {m}" for m in e.errors)
                break
    if errors:
        raise ConfigError(errors)
    return cfg


def render_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def expand_sweep(cfg: ExperimentConfig) -> list[tuple[dict, ExperimentConfig]]:
    """Cartesian product of the sweep axes, in row-major order (last axis fastest)."""
    if cfg.sweep is None:
        return [({}, cfg)]
    axes = cfg.sweep["axes"]
    names = [a["param"] for a in axes]
    out = []
    for combo in itertools.product(*(_axis_values(a) for a in axes)):
        values = dict(zip(names, combo))
        out.append((values, replace(cfg.with_values(values), experiment=cfg.sweep["of"], sweep=None)))
    return out


# -- building library objects ----------------------------------------------------

def _detector(sec: dict) -> DetectorModel:
    return DetectorModel(DetectorKind(sec["kind"]), sec["eta"], sec["nu"])


def _detectors(cfg: ExperimentConfig) -> dict[str, DetectorModel]:
    d = cfg.sections["detector"]
    main = _detector(d)
    veto = _detector({k: d[k] if v is None else v for k, v in cfg.sections["veto_detector"].items()})
    return {n: veto if n in ("5'V", "4'V") else main for n in DETECTOR_NAMES}


def _source(cfg: ExperimentConfig):
    s = cfg.sections["source"]
    if cfg.experiment == "pdc":
        return PdcSpec.from_pair(s["gamma"], s["alpha_sq"], s["phase"], s["pump_phase"])
    return PairSpec.from_weight(s["alpha_sq"], s["phase"])


def _run_config(cfg: ExperimentConfig) -> RunConfig:
    p = cfg.sections["protocol"]
    return RunConfig(_source(cfg), _detectors(cfg), tuple(p["combination"]), p["veto"], p["postselect"],
                     cfg.n_max, p["phase_average"])


def run_configs(cfg: ExperimentConfig) -> list[RunConfig]:
    """RunConfigs derived from a pair/pdc config or a sweep over one."""
    out = []
    for _, pt in expand_sweep(cfg):
        if pt.experiment not in ("pair", "pdc"):
            raise ValueError(f"experiment {pt.experiment!r} has no protocol RunConfig")
        out.append(_run_config(pt))
    return out


def _process(cfg: ExperimentConfig) -> FluctuationProcess:
    c = cfg.sections["channel"]
    base = ChannelSample.from_mapping({k: complex(*v) if isinstance(v, list) else complex(v)
                                       for k, v in c["mu"].items()})
    if c["process"] == "constant":
        return FluctuationProcess.constant(base)
    if c["process"] == "common_mode":
        return FluctuationProcess.common_mode(base, c["depth"])
    if c["process"] == "phase_noise":
        return FluctuationProcess.phase_noise(base, c["noise_modes"])
    return FluctuationProcess.uniform()


# -- execution -------------------------------------------------------------------

def _verify_protocol(cfg: ExperimentConfig, rec: dict) -> dict:
    """Reference columns and absolute differences; empty when no closed form applies."""
    p, d = cfg.sections["protocol"], cfg.sections["detector"]
    same_veto = all(v is None or v == d[k] for k, v in cfg.sections["veto_detector"].items())
    if p["postselect"] or d["nu"] != 0 or not same_veto:
        return {"verify_applicable": False}
    src = _source(cfg)
    if cfg.experiment == "pair":
        fn = reference.ideal_conventional if d["kind"] == "conventional" else reference.ideal_single
        if not p["veto"]:
            return {"verify_applicable": False}
        r = fn(src.alpha, src.beta, d["eta"])
        ref = {"P": r.P, "P_s": r.P_s, "P_e": r.P_e}
    else:
        if not p["phase_average"]:
            return {"verify_applicable": False}
        fn = reference.pdc_conventional if d["kind"] == "conventional" else reference.pdc_single_photon
        r = fn(src.alpha, src.beta, d["eta"], src.gamma, src.g)
        ref = {"P": r.P, "P_s": r.P_s, "P_e0": r.P_e0 if p["veto"] else r.P_e0_no_veto, "P_e1": r.P_e1}
    out: dict[str, Any] = {"verify_applicable": True}
    worst = 0.0
    for k, v in ref.items():
        out[f"ref_{k}"] = v
        diff = abs(rec[k] - v)
        out[f"diff_{k}"] = diff
        worst = max(worst, diff)
    out["verify_ok"] = worst <= cfg.tolerance
    return out


def _point_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def execute_point(cfg: ExperimentConfig, index: int = 0, verify: bool = False) -> dict:
    """Run one non-sweep experiment and return a flat record."""
    kind = cfg.experiment
    if kind in ("pair", "pdc"):
        src = _source(cfg)
        stats = run(_run_config(cfg))
        rec = {"alpha_sq": abs(src.alpha) ** 2, "gamma": getattr(src, "gamma", None)}
        rec.update(stats.to_record())
        if verify:
            rec.update(_verify_protocol(cfg, rec))
        return rec
    seed = _point_seed(cfg.seed, index)
    if kind == "channel":
        c = cfg.sections["channel"]
        proc = _process(cfg)
        rec = {"process": c["process"]}
        if c["compensate"]:
            if not proc.deterministic:
                raise ValueError("compensation needs a constant channel (process: constant)")
            comp = compensate(ChannelSample(proc.sample(1, np.random.default_rng(seed))[0]))
            proc = proc.compensated(comp)
            rec["compensation_mode"] = str(comp.mode)
            rec["compensation_factor"] = [comp.factor.real, comp.factor.imag]
        if proc.deterministic:
            F, FA, FB = f_factors(proc.sample(1, np.random.default_rng(seed))[0])
            rec.update({name: None if v is None else [v.real, v.imag]
                        for name, v in (("F", F), ("F_A", FA), ("F_B", FB))})
        rec.update(purifiability(proc, c["n_samples"], seed).to_json())
        return rec
    if kind == "fiber":
        f = cfg.sections["fiber"]
        rep = fiber_scenario(f["case"], f["tau_plus"], f["tau_minus"], f["dt"], f["n_samples"],
                             f["swap"], f["process"], f["sigma"], f["steps"], seed)
        return rep.to_json()
    if kind == "dark_budget":
        b, d = cfg.sections["dark_budget"], cfg.sections["detector"]
        bud = dark_count_budget(b["gamma_sq"], b["nu"], d["eta"], d["kind"],
                                cfg.sections["source"]["alpha_sq"], b["threshold"], cfg.n_max)
        return bud.to_json()
    raise ValueError(f"cannot execute experiment {kind!r} directly")


def _flatten(rec: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in rec.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, (list, tuple)):
            for i, x in enumerate(v):
                out[f"{key}.{i}"] = x
        else:
            out[key] = v
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def to_csv(rows: list[dict]) -> str:
    """Columns in first-seen order across rows; floats with 17 significant digits."""
    flat = [_flatten(r) for r in rows]
    cols: list[str] = []
    for r in flat:
        cols.extend(k for k in r if k not in cols)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in flat:
        w.writerow([_fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not serializable: {type(o).__name__}")


def to_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


_TABLE = ("alpha_sq", "gamma", "P_total", "P_s", "P_e", "fidelity", "purifiable", "post_fidelity",
          "negligible", "verify_ok")


def _table(rows: list[dict], lead: tuple[str, ...] = ()) -> str:
    flat = [_flatten(r) for r in rows]
    cols = list(lead) + [c for c in _TABLE if c not in lead and any(c in r for r in flat)]
    if not cols:
        cols = list(flat[0])[:6]
    lines = ["  ".join(f"{c:>14}" for c in cols)]
    for r in flat:
        cells = []
        for c in cols:
            v = r.get(c)
            cells.append(f"{v:>14.6g}" if isinstance(v, float) else f"{_fmt(v):>14}")
        lines.append("  ".join(cells))
    return "\n".join(lines)


def _worker(args):
    cfg, index, verify = args
    return execute_point(cfg, index, verify)


def execute(cfg: ExperimentConfig, out_dir: str | Path, verify: bool = False,
            fmt: str | None = None, stream=None) -> tuple[int, list[dict]]:
    """Run a config, write artifacts, print a table; returns (exit status, rows)."""
    stream = stream or sys.stdout
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fmt = fmt or cfg.sections["output"]["format"]
    name = cfg.sections["output"]["name"]
    points = expand_sweep(cfg)
    jobs = [(pt, i, verify) for i, (_, pt) in enumerate(points)]
    workers = cfg.sweep["workers"] if cfg.sweep else 1
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_worker, jobs))     # map keeps sweep order
    else:
        results = [_worker(j) for j in jobs]
    rows = []
    for i, ((values, _), rec) in enumerate(zip(points, results)):
        rows.append({"index": i, **values, **rec} if cfg.sweep else rec)
    if cfg.sweep is None:
        (out / f"{name}.json").write_text(to_json({"config": cfg.to_dict(), "result": rows[0]}))
        if fmt == "csv":
            (out / f"{name}.csv").write_text(to_csv(rows))
    elif fmt == "csv":
        (out / f"{name}.csv").write_text(to_csv(rows))
    else:
        (out / f"{name}.json").write_text(to_json({"config": cfg.to_dict(), "rows": rows}))
    lead = tuple(a["param"] for a in cfg.sweep["axes"]) if cfg.sweep else ()
    print(_table(rows, lead), file=stream)
    status = 0
    if verify:
        bad = [r.get("index", 0) for r in rows if r.get("verify_applicable") and not r.get("verify_ok")]
        skipped = [r.get("index", 0) for r in rows if r.get("verify_applicable") is False]
        if skipped:
            print(f"verify: no closed form for {len(skipped)} point(s); skipped", file=stream)
        if bad:
            print(f"verify: FAILED at {len(bad)} point(s): {bad}", file=stream)
            status = EXIT_VERIFY
        else:
            print("verify: ok", file=stream)
    return status, rows


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pairpurify", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for cmd, help_ in (("run", "run one experiment"), ("sweep", "run a parameter sweep"),
                       ("verify", "run and compare against the closed forms")):
        p = sub.add_parser(cmd, help=help_)
        p.add_argument("config", help="YAML config file ('-' for stdin)")
        p.add_argument("--verify", action="store_true", help="compare with reference formulas; exit 1 on mismatch")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out-dir", default=os.environ.get(OUT_DIR_ENV, "pairpurify-out"),
                       help=f"output directory (default ${OUT_DIR_ENV} or ./pairpurify-out)")
        p.add_argument("--nmax", type=int, help="override the photon-number truncation")
        p.add_argument("--format", choices=("csv", "json"), help="output format")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    text = sys.stdin.read() if args.config == "-" else Path(args.config).read_text()
    try:
        raw = load_yaml(text)
        if isinstance(raw, dict):
            if args.seed is not None:
                raw["seed"] = args.seed
            if args.nmax is not None:
                raw["n_max"] = args.nmax
        cfg = parse_config(raw if isinstance(raw, dict) else text)
    except (ConfigError, yaml.YAMLError) as e:
        errs = e.errors if isinstance(e, ConfigError) else [str(e)]
        for m in errs:
            print(f"config error: {m}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "sweep" and cfg.sweep is None:
        print("config error: 'sweep' needs experiment: sweep", file=sys.stderr)
        return EXIT_CONFIG
    status, _ = execute(cfg, args.out_dir, verify=args.verify or args.command == "verify", fmt=args.format)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
