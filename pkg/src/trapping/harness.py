"""Experiment configuration, presets, artifact directories and the rate fit.

Configs are flat INI files: an ``[experiment]`` section naming the kind and
seed, a ``[family]`` section for the increment law where relevant, and one
section named after the kind.  Lists are comma separated and rationals such
as ``1/6`` are accepted wherever a real is expected::

    [experiment]
    kind = walk1d
    master_seed = 31
    n_runs = 2000

    [family]
    id = binary
    kappa = 0.5

    [walk1d]
    x = 1/4, 1/6, 1/8, 1/10

Every data file written for a given config is a pure function of it.  The
manifest carries the wall time and is the only file that changes between
reruns.
"""
from __future__ import annotations

import configparser
import json
import math
import os
import platform
import re
import time
import traceback
import warnings
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from . import meanfield as mf
from .errors import ConfigurationError, DomainError
from .increments import make_family
from .network import init_state, run_until_trap, write_log_csv, write_report_json
from .rate import RateProfile, build_profile, save_profile
from .seeding import check_seed, replica_rng
from .walk import (
    UrnState,
    Walk1DConfig,
    exact_exit_oracle,
    importance_exit,
    lattice_chain,
    mc_exit,
    naive_excursions,
    urn_step,
    write_runs_csv,
    write_summary_json,
)

__all__ = [
    "KINDS",
    "PRESETS",
    "OUT_DIR_ENV",
    "ConfigError",
    "ExperimentConfig",
    "RateFitReport",
    "RunResult",
    "load_config",
    "parse_config",
    "render_config",
    "resolve",
    "preset",
    "fit_rate",
    "run_experiment",
]

KINDS = ("rate", "walk1d", "urn", "network", "meanfield", "certificate")
OUT_DIR_ENV = "TRAPPING_OUT_DIR"
FAILED_MARKER = "FAILED"


class ConfigError(ConfigurationError):
    """Invalid configuration value, pointing at the offending line when known."""

    def __init__(self, message, *, source=None, line=None):
        self.source = source
        self.line = line
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


@dataclass
class ExperimentConfig:
    """Raw string-valued sections plus where each key came from."""

    kind: str
    sections: dict
    master_seed: int | None = None
    n_runs: int | None = None
    out_dir: str | None = None
    source: str | None = None
    lines: dict = field(default_factory=dict)

    def get(self, section, key, default=None):
        return self.sections.get(section, {}).get(key.lower(), default)

    def line_of(self, section, key=None):
        key = key.lower() if key else None
        return self.lines.get((section, key)) or self.lines.get((section, None))

    def fail(self, message, section=None, key=None):
        raise ConfigError(message, source=self.source, line=self.line_of(section, key) if section else None)


# ------------------------------------------------------------- parsing


_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]\s*$")
_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _line_map(text):
    lines, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(raw)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, None), no)
            continue
        m = _KEY_RE.match(raw)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip().lower()), no)
    return lines


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"malformed config: {exc.message if hasattr(exc, 'message') else exc}", source=source, line=line) from None
    lines = _line_map(text)
    sections = {s: dict(parser[s]) for s in parser.sections()}
    cfg = ExperimentConfig(kind="", sections=sections, source=source, lines=lines)
    if "experiment" not in sections:
        raise ConfigError("missing [experiment] section", source=source, line=1)
    exp = sections["experiment"]
    kind = exp.get("kind")
    if kind is None:
        cfg.fail("[experiment] needs a 'kind'", "experiment")
    if kind not in KINDS:
        cfg.fail(f"unknown experiment kind {kind!r}; choose one of {', '.join(KINDS)}", "experiment", "kind")
    cfg.kind = kind
    if "master_seed" in exp:
        cfg.master_seed = _as_int(cfg, "experiment", "master_seed")
    if "n_runs" in exp:
        cfg.n_runs = _as_int(cfg, "experiment", "n_runs")
    cfg.out_dir = exp.get("out")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=str(path)) from None
    return parse_config(text, source=str(path))


def render_config(cfg: ExperimentConfig) -> str:
    """INI text that parses back to ``cfg`` (used by ``--dry-run`` and the manifest)."""
    out = []
    exp = dict(cfg.sections.get("experiment", {}))
    exp["kind"] = cfg.kind
    if cfg.master_seed is not None:
        exp["master_seed"] = str(cfg.master_seed)
    if cfg.n_runs is not None:
        exp["n_runs"] = str(cfg.n_runs)
    if cfg.out_dir is not None:
        exp["out"] = str(cfg.out_dir)
    ordered = {"experiment": exp}
    ordered.update({k: v for k, v in cfg.sections.items() if k != "experiment"})
    for name, body in ordered.items():
        out.append(f"[{name}]")
        out.extend(f"{k} = {v}" for k, v in body.items())
        out.append("")
    return "\n".join(out)


# ---------------------------------------------------------- typed access


def _raw(cfg, section, key, default):
    val = cfg.get(section, key)
    if val is None:
        if default is _REQUIRED:
            cfg.fail(f"[{section}] is missing required key {key!r}", section)
        return None
    return val


_REQUIRED = object()


def _as_real(cfg, section, key, default=_REQUIRED):
    val = _raw(cfg, section, key, default)
    if val is None:
        return default
    try:
        return float(Fraction(val.strip()))
    except (ValueError, ZeroDivisionError):
        cfg.fail(f"[{section}] {key} = {val!r} is not a real number", section, key)


def _as_int(cfg, section, key, default=_REQUIRED):
    val = _raw(cfg, section, key, default)
    if val is None:
        return default
    try:
        return int(val.strip())
    except ValueError:
        cfg.fail(f"[{section}] {key} = {val!r} is not an integer", section, key)


def _as_bool(cfg, section, key, default=_REQUIRED):
    val = _raw(cfg, section, key, default)
    if val is None:
        return default
    low = val.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    cfg.fail(f"[{section}] {key} = {val!r} is not a boolean", section, key)


def _as_reals(cfg, section, key, default=_REQUIRED):
    val = _raw(cfg, section, key, default)
    if val is None:
        return default
    try:
        return [float(Fraction(p.strip())) for p in val.split(",") if p.strip()]
    except (ValueError, ZeroDivisionError):
        cfg.fail(f"[{section}] {key} = {val!r} is not a comma-separated list of reals", section, key)


def _as_str(cfg, section, key, default=_REQUIRED, choices=None):
    val = _raw(cfg, section, key, default)
    if val is None:
        return default
    val = val.strip()
    if choices and val not in choices:
        cfg.fail(f"[{section}] {key} = {val!r}; expected one of {', '.join(choices)}", section, key)
    return val


def _check(cfg, ok, message, section, key):
    if not ok:
        cfg.fail(message, section, key)


def _family(cfg):
    if "family" not in cfg.sections:
        cfg.fail("missing [family] section", "experiment")
    body = dict(cfg.sections["family"])
    fid = body.pop("id", None)
    if fid is None:
        cfg.fail("[family] needs an 'id'", "family")
    params = {}
    for k in body:
        params[k] = _as_real(cfg, "family", k)
    try:
        return make_family(fid, **params)
    except ConfigurationError as exc:
        cfg.fail(str(exc), "family", "id")


def resolve(cfg: ExperimentConfig, *, need_seed: bool = True) -> dict:
    """Typed, validated parameters for ``cfg.kind``; raises :class:`ConfigError`."""
    k = cfg.kind
    p = {"kind": k, "master_seed": cfg.master_seed, "n_runs": cfg.n_runs}
    if need_seed:
        if cfg.master_seed is None:
            cfg.fail("master_seed is required (set it in [experiment] or pass --seed)", "experiment")
        try:
            check_seed(cfg.master_seed)
        except ValueError as exc:
            cfg.fail(str(exc), "experiment", "master_seed")
    if cfg.n_runs is not None and cfg.n_runs < 1:
        cfg.fail("n_runs must be >= 1", "experiment", "n_runs")
    s = k
    if k == "rate":
        p["family"] = _family(cfg)
        p["grid_size"] = _as_int(cfg, s, "grid_size", 512)
        p["tol"] = _as_real(cfg, s, "tol", 1e-10)
        _check(cfg, p["grid_size"] >= 16, "grid_size must be >= 16", s, "grid_size")
        _check(cfg, p["tol"] > 0, "tol must be positive", s, "tol")
    elif k == "walk1d":
        p["family"] = _family(cfg)
        p["x"] = _as_reals(cfg, s, "x")
        for x in p["x"]:
            _check(cfg, 0 < x < 1, f"x = {x} outside (0, 1)", s, "x")
        p["a_x"] = _as_real(cfg, s, "a_x", None)
        p["w0"] = _as_real(cfg, s, "w0", 0.5)
        p["max_steps"] = _as_int(cfg, s, "max_steps", None)
        p["oracle"] = _as_bool(cfg, s, "oracle", False)
        p["delta"] = _as_real(cfg, s, "delta", None)
        p["importance_x"] = _as_reals(cfg, s, "importance_x", [])
        p["naive_runs"] = _as_int(cfg, s, "naive_runs", 10_000)
        p["tilted_runs"] = _as_int(cfg, s, "tilted_runs", 1000)
        p["workers"] = _as_int(cfg, s, "workers", 1)
        p["n_runs"] = p["n_runs"] or 1000
        for x in p["x"] + p["importance_x"]:
            try:
                Walk1DConfig.create(p["family"], x, p["a_x"], p["w0"], p["max_steps"] if p["max_steps"] is not None else 0)
            except ConfigurationError as exc:
                cfg.fail(str(exc), s, "x")
        if p["importance_x"] and p["delta"] is None:
            cfg.fail("importance_x needs delta", s, "importance_x")
    elif k == "urn":
        p["x"] = _as_real(cfg, s, "x")
        p["red"] = _as_real(cfg, s, "red", 1.0)
        p["black"] = _as_real(cfg, s, "black", 1.0)
        p["steps"] = _as_int(cfg, s, "steps", 100_000)
        p["stride"] = _as_int(cfg, s, "stride", 100)
        _check(cfg, 0 < p["x"] < 1, "x must lie in (0, 1)", s, "x")
        _check(cfg, p["red"] >= 0 and p["black"] >= 0 and p["red"] + p["black"] > 0, "need red, black >= 0 with positive sum", s, "red")
        _check(cfg, p["stride"] >= 1, "stride must be >= 1", s, "stride")
    elif k == "network":
        p["N"] = _as_int(cfg, s, "N")
        p["x"] = _as_reals(cfg, s, "x")
        p["max_steps"] = _as_int(cfg, s, "max_steps", 5000)
        p["threshold"] = _as_real(cfg, s, "threshold", 1e-4)
        p["persistence"] = _as_int(cfg, s, "persistence", 200)
        p["rule"] = _as_str(cfg, s, "rule", "triad", ("triad", "pairwise"))
        p["mode"] = _as_str(cfg, s, "mode", "unit", ("unit", "stationary"))
        p["decay_after_add"] = _as_bool(cfg, s, "decay_after_add", False)
        p["log_stride"] = _as_int(cfg, s, "log_stride", 0)
        p["n_runs"] = p["n_runs"] or 100
        _check(cfg, p["N"] >= 4, "N must be >= 4", s, "N")
        for x in p["x"]:
            _check(cfg, 0 < x < 1, f"x = {x} outside (0, 1)", s, "x")
        _check(cfg, 0 < p["threshold"] < 1, "threshold must lie in (0, 1)", s, "threshold")
        _check(cfg, p["persistence"] >= 1, "persistence must be >= 1", s, "persistence")
        _check(cfg, p["max_steps"] >= 0, "max_steps must be >= 0", s, "max_steps")
    elif k == "meanfield":
        p["n_min"] = _as_int(cfg, s, "n_min", 4)
        p["n_max"] = _as_int(cfg, s, "n_max", 40)
        p["N"] = _as_int(cfg, s, "N", 6)
        p["eps"] = _as_real(cfg, s, "eps", 0.01)
        p["rule"] = _as_str(cfg, s, "rule", "pairwise", ("triad", "pairwise"))
        _check(cfg, 4 <= p["n_min"] <= p["n_max"], "need 4 <= n_min <= n_max", s, "n_min")
        _check(cfg, 4 <= p["N"] <= mf.EXACT_DRIFT_MAX_N, f"N must lie in 4..{mf.EXACT_DRIFT_MAX_N}", s, "N")
    elif k == "certificate":
        p["n"] = _as_int(cfg, s, "n")
        p["x"] = _as_real(cfg, s, "x")
        p["radius"] = _as_real(cfg, s, "radius")
        p["grid_resolution"] = _as_int(cfg, s, "grid_resolution", 500)
        p["rule"] = _as_str(cfg, s, "rule", "pairwise", ("triad", "pairwise"))
        _check(cfg, 4 <= p["n"] + 1 <= mf.CERTIFICATE_MAX_N, f"n + 1 must lie in 4..{mf.CERTIFICATE_MAX_N}", s, "n")
        _check(cfg, 0 < p["x"] <= 0.1, "x must lie in (0, 0.1]", s, "x")
        _check(cfg, p["radius"] > 0, "radius must be positive", s, "radius")
        _check(cfg, p["grid_resolution"] >= 6, "grid_resolution must be >= 6", s, "grid_resolution")
    return p


# ------------------------------------------------------------- presets


_PRESET_TEXT = {
    "exit-trend": """
[experiment]
kind = walk1d
master_seed = 31
n_runs = 2000

[family]
id = binary
kappa = 0.5

[walk1d]
x = 1/4, 1/6, 1/8, 1/10
""",
    "threes-company-N6": """
[experiment]
kind = network
master_seed = 2003
n_runs = 100

[network]
N = 6
x = 0.4, 0.2
max_steps = 5000
threshold = 1e-4
persistence = 200
rule = triad
mode = unit
""",
    "spectrum-scan": """
[experiment]
kind = meanfield
master_seed = 40

[meanfield]
n_min = 4
n_max = 40
N = 6
eps = 0.01
rule = pairwise
""",
    "certificate-N6": """
[experiment]
kind = certificate
master_seed = 41

[certificate]
n = 5
x = 0.05
radius = 0.02
grid_resolution = 500
rule = pairwise
""",
}

PRESETS = tuple(_PRESET_TEXT)


def preset(name: str) -> ExperimentConfig:
    """Fully specified config for a canned scenario."""
    try:
        text = _PRESET_TEXT[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None
    return parse_config(text.lstrip(), source=f"preset:{name}")


# -------------------------------------------------------------- rate fit


@dataclass(frozen=True)
class RateFitReport:
    """Weighted least squares of ``log(mean_T)`` on ``1/x``."""

    points: list
    slope: float
    intercept: float
    slope_se: float
    reference_C: float
    weighting: str
    excluded: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def fit_rate(summaries, profile: RateProfile | None) -> RateFitReport:
    """Fit ``log(mean_T) = intercept + slope / x`` across exit-time summaries.

    Weights are ``1 / rse**2`` (the delta-method variance of ``log mean_T``);
    when any retained cell has a zero or non-finite ``rse`` all weights are
    equal.  Cells with censored runs are dropped with a warning.  The report
    makes no judgment about ``slope`` versus ``reference_C``.
    """
    summaries = list(summaries)
    full = [s for s in summaries if s.censored == s.n_runs]
    if full:
        raise DomainError(f"fully censored summaries at x = {[s.x for s in full]}")
    kept = [s for s in summaries if s.censored == 0]
    excluded = [s.x for s in summaries if s.censored]
    if excluded:
        warnings.warn(f"excluding censored cells at x = {excluded}", RuntimeWarning, stacklevel=2)
    kept.sort(key=lambda s: -s.x)
    if len({s.x for s in kept}) < 3:
        raise DomainError("fit_rate needs at least 3 distinct x values")
    xs = np.array([s.x for s in kept])
    y = np.log([s.mean_T for s in kept])
    rse = np.array([s.rse for s in kept])
    X = np.column_stack([np.ones_like(xs), 1 / xs])
    known = bool(np.all(np.isfinite(rse)) and np.all(rse > 0))
    w = 1 / rse**2 if known else np.ones_like(xs)
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    beta = cov @ (XtW @ y)
    if not known:
        resid = y - X @ beta
        dof = max(len(y) - 2, 1)
        cov = cov * float(resid @ resid) / dof
    return RateFitReport(
        points=[(float(s.x), float(s.mean_T), float(s.se_T)) for s in kept],
        slope=float(beta[1]),
        intercept=float(beta[0]),
        slope_se=float(math.sqrt(max(cov[1, 1], 0.0))),
        reference_C=float(profile.C) if profile is not None else math.nan,
        weighting="inverse-rse2" if known else "equal",
        excluded=excluded,
    )


# ------------------------------------------------------------ execution


@dataclass(frozen=True)
class RunResult:
    status: int
    out_dir: Path
    files: tuple
    summary: dict


def _dump(path, payload):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path.name


def _tag(i, x):
    return f"x{i}"  # index, not value: file names stay stable under float formatting


def _run_rate(p, out):
    prof = build_profile(p["family"], p["grid_size"], p["tol"])
    save_profile(prof, out, "profile")
    return ["profile.csv", "profile.json"], {"C": prof.C, "family_id": prof.family_id, "clipped_w0": prof.clipped_w0}


def _run_walk1d(p, out):
    seed, fam = p["master_seed"], p["family"]
    files, cells = [], []
    summaries = []
    for i, x in enumerate(p["x"]):
        cfg = Walk1DConfig.create(fam, x, p["a_x"], p["w0"], p["max_steps"])
        summary, runs = mc_exit(cfg, p["n_runs"], replica_seed(seed, i), workers=p["workers"], return_runs=True)
        files.append(write_runs_csv(out / f"runs_{_tag(i, x)}.csv", runs).name)
        files.append(write_summary_json(out / f"summary_{_tag(i, x)}.json", summary).name)
        cell = {"x": x, "mean_T": summary.mean_T, "se_T": summary.se_T, "censored": summary.censored}
        if p["oracle"]:
            chain = lattice_chain(cfg)
            cell["oracle"] = float(exact_exit_oracle(chain)[chain.start])
        cells.append(cell)
        summaries.append(summary)
    result = {"cells": cells}
    if len({s.x for s in summaries}) >= 3:
        profile = build_profile(fam)
        try:
            fit = fit_rate(summaries, profile)
        except DomainError as exc:
            result["fit_error"] = str(exc)
        else:
            files.append(_dump(out / "fit.json", fit.to_dict()))
            result["fit"] = {"slope": fit.slope, "slope_se": fit.slope_se, "reference_C": fit.reference_C}
    if p["importance_x"]:
        profile = build_profile(fam)
        imp = []
        for j, x in enumerate(p["importance_x"]):
            cfg = Walk1DConfig.create(fam, x, p["a_x"], p["w0"], p["max_steps"])
            key = 1000 + j
            naive, nr = naive_excursions(cfg, p["naive_runs"], replica_seed(seed, key), p["workers"], return_runs=True)
            tilt, tr = importance_exit(
                cfg, profile, p["delta"], p["tilted_runs"], replica_seed(seed, key + 500), p["workers"], return_runs=True
            )
            files.append(write_runs_csv(out / f"excursions_naive_i{j}.csv", nr).name)
            files.append(write_runs_csv(out / f"excursions_tilted_i{j}.csv", tr).name)
            files.append(write_summary_json(out / f"excursions_naive_i{j}.json", naive).name)
            files.append(write_summary_json(out / f"excursions_tilted_i{j}.json", tilt).name)
            imp.append(
                {
                    "x": x,
                    "naive": [naive.p_exit, naive.se, naive.work_normalized_rse],
                    "tilted": [tilt.p_exit, tilt.se, tilt.work_normalized_rse, tilt.ess],
                }
            )
        result["importance"] = imp
    return files, result


def replica_seed(master_seed: int, key: int) -> int:
    """Deterministic 64-bit seed for sub-experiment ``key`` of a master seed."""
    return int(replica_rng(master_seed, key, 0xC0FFEE).integers(0, 2**63))


def _run_urn(p, out):
    rng = replica_rng(p["master_seed"], 0)
    st = UrnState(p["red"], p["black"], 0)
    rows = [(0, st.red, st.black, st.w)]
    totals, ws = [], []
    for _ in range(p["steps"]):
        st = urn_step(st, p["x"], rng)
        totals.append(st.total)
        ws.append(st.w)
        if st.t % p["stride"] == 0:
            rows.append((st.t, st.red, st.black, st.w))
    path = out / "urn.csv"
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("t,red,black,w\n")
        for t, r, b, w in rows:
            fh.write(f"{t},{r!r},{b!r},{w!r}\n")
    half = len(totals) // 2
    summary = {
        "x": p["x"],
        "steps": p["steps"],
        "final_w": st.w,
        "mean_total_second_half": float(np.mean(totals[half:])) if totals else None,
        "mean_w_second_half": float(np.mean(ws[half:])) if ws else None,
    }
    return ["urn.csv", _dump(out / "urn.json", summary)], summary


def _run_network(p, out):
    seed = p["master_seed"]
    files, cells = [], []
    for i, x in enumerate(p["x"]):
        rows = []
        counts = {}
        for r in range(p["n_runs"]):
            st = init_state(p["N"], x, p["mode"], p["rule"], p["decay_after_add"])
            run = run_until_trap(
                st, p["max_steps"], p["threshold"], p["persistence"], replica_rng(seed, i, r), log_stride=p["log_stride"]
            )
            rep = run.report
            sizes = "+".join(str(s) for s in sorted(rep.block_sizes))
            rows.append((r, int(rep.trapped), sizes, "" if rep.detected_at is None else rep.detected_at, run.steps_taken, repr(rep.cross_weight_fraction)))
            label = ("trapped " if rep.trapped else "open ") + sizes
            counts[label] = counts.get(label, 0) + 1
            if r == 0 and p["log_stride"] > 0:
                files.append(write_log_csv(out / f"log_{_tag(i, x)}_run0.csv", run.log).name)
                files.append(
                    write_report_json(out / f"report_{_tag(i, x)}_run0.json", rep, seed=seed, parameters={"N": p["N"], "x": x, "run": r}).name
                )
        path = out / f"runs_{_tag(i, x)}.csv"
        with path.open("w", encoding="utf-8", newline="") as fh:
            fh.write("run_id,trapped,block_sizes,detected_at,steps_taken,cross_weight_fraction\n")
            for row in rows:
                fh.write(",".join(str(v) for v in row) + "\n")
        files.append(path.name)
        trapped33 = sum(1 for row in rows if row[1] and row[2] == "3+3")
        cells.append(
            {
                "x": x,
                "n_runs": p["n_runs"],
                "trapped": sum(row[1] for row in rows),
                "trapped_3_3": trapped33,
                "outcomes": dict(sorted(counts.items())),
            }
        )
    summary = {"N": p["N"], "rule": p["rule"], "mode": p["mode"], "cells": cells}
    files.append(_dump(out / "network.json", summary))
    return files, summary


def _run_meanfield(p, out):
    rows = mf.spectrum_scan(range(p["n_min"], p["n_max"] + 1))
    for n in range(p["n_min"], p["n_max"] + 1):
        mf.spectrum(n)  # raises if closed form and eigensolve disagree
    files = [mf.write_spectrum_csv(out / "spectrum.csv", rows).name]
    N = p["N"]
    lin = mf.spectrum(N - 1).to_dict()
    checks = [mf.linearization_excess(N, e, p["rule"]).to_dict() for e in (p["eps"], p["eps"] / 2)]
    d = mf.drift(init_state(N, 0.05, "stationary", p["rule"]))
    payload = {"linearization": lin, "excess": checks, "drift_at_c": d.to_dict()}
    files.append(_dump(out / "meanfield.json", payload))
    return files, {"attracting_all": all(r[3] for r in rows), "n_range": [p["n_min"], p["n_max"]]}


def _run_certificate(p, out):
    cert = mf.lyapunov_certificate(p["n"], p["x"], p["radius"], p["grid_resolution"], p["rule"], p["master_seed"])
    d = cert.to_dict()
    return [_dump(out / "certificate.json", d)], {"verified": cert.verified, "lambda": cert.lam, "gamma": cert.gamma}


_RUNNERS = {
    "rate": _run_rate,
    "walk1d": _run_walk1d,
    "urn": _run_urn,
    "network": _run_network,
    "meanfield": _run_meanfield,
    "certificate": _run_certificate,
}


def output_dir(cfg: ExperimentConfig, override=None) -> tuple:
    """Resolve the output directory: explicit override, then the environment, then the config."""
    env = os.environ.get(OUT_DIR_ENV)
    if override is not None:
        return Path(override), env
    if env:
        return Path(env), env
    if cfg.out_dir:
        return Path(cfg.out_dir), env
    cfg.fail("no output directory: pass --out, set TRAPPING_OUT_DIR, or add 'out' to [experiment]", "experiment")


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> RunResult:
    """Run ``cfg`` and write its artifact directory.

    A ``FAILED`` marker is written first and removed only after every data
    file and the manifest are in place.
    """
    params = resolve(cfg)
    out, env = output_dir(cfg, out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        marker = out / FAILED_MARKER
        marker.write_text("incomplete run\n", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc.strerror}", source=cfg.source) from None
    t0 = time.perf_counter()
    try:
        files, summary = _RUNNERS[cfg.kind](params, out)
    except Exception:
        marker.write_text(traceback.format_exc(), encoding="utf-8")
        raise
    manifest = {
        "tool": "trapping",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "kind": cfg.kind,
        "config": render_config(cfg),
        "master_seed": cfg.master_seed,
        "out_dir": str(out),
        "out_dir_env": env,
        "files": sorted(files),
        "summary": summary,
        "wall_time_s": round(time.perf_counter() - t0, 3),
    }
    _dump(out / "manifest.json", manifest)
    marker.unlink()
    return RunResult(0, out, tuple(sorted(files)), summary)
