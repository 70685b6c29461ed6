"""Batch front end: declarative JSON configs, one subcommand per suite.

Every run writes a results table (CSV or JSON) plus a manifest recording the
fully resolved configuration, seed, discretization, code version and wall
time.  Rerunning from a manifest (``--config manifest.json``) reproduces the
results files byte for byte; the worker count must never change any number.

Exit codes: 0 success, 1 failed validation check, 2 config schema violation,
3 numerical failure.
"""

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, suites
from .batch import EngineError
from .decay import fit_decay, martingale_scan, rate_bounds, export_profile
from .engine import (Discretization, ExperimentSpec, GaussianMeasure,
                     apply_semigroup, box_g, diamagnetic_check, gaussian_g,
                     ground_state_energy, matrix_element)
from .fields import (FieldConfig, constant_b, gaussian_bump_b, gradient_gauge,
                     harmonic_v, linear_gauge, soft_coulomb_v, well_v,
                     zero_scalar, zero_vector)
from .lattice import (Lattice, OracleError, export_spectrum, export_state,
                      ground_state, hamiltonian)

EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

OUT_ENV = "RELSEMI_OUT"
EXPERIMENTS = ("validate", "estimate", "oracle", "decay", "martingale",
               "diamagnetic")


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# schema

_VECTOR_FAMILIES = {
    "zero": ((), zero_vector),
    "constant_b": (("b",), lambda p: constant_b(p["b"])),
    "linear_gauge": (("b",), lambda p: linear_gauge(p["b"])),
    "gaussian_bump_b": (("amplitude", "width", "cutoff", "axis"),
                        lambda p: gaussian_bump_b(
                            p.get("amplitude", 1.0), p.get("width", 1.0),
                            p.get("cutoff", 2.5), p.get("axis", 0))),
    "gradient_gauge": (("scale",),
                       lambda p: gradient_gauge(p.get("scale", 1.0))),
}

_SCALAR_FAMILIES = {
    "zero": ((), lambda p: zero_scalar()),
    "harmonic": (("omega",), lambda p: harmonic_v(p.get("omega", 1.0))),
    "well": (("depth", "radius"),
             lambda p: well_v(p.get("depth", 2.0), p.get("radius", 1.0))),
    "soft_coulomb": (("gamma", "delta"),
                     lambda p: soft_coulomb_v(p.get("gamma", 1.0),
                                              p.get("delta", 0.5))),
}

_TOP_KEYS = {
    "experiment", "seed", "samples", "threads", "out", "format",
    "t", "t1", "t2", "m", "mode", "epsilon", "discretization", "fields",
    "g", "f", "x", "alpha", "lattice", "t_list", "relativistic",
    "window", "radius", "variant", "export_spectrum", "export_state",
}

_REQUIRED = {
    "validate": (),
    "estimate": ("t", "g"),
    "oracle": ("lattice", "m"),
    "decay": ("lattice", "m", "window"),
    "martingale": ("lattice", "m", "t_list", "x", "t"),
    "diamagnetic": ("t", "m", "f", "g"),
}


def _require_keys(cfg, keys, where):
    for key in keys:
        if key not in cfg:
            raise ConfigError(f"missing required key '{key}' in {where}")


def _reject_unknown(d, allowed, where):
    for key in d:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' in {where}")


def _parse_vector_field(d, where):
    _require_keys(d, ("family",), where)
    fam = d["family"]
    if fam not in _VECTOR_FAMILIES:
        raise ConfigError(f"unknown vector family '{fam}' in {where}")
    allowed, build = _VECTOR_FAMILIES[fam]
    _reject_unknown(d, set(allowed) | {"family"}, where)
    return build(d)


def _parse_scalar_field(d, where):
    _require_keys(d, ("family",), where)
    fam = d["family"]
    if fam not in _SCALAR_FAMILIES:
        raise ConfigError(f"unknown potential family '{fam}' in {where}")
    allowed, build = _SCALAR_FAMILIES[fam]
    _reject_unknown(d, set(allowed) | {"family"}, where)
    return build(d)


def parse_fields(cfg):
    d = cfg.get("fields", {})
    _reject_unknown(d, {"a", "b", "V"}, "fields")
    a = _parse_vector_field(d["a"], "fields.a") if "a" in d else zero_vector()
    b = _parse_vector_field(d["b"], "fields.b") if "b" in d else zero_vector()
    V = _parse_scalar_field(d["V"], "fields.V") if "V" in d else zero_scalar()
    return FieldConfig(a=a, b=b, V=V)


def _parse_testfunc(d, where):
    _reject_unknown(d, {"kind", "center", "sigma", "halfwidth",
                        "spin_weights"}, where)
    kind = d.get("kind", "gaussian")
    sw = tuple(d.get("spin_weights", (1.0, 1.0)))
    if kind == "gaussian":
        return gaussian_g(tuple(d.get("center", (0.0, 0.0, 0.0))),
                          float(d.get("sigma", 1.0)), sw)
    if kind == "box":
        return box_g(tuple(d.get("center", (0.0, 0.0, 0.0))),
                     float(d.get("halfwidth", 1.0)), sw)
    raise ConfigError(f"unknown test-function kind '{kind}' in {where}")


def _parse_measure(d, where):
    _reject_unknown(d, {"kind", "center", "sigma", "spin_weights"}, where)
    if d.get("kind", "gaussian") != "gaussian":
        raise ConfigError(f"unknown measure kind in {where}")
    return GaussianMeasure(center=tuple(d.get("center", (0.0, 0.0, 0.0))),
                           sigma=float(d.get("sigma", 1.0)),
                           spin_weights=tuple(d.get("spin_weights",
                                                    (1.0, 1.0))))


def _parse_lattice(d):
    _reject_unknown(d, {"n", "L", "spin"}, "lattice")
    _require_keys(d, ("n", "L"), "lattice")
    return Lattice(n=int(d["n"]), L=float(d["L"])), bool(d.get("spin", True))


def parse_spec(cfg):
    d = cfg.get("discretization", {})
    _reject_unknown(d, {"n_subordinator_steps", "bm_max_step"},
                    "discretization")
    disc = Discretization(
        n_subordinator_steps=int(d.get("n_subordinator_steps", 32)),
        bm_max_step=(None if d.get("bm_max_step") is None
                     else float(d.get("bm_max_step", 0.05))))
    return ExperimentSpec(
        t=float(cfg.get("t", 1.0)),
        fields=parse_fields(cfg),
        m=float(cfg.get("m", 1.0)),
        mode=str(cfg.get("mode", "spin")),
        epsilon=float(cfg.get("epsilon", 0.0)),
        n_samples=int(cfg.get("samples", 100_000)),
        seed=int(cfg.get("seed", 0)),
        discretization=disc,
        workers=int(cfg.get("threads", 1)),
    )


def validate_config(cfg):
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(cfg, _TOP_KEYS, "config")
    _require_keys(cfg, ("experiment",), "config")
    exp = cfg["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment '{exp}'")
    _require_keys(cfg, _REQUIRED[exp], f"experiment '{exp}'")
    if cfg.get("format", "csv") not in ("csv", "json"):
        raise ConfigError("format must be 'csv' or 'json'")
    return cfg


# ---------------------------------------------------------------------------
# output

def _fmt(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return f"{x:.17g}"
    if isinstance(x, complex):
        return f"{x.real:.17g}{x.imag:+.17g}j"
    return str(x)


def write_rows(rows, path, fmt):
    if fmt == "json":
        with open(path, "w") as fh:
            json.dump(rows, fh, indent=1, sort_keys=True, default=_fmt)
            fh.write("\n")
        return
    import csv as _csv
    cols = list(rows[0].keys()) if rows else []
    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in cols])


def write_manifest(path, cfg, outputs, wall, ok):
    manifest = {
        "manifest": True,
        "code_version": __version__,
        "config": cfg,
        "seed": cfg.get("seed", 0),
        "discretization": cfg.get("discretization", {}),
        "outputs": sorted(outputs),
        "wall_time_s": wall,
        "all_checks_passed": ok,
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# suites

def _estimate_row(est, **extra):
    row = {"mean_re": float(est.mean.real), "mean_im": float(est.mean.imag),
           "stderr": est.stderr, "n": est.n,
           "invalid_count": est.invalid_count,
           "zero_hit_fraction": est.zero_hit_fraction, "note": est.note}
    row.update(extra)
    return row


def run_validate(cfg, outdir, fmt):
    checks = suites.validate_battery(n=int(cfg.get("samples", 100_000)),
                                     seed=int(cfg.get("seed", 0)))
    rows = [c.row() for c in checks]
    path = os.path.join(outdir, f"results.{fmt}")
    write_rows(rows, path, fmt)
    ok = all(c.passed for c in checks)
    failed = [c.name for c in checks if not c.passed]
    return [path], ok, (f"failed checks: {', '.join(failed)}" if failed else
                        f"all {len(checks)} checks passed")


def run_estimate(cfg, outdir, fmt):
    spec = parse_spec(cfg)
    g = _parse_testfunc(cfg["g"], "g")
    if "f" in cfg:
        f = _parse_measure(cfg["f"], "f")
        est = matrix_element(f, g, spec)
        row = _estimate_row(est, kind="matrix_element")
    else:
        x = np.asarray(cfg.get("x", (0.0, 0.0, 0.0)), dtype=float)
        alpha = int(cfg.get("alpha", 0))
        est = apply_semigroup(x, alpha, g, spec)
        row = _estimate_row(est, kind="apply_semigroup")
    path = os.path.join(outdir, f"results.{fmt}")
    write_rows([row], path, fmt)
    return [path], True, f"mean = {est.mean:.6g} +- {est.stderr:.2g}"


def run_oracle(cfg, outdir, fmt):
    lat, spin = _parse_lattice(cfg["lattice"])
    fields = parse_fields(cfg)
    m = float(cfg["m"])
    rel = bool(cfg.get("relativistic", True))
    op = hamiltonian(fields, lat, m=m, spin=spin, relativistic=rel)
    gs = ground_state(op)
    row = {"E": gs.E, "residual": gs.residual, "sup_phi": gs.sup_norm(),
           "dim": op.dim, "n": lat.n, "L": lat.L, "spin": spin,
           "relativistic": rel}
    outputs = []
    path = os.path.join(outdir, f"results.{fmt}")
    write_rows([row], path, fmt)
    outputs.append(path)
    if cfg.get("export_spectrum", False):
        p = os.path.join(outdir, "spectrum.csv")
        export_spectrum(op, p)
        outputs.append(p)
    if cfg.get("export_state", False):
        p = os.path.join(outdir, "state.csv")
        export_state(gs, p)
        outputs.append(p)
    return outputs, True, f"E0 = {gs.E:.8g}"


def run_decay(cfg, outdir, fmt):
    lat, spin = _parse_lattice(cfg["lattice"])
    fields = parse_fields(cfg)
    m = float(cfg["m"])
    op = hamiltonian(fields, lat, m=m, spin=spin,
                     relativistic=bool(cfg.get("relativistic", True)))
    gs = ground_state(op)
    window = tuple(float(w) for w in cfg["window"])
    fit = fit_decay(gs, window)
    row = {"E": gs.E, "a_hat": fit.a_hat, "b_hat": fit.b_hat,
           "r_squared": fit.r_squared, "n_shells": fit.n_shells,
           "window_lo": fit.window[0], "window_hi": fit.window[1]}
    if gs.E < 0:
        from .fields import SpinCoupling
        m_star = SpinCoupling(fields.b).m_star() if not fields.b.is_zero else 0.0
        rb = rate_bounds(gs.E, m, m_star)
        row.update({"m_epsilon": rb.m_epsilon,
                    "condition_small_coupling":
                        "" if rb.condition_n34 is None else rb.condition_n34})
    path = os.path.join(outdir, f"results.{fmt}")
    write_rows([row], path, fmt)
    prof = os.path.join(outdir, "profile.csv")
    export_profile(gs, prof)
    return [path, prof], True, f"a_hat = {fit.a_hat:.4g} (r^2 = {fit.r_squared:.4f})"


def run_martingale(cfg, outdir, fmt):
    lat, spin = _parse_lattice(cfg["lattice"])
    spec = parse_spec(cfg)
    if spin != (spec.mode == "spin"):
        raise ConfigError("lattice.spin must match mode")
    op = hamiltonian(spec.fields, lat, m=spec.m, spin=spin,
                     relativistic=bool(cfg.get("relativistic", True)))
    gs = ground_state(op)
    x = np.asarray(cfg["x"], dtype=float)
    alpha = int(cfg.get("alpha", 0))
    t_list = [float(t) for t in cfg["t_list"]]
    scan = martingale_scan(spec, gs, x, alpha, t_list,
                           relativistic=bool(cfg.get("relativistic", True)))
    rows = []
    for t, est in zip(scan.t_list, scan.estimates):
        rows.append(_estimate_row(est, t=t, reference_re=scan.reference.real,
                                  reference_im=scan.reference.imag))
    path = os.path.join(outdir, f"results.{fmt}")
    write_rows(rows, path, fmt)
    means = [e.mean for e in scan.estimates if e.n > 0]
    spread = max(abs(a - b) for a in means for b in means) if len(means) > 1 else 0.0
    return [path], True, f"max pairwise spread {spread:.4g}"


def run_diamagnetic(cfg, outdir, fmt):
    spec = parse_spec(cfg)
    f = _parse_measure(cfg["f"], "f")
    g = _parse_testfunc(cfg["g"], "g")
    lhs, rhs, holds = diamagnetic_check(spec, f, g)
    rows = [
        _estimate_row(lhs, side="lhs_abs", value=abs(lhs.mean)),
        _estimate_row(rhs, side="rhs", value=float(rhs.mean.real)),
        {"side": "verdict", "value": holds, "mean_re": "", "mean_im": "",
         "stderr": "", "n": "", "invalid_count": "", "zero_hit_fraction": "",
         "note": ""},
    ]
    path = os.path.join(outdir, f"results.{fmt}")
    write_rows(rows, path, fmt)
    return [path], bool(holds), \
        f"|lhs| = {abs(lhs.mean):.6g}, rhs = {rhs.mean.real:.6g}, holds = {holds}"


_RUNNERS = {
    "validate": run_validate,
    "estimate": run_estimate,
    "oracle": run_oracle,
    "decay": run_decay,
    "martingale": run_martingale,
    "diamagnetic": run_diamagnetic,
}


# ---------------------------------------------------------------------------
# entry point

def build_parser():
    p = argparse.ArgumentParser(
        prog="relsemi",
        description="Monte Carlo and lattice-oracle suites for the "
                    "relativistic spin-1/2 semigroup")
    sub = p.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config (or manifest) file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--samples", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} "
                                      "or ./relsemi_out)")
        sp.add_argument("--format", choices=("csv", "json"))
    return p


def load_config(args):
    cfg = {}
    if args.config:
        with open(args.config) as fh:
            loaded = json.load(fh)
        if isinstance(loaded, dict) and loaded.get("manifest"):
            loaded = loaded.get("config", {})
        cfg.update(loaded)
    cfg["experiment"] = args.experiment
    for key in ("seed", "samples", "threads", "out", "format"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    cfg.setdefault("seed", 0)
    cfg.setdefault("format", "csv")
    return validate_config(cfg)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    outdir = cfg.get("out") or os.environ.get(OUT_ENV) or "relsemi_out"
    cfg["out"] = outdir
    os.makedirs(outdir, exist_ok=True)
    fmt = cfg.get("format", "csv")

    t0 = time.perf_counter()
    try:
        outputs, ok, summary = _RUNNERS[cfg["experiment"]](cfg, outdir, fmt)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EngineError, OracleError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    wall = time.perf_counter() - t0
    write_manifest(os.path.join(outdir, "manifest.json"), cfg, outputs,
                   wall, ok)
    print(f"{cfg['experiment']}: {summary} ({wall:.1f}s) -> {outdir}")
    if cfg["experiment"] == "validate" and not ok:
        return EXIT_CHECK_FAILED
    if cfg["experiment"] == "diamagnetic" and not ok:
        return EXIT_CHECK_FAILED
    return 0


if __name__ == "__main__":
    sys.exit(main())
