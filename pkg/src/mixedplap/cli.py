"""Command line entry point.

Subcommands: eig1, eig2, faber-krahn, hks, drift, check, oracle.  A run is
described by a JSON config (validated against ``run_config.schema.json``);
flags override its scalar entries.  Exit codes: 0 success, 2 an inequality
failed, 3 a solver did not converge, 4 bad configuration.  Errors are
reported as one JSON line on standard error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from importlib import resources

import jsonschema
import numpy as np

from . import experiments as ex
from .eigen1 import SolverParams, dense_oracle_p2, solve_lambda1
from .eigen2 import dump_path, minimax_lambda2
from .energy import EnergyContext
from .errors import ConfigError, InequalityViolated, MixedPLapError, NotConverged
from .grid import DomainSpec, build_domain, dump_field_csv, is_connected
from .kernel import Kernel
from .lemmas import run_sweeps

EXIT_OK, EXIT_INEQUALITY, EXIT_NOT_CONVERGED, EXIT_CONFIG = 0, 2, 3, 4
COMMANDS = ("eig1", "eig2", "faber-krahn", "hks", "drift", "check", "oracle")


def load_schema():
    text = resources.files("mixedplap").joinpath("run_config.schema.json").read_text()
    return json.loads(text)


def _parser():
    ap = argparse.ArgumentParser(prog="mixedplap", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--p", type=float)
        sp.add_argument("--resolution", "-n", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--tol", type=float)
        sp.add_argument("--max-iter", type=int)
        sp.add_argument("--output", "-o")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--dump-fields", action="store_true")
        sp.add_argument("--svg", action="store_true")
        sp.add_argument("--record-time", action="store_true",
                        help="fill the seconds column (makes output run-dependent)")
        if name == "check":
            sp.add_argument("--lemma", choices=["g", "sigma", "cp", "picone", "all"])
            sp.add_argument("--samples", type=int)
    return ap


def build_config(args):
    cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except OSError as err:
            raise ConfigError(f"cannot read config: {err}") from err
        except json.JSONDecodeError as err:
            raise ConfigError(f"malformed JSON: {err}") from err
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    solver = dict(cfg.get("solver", {}))
    for flag, key in (("seed", "seed"), ("tol", "tol"), ("max_iter", "max_iter")):
        v = getattr(args, flag)
        if v is not None:
            solver[key] = v
    if solver:
        cfg["solver"] = solver
    for flag in ("p", "resolution", "output"):
        v = getattr(args, flag)
        if v is not None:
            cfg[flag] = v
    if args.command == "check":
        if args.lemma is not None:
            cfg["lemma"] = args.lemma
        if args.samples is not None:
            cfg["samples"] = args.samples
    if args.record_time:
        cfg["record_time"] = True
    cfg.setdefault("experiment", args.command)
    if cfg["experiment"] != args.command:
        raise ConfigError(f"config is for {cfg['experiment']!r}, not {args.command!r}")
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as err:
        path = "/".join(str(x) for x in err.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {path}: {err.message}") from err
    return cfg


def _params(cfg):
    return SolverParams(**cfg.get("solver", {}))


def _kernel(cfg, dim):
    if "kernel" not in cfg or cfg["kernel"] is None:
        return None
    obj = dict(cfg["kernel"])
    if obj["family"] == "truncated_fractional":
        obj.setdefault("p", cfg.get("p", 2.0))
        for key in ("s", "epsilon", "r_cut"):
            if key not in obj:
                raise ConfigError(f"fractional kernel needs {key!r}")
    elif "radius" not in obj:
        raise ConfigError("kernel needs a radius")
    return Kernel.from_json(obj, dim)


def _require(cfg, *keys):
    for k in keys:
        if k not in cfg:
            raise ConfigError(f"config needs {k!r}")


def _domain(cfg):
    _require(cfg, "domain")
    spec = DomainSpec.from_json(cfg["domain"])
    if "dimension" in cfg and spec.dim != cfg["dimension"]:
        raise ConfigError("domain dimension does not match 'dimension'")
    return spec


# -- commands ---------------------------------------------------------------------------

def _setup(cfg):
    spec = _domain(cfg)
    kern = _kernel(cfg, spec.dim)
    grid, mask = build_domain(spec, cfg.get("resolution", 100),
                              0.0 if kern is None else kern.radius)
    return spec, kern, EnergyContext(grid, kern, cfg.get("p", 2.0)), mask


def cmd_eig1(cfg, args, out):
    spec, kern, ctx, mask = _setup(cfg)
    res = solve_lambda1(ctx, mask, _params(cfg))
    row = ex.ExperimentRow("eig1", ex.describe_domain(spec), ctx.p, ex.describe_kernel(kern),
                           ctx.grid.n, lambda1=res.lam, extra=res.to_json())
    if ctx.p == 2.0 and mask.sum() <= 4000:
        row.oracle1 = dense_oracle_p2(ctx, mask)[0]
    if args.dump_fields:
        out["fields"]["phi1.csv"] = dump_field_csv(res.eigenfunction)
    checks = [ex.Check("lambda1 > 0", res.lam > 0, f"lambda1={res.lam:.12g}")]
    return [row], checks, res.converged


def cmd_eig2(cfg, args, out):
    spec, kern, ctx, mask = _setup(cfg)
    params = _params(cfg)
    first = solve_lambda1(ctx, mask, params)
    if not first.converged:
        raise NotConverged(f"lambda1 stopped after {first.iterations} iterations")
    res = minimax_lambda2(ctx, params, phi1=first.eigenfunction, lam1=first.lam)
    row = ex.ExperimentRow("eig2", ex.describe_domain(spec), ctx.p, ex.describe_kernel(kern),
                           ctx.grid.n, lambda1=first.lam, lambda2=res.lam,
                           margin=res.lam - first.lam,
                           extra={**res.to_json(), "path_max": res.info["path_max"]})
    if ctx.p == 2.0 and mask.sum() <= 4000:
        o = dense_oracle_p2(ctx, mask)
        row.oracle1, row.oracle2 = o[0], o[1]
    checks = []
    if is_connected(mask):
        checks.append(ex.Check("lambda2 > lambda1", res.lam - first.lam > 10 * params.tol * first.lam,
                               f"margin={res.lam - first.lam:.6g}"))
        x = res.eigenfunction.vector()
        checks.append(ex.Check("lambda2 eigenfunction changes sign",
                               bool(x.max() > 0 and x.min() < 0), ""))
    if args.dump_fields:
        out["fields"]["phi1.csv"] = dump_field_csv(first.eigenfunction)
        out["fields"]["u2.csv"] = dump_field_csv(res.eigenfunction)
        out["path"] = (res.info["path"], ctx, res.info["sweeps"])
    return [row], checks, res.converged


def cmd_oracle(cfg, args, out):
    spec, kern, ctx, mask = _setup(cfg)
    if ctx.p != 2.0:
        raise ConfigError("the dense oracle needs p = 2")
    l1, l2, v1, v2 = dense_oracle_p2(ctx, mask)
    row = ex.ExperimentRow("oracle", ex.describe_domain(spec), 2.0, ex.describe_kernel(kern),
                           ctx.grid.n, oracle1=l1, oracle2=l2, margin=l2 - l1)
    if args.dump_fields:
        out["fields"]["oracle1.csv"] = dump_field_csv(v1)
        out["fields"]["oracle2.csv"] = dump_field_csv(v2)
    return [row], [ex.Check("oracle lambda1 < lambda2", l1 < l2, "")], True


def cmd_faber_krahn(cfg, args, out):
    _require(cfg, "shapes")
    shapes = [DomainSpec.from_json(s) for s in cfg["shapes"]]
    kern = _kernel(cfg, shapes[0].dim)
    levels = cfg.get("resolutions", [cfg.get("resolution", 60)])
    rows, checks, by_n = [], [], {}
    for n in levels:
        r, c = ex.faber_krahn_sweep(shapes, n, kern, cfg.get("p", 2.0), _params(cfg),
                                    target=cfg.get("target_measure"),
                                    refine=cfg.get("refine", True), workers=args.workers,
                                    labels=cfg.get("labels"),
                                    common_spacing=cfg.get("common_spacing"))
        rows += r
        checks += c
        by_n[n] = r
    if len(levels) > 1 and cfg.get("refine", True):
        for dom, ratios in ex.faber_krahn_ratio_trend(by_n).items():
            grows = all(b > a for a, b in zip(ratios, ratios[1:]))
            checks.append(ex.Check(f"faber-krahn margin/error grows {dom}", grows,
                                   " ".join(f"{x:.4g}" for x in ratios)))
    return rows, checks, True


def cmd_hks(cfg, args, out):
    spec = _domain(cfg)
    kern = _kernel(cfg, spec.dim)
    rows, checks = ex.hks_check(spec, cfg.get("resolution", 100), kern, cfg.get("p", 2.0),
                                _params(cfg), splits=tuple(cfg.get("splits", (0.3, 0.4, 0.5, 0.6, 0.7))),
                                workers=args.workers)
    return rows, checks, True


def cmd_drift(cfg, args, out):
    _require(cfg, "radius", "separations")
    dim = cfg.get("dimension", 1)
    kern = _kernel(cfg, dim)
    rows, checks = ex.drift_experiment(cfg["radius"], cfg["separations"],
                                       cfg.get("cells_per_radius", 20), kern, cfg.get("p", 2.0),
                                       _params(cfg), dim=dim,
                                       theta_samples=cfg.get("theta_samples", 720))
    if args.svg:
        xs = [r.extra["separation"] for r in rows]
        ys = [r.lambda2 for r in rows]
        out["svg"] = ex.svg_line_chart(xs, ys, "lambda2 of two balls", "separation", "lambda2",
                                       reference=rows[0].oracle1)
    return rows, checks, True


def cmd_check(cfg, args, out):
    lemma = cfg.get("lemma", "all")
    p = cfg.get("p", 2.0)
    samples = cfg.get("samples", 100000)
    seed = cfg.get("solver", {}).get("seed", 0)
    results = run_sweeps(lemma, p, samples, seed)
    lines = ["lemma,p,samples,violations,equality_defect,status"]
    lines += [",".join(r.row()) for r in results]
    table = "\n".join(lines) + "\n"
    out["stdout"] = table
    out["extra_files"]["lemmas.csv"] = table
    checks = []
    for r in results:
        detail = json.dumps(r.example, sort_keys=True) if r.example else ""
        checks.append(ex.Check(f"lemma {r.lemma} p={p:g}", r.passed, detail))
    return [], checks, True


HANDLERS = {"eig1": cmd_eig1, "eig2": cmd_eig2, "oracle": cmd_oracle,
            "faber-krahn": cmd_faber_krahn, "hks": cmd_hks, "drift": cmd_drift,
            "check": cmd_check}


def _emit_error(kind, message, **extra):
    sys.stderr.write(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True) + "\n")


def write_outputs(directory, rows, checks, cfg, out, with_time):
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "results.csv"), "w", newline="") as fh:
        fh.write(ex.rows_to_csv(rows, with_time))
    with open(os.path.join(directory, "results.json"), "w") as fh:
        fh.write(ex.rows_to_json(rows, checks, cfg, with_time))
    for name, text in out["fields"].items():
        fdir = os.path.join(directory, "fields")
        os.makedirs(fdir, exist_ok=True)
        with open(os.path.join(fdir, name), "w", newline="") as fh:
            fh.write(text)
    for name, text in out["extra_files"].items():
        with open(os.path.join(directory, name), "w", newline="") as fh:
            fh.write(text)
    if "path" in out:
        path, ctx, sweep = out["path"]
        dump_path(path, os.path.join(directory, "path"), ctx, sweep)
    if "svg" in out:
        with open(os.path.join(directory, "chart.svg"), "w") as fh:
            fh.write(out["svg"])


def run(argv=None):
    """Parse ``argv``, run the command, write outputs and return the exit code."""
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as err:
        if err.code in (0, None):
            return EXIT_OK
        _emit_error("ConfigError", "invalid command line")
        return EXIT_CONFIG
    try:
        cfg = build_config(args)
    except ConfigError as err:
        _emit_error("ConfigError", str(err))
        return EXIT_CONFIG
    out = {"fields": {}, "extra_files": {}}
    try:
        rows, checks, converged = HANDLERS[args.command](cfg, args, out)
    except NotConverged as err:
        _emit_error("NotConverged", str(err))
        return EXIT_NOT_CONVERGED
    except InequalityViolated as err:
        _emit_error("InequalityViolated", str(err))
        return EXIT_INEQUALITY
    except (ConfigError, MixedPLapError, ValueError, KeyError, TypeError) as err:
        _emit_error(type(err).__name__, str(err))
        return EXIT_CONFIG
    with_time = bool(cfg.get("record_time", False))
    write_outputs(cfg.get("output", "results"), rows, checks, cfg, out, with_time)
    if "stdout" in out:
        sys.stdout.write(out["stdout"])
    if not converged:
        _emit_error("NotConverged", "solver stopped before meeting its tolerance")
        return EXIT_NOT_CONVERGED
    failed = [c for c in checks if not c.passed]
    if failed:
        c = failed[0]
        _emit_error("InequalityViolated", c.name, detail=c.detail, failures=len(failed))
        return EXIT_INEQUALITY
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
