"""Command-line entry point: ``swodt <subcommand> [options]``.

Every subcommand reads its defaults from an optional JSON ``--config``
file; explicit flags override it. Exit status is 0 on success, 1 on a
domain error and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .datagen import SamplerConfig, atomic_write_text, generate_dataset, load_dataset, sample_scenarios, save_dataset, sampler_to_dict
from .dispatch import (build_big_m_lp, evaluate_security_rate, scenario_from_dict, scenario_to_dict,
                       secure_dispatch, solve_ed, state_is_secure)
from .errors import SwodtError
from .experiments import grid_report
from .grid import build_dc_network, load_grid
from .lp import write_lp_file
from .owlqn import OwlqnConfig
from .rules import extract_rules, load_rules
from .tree import VARIANTS, TrainConfig, fit_tree, load_model

DEFAULT_LAMBDA = 0.05


def version_string():
    import scipy

    return "swodt {} (python {}, numpy {}, scipy {}, {})".format(
        __version__, platform.python_version(), np.__version__, scipy.__version__, platform.machine())


def _read_json(path, what):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SwodtError("cannot read {} {}: {}".format(what, path, exc)) from exc


def _pick(args, name, config, *keys, default=None):
    """Flag value if given, else ``config[keys...]``, else ``default``."""
    val = getattr(args, name, None)
    if val is not None:
        return val
    node = config
    for k in keys:
        if not isinstance(node, dict) or k not in node:
            return default
        node = node[k]
    return node


def _require(value, flag):
    if value is None:
        raise SwodtError("{} is required (flag or config file)".format(flag))
    return value


def _workers(args, config):
    w = _pick(args, "workers", config, "workers")
    return max(1, int(w)) if w is not None else (os.cpu_count() or 1)


def _grid(args, config):
    spec = load_grid(_require(_pick(args, "grid", config, "paths", "grid"), "--grid"))
    return spec, build_dc_network(spec)


def _emit(text, out=None):
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


# subcommands ---------------------------------------------------------------

def cmd_gen_data(args, config):
    spec, net = _grid(args, config)
    seed = int(_require(_pick(args, "seed", config, "seed"), "--seed"))
    n = int(_pick(args, "n", config, "n_samples", default=8000))
    sampler = SamplerConfig.from_dict(config.get("sampler"))
    if args.cost_jitter is not None:
        sampler = replace(sampler, cost_jitter=args.cost_jitter)
        sampler.validate()
    out = _require(_pick(args, "out", config, "paths", "dataset"), "--out")
    scenarios = sample_scenarios(spec, n, sampler, seed)
    meta = {"grid": spec.name, "seed": seed, "sampler": sampler_to_dict(sampler)}
    ds = generate_dataset(spec, net, scenarios, workers=_workers(args, config), meta=meta)
    save_dataset(ds, out)
    c = ds.class_counts()
    print("wrote {} states ({} secure, {} insecure, {} infeasible skipped) to {}".format(
        len(ds), c[1], c[0], len(ds.meta["skipped_infeasible"]), out))
    return 0


def _train_config(args, config):
    tc = dict(config.get("train") or {})
    variant = _pick(args, "variant", tc, "variant", default="swodt").lower()
    lam1 = _pick(args, "lambda1", tc, "lam1")
    lam2 = _pick(args, "lambda2", tc, "lam2")
    if variant in ("udt", "wodt"):
        # config lambdas belong to the regularized variants; flags still count
        lam1 = args.lambda1 if args.lambda1 is not None else 0.0
        lam2 = args.lambda2 if args.lambda2 is not None else 0.0
    elif variant == "swodtl":
        lam2 = 0.0 if lam2 is None else lam2
    lam1 = DEFAULT_LAMBDA if lam1 is None else lam1
    lam2 = DEFAULT_LAMBDA if lam2 is None else lam2
    cfg = TrainConfig(
        variant=variant,
        depth=int(_pick(args, "depth", tc, "depth", default=6)),
        min_split=int(_pick(args, "min_split", tc, "min_split", default=10)),
        lam1=float(lam1),
        lam2=float(lam2),
        scale=False if args.no_scale else bool(tc.get("scale", True)),
        seed=int(_pick(args, "seed", config, "seed", default=0)),
        owlqn=OwlqnConfig.from_dict(tc.get("owlqn")),
    )
    cfg.validate()
    return cfg


def cmd_train(args, config):
    data = _require(_pick(args, "data", config, "paths", "dataset"), "--data")
    out = _require(_pick(args, "out", config, "paths", "model"), "--out")
    cfg = _train_config(args, config)
    ds = load_dataset(data)
    model = fit_tree(ds, cfg)
    atomic_write_text(out, model.to_json())
    print("trained {} tree: depth {}, {} leaves, sparsity {:.3f}, train accuracy {:.4f} -> {}".format(
        cfg.variant.upper(), model.depth, model.n_leaves, model.sparsity, model.train_accuracy, out))
    return 0


def cmd_extract(args, config):
    model = load_model(_require(_pick(args, "model", config, "paths", "model"), "--model"))
    out = _require(_pick(args, "out", config, "paths", "rules"), "--out")
    rules = extract_rules(model)
    atomic_write_text(out, rules.to_json())
    print("extracted {} rules (sparsity {:.3f}) -> {}".format(rules.G, rules.sparsity, out))
    return 0


def _scenario(args, config, spec):
    path = _pick(args, "scenario", config, "paths", "scenario")
    if path:
        return scenario_from_dict(spec, _read_json(path, "scenario"))
    seed = _pick(args, "seed", config, "seed")
    if seed is None:
        raise SwodtError("give --scenario FILE or --seed to draw one")
    sampler = replace(SamplerConfig.from_dict(config.get("sampler")), cost_jitter=0.0)
    return sample_scenarios(spec, 1, sampler, int(seed))[0]


def _margin(args, config):
    return float(_pick(args, "margin", config, "dispatch", "margin", default=1.0))


def cmd_export_lp(args, config):
    spec, net = _grid(args, config)
    rules = load_rules(_require(_pick(args, "rules", config, "paths", "rules"), "--rules"))
    scenario = _scenario(args, config, spec)
    lp, _ = build_big_m_lp(spec, net, rules, scenario, _margin(args, config), include_sum=not args.no_sum)
    text = write_lp_file(lp, comment="Big-M security-constrained dispatch, {} rules, grid {}".format(rules.G, spec.name))
    _emit(text, _pick(args, "out", config, "paths", "lp"))
    return 0


def cmd_dispatch(args, config):
    spec, net = _grid(args, config)
    rules = load_rules(_require(_pick(args, "rules", config, "paths", "rules"), "--rules"))
    scenario = _scenario(args, config, spec)
    ed = solve_ed(spec, net, scenario)
    res = secure_dispatch(spec, net, rules, scenario)
    names = [g.name for g in spec.dispatchable] + ["curtail_" + g.name for g in spec.renewables]
    report = {
        "scenario": scenario_to_dict(scenario),
        "unconstrained": {
            "status": ed.status,
            "cost": ed.objective if ed.optimal else None,
            "secure": bool(state_is_secure(spec, net, scenario, ed.x)) if ed.optimal else None,
        },
        "constrained": {
            "status": res.status,
            "cost": res.cost if res.x is not None else None,
            "active_leaf": res.active_leaf,
            "secure": bool(state_is_secure(spec, net, scenario, res.x)) if res.x is not None else None,
            "dispatch_MW": dict(zip(names, map(float, res.x))) if res.x is not None else None,
            "leaf_status": {str(k): v for k, v in sorted(res.leaf_status.items())},
            "solve_seconds": res.solve_seconds,
        },
    }
    out = _pick(args, "out", config, "paths", "dispatch_report")
    if out:
        atomic_write_text(out, json.dumps(report, indent=1) + "\n")
    u, c = report["unconstrained"], report["constrained"]
    print("unconstrained ED: {} cost={} secure={}".format(u["status"], u["cost"], u["secure"]))
    print("rules-constrained ED: {} cost={} leaf={} secure={}".format(c["status"], c["cost"], c["active_leaf"], c["secure"]))
    if not out:
        print(json.dumps(report, indent=1))
    return 0 if res.x is not None else 1


def _parse_depths(text):
    text = str(text)
    if ".." in text:
        a, b = text.split("..", 1)
        return list(range(int(a), int(b) + 1))
    return [int(t) for t in text.split(",") if t.strip()]


def _parse_floats(text):
    if isinstance(text, (list, tuple)):
        return [float(t) for t in text]
    return [float(t) for t in str(text).split(",") if t.strip()]


def cmd_eval(args, config):
    ec = dict(config.get("eval") or {})
    if args.mode == "sweep":
        ds = load_dataset(_require(_pick(args, "data", config, "paths", "dataset"), "--data"))
        depths = _parse_depths(_pick(args, "depths", ec, "depths", default="1..6"))
        lambdas = _parse_floats(_pick(args, "lambdas", ec, "lambdas", default="0,0.001,0.01,0.05,0.1"))
        if lambdas != sorted(lambdas):
            raise SwodtError("--lambdas must be sorted ascending")
        variants = [v.strip().lower() for v in str(_pick(args, "variants", ec, "variants", default="udt,wodt,swodtl,swodt")).split(",")]
        for v in variants:
            if v not in VARIANTS:
                raise SwodtError("unknown variant {!r}".format(v))
        seed = int(_pick(args, "seed", config, "seed", default=0))
        n_seeds = int(_pick(args, "n_seeds", ec, "n_seeds", default=1))
        folds = int(_pick(args, "folds", ec, "folds", default=5))
        report = grid_report(ds, variants, depths, lambdas, k=folds,
                             seeds=range(seed, seed + n_seeds), workers=_workers(args, config))
        out = _pick(args, "out", config, "paths", "report")
        if out:
            atomic_write_text(out, report.to_json())
        csv_out = _pick(args, "csv", ec, "csv")
        if csv_out:
            atomic_write_text(csv_out, report.to_csv())
        print(report.table())
        return 0

    spec, net = _grid(args, config)
    paths = config.get("paths") or {}
    if args.model:
        source = extract_rules(load_model(args.model))
    elif args.rules or paths.get("rules"):
        source = load_rules(args.rules or paths["rules"])
    else:
        source = extract_rules(load_model(_require(paths.get("model"), "--model or --rules")))
    sampler = SamplerConfig.from_dict(config.get("sampler"))
    report = evaluate_security_rate(spec, net, source, int(_pick(args, "n", ec, "n", default=2000)),
                                    int(_pick(args, "seed", config, "seed", default=11)), sampler)
    out = _pick(args, "out", config, "paths", "report")
    if out:
        atomic_write_text(out, json.dumps(report.to_dict(), indent=1) + "\n")
    print(report.table())
    return 0


# parser ---------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON pipeline config; flags override its values")
    common.add_argument("--workers", type=int, help="worker processes (default: available cores)")

    p = argparse.ArgumentParser(prog="swodt", description="Sparse oblique decision-tree security rules for economic dispatch.")
    p.add_argument("--version", action="version", version=version_string())
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    g = sub.add_parser("gen-data", parents=[common], help="sample scenarios, dispatch and label them")
    g.add_argument("--grid", help="grid JSON path or bundled name (case6, ieee30)")
    g.add_argument("--n", type=int, help="number of scenarios (default 8000)")
    g.add_argument("--seed", type=int)
    g.add_argument("--cost-jitter", type=float, help="relative marginal-cost perturbation per scenario")
    g.add_argument("--out", help="dataset CSV path")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", parents=[common], help="train a decision tree")
    t.add_argument("--data")
    t.add_argument("--variant", choices=VARIANTS)
    t.add_argument("--depth", type=int)
    t.add_argument("--min-split", type=int, dest="min_split")
    t.add_argument("--lambda1", type=float)
    t.add_argument("--lambda2", type=float)
    t.add_argument("--no-scale", action="store_true", help="fit splits on raw features")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", help="model JSON path")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("extract", parents=[common], help="extract secure-leaf rule matrices")
    e.add_argument("--model")
    e.add_argument("--out", help="rules JSON path")
    e.set_defaults(func=cmd_extract)

    x = sub.add_parser("export-lp", parents=[common], help="write the Big-M dispatch MILP in LP format")
    x.add_argument("--grid")
    x.add_argument("--rules")
    x.add_argument("--scenario", help="scenario JSON (renewable_MW, load_MW)")
    x.add_argument("--seed", type=int, help="draw the scenario from the sampler instead")
    x.add_argument("--margin", type=float, help="Big-M safety margin (default 1.0)")
    x.add_argument("--no-sum", action="store_true", help="omit the sum(I) = 1 row")
    x.add_argument("--out", help="LP file path (default stdout)")
    x.set_defaults(func=cmd_export_lp)

    d = sub.add_parser("dispatch", parents=[common], help="solve the rules-constrained dispatch for one scenario")
    d.add_argument("--grid")
    d.add_argument("--rules")
    d.add_argument("--scenario")
    d.add_argument("--seed", type=int)
    d.add_argument("--out", help="JSON report path")
    d.set_defaults(func=cmd_dispatch)

    v = sub.add_parser("eval", parents=[common], help="secure-rate evaluation, or 'eval sweep' for cross-validation")
    v.add_argument("mode", nargs="?", choices=("security", "sweep"), default="security")
    v.add_argument("--grid")
    v.add_argument("--model")
    v.add_argument("--rules")
    v.add_argument("--n", type=int, help="fresh scenarios (default 2000)")
    v.add_argument("--seed", type=int)
    v.add_argument("--data", help="dataset CSV (sweep)")
    v.add_argument("--depths", help="e.g. 1..6 or 3,6 (sweep)")
    v.add_argument("--lambdas", help="ascending comma list (sweep)")
    v.add_argument("--variants", help="comma list (sweep)")
    v.add_argument("--folds", type=int)
    v.add_argument("--n-seeds", type=int, dest="n_seeds")
    v.add_argument("--csv", help="also write a CSV summary (sweep)")
    v.add_argument("--out", help="JSON report path")
    v.set_defaults(func=cmd_eval)
    return p


def run(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _read_json(args.config, "config") if args.config else {}
        if not isinstance(config, dict):
            raise SwodtError("config file must hold a JSON object")
        return args.func(args, config)
    except SwodtError as exc:
        print("error: {}".format(exc), file=sys.stderr)
        return 1
    except OSError as exc:
        print("error: {}".format(exc), file=sys.stderr)
        return 1


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
