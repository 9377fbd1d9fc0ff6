"""Command-line driver: ``tdcmm {simulate,estimate,transfer,select,eval}``.

Options may also come from a flat ``key=value`` file given with
``--config``; explicit flags take precedence. ``--dump-config PATH`` writes
the fully resolved options and exits without running anything.

Exit status: 0 on success, 1 when an estimation stage fails, 2 for usage
and I/O problems.
"""
import argparse
import glob
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import io as tio
from .errors import IndexOutOfRange, ParseError, TdcmmError

EXIT_OK, EXIT_ESTIMATION, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# name -> (type, default); the parser uses None so config files can fill gaps
OPTIONS = {
    "target": (str, None),
    "sources": (str, None),
    "out": (str, None),
    "truth": (str, None),
    "d": (str, None),
    "m": (str, None),
    "k": (int, 4),
    "k_shared": (int, 2),
    "k_source": (int, None),
    "mode": (str, "oracle"),
    "tau": (float, None),
    "cv_tau": (str, None),
    "sketch_l": (int, 10),
    "sketch_p": (int, None),
    "sketch_pprime": (int, None),
    "power_q": (int, None),
    "split": (bool, False),
    "select_only": (bool, False),
    "threads": (int, 1),
    "seed": (int, 0),
    "reps": (int, 200),
    "scenario": (str, "s1"),
    "noise": (float, None),
    "frac_informative": (float, None),
    "gap_ratio": (float, None),
    "methods": (str, "dcmm,oracle_tdcmm,non_oracle_tdcmm"),
}


def _add(p, *names):
    for name in names:
        flag = "--" + name.replace("_", "-")
        typ = OPTIONS[name][0]
        if typ is bool:
            p.add_argument(flag, dest=name, action="store_const", const=True, default=None)
        else:
            p.add_argument(flag, dest=name, type=typ, default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="tdcmm", description="Transfer learning for DCMM networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="key=value file; flags override it")
    common.add_argument("--dump-config", dest="dump_config", default=None,
                        help="write resolved options to this file and exit")
    _add(common, "seed", "threads", "out")

    sketch = argparse.ArgumentParser(add_help=False)
    _add(sketch, "k", "k_shared", "k_source", "tau", "cv_tau", "sketch_l", "sketch_p",
         "sketch_pprime", "power_q", "split")

    p = sub.add_parser("simulate", parents=[common], help="write a planted scenario to disk")
    _add(p, "scenario", "d", "m", "noise", "frac_informative", "gap_ratio", "k", "k_shared",
         "k_source")

    p = sub.add_parser("estimate", parents=[common], help="single-network Mixed-SCORE")
    _add(p, "target", "truth", "k", "d")

    for name, text in (("transfer", "estimate the target with transferred subspace"),
                       ("select", "source selection only (non-oracle)")):
        p = sub.add_parser(name, parents=[common, sketch], help=text)
        _add(p, "target", "sources", "truth", "d", "mode", "select_only")

    p = sub.add_parser("eval", parents=[common, sketch], help="replicate experiment over a grid")
    _add(p, "scenario", "d", "m", "reps", "methods", "noise", "frac_informative", "gap_ratio")
    return parser


def resolve(args):
    """Merge defaults, config file and flags into a flat dict."""
    cfg = {k: v[1] for k, v in OPTIONS.items() if k in vars(args)}
    if args.config:
        for k, raw in tio.read_config(args.config).items():
            if k not in OPTIONS:
                raise UsageError(f"{args.config}: unknown option {k!r}")
            typ = OPTIONS[k][0]
            try:
                cfg[k] = raw.lower() in ("1", "true", "yes") if typ is bool else typ(raw)
            except ValueError:
                raise UsageError(f"{args.config}: bad value for {k}: {raw!r}") from None
    for k in OPTIONS:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if args.command == "select":
        cfg["mode"] = "non-oracle"
        cfg["select_only"] = True
    return cfg


def _need(cfg, *names):
    for n in names:
        if cfg.get(n) in (None, ""):
            raise UsageError(f"--{n.replace('_', '-')} is required")


def _int_list(text, name):
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--{name} expects comma-separated integers, got {text!r}") from None


def _load_network(path, cfg):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such file: {path}")
    d = None
    if not path.endswith(".csv"):
        if cfg.get("d") is None:
            raise UsageError(f"{path}: edge lists need --d")
        d = _int_list(cfg["d"], "d")[0]
    return tio.load_network(path, d)


def _load_truth(path):
    if path is None:
        return None
    if path.endswith(".json"):
        from .model import DcmmParams, build_probability_matrix

        t = tio.read_json(path)
        params = DcmmParams(theta=t["theta"], pi=t["pi"], p_mat=t["p_mat"])
        return build_probability_matrix(params)
    return tio.load_matrix(path)


def _sketch_config(cfg, d):
    from .spectral import SketchConfig

    over = {"n_sketches": cfg["sketch_l"]}
    for key, name in (("p", "sketch_p"), ("p_prime", "sketch_pprime"), ("q", "power_q")):
        if cfg.get(name) is not None:
            over[key] = cfg[name]
    return _checked(SketchConfig.default, d=d, k_s=cfg["k_shared"], seed=cfg["seed"], **over)


def _transfer_config(cfg, d, n_sources):
    from .transfer import TransferConfig

    k_src = cfg.get("k_source") or cfg["k"]
    return _checked(
        TransferConfig,
        k_target=cfg["k"],
        k_shared=cfg["k_shared"],
        k_sources=k_src,
        sketch=_sketch_config(cfg, d),
        split_sources=bool(cfg.get("split")),
        tau=cfg.get("tau") if cfg.get("tau") is not None else cfg["k_shared"] / 2,
        seed=cfg["seed"],
        n_jobs=max(1, cfg.get("threads") or 1),
    )


def _checked(factory, **kw):
    """Build a config object; invalid settings are usage errors."""
    try:
        return factory(**kw)
    except (ValueError, TypeError) as err:
        raise UsageError(str(err)) from None


def _out_dir(cfg):
    _need(cfg, "out")
    os.makedirs(cfg["out"], exist_ok=True)
    return cfg["out"]


def _finish_estimate(cfg, out, est):
    from .evaluation import d_metric

    tio.write_estimate(out, est)
    truth = _load_truth(cfg.get("truth"))
    if truth is not None:
        err = d_metric(est.h_hat, truth)
        tio.write_json(os.path.join(out, "error.json"), {"error_h": err})
        print(f"error_h = {err:.6g}")


def cmd_simulate(cfg):
    from .evaluation import ScenarioSpec, generate_scenario

    out = _out_dir(cfg)
    kw = {k: cfg[k] for k in ("noise", "frac_informative", "gap_ratio") if cfg.get(k) is not None}
    spec = _checked(
        ScenarioSpec,
        kind=cfg["scenario"],
        d=_int_list(cfg.get("d") or "50", "d")[0],
        m_total=_int_list(cfg.get("m") or "20", "m")[0],
        k_target=cfg["k"],
        k_shared=cfg["k_shared"],
        k_source=cfg.get("k_source") or cfg["k"],
        seed=cfg["seed"],
        **kw,
    )
    scen = generate_scenario(spec)
    tio.save_matrix(os.path.join(out, "target.csv"), scen.target)
    width = max(3, len(str(len(scen.sources))))
    for m, x in enumerate(scen.sources, 1):
        tio.save_matrix(os.path.join(out, f"source_{m:0{width}d}.csv"), x)
    tio.write_json(os.path.join(out, "truth.json"), {
        "theta": scen.params.theta.tolist(),
        "pi": scen.params.pi.tolist(),
        "p_mat": scen.params.p_mat.tolist(),
        "shared": scen.shared.tolist(),
        "informative": list(scen.informative),
        "spec": asdict(spec),
    })
    print(f"wrote 1 target and {len(scen.sources)} sources to {out}")


def cmd_estimate(cfg):
    from .mixed_score import full_pipeline

    _need(cfg, "target")
    x = _load_network(cfg["target"], cfg)
    out = _out_dir(cfg)
    est = full_pipeline(x, k=cfg["k"], seed=cfg["seed"])
    _finish_estimate(cfg, out, est)


def _source_paths(cfg):
    pattern = cfg.get("sources")
    if not pattern:
        return []
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise FileNotFoundError(f"no files match --sources {pattern}")
    return paths


def cmd_transfer(cfg):
    from .mixed_score import full_pipeline
    from .transfer import cross_validate_tau, non_oracle_tdcmm, oracle_tdcmm, select_sources

    _need(cfg, "target")
    x = _load_network(cfg["target"], cfg)
    paths = _source_paths(cfg)
    sources = [_load_network(p, cfg) for p in paths]
    for p, s in zip(paths, sources):
        if s.shape != x.shape:
            raise ParseError(f"{p}: shape {s.shape} differs from target {x.shape}", path=p)
    out = _out_dir(cfg)
    tcfg = _transfer_config(cfg, x.shape[0], len(sources))
    mode = cfg["mode"]
    if mode not in ("oracle", "non-oracle"):
        raise UsageError(f"--mode must be oracle or non-oracle, got {mode!r}")
    if mode == "non-oracle" and cfg.get("cv_tau") and sources:
        try:
            grid = [float(t) for t in str(cfg["cv_tau"]).split(",") if t.strip()]
        except ValueError:
            raise UsageError(f"--cv-tau expects comma-separated numbers, got {cfg['cv_tau']!r}") from None
        tau, scores = cross_validate_tau([x] + sources, tcfg, grid, return_scores=True)
        tcfg = tcfg.__class__(**{**tcfg.__dict__, "tau": tau})
        tio.write_json(os.path.join(out, "cv_tau.json"),
                       {"tau": tau, "scores": {repr(k): (v if np.isfinite(v) else None)
                                                  for k, v in scores.items()}})
    names = {i + 1: os.path.basename(p) for i, p in enumerate(paths)}
    if cfg.get("select_only"):
        res = select_sources([x] + sources, tcfg)
        tio.save_matrix(os.path.join(out, "shared.csv"), res.shared)
        tio.write_trace(os.path.join(out, "trace.json"), res.selected, res.trace)
        print("selected:", " ".join(names[m] for m in res.selected) or "(none)")
        return
    if mode == "oracle":
        if not sources:
            raise UsageError("--mode oracle needs at least one source (--sources)")
        basis = oracle_tdcmm(x, sources, tcfg)
    else:
        basis = non_oracle_tdcmm(x, sources, tcfg)
        tio.write_trace(os.path.join(out, "trace.json"), basis.selected, basis.trace)
        print("selected:", " ".join(names[m] for m in basis.selected) or "(none)")
    tio.write_basis(out, basis)
    est = full_pipeline(x, basis.combined, seed=tcfg.seed)
    _finish_estimate(cfg, out, est)


def cmd_eval(cfg):
    from .evaluation import METHODS, ScenarioSpec, run_experiment
    from .transfer import TransferConfig

    out = _out_dir(cfg)
    methods = [m.strip() for m in cfg["methods"].split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown methods {bad}; choose from {list(METHODS)}")
    kw = {k: cfg[k] for k in ("noise", "frac_informative", "gap_ratio") if cfg.get(k) is not None}
    ds = _int_list(cfg.get("d") or "50", "d")
    ms = _int_list(cfg.get("m") or "20", "m")
    k_src = cfg.get("k_source") or cfg["k"]
    specs = [_checked(ScenarioSpec, kind=cfg["scenario"], d=d, m_total=m, k_target=cfg["k"],
                      k_shared=cfg["k_shared"], k_source=k_src, **kw)
             for d in ds for m in ms]
    grid = None
    if cfg.get("cv_tau"):
        grid = [float(t) for t in str(cfg["cv_tau"]).split(",") if t.strip()]
    overrides = {key: cfg[name] for key, name in (("p", "sketch_p"), ("p_prime", "sketch_pprime"),
                                                  ("q", "power_q")) if cfg.get(name) is not None}
    tcfg = None
    if overrides or cfg.get("tau") is not None or cfg.get("split") or cfg["sketch_l"] != 10:
        from .spectral import SketchConfig

        sk = None
        if overrides or cfg["sketch_l"] != 10:
            if len(ds) > 1 and "q" not in overrides:
                raise UsageError("sketch overrides with several --d values need --power-q")
            sk = _checked(SketchConfig.default, d=ds[0], k_s=cfg["k_shared"],
                          n_sketches=cfg["sketch_l"], **overrides)
        tcfg = _checked(TransferConfig, k_target=cfg["k"], k_shared=cfg["k_shared"],
                        k_sources=k_src, sketch=sk, split_sources=bool(cfg.get("split")),
                        tau=cfg.get("tau"))
    report = run_experiment(specs, methods, reps=cfg["reps"], cfg=tcfg, seed=cfg["seed"],
                            cv_grid=grid, n_jobs=max(1, cfg["threads"]))
    report.to_csv(os.path.join(out, "report.csv"))
    report.summary_json(os.path.join(out, "summary.json"))
    with open(os.path.join(out, "timings.csv"), "w") as fh:
        fh.write("method,scenario,d,M,replicate,wall_time\n")
        for r in report.rows:
            fh.write(f"{r['method']},{r['scenario']},{r['d']},{r['M']},{r['replicate']},{r['wall_time']!r}\n")
    failed = sum(1 for r in report.rows if r.get("error"))
    print(f"{len(report.rows)} rows ({failed} failed replicates) written to {out}")


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "transfer": cmd_transfer,
    "select": cmd_transfer,
    "eval": cmd_eval,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        if args.dump_config:
            tio.write_config(args.dump_config, cfg)
            return EXIT_OK
        from threadpoolctl import threadpool_limits

        # BLAS stays single-threaded so results never depend on --threads;
        # the worker count goes to the library's own parallel loops
        with threadpool_limits(1):
            COMMANDS[args.command](cfg)
    except (UsageError, FileNotFoundError, ParseError, IndexOutOfRange, OSError) as err:
        print(f"tdcmm {args.command}: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (TdcmmError, ArithmeticError, ValueError, np.linalg.LinAlgError) as err:
        print(f"tdcmm {args.command}: estimation failed: {type(err).__name__}: {err}",
              file=sys.stderr)
        return EXIT_ESTIMATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
