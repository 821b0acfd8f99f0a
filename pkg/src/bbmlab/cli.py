"""Command-line front end: validate, spectral, run, analyze, report.

Exit codes: 0 success, 2 config error, 3 population-cap breach (partial
results were written), 4 analysis error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiment import (AnalysisError, ConfigError, ExperimentConfig, analyze,
                         build_constants, build_model, build_spectral,
                         default_out_root, run_experiment, validate_config)
from .simulator import CapExceeded
from .spectral import SubcriticalModelError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CAP = 3
EXIT_ANALYSIS = 4


def _error(msg: str, code: int) -> int:
    print(json.dumps({"error": msg, "exit_code": code}), file=sys.stderr)
    return code


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    d = cfg.to_dict()
    if getattr(args, "seed", None) is not None:
        d["seed"] = args.seed
    if getattr(args, "checkpoint", None):
        d["checkpoints_t"] = sorted(float(t) for t in args.checkpoint)
        d["horizon_t"] = max(d["horizon_t"], d["checkpoints_t"][-1])
    if getattr(args, "front", None):
        try:
            d["fronts"] = [json.loads(f) for f in args.front]
        except json.JSONDecodeError as e:
            raise ConfigError(f"bad --front JSON: {e}") from None
    try:
        return ExperimentConfig.from_dict(d)
    except (KeyError, TypeError) as e:
        raise ConfigError(f"bad config overrides: {e}") from None


def cmd_validate(args) -> int:
    try:
        cfg = _load_config(args)
        report = validate_config(cfg)
    except (ConfigError, SubcriticalModelError, FileNotFoundError) as e:
        return _error(str(e), EXIT_CONFIG)
    print(json.dumps({"config_hash": cfg.config_hash, "valid": True,
                      "expected_peak_per_replicate": report["expected_peak_per_replicate"],
                      "kato_sup_potential": {str(k): v for k, v in
                                             report["kato"]["sup_potential"].items()},
                      "lambda": report["spectral"]["lambda"]}, indent=2))
    return EXIT_OK


def cmd_spectral(args) -> int:
    try:
        cfg = _load_config(args)
        model = build_model(cfg)
        sd = build_spectral(model)
        consts = build_constants(model, sd)
    except (ConfigError, SubcriticalModelError, FileNotFoundError) as e:
        return _error(str(e), EXIT_CONFIG)
    print(json.dumps({"config_hash": cfg.config_hash, "spectral": sd.to_dict(),
                      "constants": consts.to_dict()}, indent=2))
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = _load_config(args)
    except (ConfigError, FileNotFoundError) as e:
        return _error(str(e), EXIT_CONFIG)
    out = Path(args.out) if args.out else default_out_root() / cfg.config_hash
    try:
        run_experiment(cfg, out, threads=args.threads, progress=not args.quiet)
    except (ConfigError, SubcriticalModelError) as e:
        return _error(str(e), EXIT_CONFIG)
    except CapExceeded as e:
        print(json.dumps({"result_dir": str(out), "partial": True, "detail": str(e)}))
        return EXIT_CAP
    print(json.dumps({"result_dir": str(out), "config_hash": cfg.config_hash,
                      "partial": False}))
    return EXIT_OK


def cmd_analyze(args) -> int:
    try:
        spec = json.loads(Path(args.spec).read_text()) if args.spec else \
            {"analyses": [{"kind": "tail", "front": 0}]}
    except (OSError, json.JSONDecodeError) as e:
        return _error(f"bad analysis spec: {e}", EXIT_ANALYSIS)
    try:
        path = analyze(args.results, spec, out_dir=args.out)
    except (AnalysisError, ConfigError, FileNotFoundError) as e:
        return _error(str(e), EXIT_ANALYSIS)
    print(json.dumps({"verdicts": str(path)}))
    return EXIT_OK


def cmd_report(args) -> int:
    vpath = Path(args.results) / "verdicts.csv"
    hpath = Path(args.results) / "header.json"
    if not vpath.exists():
        return _error(f"no verdicts at {vpath}; run analyze first", EXIT_ANALYSIS)
    if hpath.exists():
        header = json.loads(hpath.read_text())
        sdict = header.get("spectral", {})
        print(f"config {header.get('config_hash')}  lambda={sdict.get('lambda'):.6g}  "
              f"partial={header.get('partial')}")
    for line in vpath.read_text().splitlines():
        print(line)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bbmlab",
                                description="branching Brownian motion laboratory")
    sub = p.add_subparsers(dest="verb", required=True)

    def add_common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="experiment config (JSON)")
            sp.add_argument("--seed", type=int, default=None, help="override the config seed")

    sp = sub.add_parser("validate", help="check Kato/compactness and the spectral gate")
    add_common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("spectral", help="print eigenvalue, ground state and constants")
    add_common(sp)
    sp.set_defaults(func=cmd_spectral)

    sp = sub.add_parser("run", help="run the replicate ensemble and persist results")
    add_common(sp)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--out", default=None, help="output directory (default under "
                                                "$BBMLAB_OUT_ROOT)")
    sp.add_argument("--checkpoint", action="append", type=float, default=None,
                    help="override the config checkpoints (repeatable)")
    sp.add_argument("--front", action="append", default=None,
                    help="override the config fronts with JSON specs (repeatable)")
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("analyze", help="run analyses over persisted results")
    sp.add_argument("results", help="result directory")
    sp.add_argument("--spec", default=None, help="analysis spec (JSON)")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("report", help="print the verdict table of a result directory")
    sp.add_argument("results")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
