"""Command-line entry point.

Exit codes: 0 success, 2 configuration error (including bad flags), 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .bayes_opt import SearchSpace, optimize, save_history
from .harness import ConfigError, Scenario, SuiteConfig
from .lstm import Dataset, DataScenario, LstmModel, generate_dataset
from .plant import PlantDivergence

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
NUMERIC_ERRORS = (PlantDivergence, FloatingPointError, np.linalg.LinAlgError, ArithmeticError)

log = logging.getLogger("fourwisd")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--preset", choices=harness.PRESETS, default="desk")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fourwisd", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one closed-loop scenario")
    _common(sim)
    sim.add_argument("--scenario", type=Path, help="scenario JSON")
    sim.add_argument("--estimator", choices=harness.ESTIMATORS)
    sim.add_argument("--noise", choices=harness.NOISE_CASES)
    sim.add_argument("--model", type=Path, help="LSTM checkpoint")

    gen = sub.add_parser("gen-data", help="record an estimator training dataset")
    _common(gen)

    tr = sub.add_parser("train", help="train the LSTM estimator")
    _common(tr)
    tr.add_argument("--data", type=Path, help="dataset directory (generated when omitted)")
    tr.add_argument("--hidden", type=int, default=None)

    tu = sub.add_parser("tune", help="Bayesian optimization of the training hyperparameters")
    _common(tu)
    tu.add_argument("--data", type=Path, help="dataset directory (generated when omitted)")
    tu.add_argument("--budget", type=int, default=100)
    tu.add_argument("--workers", type=int, default=1)
    tu.add_argument("--hidden", type=int, default=None)

    su = sub.add_parser("suite", help="estimators x noise cases experiment")
    _common(su)
    su.add_argument("--scenario", type=Path, help="suite config JSON")
    su.add_argument("--model", type=Path, help="LSTM checkpoint")
    su.add_argument("--workers", type=int, default=None)

    pl = sub.add_parser("plot", help="redraw SVGs for a run directory")
    pl.add_argument("--out", type=Path, required=True, help="run directory")
    return ap


def _seed(args, default: int = 0) -> int:
    return default if args.seed is None else args.seed


def _load_data(args) -> Dataset:
    if args.data is not None:
        try:
            return Dataset.load(args.data)
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot read dataset {args.data}: {exc}") from exc
    scn = (DataScenario.desk if args.preset == "desk" else DataScenario.paper)(_seed(args))
    return generate_dataset(scn, np.random.default_rng(_seed(args)))


def cmd_simulate(args) -> int:
    s = Scenario.load(args.scenario) if args.scenario else Scenario(preset=args.preset)
    over = {}
    if args.scenario is None:
        over["preset"] = args.preset
    for key in ("estimator", "noise", "seed"):
        if getattr(args, key) is not None:
            over[key] = getattr(args, key)
    if args.model is not None:
        over["model"] = str(args.model)
    if over:
        s = Scenario.from_dict({**s.to_dict(), **over})
    res = harness.run_closed_loop(s)
    d = harness.write_run(args.out, s, res)
    m = res.metrics
    print(f"wrote {d}  max departure {m.max_departure:.3f} m  force RMSE mean {np.mean(m.force_rmse):.1f} N")
    if res.failure:
        print(f"run failed: {res.failure}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_gen_data(args) -> int:
    data = _load_data(argparse.Namespace(data=None, preset=args.preset, seed=args.seed))
    path = data.save(args.out)
    print(json.dumps({"dir": str(path), "splits": data.sizes}, sort_keys=True))
    return EXIT_OK


def cmd_train(args) -> int:
    data = _load_data(args)
    model, hist, _ = harness.train_model(args.preset, _seed(args), args.hidden, data)
    args.out.mkdir(parents=True, exist_ok=True)
    model.save(args.out / "model.json")
    (args.out / "history.json").write_text(json.dumps(
        {"val_rmse": [float(v) for v in hist.val_rmse], "final_val_rmse": float(hist.final_val_rmse)}, indent=1))
    print(f"wrote {args.out / 'model.json'}  final validation RMSE {hist.final_val_rmse:.4f}")
    return EXIT_OK


def cmd_tune(args) -> int:
    if args.budget < 5:
        raise ConfigError("budget must be at least 5")
    data = _load_data(args)
    objective = harness.tuning_objective(data, args.preset, _seed(args), args.hidden)

    def report(i, pt, v):
        log.info("eval %d: %.5g", i, v)

    best, hist = optimize(objective, SearchSpace.table2(), args.budget, np.random.default_rng(_seed(args)),
                          workers=max(1, args.workers), on_eval=report)
    args.out.mkdir(parents=True, exist_ok=True)
    path = save_history(hist, args.out / "history.csv")
    (args.out / "best.json").write_text(json.dumps(best, indent=1, sort_keys=True) + "\n")
    i = hist.best_index
    print(f"wrote {path}  argmin iter {i}  objective {hist.values[i]:.6g}")
    return EXIT_OK


def cmd_suite(args) -> int:
    cfg = SuiteConfig.load(args.scenario) if args.scenario else SuiteConfig()
    over = {"preset": args.preset}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.model is not None:
        over["model"] = str(args.model)
    cfg = replace(cfg, **over)
    if "lstm" in cfg.estimators and (cfg.model is None or not Path(cfg.model).is_file()):
        raise ConfigError("the suite needs --model <checkpoint> for the lstm estimator")
    report = harness.run_experiment_suite(cfg, args.out, args.workers)
    failed = [k for k, r in report["runs"].items() if r["failure"]]
    print(f"wrote {args.out / 'report.json'}  runs {len(report['runs'])}  failed {failed or 'none'}")
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_plot(args) -> int:
    if not (args.out / "trajectory.csv").is_file():
        raise ConfigError(f"no trajectory.csv in {args.out}")
    for p in harness.plot_run(args.out):
        print(p)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "gen-data": cmd_gen_data, "train": cmd_train,
            "tune": cmd_tune, "suite": cmd_suite, "plot": cmd_plot}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
