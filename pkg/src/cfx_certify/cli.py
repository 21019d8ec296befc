"""Command-line entry point: cfx-certify <command> [options]."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .cfx import CfxQuery, generate_cfx, generate_robust_cfx
from .data import (Dataset, DatasetError, load_dataset, make_synthetic, save_spec,
                   split_dataset, write_csv)
from .evaluation import (DeltaEstimateError, curve_to_csv, estimate_delta_max, evaluate,
                         validity_curve)
from .interval import PlausibleShiftSet, build_abstraction, inn_classify, inn_forward_bounds
from .milp import SolverError
from .network import ModelFormatError, ShapeError, classify, load_model, save_model
from .training import TrainConfig, TrainingDivergenceError, accuracy, retrain_incremental, train

log = logging.getLogger("cfx_certify")

EXIT_OK, EXIT_FAILURES, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
DEFAULT_FRACTIONS = "1,2,5,10,20,40,60,80,100"


class ConfigError(Exception):
    pass


# -- shared helpers ------------------------------------------------------------

def _positive(kind):
    def parse(text):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return parse


def _p_value(text):
    v = math.inf if text.strip().lower() in ("inf", "infinity") else float(text)
    if v < 0:
        raise argparse.ArgumentTypeError("p must lie in [0, inf]")
    return v


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def parse_grid(text: str) -> list[float]:
    """``"0.01,0.02,0.05"`` or ``"N@MAX"`` for N evenly spaced points in (0, MAX]."""
    if "@" in text:
        n, top = text.split("@", 1)
        n, top = int(n), float(top)
        if n < 1 or top <= 0:
            raise ConfigError(f"bad grid {text!r}")
        return [round(top * (i + 1) / n, 12) for i in range(n)]
    grid = _float_list(text)
    if not grid or any(d <= 0 for d in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("grid must be positive and strictly increasing")
    return grid


def _need(path, flag):
    if path is None:
        raise ConfigError(f"{flag} is required")
    if not Path(path).exists():
        raise ConfigError(f"{flag}: {path} does not exist")
    return path


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline="")


def _close(fh):
    if fh is not sys.stdout:
        fh.close()


def load_splits(args) -> tuple[Dataset, Dataset, Dataset, Dataset]:
    """(d1, d2, train, test): d1/d2 are the two halves of --data unless --data2 is given;
    train/test is the --split cut of d1. Everything is fixed by --seed."""
    _need(args.data, "--data")
    _need(args.spec, "--spec")
    data = load_dataset(args.data, args.spec)
    if getattr(args, "data2", None):
        d1 = data
        d2 = load_dataset(_need(args.data2, "--data2"), spec=data.spec)
    else:
        d1, d2 = split_dataset(data, 0.5, [args.seed, 1])
    tr, te = split_dataset(d1, args.split, [args.seed, 2])
    return d1, d2, tr, te


def _check_model(model, data: Dataset):
    if model.n_inputs != data.spec.n_encoded:
        raise ConfigError(f"model takes {model.n_inputs} inputs, spec encodes {data.spec.n_encoded} columns")


def _shifts(args) -> PlausibleShiftSet:
    if args.delta is None:
        raise ConfigError("--delta is required")
    if args.p != math.inf:
        raise ConfigError("only --p inf is supported for abstraction-based checks")
    return PlausibleShiftSet(args.delta, args.p, shift_biases=not args.fixed_biases)


def _train_config(args, prefix="") -> TrainConfig:
    get = lambda name: getattr(args, prefix + name)
    hidden = tuple(int(h) for h in str(get("hidden")).split(","))
    return TrainConfig(hidden if len(hidden) > 1 else hidden[0], get("lr"), get("batch_size"), get("epochs"),
                       args.seed, get("loss"))


def read_cfx_file(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def read_pairs(path, n_inputs: int) -> list[tuple[np.ndarray, np.ndarray | None]]:
    """Pairs from generate's JSON-lines output or from a CSV with x_<j> and xp_<j> columns."""
    text = Path(path).read_text()
    if not text.strip():
        return []
    if text.lstrip().startswith("{"):
        out = []
        for rec in read_cfx_file(path):
            xp = rec.get("x_prime")
            out.append((np.asarray(rec["x"], float), None if xp is None else np.asarray(xp, float)))
        return out
    rows = list(csv.DictReader(text.splitlines()))
    xs = [f"x_{j}" for j in range(n_inputs)]
    xps = [f"xp_{j}" for j in range(n_inputs)]
    if rows and any(c not in rows[0] for c in xs + xps):
        raise ConfigError(f"{path}: pair CSV needs columns x_0..x_{n_inputs - 1} and xp_0..xp_{n_inputs - 1}")
    try:
        return [(np.array([float(r[c]) for c in xs]), np.array([float(r[c]) for c in xps])) for r in rows]
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from None


# -- commands ------------------------------------------------------------

def cmd_make_data(args) -> int:
    rows, spec = make_synthetic(args.rows, seed=args.seed, shift=args.shift)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(rows, args.out)
    if args.spec:
        save_spec(spec, args.spec)
    return EXIT_OK


def cmd_train(args) -> int:
    d1, _, tr, te = load_splits(args)
    cfg = _train_config(args)
    model = train(tr, cfg, n_classes=len(d1.spec.classes))
    save_model(model, args.out)
    report = {"train_accuracy": accuracy(model, tr), "test_accuracy": accuracy(model, te),
              "n_train": len(tr), "n_test": len(te)}
    print(json.dumps(report))
    return EXIT_OK


def _generate_one(job):
    index, model, x, spec, frozen, robust, shifts, opts = job
    q = CfxQuery(model, x, spec=spec, frozen=frozen)
    if robust:
        res = generate_robust_cfx(q, shifts, opts["max_iter"], opts["eps_step"], opts["eps_max"])
    else:
        res = generate_cfx(q, 0.0)
    rec = {"index": index, "x": [float(v) for v in x], "c": q.c, "target": q.target}
    rec.update(res.to_dict())
    return rec


def cmd_generate(args) -> int:
    model = load_model(_need(args.model, "--model"))
    _, _, _, te = load_splits(args)
    _check_model(model, te)
    shifts = None if args.no_robust else _shifts(args)
    frozen = ()
    if args.frozen:
        try:
            frozen = tuple(te.spec.columns_of([n.strip() for n in args.frozen.split(",") if n.strip()]))
        except (KeyError, DatasetError) as e:
            raise ConfigError(f"--frozen: {e}") from None
    n = len(te) if args.instances is None else min(args.instances, len(te))
    opts = {"max_iter": args.max_iter, "eps_step": args.eps_step, "eps_max": args.eps_max}
    jobs = [(i, model, te.X[i], te.spec, frozen, not args.no_robust, shifts, opts) for i in range(n)]
    if args.jobs > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(_generate_one, jobs))
    else:
        records = [_generate_one(j) for j in jobs]
    fh = _open_out(args.out)
    try:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    finally:
        _close(fh)
    found = sum(r["x_prime"] is not None for r in records)
    log.info("%d of %d instances have a counterfactual", found, n)
    return EXIT_OK


def cmd_verify(args) -> int:
    model = load_model(_need(args.model, "--model"))
    shifts = _shifts(args)
    pairs = read_pairs(_need(args.pairs, "--pairs"), model.n_inputs)
    inn = build_abstraction(model, shifts)
    all_robust = True
    fh = _open_out(args.out)
    try:
        for i, (x, xp) in enumerate(pairs):
            if x.shape != (model.n_inputs,) or (xp is not None and xp.shape != (model.n_inputs,)):
                raise ConfigError(f"pair {i}: expected vectors of length {model.n_inputs}")
            c = classify(model, x)
            sound = inn_classify(inn, x) == c
            rec = {"index": i, "c": c, "sound": sound, "robust": False, "valid": None, "intervals": None}
            if xp is not None:
                lo, hi = inn_forward_bounds(inn, xp)
                rec["valid"] = classify(model, xp) == 1 - c
                rec["intervals"] = [[float(a), float(b)] for a, b in zip(lo, hi)]
                rec["robust"] = bool(sound and inn_classify(inn, xp) == 1 - c)
            all_robust &= rec["robust"]
            fh.write(json.dumps(rec) + "\n")
    finally:
        _close(fh)
    return EXIT_OK if all_robust else EXIT_FAILURES


def _cases(records):
    return [(np.asarray(r["x"], float), int(r["c"]),
             None if r["x_prime"] is None else np.asarray(r["x_prime"], float), int(r.get("target", 1 - r["c"])))
            for r in records]


def cmd_sweep(args) -> int:
    model = load_model(_need(args.model, "--model"))
    if args.grid is None:
        raise ConfigError("--grid is required")
    if args.p != math.inf:
        raise ConfigError("only --p inf is supported for abstraction-based checks")
    grid = parse_grid(args.grid)
    cases = _cases(read_cfx_file(_need(args.cfx, "--cfx")))
    curve = validity_curve(model, cases, grid, shift_biases=not args.fixed_biases)
    fh = _open_out(args.out)
    try:
        fh.write(curve_to_csv(curve, ("delta", "validity")))
    finally:
        _close(fh)
    return EXIT_OK


def cmd_estimate_delta(args) -> int:
    model = load_model(_need(args.model, "--model"))
    _, d2, _, te = load_splits(args)
    _check_model(model, te)
    cfg = _train_config(args, "retrain_")
    try:
        est = estimate_delta_max(model, d2, cfg, args.fractions, te.X, args.repeats, args.min_sound, args.p,
                                 args.seed)
    except DeltaEstimateError as e:
        log.error("%s", e)
        if args.out:
            fh = _open_out(args.out)
            fh.write(curve_to_csv(e.samples, ("fraction", "delta")))
            _close(fh)
        print(json.dumps({"delta_max": None, "error": str(e)}))
        return EXIT_FAILURES
    if args.out:
        fh = _open_out(args.out)
        fh.write(curve_to_csv(est.samples, ("fraction", "delta")))
        _close(fh)
    print(json.dumps(est.to_dict()))
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_model(_need(args.model, "--model"))
    d1, d2, tr, te = load_splits(args)
    _check_model(model, te)
    if args.model_after:
        after = load_model(_need(args.model_after, "--model-after"))
    else:
        both = Dataset(np.vstack([d1.X, d2.X]), np.concatenate([d1.y, d2.y]), d1.spec)
        after = retrain_incremental(model, both, _train_config(args, "retrain_"))
    if args.p != math.inf:
        raise ConfigError("only --p inf is supported for abstraction-based checks")
    grid = parse_grid(args.grid) if args.grid else None
    shifts = (PlausibleShiftSet(args.delta, shift_biases=not args.fixed_biases)
              if args.delta is not None else None)
    cases = _cases(read_cfx_file(_need(args.cfx, "--cfx")))
    report = evaluate(model, after, cases, shifts, reference=tr.X, k=args.k, deltas=grid)
    fh = _open_out(args.out)
    try:
        fh.write(report.to_json())
    finally:
        _close(fh)
    if args.curve:
        fh = _open_out(args.curve)
        fh.write(report.curve_csv())
        _close(fh)
    return EXIT_OK


# -- parser ------------------------------------------------------------

def _add_data(p, split=True):
    p.add_argument("--data", help="dataset CSV with a header row")
    p.add_argument("--spec", help="feature spec JSON")
    p.add_argument("--data2", help="second dataset for retraining (default: second half of --data)")
    if split:
        p.add_argument("--split", type=float, default=0.8, help="train fraction of the first half (default 0.8)")


def _add_train(p, prefix="", lr=0.1, epochs=100, batch=32, hidden="10"):
    dash = "--" + prefix.replace("_", "-")
    p.add_argument(dash + "hidden", dest=prefix + "hidden", default=hidden, help="hidden layer sizes, comma list")
    p.add_argument(dash + "lr", dest=prefix + "lr", type=float, default=lr)
    p.add_argument(dash + "batch-size", dest=prefix + "batch_size", type=_positive(int), default=batch)
    p.add_argument(dash + "epochs", dest=prefix + "epochs", type=int, default=epochs)
    p.add_argument(dash + "loss", dest=prefix + "loss", default="softmax-cross-entropy",
                   choices=["softmax-cross-entropy", "binary-cross-entropy"])


def _add_shift(p):
    p.add_argument("--delta", type=_positive(float), help="shift budget in the sup norm")
    p.add_argument("--p", type=_p_value, default=math.inf, help="norm of the shift set (only inf is supported)")
    _add_fixed_biases(p)


def _add_fixed_biases(p):
    p.add_argument("--fixed-biases", action="store_true", help="shift weights only, keep biases fixed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfx-certify",
                                     description="Certify and generate counterfactuals robust to model shifts.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="fixes every random choice")
    sub = parser.add_subparsers(dest="command", required=True)
    add = lambda name, help: sub.add_parser(name, help=help, parents=[common])

    p = add("make-data", "write a synthetic mixed-type dataset and its spec")
    p.add_argument("--out", required=True)
    p.add_argument("--spec")
    p.add_argument("--rows", type=_positive(int), default=1000)
    p.add_argument("--shift", type=float, default=0.0)
    p.set_defaults(func=cmd_make_data)

    p = add("train", "train a model on the first half of the data")
    _add_data(p)
    _add_train(p)
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(func=cmd_train)

    p = add("verify", "check (x, x') pairs for robustness")
    p.add_argument("--model")
    p.add_argument("--pairs", help="pair CSV (x_j, xp_j columns) or generate's JSON lines")
    _add_shift(p)
    p.add_argument("--out", help="JSON-lines verdicts (default stdout)")
    p.set_defaults(func=cmd_verify)

    p = add("generate", "generate counterfactuals for test instances")
    p.add_argument("--model")
    _add_data(p)
    _add_shift(p)
    p.add_argument("--eps-step", type=_positive(float), default=0.2)
    p.add_argument("--eps-max", type=float, default=20.0)
    p.add_argument("--max-iter", type=_positive(int))
    p.add_argument("--instances", type=_positive(int), help="number of test instances (default all)")
    p.add_argument("--frozen", help="comma list of feature names that must not change")
    p.add_argument("--no-robust", action="store_true", help="plain closest counterfactuals")
    p.add_argument("--jobs", type=_positive(int), default=1)
    p.add_argument("--out", help="JSON-lines results (default stdout)")
    p.set_defaults(func=cmd_generate)

    p = add("sweep", "validity of a counterfactual file over a delta grid")
    p.add_argument("--model")
    p.add_argument("--cfx", help="generate's JSON-lines output")
    p.add_argument("--grid", help='comma list of deltas, or "N@MAX"')
    p.add_argument("--p", type=_p_value, default=math.inf)
    _add_fixed_biases(p)
    p.add_argument("--out", help="CSV with delta,validity rows (default stdout)")
    p.set_defaults(func=cmd_sweep)

    p = add("estimate-delta", "estimate delta_max by retraining on fractions of the second half")
    p.add_argument("--model")
    _add_data(p)
    p.add_argument("--fractions", type=_float_list, default=_float_list(DEFAULT_FRACTIONS),
                   help="retraining fractions in percent")
    p.add_argument("--repeats", type=_positive(int), default=5)
    p.add_argument("--min-sound", type=_positive(int), default=50)
    p.add_argument("--p", type=_p_value, default=math.inf)
    _add_train(p, "retrain_", lr=0.005, epochs=1, batch=1)
    p.add_argument("--out", help="CSV with fraction,delta rows")
    p.set_defaults(func=cmd_estimate_delta)

    p = add("eval", "validity, distance and plausibility report for a counterfactual file")
    p.add_argument("--model")
    p.add_argument("--model-after", help="shifted model (default: retrain on both halves)")
    p.add_argument("--cfx", help="generate's JSON-lines output")
    _add_data(p)
    _add_shift(p)
    p.add_argument("--grid", help="delta grid for the validity curve")
    p.add_argument("--k", type=_positive(int), default=20, help="LOF neighbours")
    _add_train(p, "retrain_", lr=0.1, epochs=20)
    p.add_argument("--out", help="report JSON (default stdout)")
    p.add_argument("--curve", help="CSV with delta,validity rows")
    p.set_defaults(func=cmd_eval)
    return parser


def _configure_logging():
    level = os.environ.get("CFX_CERTIFY_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, DatasetError, ModelFormatError, ShapeError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, TrainingDivergenceError, MemoryError) as e:
        print(f"solver error: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
