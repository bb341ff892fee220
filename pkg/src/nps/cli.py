"""``nps`` command line.

Every command prints a JSON report (stdout, or ``--out``) that embeds a run
manifest, and a short human-readable table on stderr.

Exit codes: 2 bad flags/arguments, 3 file or parse errors, 4 structural
mismatch, 5 numeric or optimizer failure.
"""

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .applications import fuse, fuse_search, storage_report
from .baselines import TASK_ARITHMETIC_GRID, TIES_GRID, task_arithmetic, ties_merge, weight_average
from .bench import BenchConfig, build_zoo, export_zoo, run_bench, write_outputs
from .bundle import compress, load_bundle, reconstruct, save_bundle
from .cmaes import SearchBudget
from .exceptions import (
    DegenerateCoefficientsError,
    InvalidArgumentError,
    NPSError,
    NumericError,
    ParseError,
    SearchAbortedError,
    StructuralMismatchError,
    TaskNotFoundError,
)
from .harness import AccuracyEvaluator, MeanEvaluator, load_task_data
from .params import Checkpoint, diff, load_checkpoint, save_checkpoint
from .pruning import DEFAULT_RATIO, DEFAULT_SIGMA, nps_search, prune
from .subspace import DEFAULT_SUBSPACES, partition, reweight
from .validation import check_same_specs

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_STRUCTURE, EXIT_NUMERIC = 0, 2, 3, 4, 5
SEED_ENV = "NPS_SEED"


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    """What was run, with which inputs, and where the time went.

    ``timing.t_total_s`` is ``generations * (mean T_pruning + mean T_validate)``
    summed over searches; ``eq_consistent`` says whether it lies within 10% of
    the measured search wall clock.
    """

    command: str
    argv: list
    config: dict
    seeds: dict
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    version: str = __version__

    def to_dict(self):
        return asdict(self)


def timing_block(generations=0, t_pruning=0.0, t_validate=0.0, t_total=0.0, wall=0.0):
    """``wall`` is the measured time of the sampled generations."""
    ok = wall <= 0 or abs(t_total - wall) <= 0.1 * wall
    return {"generations": int(generations), "t_pruning_s": t_pruning, "t_validate_s": t_validate,
            "t_total_s": t_total, "search_wall_clock_s": wall, "eq_consistent": bool(ok)}


def _search_timing(t):
    G = t["generations"]
    return timing_block(G, G * t["t_pruning_mean_s"], G * t["t_validate_mean_s"],
                        t["t_total_model_s"], t["loop_wall_clock_s"])


def _merge_timing(blocks):
    keys = ("generations", "t_pruning_s", "t_validate_s", "t_total_s", "search_wall_clock_s")
    sums = [sum(b[k] for b in blocks) for k in keys]
    return timing_block(*sums)


# -- argument helpers --------------------------------------------------------

def _default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _float_list(text):
    try:
        return [float(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _count(text):
    """Non-negative integer; accepts ``1e6`` style."""
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if not np.isfinite(v) or v != int(v) or v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}")
    return int(v)


def _named(text):
    name, sep, path = text.partition("=")
    if not sep:
        path = name
        name = Path(text).stem
        for prefix in ("ft_", "data_"):
            if name.startswith(prefix):
                name = name[len(prefix):]
    if not name or not path:
        raise argparse.ArgumentTypeError(f"expected NAME=PATH, got {text!r}")
    return name, path


def _load_ckpt(path, inputs):
    inputs.append(str(path))
    return load_checkpoint(path)


def _evaluator(paths, split, activation, fraction, inputs):
    evs = []
    for name, path in paths:
        inputs.append(str(path))
        X, y = load_task_data(path)[split]
        k = max(1, int(round(fraction * len(y))))
        evs.append(AccuracyEvaluator(X[:k], y[:k], activation, name))
    return evs


def _budget(args):
    return SearchBudget(args.generations, args.stagnation or None)


# -- commands ----------------------------------------------------------------

def cmd_diff(args, man):
    pre = _load_ckpt(args.pre, man.inputs)
    ft = _load_ckpt(args.ft, man.inputs)
    tv = diff(ft, pre)
    v = tv.values
    if args.save:
        save_checkpoint(Checkpoint(tv.specs, v.astype(np.float32)), args.save)
        man.outputs.append(args.save)
    return {
        "n_params": len(tv), "nonzero": int(np.count_nonzero(v)),
        "l2_norm": float(np.linalg.norm(v)), "max_abs": float(np.max(np.abs(v))) if len(v) else 0.0,
        "per_tensor_l2": {n: float(np.linalg.norm(t)) for n, t in tv.tensors().items()},
    }


def cmd_search(args, man):
    pre = _load_ckpt(args.pre, man.inputs)
    ft = _load_ckpt(args.ft, man.inputs)
    evs = _evaluator(args.data, args.split, args.activation, args.fraction, man.inputs)
    ev = evs[0] if len(evs) == 1 else MeanEvaluator(evs)
    out = nps_search(pre, ft, ev, args.subspaces, args.ratio, _budget(args), seed=args.seed,
                     sigma=args.sigma, per_tensor=args.per_tensor, workers=args.workers)
    man.timing = _search_timing(out.timing)
    task = args.task or Path(args.ft).stem.removeprefix("ft_")
    if args.save:
        save_bundle(compress(pre, [(task, out.pruned)]), args.save)
        man.outputs.append(args.save)
    if args.save_model:
        save_checkpoint(out.checkpoint, args.save_model)
        man.outputs.append(args.save_model)
    if args.history:
        with open(args.history, "w") as fh:
            for rec in out.history:
                fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
        man.outputs.append(args.history)
    return {
        "task": task, "ratio": args.ratio, "subspaces": args.subspaces,
        "kept": out.pruned.mask.kept, "n_params": len(pre),
        "weights": [float(w) for w in out.weights],
        "initial_fitness": out.initial_fitness, "fitness": out.fitness,
        "generations": out.timing["generations"],
    }


def cmd_prune(args, man):
    pre = _load_ckpt(args.pre, man.inputs)
    ft = _load_ckpt(args.ft, man.inputs)
    tv = diff(ft, pre)
    weights = None
    if args.weights is not None:
        tv = reweight(tv, partition(tv, len(args.weights)), args.weights)
        weights = np.asarray(args.weights)
    ptv, ckpt = prune(pre, tv, args.ratio, weights)
    if args.save:
        save_checkpoint(ckpt, args.save)
        man.outputs.append(args.save)
    task = args.task or Path(args.ft).stem.removeprefix("ft_")
    if args.bundle:
        save_bundle(compress(pre, [(task, ptv)]), args.bundle)
        man.outputs.append(args.bundle)
    return {"task": task, "ratio": args.ratio, "kept": ptv.mask.kept, "n_params": len(pre),
            "weights": None if weights is None else weights.tolist()}


def _grid(pre, build, grid, ev):
    best = None
    for lam in grid:
        ck = build(lam)
        s = ev.evaluate(ck)
        if best is None or s > best[0]:
            best = (s, lam, ck)
    return best


def cmd_merge(args, man):
    pre = _load_ckpt(args.pre, man.inputs)
    ev = None
    if args.data:
        ev = MeanEvaluator(_evaluator(args.data, args.split, args.activation, args.fraction,
                                      man.inputs))
    result = {"method": args.method}
    if args.method == "nps":
        if not args.bundle:
            raise UsageError("merge --method nps needs --bundle")
        man.inputs.append(args.bundle)
        bundle = load_bundle(args.bundle)
        check_same_specs(pre, bundle.base)
        ptvs = [bundle.entries[n] for n in bundle.task_names]
        result["tasks"] = bundle.task_names
        if ev is not None and args.lam is None:
            res = fuse_search(pre, ptvs, ev, _budget(args), seed=args.seed, sigma=args.sigma,
                              normalize=args.normalize, workers=args.workers)
            merged, lam = res.merged, res.lambdas
            man.timing = _search_timing(res.timing)
            result["initial_fitness"] = res.initial_fitness
        else:
            lam = np.ones(len(ptvs)) if args.lam is None else np.asarray(args.lam)
            if len(lam) != len(ptvs):
                raise InvalidArgumentError(f"--lambda has {len(lam)} values for {len(ptvs)} tasks")
            merged = fuse(pre, ptvs, lam, args.normalize)
        result["lambdas"] = [float(x) for x in lam]
        result["normalize"] = args.normalize
    else:
        if not args.ft:
            raise UsageError(f"merge --method {args.method} needs --ft")
        fts = [_load_ckpt(p, man.inputs) for _, p in args.ft]
        tvs = [diff(f, pre) for f in fts]
        if args.lam is not None and len(args.lam) != 1:
            raise InvalidArgumentError("baseline merges take a single --lambda")
        if args.method == "weight-average":
            merged = weight_average(fts)
        else:
            if args.method == "task-arithmetic":
                build, grid = (lambda l: task_arithmetic(pre, tvs, l)), TASK_ARITHMETIC_GRID
            else:
                build, grid = (lambda l: ties_merge(pre, tvs, args.ratio, l)), TIES_GRID
            if args.lam is None and ev is not None:
                _, lam, merged = _grid(pre, build, grid, ev)
            else:
                lam = 1.0 if args.lam is None else args.lam[0]
                merged = build(lam)
            result["lambda"] = float(lam)
    if ev is not None:
        result["per_task"] = ev.per_task(merged)
        result["fitness"] = float(np.mean(result["per_task"]))
    if args.save:
        save_checkpoint(merged, args.save)
        man.outputs.append(args.save)
    return result


def cmd_compress(args, man):
    pre = _load_ckpt(args.pre, man.inputs)
    data = dict(args.data or [])
    entries, per_task, timings = [], {}, []
    for name, path in args.ft:
        ft = _load_ckpt(path, man.inputs)
        if name in data:
            ev = _evaluator([(name, data[name])], args.split, args.activation, args.fraction,
                            man.inputs)[0]
            out = nps_search(pre, ft, ev, args.subspaces, args.ratio, _budget(args),
                             seed=args.seed, sigma=args.sigma, workers=args.workers)
            ptv = out.pruned
            timings.append(_search_timing(out.timing))
            per_task[name] = {"method": "nps", "fitness": out.fitness,
                              "initial_fitness": out.initial_fitness}
        else:
            ptv, _ = prune(pre, diff(ft, pre), args.ratio)
            per_task[name] = {"method": "magnitude"}
        per_task[name]["kept"] = ptv.mask.kept
        entries.append((name, ptv))
    bundle = compress(pre, entries)
    if timings:
        man.timing = _merge_timing(timings)
    if args.save:
        save_bundle(bundle, args.save)
        man.outputs.append(args.save)
    sr = storage_report(len(entries), len(pre), len(pre), 0, args.ratio)
    return {"tasks": per_task, "stored_bits": bundle.stored_bits(),
            "file_bytes": os.path.getsize(args.save) if args.save else None, **sr.to_dict()}


def cmd_reconstruct(args, man):
    man.inputs.append(args.bundle)
    bundle = load_bundle(args.bundle)
    ckpt = reconstruct(bundle, args.task)
    if args.save:
        save_checkpoint(ckpt, args.save)
        man.outputs.append(args.save)
    return {"task": args.task, "kept": bundle.entries[args.task].mask.kept,
            "n_params": len(ckpt), "tasks_in_bundle": bundle.task_names}


def cmd_eval(args, man):
    if args.model:
        model = _load_ckpt(args.model, man.inputs)
    elif args.bundle and args.task:
        man.inputs.append(args.bundle)
        model = reconstruct(load_bundle(args.bundle), args.task)
    else:
        raise UsageError("eval needs --model, or --bundle with --task")
    evs = _evaluator(args.data, args.split, args.activation, args.fraction, man.inputs)
    accs = {e.name: e.evaluate(model) for e in evs}
    return {"split": args.split, "accuracy": accs, "mean": float(np.mean(list(accs.values())))}


def cmd_storage_report(args, man):
    return storage_report(args.n, args.p, args.p_prime, args.f, args.ratio).to_dict()


def cmd_bench(args, man):
    settings = {}
    if args.config:
        man.inputs.append(args.config)
        settings = BenchConfig.from_file(args.config).to_dict()
    for key in ("tasks", "ratio", "subspaces", "generations", "stagnation", "sigma", "workers",
                "calibration_fraction", "sweep_ratios", "fusion_normalize", "pretrain_steps",
                "finetune_steps", "activation"):
        value = getattr(args, key)
        if value is not None:
            settings[key] = value
    settings["seed"] = args.seed
    cfg = BenchConfig.from_mapping(settings) if settings else BenchConfig()
    man.config = cfg.to_dict()
    zoo = build_zoo(cfg)
    result = run_bench(cfg, zoo)
    t = result.timing
    man.timing = timing_block(t["generations"], t["t_pruning_s"], t["t_validate_s"],
                              t["t_total_model_s"], t["loop_wall_clock_s"])
    out_dir = args.out_dir
    man.outputs += write_outputs(result, out_dir)
    man.outputs.append(os.path.join(out_dir, "manifest.json"))
    if args.save_zoo:
        man.outputs += export_zoo(zoo, args.save_zoo)
    return {
        "out_dir": out_dir,
        "n_params": result.report["n_params"],
        "methods": {r["method"]: {"mean": r["mean"], "normalized": r["normalized"]}
                    for r in result.comparison},
        "compression_roundtrip_bit_exact": result.report["compression"]["roundtrip_bit_exact"],
    }


COMMANDS = {
    "diff": cmd_diff, "search": cmd_search, "prune": cmd_prune, "merge": cmd_merge,
    "compress": cmd_compress, "reconstruct": cmd_reconstruct, "eval": cmd_eval,
    "storage-report": cmd_storage_report, "bench": cmd_bench,
}


# -- parser ------------------------------------------------------------------

def _positive_int(text):
    v = _count(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _ratio(text):
    try:
        r = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (0 < r <= 1):
        raise argparse.ArgumentTypeError(f"ratio must lie in (0, 1], got {text}")
    return r


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help=f"random seed (default: ${SEED_ENV} or 0)")
    common.add_argument("--workers", type=_positive_int, default=None,
                        help="parallel candidate evaluations")
    common.add_argument("--out", help="write the JSON report here instead of stdout")
    common.add_argument("--manifest", help="also write the run manifest to this path")

    search = argparse.ArgumentParser(add_help=False)
    search.add_argument("--ratio", type=_ratio, default=DEFAULT_RATIO, help="kept fraction r")
    search.add_argument("--subspaces", type=_positive_int, default=DEFAULT_SUBSPACES,
                        help="number of subspaces M")
    search.add_argument("--generations", type=_count, default=30)
    search.add_argument("--stagnation", type=_count, default=10,
                        help="stop after this many generations without improvement (0: never)")
    search.add_argument("--sigma", type=float, default=DEFAULT_SIGMA)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--split", choices=("calibration", "test"), default="calibration")
    data.add_argument("--fraction", type=_ratio, default=1.0, help="share of the split to use")
    data.add_argument("--activation", choices=("tanh", "relu"), default="tanh")

    p = argparse.ArgumentParser(prog="nps", description="Neural parameter search toolkit")
    p.add_argument("--version", action="version", version=f"nps {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("diff", parents=[common], help="task vector statistics")
    s.add_argument("--pre", required=True)
    s.add_argument("--ft", required=True)
    s.add_argument("--save", help="write the task vector as a float32 checkpoint")

    s = sub.add_parser("search", parents=[common, search, data], help="NPS search for one task")
    s.add_argument("--pre", required=True)
    s.add_argument("--ft", required=True)
    s.add_argument("--data", type=_named, action="append", required=True,
                   help="dataset container (NAME=PATH or PATH); repeatable")
    s.add_argument("--task", help="task name stored in the bundle")
    s.add_argument("--per-tensor", action="store_true", help="rank magnitudes per tensor")
    s.add_argument("--save", help="write a one-task bundle")
    s.add_argument("--save-model", help="write the pruned checkpoint")
    s.add_argument("--history", help="write per-generation JSON lines")

    s = sub.add_parser("prune", parents=[common], help="top-r magnitude pruning")
    s.add_argument("--pre", required=True)
    s.add_argument("--ft", required=True)
    s.add_argument("--ratio", type=_ratio, default=DEFAULT_RATIO)
    s.add_argument("--weights", type=_float_list, help="subspace weights w_1..w_M")
    s.add_argument("--task")
    s.add_argument("--save", help="write the pruned checkpoint")
    s.add_argument("--bundle", help="write a one-task bundle")

    s = sub.add_parser("merge", parents=[common, search, data], help="merge task models")
    s.add_argument("--pre", required=True)
    s.add_argument("--method", choices=("nps", "weight-average", "task-arithmetic", "ties"),
                   default="nps")
    s.add_argument("--bundle", help="pruned task vectors (method nps)")
    s.add_argument("--ft", type=_named, action="append", help="fine-tuned checkpoints (baselines)")
    s.add_argument("--data", type=_named, action="append",
                   help="calibration data; enables lambda search")
    s.add_argument("--lambda", dest="lam", type=_float_list, help="coefficients")
    s.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=True,
                   help="divide by the coefficient sum")
    s.add_argument("--save", help="write the merged checkpoint")

    s = sub.add_parser("compress", parents=[common, search, data], help="build a bundle")
    s.add_argument("--pre", required=True)
    s.add_argument("--ft", type=_named, action="append", required=True,
                   help="NAME=PATH; repeatable")
    s.add_argument("--data", type=_named, action="append",
                   help="NAME=PATH calibration data; tasks with data are searched")
    s.add_argument("--save", help="bundle path")

    s = sub.add_parser("reconstruct", parents=[common], help="rebuild one task from a bundle")
    s.add_argument("--bundle", required=True)
    s.add_argument("--task", required=True)
    s.add_argument("--save", help="write the reconstructed checkpoint")

    s = sub.add_parser("eval", parents=[common, data], help="accuracy of a model")
    s.add_argument("--model")
    s.add_argument("--bundle")
    s.add_argument("--task")
    s.add_argument("--data", type=_named, action="append", required=True)
    s.set_defaults(split="test")

    s = sub.add_parser("storage-report", parents=[common], help="storage bit counts")
    s.add_argument("--n", type=_positive_int, required=True, help="number of tasks N")
    s.add_argument("--p", type=_count, required=True, help="total parameters P")
    s.add_argument("--p-prime", type=_count, required=True, help="trainable parameters P'")
    s.add_argument("--f", type=_count, required=True, help="frozen parameters F")
    s.add_argument("--ratio", type=_ratio, default=DEFAULT_RATIO)

    s = sub.add_parser("bench", parents=[common], help="full synthetic benchmark")
    s.add_argument("--config", help="key = value settings file")
    s.add_argument("--tasks", type=_positive_int)
    s.add_argument("--ratio", type=_ratio)
    s.add_argument("--subspaces", type=_positive_int)
    s.add_argument("--generations", type=_count)
    s.add_argument("--stagnation", type=_count)
    s.add_argument("--sigma", type=float)
    s.add_argument("--calibration-fraction", type=_ratio)
    s.add_argument("--sweep-ratios", type=_float_list)
    s.add_argument("--fusion-normalize", action=argparse.BooleanOptionalAction, default=None)
    s.add_argument("--pretrain-steps", type=_count)
    s.add_argument("--finetune-steps", type=_count)
    s.add_argument("--activation", choices=("tanh", "relu"))
    s.add_argument("--out-dir", default="bench_out")
    s.add_argument("--save-zoo", help="also export pre/fine-tuned checkpoints and datasets")
    return p


def _replay_argv(argv, seed):
    """argv with the effective seed pinned, so a re-run reproduces outputs."""
    argv = list(argv)
    if "--seed" in argv:
        i = argv.index("--seed")
        argv[i + 1:i + 2] = [str(seed)]
    elif not any(a.startswith("--seed=") for a in argv):
        argv += ["--seed", str(seed)]
    return argv


def _table(command, result, manifest):
    lines = [f"nps {command}"]
    for k, v in result.items():
        if isinstance(v, float):
            lines.append(f"  {k:<24} {v:.6g}")
        elif isinstance(v, (int, str, bool)) or v is None:
            lines.append(f"  {k:<24} {v}")
        elif isinstance(v, list) and len(v) <= 16 and all(isinstance(x, (int, float)) for x in v):
            lines.append(f"  {k:<24} " + " ".join(f"{x:.4g}" for x in v))
        elif isinstance(v, dict) and len(v) <= 16:
            for kk, vv in v.items():
                txt = f"{vv:.6g}" if isinstance(vv, float) else json.dumps(vv)
                lines.append(f"  {k + '.' + str(kk):<24} {txt}")
    t = manifest.timing
    if t.get("generations"):
        lines.append(f"  generations {t['generations']}, T_total {t['t_total_s']:.3f}s "
                     f"(wall {t['search_wall_clock_s']:.3f}s)")
    return "\n".join(lines)


def _execute(args, argv):
    if args.seed is None:
        args.seed = _default_seed()
    if getattr(args, "workers", None) is None and args.command != "bench":
        args.workers = 1
    config = {k: v for k, v in vars(args).items()
              if k not in ("command", "out", "manifest") and isinstance(v, (int, float, str, bool, list, type(None)))}
    man = RunManifest(args.command, _replay_argv(argv, args.seed), config, {"seed": args.seed})
    start = time.perf_counter()
    result = COMMANDS[args.command](args, man)
    man.timing.setdefault("command_wall_clock_s", time.perf_counter() - start)
    report = {"command": args.command, "result": result, "manifest": man.to_dict()}
    text = json.dumps(report, indent=2, sort_keys=True, default=_json_default) + "\n"
    if args.command == "bench":
        with open(os.path.join(args.out_dir, "manifest.json"), "w") as fh:
            fh.write(json.dumps(man.to_dict(), indent=2, sort_keys=True, default=_json_default) + "\n")
    if args.manifest:
        with open(args.manifest, "w") as fh:
            fh.write(json.dumps(man.to_dict(), indent=2, sort_keys=True, default=_json_default) + "\n")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(_table(args.command, result, man), file=sys.stderr)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        _execute(args, argv)
    except (NumericError, SearchAbortedError, DegenerateCoefficientsError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERIC, exc)
    except StructuralMismatchError as exc:
        return _fail(EXIT_STRUCTURE, exc)
    except (UsageError, InvalidArgumentError) as exc:
        return _fail(EXIT_USAGE, exc)
    except (ParseError, TaskNotFoundError, OSError) as exc:
        return _fail(EXIT_IO, exc)
    except NPSError as exc:
        return _fail(EXIT_IO, exc)
    return EXIT_OK


def _fail(code, exc):
    msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
    print(f"nps: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
