"""End-to-end synthetic benchmark: pretrain, fine-tune, prune, fuse, compress, evaluate.

``run_bench`` returns everything in memory; ``write_outputs`` lays it out as
deterministic CSV/JSON files plus timing-bearing ``history.jsonl`` and
``manifest.json``.
"""

import configparser
import csv
import io
import json
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .applications import fuse, fuse_search, normalized_accuracy, storage_report
from .baselines import (
    TASK_ARITHMETIC_GRID,
    TIES_GRID,
    DareConfig,
    dare,
    task_arithmetic,
    ties_merge,
    weight_average,
)
from .bundle import compress, decode_bundle, encode_bundle, reconstruct
from .cmaes import SearchBudget
from .exceptions import InvalidArgumentError
from .harness import (
    MeanEvaluator,
    TinyModelSpec,
    accuracy_evaluator,
    finetune,
    make_tasks,
    pretrain,
)
from .params import apply, diff
from .pruning import nps_search, prune


def _floats(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    return tuple(float(x) for x in str(text).replace(" ", "").split(",") if x)


def _ints(text):
    if isinstance(text, (list, tuple)):
        return tuple(int(x) for x in text)
    return tuple(int(x) for x in str(text).replace(" ", "").split(",") if x)


@dataclass
class BenchConfig:
    tasks: int = 8
    ratio: float = 0.05
    subspaces: int = 8
    generations: int = 30
    stagnation: int = 10
    sigma: float = 0.3
    seed: int = 0
    workers: int = 1
    input_dim: int = 32
    hidden: tuple = (128, 128)
    classes: int = 4
    activation: str = "tanh"
    noise_sigma: float = 1.0
    pretrain_tasks: int = 4
    pretrain_steps: int = 2000
    finetune_steps: int = 500
    learning_rate: float = 0.05
    batch_size: int = 64
    calibration_fraction: float = 1.0
    sweep_ratios: tuple = (0.5, 0.2, 0.1, 0.05, 0.04)
    fusion_normalize: bool = False

    def __post_init__(self):
        self.hidden = _ints(self.hidden)
        self.sweep_ratios = _floats(self.sweep_ratios)
        if isinstance(self.fusion_normalize, str):
            self.fusion_normalize = self.fusion_normalize.strip().lower() in ("1", "true", "yes")
        if self.tasks < 1:
            raise InvalidArgumentError("tasks must be >= 1")

    @classmethod
    def from_mapping(cls, mapping):
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in mapping.items():
            key = key.strip().replace("-", "_")
            if key not in known:
                raise InvalidArgumentError(f"unknown bench setting {key!r}")
            default = known[key].default
            if isinstance(default, bool) or isinstance(default, tuple):
                kwargs[key] = value
            elif isinstance(default, int):
                kwargs[key] = int(float(value))
            elif isinstance(default, float):
                kwargs[key] = float(value)
            else:
                kwargs[key] = str(value)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path):
        """Read ``key = value`` lines (``#`` comments allowed, no sections needed)."""
        with open(os.fspath(path)) as fh:
            text = fh.read()
        parser = configparser.ConfigParser()
        parser.read_string("[bench]\n" + text)
        return cls.from_mapping(dict(parser["bench"]))

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["sweep_ratios"] = list(self.sweep_ratios)
        return d

    @property
    def model_spec(self):
        return TinyModelSpec((self.input_dim, *self.hidden, self.classes), self.activation)

    @property
    def budget(self):
        return SearchBudget(self.generations, self.stagnation or None)


@dataclass
class Zoo:
    spec: TinyModelSpec
    pre: object
    tasks: list
    fine_tuned: list
    calibration: list
    test: list


def build_zoo(cfg):
    """Pretrain on held-out tasks, then fine-tune one model per benchmark task."""
    task_kw = dict(input_dim=cfg.input_dim, class_count=cfg.classes, noise_sigma=cfg.noise_sigma)
    pre_tasks = make_tasks(cfg.pretrain_tasks, base_seed=10_000 + cfg.seed, **task_kw)
    tasks = make_tasks(cfg.tasks, base_seed=cfg.seed, **task_kw)
    spec = cfg.model_spec
    pre = pretrain(spec, pre_tasks, cfg.pretrain_steps, cfg.seed, cfg.learning_rate, cfg.batch_size)
    fts = [finetune(pre, t, cfg.finetune_steps, cfg.seed + 1 + i, cfg.learning_rate,
                    cfg.batch_size, cfg.activation) for i, t in enumerate(tasks)]
    cal = [accuracy_evaluator(t, "calibration", cfg.calibration_fraction, cfg.activation)
           for t in tasks]
    test = [accuracy_evaluator(t, "test", 1.0, cfg.activation) for t in tasks]
    return Zoo(spec, pre, tasks, fts, cal, test)


def search_tasks(zoo, cfg, ratio):
    """NPS search for every task at ``ratio``; returns the list of search outcomes."""
    return [nps_search(zoo.pre, ft, zoo.calibration[i], cfg.subspaces, ratio, cfg.budget,
                       seed=cfg.seed * 1000 + i, sigma=cfg.sigma, workers=cfg.workers)
            for i, ft in enumerate(zoo.fine_tuned)]


@dataclass
class BenchResult:
    config: BenchConfig
    comparison: list = field(default_factory=list)
    sweep: list = field(default_factory=list)
    storage: list = field(default_factory=list)
    report: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    bundle_bytes: bytes = b""


def _mean_eval(evaluators, ckpt):
    return [e.evaluate(ckpt) for e in evaluators]


def _grid_best(pre, build, lambdas, cal):
    """Best lambda on mean calibration accuracy (first wins ties)."""
    best = None
    for lam in lambdas:
        ckpt = build(lam)
        score = float(np.mean(_mean_eval(cal, ckpt)))
        if best is None or score > best[0]:
            best = (score, lam, ckpt)
    return best


def _collect_timing(outcomes_and_names, history):
    total = {"generations": 0, "t_pruning_s": 0.0, "t_validate_s": 0.0,
             "t_total_model_s": 0.0, "loop_wall_clock_s": 0.0, "wall_clock_s": 0.0,
             "searches": 0}
    for name, timing, records in outcomes_and_names:
        G = timing["generations"]
        total["searches"] += 1
        total["generations"] += G
        total["t_pruning_s"] += G * timing["t_pruning_mean_s"]
        total["t_validate_s"] += G * timing["t_validate_mean_s"]
        total["t_total_model_s"] += timing["t_total_model_s"]
        total["loop_wall_clock_s"] += timing["loop_wall_clock_s"]
        total["wall_clock_s"] += timing["wall_clock_s"]
        for rec in records:
            history.append({"search": name, **rec.to_dict()})
    return total


def run_bench(cfg, zoo=None):
    cfg = cfg if isinstance(cfg, BenchConfig) else BenchConfig(**cfg)
    zoo = zoo or build_zoo(cfg)
    pre, fts, cal, test = zoo.pre, zoo.fine_tuned, zoo.calibration, zoo.test
    names = [t.task_id for t in zoo.tasks]
    tvs = [diff(ft, pre) for ft in fts]
    D = len(pre)
    r = cfg.ratio
    timed = []

    ft_test = [test[i].evaluate(fts[i]) for i in range(len(fts))]

    def individual(models):
        return [test[i].evaluate(m) for i, m in enumerate(models)]

    rows = []

    def add_row(method, kind, hyper, accs):
        rows.append({"method": method, "kind": kind, "hyperparameters": hyper,
                     "per_task": accs, "mean": float(np.mean(accs)),
                     "normalized": normalized_accuracy(accs, ft_test)})

    add_row("pretrained", "individual", "", individual([pre] * len(fts)))
    add_row("fine_tuned", "individual", "", ft_test)

    magnitude = [prune(pre, tv, r)[1] for tv in tvs]
    add_row("magnitude_prune", "individual", f"r={r}", individual(magnitude))
    dared = [apply(pre, dare(tv, DareConfig(1 - r, cfg.seed * 1000 + i)))
             for i, tv in enumerate(tvs)] if r < 1 else list(fts)
    add_row("dare", "individual", f"p={1 - r:.4g}", individual(dared))

    outcomes = search_tasks(zoo, cfg, r)
    timed += [(f"nps:{names[i]}", o.timing, o.history) for i, o in enumerate(outcomes)]
    ptvs = [o.pruned for o in outcomes]
    add_row("nps_prune", "individual", f"r={r};M={cfg.subspaces}",
            individual([o.checkpoint for o in outcomes]))

    bundle = compress(pre, list(zip(names, ptvs)))
    blob = encode_bundle(bundle)
    restored = decode_bundle(blob)
    recon = [reconstruct(restored, n) for n in names]
    roundtrip = all(a.bit_equal(o.checkpoint) for a, o in zip(recon, outcomes))
    add_row("nps_compressed", "individual", f"r={r}", individual(recon))

    # merging baselines, lambda tuned on mean calibration accuracy
    wa = weight_average(fts)
    add_row("weight_average", "merged", "", individual([wa] * len(fts)))
    ta_score, ta_lam, ta = _grid_best(pre, lambda l: task_arithmetic(pre, tvs, l),
                                      TASK_ARITHMETIC_GRID, cal)
    add_row("task_arithmetic", "merged", f"lambda={ta_lam}", individual([ta] * len(fts)))
    ties_score, ties_lam, ties = _grid_best(pre, lambda l: ties_merge(pre, tvs, r, l),
                                            TIES_GRID, cal)
    add_row("ties", "merged", f"lambda={ties_lam};r={r}", individual([ties] * len(fts)))

    mean_cal = MeanEvaluator(cal)
    fusion = {}
    for label, normalize in (("nps_fusion", cfg.fusion_normalize),
                             ("nps_fusion_normalized", True), ("nps_fusion_unnormalized", False)):
        if label != "nps_fusion" and normalize == cfg.fusion_normalize:
            continue
        res = fuse_search(pre, ptvs, mean_cal, cfg.budget, seed=cfg.seed, sigma=cfg.sigma,
                          normalize=normalize, workers=cfg.workers)
        timed.append((f"fusion:{label}", res.timing, res.history))
        ones = fuse(pre, ptvs, None, normalize)
        fusion[label] = {
            "normalize": normalize,
            "lambdas": [round(float(x), 6) for x in res.lambdas],
            "calibration_mean": res.fitness,
            "calibration_mean_lambda_ones": float(np.mean(_mean_eval(cal, ones))),
            "test_mean_lambda_ones": float(np.mean(individual([ones] * len(fts)))),
        }
        lam_txt = "|".join(f"{x:.4f}" for x in res.lambdas)
        add_row(label, "merged", f"lambda={lam_txt};normalize={normalize}",
                individual([res.merged] * len(fts)))

    # sparsity sweep (individual pruned models)
    sweep = []
    for rr in cfg.sweep_ratios:
        mags = [prune(pre, tv, rr)[1] for tv in tvs]
        dares = [apply(pre, dare(tv, DareConfig(1 - rr, cfg.seed * 1000 + i)))
                 for i, tv in enumerate(tvs)] if rr < 1 else list(fts)
        if rr == r:
            nps_models = [o.checkpoint for o in outcomes]
        else:
            outs = search_tasks(zoo, cfg, rr)
            timed += [(f"nps_sweep:{rr}:{names[i]}", o.timing, o.history)
                      for i, o in enumerate(outs)]
            nps_models = [o.checkpoint for o in outs]
        for method, models in (("magnitude_prune", mags), ("dare", dares), ("nps_prune", nps_models)):
            sweep.append({
                "method": method, "ratio": rr,
                "mean_test_accuracy": float(np.mean(individual(models))),
                "mean_calibration_accuracy": float(np.mean(
                    [cal[i].evaluate(m) for i, m in enumerate(models)])),
            })

    # accuracy vs storage
    N = len(fts)
    sr = storage_report(N, D, D, 0, r)
    by_method = {row["method"]: row for row in rows}
    storage = [{"method": "fine_tuned", "bits": sr.fine_tuned_bits,
                "mean_test_accuracy": by_method["fine_tuned"]["mean"]}]
    for m in ("weight_average", "task_arithmetic", "ties", "nps_fusion"):
        storage.append({"method": m, "bits": sr.single_model_bits,
                        "mean_test_accuracy": by_method[m]["mean"]})
    storage.append({"method": "tallmask_ties", "bits": sr.tallmask_bits, "mean_test_accuracy": None})
    storage.append({"method": "nps_compression", "bits": sr.nps_bits,
                    "mean_test_accuracy": by_method["nps_compressed"]["mean"]})

    history = []
    timing = _collect_timing(timed, history)

    report = {
        # worker count changes timing only, so it stays out of the deterministic report
        "config": {k: v for k, v in cfg.to_dict().items() if k != "workers"},
        "n_params": D,
        "tasks": names,
        "nps": [{
            "task": names[i],
            "calibration_fine_tuned": cal[i].evaluate(fts[i]),
            "calibration_magnitude": o.initial_fitness,
            "calibration_nps": o.fitness,
            "weights": [round(float(w), 6) for w in o.weights],
            "kept": o.pruned.mask.kept,
            "generations": o.timing["generations"],
        } for i, o in enumerate(outcomes)],
        "fusion": fusion,
        "baseline_lambdas": {"task_arithmetic": ta_lam, "ties": ties_lam},
        "compression": {"roundtrip_bit_exact": roundtrip, "bundle_bytes": len(blob),
                        "stored_bits": bundle.stored_bits(), **sr.to_dict()},
    }
    return BenchResult(cfg, rows, sweep, storage, report, history, timing, blob)


# -- output ------------------------------------------------------------------

def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def comparison_csv(result):
    buf = io.StringIO()
    names = result.report["tasks"]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "kind", "hyperparameters", *names, "mean", "normalized"])
    for row in result.comparison:
        w.writerow([row["method"], row["kind"], row["hyperparameters"],
                    *(_fmt(a) for a in row["per_task"]), _fmt(row["mean"]),
                    _fmt(row["normalized"])])
    return buf.getvalue()


def _dict_csv(rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def sweep_csv(result):
    return _dict_csv(result.sweep, ["method", "ratio", "mean_test_accuracy",
                                    "mean_calibration_accuracy"])


def storage_csv(result):
    return _dict_csv(result.storage, ["method", "bits", "mean_test_accuracy"])


def write_outputs(result, out_dir, manifest=None):
    """Write all bench artifacts into ``out_dir``; returns the list of paths."""
    os.makedirs(out_dir, exist_ok=True)
    files = {
        "comparison.csv": comparison_csv(result),
        "sweep.csv": sweep_csv(result),
        "storage.csv": storage_csv(result),
        "report.json": json.dumps(result.report, indent=2, sort_keys=True) + "\n",
        "history.jsonl": "".join(json.dumps(h, sort_keys=True) + "\n" for h in result.history),
    }
    if manifest is not None:
        files["manifest.json"] = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    paths = []
    for name, text in files.items():
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            fh.write(text)
        paths.append(path)
    path = os.path.join(out_dir, "bundle.npsb")
    with open(path, "wb") as fh:
        fh.write(result.bundle_bytes)
    paths.append(path)
    return paths


def export_zoo(zoo, out_dir):
    """Write ``pre.npsc``, ``ft_<task>.npsc`` and ``data_<task>.npsc`` for CLI use."""
    from .harness import save_task_data
    from .params import save_checkpoint
    os.makedirs(out_dir, exist_ok=True)
    paths = [os.path.join(out_dir, "pre.npsc")]
    save_checkpoint(zoo.pre, paths[0])
    for task, ft in zip(zoo.tasks, zoo.fine_tuned):
        p = os.path.join(out_dir, f"ft_{task.task_id}.npsc")
        save_checkpoint(ft, p)
        d = os.path.join(out_dir, f"data_{task.task_id}.npsc")
        save_task_data(task, d)
        paths += [p, d]
    return paths
