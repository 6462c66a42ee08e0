"""Fold metrics, the input-source ablation grid and the spatial hold-out runner.

Every model here is scored through ``predict_fold`` on a single ``Fold``; the
scoring code never holds a reference to rows from other partitions.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Fold, HedonicDataset, StreetRecord, apply_normalization, fit_normalization
from .models import TrainConfig, full_model_fit
from .spatial import make_split

ABLATION_MODELS = ("X", "S", "A", "XS", "XA", "XSA")
SCORED_FOLDS = ("validation", "test")


def model_label(inputs: str) -> str:
    return "+".join(inputs)


@dataclass(frozen=True)
class Metrics:
    mse: float
    r2: float  # percent; negative when worse than the fold mean
    n: int

    def __post_init__(self):
        if self.mse < 0:
            raise ValueError("mse must be >= 0")


def compute_metrics(y, pred) -> Metrics:
    """MSE and out-of-sample R^2 against the scored fold's own mean."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    if len(y) == 0:
        raise ValueError("cannot score an empty fold")
    if y.shape != pred.shape:
        raise ValueError("targets and predictions differ in length")
    rss = float(np.sum((y - pred) ** 2))
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 100.0 * (1.0 - rss / tss) if tss > 0 else float("nan")
    return Metrics(rss / len(y), r2, len(y))


@dataclass
class Evaluation:
    metrics: Metrics
    ids: list
    y: np.ndarray
    pred: np.ndarray

    def pairs(self):
        """(street_id, y, y_hat) triples for scatter plots."""
        return list(zip(self.ids, self.y.tolist(), self.pred.tolist()))


def evaluate_fold(model, fold: Fold) -> Evaluation:
    if len(fold) == 0:
        raise ValueError(f"fold {fold.name!r} is empty")
    pred = np.asarray(model.predict_fold(fold), dtype=np.float64)
    return Evaluation(compute_metrics(fold.y, pred), list(fold.ids), fold.y.copy(), pred)


def evaluate(model, dataset: HedonicDataset, plan, fold: str = "test") -> Evaluation:
    """Score ``model`` on one held-out partition of ``plan``."""
    if fold not in SCORED_FOLDS:
        raise ValueError(f"can only score validation or test, not {fold!r}")
    return evaluate_fold(model, dataset.fold(plan, fold))


def write_pairs(path, evaluation: Evaluation) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["street_id", "y", "y_hat"])
        for sid, y, p in evaluation.pairs():
            w.writerow([sid, repr(y), repr(p)])


# ---------------------------------------------------------------------------
# per-plan normalisation
# ---------------------------------------------------------------------------


def normalize_for_plan(dataset: HedonicDataset, plan):
    """Fit the attribute scaling on the plan's train rows and apply it to all.

    ``dataset`` must carry raw (untransformed) attribute values. Returns the
    scaled dataset and the fitted spec.
    """
    names = dataset.attribute_names
    records = [StreetRecord(sid, float(y), dict(zip(names, map(float, x))))
               for sid, y, x in zip(dataset.ids, dataset.y, dataset.X)]
    train_ids = set(plan.ids("train"))
    spec = fit_normalization([r for r in records if r.street_id in train_ids], names)
    scaled = apply_normalization(spec, records)
    X = np.stack([r.vector(names) for r in scaled])
    return replace(dataset, X=X), spec


# ---------------------------------------------------------------------------
# ablation grid
# ---------------------------------------------------------------------------


@dataclass
class CellRun:
    model: str
    depth: int | None
    seed: int
    test: Metrics
    train_mse: float
    best_epoch: int
    seconds: float


@dataclass
class AblationResult:
    """Median-over-seeds metrics per (inputs, depth).

    The attribute-only model has no CNN; its entry is keyed with depth None
    and reported under every depth column.
    """

    depths: tuple
    models: tuple
    seeds: tuple
    runs: list = field(default_factory=list)
    split_mode: str = "random_70_15_15"

    def _runs(self, model, depth):
        key_depth = None if model == "X" else depth
        return [r for r in self.runs if r.model == model and r.depth == key_depth]

    def cell(self, model: str, depth: int) -> Metrics:
        runs = self._runs(model, depth)
        if not runs:
            raise KeyError((model, depth))
        return Metrics(float(np.median([r.test.mse for r in runs])),
                       float(np.median([r.test.r2 for r in runs])), runs[0].test.n)

    def seed_r2(self, model: str, depth: int) -> dict:
        return {r.seed: r.test.r2 for r in self._runs(model, depth)}

    def train_mse(self, model: str, depth: int) -> float:
        return float(np.median([r.train_mse for r in self._runs(model, depth)]))

    def table(self) -> str:
        """Tab-separated grid: one row per model, MSE and R^2 per depth."""
        buf = io.StringIO()
        header = ["model"] + [f"{m}_d{d}" for d in self.depths for m in ("mse", "r2")]
        buf.write("\t".join(header) + "\n")
        for model in self.models:
            row = [model_label(model)]
            for d in self.depths:
                if model == "X" and d != self.depths[0]:
                    row += ["--", "--"]
                    continue
                c = self.cell(model, d)
                row += [f"{c.mse:.4f}", f"{c.r2:.2f}"]
            buf.write("\t".join(row) + "\n")
        buf.write(f"# split={self.split_mode} seeds={','.join(map(str, self.seeds))} "
                  f"reporting=median-of-seeds\n")
        return buf.getvalue()


def run_ablation(dataset: HedonicDataset, plan, depths=(4, 8, 13), seeds=(0, 1, 2),
                 models=ABLATION_MODELS, config: TrainConfig | None = None,
                 normalize: bool = True, log=None) -> AblationResult:
    """Train every (inputs, depth, seed) cell on the plan's train fold.

    All cells share the split and, for a given seed, the initial weights of
    any sub-network they have in common.
    """
    cfg = config or TrainConfig()
    if normalize:
        dataset, _ = normalize_for_plan(dataset, plan)
    train, val, test = (dataset.fold(plan, p) for p in ("train", "validation", "test"))
    result = AblationResult(tuple(depths), tuple(models), tuple(seeds), split_mode=plan.mode)
    for seed in seeds:
        run_cfg = replace(cfg, seed=int(seed))
        for model in models:
            for depth in ([None] if model == "X" else depths):
                t0 = time.perf_counter()
                fitted = full_model_fit(train, val, depth or 4, model, run_cfg)
                test_eval = evaluate_fold(fitted, test)
                train_mse = compute_metrics(train.y, fitted.predict_fold(train)).mse
                run = CellRun(model, depth, int(seed), test_eval.metrics, train_mse,
                              fitted.history.best_epoch, time.perf_counter() - t0)
                result.runs.append(run)
                if log:
                    log(f"{model_label(model)} depth={depth} seed={seed} "
                        f"r2={run.test.r2:.2f} ({run.seconds:.0f}s)")
    return result


@dataclass
class GeneralizationResult:
    random: AblationResult
    holdout: AblationResult

    def degradation(self, model: str, depth: int) -> float:
        """Median over seeds of (random-split R^2 - hold-out R^2)."""
        a = self.random.seed_r2(model, depth)
        b = self.holdout.seed_r2(model, depth)
        seeds = sorted(set(a) & set(b))
        if not seeds:
            raise KeyError((model, depth))
        return float(np.median([a[s] - b[s] for s in seeds]))

    def table(self) -> str:
        buf = io.StringIO()
        buf.write("model\tdepth\tr2_random\tr2_holdout\tdegradation\n")
        for model in self.holdout.models:
            for d in ([self.holdout.depths[0]] if model == "X" else self.holdout.depths):
                buf.write(f"{model_label(model)}\t{'--' if model == 'X' else d}\t"
                          f"{self.random.cell(model, d).r2:.2f}\t"
                          f"{self.holdout.cell(model, d).r2:.2f}\t"
                          f"{self.degradation(model, d):.2f}\n")
        return buf.getvalue()


def run_generalization(dataset: HedonicDataset, polygon, anchors, depths=(4,), seeds=(0, 1, 2),
                       models=("X", "XSA"), config: TrainConfig | None = None, split_seed: int = 0,
                       random_result: AblationResult | None = None, log=None) -> GeneralizationResult:
    """Compare a random split against a polygon hold-out with identical settings.

    ``random_result`` may be passed to reuse cells already trained on the
    random split (it must cover the requested models, depths and seeds).
    """
    holdout_plan = make_split(dataset.ids, "polygon_holdout", split_seed, polygon, anchors)
    if random_result is None:
        random_plan = make_split(dataset.ids, "random_70_15_15", split_seed)
        random_result = run_ablation(dataset, random_plan, depths, seeds, models, config, log=log)
    holdout = run_ablation(dataset, holdout_plan, depths, seeds, models, config, log=log)
    return GeneralizationResult(random_result, holdout)
