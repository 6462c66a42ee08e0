"""Command line pipeline: synth/ingest -> features -> split -> train -> evaluate -> export.

Settings resolve in this order, later winning: built-in defaults, the
``--config`` key=value file, the ``HEDONIA_SEED`` / ``HEDONIA_OUT``
environment variables, then explicit flags. Each run writes into
``<out>/<command>-<config hash>/`` and refuses to reuse an existing
directory unless ``--force`` is given.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import shutil
import sys
import time
from dataclasses import asdict
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import __version__
from .boosting import GbtConfig, gbt_fit
from .data import (ATTRIBUTES, DataError, aggregate_to_streets, attach_attributes,
                   build_dataset, load_image_manifest, read_streets, read_transactions,
                   write_image, write_manifest, write_streets, write_transactions)
from .evaluation import (ABLATION_MODELS, compute_metrics, evaluate_fold, normalize_for_plan,
                         run_ablation, write_pairs)
from .export import (rank_images, score_map, write_geojson, write_ranking,
                     write_score_table, write_skipped)
from .gam import GamError, format_gam_report, gam_fit
from .models import (CnnSpec, HybridChain, RankDeficientError, TrainConfig, VisualNet,
                     format_ols_report, full_model_fit, hybrid_linear_fit, ols_fit, two_stage_train)
from .nn import NonFiniteError
from .spatial import (GeometryError, make_split, read_pois, read_polygon, read_segments, read_split,
                      street_features, write_pois, write_segments, write_split)
from .synth import SynthConfig, synth_generate

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# flat RunConfig namespace: name -> (type, default)
DEFAULTS = {
    "seed": (int, 0),
    "out": (str, "runs"),
    "transactions": (str, None),
    "segments": (str, None),
    "pois": (str, None),
    "manifest": (str, None),
    "streets": (str, None),
    "anchors": (str, None),
    "split": (str, None),
    "polygon": (str, None),
    "run": (str, None),
    "scores": (str, None),
    "model": (str, "ols"),
    "inputs": (str, "XSA"),
    "interpretable": (str, "ols"),
    "cnn_depth": (int, 4),
    "depths": (str, "4,8,13"),
    "seeds": (str, "0,1,2"),
    "models": (str, ",".join(ABLATION_MODELS)),
    "split_mode": (str, "random"),
    "epochs": (int, 80),
    "learning_rate": (float, 0.001),
    "batch_size": (int, 32),
    "image_side": (int, 64),
    "n_streets": (int, 1000),
    "noise_sd": (float, 0.1),
    "visual_mode": (str, "active"),
    "visual_range": (float, 0.5),
    "k": (int, 10),
}

PATH_KEYS = ("transactions", "segments", "pois", "manifest", "streets", "anchors", "split",
             "polygon", "scores")

COMMAND_KEYS = {
    "synth": ("seed", "n_streets", "noise_sd", "visual_mode", "visual_range", "image_side"),
    "ingest": ("transactions",),
    "features": ("streets", "segments", "pois"),
    "split": ("streets", "anchors", "split_mode", "polygon", "seed"),
    "train": ("streets", "manifest", "split", "model", "inputs", "interpretable", "cnn_depth",
              "epochs", "learning_rate", "batch_size", "image_side", "seed"),
    "evaluate": ("run",),
    "ablate": ("streets", "manifest", "split", "anchors", "polygon", "split_mode", "depths",
               "seeds", "models", "epochs", "learning_rate", "batch_size", "image_side", "seed"),
    "score-map": ("run", "manifest", "anchors"),
    "rank": ("scores", "k"),
}
REQUIRED = {
    "ingest": ("transactions",),
    "features": ("streets", "segments", "pois"),
    "split": ("streets",),
    "train": ("streets", "manifest", "split"),
    "evaluate": ("run",),
    "ablate": ("streets", "manifest"),
    "score-map": ("run", "manifest", "anchors"),
    "rank": ("scores",),
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; dashes in keys allowed."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as err:
        raise ConfigError(f"cannot read config file: {err}") from None
    for num, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{num}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _coerce(key, value):
    if key not in DEFAULTS:
        raise ConfigError(f"unknown setting {key!r}")
    kind = DEFAULTS[key][0]
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"setting {key!r}: cannot parse {value!r} as {kind.__name__}") from None


def resolve_config(command: str, flags: dict, env=None) -> dict:
    env = os.environ if env is None else env
    cfg = {k: d for k, (_, d) in DEFAULTS.items()}
    if flags.get("config"):
        for k, v in read_config_file(flags["config"]).items():
            cfg[k] = _coerce(k, v)
    if env.get("HEDONIA_SEED"):
        cfg["seed"] = _coerce("seed", env["HEDONIA_SEED"])
    if env.get("HEDONIA_OUT"):
        cfg["out"] = env["HEDONIA_OUT"]
    for k, v in flags.items():
        if k in DEFAULTS and v is not None:
            cfg[k] = _coerce(k, v)
    for key in REQUIRED.get(command, ()):
        if not cfg.get(key):
            raise ConfigError(f"{command}: --{key.replace('_', '-')} is required")
    for key in PATH_KEYS + ("run",):
        if key in COMMAND_KEYS[command] and cfg.get(key) and not Path(cfg[key]).exists():
            raise ConfigError(f"{key} path does not exist: {cfg[key]}")
    return cfg


def _file_digest(path) -> str:
    h = hashlib.sha256()
    p = Path(path)
    files = sorted(q for q in p.rglob("*") if q.is_file() and q.name != "run.json") if p.is_dir() else [p]
    for q in files:
        h.update(str(q.relative_to(p) if p.is_dir() else q.name).encode())
        h.update(q.read_bytes())
    return h.hexdigest()


def _manifest_digest(path) -> str:
    """Digest of a manifest plus every image file it points at."""
    path = Path(path)
    h = hashlib.sha256(path.read_bytes())
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            for col in ("street_image_path", "aerial_image_path"):
                img = path.parent / row.get(col, "")
                h.update(row.get(col, "").encode())
                h.update(img.read_bytes() if img.is_file() else b"<missing>")
    return h.hexdigest()


def config_hash(command: str, cfg: dict) -> str:
    """Hash of the settings a command uses, with input files replaced by content digests."""
    doc = {"command": command, "version": __version__}
    for key in COMMAND_KEYS[command]:
        value = cfg.get(key)
        if key == "manifest" and value:
            value = _manifest_digest(value)
        elif key in PATH_KEYS + ("run",) and value:
            value = _file_digest(value)
        doc[key] = value
    blob = json.dumps(doc, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


class Run:
    """Output directory of one invocation plus its metadata record."""

    def __init__(self, command: str, cfg: dict, force: bool = False):
        self.command = command
        self.cfg = cfg
        self.hash = config_hash(command, cfg)
        self.dir = Path(cfg["out"]) / f"{command}-{self.hash}"
        if self.dir.exists():
            if not force:
                raise ConfigError(f"run directory {self.dir} exists; use --force to replace it")
            shutil.rmtree(self.dir)
        self.dir.mkdir(parents=True)
        self.timings = {}
        self._t0 = time.perf_counter()

    def path(self, name: str) -> Path:
        return self.dir / name

    def timed(self, label):
        run = self

        class _Timer:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[label] = round(time.perf_counter() - self.t, 3)

        return _Timer()

    @property
    def header(self) -> str:
        return f"config_hash={self.hash}"

    def finish(self, extra: dict | None = None) -> None:
        self.timings["total"] = round(time.perf_counter() - self._t0, 3)
        meta = {
            "command": self.command,
            "config_hash": self.hash,
            "seed": self.cfg["seed"],
            "config": {k: self.cfg.get(k) for k in COMMAND_KEYS[self.command]},
            "version": __version__,
            "timings_seconds": self.timings,
            **(extra or {}),
        }
        self.path("run.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
        print(self.dir)


def _list(text: str, kind=str):
    return [kind(x) for x in str(text).replace(" ", "").split(",") if x]


# ---------------------------------------------------------------------------
# shared loaders
# ---------------------------------------------------------------------------


def _read_anchors(path) -> dict:
    with open(path, newline="") as fh:
        return {r["street_id"]: (float(r["x"]), float(r["y"])) for r in csv.DictReader(fh)}


def _write_anchors(path, anchors: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["street_id", "x", "y"])
        for sid, (x, y) in anchors.items():
            w.writerow([sid, repr(float(x)), repr(float(y))])


def _load_images(path, side):
    samples, errors = load_image_manifest(path, side)
    for s in samples:  # PNG pixels are multiples of 1/255; keep them compact
        s.street_image = np.rint(s.street_image * 255).astype(np.uint8)
        s.aerial_image = np.rint(s.aerial_image * 255).astype(np.uint8)
    return samples, errors


def _load_dataset(cfg):
    streets = read_streets(cfg["streets"])
    missing = [a for a in ATTRIBUTES if a not in streets[0].attrs] if streets else list(ATTRIBUTES)
    if missing:
        raise DataError(f"streets file lacks attributes {missing}; run features first")
    images = None
    if cfg.get("manifest"):
        images, errors = _load_images(cfg["manifest"], cfg["image_side"])
        for e in errors:
            print(f"warning: manifest row {e.row} ({e.street_id}): {e.message}", file=sys.stderr)
    return build_dataset(streets, images)


def _train_config(cfg) -> TrainConfig:
    return TrainConfig(epochs=cfg["epochs"], learning_rate=cfg["learning_rate"],
                       batch_size=cfg["batch_size"], seed=cfg["seed"])


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(run: Run) -> None:
    cfg = run.cfg
    with run.timed("generate"):
        try:
            city = synth_generate(SynthConfig(
                n_streets=cfg["n_streets"], seed=cfg["seed"], noise_sd=cfg["noise_sd"],
                image_side=cfg["image_side"], visual_mode=cfg["visual_mode"],
                visual_range=cfg["visual_range"]))
        except ValueError as err:
            raise ConfigError(str(err)) from None
    with run.timed("write"):
        write_transactions(run.path("transactions.csv"), city.transactions)
        write_segments(run.path("segments.csv"), city.segments)
        write_pois(run.path("pois.csv"), city.pois)
        (run.dir / "images").mkdir()
        for im in city.images:
            write_image(run.dir / im.street_path, im.street_image)
            write_image(run.dir / im.aerial_path, im.aerial_image)
        write_manifest(run.path("manifest.csv"), city.images)
        with open(run.path("truth.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["street_id", "v_star", "g_v_star"])
            for sid, v in city.truth.latent_visual.items():
                w.writerow([sid, repr(v), repr(float(city.truth.g(v)))])
    run.finish({"n_transactions": len(city.transactions), "n_images": len(city.images)})


def cmd_ingest(run: Run) -> None:
    with run.timed("aggregate"):
        streets = aggregate_to_streets(read_transactions(run.cfg["transactions"]))
    if not streets:
        raise DataError("no transactions to aggregate")
    write_streets(run.path("streets.csv"), streets)
    run.finish({"n_streets": len(streets)})


def cmd_features(run: Run) -> None:
    cfg = run.cfg
    streets = read_streets(cfg["streets"])
    with run.timed("features"):
        feats = street_features(read_segments(cfg["segments"]), read_pois(cfg["pois"]))
    extra = {sid: {k: f[k] for k in ("park", "shops", "gravity")} for sid, f in feats.items()}
    write_streets(run.path("streets.csv"), attach_attributes(streets, extra))
    _write_anchors(run.path("anchors.csv"),
                   {sid: (f["anchor_x"], f["anchor_y"]) for sid, f in feats.items()})
    with open(run.path("bearings.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["street_id", "bearing"])
        for sid, f in feats.items():
            w.writerow([sid, repr(f["bearing"])])
    run.finish({"n_streets": len(streets), "n_segments": len(feats)})


def _make_plan(cfg, ids):
    mode = cfg["split_mode"]
    if mode == "random":
        return make_split(ids, "random_70_15_15", cfg["seed"])
    if mode == "polygon":
        if not cfg.get("polygon") or not cfg.get("anchors"):
            raise ConfigError("polygon split needs --polygon and --anchors")
        anchors = _read_anchors(cfg["anchors"])
        return make_split(ids, "polygon_holdout", cfg["seed"], read_polygon(cfg["polygon"]), anchors)
    raise ConfigError(f"unknown split mode {mode!r} (random or polygon)")


def cmd_split(run: Run) -> None:
    ids = [s.street_id for s in read_streets(run.cfg["streets"])]
    plan = _make_plan(run.cfg, ids)
    write_split(run.path("split.csv"), plan)
    run.finish({"sizes": plan.sizes(), "mode": plan.mode})


def cmd_train(run: Run) -> None:
    cfg = run.cfg
    model_kind = cfg["model"]
    if model_kind not in ("ols", "gam", "gbt", "net", "hybrid"):
        raise ConfigError(f"unknown model {model_kind!r} (ols, gam, gbt, net, hybrid)")
    raw = _load_dataset(cfg)
    plan = read_split(cfg["split"])
    ds, spec = normalize_for_plan(raw, plan)
    train, val, test = (ds.fold(plan, p) for p in ("train", "validation", "test"))
    names = ds.attribute_names
    report, predictor, extra = None, None, {}
    with run.timed("fit"):
        if model_kind == "ols":
            predictor = ols_fit(train.X, train.y, names)
            report = format_ols_report(predictor)
        elif model_kind == "gam":
            predictor = gam_fit(train.X, train.y, names)
            report = format_gam_report(predictor)
        elif model_kind == "gbt":
            predictor = gbt_fit(train.X, train.y, GbtConfig(seed=cfg["seed"]))
            report = predictor.dump()
        elif model_kind == "net":
            fitted = full_model_fit(train, val, cfg["cnn_depth"], cfg["inputs"], _train_config(cfg))
            fitted.model.save(run.path("weights.hdnw"))
            predictor = fitted
            extra["best_epoch"] = fitted.history.best_epoch
        else:
            result = two_stage_train(train, val, cfg["cnn_depth"], _train_config(cfg))
            result.visual.save(run.path("visual.hdnw"))
            p_train = result.proxy_for(train.ids)
            kind = cfg["interpretable"]
            if kind == "ols":
                base = ols_fit(train.X, train.y, names)
                head = hybrid_linear_fit(train.X, p_train, train.y, names)
                report = format_ols_report(base, head)
                extra["gamma"] = head.gamma
                (run.path("linear.json")).write_text(json.dumps(
                    {"names": list(head.names), "beta0": head.beta0, "beta": head.beta.tolist(),
                     "gamma": head.gamma}, indent=1) + "\n")
            elif kind == "gam":
                base = gam_fit(train.X, train.y, names)
                head = gam_fit(train.X, train.y, names, proxy=p_train)
                report = format_gam_report(base, head)
            elif kind == "gbt":
                head = gbt_fit(train.X, train.y, GbtConfig(seed=cfg["seed"]), proxy=p_train)
                report = head.dump()
            else:
                raise ConfigError(f"unknown interpretable model {kind!r} (ols, gam, gbt)")
            predictor = HybridChain(result.visual, head)
            extra["best_epoch"] = result.history.best_epoch
    with open(run.path("normalization.json"), "w") as fh:
        json.dump(asdict(spec), fh, indent=1, sort_keys=True)
        fh.write("\n")
    if report:
        run.path("report.txt").write_text(report)
    with run.timed("predict"):
        for fold in (val, test):
            ev = evaluate_fold(predictor, fold)
            if not np.all(np.isfinite(ev.pred)):
                raise NonFiniteError("non-finite predictions")
            write_pairs(run.path(f"predictions_{fold.name}.csv"), ev)
    run.finish({"model": model_kind, **extra})


def _read_pairs(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["y"]) for r in rows]), np.array([float(r["y_hat"]) for r in rows])


def cmd_evaluate(run: Run) -> None:
    src = Path(run.cfg["run"])
    lines = [f"# {run.header} source={src.name}", "fold\tn\tmse\tr2"]
    for fold in ("validation", "test"):
        path = src / f"predictions_{fold}.csv"
        if not path.exists():
            raise DataError(f"{path} missing; evaluate needs a train run directory")
        m = compute_metrics(*_read_pairs(path))
        lines.append(f"{fold}\t{m.n}\t{m.mse:.6f}\t{m.r2:.4f}")
    run.path("metrics.tsv").write_text("\n".join(lines) + "\n")
    print("\n".join(lines[1:]), file=sys.stderr)
    run.finish()


def cmd_ablate(run: Run) -> None:
    cfg = run.cfg
    raw = _load_dataset(cfg)
    plan = read_split(cfg["split"]) if cfg.get("split") else _make_plan(cfg, raw.ids)
    models = _list(cfg["models"])
    bad = [m for m in models if m not in ABLATION_MODELS]
    if bad:
        raise ConfigError(f"unknown ablation models {bad}")
    with run.timed("ablation"):
        result = run_ablation(raw, plan, _list(cfg["depths"], int), _list(cfg["seeds"], int), models,
                              _train_config(cfg), log=lambda s: print(s, file=sys.stderr))
    table = f"# {run.header}\n" + result.table()
    run.path("ablation.tsv").write_text(table)
    sys.stderr.write(table)
    run.finish({"split_mode": plan.mode, "replicates": "median over seeds"})


def _load_hybrid(run_dir: Path, side: int):
    meta = json.loads((run_dir / "run.json").read_text())
    if meta.get("command") != "train" or meta.get("model") != "hybrid":
        raise ConfigError(f"{run_dir} is not a hybrid train run")
    lin_path = run_dir / "linear.json"
    if not lin_path.exists():
        raise ConfigError("score maps need a hybrid run with the linear interpretable model")
    depth = meta["config"]["cnn_depth"]
    side = meta["config"].get("image_side", side)
    vis = VisualNet(CnnSpec(depth=depth, side=side))
    vis.load(run_dir / "visual.hdnw")
    lin = json.loads(lin_path.read_text())
    return HybridChain(vis, SimpleNamespace(gamma=float(lin["gamma"]))), side


def cmd_score_map(run: Run) -> None:
    cfg = run.cfg
    chain, side = _load_hybrid(Path(cfg["run"]), cfg["image_side"])
    images, errors = _load_images(cfg["manifest"], side)
    anchors = _read_anchors(cfg["anchors"])
    with run.timed("score"):
        smap = score_map(chain, images, anchors, {"config_hash": run.hash})
    smap.skipped += [(e.street_id, f"unreadable: {e.message}") for e in errors]
    smap.skipped.sort()
    write_geojson(run.path("score_map.geojson"), smap)
    write_score_table(run.path("scores.csv"), smap, run.header)
    write_skipped(run.path("skipped.csv"), smap)
    paths = {im.street_id: im.street_path for im in images}
    with open(run.path("image_paths.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["street_id", "image_path"])
        for e in smap.entries:
            w.writerow([e.street_id, paths[e.street_id]])
    run.finish({"n_scored": len(smap), "n_skipped": len(smap.skipped), "gamma": smap.gamma})


def cmd_rank(run: Run) -> None:
    cfg = run.cfg
    scores_path = Path(cfg["scores"])
    with open(scores_path, newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    # gamma * v-hat is sign-aligned with price, unlike the raw proxy
    scores = {r["street_id"]: float(r["contribution"]) for r in rows}
    paths = {}
    side = scores_path.parent / "image_paths.csv"
    if side.exists():
        with open(side, newline="") as fh:
            paths = {r["street_id"]: r["image_path"] for r in csv.DictReader(fh)}
    k = cfg["k"]
    try:
        ranking = rank_images(scores, k, paths)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    write_ranking(run.path("ranking.csv"), ranking, run.header)
    run.finish({"k": k})


COMMANDS = {
    "synth": (cmd_synth, "generate a synthetic city (transactions, geometry, images, truth)"),
    "ingest": (cmd_ingest, "aggregate transactions to street records"),
    "features": (cmd_features, "add park/shops/gravity features and street anchors"),
    "split": (cmd_split, "write a random or polygon hold-out split plan"),
    "train": (cmd_train, "fit one model and write held-out predictions"),
    "evaluate": (cmd_evaluate, "MSE and R^2 from a train run's prediction files"),
    "ablate": (cmd_ablate, "input-source ablation grid (median over seeds)"),
    "score-map": (cmd_score_map, "GeoJSON map of visual scores from a hybrid train run"),
    "rank": (cmd_rank, "top-k and bottom-k streets by visual price contribution"),
}

FLAG_HELP = {
    "transactions": "transactions CSV (from synth or your own data)",
    "segments": "street segment geometry CSV",
    "pois": "points of interest CSV (parks, shops, job centres)",
    "manifest": "image manifest CSV; image paths are relative to it",
    "streets": "street records CSV (from ingest or features)",
    "anchors": "street anchor CSV (from features)",
    "split": "split plan CSV (from split)",
    "polygon": "hold-out polygon file, one x,y vertex per line",
    "scores": "scores.csv from a score-map run",
    "seed": "random seed (env HEDONIA_SEED)",
    "out": "output root (env HEDONIA_OUT; default runs)",
    "model": "train: ols | gam | gbt | net | hybrid",
    "inputs": "net inputs, any of X S A (default XSA)",
    "interpretable": "hybrid head: ols | gam | gbt",
    "split_mode": "random | polygon",
    "run": "directory of an earlier train or score-map run",
    "depths": "comma separated CNN depths (4, 8, 13)",
    "models": "comma separated ablation configs",
    "visual_mode": "synth: active | zero | inert",
    "k": "rank: how many streets at each end",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hedonia", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="key = value settings file (flags override it)")
        p.add_argument("--force", action="store_true", help="replace an existing run directory")
        for key in dict.fromkeys(COMMAND_KEYS[name] + ("seed", "out")):
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None,
                           help=FLAG_HELP.get(key, f"default {DEFAULTS[key][1]}"))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "force")}
    try:
        cfg = resolve_config(args.command, flags)
        run = Run(args.command, cfg, force=args.force)
        try:
            COMMANDS[args.command][0](run)
        except BaseException:
            shutil.rmtree(run.dir, ignore_errors=True)  # no half-written runs
            raise
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, GeometryError, FileNotFoundError, KeyError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteError, FloatingPointError, RankDeficientError, GamError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
