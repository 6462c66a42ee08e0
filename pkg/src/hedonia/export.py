"""City-wide proxy maps and ranked image lists from a trained visual head.

Maps are GeoJSON FeatureCollections of street anchor points; every street
with a valid image pair is scored, whether or not it ever sold.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .data import Fold

N_CLASSES = 5


@dataclass(frozen=True)
class ScoreMapEntry:
    street_id: str
    x: float
    y: float
    score: float
    contribution: float


@dataclass
class ScoreMap:
    entries: list
    gamma: float
    skipped: list = field(default_factory=list)  # (street_id, reason)
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(e, name) for e in self.entries], dtype=np.float64)


def image_fold(images, name: str = "score"):
    """Stack every valid image pair into a Fold; invalid ones come back as skipped."""
    keep = [im for im in images if im.valid]
    skipped = [(im.street_id, "invalid image") for im in images if not im.valid]
    if not keep:
        return None, skipped
    fold = Fold(name, [im.street_id for im in keep], None, np.zeros(len(keep)),
                np.stack([im.street_image for im in keep]), np.stack([im.aerial_image for im in keep]))
    return fold, skipped


def score_map(chain, images, anchors: dict, metadata: dict | None = None) -> ScoreMap:
    """Score all imaged streets with ``chain.visual`` and weight by ``gamma``.

    ``chain`` is a HybridChain whose interpretable model exposes ``gamma``.
    """
    gamma = getattr(chain.model, "gamma", None)
    if gamma is None:
        raise ValueError("score maps need a linear model with a visual coefficient")
    usable, skipped = [], []
    for im in images:
        if im.street_id not in anchors:
            skipped.append((im.street_id, "no anchor"))
        else:
            usable.append(im)
    fold, bad = image_fold(usable)
    skipped += bad
    entries = []
    if fold is not None:
        scores = chain.visual.proxy(fold)
        if not np.all(np.isfinite(scores)):
            raise FloatingPointError("non-finite visual score")
        for sid, s in zip(fold.ids, scores):
            x, y = anchors[sid]
            entries.append(ScoreMapEntry(sid, float(x), float(y), float(s), float(gamma * s)))
    return ScoreMap(entries, float(gamma), sorted(skipped), dict(metadata or {}))


def class_breaks(values, n_classes: int = N_CLASSES) -> np.ndarray:
    """Interior quantile breaks splitting ``values`` into equal-count classes."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) == 0:
        raise ValueError("no values to classify")
    return np.quantile(values, np.arange(1, n_classes) / n_classes)


def assign_classes(values, breaks) -> np.ndarray:
    """Class 0 holds values <= the first break, the last class the rest."""
    return np.searchsorted(np.asarray(breaks), np.asarray(values, dtype=np.float64), side="left")


def to_geojson(smap: ScoreMap) -> dict:
    breaks = class_breaks(smap.column("contribution")) if smap.entries else np.zeros(0)
    classes = assign_classes(smap.column("contribution"), breaks) if smap.entries else []
    features = [
        {
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [e.x, e.y]},
            "properties": {"street_id": e.street_id, "score": e.score,
                           "contribution": e.contribution, "class": int(c)},
        }
        for e, c in zip(smap.entries, classes)
    ]
    return {
        "type": "FeatureCollection",
        "features": features,
        "properties": {"gamma": smap.gamma, "class_breaks": [float(b) for b in breaks],
                       **smap.metadata},
    }


def write_geojson(path, smap: ScoreMap) -> None:
    with open(path, "w") as fh:
        json.dump(to_geojson(smap), fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_geojson(path) -> ScoreMap:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("type") != "FeatureCollection":
        raise ValueError("not a FeatureCollection")
    meta = dict(doc.get("properties", {}))
    gamma = float(meta.pop("gamma"))
    meta.pop("class_breaks", None)
    entries = []
    for f in doc["features"]:
        x, y = f["geometry"]["coordinates"]
        p = f["properties"]
        entries.append(ScoreMapEntry(p["street_id"], float(x), float(y),
                                     float(p["score"]), float(p["contribution"])))
    return ScoreMap(entries, gamma, [], meta)


def write_score_table(path, smap: ScoreMap, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["street_id", "x", "y", "score", "contribution"])
        for e in smap.entries:
            w.writerow([e.street_id, repr(e.x), repr(e.y), repr(e.score), repr(e.contribution)])


def write_skipped(path, smap: ScoreMap) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["street_id", "reason"])
        w.writerows(smap.skipped)


# ---------------------------------------------------------------------------
# ranked image lists
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RankedImage:
    rank: int  # position in the full descending order, 1 = most desirable
    street_id: str
    score: float
    image_path: str


@dataclass
class Ranking:
    top: list
    bottom: list


def rank_images(scores: dict, k: int, paths: dict | None = None) -> Ranking:
    """Top-k and bottom-k streets by score; equal scores fall back to street id."""
    if k <= 0:
        raise ValueError("k must be positive")
    n = len(scores)
    if 2 * k > n:
        raise ValueError(f"k={k} exceeds half of the {n} scored streets")
    paths = paths or {}
    desc = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    rank = {sid: i + 1 for i, (sid, _) in enumerate(desc)}
    asc = sorted(scores.items(), key=lambda kv: (kv[1], kv[0]))

    def item(sid, s):
        return RankedImage(rank[sid], sid, float(s), paths.get(sid, ""))

    return Ranking([item(*kv) for kv in desc[:k]], [item(*kv) for kv in asc[:k]])


def write_ranking(path, ranking: Ranking, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "street_id", "score", "image_path"])
        for r in ranking.top + sorted(ranking.bottom, key=lambda r: r.rank):
            w.writerow([r.rank, r.street_id, repr(r.score), r.image_path])
