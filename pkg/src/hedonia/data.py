"""Transactions, street aggregation, attribute normalisation and image ingestion."""

from __future__ import annotations

import csv
import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

ATTRIBUTES = ("year", "size", "beds", "age", "type", "park", "shops", "gravity")
STRUCTURAL = ("year", "size", "beds", "age", "type")
SPATIAL = ("park", "shops", "gravity")

# counts and distances that can be zero get log1p; type is already a share
TRANSFORMS = {
    "year": "log",
    "size": "log",
    "beds": "log1p",
    "age": "log1p",
    "type": "none",
    "park": "log1p",
    "shops": "log1p",
    "gravity": "log1p",
}

TRANSACTION_FIELDS = ("transaction_id", "street_id", "price", "year", "size", "beds", "age", "type")
MANIFEST_FIELDS = ("street_id", "street_image_path", "aerial_image_path", "valid")


class DataError(ValueError):
    """Bad or inconsistent input data."""


@dataclass(frozen=True)
class TransactionRecord:
    transaction_id: str
    street_id: str
    price: float
    year: float
    size: float
    beds: float
    age: float
    type: int

    def __post_init__(self):
        if not self.price > 0:
            raise DataError(f"transaction {self.transaction_id}: price must be > 0")
        if not self.street_id:
            raise DataError(f"transaction {self.transaction_id}: missing street_id")


@dataclass(frozen=True)
class StreetRecord:
    """One modelling row: mean log price and the street's attributes.

    ``attrs`` holds raw averages straight out of aggregation and values in
    [0, 1] (on the fitting rows) once a NormalizationSpec has been applied.
    """

    street_id: str
    y: float
    attrs: dict
    n_transactions: int = 1
    normalized: bool = False

    def vector(self, names=ATTRIBUTES) -> np.ndarray:
        return np.array([self.attrs[a] for a in names], dtype=np.float64)


def aggregate_to_streets(transactions) -> list[StreetRecord]:
    """Group transactions by street: mean log price, mean attributes, house share."""
    groups: OrderedDict[str, list[TransactionRecord]] = OrderedDict()
    for t in transactions:
        groups.setdefault(t.street_id, []).append(t)
    out = []
    for sid in sorted(groups):
        rows = groups[sid]
        attrs = {
            "year": float(np.mean([t.year for t in rows])),
            "size": float(np.mean([t.size for t in rows])),
            "beds": float(np.mean([t.beds for t in rows])),
            "age": float(np.mean([t.age for t in rows])),
            "type": float(np.mean([1.0 if t.type else 0.0 for t in rows])),
        }
        y = float(np.mean([math.log(t.price) for t in rows]))
        out.append(StreetRecord(sid, y, attrs, len(rows)))
    return out


def attach_attributes(streets, extra: dict) -> list[StreetRecord]:
    """Merge per-street attribute dicts (e.g. spatial features) into the records."""
    out = []
    for s in streets:
        if s.street_id not in extra:
            raise DataError(f"no attributes for street {s.street_id}")
        out.append(replace(s, attrs={**s.attrs, **extra[s.street_id]}))
    return out


# ---------------------------------------------------------------------------
# normalisation
# ---------------------------------------------------------------------------


def _forward_transform(kind: str, values):
    values = np.asarray(values, dtype=np.float64)
    if kind == "log":
        if np.any(values <= 0):
            raise DataError("log transform needs strictly positive values")
        return np.log(values)
    if kind == "log1p":
        if np.any(values <= -1):
            raise DataError("log1p transform needs values > -1")
        return np.log1p(values)
    return values


def _inverse_transform(kind: str, values):
    if kind == "log":
        return np.exp(values)
    if kind == "log1p":
        return np.expm1(values)
    return np.asarray(values, dtype=np.float64)


@dataclass(frozen=True)
class NormalizationSpec:
    """Per attribute: transform, and min/max of the transformed training values."""

    transforms: dict
    mins: dict
    maxs: dict

    @property
    def names(self):
        return tuple(self.transforms)

    def transform(self, name: str, raw):
        t = _forward_transform(self.transforms[name], raw)
        return (t - self.mins[name]) / (self.maxs[name] - self.mins[name])

    def inverse(self, name: str, scaled):
        t = np.asarray(scaled) * (self.maxs[name] - self.mins[name]) + self.mins[name]
        return _inverse_transform(self.transforms[name], t)


def fit_normalization(train_rows, names=None) -> NormalizationSpec:
    """Fit log + min-max scaling on the training partition only.

    The target ``y`` is not touched: it is already a log price.
    """
    train_rows = list(train_rows)
    if not train_rows:
        raise DataError("cannot fit normalisation on zero rows")
    names = tuple(names or [a for a in ATTRIBUTES if a in train_rows[0].attrs])
    transforms, mins, maxs = {}, {}, {}
    for name in names:
        kind = TRANSFORMS.get(name, "none")
        t = _forward_transform(kind, [r.attrs[name] for r in train_rows])
        lo, hi = float(t.min()), float(t.max())
        if not hi > lo:
            raise DataError(f"attribute {name!r} is constant on the training rows")
        transforms[name], mins[name], maxs[name] = kind, lo, hi
    return NormalizationSpec(transforms, mins, maxs)


def apply_normalization(spec: NormalizationSpec, rows) -> list[StreetRecord]:
    """Scale rows with a fitted spec; out-of-range values extrapolate linearly."""
    out = []
    for r in rows:
        if r.normalized:
            raise DataError(f"street {r.street_id} is already normalised")
        attrs = dict(r.attrs)
        for name in spec.names:
            attrs[name] = float(spec.transform(name, r.attrs[name]))
        out.append(replace(r, attrs=attrs, normalized=True))
    return out


def invert_normalization(spec: NormalizationSpec, rows) -> list[StreetRecord]:
    out = []
    for r in rows:
        attrs = dict(r.attrs)
        for name in spec.names:
            attrs[name] = float(spec.inverse(name, r.attrs[name]))
        out.append(replace(r, attrs=attrs, normalized=False))
    return out


# ---------------------------------------------------------------------------
# images
# ---------------------------------------------------------------------------


@dataclass
class ImageSample:
    street_id: str
    street_image: np.ndarray
    aerial_image: np.ndarray
    valid: bool = True
    street_path: str = ""
    aerial_path: str = ""


@dataclass(frozen=True)
class ManifestError:
    row: int
    street_id: str
    message: str


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int | None = None) -> np.ndarray:
    """Bilinear resampling with half-pixel centres and edge clamping.

    Source coordinate of output pixel ``i`` is ``(i + 0.5) * in/out - 0.5``.
    Works on (H, W) or (H, W, C) arrays and returns float64.
    """
    out_w = out_h if out_w is None else out_w
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]

    def axis_weights(n_in, n_out):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        lo = np.floor(pos).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    r0, r1, fr = axis_weights(h, out_h)
    c0, c1, fc = axis_weights(w, out_w)
    extra = (None,) * (img.ndim - 2)
    fr = fr[(slice(None), None) + extra]
    fc = fc[(None, slice(None)) + extra]
    top = img[r0][:, c0] * (1 - fc) + img[r0][:, c1] * fc
    bottom = img[r1][:, c0] * (1 - fc) + img[r1][:, c1] * fc
    return top * (1 - fr) + bottom * fr


def read_image(path, side: int) -> np.ndarray:
    """Read an RGB image, scale to [0, 1] and resize to ``side`` x ``side``."""
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    if arr.shape[:2] != (side, side):
        arr = bilinear_resize(arr, side)
    return arr


def write_image(path, img: np.ndarray) -> None:
    from PIL import Image

    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def _parse_flag(value: str) -> bool:
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "y", "t"):
        return True
    if v in ("0", "false", "no", "n", "f", ""):
        return False
    raise DataError(f"bad validity flag {value!r}")


def load_image_manifest(path, side: int = 256):
    """Load every manifest row; returns ``(samples, errors)``.

    Unreadable rows are reported in ``errors`` and skipped rather than
    aborting the whole load. Rows flagged invalid are kept (``valid=False``)
    so that they can still be listed, but `training_samples` drops them.
    """
    path = Path(path)
    base = path.parent
    samples, errors = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: manifest lacks columns {sorted(missing)}")
        for i, row in enumerate(reader, start=1):
            sid = row["street_id"]
            try:
                valid = _parse_flag(row["valid"])
                sp = base / row["street_image_path"]
                ap = base / row["aerial_image_path"]
                street = read_image(sp, side)
                aerial = read_image(ap, side)
            except (OSError, DataError, ValueError) as err:
                errors.append(ManifestError(i, sid, str(err)))
                continue
            samples.append(ImageSample(sid, street, aerial, valid,
                                       row["street_image_path"], row["aerial_image_path"]))
    return samples, errors


def training_samples(samples) -> list[ImageSample]:
    return [s for s in samples if s.valid]


def write_manifest(path, samples) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_FIELDS)
        for s in samples:
            w.writerow([s.street_id, s.street_path, s.aerial_path, int(bool(s.valid))])


# ---------------------------------------------------------------------------
# delimited text I/O
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_transactions(path) -> list[TransactionRecord]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRANSACTION_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: transactions lack columns {sorted(missing)}")
        for row in reader:
            try:
                out.append(TransactionRecord(
                    row["transaction_id"], row["street_id"], float(row["price"]),
                    float(row["year"]), float(row["size"]), float(row["beds"]),
                    float(row["age"]), int(float(row["type"]))))
            except ValueError as err:
                raise DataError(f"{path}: bad row {row.get('transaction_id')}: {err}") from None
    return out


def write_transactions(path, transactions) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRANSACTION_FIELDS)
        for t in transactions:
            w.writerow([_fmt(getattr(t, f)) for f in TRANSACTION_FIELDS])


def write_streets(path, streets, names=ATTRIBUTES) -> None:
    names = [n for n in names if streets and n in streets[0].attrs]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["street_id", "y", "n_transactions", *names])
        for s in streets:
            w.writerow([s.street_id, _fmt(s.y), s.n_transactions, *(_fmt(s.attrs[n]) for n in names)])


def read_streets(path) -> list[StreetRecord]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        names = [c for c in reader.fieldnames if c not in ("street_id", "y", "n_transactions")]
        for row in reader:
            out.append(StreetRecord(row["street_id"], float(row["y"]),
                                    {n: float(row[n]) for n in names},
                                    int(row["n_transactions"])))
    return out


@dataclass
class Fold:
    """Rows of one partition; the only view evaluation code gets to see."""

    name: str
    ids: list
    X: np.ndarray | None
    y: np.ndarray
    street: np.ndarray | None = None
    aerial: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.ids)


@dataclass
class HedonicDataset:
    """Aligned modelling arrays: attributes, log price and the two image stacks.

    Images may be uint8 (promoted to [0, 1] per batch) or float in [0, 1].
    """

    ids: list
    X: np.ndarray
    y: np.ndarray
    street: np.ndarray | None = None
    aerial: np.ndarray | None = None
    attribute_names: tuple = ATTRIBUTES

    def __post_init__(self):
        self.ids = [str(i) for i in self.ids]
        self._index = {sid: i for i, sid in enumerate(self.ids)}
        if len(self._index) != len(self.ids):
            raise DataError("duplicate street ids in dataset")

    def __len__(self):
        return len(self.ids)

    def rows(self, ids) -> np.ndarray:
        return np.array([self._index[str(i)] for i in ids], dtype=int)

    def subset(self, ids, name: str = "subset") -> Fold:
        idx = self.rows(ids)
        return Fold(
            name, [self.ids[i] for i in idx], self.X[idx], self.y[idx],
            None if self.street is None else self.street[idx],
            None if self.aerial is None else self.aerial[idx],
        )

    def fold(self, plan, name: str) -> Fold:
        """Rows of one partition; plan streets without a dataset row are left out."""
        ids = [sid for sid in plan.ids(name) if sid in self._index]
        if not ids:
            raise DataError(f"fold {name!r} is empty")
        return self.subset(ids, name)


def build_dataset(streets, images=None, names=ATTRIBUTES) -> HedonicDataset:
    """Join normalised street records with valid images on street id."""
    streets = list(streets)
    if images is None:
        return HedonicDataset([s.street_id for s in streets],
                              np.stack([s.vector(names) for s in streets]),
                              np.array([s.y for s in streets]), attribute_names=tuple(names))
    by_id = {im.street_id: im for im in images if im.valid}
    keep = [s for s in streets if s.street_id in by_id]
    if not keep:
        raise DataError("no street has a valid image pair")
    return HedonicDataset(
        [s.street_id for s in keep],
        np.stack([s.vector(names) for s in keep]),
        np.array([s.y for s in keep]),
        np.stack([by_id[s.street_id].street_image for s in keep]),
        np.stack([by_id[s.street_id].aerial_image for s in keep]),
        tuple(names),
    )


def as_float_images(batch: np.ndarray) -> np.ndarray:
    if batch.dtype == np.uint8:
        return batch.astype(np.float64) / 255.0
    return np.asarray(batch, dtype=np.float64)
