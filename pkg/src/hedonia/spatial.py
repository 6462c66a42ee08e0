"""Street geometry features and train/validation/test split plans.

Coordinates are planar metres. Bearings are compass azimuths: degrees
clockwise from north (+y), in [0, 360).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

PARTITIONS = ("train", "validation", "test")
POI_KINDS = ("job_center", "shop", "park")


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class StreetSegment:
    street_id: str
    polyline: tuple

    def __post_init__(self):
        pts = np.asarray(self.polyline, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise GeometryError(f"street {self.street_id}: polyline needs >= 2 (x, y) points")
        if not np.all(np.isfinite(pts)):
            raise GeometryError(f"street {self.street_id}: non-finite coordinate")


@dataclass(frozen=True)
class Poi:
    kind: str
    x: float
    y: float
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in POI_KINDS:
            raise GeometryError(f"unknown POI kind {self.kind!r}")
        if self.weight < 0:
            raise GeometryError("POI weight must be >= 0")


def azimuth(dx: float, dy: float) -> float:
    return math.degrees(math.atan2(dx, dy)) % 360.0


def anchor_and_bearing(segment: StreetSegment):
    """Point at half the arc length, and the azimuth of the piece it lies on."""
    pts = np.asarray(segment.polyline, dtype=np.float64)
    steps = np.diff(pts, axis=0)
    lengths = np.hypot(steps[:, 0], steps[:, 1])
    total = lengths.sum()
    if total <= 0:
        raise GeometryError(f"street {segment.street_id}: zero-length polyline")
    half = total / 2.0
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    # first piece whose far end reaches the midpoint; skip degenerate pieces
    k = int(np.searchsorted(cum[1:], half, side="left"))
    while lengths[k] == 0:
        k += 1
    t = (half - cum[k]) / lengths[k]
    anchor = pts[k] + t * steps[k]
    return (float(anchor[0]), float(anchor[1])), azimuth(steps[k, 0], steps[k, 1])


def _poi_array(pois, kind=None):
    sel = [p for p in pois if kind is None or p.kind == kind]
    if not sel:
        return np.zeros((0, 2)), np.zeros(0)
    return np.array([(p.x, p.y) for p in sel]), np.array([p.weight for p in sel])


def gravity_accessibility(anchor, jobs, cutoff: float = 5000.0) -> float:
    """Sum of job weight over distance for job centres within ``cutoff``.

    Distances under 1 m (a job centre on the anchor) count as 1 m.
    """
    if not cutoff > 0:
        raise GeometryError("cutoff must be > 0")
    xy, w = _poi_array(jobs, "job_center")
    if len(w) == 0:
        return 0.0
    d = np.hypot(xy[:, 0] - anchor[0], xy[:, 1] - anchor[1])
    d = np.maximum(d, 1.0)
    keep = d <= cutoff
    return float(np.sum(w[keep] / d[keep]))


def count_within(anchor, pois, radius: float = 800.0) -> int:
    """Number of POIs within a closed disc of ``radius`` metres."""
    if not radius > 0:
        raise GeometryError("radius must be > 0")
    xy, _ = _poi_array(pois)
    if len(xy) == 0:
        return 0
    d = np.hypot(xy[:, 0] - anchor[0], xy[:, 1] - anchor[1])
    return int(np.count_nonzero(d <= radius))


def nearest_distance(anchor, pois) -> float:
    xy, _ = _poi_array(pois)
    if len(xy) == 0:
        raise GeometryError("nearest_distance needs at least one POI")
    return float(np.min(np.hypot(xy[:, 0] - anchor[0], xy[:, 1] - anchor[1])))


def street_features(segments, pois, cutoff: float = 5000.0, radius: float = 800.0):
    """Anchors, bearings and raw park/shops/gravity values for every segment."""
    jobs = [p for p in pois if p.kind == "job_center"]
    shops = [p for p in pois if p.kind == "shop"]
    parks = [p for p in pois if p.kind == "park"]
    out = {}
    for seg in segments:
        anchor, bearing = anchor_and_bearing(seg)
        out[seg.street_id] = {
            "anchor_x": anchor[0],
            "anchor_y": anchor[1],
            "bearing": bearing,
            "park": nearest_distance(anchor, parks),
            "shops": float(count_within(anchor, shops, radius)),
            "gravity": gravity_accessibility(anchor, jobs, cutoff),
        }
    return out


# ---------------------------------------------------------------------------
# polygons
# ---------------------------------------------------------------------------


def _segments_cross(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if v == 0 else (1 if v > 0 else -1)

    def on_seg(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    o1, o2 = orient(p1, p2, p3), orient(p1, p2, p4)
    o3, o4 = orient(p3, p4, p1), orient(p3, p4, p2)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and on_seg(p1, p2, p3)) or (o2 == 0 and on_seg(p1, p2, p4))
            or (o3 == 0 and on_seg(p3, p4, p1)) or (o4 == 0 and on_seg(p3, p4, p2)))


def is_simple_polygon(poly) -> bool:
    pts = [tuple(map(float, p)) for p in poly]
    if len(pts) > 1 and pts[0] == pts[-1]:
        pts = pts[:-1]
    n = len(pts)
    if n < 3:
        return False
    edges = [(pts[i], pts[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue  # neighbours share a vertex
            if _segments_cross(*edges[i], *edges[j]):
                return False
    return True


def points_in_polygon(points, poly) -> np.ndarray:
    """Even-odd ray casting towards +x, vectorised over points."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    verts = np.asarray(poly, dtype=np.float64)
    if len(verts) > 1 and np.array_equal(verts[0], verts[-1]):
        verts = verts[:-1]
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    for (x1, y1), (x2, y2) in zip(verts, np.roll(verts, -1, axis=0)):
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xint)
    return inside


# ---------------------------------------------------------------------------
# split plans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitPlan:
    assignment: dict
    mode: str

    def ids(self, partition: str) -> list:
        if partition not in PARTITIONS:
            raise ValueError(f"unknown partition {partition!r}")
        return [sid for sid, p in self.assignment.items() if p == partition]

    def sizes(self) -> dict:
        return {p: len(self.ids(p)) for p in PARTITIONS}


def _split_counts(n: int, fractions) -> list[int]:
    counts = [int(round(n * f)) for f in fractions[:-1]]
    counts.append(n - sum(counts))
    return counts


def make_split(street_ids, mode: str = "random_70_15_15", seed: int = 0,
               polygon=None, anchors=None) -> SplitPlan:
    """Random 70/15/15 split, or a polygon hold-out test set.

    In polygon mode the test fold is exactly the streets whose anchor falls
    inside ``polygon``; the rest go 82/18 to train/validation (the 70:15
    ratio), shuffled with ``seed``.
    """
    ids = sorted(str(s) for s in street_ids)
    rng = np.random.default_rng(seed)
    if mode == "random_70_15_15":
        order = [ids[i] for i in rng.permutation(len(ids))]
        n_train, n_val, _ = _split_counts(len(ids), (0.70, 0.15, 0.15))
        assignment = {}
        for k, sid in enumerate(order):
            assignment[sid] = ("train" if k < n_train
                               else "validation" if k < n_train + n_val else "test")
    elif mode == "polygon_holdout":
        if polygon is None or anchors is None:
            raise GeometryError("polygon mode needs a polygon and street anchors")
        if not is_simple_polygon(polygon):
            raise GeometryError("hold-out polygon must be simple")
        pts = np.array([anchors[sid] for sid in ids])
        inside = points_in_polygon(pts, polygon)
        if not inside.any() or inside.all():
            raise GeometryError("hold-out polygon must contain some but not all streets")
        rest = [sid for sid, flag in zip(ids, inside) if not flag]
        order = [rest[i] for i in rng.permutation(len(rest))]
        n_train = int(round(len(order) * 0.82))
        assignment = {sid: "test" for sid, flag in zip(ids, inside) if flag}
        for k, sid in enumerate(order):
            assignment[sid] = "train" if k < n_train else "validation"
        assignment = {sid: assignment[sid] for sid in ids}
    else:
        raise ValueError(f"unknown split mode {mode!r}")
    return SplitPlan(assignment, mode)


# ---------------------------------------------------------------------------
# delimited text I/O
# ---------------------------------------------------------------------------


def read_segments(path) -> list[StreetSegment]:
    """Rows: street_id, x1, y1, x2, y2, ... (ragged)."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for row in reader:
            if not row:
                continue
            vals = [float(v) for v in row[1:] if v != ""]
            if len(vals) % 2:
                raise GeometryError(f"street {row[0]}: odd number of coordinates")
            out.append(StreetSegment(row[0], tuple(zip(vals[0::2], vals[1::2]))))
    return out


def write_segments(path, segments) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["street_id", "coords"])
        for s in segments:
            w.writerow([s.street_id, *(repr(float(c)) for p in s.polyline for c in p)])


def read_pois(path) -> list[Poi]:
    with open(path, newline="") as fh:
        return [Poi(r["kind"], float(r["x"]), float(r["y"]), float(r.get("weight") or 1.0))
                for r in csv.DictReader(fh)]


def write_pois(path, pois) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "x", "y", "weight"])
        for p in pois:
            w.writerow([p.kind, repr(float(p.x)), repr(float(p.y)), repr(float(p.weight))])


def read_polygon(path) -> list[tuple]:
    """One ``x,y`` (or whitespace separated) vertex per line; ``#`` comments."""
    pts = []
    for line in open(path):
        line = line.split("#", 1)[0].strip()
        if line:
            x, y = line.replace(",", " ").split()[:2]
            pts.append((float(x), float(y)))
    return pts


def write_polygon(path, poly) -> None:
    with open(path, "w") as fh:
        for x, y in poly:
            fh.write(f"{x!r},{y!r}\n")


def write_split(path, plan: SplitPlan) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["street_id", "partition"])
        for sid, part in plan.assignment.items():
            w.writerow([sid, part])


def read_split(path, mode: str = "file") -> SplitPlan:
    with open(path, newline="") as fh:
        return SplitPlan({r["street_id"]: r["partition"] for r in csv.DictReader(fh)}, mode)


def square_holdout(anchors: dict, fraction: float = 0.15, center=None) -> list[tuple]:
    """Axis-aligned square around ``center`` holding about ``fraction`` of anchors.

    The half-width is the ``fraction`` quantile of Chebyshev distances from
    the centre, nudged outward so the boundary never touches an anchor.
    """
    if not 0 < fraction < 1:
        raise GeometryError("fraction must lie in (0, 1)")
    pts = np.array(list(anchors.values()), dtype=np.float64)
    if center is None:
        center = np.median(pts, axis=0)
    cheb = np.max(np.abs(pts - np.asarray(center, dtype=np.float64)), axis=1)
    k = max(1, int(round(fraction * len(pts))))
    ordered = np.sort(cheb)
    half = ordered[k - 1] if k == len(ordered) else 0.5 * (ordered[k - 1] + ordered[k])
    cx, cy = float(center[0]), float(center[1])
    return [(cx - half, cy - half), (cx + half, cy - half), (cx + half, cy + half), (cx - half, cy + half)]
