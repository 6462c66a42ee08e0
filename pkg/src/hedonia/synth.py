"""Synthetic city with a known latent visual appeal per street.

Street geometry and points of interest give park/shop/gravity features,
structural attributes are drawn per street, and each street gets a latent
visual score ``v*`` in [-1, 1] from a smooth spatial field. ``v*`` is
residualised on the attributes so that it is uncorrelated with them, then
drawn into both images: vegetation coverage and facade-stripe frequency in
the street view, green-patch coverage in the aerial view.

Log price follows ``y = b0 + beta . x + g(v*) + noise`` with ``g`` a scaled
tanh whose total range is ``visual_range`` log points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import (
    ATTRIBUTES, ImageSample, StreetRecord, TransactionRecord, apply_normalization,
    bilinear_resize, fit_normalization,
)
from .spatial import Poi, StreetSegment, street_features

TRUE_BETA = {
    "year": 1.6,
    "size": 2.1,
    "beds": 0.15,
    "age": 0.1,
    "type": 0.2,
    "park": -0.6,
    "shops": -0.15,
    "gravity": 1.0,
}
TRUE_INTERCEPT = 10.0
CITY_SIZE = 10_000.0
TANH_GAIN = 1.5


@dataclass(frozen=True)
class SynthConfig:
    n_streets: int = 1000
    seed: int = 0
    noise_sd: float = 0.1
    image_side: int = 64
    visual_range: float = 0.5
    visual_mode: str = "active"  # active | zero (v* = 0) | inert (v* not in price)
    transacted_fraction: float = 0.9
    invalid_fraction: float = 0.02
    gravity_cutoff: float = 5000.0


@dataclass
class SyntheticTruth:
    """Generator ground truth. Kept apart from anything a model is fitted on."""

    latent_visual: dict
    intercept: float
    beta: dict
    visual_range: float
    visual_mode: str
    noise_sd: float
    normalization: object = None

    def g(self, v):
        if self.visual_mode != "active":
            return np.zeros_like(np.asarray(v, dtype=np.float64))
        return visual_price_effect(v, self.visual_range)


def visual_price_effect(v, visual_range: float):
    v = np.asarray(v, dtype=np.float64)
    return 0.5 * visual_range * np.tanh(TANH_GAIN * v) / math.tanh(TANH_GAIN)


@dataclass
class SyntheticCity:
    streets: list
    images: list
    truth: SyntheticTruth
    segments: list = field(default_factory=list)
    pois: list = field(default_factory=list)
    transactions: list = field(default_factory=list)
    anchors: dict = field(default_factory=dict)
    raw_attributes: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.streets, self.images, self.truth))

    def raw_streets(self) -> list:
        """Transacted streets with untransformed attribute values."""
        return [replace(s, attrs=dict(self.raw_attributes[s.street_id]), normalized=False)
                for s in self.streets]


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------


def _city_geometry(rng, n):
    centres = rng.uniform(1500, CITY_SIZE - 1500, size=(6, 2))
    which = rng.integers(0, len(centres), size=n)
    spread = rng.uniform(800, 2200, size=len(centres))
    mid = centres[which] + rng.normal(size=(n, 2)) * spread[which, None]
    mid = np.clip(mid, 50, CITY_SIZE - 50)
    segments = []
    for i in range(n):
        length = rng.uniform(60, 300)
        heading = rng.uniform(0, 2 * np.pi)
        bend = rng.uniform(-0.6, 0.6)
        d1 = np.array([np.sin(heading), np.cos(heading)])
        d2 = np.array([np.sin(heading + bend), np.cos(heading + bend)])
        a = mid[i] - d1 * length * 0.5
        b = mid[i]
        c = mid[i] + d2 * length * 0.5
        segments.append(StreetSegment(f"s{i:05d}", (tuple(a), tuple(b), tuple(c))))

    pois = []
    cbd = centres[0]
    for k in range(40):
        loc = cbd + rng.normal(size=2) * 1200 if k < 25 else rng.uniform(0, CITY_SIZE, 2)
        pois.append(Poi("job_center", float(loc[0]), float(loc[1]), float(rng.lognormal(7.0, 0.8))))
    for _ in range(max(200, n // 2)):
        c = centres[rng.integers(0, len(centres))]
        loc = c + rng.normal(size=2) * 900
        pois.append(Poi("shop", float(loc[0]), float(loc[1])))
    for _ in range(35):
        loc = rng.uniform(0, CITY_SIZE, 2)
        pois.append(Poi("park", float(loc[0]), float(loc[1])))
    return segments, pois


def _spatial_field(rng, xy, n_bumps=14, scale=1400.0):
    centres = rng.uniform(0, CITY_SIZE, size=(n_bumps, 2))
    amp = rng.normal(size=n_bumps)
    d2 = ((xy[:, None, :] - centres[None, :, :]) ** 2).sum(-1)
    return (amp * np.exp(-d2 / (2 * scale ** 2))).sum(-1)


# ---------------------------------------------------------------------------
# images
# ---------------------------------------------------------------------------


def _smooth_noise(rng, side, cells):
    return bilinear_resize(rng.normal(size=(cells, cells)), side)


def _coverage_mask(rng, side, coverage, cells):
    noise = _smooth_noise(rng, side, cells)
    cut = np.quantile(noise, 1.0 - coverage)
    return noise > cut


def render_street_image(rng, v, side):
    """Front-facing street view: sky, striped facades, road, vegetation."""
    u = (v + 1.0) / 2.0
    img = np.empty((side, side, 3))
    rows = np.arange(side)[:, None] / side
    cols = np.arange(side)[None, :] / side
    sky = rows < 0.3
    road = rows >= 0.75
    facade = ~sky & ~road
    img[:] = np.where(sky[..., None], np.array([0.55, 0.60, 0.84]), 0.0)
    palette = np.array([[0.62, 0.36, 0.30], [0.55, 0.45, 0.46], [0.66, 0.50, 0.44], [0.45, 0.38, 0.42]])
    base = palette[rng.integers(0, len(palette))] + rng.normal(0, 0.02, 3)
    freq = 3.0 + 6.0 * u
    stripes = 0.78 + 0.22 * (np.sin(2 * np.pi * freq * cols + rng.uniform(0, 2 * np.pi)) > 0)
    img = np.where((facade & np.ones_like(cols, dtype=bool))[..., None], base * stripes[..., None], img)
    img = np.where((road & np.ones_like(cols, dtype=bool))[..., None], np.array([0.33, 0.33, 0.35]), img)
    veg = _coverage_mask(rng, side, 0.04 + 0.5 * u, cells=max(4, side // 8))
    tex = _smooth_noise(rng, side, max(4, side // 4))
    green = np.stack([0.16 + 0.03 * tex, 0.74 + 0.06 * tex, 0.15 + 0.03 * tex], axis=-1)
    img = np.where(veg[..., None], green, img)
    img += rng.normal(0, 0.025, img.shape)
    return np.clip(img, 0.0, 1.0)


def render_aerial_image(rng, v, side):
    """Top-down view: roofs and roads with green patches."""
    u = (v + 1.0) / 2.0
    tone = rng.uniform(0.38, 0.5)
    img = np.empty((side, side, 3))
    img[:] = np.array([tone + 0.05, tone, tone - 0.03])
    roofs = _coverage_mask(rng, side, 0.5, cells=max(4, side // 6))
    img[roofs] = np.array([0.58, 0.40, 0.33]) + rng.normal(0, 0.03, 3)
    k = int(rng.integers(1, 4))
    for _ in range(k):
        if rng.random() < 0.5:
            r = int(rng.integers(0, side - 3))
            img[r:r + max(2, side // 24)] = 0.25
        else:
            c = int(rng.integers(0, side - 3))
            img[:, c:c + max(2, side // 24)] = 0.25
    patches = _coverage_mask(rng, side, 0.05 + 0.5 * u, cells=max(4, side // 10))
    tex = _smooth_noise(rng, side, max(4, side // 4))
    green = np.stack([0.20 + 0.03 * tex, 0.66 + 0.05 * tex, 0.18 + 0.03 * tex], axis=-1)
    img = np.where(patches[..., None], green, img)
    img += rng.normal(0, 0.025, img.shape)
    return np.clip(img, 0.0, 1.0)


def _to_uint8(img):
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# generator
# ---------------------------------------------------------------------------


def synth_generate(config: SynthConfig | None = None, **overrides) -> SyntheticCity:
    """Generate a seeded synthetic city; unpacks as ``(streets, images, truth)``.

    ``streets`` carries only streets with transactions (normalised
    attributes); ``images`` covers every street, including those without
    sales and a small share flagged invalid (darkened frames).
    """
    cfg = config or SynthConfig()
    if overrides:
        cfg = SynthConfig(**{**cfg.__dict__, **overrides})
    if cfg.n_streets < 50:
        raise ValueError("synth_generate needs n_streets >= 50")
    if cfg.visual_mode not in ("active", "zero", "inert"):
        raise ValueError(f"unknown visual_mode {cfg.visual_mode!r}")
    n = cfg.n_streets
    rng = np.random.default_rng(cfg.seed)
    geo_rng, attr_rng, vis_rng, img_rng, tx_rng, noise_rng = rng.spawn(6)

    segments, pois = _city_geometry(geo_rng, n)
    feats = street_features(segments, pois, cutoff=cfg.gravity_cutoff)
    ids = [s.street_id for s in segments]
    anchors = {sid: (feats[sid]["anchor_x"], feats[sid]["anchor_y"]) for sid in ids}

    n_tx = 1 + np.minimum(attr_rng.poisson(1.5, size=n), 7)
    house_p = attr_rng.beta(0.6, 1.4, size=n)
    n_house = attr_rng.binomial(n_tx, house_p)
    raw = {}
    for i, sid in enumerate(ids):
        raw[sid] = {
            "year": float(attr_rng.uniform(1995, 2017)),
            "size": float(np.exp(attr_rng.normal(4.4, 0.35))),
            "beds": float(attr_rng.poisson(1.8)),
            "age": float(attr_rng.uniform(0, 150)),
            "type": float(n_house[i] / n_tx[i]),
            "park": feats[sid]["park"],
            "shops": feats[sid]["shops"],
            "gravity": feats[sid]["gravity"],
        }
    all_rows = [StreetRecord(sid, 0.0, raw[sid], int(n_tx[i])) for i, sid in enumerate(ids)]
    spec = fit_normalization(all_rows, ATTRIBUTES)
    normed = apply_normalization(spec, all_rows)
    X = np.stack([r.vector() for r in normed])

    if cfg.visual_mode == "zero":
        v = np.zeros(n)
    else:
        xy = np.array([anchors[sid] for sid in ids])
        field_ = _spatial_field(vis_rng, xy)
        field_ = field_ / (field_.std() + 1e-12)
        latent = 0.75 * field_ + 0.65 * vis_rng.normal(size=n)
        design = np.column_stack([np.ones(n), X])
        coef, *_ = np.linalg.lstsq(design, latent, rcond=None)
        resid = latent - design @ coef
        # ranks spread v* uniformly over [-1, 1]; near-orthogonality to X survives
        ranks = np.argsort(np.argsort(resid, kind="stable"), kind="stable")
        v = 2.0 * (ranks + 0.5) / n - 1.0

    beta = np.array([TRUE_BETA[a] for a in ATTRIBUTES])
    y_all = TRUE_INTERCEPT + X @ beta + noise_rng.normal(0.0, cfg.noise_sd, size=n)
    if cfg.visual_mode == "active":
        y_all = y_all + visual_price_effect(v, cfg.visual_range)

    transacted = tx_rng.random(n) < cfg.transacted_fraction
    invalid = img_rng.random(n) < cfg.invalid_fraction

    streets, transactions = [], []
    for i, sid in enumerate(ids):
        if not transacted[i]:
            continue
        rec = normed[i]
        streets.append(StreetRecord(sid, float(y_all[i]), rec.attrs, int(n_tx[i]), normalized=True))
        dev = tx_rng.normal(0.0, 0.15, size=n_tx[i])
        dev -= dev.mean()
        for k in range(n_tx[i]):
            r = raw[sid]
            transactions.append(TransactionRecord(
                f"t{len(transactions):07d}", sid, float(np.exp(y_all[i] + dev[k])),
                r["year"], r["size"], r["beds"], r["age"], int(k < n_house[i])))

    images = []
    for i, sid in enumerate(ids):
        sub = np.random.default_rng([cfg.seed, i, 7])
        street = render_street_image(sub, v[i], cfg.image_side)
        aerial = render_aerial_image(sub, v[i], cfg.image_side)
        if invalid[i]:
            street = street * 0.08  # dark frame stand-in
        images.append(ImageSample(sid, _to_uint8(street), _to_uint8(aerial), not invalid[i],
                                  f"images/{sid}_street.png", f"images/{sid}_aerial.png"))

    truth = SyntheticTruth(
        latent_visual={sid: float(v[i]) for i, sid in enumerate(ids)},
        intercept=TRUE_INTERCEPT,
        beta=dict(TRUE_BETA),
        visual_range=cfg.visual_range,
        visual_mode=cfg.visual_mode,
        noise_sd=cfg.noise_sd,
        normalization=spec,
    )
    return SyntheticCity(streets, images, truth, segments, pois, transactions, anchors, raw)
