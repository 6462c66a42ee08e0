"""Hedonic price estimators.

Linear: `ols_fit` and `hybrid_linear_fit` (attributes plus one visual proxy
column). Neural: an attribute perceptron, CNN feature extractors for street
and aerial images, the fused end-to-end network, and the two-stage procedure
that trains a scalar visual head on attribute-model residuals.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from . import nn
from .data import Fold, as_float_images

INPUT_SOURCES = ("X", "S", "A")
CNN_DEPTHS = (4, 8, 13)

# conv layers per pooled block
_BLOCKS = {4: (1, 1, 1, 1), 8: (2, 2, 2, 2), 13: (2, 2, 3, 3, 3)}
_WIDTH_MULT = (1, 2, 2, 2, 2)


class RankDeficientError(ValueError):
    def __init__(self, columns):
        super().__init__(f"design matrix is rank deficient; dependent columns: {', '.join(columns)}")
        self.columns = list(columns)


# ---------------------------------------------------------------------------
# ordinary least squares
# ---------------------------------------------------------------------------


@dataclass
class OlsModel:
    names: tuple
    beta0: float
    beta: np.ndarray
    gamma: float | None
    std_errors: np.ndarray  # intercept first, then one per column
    t_values: np.ndarray
    n: int
    rss: float
    sigma2: float
    loglik: float
    aic: float
    gcv_score: float
    r2: float
    cov: np.ndarray = field(repr=False, default=None)

    @property
    def coefficients(self) -> np.ndarray:
        extra = [] if self.gamma is None else [self.gamma]
        return np.concatenate([[self.beta0], self.beta, extra])

    def predict(self, X, proxy=None) -> np.ndarray:
        out = self.beta0 + np.asarray(X, dtype=np.float64) @ self.beta
        if self.gamma is not None:
            if proxy is None:
                raise ValueError("hybrid model needs the proxy column")
            out = out + self.gamma * np.asarray(proxy, dtype=np.float64)
        return out

    def predict_fold(self, fold: Fold) -> np.ndarray:
        return self.predict(fold.X, fold.extra.get("proxy") if self.gamma is not None else None)

    def contribution(self, proxy) -> np.ndarray:
        """Price contribution of the visual proxy, in log-price units."""
        if self.gamma is None:
            raise ValueError("base model has no visual coefficient")
        return self.gamma * np.asarray(proxy, dtype=np.float64)

    def table(self) -> list[tuple]:
        labels = ("Inter.", *self.names)
        return [(lab, float(c), float(se), float(t))
                for lab, c, se, t in zip(labels, self.coefficients, self.std_errors, self.t_values)]


def _design(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return X


def ols_fit(X, y, names=None) -> OlsModel:
    """Least squares with intercept via pivoted QR, plus inference summaries.

    Standard errors use sigma^2 = RSS / (n - p); AIC = 2k - 2 log L with the
    Gaussian maximum-likelihood variance and k counting sigma.
    """
    X = _design(X)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n, d = X.shape
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(d))
    if len(names) != d:
        raise ValueError("names do not match the number of columns")
    p = d + 1
    if n < p + 1:
        raise ValueError(f"need at least {p + 1} rows for {d} columns, got {n}")
    Z = np.column_stack([np.ones(n), X])
    _, R, piv = scipy.linalg.qr(Z, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag[0] * max(n, p) * np.finfo(float).eps * 1e3
    rank = int(np.sum(diag > tol))
    if rank < p:
        labels = ("intercept", *names)
        raise RankDeficientError([labels[j] for j in piv[rank:]])
    coef, *_ = np.linalg.lstsq(Z, y, rcond=None)
    resid = y - Z @ coef
    rss = float(resid @ resid)
    sigma2 = rss / (n - p)
    zinv = scipy.linalg.cho_solve(scipy.linalg.cho_factor(Z.T @ Z), np.eye(p))
    cov = sigma2 * zinv
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore"):
        t = coef / se
    sigma2_ml = rss / n
    loglik = -0.5 * n * (np.log(2 * np.pi * sigma2_ml) + 1.0)
    tss = float(np.sum((y - y.mean()) ** 2))
    return OlsModel(
        names=names, beta0=float(coef[0]), beta=coef[1:].copy(), gamma=None,
        std_errors=se, t_values=t, n=n, rss=rss, sigma2=sigma2, loglik=float(loglik),
        aic=float(2 * (p + 1) - 2 * loglik), gcv_score=float(n * rss / (n - p) ** 2),
        r2=float(100.0 * (1.0 - rss / tss)) if tss > 0 else float("nan"), cov=cov,
    )


def hybrid_linear_fit(X, proxy, y, names=None) -> OlsModel:
    """OLS on the attributes plus the visual proxy column; ``gamma`` is its weight."""
    X = _design(X)
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(X.shape[1]))
    proxy = np.asarray(proxy, dtype=np.float64).reshape(-1)
    if len(proxy) != len(X):
        raise ValueError("proxy column is not aligned with the rows of X")
    m = ols_fit(np.column_stack([X, proxy]), y, (*names, "vis"))
    return replace(m, names=names + ("vis",), beta=m.beta[:-1].copy(), gamma=float(m.beta[-1]))


def format_ols_report(base: OlsModel, vis: OlsModel | None = None) -> str:
    """Coefficient table with Est / Std.E. / T-val and stars, plus AIC and GCV."""

    def stars(t):
        from scipy.stats import norm

        p = 2 * norm.sf(abs(t))
        return "***" if p < 0.01 else "**" if p < 0.05 else "*" if p < 0.1 else ""

    models = [("Base.", base)] + ([("Vis.", vis)] if vis is not None else [])
    labels = []
    for _, m in models:
        for row in m.table():
            if row[0] not in labels:
                labels.append(row[0])
    head = ["Par"] + [f"{tag} {col}" for tag, _ in models for col in ("Est", "Std.E.", "T-val.")]
    lines = ["\t".join(head)]
    for lab in labels:
        cells = [lab]
        for _, m in models:
            row = next((r for r in m.table() if r[0] == lab), None)
            if row is None:
                cells += ["", "", ""]
            else:
                cells += [f"{row[1]:.3f}", f"{row[2]:.3f}", f"{row[3]:.0f}{stars(row[3])}"]
        lines.append("\t".join(cells))
    lines.append("\t".join(["AIC"] + [x for _, m in models for x in (f"{m.aic:.0f}", "", "")]))
    lines.append("\t".join(["GCV"] + [x for _, m in models for x in (f"{m.gcv_score:.3f}", "", "")]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# network building blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CnnSpec:
    """VGG-style stack of 3x3 convolutions with 2x2 pooling after each block."""

    depth: int = 4
    side: int = 64
    base_width: int = 4
    channels: int = 3

    def __post_init__(self):
        if self.depth not in CNN_DEPTHS:
            raise ValueError(f"cnn depth must be one of {CNN_DEPTHS}")
        if self.side % (2 ** self.n_pools):
            raise ValueError(f"image side {self.side} not divisible by 2^{self.n_pools}")

    @property
    def blocks(self):
        return _BLOCKS[self.depth]

    @property
    def n_pools(self):
        return len(self.blocks)

    @property
    def flat_width(self) -> int:
        final = self.side // 2 ** self.n_pools
        return final * final * self.base_width * _WIDTH_MULT[self.n_pools - 1]

    def build(self, rng, name="cnn") -> nn.Sequential:
        layers, c = [], self.channels
        for b, n_conv in enumerate(self.blocks):
            width = self.base_width * _WIDTH_MULT[b]
            for _ in range(n_conv):
                layers += [nn.Conv3x3(c, width, rng), nn.ReLU()]
                c = width
            layers.append(nn.MaxPool2x2())
        layers.append(nn.Flatten())
        return nn.Sequential(layers, (self.side, self.side, self.channels), name)


def mlp(widths, rng, name="mlp", final_relu=False) -> nn.Sequential:
    layers = []
    for k in range(len(widths) - 1):
        layers.append(nn.Dense(widths[k], widths[k + 1], rng))
        if k < len(widths) - 2 or final_relu:
            layers.append(nn.ReLU())
    return nn.Sequential(layers, (widths[0],), name)


def _sub_rng(seed, key):
    # one stream per sub-network so shared parts start identical across configs
    return np.random.default_rng([int(seed), key])


def _image_input(batch):
    return as_float_images(batch) - 0.5


@dataclass
class TrainConfig:
    epochs: int = 80
    learning_rate: float = 0.001
    batch_size: int = 32
    seed: int = 0
    select_best: bool = True


@dataclass
class TrainHistory:
    train_mse: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)
    best_epoch: int = -1

    @property
    def best_val_mse(self):
        return self.val_mse[self.best_epoch] if self.val_mse else float("nan")


class _Network:
    """Shared plumbing: parameter dict, standardised target, batched predict."""

    y_mean = 0.0
    y_scale = 1.0

    def parameters(self) -> dict:
        raise NotImplementedError

    def layer_kinds(self) -> dict:
        raise NotImplementedError

    def _forward(self, inputs):
        raise NotImplementedError

    def _backward(self, state, grad):
        raise NotImplementedError

    def _inputs(self, fold: Fold, idx):
        raise NotImplementedError

    def raw_output(self, fold: Fold, chunk: int = 128) -> np.ndarray:
        out = []
        for start in range(0, len(fold), chunk):
            idx = np.arange(start, min(start + chunk, len(fold)))
            pred, _ = self._forward(self._inputs(fold, idx))
            out.append(pred[:, 0])
        return np.concatenate(out) if out else np.zeros(0)

    def predict_fold(self, fold: Fold) -> np.ndarray:
        return self.y_mean + self.y_scale * self.raw_output(fold)

    def save(self, path) -> None:
        weights = dict(self.parameters())
        weights["target.scale"] = np.array([self.y_mean, self.y_scale])
        nn.save_checkpoint(path, weights, {**self.layer_kinds(), "target.scale": "target"})

    def load(self, path) -> None:
        loaded = nn.load_checkpoint(path)
        self.y_mean, self.y_scale = (float(v) for v in loaded.pop("target.scale"))
        nn.load_into(self.parameters(), loaded)


def _train(net: _Network, train: Fold, val: Fold | None, target, val_target, cfg: TrainConfig):
    """Minibatch ADAM on MSE; keeps the weights of the best validation epoch."""
    rng = np.random.default_rng([int(cfg.seed), 99])
    state = nn.AdamState(learning_rate=cfg.learning_rate)
    params = net.parameters()
    history = TrainHistory()
    best = None
    n = len(train)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            pred, cache = net._forward(net._inputs(train, idx))
            loss, grad = nn.mse_loss(pred, target[idx])
            grads = net._backward(cache, grad)
            nn.adam_step(params, grads, state)
            losses.append(loss * len(idx))
        history.train_mse.append(float(np.sum(losses) / n) * net.y_scale ** 2)
        if val is not None and len(val):
            err = net.raw_output(val) - val_target
            vmse = float(np.mean(err ** 2)) * net.y_scale ** 2
            if not np.isfinite(vmse):
                raise nn.NonFiniteError(f"validation loss diverged at epoch {epoch}")
            history.val_mse.append(vmse)
            if best is None or vmse < history.val_mse[history.best_epoch]:
                history.best_epoch = epoch
                best = {k: v.copy() for k, v in params.items()}
    if cfg.select_best and best is not None:
        for k, v in params.items():
            v[...] = best[k]
    elif cfg.epochs:
        history.best_epoch = cfg.epochs - 1
    return history


# ---------------------------------------------------------------------------
# fused hedonic network
# ---------------------------------------------------------------------------


class HedonicNet(_Network):
    """H(X, F(S), G(A)) for any non-empty subset of the three input sources.

    The attribute branch is a 128-64 ReLU perceptron. With X alone a single
    dense layer reads out the price; otherwise the 64-wide attribute vector
    is concatenated with the flattened CNN features and passed through a
    second 128-64 perceptron.
    """

    def __init__(self, inputs="XSA", n_attributes: int = 8, cnn: CnnSpec | None = None, seed: int = 0):
        self.inputs = "".join(s for s in INPUT_SOURCES if s in set(inputs))
        if not self.inputs:
            raise ValueError("select at least one of X, S, A")
        self.cnn = cnn or CnnSpec()
        self.n_attributes = n_attributes
        self.attr = mlp([n_attributes, 128, 64], _sub_rng(seed, 1), "attr", final_relu=True) if "X" in self.inputs else None
        self.street = self.cnn.build(_sub_rng(seed, 2), "street") if "S" in self.inputs else None
        self.aerial = self.cnn.build(_sub_rng(seed, 3), "aerial") if "A" in self.inputs else None
        if self.inputs == "X":
            self.head = mlp([64, 1], _sub_rng(seed, 4), "head")
        else:
            self.head = mlp([self.fusion_width, 128, 64, 1], _sub_rng(seed, 5), "head")

    @property
    def fusion_width(self) -> int:
        return (64 if "X" in self.inputs else 0) + self.cnn.flat_width * (("S" in self.inputs) + ("A" in self.inputs))

    def _branches(self):
        return [(k, b) for k, b in (("attr", self.attr), ("street", self.street), ("aerial", self.aerial)) if b is not None]

    def parameters(self):
        out = {}
        for key, b in self._branches() + [("head", self.head)]:
            out.update(b.parameters(f"{key}."))
        return out

    def layer_kinds(self):
        out = {}
        for key, b in self._branches() + [("head", self.head)]:
            out.update(b.layer_kinds(f"{key}."))
        return out

    def _inputs(self, fold, idx):
        return {
            "attr": fold.X[idx] if self.attr is not None else None,
            "street": _image_input(fold.street[idx]) if self.street is not None else None,
            "aerial": _image_input(fold.aerial[idx]) if self.aerial is not None else None,
        }

    def _forward(self, inputs):
        traces = {k: nn.forward(b, inputs[k]) for k, b in self._branches()}
        z, widths = nn.concat([traces[k].output for k, _ in self._branches()])
        head = nn.forward(self.head, z)
        return head.output, (traces, widths, head)

    def _backward(self, cache, grad):
        traces, widths, head = cache
        dz, grads = self.head.backward(head, grad)
        out = {f"head.{k}": v for k, v in grads.items()}
        for (key, branch), d in zip(self._branches(), nn.split_grad(dz, widths)):
            _, g = branch.backward(traces[key], d, input_grad=False)
            out.update({f"{key}.{k}": v for k, v in g.items()})
        return {k: out[k] for k in self.parameters()}


@dataclass
class FittedNet:
    model: _Network
    history: TrainHistory

    def predict_fold(self, fold):
        return self.model.predict_fold(fold)


def _check_images(fold, inputs):
    for src, arr in (("S", fold.street), ("A", fold.aerial)):
        if src in inputs and arr is None:
            raise ValueError(f"input {src} requested but fold {fold.name!r} carries no images")


def full_model_fit(train: Fold, val: Fold, cnn_depth: int = 4, inputs="XSA",
                   config: TrainConfig | None = None, cnn: CnnSpec | None = None) -> FittedNet:
    """Train H end to end by ADAM on MSE for one ablation configuration."""
    cfg = config or TrainConfig()
    _check_images(train, inputs)
    _check_images(val, inputs)
    side = train.street.shape[1] if train.street is not None else 64
    cnn = cnn or CnnSpec(depth=cnn_depth, side=side)
    net = HedonicNet(inputs, train.X.shape[1] if train.X is not None else 8, cnn, cfg.seed)
    net.y_mean = float(np.mean(train.y))
    net.y_scale = float(np.std(train.y)) or 1.0
    history = _train(net, train, val, (train.y - net.y_mean) / net.y_scale,
                     (val.y - net.y_mean) / net.y_scale, cfg)
    return FittedNet(net, history)


def fit_attribute_perceptron(train: Fold, val: Fold, config: TrainConfig | None = None) -> FittedNet:
    """H(X): the attribute-only hedonic perceptron."""
    return full_model_fit(train, val, inputs="X", config=config)


# ---------------------------------------------------------------------------
# scalar visual head and the two-stage procedure
# ---------------------------------------------------------------------------


class VisualNet(_Network):
    """V(F(S), G(A)): two CNNs and a two-layer head reduced to one scalar."""

    def __init__(self, cnn: CnnSpec | None = None, seed: int = 0, hidden: int = 64):
        self.cnn = cnn or CnnSpec()
        self.street = self.cnn.build(_sub_rng(seed, 2), "street")
        self.aerial = self.cnn.build(_sub_rng(seed, 3), "aerial")
        self.head = mlp([2 * self.cnn.flat_width, hidden, 1], _sub_rng(seed, 6), "visual")

    def parameters(self):
        return {**self.street.parameters("street."), **self.aerial.parameters("aerial."),
                **self.head.parameters("visual.")}

    def layer_kinds(self):
        return {**self.street.layer_kinds("street."), **self.aerial.layer_kinds("aerial."),
                **self.head.layer_kinds("visual.")}

    def _inputs(self, fold, idx):
        return {"street": _image_input(fold.street[idx]), "aerial": _image_input(fold.aerial[idx])}

    def _forward(self, inputs):
        ts = nn.forward(self.street, inputs["street"])
        ta = nn.forward(self.aerial, inputs["aerial"])
        z, widths = nn.concat([ts.output, ta.output])
        th = nn.forward(self.head, z)
        return th.output, (ts, ta, widths, th)

    def _backward(self, cache, grad):
        ts, ta, widths, th = cache
        dz, gh = self.head.backward(th, grad)
        ds, da = nn.split_grad(dz, widths)
        _, gs = self.street.backward(ts, ds, input_grad=False)
        _, ga = self.aerial.backward(ta, da, input_grad=False)
        out = {**{f"street.{k}": v for k, v in gs.items()},
               **{f"aerial.{k}": v for k, v in ga.items()},
               **{f"visual.{k}": v for k, v in gh.items()}}
        return {k: out[k] for k in self.parameters()}

    def proxy(self, fold: Fold) -> np.ndarray:
        """Visual proxy in log-price units (the predicted attribute residual)."""
        return self.predict_fold(fold)


@dataclass
class TwoStageResult:
    visual: VisualNet
    history: TrainHistory
    proxy: dict
    stage1: FittedNet | None = field(default=None, repr=False)  # diagnostics only

    def proxy_for(self, ids) -> np.ndarray:
        return np.array([self.proxy[str(i)] for i in ids])


def two_stage_train(train: Fold, val: Fold, cnn_depth: int = 4, config: TrainConfig | None = None,
                    score: Fold | None = None, cnn: CnnSpec | None = None,
                    keep_stage1: bool = False) -> TwoStageResult:
    """Fit H(X), then train V(F(S), G(A)) on its residuals.

    The attribute model only supplies the residual target and is dropped
    afterwards (kept on the result when ``keep_stage1``). Proxy values are
    returned for the train and validation rows and for every row of
    ``score``, which may include streets that never sold.
    """
    cfg = config or TrainConfig()
    _check_images(train, "SA")
    _check_images(val, "SA")
    stage1 = fit_attribute_perceptron(train, val, cfg)
    r_train = train.y - stage1.predict_fold(train)
    r_val = val.y - stage1.predict_fold(val)
    cnn = cnn or CnnSpec(depth=cnn_depth, side=train.street.shape[1])
    vis = VisualNet(cnn, cfg.seed)
    vis.y_mean = float(np.mean(r_train))
    vis.y_scale = float(np.std(r_train)) or 1.0
    history = _train(vis, train, val, (r_train - vis.y_mean) / vis.y_scale,
                     (r_val - vis.y_mean) / vis.y_scale, cfg)
    proxy = {}
    for fold in (train, val) + ((score,) if score is not None else ()):
        proxy.update(zip(fold.ids, vis.proxy(fold)))
    return TwoStageResult(vis, history, proxy, stage1 if keep_stage1 else None)


@dataclass
class HybridChain:
    """Visual head feeding its proxy into an interpretable model.

    ``model`` is any fitted model with a proxy column (OLS, GAM or boosted
    trees) that reads the proxy from ``fold.extra["proxy"]``.
    """

    visual: VisualNet
    model: object

    def proxy(self, fold: Fold) -> np.ndarray:
        return self.visual.proxy(fold)

    def predict_fold(self, fold: Fold) -> np.ndarray:
        return self.model.predict_fold(replace(fold, extra={**fold.extra, "proxy": self.proxy(fold)}))
