"""Additive hedonic model with one penalised cubic radial smooth per column.

Each term ``f(x)`` is built from ``x`` itself plus cubic radial functions
``|x - knot|^3`` restricted to coefficient vectors orthogonal to ``[1, knot]``
(the one-dimensional thin-plate construction). Only the radial part is
penalised, so an infinitely smoothed term is a straight line. Columns are
centred on the training rows, which makes every term sum to zero there and
leaves the mean level to the intercept.

Smoothing parameters are chosen by generalised cross-validation,
``n * RSS / (n - tr(A))**2``, over a log-spaced grid with coordinate-wise
sweeps.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import stats

from .data import Fold

LAMBDA_GRID = np.logspace(-6, 6, 25)


class GamError(ValueError):
    pass


@dataclass
class SmoothBasis:
    """Basis and penalty of one term, frozen at fit time."""

    name: str
    knots: np.ndarray
    null_proj: np.ndarray  # K x (K-2) constraint null space
    col_means: np.ndarray
    penalty: np.ndarray  # (K-1) x (K-1), scaled
    support: tuple

    @property
    def dim(self) -> int:
        return len(self.col_means)

    def raw(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        cols = [x[:, None]]
        if self.null_proj.shape[1]:
            cols.append(np.abs(x[:, None] - self.knots[None, :]) ** 3 @ self.null_proj)
        return np.hstack(cols)

    def __call__(self, x) -> np.ndarray:
        return self.raw(x) - self.col_means


def make_basis(name: str, x, k: int = 10) -> SmoothBasis:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    knots = np.unique(np.quantile(x, np.linspace(0.0, 1.0, k)))
    if len(knots) < 2:
        raise GamError(f"term {name!r} is constant on the training rows")
    K = len(knots)
    if K >= 3:
        T = np.column_stack([np.ones(K), knots])
        q, _ = np.linalg.qr(T, mode="complete")
        Z = q[:, 2:]
        E = np.abs(knots[:, None] - knots[None, :]) ** 3 / 12.0
        S_rad = Z.T @ E @ Z
        S_rad = 0.5 * (S_rad + S_rad.T)
    else:
        Z = np.zeros((K, 0))
        S_rad = np.zeros((0, 0))
    basis = SmoothBasis(name, knots, Z, np.zeros(K - 1), np.zeros((K - 1, K - 1)),
                        (float(x.min()), float(x.max())))
    raw = basis.raw(x)
    basis.col_means = raw.mean(axis=0)
    B = raw - basis.col_means
    S = np.zeros((K - 1, K - 1))
    S[1:, 1:] = S_rad
    norm_s = np.linalg.norm(S)
    if norm_s > 0:
        # put lambda on the scale of the data so one grid serves every term
        S *= np.linalg.norm(B.T @ B) / norm_s
    basis.penalty = S
    return basis


@dataclass
class SmoothTerm:
    basis: SmoothBasis
    lam: float
    coef: np.ndarray
    edf: float
    ref_df: float
    f_stat: float
    p_value: float
    cov: np.ndarray = field(repr=False)

    @property
    def name(self):
        return self.basis.name

    def contribution(self, x) -> np.ndarray:
        return self.basis(x) @ self.coef


@dataclass
class GamProblem:
    """Centred design and penalties; evaluates fits for a vector of lambdas."""

    bases: list
    design: np.ndarray
    y: np.ndarray
    slices: list = field(init=False)

    def __post_init__(self):
        self.slices, start = [], 1
        for b in self.bases:
            self.slices.append(slice(start, start + b.dim))
            start += b.dim
        self.gram = self.design.T @ self.design
        self.xty = self.design.T @ self.y
        self.yty = float(self.y @ self.y)
        self.n = len(self.y)

    @property
    def p(self) -> int:
        return self.design.shape[1]

    def penalty(self, lambdas) -> np.ndarray:
        S = np.zeros((self.p, self.p))
        for lam, b, sl in zip(lambdas, self.bases, self.slices):
            S[sl, sl] += lam * b.penalty
        return S

    def solve(self, lambdas):
        A = self.gram + self.penalty(lambdas)
        try:
            fac = scipy.linalg.cho_factor(A)
        except np.linalg.LinAlgError:
            raise GamError("penalised normal equations are singular") from None
        beta = scipy.linalg.cho_solve(fac, self.xty)
        influence = scipy.linalg.cho_solve(fac, self.gram)  # A^-1 X'X
        rss = max(self.yty - 2 * beta @ self.xty + beta @ self.gram @ beta, 0.0)
        return beta, influence, rss, fac

    def gcv(self, lambdas) -> float:
        _, F, rss, _ = self.solve(lambdas)
        tr = np.trace(F)
        return self.n * rss / (self.n - tr) ** 2


def gam_design(X, names, k: int = 10, proxy=None) -> GamProblem:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    cols = [X[:, j] for j in range(X.shape[1])]
    names = list(names)
    if proxy is not None:
        cols.append(np.asarray(proxy, dtype=np.float64).reshape(-1))
        names.append("vis")
    bases = [make_basis(nm, c, k) for nm, c in zip(names, cols)]
    design = np.column_stack([np.ones(len(cols[0]))] + [b(c) for b, c in zip(bases, cols)])
    return GamProblem(bases, design, np.zeros(len(cols[0])))


@dataclass
class GamModel:
    intercept: float
    intercept_se: float
    terms: list
    n: int
    rss: float
    edf_total: float
    sigma2: float
    gcv: float
    aic: float
    r2: float
    has_proxy: bool = False

    @property
    def names(self):
        return [t.name for t in self.terms]

    def term(self, name: str) -> SmoothTerm:
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(f"unknown attribute {name!r}")

    @property
    def lambdas(self):
        return [t.lam for t in self.terms]

    def predict(self, X, proxy=None) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        cols = [X[:, j] for j in range(X.shape[1])]
        if self.has_proxy:
            if proxy is None:
                raise ValueError("model was fitted with a visual proxy term")
            cols.append(np.asarray(proxy, dtype=np.float64).reshape(-1))
        if len(cols) != len(self.terms):
            raise ValueError("column count does not match the fitted terms")
        return self.intercept + sum(t.contribution(c) for t, c in zip(self.terms, cols))

    def predict_fold(self, fold: Fold) -> np.ndarray:
        return self.predict(fold.X, fold.extra.get("proxy") if self.has_proxy else None)


def _select_lambdas(problem: GamProblem, grid, sweeps: int, start=None):
    lambdas = list(start) if start is not None else [float(grid[len(grid) // 2])] * len(problem.bases)
    for _ in range(sweeps):
        for j in range(len(lambdas)):
            scores = []
            for lam in grid:
                trial = list(lambdas)
                trial[j] = float(lam)
                scores.append(problem.gcv(trial))
            lambdas[j] = float(grid[int(np.argmin(scores))])
    return lambdas


def gam_fit(X, y, names=None, proxy=None, k: int = 10, grid=LAMBDA_GRID, sweeps: int = 2,
            lambdas=None) -> GamModel:
    """Fit the additive model; pass ``lambdas`` to skip the GCV search."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
    problem = gam_design(X, names, k, proxy)
    problem.y = y
    problem.__post_init__()
    n = len(y)
    if n <= problem.p:
        raise GamError(f"need more rows ({n}) than basis functions ({problem.p})")
    if lambdas is None:
        lambdas = _select_lambdas(problem, np.asarray(grid, dtype=np.float64), sweeps)
    beta, F, rss, fac = problem.solve(lambdas)
    tr = float(np.trace(F))
    sigma2 = rss / (n - tr)
    a_inv = scipy.linalg.cho_solve(fac, np.eye(problem.p))
    cov = sigma2 * a_inv
    FF = F @ F
    terms = []
    for lam, b, sl in zip(lambdas, problem.bases, problem.slices):
        edf = float(np.trace(F[sl, sl]))
        ref_df = float(np.trace(2 * F[sl, sl] - FF[sl, sl]))
        coef = beta[sl].copy()
        V = cov[sl, sl]
        # Wald statistic on the term's fitted values, so the rank-r inverse is
        # taken in a well-scaled space rather than raw coefficient space
        r = max(1, min(b.dim, int(round(ref_df))))
        R = np.linalg.qr(problem.design[:, sl], mode="r")
        w, U = np.linalg.eigh(R @ V @ R.T)
        top = np.argsort(w)[::-1][:r]
        proj = U[:, top].T @ (R @ coef)
        wald = float(np.sum(proj ** 2 / w[top]))
        f_stat = wald / r
        p_value = float(stats.f.sf(f_stat, r, max(n - tr, 1.0)))
        terms.append(SmoothTerm(b, float(lam), coef, edf, ref_df, f_stat, p_value, V))
    loglik = -0.5 * n * (np.log(2 * np.pi * rss / n) + 1.0)
    tss = float(np.sum((y - y.mean()) ** 2))
    return GamModel(
        intercept=float(beta[0]), intercept_se=float(np.sqrt(cov[0, 0])), terms=terms, n=n,
        rss=float(rss), edf_total=tr, sigma2=float(sigma2),
        gcv=float(n * rss / (n - tr) ** 2), aic=float(2 * (tr + 1) - 2 * loglik),
        r2=float(100 * (1 - rss / tss)) if tss > 0 else float("nan"), has_proxy=proxy is not None,
    )


@dataclass
class PartialDependence:
    attribute: str
    grid: np.ndarray
    value: np.ndarray
    se: np.ndarray

    @property
    def lower(self):
        return self.value - 2 * self.se

    @property
    def upper(self):
        return self.value + 2 * self.se


def partial_dependence(model: GamModel, attribute: str, grid=None) -> PartialDependence:
    """One term's contribution over ``grid`` with a pointwise +-2 se band.

    The model is additive, so holding the other columns at their training
    means only shifts the curve by a constant; the centred term is reported.
    """
    term = model.term(attribute)
    if grid is None:
        grid = np.linspace(0.0, 1.0, 101)
    grid = np.asarray(grid, dtype=np.float64)
    B = term.basis(grid)
    value = B @ term.coef
    se = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", B, term.cov, B), 0.0))
    return PartialDependence(attribute, grid, value, se)


def range_effect(model: GamModel, term: str, values=None, n_grid: int = 201) -> float:
    """Multiplicative price span exp(max f - min f) over the term's support."""
    t = model.term(term)
    if values is None:
        lo, hi = t.basis.support
        values = np.linspace(lo, hi, n_grid)
    f = t.contribution(values)
    return float(np.exp(f.max() - f.min()))


def format_gam_report(base: GamModel, vis: GamModel | None = None) -> str:
    """Parametric and smooth-term blocks (EDF, R.df, F) plus AIC and GCV."""
    models = [("Base.", base)] + ([("Vis.", vis)] if vis is not None else [])

    def stars(p):
        return "***" if p < 0.01 else "**" if p < 0.05 else "*" if p < 0.1 else ""

    lines = ["\t".join(["Par"] + [f"{tag} {c}" for tag, _ in models for c in ("Est", "Std.E.", "T-val.")])]
    cells = ["Inter."]
    for _, m in models:
        t = m.intercept / m.intercept_se
        cells += [f"{m.intercept:.3f}", f"{m.intercept_se:.3f}", f"{t:.0f}***"]
    lines.append("\t".join(cells))
    lines.append("\t".join(["N.Par"] + [f"{tag} {c}" for tag, _ in models for c in ("EDF", "R.df", "F-val.")]))
    names = list(dict.fromkeys(n for _, m in models for n in m.names))
    for name in names:
        cells = [name]
        for _, m in models:
            try:
                t = m.term(name)
                cells += [f"{t.edf:.2f}", f"{t.ref_df:.2f}", f"{t.f_stat:.2f}{stars(t.p_value)}"]
            except KeyError:
                cells += ["", "", ""]
        lines.append("\t".join(cells))
    lines.append("\t".join(["AIC"] + [x for _, m in models for x in (f"{m.aic:.0f}", "", "")]))
    lines.append("\t".join(["GCV"] + [x for _, m in models for x in (f"{m.gcv:.3f}", "", "")]))
    return "\n".join(lines) + "\n"


def write_partial_dependence(path, curves) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["attribute", "grid_x", "f", "se"])
        for c in curves:
            for x, f, s in zip(c.grid, c.value, c.se):
                w.writerow([c.attribute, repr(float(x)), repr(float(f)), repr(float(s))])
