"""Covariate-adjusted counterfactuals by distribution regression.

At every grid point ``y`` the indicator ``1{Y <= y}`` is regressed on the
dictionary ``p(X)`` separately in cells (0,0), (1,0) and (0,1) by binary
QMLE. With ``eta_dt`` the fitted coefficients, the counterfactual DF of
the treated group in period 1 is the average over treated post-period
units of ``Phi_out(p(X) (eta_10 + eta_01 - eta_00))``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import links as lk
from .data import Design, PanelDataset
from .ecdf import Grid, StepDF, group_period_ecdf
from .effects import EffectCurve, dtt
from .errors import ConfigError, DataError, IdentificationError
from .identify import LinkRegime, resolve_eps
from .links import Link

PROB_CLIP = 1e-10
INDEX_LIMIT = 30.0


@dataclass(frozen=True)
class DRSpec:
    """Dictionary and optimizer settings.

    ``dictionary`` is ``'constant'``, ``'linear'`` or ``'quadratic'``
    (squares plus pairwise products). The constant term is always the
    first column.
    """

    covariates: tuple = ()
    dictionary: str = "linear"
    max_iter: int = 100
    tol: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if self.dictionary not in ("constant", "linear", "quadratic"):
            raise ConfigError(f"unknown dictionary {self.dictionary!r}; "
                              "valid: constant, linear, quadratic")


def dictionary_matrix(Z: np.ndarray, kind: str) -> tuple[np.ndarray, list[str]]:
    """Expand raw covariates ``Z`` (n, k) into ``p(X)``."""
    Z = np.asarray(Z, dtype=float)
    n, k = Z.shape
    cols, names = [np.ones(n)], ["1"]
    if kind in ("linear", "quadratic"):
        cols += [Z[:, j] for j in range(k)]
        names += [f"x{j}" for j in range(k)]
    if kind == "quadratic":
        for i, j in itertools.combinations_with_replacement(range(k), 2):
            cols.append(Z[:, i] * Z[:, j])
            names.append(f"x{i}*x{j}")
    return np.column_stack(cols), names


def prune_collinear(mats: Sequence[np.ndarray]) -> list[int]:
    """Greedy column selection keeping full rank in every matrix.

    Column 0 (the intercept) is always kept.
    """
    keep = [0]
    p = mats[0].shape[1]
    for j in range(1, p):
        trial = keep + [j]
        if all(np.linalg.matrix_rank(M[:, trial]) == len(trial) for M in mats):
            keep = trial
    return keep


@dataclass(frozen=True, eq=False)
class QMLEResult:
    coef: np.ndarray
    converged: bool
    flags: frozenset = frozenset()
    loglik: float = float("nan")
    grad_norm: float = float("nan")
    iterations: int = 0


def _pieces(link: Link, z: np.ndarray):
    P = np.clip(lk._cdf(link, z), PROB_CLIP, 1 - PROB_CLIP)
    phi = np.asarray(lk.density(link, z))
    dphi = lk.density_derivative(link, z)
    return P, phi, dphi


def loglik(eta, r, X, link: Link, w=None) -> float:
    z = X @ eta
    P = np.clip(lk._cdf(link, z), PROB_CLIP, 1 - PROB_CLIP)
    ll = r * np.log(P) + (1 - r) * np.log1p(-P)
    return float(ll.sum() if w is None else w @ ll)


def score(eta, r, X, link: Link, w=None) -> np.ndarray:
    z = X @ eta
    P, phi, _ = _pieces(link, z)
    s = phi * (r - P) / (P * (1 - P))
    if w is not None:
        s = w * s
    return X.T @ s


def _hessians(eta, r, X, link: Link, w):
    z = X @ eta
    P, phi, dphi = _pieces(link, z)
    v = P * (1 - P)
    exact = dphi * (r - P) / v - phi ** 2 * (v + (r - P) * (1 - 2 * P)) / v ** 2
    fisher = -phi ** 2 / v
    return X.T @ ((w * exact)[:, None] * X), X.T @ ((w * fisher)[:, None] * X)


def _newton(r, X, link, w, start, tol, max_iter) -> QMLEResult:
    eta = np.array(start, dtype=float)
    flags = set()
    ll = loglik(eta, r, X, link, w)
    wsum = float(w.sum())
    # summation rounding in the log-likelihood; smaller losses are noise
    slack = np.finfo(float).eps * r.size
    g = score(eta, r, X, link, w)
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        if np.max(np.abs(X @ eta)) > INDEX_LIMIT:
            flags.add("separated")
            break
        if np.linalg.norm(g) < tol:
            converged = True
            break
        H, F = _hessians(eta, r, X, link, w)
        try:
            np.linalg.cholesky(-H)
            A = -H
        except np.linalg.LinAlgError:
            A = -F
            flags.add("fisher")
        try:
            step = np.linalg.solve(A, g)
        except np.linalg.LinAlgError:
            flags.add("singular")
            break
        t = 1.0
        for _ in range(40):
            cand = eta + t * step
            ll_c = loglik(cand, r, X, link, w)
            if ll_c >= ll - slack * (1.0 + abs(ll)):
                break
            t *= 0.5
        else:
            # no ascent left at working precision
            converged = np.linalg.norm(g) < max(tol, 1e-10 * max(wsum, 1.0))
            break
        eta, ll = cand, ll_c
        g = score(eta, r, X, link, w)
    else:
        converged = np.linalg.norm(g) < tol
    if not converged and "separated" not in flags:
        flags.add("not_converged")
    return QMLEResult(eta, converged, frozenset(flags), ll, float(np.linalg.norm(g)), it)


def qmle_binary_fit(responses, design, link, weights=None, eps=None, tol: float = 1e-9,
                    max_iter: int = 100) -> QMLEResult:
    """Binary-response QMLE by Newton-Raphson with step halving.

    Parameters
    ----------
    responses : 0/1 vector
    design : (n, p) matrix whose first column is the constant 1
    link : strictly increasing link
    weights : optional nonnegative observation weights
    eps : float, optional
        When the (weighted) response mean lies outside ``[eps, 1-eps]`` the
        fit is intercept-only at ``link^-1(clip(mean))`` and flagged
        ``degenerate``. Defaults to ``1/(4 n)``.
    """
    link = Link.parse(link)
    if not link.unbounded:
        raise ConfigError(f"QMLE needs a strictly increasing link, not {link}")
    r = np.asarray(responses, dtype=float)
    X = np.asarray(design, dtype=float)
    if X.ndim != 2 or X.shape[0] != r.size:
        raise DataError("design must be an (n, p) matrix matching the responses")
    w = np.ones(r.size) if weights is None else np.asarray(weights, dtype=float)
    if (w < 0).any():
        raise ConfigError("QMLE weights must be nonnegative")
    wsum = float(w.sum())
    if wsum <= 0:
        raise DataError("QMLE sample has zero total weight")
    if not np.all(X[:, 0] == 1.0):
        raise DataError("first design column must be the constant 1")
    p = X.shape[1]
    m = float(w @ r) / wsum
    eps = 1.0 / (4.0 * wsum) if eps is None else eps
    coef0 = np.zeros(p)
    if m <= eps or m >= 1 - eps:
        coef0[0] = lk._quantile(link, np.clip(m, eps, 1 - eps))
        return QMLEResult(coef0, True, frozenset({"degenerate"}), loglik(coef0, r, X, link, w),
                          float(np.linalg.norm(score(coef0, r, X, link, w))), 0)
    coef0[0] = lk._quantile(link, m)
    if p == 1:
        # the score equation has the closed-form root link^-1(mean)
        return QMLEResult(coef0, True, frozenset({"closed_form"}),
                          loglik(coef0, r, X, link, w),
                          float(np.linalg.norm(score(coef0, r, X, link, w))), 0)
    if np.linalg.matrix_rank(X[w > 0]) < p:
        raise DataError("design matrix is rank deficient")
    if link is Link.CAUCHY:
        start = np.zeros(p)
        start[0] = lk._quantile(Link.NORMAL, m)
        probit = _newton(r, X, Link.NORMAL, w, start, tol, max_iter)
        fits = [_newton(r, X, link, w, probit.coef, tol, max_iter),
                _newton(r, X, link, w, np.zeros(p), tol, max_iter)]
        best = max(fits, key=lambda f: f.loglik if np.isfinite(f.loglik) else -np.inf)
        return QMLEResult(best.coef, best.converged, best.flags | {"nonconcave"}, best.loglik,
                          best.grad_norm, best.iterations)
    return _newton(r, X, link, w, coef0, tol, max_iter)


@dataclass(frozen=True, eq=False)
class CoefCurve:
    """Per-grid-point coefficient vectors (rows) for the three fitted cells."""

    grid: Grid
    columns: tuple
    eta00: np.ndarray
    eta10: np.ndarray
    eta01: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def alpha(self) -> np.ndarray:
        return self.eta00

    @property
    def beta(self) -> np.ndarray:
        return self.eta10 - self.eta00

    @property
    def gamma(self) -> np.ndarray:
        return self.eta01 - self.eta00

    @property
    def index_coef(self) -> np.ndarray:
        """``alpha + beta + gamma`` evaluated as ``eta10 + eta01 - eta00``."""
        return self.eta10 + self.eta01 - self.eta00


class CovariateModel:
    """Precomputed cell design matrices for repeated three-step fits."""

    CELLS = {"00": (0.0, 0), "10": (1.0, 0), "01": (0.0, 1), "11": (1.0, 1)}

    def __init__(self, data: PanelDataset, spec: DRSpec, regime: LinkRegime, grid: Grid):
        if data.design is not Design.TWO_PERIOD:
            raise ConfigError("covariates are supported for two-period designs only")
        names = list(spec.covariates)
        missing = [c for c in names if c not in data.covariate_names]
        if missing:
            raise ConfigError(f"covariate columns not in data: {', '.join(missing)}")
        cols = [data.covariate_names.index(c) for c in names]
        Z = data.covariates[:, cols]
        full, fnames = dictionary_matrix(Z, spec.dictionary if names else "constant")
        self.rows, self.X = {}, {}
        for key, (g, t) in self.CELLS.items():
            rows = np.flatnonzero(data.cell_mask(g, t))
            if rows.size == 0:
                raise IdentificationError(f"cell (group={g:g}, period={t}) has no observations")
            self.rows[key] = rows
        keep = prune_collinear([full[self.rows[k]] for k in ("00", "10", "01")])
        self.columns = tuple(fnames[j] for j in keep)
        for key in self.CELLS:
            self.X[key] = full[self.rows[key]][:, keep]
        l10, l01, l00, lout = regime.resolve(1, 0, 0, 1)
        for lnk in (l10, l01, l00, lout):
            if not lnk.unbounded:
                raise ConfigError(f"covariate adjustment needs strictly increasing links, not {lnk}")
        self.link = {"00": l00, "10": l10, "01": l01, "out": lout}
        self.data, self.spec, self.grid = data, spec, grid
        self.y = {k: data.outcome[r] for k, r in self.rows.items()}
        self.units = {k: data.unit[r] for k, r in self.rows.items()}

    def fit(self, unit_weights=None, eps=None) -> CoefCurve:
        """Three-step fits at every grid point."""
        L, p = len(self.grid), len(self.columns)
        etas = {k: np.zeros((L, p)) for k in ("00", "10", "01")}
        flags = {}
        for key in ("00", "10", "01"):
            w = None if unit_weights is None else unit_weights[self.units[key]]
            Xk = self.X[key] if w is None else self.X[key][w > 0]
            yk = self.y[key] if w is None else self.y[key][w > 0]
            wk = None if w is None else w[w > 0]
            for l, y in enumerate(self.grid.points):
                r = (yk <= y).astype(float)
                res = qmle_binary_fit(r, Xk, self.link[key], wk, eps, self.spec.tol,
                                      self.spec.max_iter)
                etas[key][l] = res.coef
                f = set(res.flags) - {"closed_form"}
                if f:
                    flags[(key, l)] = sorted(f)
        return CoefCurve(self.grid, self.columns, etas["00"], etas["10"], etas["01"],
                         {"flags": flags})

    def counterfactual_values(self, coefs: CoefCurve, unit_weights=None) -> np.ndarray:
        z = self.X["11"] @ coefs.index_coef.T  # (n11, L)
        v = lk._cdf(self.link["out"], z)
        if unit_weights is None:
            return v.mean(axis=0)
        w = unit_weights[self.units["11"]]
        return (w @ v) / w.sum()


def _cell_eps(model: CovariateModel, clip, unit_weights=None, sizes=None):
    if sizes is None:
        if unit_weights is None:
            sizes = [model.rows[k].size for k in ("00", "10", "01")]
        else:
            sizes = [float(unit_weights[model.units[k]].sum()) for k in ("00", "10", "01")]
    eps = resolve_eps(clip, *sizes)
    if eps is None:
        raise ConfigError("covariate adjustment requires boundary clipping (clip='auto' or a float)")
    return eps


def dr_three_step(data: PanelDataset, spec: DRSpec, grid: Grid, regime: LinkRegime | None = None,
                  clip="auto") -> CoefCurve:
    regime = regime or LinkRegime()
    model = CovariateModel(data, spec, regime, grid)
    return model.fit(eps=_cell_eps(model, clip))


def counterfactual_x(data: PanelDataset, coefs: CoefCurve, spec: DRSpec, grid: Grid,
                     regime: LinkRegime | None = None) -> StepDF:
    regime = regime or LinkRegime()
    model = CovariateModel(data, spec, regime, grid)
    if tuple(model.columns) != tuple(coefs.columns):
        raise ConfigError("coefficient curve was fitted with a different dictionary")
    v = np.clip(model.counterfactual_values(coefs), 0.0, 1.0)
    return StepDF(grid, v, "F_cf^X[1,1]", bool((np.diff(v) >= 0).all()),
                  meta={"flags": coefs.diagnostics.get("flags", {})})


def dtt_x(data: PanelDataset, coefs: CoefCurve, spec: DRSpec, grid: Grid,
          regime: LinkRegime | None = None) -> EffectCurve:
    cf = counterfactual_x(data, coefs, spec, grid, regime)
    return dtt(group_period_ecdf(data, 1.0, 1, grid), cf)
