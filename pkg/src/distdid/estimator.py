"""Estimator shared by point estimation and every bootstrap replication.

The whole pipeline (cell ECDFs, counterfactuals, aggregation, DTT) is
written in terms of a matrix of unit weights ``W`` of shape ``(R, N)``.
Unit weights of one give the point estimate; a nonparametric bootstrap
draw is the vector of unit multiplicities; a multiplier draw is
``1 + xi``. Each row of ``W`` is processed independently, so results
do not depend on how rows are batched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .aggregate import (WeightScheme, equal_group_weights, equal_weights, event_structure,
                        explicit_weights, fmt_group, load_weights)
from .data import Design, PanelDataset, detect_design
from .drcov import CovariateModel, DRSpec
from .ecdf import CellIndex, Grid, StepDF
from .effects import EffectCurve
from .errors import ConfigError
from .identify import LinkRegime, cf_values, control_group, resolve_eps, validate_triple


@dataclass(frozen=True)
class EstimatorSpec:
    """Everything needed to turn a dataset and a grid into estimates.

    Parameters
    ----------
    regime : LinkRegime
    aggregate : str or WeightScheme
        ``"equal"``, ``"equal:<g>"``, ``"event:<e>"``, ``"triple:<g>,<t'>,<t>"``,
        ``"file:<path>"`` or an explicit scheme. Ignored for two-period data.
    clip : ``"auto"``, float or None
    monotonize : bool
        Running-max rearrangement of every counterfactual.
    covariates : DRSpec, optional
    adtt_method : ``"mean"`` or ``"trapezoid"``
    """

    regime: LinkRegime = field(default_factory=LinkRegime)
    aggregate: object = "equal"
    clip: object = "auto"
    monotonize: bool = False
    covariates: DRSpec | None = None
    adtt_method: str = "mean"


def resolve_scheme(data: PanelDataset, aggregate) -> tuple[WeightScheme | None, object]:
    """Fixed scheme, or ``(None, EventStructure)`` for event-study weights."""
    design = detect_design(data)
    if data.design is Design.TWO_PERIOD:
        return WeightScheme({(1.0, 0, 1): 1.0}, "two-period"), None
    if isinstance(aggregate, WeightScheme):
        return explicit_weights(aggregate.weights, design), None
    key = str(aggregate).strip()
    low = key.lower()
    if low == "equal":
        return equal_weights(design), None
    if low.startswith("equal:"):
        g = low.split(":", 1)[1]
        return equal_group_weights(design, math.inf if g == "inf" else float(g)), None
    if low.startswith("event:"):
        try:
            e = int(low.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad event time in {aggregate!r}") from None
        return None, event_structure(data, e)
    if low.startswith("triple:"):
        try:
            g, a, b = (s.strip() for s in low.split(":", 1)[1].split(","))
            k = (float(g), int(a), int(b))
        except ValueError:
            raise ConfigError(f"bad triple in {aggregate!r}; use triple:<g>,<t'>,<t>") from None
        return explicit_weights({k: 1.0}, design), None
    if low.startswith("file:"):
        return load_weights(key.split(":", 1)[1], design), None
    raise ConfigError(f"unknown aggregate {aggregate!r}; valid: equal, equal:<g>, event:<e>, "
                      "triple:<g>,<t'>,<t>, file:<path>")


@dataclass
class Replicates:
    """Curves for a batch of weightings, one row per weighting."""

    treated: np.ndarray
    cf: np.ndarray
    dtt: np.ndarray
    adtt: np.ndarray
    clipped: int = 0
    out_of_range: int = 0
    nonmonotone: int = 0


@dataclass
class PointEstimate:
    treated: StepDF
    counterfactual: StepDF
    dtt: EffectCurve
    adtt: float
    scheme: WeightScheme
    per_triple: dict
    diagnostics: dict


class Estimator:
    """Precomputes sorted cells once; evaluates any batch of unit weights."""

    def __init__(self, data: PanelDataset, grid: Grid, spec: EstimatorSpec | None = None):
        self.data, self.grid = data, grid
        self.spec = spec = spec or EstimatorSpec()
        self.scheme, self.event = resolve_scheme(data, spec.aggregate)
        self.triples = list(self.scheme.triples) if self.scheme else list(self.event.triples)
        self.control = control_group(data)
        for g, a, b in self.triples:
            validate_triple(data, g, a, b)
        needed = set()
        for g, a, b in self.triples:
            needed |= {(g, b), (g, a), (self.control, b), (self.control, a)}
        self.cells = {k: CellIndex(data, k[0], k[1], grid) for k in sorted(needed)}
        self.linksets = [spec.regime.resolve(g, self.control, a, b) for g, a, b in self.triples]
        self.cov = None
        if spec.covariates is not None:
            self.cov = CovariateModel(data, spec.covariates, spec.regime, grid)
        if spec.adtt_method not in ("mean", "trapezoid"):
            raise ConfigError(f"unknown ADTT method {spec.adtt_method!r}")
        if self.event is not None:
            self._ug = data.unit_groups()

    @property
    def required_cells(self) -> list:
        return list(self.cells)

    def cell_totals(self, W: np.ndarray) -> np.ndarray:
        """Total weight of each required cell, shape ``(R, n_cells)``."""
        return np.stack([W[:, c.units].sum(axis=1) for c in self.cells.values()], axis=1)

    def _weights(self, W: np.ndarray) -> np.ndarray:
        if self.event is None:
            return np.broadcast_to(self.scheme.vector(), (W.shape[0], len(self.triples)))
        counts = np.stack([W[:, self._ug == g].sum(axis=1) for g in self.event.groups], axis=1)
        return self.event.weights_from_counts(counts)

    def evaluate(self, W: np.ndarray, multiplier: bool = False) -> Replicates:
        """Curves for every row of unit weights ``W``.

        With ``multiplier=True`` ECDFs are clipped to [0, 1] and the
        clipping epsilon uses original cell counts instead of total weights.
        """
        W = np.atleast_2d(np.asarray(W, dtype=float))
        R, L = W.shape[0], len(self.grid)
        F, size = {}, {}
        for k, c in self.cells.items():
            F[k], tot = c.weighted(W, clip=multiplier)
            size[k] = np.full(R, float(c.count)) if multiplier else tot
        omega = self._weights(W)
        treated = np.zeros((R, L))
        cf = np.zeros((R, L))
        clipped = oor = nonmono = 0
        for j, ((g, a, b), links) in enumerate(zip(self.triples, self.linksets)):
            c = self.control
            if self.cov is not None:
                v = self._cov_cf(W, size, multiplier)
            else:
                eps = None
                if self.spec.clip is not None:
                    m = np.minimum(np.minimum(size[(g, a)], size[(c, b)]), size[(c, a)])
                    eps = self._eps_rows(m)
                v, diag = cf_values(F[(g, a)], F[(c, b)], F[(c, a)], links, eps, self.grid,
                                    self.spec.monotonize)
                clipped += diag["clipped"]
                oor += diag["out_of_range"]
            nonmono += int(np.count_nonzero((np.diff(v, axis=1) < 0).any(axis=1)))
            wj = omega[:, j:j + 1]
            treated += wj * F[(g, b)]
            cf += wj * v
        d = treated - cf
        if self.spec.adtt_method == "mean":
            ad = d.mean(axis=1)
        else:
            ad = np.trapezoid(d, self.grid.points, axis=1) if L > 1 else np.zeros(R)
        return Replicates(treated, cf, d, ad, clipped, oor, nonmono)

    def _eps_rows(self, m: np.ndarray):
        clip = self.spec.clip
        if isinstance(clip, str) and clip.strip().lower() == "auto":
            return (1.0 / (4.0 * m))[:, None]
        return resolve_eps(clip, 1)

    def _cov_cf(self, W, size, multiplier) -> np.ndarray:
        out = np.empty((W.shape[0], len(self.grid)))
        cells = [(1.0, 0), (0.0, 1), (0.0, 0)]
        for r in range(W.shape[0]):
            eps = resolve_eps(self.spec.clip, *(size[k][r] for k in cells))
            if eps is None:
                raise ConfigError("covariate adjustment requires boundary clipping")
            w = W[r]
            unit_w = None if np.all(w == 1.0) else w
            coefs = self.cov.fit(unit_w, eps)
            out[r] = np.clip(self.cov.counterfactual_values(coefs, unit_w), 0.0, 1.0)
            if self.spec.monotonize:
                out[r] = np.maximum.accumulate(out[r])
        return out

    def point(self) -> PointEstimate:
        rep = self.evaluate(np.ones((1, self.data.N)))
        oor = rep.out_of_range > 0
        tv, cv = rep.treated[0], rep.cf[0]
        if not oor:
            cv = np.clip(cv, 0.0, 1.0)
        tv = np.clip(tv, 0.0, 1.0)
        scheme = self.scheme or WeightScheme(dict(zip(self.triples, self._weights(
            np.ones((1, self.data.N)))[0])), f"event:{self.event.e}")
        treated = StepDF(self.grid, tv, "F_treated", monotone=True)
        mono = self.spec.monotonize or bool((np.diff(cv) >= 0).all())
        cf = StepDF(self.grid, cv, "F_counterfactual", monotone=mono, out_of_range=oor)
        curve = EffectCurve(self.grid.points, tv - cv, "dtt", label="DTT")
        per = {}
        if len(self.triples) > 1 and self.cov is None:
            per = self.per_triple()
        diag = {"clipped": rep.clipped, "out_of_range": rep.out_of_range,
                "nonmonotone_counterfactual": not mono,
                "nonmonotone_triples": rep.nonmonotone,
                "triples": len(self.triples),
                "cells": {f"{fmt_group(g)},{t}": c.count for (g, t), c in self.cells.items()}}
        if self.cov is not None:
            diag["covariate_columns"] = list(self.cov.columns)
        return PointEstimate(treated, cf, curve, float(rep.adtt[0]), scheme, per, diag)

    def per_triple(self) -> dict:
        """Unweighted counterfactual DF of each triple."""
        out = {}
        ones = np.ones((1, self.data.N))
        for (g, a, b), links in zip(self.triples, self.linksets):
            c = self.control
            sizes = [self.cells[k].count for k in ((g, a), (c, b), (c, a))]
            eps = resolve_eps(self.spec.clip, *sizes)
            v, diag = cf_values(self.cells[(g, a)].weighted(ones)[0],
                                self.cells[(c, b)].weighted(ones)[0],
                                self.cells[(c, a)].weighted(ones)[0], links, eps, self.grid,
                                self.spec.monotonize)
            out[(g, a, b)] = StepDF(self.grid, v[0], f"F_cf[{fmt_group(g)},{a},{b}]",
                                    out_of_range=diag["out_of_range"] > 0)
        return out
