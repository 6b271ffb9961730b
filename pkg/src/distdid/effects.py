"""Treatment-effect curves, left-inverse quantiles and band geometry."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .ecdf import Grid, StepDF
from .errors import DataError, GridMismatchError, NumericalError

DEFAULT_TAUS = np.round(np.arange(1, 20) * 0.05, 2)


@dataclass(frozen=True, eq=False)
class Intervals:
    """Closed intervals ``[lo[k], hi[k]]``, one per axis point."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape:
            raise DataError("interval endpoints have different shapes")
        if (lo > hi).any():
            raise DataError("malformed interval: lower end above upper end")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (self.lo <= x) & (x <= self.hi)


@dataclass(frozen=True, eq=False)
class EffectCurve:
    """DTT on an outcome grid (``kind='dtt'``) or QTT on a tau grid (``kind='qtt'``).

    ``band`` is anything with ``lo`` and ``hi`` arrays matching ``values``.
    """

    axis: np.ndarray
    values: np.ndarray
    kind: str = "dtt"
    band: object = None
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ax = np.asarray(self.axis, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if ax.shape != v.shape or ax.ndim != 1:
            raise DataError("axis and values must be 1-d arrays of equal length")
        if (np.diff(ax) <= 0).any():
            raise DataError("axis must be strictly increasing")
        if not np.isfinite(v).all():
            raise DataError("effect values must be finite")
        object.__setattr__(self, "axis", ax)
        object.__setattr__(self, "values", v)

    def with_band(self, band) -> "EffectCurve":
        return EffectCurve(self.axis, self.values, self.kind, band, self.label, dict(self.meta))

    # -- serialization -----------------------------------------------
    def rows(self):
        lo = hi = None
        if self.band is not None:
            lo, hi = self.band.lo, self.band.hi
        for k, (a, v) in enumerate(zip(self.axis, self.values)):
            yield (a, v, None if lo is None else lo[k], None if hi is None else hi[k])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["axis", "estimate", "lo", "hi"])
        for a, v, lo, hi in self.rows():
            w.writerow([_num(a), _num(v), _num(lo), _num(hi)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path, kind: str = "dtt") -> "EffectCurve":
        with open(path, newline="", encoding="utf-8") as fh:
            recs = list(csv.DictReader(fh))
        ax = [float(r["axis"]) for r in recs]
        v = [float(r["estimate"]) for r in recs]
        band = None
        if recs and recs[0]["lo"] != "":
            band = Intervals([float(r["lo"]) for r in recs], [float(r["hi"]) for r in recs])
        return cls(np.array(ax), np.array(v), kind, band)

    def to_json(self) -> str:
        d = {"kind": self.kind, "label": self.label, "axis": self.axis.tolist(),
             "estimate": self.values.tolist()}
        if self.band is not None:
            d["lo"] = np.asarray(self.band.lo).tolist()
            d["hi"] = np.asarray(self.band.hi).tolist()
        return json.dumps(d)

    def to_plot_data(self, path=None) -> str:
        """Whitespace-separated columns for gnuplot and similar tools.

        Two columns without a band, four with one.
        """
        banded = self.band is not None
        lines = ["# axis estimate lo hi" if banded else "# axis estimate"]
        for row in self.rows():
            lines.append(" ".join(_num(x) for x in (row if banded else row[:2])))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def dtt(treated: StepDF, counterfactual: StepDF) -> EffectCurve:
    """Pointwise difference of two DFs on the same grid."""
    treated.grid.check_same(counterfactual.grid)
    return EffectCurve(treated.grid.points, treated.values - counterfactual.values, "dtt",
                       label="DTT")


def adtt(curve: EffectCurve, method: str = "mean") -> float:
    """Grid average of a DTT curve (``'mean'``) or its trapezoid integral."""
    if method == "mean":
        return float(np.mean(curve.values))
    if method == "trapezoid":
        if len(curve.values) < 2:
            return 0.0
        return float(np.trapezoid(curve.values, curve.axis))
    raise DataError(f"unknown ADTT method {method!r}")


def left_inverse_values(values: np.ndarray, points: np.ndarray, sup_y: float, tau) -> np.ndarray:
    """Smallest grid point whose value reaches ``tau``; ``sup_y`` if none does.

    Works on the last axis of ``values``, which need not be monotone.
    """
    values = np.asarray(values, dtype=float)
    tau = np.asarray(tau, dtype=float)
    run = np.maximum.accumulate(values, axis=-1)
    L = values.shape[-1]
    ext = np.append(np.asarray(points, dtype=float), sup_y)
    if run.ndim == 1:
        idx = np.searchsorted(run, tau, side="left")
        return ext[idx]
    flat = run.reshape(-1, L)
    out = np.empty((flat.shape[0],) + tau.shape)
    for r in range(flat.shape[0]):
        out[r] = ext[np.searchsorted(flat[r], tau, side="left")]
    return out.reshape(run.shape[:-1] + tau.shape)


def left_inverse(df: StepDF, tau):
    """Quantile of a step DF as the left inverse on the grid."""
    tau_a = np.asarray(tau, dtype=float)
    if ((tau_a < 0) | (tau_a > 1)).any():
        raise DataError("tau must lie in [0, 1]")
    out = left_inverse_values(df.values, df.grid.points, df.grid.sup_y, tau_a)
    return float(out) if np.ndim(out) == 0 else out


def _check_taus(taus) -> np.ndarray:
    t = np.asarray(taus, dtype=float)
    if t.ndim != 1 or ((t <= 0) | (t >= 1)).any() or (np.diff(t) <= 0).any():
        raise DataError("taus must be strictly increasing values in (0, 1)")
    return t


def qtt(treated: StepDF, counterfactual: StepDF, taus=DEFAULT_TAUS) -> EffectCurve:
    treated.grid.check_same(counterfactual.grid)
    t = _check_taus(taus)
    v = left_inverse(treated, t) - left_inverse(counterfactual, t)
    return EffectCurve(t, v, "qtt", label="QTT")


def minkowski_diff(i, j) -> tuple[float, float]:
    """``[i1, i2] - [j1, j2] = [i1 - j2, i2 - j1]``."""
    i1, i2 = i
    j1, j2 = j
    if i1 > i2 or j1 > j2:
        raise DataError(f"malformed interval in {i} - {j}")
    return (i1 - j2, i2 - j1)


def invert_df_band(band, taus=DEFAULT_TAUS, grid: Grid | None = None) -> Intervals:
    """Quantile-function intervals from a DF band.

    Both envelopes are made nondecreasing by a running maximum. The
    interval at ``tau`` is ``[U^-1(tau), L^-1(tau)]``.
    """
    grid = grid if grid is not None else band.grid
    t = _check_taus(taus)
    lo = np.maximum.accumulate(np.asarray(band.lo, dtype=float))
    hi = np.maximum.accumulate(np.asarray(band.hi, dtype=float))
    if (lo > hi).any():
        k = int(np.flatnonzero(lo > hi)[0])
        raise NumericalError(f"band edges cross at y={grid.points[k]:g}")
    a = left_inverse_values(hi, grid.points, grid.sup_y, t)
    b = left_inverse_values(lo, grid.points, grid.sup_y, t)
    return Intervals(a, b)


def qtt_band(treated_qf: Intervals, counterfactual_qf: Intervals) -> Intervals:
    """Pointwise Minkowski difference of two sets of QF intervals."""
    if treated_qf.lo.shape != counterfactual_qf.lo.shape:
        raise GridMismatchError("QF intervals live on different tau grids")
    return Intervals(treated_qf.lo - counterfactual_qf.hi, treated_qf.hi - counterfactual_qf.lo)
