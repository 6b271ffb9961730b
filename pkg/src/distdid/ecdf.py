"""Group-period empirical distribution functions on a finite outcome grid."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import PanelDataset
from .errors import DataError, GridMismatchError, IdentificationError


@dataclass(frozen=True, eq=False)
class Grid:
    """Strictly increasing outcome grid.

    ``sup_y`` is the value returned by the left inverse when a
    probability level is never reached on the grid.
    """

    points: np.ndarray
    sup_y: float = None

    def __post_init__(self):
        p = np.array(self.points, dtype=float).ravel()
        if p.size == 0:
            raise DataError("grid is empty")
        if not np.isfinite(p).all():
            raise DataError("grid points must be finite")
        if (np.diff(p) <= 0).any():
            raise DataError("grid points must be strictly increasing")
        sup = float(p[-1]) if self.sup_y is None else float(self.sup_y)
        if sup < p[-1]:
            raise DataError(f"sup_y={sup} lies below the last grid point {p[-1]}")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "sup_y", sup)

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Grid) and self.sup_y == other.sup_y
                and np.array_equal(self.points, other.points))

    __hash__ = None

    def check_same(self, other: "Grid") -> None:
        if self != other:
            raise GridMismatchError("distribution functions live on different grids")


@dataclass(frozen=True, eq=False)
class StepDF:
    """Distribution function evaluated at the points of a grid.

    ``monotone`` is asserted only when it holds by construction. Values
    outside [0, 1] are tolerated only for identity-link counterfactuals,
    which set ``out_of_range``.
    """

    grid: Grid
    values: np.ndarray
    label: str = ""
    monotone: bool = False
    n: float | None = None
    out_of_range: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.shape != (len(self.grid),):
            raise GridMismatchError(f"{v.size} values for a grid of {len(self.grid)} points")
        if np.isnan(v).any():
            raise DataError("distribution function contains NaN")
        oor = bool((v < 0).any() or (v > 1).any())
        if oor and not self.out_of_range:
            raise DataError(f"values of {self.label or 'distribution function'} outside [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __call__(self, y):
        """Right-continuous step interpolation between grid points."""
        idx = np.searchsorted(self.grid.points, np.asarray(y, dtype=float), side="right") - 1
        return np.where(idx >= 0, self.values[np.maximum(idx, 0)], 0.0)

    def is_monotone(self) -> bool:
        return bool((np.diff(self.values) >= 0).all())

    def monotonized(self) -> "StepDF":
        return StepDF(self.grid, np.maximum.accumulate(self.values), self.label, True, self.n,
                      self.out_of_range, dict(self.meta))

    def equals(self, other: "StepDF", atol: float = 0.0) -> bool:
        return self.grid == other.grid and bool(np.all(np.abs(self.values - other.values) <= atol))

    # -- serialization -----------------------------------------------
    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(f"# sup_y={self.grid.sup_y!r}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["y", "value"])
        for y, v in zip(self.grid.points, self.values):
            w.writerow([repr(float(y)), repr(float(v))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path, label: str = "") -> "StepDF":
        sup = None
        ys, vs = [], []
        with open(path, encoding="utf-8") as fh:
            rows = list(fh)
        body = []
        for line in rows:
            if line.startswith("#"):
                if line.startswith("# sup_y="):
                    sup = float(line.split("=", 1)[1])
                continue
            body.append(line)
        rd = csv.DictReader(body)
        for rec in rd:
            ys.append(float(rec["y"]))
            vs.append(float(rec["value"]))
        v = np.array(vs)
        return cls(Grid(np.array(ys), sup), v, label,
                   out_of_range=bool((v < 0).any() or (v > 1).any()))

    def to_json(self) -> str:
        return json.dumps({"label": self.label, "sup_y": self.grid.sup_y,
                           "y": self.grid.points.tolist(), "value": self.values.tolist(),
                           "monotone": self.monotone})

    @classmethod
    def from_json(cls, text: str) -> "StepDF":
        d = json.loads(text)
        v = np.array(d["value"], dtype=float)
        return cls(Grid(np.array(d["y"], dtype=float), d["sup_y"]), v, d.get("label", ""),
                   d.get("monotone", False), out_of_range=bool((v < 0).any() or (v > 1).any()))


def type1_quantile(x: np.ndarray, q: float) -> float:
    """Inverted-ECDF percentile: smallest x with ECDF(x) >= q."""
    return float(np.quantile(np.asarray(x, dtype=float), q, method="inverted_cdf"))


def build_grid(data: PanelDataset | np.ndarray, rule: "str | Sequence[float]" = "all",
               percentile: float = 0.9, drop_top: int = 2) -> Grid:
    """Outcome grid.

    Parameters
    ----------
    rule : {"all", "simulation", "trimmed"} or sequence of floats
        ``"all"`` uses every distinct outcome. ``"simulation"`` drops the
        ``drop_top`` largest distinct outcomes and every value above the
        pooled type-1 ``percentile``. ``"trimmed"`` also drops values below
        the pooled type-1 ``1 - percentile``. A sequence is used as given.
    """
    y = data.outcome if isinstance(data, PanelDataset) else np.asarray(data, dtype=float)
    if y.size == 0:
        raise DataError("no outcomes to build a grid from")
    sup = float(y.max())
    if isinstance(rule, str):
        key = rule.strip().lower()
        u = np.unique(y)
        if key in ("all", "allunique", "all-unique"):
            return Grid(u, sup)
        if key in ("simulation", "sim", "trimmed"):
            q = type1_quantile(y, percentile)
            keep = u[:-drop_top] if drop_top else u
            keep = keep[keep <= q]
            if key == "trimmed":
                keep = keep[keep >= type1_quantile(y, 1.0 - percentile)]
            if keep.size == 0:
                raise DataError("simulation grid rule leaves no grid points")
            return Grid(keep, sup)
        raise DataError(f"unknown grid rule {rule!r}")
    pts = np.asarray(list(rule), dtype=float)
    return Grid(pts, max(sup, float(pts[-1])) if pts.size else sup)


class CellIndex:
    """Sorted view of one (group, period) cell, reused across weightings.

    ``pos[l]`` counts cell outcomes ``<= grid[l]``, so the unweighted ECDF
    is ``pos / count`` and a weighted one is a cumulative sum read at
    ``pos``.
    """

    def __init__(self, data: PanelDataset, group: float, period: int, grid: Grid):
        rows = np.flatnonzero(data.cell_mask(group, period))
        if rows.size == 0:
            g = "inf" if np.isinf(group) else f"{group:g}"
            raise IdentificationError(f"cell (group={g}, period={period}) has no observations")
        order = np.argsort(data.outcome[rows], kind="stable")
        self.group = float(group)
        self.period = int(period)
        self.rows = rows[order]
        self.units = data.unit[self.rows]
        self.sorted_y = data.outcome[self.rows]
        self.count = rows.size
        self.pos = np.searchsorted(self.sorted_y, grid.points, side="right")

    def ecdf(self) -> np.ndarray:
        return self.pos / self.count

    def weighted(self, W: np.ndarray, clip: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """ECDFs under unit weights ``W`` of shape ``(R, N)``.

        Returns ``(F, total)`` with ``F`` of shape ``(R, L)`` and the cell's
        total weight per row.
        """
        w = W[:, self.units]
        cs = np.cumsum(w, axis=1)
        total = cs[:, -1]
        cs = np.concatenate([np.zeros((W.shape[0], 1)), cs], axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            F = cs[:, self.pos] / total[:, None]
        if clip:
            np.clip(F, 0.0, 1.0, out=F)
        return F, total


def group_period_ecdf(data: PanelDataset, group: float, period: int, grid: Grid) -> StepDF:
    """ECDF of the outcomes in one (group, period) cell."""
    cell = CellIndex(data, group, period, grid)
    g = "inf" if np.isinf(group) else f"{group:g}"
    return StepDF(grid, cell.ecdf(), f"F[{g},{period}]", monotone=True, n=cell.count)


def weighted_ecdf(y: np.ndarray, w: np.ndarray, grid: Grid) -> np.ndarray:
    """ECDF of ``y`` with observation weights ``w`` evaluated on ``grid``."""
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    order = np.argsort(y, kind="stable")
    cs = np.concatenate([[0.0], np.cumsum(w[order])])
    pos = np.searchsorted(y[order], grid.points, side="right")
    return cs[pos] / cs[-1]
