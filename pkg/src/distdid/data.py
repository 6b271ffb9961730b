"""Columnar storage for panels, unbalanced panels and repeated cross-sections.

A :class:`PanelDataset` holds one row per observed (unit, period) pair.
Group labels are floats so that the never-treated group of a staggered
design can be stored as ``inf``.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError

NEVER_TREATED = math.inf


class Design(enum.Enum):
    TWO_PERIOD = "two-period"
    NSMP = "nsmp"
    STAGGERED = "staggered"

    @classmethod
    def parse(cls, name: "str | Design") -> "Design":
        if isinstance(name, Design):
            return name
        key = str(name).strip().lower().replace("_", "-")
        aliases = {"two-period": cls.TWO_PERIOD, "twoperiod": cls.TWO_PERIOD,
                   "nsmp": cls.NSMP, "staggered": cls.STAGGERED}
        if key not in aliases:
            raise ConfigError(f"unknown design {name!r}; valid: two-period, nsmp, staggered")
        return aliases[key]


class SamplingKind(enum.Enum):
    BALANCED_PANEL = "balanced-panel"
    UNBALANCED_PANEL = "unbalanced-panel"
    REPEATED_CROSS_SECTION = "repeated-cross-section"


@dataclass(frozen=True)
class Observation:
    unit_id: str
    period: int
    group: float
    outcome: float
    covariates: tuple[float, ...] = ()


@dataclass(frozen=True)
class DesignInfo:
    kind: SamplingKind
    design: Design
    pre_periods: tuple[int, ...]
    post_periods: tuple[int, ...]
    groups: tuple[float, ...]

    @property
    def control(self) -> float:
        return NEVER_TREATED if self.design is Design.STAGGERED else 0.0

    @property
    def treated_groups(self) -> tuple[float, ...]:
        return tuple(g for g in self.groups if g != self.control)

    @property
    def periods(self) -> tuple[int, ...]:
        return tuple(sorted(self.pre_periods + self.post_periods))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Observations stored column-wise.

    Attributes
    ----------
    unit : int array
        Dense unit codes ``0..N-1`` indexing ``unit_ids``.
    unit_ids : tuple of str
    period, group, outcome : arrays, one entry per observation
    covariates : (n, k) float array, possibly with ``k == 0``
    covariate_names : tuple of str
    design : Design
    period_labels : dict
        Original period labels for two-period data (mapped to 0 and 1).
    """

    unit: np.ndarray
    unit_ids: tuple
    period: np.ndarray
    group: np.ndarray
    outcome: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple = ()
    design: Design = Design.TWO_PERIOD
    period_labels: Mapping[int, object] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.outcome)
        for name in ("unit", "period", "group"):
            if len(getattr(self, name)) != n:
                raise DataError(f"column {name!r} has length {len(getattr(self, name))}, expected {n}")
        if self.covariates.shape != (n, len(self.covariate_names)):
            raise DataError("covariate matrix does not match the covariate names")
        if n == 0:
            raise DataError("dataset has no observations")
        if not np.isfinite(self.outcome).all():
            raise DataError("outcomes must be finite")
        if not np.isfinite(self.covariates).all():
            raise DataError("covariates must be finite")
        for name in ("unit", "period", "group", "outcome", "covariates"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    # -- construction -------------------------------------------------
    @classmethod
    def from_arrays(cls, unit_ids: Sequence, period, group, outcome, covariates=None,
                    covariate_names: Sequence[str] = (), design: "Design | str | None" = None,
                    ) -> "PanelDataset":
        """Validate raw columns and detect (or apply) the design.

        Two-period data may use any two period labels; the smaller one
        becomes period 0.
        """
        labels = [str(u) for u in unit_ids]
        uniq, codes = np.unique(np.asarray(labels, dtype=object).astype(str), return_inverse=True)
        period = np.asarray(period)
        if period.dtype.kind == "f":
            if not np.all(period == np.round(period)):
                raise DataError("period labels must be integers")
        period = period.astype(np.int64)
        group = np.asarray(group, dtype=float)
        outcome = np.asarray(outcome, dtype=float)
        n = len(outcome)
        if covariates is None:
            covariates = np.zeros((n, 0))
        covariates = np.asarray(covariates, dtype=float).reshape(n, -1)

        # duplicate (unit, period) rows
        key = codes.astype(np.int64) * (period.max() - period.min() + 1) + (period - period.min())
        _, first, counts = np.unique(key, return_index=True, return_counts=True)
        if (counts > 1).any():
            order = np.argsort(key, kind="stable")
            ks = key[order]
            dup = order[1:][ks[1:] == ks[:-1]][0]
            raise DataError(f"duplicate (unit, period) = ({labels[dup]}, {period[dup]}) at row {dup + 1}")

        # group constant within unit
        gmin = np.full(len(uniq), np.inf)
        gmax = np.full(len(uniq), -np.inf)
        np.minimum.at(gmin, codes, group)
        np.maximum.at(gmax, codes, group)
        bad = np.flatnonzero(gmin != gmax)
        if bad.size:
            raise DataError(f"unit {uniq[bad[0]]} has inconsistent group labels")
        if np.isnan(group).any():
            raise DataError("group labels must not be NaN")

        design = detect_design_kind(period, group) if design is None else Design.parse(design)
        labels_map: dict[int, object] = {}
        if design is Design.TWO_PERIOD:
            ps = np.unique(period)
            if len(ps) != 2:
                raise DataError(f"two-period design needs exactly two periods, found {len(ps)}")
            labels_map = {0: int(ps[0]), 1: int(ps[1])}
            period = (period == ps[1]).astype(np.int64)
            if not set(np.unique(group)) <= {0.0, 1.0}:
                raise DataError("two-period design needs groups in {0, 1}")
        else:
            if (period == 0).any():
                row = int(np.flatnonzero(period == 0)[0]) + 1
                raise DataError(f"period 0 is reserved in multi-period designs (row {row})")
            if design is Design.NSMP and not set(np.unique(group)) <= {0.0, 1.0}:
                raise DataError("NSMP design needs groups in {0, 1}")
            if design is Design.STAGGERED:
                fin = group[np.isfinite(group)]
                if (fin < 1).any() or (fin != np.round(fin)).any():
                    raise DataError("staggered groups must be positive integers or inf")
        return cls(unit=codes.astype(np.int64), unit_ids=tuple(uniq.tolist()), period=period,
                   group=group, outcome=outcome, covariates=covariates,
                   covariate_names=tuple(covariate_names), design=design,
                   period_labels=labels_map)

    @classmethod
    def from_observations(cls, obs: Iterable[Observation], covariate_names: Sequence[str] = (),
                          design=None) -> "PanelDataset":
        obs = list(obs)
        cov = np.array([o.covariates for o in obs], dtype=float).reshape(len(obs), -1)
        return cls.from_arrays([o.unit_id for o in obs], [o.period for o in obs],
                               [o.group for o in obs], [o.outcome for o in obs], cov,
                               covariate_names, design)

    def observations(self) -> list[Observation]:
        return [Observation(self.unit_ids[u], int(t), float(g), float(y), tuple(map(float, x)))
                for u, t, g, y, x in zip(self.unit, self.period, self.group, self.outcome,
                                         self.covariates)]

    def take(self, rows: np.ndarray) -> "PanelDataset":
        """Subset of observations; unit codes are re-densified."""
        ids = [self.unit_ids[u] for u in self.unit[rows]]
        return PanelDataset.from_arrays(ids, self.period[rows], self.group[rows],
                                        self.outcome[rows], self.covariates[rows],
                                        self.covariate_names, self.design)

    # -- counts -------------------------------------------------------
    @property
    def N(self) -> int:
        return len(self.unit_ids)

    @property
    def n(self) -> int:
        return len(self.outcome)

    @property
    def periods(self) -> np.ndarray:
        return np.unique(self.period)

    @property
    def groups(self) -> np.ndarray:
        return np.unique(self.group)

    @property
    def n_t(self) -> dict[int, int]:
        ps, c = np.unique(self.period, return_counts=True)
        return {int(p): int(k) for p, k in zip(ps, c)}

    def presence(self) -> np.ndarray:
        """``S[j, k] = 1`` iff unit ``j`` is observed in ``periods[k]``."""
        ps = self.periods
        S = np.zeros((self.N, len(ps)), dtype=np.int8)
        S[self.unit, np.searchsorted(ps, self.period)] = 1
        return S

    def unit_groups(self) -> np.ndarray:
        """Group label of each unit code."""
        g = np.empty(self.N)
        g[self.unit] = self.group
        return g

    def cell_mask(self, group: float, period: int) -> np.ndarray:
        return (self.group == float(group)) & (self.period == int(period))

    def __repr__(self) -> str:
        return (f"PanelDataset(N={self.N}, n={self.n}, design={self.design.value}, "
                f"periods={self.periods.tolist()}, groups={self.groups.tolist()})")


def detect_design_kind(period: np.ndarray, group: np.ndarray) -> Design:
    groups = set(np.unique(group).tolist())
    nper = len(np.unique(period))
    if groups <= {0.0, 1.0}:
        return Design.TWO_PERIOD if nper == 2 else Design.NSMP
    return Design.STAGGERED


def cell_stats(data: PanelDataset, group: float, period: int) -> tuple[int, float]:
    """Count of observations in a (group, period) cell and its share of the period."""
    in_period = data.period == int(period)
    n_t = int(in_period.sum())
    if n_t == 0:
        raise DataError(f"no observations in period {period}")
    count = int((in_period & (data.group == float(group))).sum())
    return count, count / n_t


def detect_design(data: PanelDataset) -> DesignInfo:
    S = data.presence()
    if S.all():
        kind = SamplingKind.BALANCED_PANEL
    elif (S.sum(axis=1) == 1).all():
        kind = SamplingKind.REPEATED_CROSS_SECTION
    else:
        kind = SamplingKind.UNBALANCED_PANEL
    ps = [int(p) for p in data.periods]
    if data.design is Design.TWO_PERIOD:
        pre, post = (0,), (1,)
    else:
        pre = tuple(p for p in ps if p < 0)
        post = tuple(p for p in ps if p > 0)
    return DesignInfo(kind, data.design, pre, post, tuple(float(g) for g in data.groups))


# -- CSV -------------------------------------------------------------------

DEFAULT_SCHEMA = {"id": "id", "time": "time", "group": "group", "y": "y"}


def _parse_group(s: str, row: int) -> float:
    t = s.strip().lower()
    if t in ("", "inf", "+inf", "infinity"):
        return NEVER_TREATED
    try:
        return float(t)
    except ValueError:
        raise DataError(f"row {row}: cannot parse group {s!r}") from None


def load_csv(path, schema: Mapping[str, str] | None = None, covariates: Sequence[str] | None = None,
             design=None) -> PanelDataset:
    """Read a dataset from CSV.

    Parameters
    ----------
    schema : mapping with keys ``id``, ``time``, ``group``, ``y``
        Column names in the file; defaults to the identical names.
    covariates : column names to read as covariates. ``None`` picks up
        every column not used by the schema.

    Row numbers in error messages count the header as row 1.
    """
    sch = dict(DEFAULT_SCHEMA)
    sch.update(schema or {})
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        for role, col in sch.items():
            if col not in header:
                raise DataError(f"{path}: missing column {col!r} (for {role})")
        if covariates is None:
            covariates = [h for h in header if h not in sch.values()]
        for c in covariates:
            if c not in header:
                raise DataError(f"{path}: missing covariate column {c!r}")
        idx = {role: header.index(col) for role, col in sch.items()}
        cidx = [header.index(c) for c in covariates]
        ids, per, grp, ys, xs = [], [], [], [], []
        seen: dict[tuple[str, int], int] = {}
        for rownum, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"row {rownum}: expected {len(header)} fields, got {len(rec)}")
            uid = rec[idx["id"]].strip()
            try:
                tf = float(rec[idx["time"]])
            except ValueError:
                raise DataError(f"row {rownum}: cannot parse period {rec[idx['time']]!r}") from None
            if tf != round(tf):
                raise DataError(f"row {rownum}: period must be an integer")
            t = int(round(tf))
            ystr = rec[idx["y"]].strip()
            if not ystr:
                raise DataError(f"row {rownum}: missing outcome")
            try:
                y = float(ystr)
            except ValueError:
                raise DataError(f"row {rownum}: cannot parse outcome {ystr!r}") from None
            if not math.isfinite(y):
                raise DataError(f"row {rownum}: outcome must be finite")
            x = []
            for c, j in zip(covariates, cidx):
                v = rec[j].strip()
                if not v:
                    raise DataError(f"row {rownum}: missing value for covariate {c!r}")
                try:
                    x.append(float(v))
                except ValueError:
                    raise DataError(f"row {rownum}: cannot parse covariate {c!r}") from None
            if (uid, t) in seen:
                raise DataError(f"row {rownum}: duplicate (unit, period) = ({uid}, {t}), "
                                f"first seen at row {seen[uid, t]}")
            seen[uid, t] = rownum
            ids.append(uid)
            per.append(t)
            grp.append(_parse_group(rec[idx["group"]], rownum))
            ys.append(y)
            xs.append(x)
    if not ys:
        raise DataError(f"{path}: no data rows")
    cov = np.array(xs, dtype=float).reshape(len(ys), len(covariates))
    return PanelDataset.from_arrays(ids, per, grp, ys, cov, tuple(covariates), design)


def write_csv(data: PanelDataset, path, schema: Mapping[str, str] | None = None) -> None:
    """Write ``data`` so that :func:`load_csv` reproduces it.

    Two-period data is written with its original period labels.
    """
    sch = dict(DEFAULT_SCHEMA)
    sch.update(schema or {})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([sch["id"], sch["time"], sch["group"], sch["y"], *data.covariate_names])
        for u, t, g, y, x in zip(data.unit, data.period, data.group, data.outcome, data.covariates):
            t = data.period_labels.get(int(t), int(t))
            gs = "inf" if math.isinf(g) else repr(float(g))
            w.writerow([data.unit_ids[u], t, gs, repr(float(y)), *(repr(float(v)) for v in x)])
