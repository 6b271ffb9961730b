"""Convex weights over (group, pre-period, post-period) triples.

A triple ``(g, t', t)`` is valid when ``t' < g``, ``t >= g`` and neither is
period 0. For NSMP data the treated group is 1 and the same rule applies.

Aggregation happens at the level of DFs: the aggregate QTT is the quantile
difference of the weighted treated and counterfactual DFs. It is not a
weighted average of per-triple QTTs, which would differ in general.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .data import Design, DesignInfo, PanelDataset, detect_design
from .ecdf import StepDF
from .errors import ConfigError, DataError, IdentificationError

Triple = tuple  # (g: float, tpre: int, tpost: int)


def _norm_triple(k) -> Triple:
    g, a, b = k
    return (float(g), int(a), int(b))


def fmt_group(g: float) -> str:
    return "inf" if math.isinf(g) else f"{g:g}"


@dataclass(frozen=True)
class WeightScheme:
    """Weights on triples summing to one.

    ``provenance`` is ``"equal"``, ``"equal:<g>"``, ``"event:<e>"``,
    ``"explicit"`` or ``"two-period"``.
    """

    weights: Mapping[Triple, float]
    provenance: str = "explicit"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = {_norm_triple(k): float(v) for k, v in self.weights.items()}
        if not w:
            raise ConfigError("weight scheme has no triples")
        if any(v < 0 or not math.isfinite(v) for v in w.values()):
            raise ConfigError("weights must be finite and nonnegative")
        s = math.fsum(w.values())
        if abs(s - 1.0) > 1e-12:
            raise ConfigError(f"weights sum to {s!r}, not 1")
        object.__setattr__(self, "weights", dict(sorted(w.items())))

    @property
    def triples(self) -> list[Triple]:
        return list(self.weights)

    def vector(self) -> np.ndarray:
        return np.array(list(self.weights.values()))

    def mix(self, other: "WeightScheme", lam: float) -> "WeightScheme":
        keys = set(self.weights) | set(other.weights)
        w = {k: lam * self.weights.get(k, 0.0) + (1 - lam) * other.weights.get(k, 0.0)
             for k in keys}
        return WeightScheme(_renorm(w), "explicit")


def _renorm(w: dict) -> dict:
    s = math.fsum(w.values())
    return {k: v / s for k, v in w.items()}


def pre_periods_for(design: DesignInfo, g: float) -> list[int]:
    if design.design is Design.TWO_PERIOD:
        return [0]
    return [t for t in design.periods if t < g and t != 0]


def post_periods_for(design: DesignInfo, g: float) -> list[int]:
    if design.design is Design.TWO_PERIOD:
        return [1]
    lo = 1 if design.design is Design.NSMP else g
    return [t for t in design.periods if t >= lo and t != 0]


def is_valid_triple(design: DesignInfo, k: Triple) -> bool:
    g, a, b = _norm_triple(k)
    if g not in design.treated_groups:
        return False
    return a in pre_periods_for(design, g) and b in post_periods_for(design, g)


def valid_triples(design: DesignInfo, group: float) -> list[Triple]:
    g = float(group)
    return [(g, a, b) for a in pre_periods_for(design, g) for b in post_periods_for(design, g)]


def _design(d) -> DesignInfo:
    return detect_design(d) if isinstance(d, PanelDataset) else d


def equal_group_weights(design: "DesignInfo | PanelDataset", group: float) -> WeightScheme:
    """Equal weights over every valid (t', t) pair of one group."""
    design = _design(design)
    g = float(group)
    if g not in design.treated_groups:
        raise IdentificationError(f"group {fmt_group(g)} is not a treated group of the design")
    ks = valid_triples(design, g)
    if not ks:
        raise IdentificationError(f"group {fmt_group(g)} has no valid (pre, post) pairs")
    return WeightScheme({k: 1.0 / len(ks) for k in ks}, f"equal:{fmt_group(g)}")


def equal_weights(design: "DesignInfo | PanelDataset") -> WeightScheme:
    """Equal weights over the valid triples of every treated group."""
    design = _design(design)
    ks = [k for g in design.treated_groups for k in valid_triples(design, g)]
    if not ks:
        raise IdentificationError("design has no valid (group, pre, post) triples")
    return WeightScheme({k: 1.0 / len(ks) for k in ks}, "equal")


@dataclass(frozen=True)
class EventStructure:
    """Triples entering an event-study scheme and how to weight them.

    The raw weight of ``triples[k]`` is ``share[group_of[k]] / npre[k]``
    where ``share`` is the unit share of each eligible group among the
    eligible groups.
    """

    e: int
    groups: tuple[float, ...]
    triples: tuple[Triple, ...]
    group_of: np.ndarray
    npre: np.ndarray

    def weights_from_counts(self, counts: np.ndarray) -> np.ndarray:
        """Weights for each row of ``counts`` (shape ``(R, n_groups)``)."""
        counts = np.atleast_2d(counts)
        tot = counts.sum(axis=1, keepdims=True)
        share = counts / tot
        raw = share[:, self.group_of] / self.npre
        return raw / raw.sum(axis=1, keepdims=True)


def event_structure(data: PanelDataset, e: int) -> EventStructure:
    if int(e) != e or e < 0:
        raise ConfigError(f"event time must be a nonnegative integer (got {e})")
    e = int(e)
    design = detect_design(data)
    if design.design is Design.TWO_PERIOD:
        raise ConfigError("event-study weights need a multi-period design")
    T = max(design.periods)
    groups, triples, gof, npre = [], [], [], []
    for g in design.treated_groups:
        tpost = (1 if design.design is Design.NSMP else int(g)) + e
        if tpost > T or tpost not in design.periods:
            continue
        pres = pre_periods_for(design, g)
        if not pres:
            continue
        groups.append(g)
        for a in pres:
            triples.append((g, a, tpost))
            gof.append(len(groups) - 1)
            npre.append(len(pres))
    if not groups:
        raise IdentificationError(f"no treated group is observed {e} periods after adoption")
    return EventStructure(e, tuple(groups), tuple(triples), np.array(gof), np.array(npre, float))


def group_unit_counts(data: PanelDataset, groups, unit_weights=None) -> np.ndarray:
    """(Weighted) number of units in each group; rows follow ``unit_weights``."""
    ug = data.unit_groups()
    W = np.ones((1, data.N)) if unit_weights is None else np.atleast_2d(unit_weights)
    return np.stack([W[:, ug == g].sum(axis=1) for g in groups], axis=1)


def event_study_weights(data: PanelDataset, e: int, unit_weights=None) -> WeightScheme:
    """Average over groups observed ``e`` periods after first treatment.

    Group probabilities are unit frequencies among the eligible groups,
    optionally under ``unit_weights``.
    """
    st = event_structure(data, e)
    counts = group_unit_counts(data, st.groups, unit_weights)
    w = st.weights_from_counts(counts)[0]
    return WeightScheme(_renorm(dict(zip(st.triples, w))), f"event:{st.e}")


def explicit_weights(weights: Mapping, design: "DesignInfo | PanelDataset | None" = None,
                     ) -> WeightScheme:
    """User weights, renormalized when their sum is within 1e-3 of one."""
    w = {_norm_triple(k): float(v) for k, v in weights.items()}
    if any(v < 0 or not math.isfinite(v) for v in w.values()):
        raise ConfigError("explicit weights must be finite and nonnegative")
    s = math.fsum(w.values())
    if not 0.999 <= s <= 1.001:
        raise ConfigError(f"explicit weights sum to {s:.6g}; expected 1 (tolerance 1e-3)")
    if design is not None:
        design = _design(design)
        for k in w:
            if not is_valid_triple(design, k):
                raise ConfigError(f"triple (g={fmt_group(k[0])}, t'={k[1]}, t={k[2]}) is not valid")
    w = {k: v for k, v in w.items() if v > 0}
    return WeightScheme(_renorm(w), "explicit")


def load_weights(path, design=None) -> WeightScheme:
    """Read ``g,tpre,tpost,weight`` rows."""
    w = {}
    with open(path, newline="", encoding="utf-8") as fh:
        rd = csv.DictReader(fh)
        need = {"g", "tpre", "tpost", "weight"}
        if rd.fieldnames is None or not need <= set(rd.fieldnames):
            raise ConfigError(f"{path}: weight file needs columns g,tpre,tpost,weight")
        for i, rec in enumerate(rd, start=2):
            try:
                gs = rec["g"].strip().lower()
                g = math.inf if gs in ("inf", "") else float(gs)
                k = (g, int(rec["tpre"]), int(rec["tpost"]))
                v = float(rec["weight"])
            except ValueError:
                raise ConfigError(f"{path}: row {i} cannot be parsed") from None
            if k in w:
                raise ConfigError(f"{path}: row {i} repeats triple {k}")
            w[k] = v
    return explicit_weights(w, design)


def weighted_df(dfs: Mapping[Triple, StepDF], scheme: WeightScheme, label: str = "") -> StepDF:
    """Pointwise convex combination of per-triple DFs."""
    dfs = {_norm_triple(k): v for k, v in dfs.items()}
    grid = None
    acc = None
    mono, oor = True, False
    for k, w in scheme.weights.items():
        if w == 0.0:
            continue
        if k not in dfs:
            raise IdentificationError(f"no distribution function for triple {k}")
        f = dfs[k]
        if grid is None:
            grid = f.grid
            acc = w * f.values
        else:
            grid.check_same(f.grid)
            acc = acc + w * f.values
        mono = mono and f.monotone
        oor = oor or f.out_of_range
    if acc is None:
        raise DataError("all weights are zero")
    oor = oor and bool((acc < 0).any() or (acc > 1).any())
    if not oor:
        acc = np.clip(acc, 0.0, 1.0)  # absorb rounding above 1
    return StepDF(grid, acc, label or f"F[{scheme.provenance}]", mono, out_of_range=oor)
