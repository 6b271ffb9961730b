"""Counterfactual distribution functions under functional index parallel trends.

For a treated group ``g``, control group ``c``, pre-period ``t'`` and
post-period ``t`` the counterfactual untreated DF of group ``g`` at ``t`` is

* group-indexed links (theta = 1)::

      Phi_g( Phi_g^-1(F[g,t']) + Phi_c^-1(F[c,t]) - Phi_c^-1(F[c,t']) )

* time-indexed links (theta = 0)::

      Phi_t( Phi_t'^-1(F[g,t']) + Phi_t^-1(F[c,t]) - Phi_t'^-1(F[c,t']) )

The two-period case is ``g=1, c=0, t'=0, t=1``. Unbounded links see ECDF
values clipped to ``[eps, 1-eps]`` before inversion, ``eps = 1/(4 m)`` with
``m`` the smallest of the three cell sizes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import links as lk
from .data import Design, PanelDataset
from .ecdf import Grid, StepDF, group_period_ecdf
from .errors import ConfigError, IdentificationError, NumericalError
from .links import Link


class Theta(enum.Enum):
    GROUP = 1
    TIME = 0

    @classmethod
    def parse(cls, v) -> "Theta":
        if isinstance(v, Theta):
            return v
        key = str(v).strip().lower()
        if key in ("group", "1", "groupindexed"):
            return cls.GROUP
        if key in ("time", "0", "timeindexed"):
            return cls.TIME
        raise ConfigError(f"theta must be 'group' or 'time' (got {v!r})")


def _key(label) -> float:
    s = str(label).strip().lower()
    if s in ("inf", "+inf", "infinity", "never"):
        return math.inf
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"link key {label!r} is not a group or period label") from None


@dataclass(frozen=True)
class LinkRegime:
    """Working-CDF assignment.

    ``links`` maps group labels (theta = group) or periods (theta = time)
    to links; ``default`` covers every label not listed.
    """

    theta: Theta = Theta.GROUP
    links: Mapping[float, Link] = field(default_factory=dict)
    default: Link | None = Link.NORMAL

    def __post_init__(self):
        object.__setattr__(self, "theta", Theta.parse(self.theta))
        object.__setattr__(self, "links", {_key(k): Link.parse(v) for k, v in self.links.items()})
        if self.default is not None:
            object.__setattr__(self, "default", Link.parse(self.default))

    @classmethod
    def uniform(cls, link, theta=Theta.GROUP) -> "LinkRegime":
        return cls(theta, {}, Link.parse(link))

    def link_for(self, label) -> Link:
        k = _key(label)
        if k in self.links:
            return self.links[k]
        if self.default is None:
            what = "group" if self.theta is Theta.GROUP else "period"
            raise ConfigError(f"no link assigned to {what} {label}")
        return self.default

    def resolve(self, g, c, tpre, tpost) -> tuple[Link, Link, Link, Link]:
        """Links applied to ``(F[g,t'], F[c,t], F[c,t'])`` and the outer link."""
        if self.theta is Theta.GROUP:
            lg, lc = self.link_for(g), self.link_for(c)
            return lg, lc, lc, lg
        lpre, lpost = self.link_for(tpre), self.link_for(tpost)
        return lpre, lpost, lpre, lpost

    def describe(self) -> dict:
        return {"theta": self.theta.name.lower(),
                "links": {("inf" if math.isinf(k) else f"{k:g}"): v.value
                          for k, v in sorted(self.links.items())},
                "default": None if self.default is None else self.default.value}


@dataclass(frozen=True, eq=False)
class IndexCoeffs:
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    grid: Grid | None = None


def auto_eps(*sizes) -> float:
    return 1.0 / (4.0 * min(sizes))


def resolve_eps(clip, *sizes):
    """Translate a clip setting (``'auto'``, float or ``None``) to eps."""
    if clip is None or clip is False:
        return None
    if isinstance(clip, str):
        if clip.strip().lower() == "auto":
            return auto_eps(*sizes)
        if clip.strip().lower() in ("none", "off"):
            return None
        clip = float(clip)
    clip = float(clip)
    if not 0.0 <= clip < 0.5:
        raise ConfigError("clip epsilon must lie in [0, 0.5)")
    return clip


def inverse_link(link: Link, F: np.ndarray, eps) -> tuple[np.ndarray, int]:
    """``link^-1(F)`` with boundary clipping for unbounded links.

    ``eps`` may be ``None`` (no clipping), a scalar, or an array that
    broadcasts against ``F`` (one value per bootstrap row).
    """
    if link.unbounded and eps is not None:
        eps = np.asarray(eps, dtype=float)
        lo, hi = eps, 1.0 - eps
        n_clipped = int(np.count_nonzero((F < lo) | (F > hi)))
        F = np.minimum(np.maximum(F, lo), hi)
        return lk._quantile(link, F), n_clipped
    return lk._quantile(link, F), 0


def _grid_label(grid: Grid | None, idx) -> str:
    if grid is None:
        return f"grid index {idx}"
    return f"y={grid.points[idx]:g}"


def cf_values(F_gpre, F_cpost, F_cpre, linkset, eps=None, grid: Grid | None = None,
              monotonize: bool = False) -> tuple[np.ndarray, dict]:
    """Vectorised counterfactual on arrays of matching shape (last axis = grid).

    Returns the values and a diagnostics dict.
    """
    l_gpre, l_cpost, l_cpre, l_out = linkset
    if all(lnk is Link.IDENTITY for lnk in linkset):
        # distributional DiD, kept as a literal sum so the result is exact
        v = F_gpre + F_cpost - F_cpre
        diag = {"clipped": 0}
    else:
        a, c1 = inverse_link(l_gpre, F_gpre, eps)
        b, c2 = inverse_link(l_cpost, F_cpost, eps)
        d, c3 = inverse_link(l_cpre, F_cpre, eps)
        with np.errstate(invalid="ignore"):
            index = a + b - d
        bad = np.isnan(index)
        if bad.any():
            idx = np.argwhere(bad)[0]
            raise NumericalError(f"inf - inf in the index at {_grid_label(grid, idx[-1])}; "
                                 "enable boundary clipping")
        if not l_out.unbounded and np.isinf(index).any():
            idx = np.argwhere(np.isinf(index))[0]
            raise NumericalError(f"infinite index under the {l_out} link at "
                                 f"{_grid_label(grid, idx[-1])}")
        v = lk._cdf(l_out, index)
        diag = {"clipped": c1 + c2 + c3}
    if monotonize:
        v = np.maximum.accumulate(v, axis=-1)
    diag["out_of_range"] = int(np.count_nonzero((v < 0) | (v > 1)))
    return v, diag


def index_coeffs(F00: StepDF, F10: StepDF, F01: StepDF, regime: LinkRegime,
                 clip=None) -> IndexCoeffs:
    """Pointwise index coefficients (alpha, beta, gamma) on the shared grid.

    Clipping is off by default so infinite entries are reported as such.
    """
    F00.grid.check_same(F10.grid)
    F00.grid.check_same(F01.grid)
    l_gpre, l_cpost, l_cpre, _ = regime.resolve(1, 0, 0, 1)
    eps = resolve_eps(clip, *(f.n or 1 for f in (F00, F10, F01)))
    alpha, _ = inverse_link(l_cpre, F00.values, eps)
    with np.errstate(invalid="ignore"):
        beta = inverse_link(l_gpre, F10.values, eps)[0] - alpha
        gamma = inverse_link(l_cpost, F01.values, eps)[0] - alpha
    return IndexCoeffs(alpha, beta, gamma, F00.grid)


def _finish(values, diag, grid, label, monotonize, out_link, meta) -> StepDF:
    oor = diag["out_of_range"] > 0
    mono = monotonize or bool((np.diff(values) >= 0).all())
    return StepDF(grid, values, label, mono, out_of_range=oor, meta={**meta, **diag})


def _counterfactual(Fg_pre: StepDF, Fc_post: StepDF, Fc_pre: StepDF, linkset, clip,
                    monotonize, label, meta) -> StepDF:
    Fg_pre.grid.check_same(Fc_post.grid)
    Fg_pre.grid.check_same(Fc_pre.grid)
    sizes = [f.n for f in (Fg_pre, Fc_post, Fc_pre) if f.n is not None]
    if clip == "auto" and not sizes:
        raise ConfigError("automatic clipping needs cell sizes on the input DFs")
    eps = resolve_eps(clip, *sizes) if sizes else resolve_eps(clip, 1)
    v, diag = cf_values(Fg_pre.values, Fc_post.values, Fc_pre.values, linkset, eps,
                        Fg_pre.grid, monotonize)
    diag["eps"] = eps
    return _finish(v, diag, Fg_pre.grid, label, monotonize, linkset[3], meta)


def counterfactual_two_period(F10: StepDF, F01: StepDF, F00: StepDF, regime: LinkRegime,
                              clip="auto", monotonize: bool = False) -> StepDF:
    """Counterfactual DF of the treated group in the post period.

    Parameters
    ----------
    F10, F01, F00 : StepDF
        Treated pre-period, control post-period and control pre-period DFs.
    clip : ``'auto'``, float or None
        Boundary clipping before unbounded inverse links. ``'auto'`` needs
        cell sizes (``StepDF.n``) and falls back to no clipping without them.
    """
    if clip == "auto" and any(f.n is None for f in (F10, F01, F00)):
        clip = None
    linkset = regime.resolve(1, 0, 0, 1)
    return _counterfactual(F10, F01, F00, linkset, clip, monotonize, "F_cf[1,1]",
                           {"triple": (1.0, 0, 1)})


def _check_cells(data: PanelDataset, cells) -> None:
    for g, t in cells:
        if not data.cell_mask(g, t).any():
            gs = "inf" if np.isinf(g) else f"{g:g}"
            raise IdentificationError(f"cell (group={gs}, period={t}) has no observations")


def validate_triple(data: PanelDataset, g: float, tpre: int, tpost: int) -> None:
    if data.design is Design.TWO_PERIOD:
        if (g, tpre, tpost) != (1.0, 0, 1):
            raise IdentificationError("two-period designs only identify (g, t', t) = (1, 0, 1)")
        return
    if tpre == 0 or tpost == 0:
        raise IdentificationError("period 0 is not a valid pre or post period")
    if data.design is Design.NSMP:
        if g != 1.0:
            raise IdentificationError("the treated group of an NSMP design is 1")
        if not tpre < 0 < tpost:
            raise IdentificationError(f"need t' < 0 < t (got t'={tpre}, t={tpost})")
        return
    if not math.isfinite(g):
        raise IdentificationError("the never-treated group has no treatment effect")
    if not tpre < g:
        raise IdentificationError(f"t'={tpre} is not strictly before treatment of group {g:g}")
    if tpost < g:
        raise IdentificationError(f"t={tpost} precedes treatment of group {g:g}")


def control_group(data: PanelDataset) -> float:
    return math.inf if data.design is Design.STAGGERED else 0.0


def counterfactual_triple(data: PanelDataset, g: float, tpre: int, tpost: int,
                          regime: LinkRegime, grid: Grid, clip="auto",
                          monotonize: bool = False) -> StepDF:
    g = float(g)
    validate_triple(data, g, tpre, tpost)
    c = control_group(data)
    _check_cells(data, [(g, tpre), (c, tpost), (c, tpre)])
    Fg = group_period_ecdf(data, g, tpre, grid)
    Fcp = group_period_ecdf(data, c, tpost, grid)
    Fcq = group_period_ecdf(data, c, tpre, grid)
    gs = "inf" if math.isinf(g) else f"{g:g}"
    return _counterfactual(Fg, Fcp, Fcq, regime.resolve(g, c, tpre, tpost), clip, monotonize,
                           f"F_cf[{gs},{tpre},{tpost}]", {"triple": (g, tpre, tpost)})


def counterfactual_nsmp(data: PanelDataset, pre: int, post: int, regime: LinkRegime,
                        grid: Grid, clip="auto", monotonize: bool = False) -> StepDF:
    """Counterfactual for the single treated group of a multi-period design."""
    if data.design is not Design.NSMP:
        raise IdentificationError(f"expected an NSMP dataset, got {data.design.value}")
    return counterfactual_triple(data, 1.0, pre, post, regime, grid, clip, monotonize)


def counterfactual_staggered(data: PanelDataset, group: float, pre: int, post: int,
                             regime: LinkRegime, grid: Grid, clip="auto",
                             monotonize: bool = False) -> StepDF:
    """Counterfactual for group ``group`` using the never-treated group as control."""
    if data.design is not Design.STAGGERED:
        raise IdentificationError(f"expected a staggered dataset, got {data.design.value}")
    return counterfactual_triple(data, group, pre, post, regime, grid, clip, monotonize)
