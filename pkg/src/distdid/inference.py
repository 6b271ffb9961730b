"""Unit-level bootstrap, sup-t uniform bands and sup-t tests.

Replication ``b`` draws its randomness from a generator keyed by
``(seed, *stream, b, attempt)``, so any split of the replications over
threads reproduces the same numbers.
"""

from __future__ import annotations

import enum
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import PanelDataset
from .ecdf import Grid
from .effects import DEFAULT_TAUS, EffectCurve, Intervals, invert_df_band, qtt, qtt_band
from .errors import ConfigError, DegenerateBootstrapError, NumericalError
from .estimator import Estimator, EstimatorSpec, PointEstimate

NORMAL_IQR = 1.3489795003921634
SCALE_FLOOR = 1e-10
CHUNK = 64
MAX_RETRIES = 50
MAX_DEGENERATE_SHARE = 0.10


class Scheme(enum.Enum):
    NONPARAMETRIC = "nonparam"
    RADEMACHER = "rademacher"
    NORMAL = "normal"
    MAMMEN = "mammen"

    @classmethod
    def parse(cls, v) -> "Scheme":
        if isinstance(v, Scheme):
            return v
        key = str(v).strip().lower()
        if key in ("nonparam", "nonparametric", "empirical"):
            return cls.NONPARAMETRIC
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown bootstrap scheme {v!r}; valid: nonparam, rademacher, "
                              "normal, mammen") from None

    @property
    def multiplier(self) -> bool:
        return self is not Scheme.NONPARAMETRIC


@dataclass(frozen=True)
class BootstrapPlan:
    scheme: Scheme = Scheme.NONPARAMETRIC
    B: int = 999
    seed: int = 0
    level: float = 0.90
    threads: int = 1
    stream: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        if int(self.B) != self.B or self.B < 0:
            raise ConfigError("number of bootstrap replications must be a nonnegative integer")
        if not 0.0 < self.level < 1.0:
            raise ConfigError("coverage level must lie in (0, 1)")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError("seed must be a 64-bit nonnegative integer")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if 0 < self.B < 200:
            warnings.warn(f"B={self.B} bootstrap replications; at least 200 are advised",
                          stacklevel=3)


def rep_generator(plan: BootstrapPlan, rep: int, attempt: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence([int(plan.seed), *map(int, plan.stream), int(rep), int(attempt)])
    return np.random.Generator(np.random.Philox(ss))


_MAMMEN_LO = (1 - np.sqrt(5)) / 2
_MAMMEN_HI = (1 + np.sqrt(5)) / 2
_MAMMEN_P = (np.sqrt(5) + 1) / (2 * np.sqrt(5))


def draw_multipliers(rng: np.random.Generator, scheme: Scheme, N: int) -> np.ndarray:
    """Mean-zero, unit-variance multipliers ``xi``."""
    if scheme is Scheme.RADEMACHER:
        return rng.integers(0, 2, N) * 2.0 - 1.0
    if scheme is Scheme.NORMAL:
        return rng.standard_normal(N)
    if scheme is Scheme.MAMMEN:
        return np.where(rng.random(N) < _MAMMEN_P, _MAMMEN_LO, _MAMMEN_HI)
    raise ConfigError(f"{scheme.value} is not a multiplier scheme")


def unit_weights(N: int, plan: BootstrapPlan, rep: int, attempt: int = 0) -> np.ndarray:
    """Unit weights of one replication (multiplicities or ``1 + xi``)."""
    rng = rep_generator(plan, rep, attempt)
    if plan.scheme is Scheme.NONPARAMETRIC:
        return np.bincount(rng.integers(0, N, N), minlength=N).astype(float)
    return 1.0 + draw_multipliers(rng, plan.scheme, N)


def resample(data: PanelDataset, plan: BootstrapPlan, rep: int):
    """One bootstrap replication.

    Nonparametric: a dataset of ``N`` units drawn with replacement, each
    with all its periods; the ``k``-th extra copy of a unit is renamed
    ``<id>#k``. Multiplier: the vector ``1 + xi`` of unit weights.
    """
    w = unit_weights(data.N, plan, rep)
    if plan.scheme.multiplier:
        return w
    ids, per, grp, ys, xs = [], [], [], [], []
    for u in np.flatnonzero(w):
        rows = np.flatnonzero(data.unit == u)
        for k in range(int(w[u])):
            uid = data.unit_ids[u] if k == 0 else f"{data.unit_ids[u]}#{k}"
            ids += [uid] * rows.size
            per.append(data.period[rows])
            grp.append(data.group[rows])
            ys.append(data.outcome[rows])
            xs.append(data.covariates[rows])
    period = np.concatenate(per)
    if data.period_labels:
        period = np.array([data.period_labels[int(t)] for t in period])
    return PanelDataset.from_arrays(ids, period, np.concatenate(grp), np.concatenate(ys),
                                    np.concatenate(xs), data.covariate_names, data.design)


# -- bands -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class UniformBand:
    """``center +/- critical_value * scale``, optionally truncated to [0, 1]."""

    center: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    level: float
    critical_value: float
    scale: np.ndarray
    grid: Grid | None = None
    truncated: bool = False
    n_truncated: int = 0

    @property
    def radius(self) -> np.ndarray:
        return self.critical_value * self.scale

    def contains(self, f) -> bool:
        f = np.asarray(f, dtype=float)
        return bool(np.all((self.lo <= f) & (f <= self.hi)))

    def excludes_zero(self) -> bool:
        """True when some point has ``|center| >= radius`` with ``center != 0``."""
        return bool(np.any(_excl(self.center, self.radius)))

    def truncate(self, lo: float = 0.0, hi: float = 1.0) -> "UniformBand":
        a = np.clip(self.lo, lo, hi)
        b = np.clip(self.hi, lo, hi)
        n = int(np.count_nonzero(a != self.lo) + np.count_nonzero(b != self.hi))
        return UniformBand(self.center, a, b, self.level, self.critical_value, self.scale,
                           self.grid, True, n)


def _excl(c, r):
    return (np.abs(c) >= r) & (c != 0)


def bootstrap_scale(boot: np.ndarray) -> np.ndarray:
    q75, q25 = np.quantile(boot, [0.75, 0.25], axis=0)
    return np.maximum((q75 - q25) / NORMAL_IQR, SCALE_FLOOR)


def _as2d(b):
    b = np.asarray(b, dtype=float)
    return b[:, None] if b.ndim == 1 else b


def sup_t_critical(centers, boots, level: float) -> tuple[float, list[np.ndarray]]:
    """Critical value of the sup-t statistic over the concatenated curves."""
    centers = [np.atleast_1d(np.asarray(c, dtype=float)) for c in centers]
    boots = [_as2d(b) for b in boots]
    for c, b in zip(centers, boots):
        if b.shape[1] != c.size:
            raise NumericalError("bootstrap curves do not match the centre's grid")
    Bs = {b.shape[0] for b in boots}
    if len(Bs) != 1:
        raise NumericalError("jointly banded curves need the same number of replications")
    B = Bs.pop()
    if B == 0:
        raise NumericalError("no bootstrap replications")
    scales = [bootstrap_scale(b) for b in boots]
    allb = np.concatenate(boots, axis=1)
    allc = np.concatenate(centers)
    if B >= 2 and np.all(allb == allb[0]) and not np.array_equal(allb[0], allc):
        raise DegenerateBootstrapError("all bootstrap curves are identical but differ from "
                                       "the estimate")
    alls = np.concatenate(scales)
    tstar = np.max(np.abs(allb - allc) / alls, axis=1)
    crit = float(np.quantile(tstar, level, method="inverted_cdf"))
    return crit, scales


def uniform_band(center, boot_curves, level: float = 0.90, joint_with=None, grid=None):
    """Sup-t band (or joint bands) from bootstrap curves.

    Parameters
    ----------
    center : (L,) array
    boot_curves : (B, L) array
    joint_with : list of ``(center, boot_curves)``, optional
        Extra curves sharing one critical value. When given, a list of bands
        is returned, the first for ``center``.
    """
    pairs = [(center, boot_curves)] + list(joint_with or [])
    crit, scales = sup_t_critical([p[0] for p in pairs], [p[1] for p in pairs], level)
    bands = []
    for (c, _), s in zip(pairs, scales):
        c = np.atleast_1d(np.asarray(c, dtype=float))
        r = crit * s
        bands.append(UniformBand(c, c - r, c + r, level, crit, s, grid))
    return bands if joint_with else bands[0]


@dataclass(frozen=True)
class TestResult:
    reject: bool
    statistic: float
    critical: float


def sup_t_test(center, boot_curves, alpha: float = 0.10) -> TestResult:
    """Sup-t test of a zero curve at level ``alpha``.

    Rejects iff some point has ``|center| >= crit * scale`` and a nonzero
    estimate, i.e. iff the ``1 - alpha`` band excludes zero there.
    """
    c = np.atleast_1d(np.asarray(center, dtype=float))
    crit, (s,) = sup_t_critical([c], [boot_curves], 1 - alpha)
    stat = float(np.max(np.abs(c) / s))
    return TestResult(bool(np.any(_excl(c, crit * s))), stat, crit)


# -- replications ----------------------------------------------------------

@dataclass
class BootstrapDraws:
    treated: np.ndarray
    cf: np.ndarray
    dtt: np.ndarray
    adtt: np.ndarray
    degenerate: int = 0
    redraws: int = 0


def _chunk(est: Estimator, plan: BootstrapPlan, reps: range):
    N = est.data.N
    W = np.empty((len(reps), N))
    degenerate = redraws = 0
    for i, b in enumerate(reps):
        for attempt in range(MAX_RETRIES + 1):
            w = unit_weights(N, plan, b, attempt)
            if (est.cell_totals(w[None, :]) > 0).all():
                break
            redraws += 1
        else:
            raise DegenerateBootstrapError(
                f"replication {b} left a required cell empty after {MAX_RETRIES} redraws")
        degenerate += attempt > 0
        W[i] = w
    return est.evaluate(W, multiplier=plan.scheme.multiplier), degenerate, redraws


def run_bootstrap(est: Estimator, plan: BootstrapPlan) -> BootstrapDraws:
    """All ``plan.B`` replications of the estimator, in replication order."""
    if est.cov is not None and plan.scheme is Scheme.NORMAL:
        raise ConfigError("normal multipliers give negative weights; use rademacher or mammen "
                          "with covariates")
    chunks = [range(s, min(s + CHUNK, plan.B)) for s in range(0, plan.B, CHUNK)]
    if plan.threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(plan.threads) as ex:
            out = list(ex.map(lambda r: _chunk(est, plan, r), chunks))
    else:
        out = [_chunk(est, plan, r) for r in chunks]
    deg = sum(o[1] for o in out)
    if deg > MAX_DEGENERATE_SHARE * plan.B:
        raise DegenerateBootstrapError(f"{deg} of {plan.B} replications were degenerate "
                                       "(more than 10%)")
    cat = lambda name: np.concatenate([getattr(o[0], name) for o in out])
    return BootstrapDraws(cat("treated"), cat("cf"), cat("dtt"), cat("adtt"), deg,
                          sum(o[2] for o in out))


@dataclass
class PipelineResult:
    point: PointEstimate
    qtt: EffectCurve
    taus: np.ndarray
    plan: BootstrapPlan
    treated_band: UniformBand | None = None
    cf_band: UniformBand | None = None
    dtt_band: UniformBand | None = None
    qf_treated: Intervals | None = None
    qf_cf: Intervals | None = None
    qtt_intervals: Intervals | None = None
    adtt_test: TestResult | None = None
    dtt_test: TestResult | None = None
    draws: BootstrapDraws | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def dtt(self) -> EffectCurve:
        c = self.point.dtt
        return c.with_band(self.dtt_band) if self.dtt_band is not None else c


def band_pipeline(data: PanelDataset, spec: EstimatorSpec, grid: Grid, plan: BootstrapPlan,
                  taus=DEFAULT_TAUS, keep_draws: bool = False,
                  estimator: Estimator | None = None) -> PipelineResult:
    """Point estimates plus every band, re-running the estimator per replication."""
    est = estimator or Estimator(data, grid, spec)
    pt = est.point()
    taus = np.asarray(taus, dtype=float)
    q = qtt(pt.treated, pt.counterfactual, taus)
    res = PipelineResult(pt, q, taus, plan, diagnostics=dict(pt.diagnostics))
    if plan.B == 0:
        return res
    dr = run_bootstrap(est, plan)
    tb, cb = uniform_band(pt.treated.values, dr.treated, plan.level,
                          joint_with=[(pt.counterfactual.values, dr.cf)], grid=grid)
    tb, cb = tb.truncate(), cb.truncate()
    db = uniform_band(pt.dtt.values, dr.dtt, plan.level, grid=grid)
    qf1 = invert_df_band(tb, taus, grid)
    qf0 = invert_df_band(cb, taus, grid)
    res.treated_band, res.cf_band, res.dtt_band = tb, cb, db
    res.qf_treated, res.qf_cf, res.qtt_intervals = qf1, qf0, qtt_band(qf1, qf0)
    res.qtt = q.with_band(res.qtt_intervals)
    alpha = 1 - plan.level
    res.dtt_test = sup_t_test(pt.dtt.values, dr.dtt, alpha)
    res.adtt_test = sup_t_test(np.array([pt.adtt]), dr.adtt, alpha)
    res.diagnostics.update({"degenerate_replications": dr.degenerate, "redraws": dr.redraws,
                            "critical_value_df": tb.critical_value,
                            "critical_value_dtt": db.critical_value,
                            "truncated_points": tb.n_truncated + cb.n_truncated})
    if keep_draws:
        res.draws = dr
    return res
