"""Monte Carlo harness for two-period repeated cross-sections.

Latent outcome ``Yt = a + D b + t g + D t d + U`` with ``D ~ Bernoulli(1/2)``
and ``t = 1{i > n/2}``. DGP1 observes ``max(ceil(Yt + 1), 0)``; DGP2
observes ``Yt``. Errors are standard normal or asymmetric Laplace.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from .data import Design, PanelDataset
from .ecdf import Grid, build_grid
from .effects import DEFAULT_TAUS
from .errors import ConfigError
from .estimator import Estimator, EstimatorSpec
from .identify import LinkRegime
from .inference import BootstrapPlan, band_pipeline

SQRT2 = math.sqrt(2.0)


# -- asymmetric Laplace ----------------------------------------------------

def _check_kappa(kappa: float) -> None:
    if not 0.0 < kappa < 1.0:
        raise ConfigError(f"ALD skew kappa must lie in (0, 1), got {kappa}")


def ald_cdf(u, kappa: float):
    """CDF of ALD(0, 1, kappa); mass ``kappa^2 / (1 + kappa^2)`` below zero."""
    _check_kappa(kappa)
    u = np.asarray(u, dtype=float)
    k2 = kappa * kappa
    with np.errstate(over="ignore"):
        neg = k2 / (1 + k2) * np.exp(SQRT2 * np.minimum(u, 0.0) / kappa)
        pos = 1 - np.exp(-SQRT2 * kappa * np.maximum(u, 0.0)) / (1 + k2)
    return np.where(u < 0, neg, pos)


def ald_quantile(p, kappa: float):
    _check_kappa(kappa)
    p = np.asarray(p, dtype=float)
    k2 = kappa * kappa
    p0 = k2 / (1 + k2)
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = kappa / SQRT2 * np.log(p * (1 + k2) / k2)
        hi = -1 / (SQRT2 * kappa) * np.log((1 - p) * (1 + k2))
    return np.where(p <= p0, lo, hi)


def ald_mean(kappa: float) -> float:
    _check_kappa(kappa)
    return (1 / kappa - kappa) / SQRT2


def qr_ald_cdf(u, p: float):
    """CDF of the quantile-regression ALD with ``P(U <= 0) = p``."""
    _check_kappa(p)
    u = np.asarray(u, dtype=float)
    with np.errstate(over="ignore"):
        neg = p * np.exp((1 - p) * np.minimum(u, 0.0))
        pos = 1 - (1 - p) * np.exp(-p * np.maximum(u, 0.0))
    return np.where(u < 0, neg, pos)


def qr_ald_quantile(v, p: float):
    _check_kappa(p)
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = np.log(v / p) / (1 - p)
        hi = -np.log((1 - v) / (1 - p)) / p
    return np.where(v <= p, lo, hi)


def sample_ald(rng: np.random.Generator, kappa: float, size=None):
    """Inverse-transform draws from ALD(0, 1, kappa)."""
    _check_kappa(kappa)
    u = rng.random(size)
    # guard the measure-zero endpoint of random()
    u = np.where(u == 0.0, np.finfo(float).tiny, u)
    return ald_quantile(u, kappa)


# -- configuration ---------------------------------------------------------

@dataclass(frozen=True)
class DGPConfig:
    """One Monte Carlo design.

    ``error`` is ``"normal"`` or ``"ald:<kappa>"``. ``ald_form`` picks the
    ALD convention: ``"kotz"`` puts mass ``kappa^2/(1+kappa^2)`` below zero,
    ``"quantile"`` puts mass ``kappa`` there. ``truth="normal"`` scores the
    counterfactual DF against standard-normal errors whatever the error
    law (a reference curve rather than the population DF). ``grid`` is a
    :func:`~distdid.ecdf.build_grid` rule.
    """

    dgp: int = 1
    n: int = 1000
    error: str = "normal"
    alpha: float = 0.1
    beta: float = 0.2
    gamma: float = -0.1
    delta: float = 0.0
    link: str = "normal"
    theta: str = "group"
    B: int = 499
    reps: int = 500
    seed: int = 0
    level: float = 0.90
    threads: int = 1
    clip: object = "auto"
    taus: tuple = tuple(DEFAULT_TAUS.tolist())
    grid: str = "simulation"
    ald_form: str = "kotz"
    truth: str = "analytic"

    def __post_init__(self):
        if self.dgp not in (1, 2):
            raise ConfigError(f"dgp must be 1 or 2 (got {self.dgp})")
        if self.n < 4 or self.n % 2:
            raise ConfigError("n must be an even number of at least 4")
        if self.reps < 1:
            raise ConfigError("reps must be positive")
        self.kappa  # validates the error spec
        if self.ald_form not in ("kotz", "quantile"):
            raise ConfigError(f"ald_form must be 'kotz' or 'quantile' (got {self.ald_form!r})")
        if self.truth not in ("analytic", "normal"):
            raise ConfigError(f"truth must be 'analytic' or 'normal' (got {self.truth!r})")

    @property
    def kappa(self) -> float | None:
        e = self.error.strip().lower()
        if e == "normal":
            return None
        if e.startswith("ald:"):
            k = float(e.split(":", 1)[1])
            _check_kappa(k)
            return k
        raise ConfigError(f"unknown error distribution {self.error!r}; use normal or ald:<kappa>")

    def error_cdf(self, u):
        k = self.kappa
        if k is None:
            return special.ndtr(u)
        return ald_cdf(u, k) if self.ald_form == "kotz" else qr_ald_cdf(u, k)

    def draw_errors(self, rng, size):
        k = self.kappa
        if k is None:
            return rng.standard_normal(size)
        if self.ald_form == "kotz":
            return sample_ald(rng, k, size)
        u = rng.random(size)
        return qr_ald_quantile(np.where(u == 0.0, np.finfo(float).tiny, u), k)


def observe(ytilde: np.ndarray, dgp: int) -> np.ndarray:
    if dgp == 1:
        return np.maximum(np.ceil(ytilde + 1.0), 0.0)
    return np.asarray(ytilde, dtype=float)


def gen_dgp(config: DGPConfig, rng: np.random.Generator) -> PanelDataset:
    """One repeated cross-section of ``config.n`` observations."""
    n = config.n
    D = (rng.random(n) < 0.5).astype(float)
    t = (np.arange(1, n + 1) > n // 2).astype(float)
    U = config.draw_errors(rng, n)
    yt = config.alpha + D * config.beta + t * config.gamma + D * t * config.delta + U
    y = observe(yt, config.dgp)
    return PanelDataset.from_arrays(np.arange(n), t.astype(int), D, y, design=Design.TWO_PERIOD)


def true_df(config: DGPConfig, y, treated_post: bool = False) -> np.ndarray:
    """Population DF of the treated group in period 1 (untreated unless ``treated_post``)."""
    mu = config.alpha + config.beta + config.gamma + (config.delta if treated_post else 0.0)
    y = np.asarray(y, dtype=float)
    cdf = special.ndtr if config.truth == "normal" else config.error_cdf
    if config.dgp == 1:
        # ceil(Yt + 1) <= k  iff  Yt <= k - 1 for integer k
        return np.where(y >= 0, cdf(np.floor(y) - 1.0 - mu), 0.0)
    return cdf(y - mu)


def true_quantile(config: DGPConfig, grid: Grid, taus, treated_post: bool) -> np.ndarray:
    """Left inverse of the true DF restricted to ``grid``."""
    from .effects import left_inverse_values
    return left_inverse_values(true_df(config, grid.points, treated_post), grid.points,
                               grid.sup_y, taus)


def simulation_grid(data: PanelDataset, rule: str = "simulation") -> Grid:
    return build_grid(data, rule)


# -- Monte Carlo -----------------------------------------------------------

@dataclass
class MCMetrics:
    L2_dtt: float
    L2_cdf: float
    rej_dtt: float
    rej_adtt: float
    mb_adtt: float
    mad_adtt: float
    cover_dtt: float = float("nan")
    cover_qtt: float = float("nan")
    reps: int = 0
    seconds: float = 0.0
    traces: dict = field(default_factory=dict)

    def row(self) -> dict:
        d = asdict(self)
        d.pop("traces")
        return d


def _one_rep(config: DGPConfig, rep: int) -> dict:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([config.seed, 0, rep])))
    data = gen_dgp(config, rng)
    grid = simulation_grid(data, config.grid)
    spec = EstimatorSpec(LinkRegime(config.theta, {}, config.link), clip=config.clip)
    est = Estimator(data, grid, spec)
    true_cf = true_df(config, grid.points)
    true_tr = true_df(config, grid.points, treated_post=True)
    true_dtt = true_tr - true_cf
    out = {}
    if config.B > 0:
        plan = BootstrapPlan("nonparam", config.B, config.seed, config.level, 1, stream=(1, rep))
        res = band_pipeline(data, spec, grid, plan, np.asarray(config.taus), estimator=est)
        pt = res.point
        true_qtt = (true_quantile(config, grid, res.taus, True)
                    - true_quantile(config, grid, res.taus, False))
        out["rej_dtt"] = float(res.dtt_test.reject)
        out["rej_adtt"] = float(res.adtt_test.reject)
        out["cover_dtt"] = float(res.dtt_band.contains(true_dtt))
        out["cover_qtt"] = float(np.all(res.qtt_intervals.contains(true_qtt)))
    else:
        pt = est.point()
    out["L2_dtt"] = float(np.sqrt(np.mean((pt.dtt.values - true_dtt) ** 2)))
    out["L2_cdf"] = float(np.sqrt(np.mean((pt.counterfactual.values - true_cf) ** 2)))
    out["adtt_err"] = pt.adtt - float(np.mean(true_dtt))
    return out


def run_mc(config: DGPConfig) -> MCMetrics:
    """Monte Carlo metrics; with ``B=0`` only the estimation metrics are filled."""
    t0 = time.perf_counter()
    reps = range(config.reps)
    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as ex:
            rows = list(ex.map(lambda r: _one_rep(config, r), reps))
    else:
        rows = [_one_rep(config, r) for r in reps]
    col = lambda k: np.array([r.get(k, np.nan) for r in rows])
    err = col("adtt_err")
    traces = {k: col(k) for k in rows[0]}
    nan = float("nan")
    boot = config.B > 0
    return MCMetrics(
        L2_dtt=float(col("L2_dtt").mean()), L2_cdf=float(col("L2_cdf").mean()),
        rej_dtt=float(col("rej_dtt").mean()) if boot else nan,
        rej_adtt=float(col("rej_adtt").mean()) if boot else nan,
        mb_adtt=float(err.mean()), mad_adtt=float(np.median(np.abs(err))),
        cover_dtt=float(col("cover_dtt").mean()) if boot else nan,
        cover_qtt=float(col("cover_qtt").mean()) if boot else nan,
        reps=config.reps, seconds=time.perf_counter() - t0, traces=traces)


TABLE_COLUMNS = ["dgp", "error", "link", "n", "reps", "B", "L2_dtt", "rej_dtt", "mb_adtt",
                 "mad_adtt", "rej_adtt", "L2_cdf", "cover_dtt", "cover_qtt"]


def write_table(rows: list[tuple[DGPConfig, MCMetrics]], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for cfg, m in rows:
            w.writerow([cfg.dgp, cfg.error, cfg.link, cfg.n, cfg.reps, cfg.B]
                       + [f"{getattr(m, k):.6f}" for k in TABLE_COLUMNS[6:]])
