"""Command-line interface: ``distdid estimate`` and ``distdid simulate``.

Options may come from a TOML file (``--config``); command-line flags take
precedence. Exit codes: 0 success, 2 configuration error, 3 data error,
4 identification error, 5 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .data import load_csv, detect_design
from .drcov import DRSpec
from .ecdf import build_grid
from .effects import DEFAULT_TAUS, EffectCurve
from .errors import ConfigError, DistDiDError
from .estimator import EstimatorSpec
from .identify import LinkRegime
from .inference import BootstrapPlan, band_pipeline
from .links import Link

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

ESTIMATE_DEFAULTS = {
    "data": None, "id": "id", "time": "time", "group": "group", "y": "y",
    "covariates": None, "dictionary": "linear", "design": "auto", "theta": "group",
    "link": "normal", "links": None, "grid": "all", "taus": None, "aggregate": "equal",
    "clip": "auto", "monotonize": False, "boot": 999, "seed": 0, "level": 0.90,
    "scheme": "nonparam", "threads": 1, "out": "distdid_out",
}
SIMULATE_DEFAULTS = {
    "dgp": 1, "error": "normal", "n": "1000", "reps": 500, "boot": 499, "link": "normal",
    "theta": "group", "seed": 0, "level": 0.90, "threads": 1, "out": "table.csv",
    "delta": 0.0, "grid": "simulation", "ald_form": "kotz", "truth": "analytic",
}
# options that never change results and stay out of the config hash
VOLATILE = {"threads", "out", "config"}


@dataclass
class RunConfig:
    command: str
    options: dict = field(default_factory=dict)

    def hash(self) -> str:
        stable = {k: v for k, v in sorted(self.options.items()) if k not in VOLATILE}
        return hashlib.sha256(json.dumps(stable, sort_keys=True, default=str).encode()).hexdigest()


def _split(s) -> list[str]:
    if s is None:
        return []
    if isinstance(s, (list, tuple)):
        return [str(x).strip() for x in s]
    return [p.strip() for p in str(s).split(",") if p.strip()]


def _floats(s) -> list[float]:
    try:
        return [float(x) for x in _split(s)]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {s!r}") from None


def parse_links(spec) -> dict:
    """``"0=normal,1=logistic"`` or a mapping to ``{label: Link}``."""
    if spec is None:
        return {}
    items = spec.items() if isinstance(spec, dict) else (p.split("=", 1) for p in _split(spec))
    out = {}
    for kv in items:
        if len(kv) != 2:
            raise ConfigError(f"bad link assignment in {spec!r}; use label=link")
        k, v = kv
        out[str(k).strip()] = Link.parse(v)
    return out


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"invalid TOML in {path}: {e}") from None
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def merge_options(defaults: dict, args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    opts = dict(defaults)
    cfg = _load_config(getattr(args, "config", None))
    unknown = set(cfg) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    opts.update(cfg)
    for k, v in vars(args).items():
        if k in defaults and v is not None:
            opts[k] = v
    return opts


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="distdid", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"distdid {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", help="estimate DTT/QTT with uniform bands")
    e.add_argument("--config", help="TOML file with option defaults")
    e.add_argument("--data", help="input CSV")
    for col in ("id", "time", "group", "y"):
        e.add_argument(f"--{col}", dest=col, help=f"column holding {col} (default {col})")
    e.add_argument("--covariates", help="comma-separated covariate columns")
    e.add_argument("--dictionary", choices=["constant", "linear", "quadratic"])
    e.add_argument("--design", choices=["auto", "two-period", "nsmp", "staggered"])
    e.add_argument("--theta", choices=["group", "time"])
    e.add_argument("--link", help="default link: normal, logistic, cauchy, uniform, identity")
    e.add_argument("--links", help="per-label links, e.g. 0=normal,1=logistic")
    e.add_argument("--grid", help="all, simulation, or comma-separated points")
    e.add_argument("--taus", help="comma-separated quantile levels")
    e.add_argument("--aggregate", help="equal, equal:<g>, event:<e>, triple:<g>,<t'>,<t>, file:<path>")
    e.add_argument("--clip", help="auto, none, or an epsilon")
    e.add_argument("--monotonize", action="store_true", default=None,
                   help="rearrange counterfactual DFs by running maximum")
    e.add_argument("--boot", type=int, help="bootstrap replications (0 disables bands)")
    e.add_argument("--seed", type=int)
    e.add_argument("--level", type=float)
    e.add_argument("--scheme", choices=["nonparam", "rademacher", "normal", "mammen"])
    e.add_argument("--threads", type=int)
    e.add_argument("--out", help="output directory")

    s = sub.add_parser("simulate", help="Monte Carlo table")
    s.add_argument("--config", help="TOML file with option defaults")
    s.add_argument("--dgp", type=int, choices=[1, 2])
    s.add_argument("--error", help="normal or ald:<kappa>")
    s.add_argument("--n", help="sample size(s), comma-separated")
    s.add_argument("--reps", type=int)
    s.add_argument("--boot", type=int)
    s.add_argument("--link")
    s.add_argument("--theta", choices=["group", "time"])
    s.add_argument("--delta", type=float)
    s.add_argument("--grid", choices=["simulation", "trimmed", "all"])
    s.add_argument("--ald-form", dest="ald_form", choices=["kotz", "quantile"])
    s.add_argument("--truth", choices=["analytic", "normal"],
                   help="reference DF for L2(cDF); 'normal' ignores the error law")
    s.add_argument("--seed", type=int)
    s.add_argument("--level", type=float)
    s.add_argument("--threads", type=int)
    s.add_argument("--out", help="output CSV")
    return p


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _df_csv(path, grid, values, band) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# sup_y={grid.sup_y!r}\n")
        fh.write("y,value,lo,hi\n")
        for k, (y, v) in enumerate(zip(grid.points, values)):
            lo = "" if band is None else repr(float(band.lo[k]))
            hi = "" if band is None else repr(float(band.hi[k]))
            fh.write(f"{float(y)!r},{float(v)!r},{lo},{hi}\n")


def _qf_curve(taus, est, intervals) -> EffectCurve:
    return EffectCurve(taus, est, "qf", intervals)


def estimate_command(opts: dict) -> dict:
    from .effects import left_inverse

    if not opts.get("data"):
        raise ConfigError("--data is required")
    schema = {k: opts[k] for k in ("id", "time", "group", "y")}
    covs = _split(opts["covariates"]) or None
    design = None if opts["design"] == "auto" else opts["design"]
    data = load_csv(opts["data"], schema, covariates=covs or [], design=design)
    info = detect_design(data)

    Link.parse(opts["link"])
    regime = LinkRegime(opts["theta"], parse_links(opts["links"]), opts["link"])
    grid_rule = opts["grid"]
    if isinstance(grid_rule, (list, tuple)):
        grid_rule = [float(x) for x in grid_rule]
    elif str(grid_rule).strip().lower() not in ("all", "simulation"):
        grid_rule = _floats(grid_rule)
    grid = build_grid(data, grid_rule)
    taus = np.asarray(_floats(opts["taus"]) if opts["taus"] else DEFAULT_TAUS, dtype=float)
    clip = opts["clip"]
    if isinstance(clip, str) and clip.lower() == "none":
        clip = None
    drspec = DRSpec(tuple(covs), opts["dictionary"]) if covs else None
    spec = EstimatorSpec(regime, opts["aggregate"], clip, bool(opts["monotonize"]), drspec)
    plan = BootstrapPlan(opts["scheme"], int(opts["boot"]), int(opts["seed"]),
                         float(opts["level"]), int(opts["threads"]))

    res = band_pipeline(data, spec, grid, plan, taus)
    pt = res.point
    out = opts["out"]
    os.makedirs(out, exist_ok=True)
    _df_csv(os.path.join(out, "treated_df.csv"), grid, pt.treated.values, res.treated_band)
    _df_csv(os.path.join(out, "counterfactual_df.csv"), grid, pt.counterfactual.values,
            res.cf_band)
    dtt_curve = res.dtt
    dtt_curve.to_csv(os.path.join(out, "dtt.csv"))
    q1 = _qf_curve(taus, left_inverse(pt.treated, taus), res.qf_treated)
    q0 = _qf_curve(taus, left_inverse(pt.counterfactual, taus), res.qf_cf)
    q1.to_csv(os.path.join(out, "qf_treated.csv"))
    q0.to_csv(os.path.join(out, "qf_counterfactual.csv"))
    res.qtt.to_csv(os.path.join(out, "qtt.csv"))
    for name, curve in (("dtt", dtt_curve), ("qtt", res.qtt), ("qf_treated", q1),
                        ("qf_counterfactual", q0),
                        ("treated_df", EffectCurve(grid.points, pt.treated.values, "df",
                                                   res.treated_band)),
                        ("counterfactual_df", EffectCurve(grid.points, pt.counterfactual.values,
                                                          "df", res.cf_band))):
        curve.to_plot_data(os.path.join(out, f"{name}.dat"))

    rc = RunConfig("estimate", opts)
    summary = {
        "version": __version__,
        "seed": plan.seed,
        "config_hash": rc.hash(),
        "config": {k: v for k, v in sorted(opts.items()) if k not in VOLATILE},
        "design": {"design": info.design.value, "sampling": info.kind.value,
                   "pre_periods": list(info.pre_periods), "post_periods": list(info.post_periods),
                   "groups": ["inf" if np.isinf(g) else g for g in info.groups],
                   "N": data.N, "n": data.n},
        "weights": [{"g": "inf" if np.isinf(g) else g, "tpre": a, "tpost": b, "weight": w}
                    for (g, a, b), w in pt.scheme.weights.items()],
        "grid": grid.points.tolist(),
        "adtt": pt.adtt,
        "bootstrap": {"B": plan.B, "scheme": plan.scheme.value, "level": plan.level},
        "diagnostics": res.diagnostics,
    }
    if res.dtt_test is not None:
        summary["dtt_test"] = vars(res.dtt_test)
        summary["adtt_test"] = vars(res.adtt_test)
    with open(os.path.join(out, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    d = res.diagnostics
    _log(f"design={info.design.value} sampling={info.kind.value} triples={d['triples']} "
         f"clipped={d['clipped']} nonmonotone_cf={d['nonmonotone_counterfactual']}")
    if "degenerate_replications" in d:
        _log(f"bootstrap B={plan.B} degenerate={d['degenerate_replications']} "
             f"redraws={d['redraws']} truncated={d['truncated_points']}")
    line = {"status": "ok", "command": "estimate", "out": out, "adtt": pt.adtt,
            "config_hash": summary["config_hash"]}
    if res.dtt_test is not None:
        line["reject_dtt"] = res.dtt_test.reject
    return line


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, tuple):
        return list(o)
    return str(o)


def simulate_command(opts: dict) -> dict:
    from .simlab import DGPConfig, run_mc, write_table

    Link.parse(opts["link"])
    rows = []
    for n in _split(opts["n"]):
        try:
            n = int(n)
        except ValueError:
            raise ConfigError(f"bad sample size {n!r}") from None
        cfg = DGPConfig(dgp=int(opts["dgp"]), n=n, error=str(opts["error"]),
                        delta=float(opts["delta"]), link=str(opts["link"]),
                        theta=str(opts["theta"]), B=int(opts["boot"]), reps=int(opts["reps"]),
                        seed=int(opts["seed"]), level=float(opts["level"]),
                        threads=int(opts["threads"]), grid=str(opts["grid"]),
                        ald_form=str(opts["ald_form"]), truth=str(opts["truth"]))
        m = run_mc(cfg)
        _log(f"n={n} reps={cfg.reps} B={cfg.B} time={m.seconds:.1f}s")
        rows.append((cfg, m))
    write_table(rows, opts["out"])
    return {"status": "ok", "command": "simulate", "out": opts["out"],
            "rows": [{"n": c.n, **{k: v for k, v in m.row().items() if k != "seconds"}}
                     for c, m in rows]}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if args.command == "estimate":
                line = estimate_command(merge_options(ESTIMATE_DEFAULTS, args))
            else:
                line = simulate_command(merge_options(SIMULATE_DEFAULTS, args))
        for w in caught:
            _log(f"warning: {w.message}")
    except DistDiDError as e:
        _log(f"error: {e}")
        print(json.dumps({"status": "error", "kind": type(e).__name__, "message": str(e)}))
        return e.exit_code
    print(json.dumps(line, default=_json_default))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
