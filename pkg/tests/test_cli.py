import json
import os
import time

import numpy as np
import pytest

from distdid.cli import ESTIMATE_DEFAULTS, RunConfig, main
from distdid.ecdf import StepDF, build_grid
from distdid.effects import EffectCurve
from distdid.estimator import Estimator, EstimatorSpec

from conftest import make_staggered, make_two_period

ARTIFACTS = {"treated_df.csv", "counterfactual_df.csv", "dtt.csv", "qf_treated.csv",
             "qf_counterfactual.csv", "qtt.csv", "summary.json", "dtt.dat", "qtt.dat",
             "qf_treated.dat", "qf_counterfactual.dat", "treated_df.dat",
             "counterfactual_df.dat"}


def write_rows(path, rows, header="id,time,group,y"):
    path.write_text(header + "\n" + "\n".join(",".join(map(str, r)) for r in rows) + "\n")
    return str(path)


def toy_csv(tmp_path):
    # cells: (0,0) {0,1}; (0,1) {1,1}; (1,0) {0,1}; (1,1) {1,2}
    cells = {(0, 0): [0, 1], (0, 1): [1, 1], (1, 0): [0, 1], (1, 1): [1, 2]}
    rows, k = [], 0
    for (g, t), ys in cells.items():
        for y in ys:
            rows.append((k, t, g, y))
            k += 1
    return write_rows(tmp_path / "toy.csv", rows)


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    lines = [l for l in out.out.splitlines() if l.strip()]
    return code, json.loads(lines[-1]) if lines else None, out.err


def staggered_csv(tmp_path, rng, n_units=60):
    d = make_staggered(rng, n_units=n_units)
    rows = [(d.unit_ids[u], t, "inf" if np.isinf(g) else int(g), y)
            for u, t, g, y in zip(d.unit, d.period, d.group, d.outcome)]
    return write_rows(tmp_path / "stag.csv", rows)


class TestEstimate:
    def test_identity_toy(self, tmp_path, capsys):
        out = tmp_path / "o"
        code, line, _ = run(["estimate", "--data", toy_csv(tmp_path), "--link", "identity",
                             "--boot", "0", "--out", str(out)], capsys)
        assert code == 0 and line["status"] == "ok"
        # F11 - (F10 + F01 - F00) on {0, 1, 2}
        dtt = EffectCurve.from_csv(out / "dtt.csv")
        assert dtt.axis.tolist() == [0.0, 1.0, 2.0]
        assert dtt.values.tolist() == [0.0, -0.5, 0.0]
        assert line["adtt"] == pytest.approx(-1 / 6)

    def test_artifacts_and_round_trip(self, tmp_path, capsys, rng):
        d = make_two_period(rng, n=300)
        rows = list(zip(range(d.N), d.period, d.group.astype(int), d.outcome))
        path = write_rows(tmp_path / "d.csv", rows)
        out = tmp_path / "o"
        code, _, err = run(["estimate", "--data", path, "--boot", "99", "--seed", "3",
                            "--out", str(out)], capsys)
        assert code == 0
        assert set(os.listdir(out)) == ARTIFACTS
        assert "design=two-period" in err
        summary = json.loads((out / "summary.json").read_text())
        assert summary["seed"] == 3 and len(summary["config_hash"]) == 64
        assert "degenerate_replications" in summary["diagnostics"]
        pt = Estimator(d, build_grid(d, "all"), EstimatorSpec()).point()
        cf = StepDF.from_csv(out / "counterfactual_df.csv")
        assert np.max(np.abs(cf.values - pt.counterfactual.values)) <= 1e-12
        assert cf.grid == pt.counterfactual.grid
        tr = StepDF.from_csv(out / "treated_df.csv")
        assert np.max(np.abs(tr.values - pt.treated.values)) <= 1e-12
        dtt = EffectCurve.from_csv(out / "dtt.csv")
        assert np.max(np.abs(dtt.values - pt.dtt.values)) <= 1e-12
        assert dtt.band is not None and (dtt.band.lo <= dtt.values + 1e-12).all()

    def test_staggered_fifteen_triples(self, tmp_path, capsys, rng):
        out = tmp_path / "o"
        code, _, _ = run(["estimate", "--data", staggered_csv(tmp_path, rng),
                          "--aggregate", "equal:1", "--boot", "0", "--out", str(out)], capsys)
        assert code == 0
        w = json.loads((out / "summary.json").read_text())["weights"]
        assert len(w) == 15
        assert all(x["weight"] == pytest.approx(1 / 15) for x in w)

    def test_threads_byte_identical(self, tmp_path, capsys, rng):
        path = staggered_csv(tmp_path, rng)
        outs = []
        for th in ("1", "2"):
            out = tmp_path / f"t{th}"
            code, _, _ = run(["estimate", "--data", path, "--boot", "120", "--seed", "8",
                              "--threads", th, "--out", str(out)], capsys)
            assert code == 0
            outs.append(out)
        for name in sorted(ARTIFACTS):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


class TestExitCodes:
    def test_invalid_link(self, tmp_path, capsys):
        code, line, err = run(["estimate", "--data", toy_csv(tmp_path), "--link", "probit",
                               "--out", str(tmp_path / "o")], capsys)
        assert code == 2 and line["status"] == "error"
        assert "normal, logistic, cauchy, uniform, identity" in err

    def test_missing_data(self, capsys):
        assert run(["estimate"], capsys)[0] == 2

    def test_data_error(self, tmp_path, capsys):
        path = write_rows(tmp_path / "bad.csv", [(0, 0, 0, 1.0)], header="id,period,group,y")
        code, line, _ = run(["estimate", "--data", path], capsys)
        assert code == 3 and line["kind"] == "DataError"

    def test_identification_error(self, tmp_path, capsys):
        rows = [(0, 0, 0, 1.0), (1, 1, 0, 2.0), (2, 1, 1, 3.0), (3, 1, 1, 1.0)]
        path = write_rows(tmp_path / "e.csv", rows)
        code, _, err = run(["estimate", "--data", path, "--design", "two-period", "--boot", "0",
                            "--out", str(tmp_path / "o")], capsys)
        assert code == 4
        assert "group=1" in err and "period=0" in err

    def test_numerical_error(self, tmp_path, capsys):
        # at y = 0 the index is -inf + inf without clipping
        cells = {(0, 0): [0, 1], (0, 1): [0, 0], (1, 0): [1, 1], (1, 1): [0, 1]}
        rows = [(10 * g + 2 * t + j, t, g, y) for (g, t), ys in cells.items()
                for j, y in enumerate(ys)]
        path = write_rows(tmp_path / "n.csv", rows)
        code, _, err = run(["estimate", "--data", path, "--clip", "none", "--boot", "0",
                            "--out", str(tmp_path / "o")], capsys)
        assert code == 5 and "y=0" in err


class TestConfig:
    def test_toml_and_precedence(self, tmp_path, capsys):
        cfg = tmp_path / "run.toml"
        cfg.write_text('link = "identity"\nboot = 0\ngrid = "0,1,2"\n')
        out = tmp_path / "o"
        code, _, _ = run(["estimate", "--config", str(cfg), "--data", toy_csv(tmp_path),
                          "--out", str(out)], capsys)
        assert code == 0
        s = json.loads((out / "summary.json").read_text())
        assert s["config"]["link"] == "identity"
        code, _, _ = run(["estimate", "--config", str(cfg), "--data", toy_csv(tmp_path),
                          "--link", "logistic", "--out", str(out)], capsys)
        s = json.loads((out / "summary.json").read_text())
        assert code == 0 and s["config"]["link"] == "logistic"

    def test_unknown_key(self, tmp_path, capsys):
        cfg = tmp_path / "run.toml"
        cfg.write_text('bootstrap = 5\n')
        code, _, err = run(["estimate", "--config", str(cfg)], capsys)
        assert code == 2 and "bootstrap" in err

    def test_hash_ignores_threads(self):
        a = RunConfig("estimate", dict(ESTIMATE_DEFAULTS, threads=1, out="a"))
        b = RunConfig("estimate", dict(ESTIMATE_DEFAULTS, threads=4, out="b"))
        c = RunConfig("estimate", dict(ESTIMATE_DEFAULTS, seed=1))
        assert a.hash() == b.hash() != c.hash()


class TestSimulate:
    def test_smoke(self, tmp_path, capsys):
        out = tmp_path / "t.csv"
        t0 = time.perf_counter()
        code, line, _ = run(["simulate", "--reps", "2", "--seed", "1", "--out", str(out)], capsys)
        assert time.perf_counter() - t0 < 10
        assert code == 0 and len(line["rows"]) == 1
        assert out.read_text().splitlines()[0].startswith("dgp,error,link,n")

    def test_invalid_link(self, tmp_path, capsys):
        code, _, err = run(["simulate", "--link", "tanh", "--out", str(tmp_path / "t.csv")],
                           capsys)
        assert code == 2 and "valid links" in err

    def test_several_sizes(self, tmp_path, capsys):
        out = tmp_path / "t.csv"
        code, line, _ = run(["simulate", "--n", "100,200", "--reps", "1", "--boot", "0",
                             "--dgp", "2", "--out", str(out)], capsys)
        assert code == 0 and [r["n"] for r in line["rows"]] == [100, 200]
        assert len(out.read_text().splitlines()) == 3
