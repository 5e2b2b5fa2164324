import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from erlmix.cli import PRESETS, main

FAST = ["--iterations", "300", "--thin", "3", "--seed", "9"]


def read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, list(reader)


class TestSimulate:
    def test_deterministic_and_manifest(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--preset", "example1", "--seed", "3", "--out", str(a)]) == 0
        assert main(["simulate", "--preset", "example1", "--seed", "3", "--out", str(b)]) == 0
        assert (a / "dataset.csv").read_bytes() == (b / "dataset.csv").read_bytes()
        assert (a / "truth.csv").read_bytes() == (b / "truth.csv").read_bytes()
        assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
        manifest = json.loads((a / "manifest.json").read_text())
        assert manifest["seed"] == 3
        assert manifest["config"]["priors"]["M1"] == 13

    def test_example1_preset_values(self):
        p = PRESETS["example1"]
        assert p["priors"] == {"a_alpha": 2, "b_alpha": 1, "a_zeta": 3, "b_zeta": 4,
                               "a_theta": 1, "b_theta": 1, "M1": 13, "M2": 39}
        comps = p["data"]["generator"]["components"]
        assert comps[0] == {"weight": 0.4, "mu": 1.0, "sigma2": 0.16}
        assert comps[1] == {"weight": 0.6, "mu": 2.0, "sigma2": 0.04}
        assert p["data"]["generator"]["n"] == 200

    def test_example3_truth_hazards_cross(self, tmp_path):
        out = tmp_path / "sim3"
        assert main(["simulate", "--preset", "example3", "--seed", "1",
                     "--grid-max", "1200", "--out", str(out)]) == 0
        header, rows = read_rows(out / "truth.csv")
        assert header == ["group", "t", "f", "S", "h"]
        by_group = {"C": {}, "T": {}}
        for g, t, f, S, h in rows:
            by_group[g][float(t)] = float(h)
        ts = sorted(by_group["C"])
        diff = np.array([by_group["T"][t] - by_group["C"][t] for t in ts])
        assert diff.min() < 0 < diff.max()

    def test_censoring_flag(self, tmp_path):
        out = tmp_path / "cens"
        assert main(["simulate", "--preset", "example2", "--seed", "2",
                     "--censoring", "0.335", "--out", str(out)]) == 0
        _, rows = read_rows(out / "dataset.csv")
        frac = 1.0 - np.mean([int(r[1]) for r in rows])
        assert abs(frac - 0.335) < 0.12  # n=200, binomial noise


class TestFit:
    def test_dp_outputs_and_schema(self, tmp_path):
        out = tmp_path / "fit"
        assert main(["fit", "--preset", "example1", *FAST, "--out", str(out)]) == 0
        for name in ("dataset.csv", "traces.csv", "draws.csv", "functional_density.csv",
                     "functional_survival.csv", "functional_hazard.csv",
                     "diagnostics.json", "manifest.json"):
            assert (out / name).exists(), name
        header, rows = read_rows(out / "traces.csv")
        assert header == ["chain", "iteration", "theta", "M", "alpha", "zeta",
                          "rw_step", "joint_step"]
        assert len(rows) == (300 - 75) // 3
        fheader, frows = read_rows(out / "functional_density.csv")
        assert fheader == ["t", "mean", "lower", "upper"]
        assert len(frows) == 512
        for t, m, lo, hi in frows[:20]:
            assert float(lo) <= float(m) <= float(hi)
        diag = json.loads((out / "diagnostics.json").read_text())
        assert set(diag) >= {"acceptance", "ess_theta", "mean_effective_components",
                             "wall_clock_s", "retained_draws"}

    def test_byte_identical_rerun(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["fit", "--preset", "example1", *FAST, "--out", str(out)]) == 0
        for name in ("dataset.csv", "traces.csv", "draws.csv", "functional_density.csv",
                     "functional_survival.csv", "functional_hazard.csv", "manifest.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_ddp_fit_with_contrasts(self, tmp_path):
        out = tmp_path / "ddp"
        cfg = {
            "model": "ddp",
            "data": {"generators": [
                {"n": 25, "group": "C", "components": [{"weight": 1.0, "mu": 1.0, "sigma2": 0.25}]},
                {"n": 25, "group": "T", "components": [{"weight": 1.0, "mu": 1.5, "sigma2": 0.25}]},
            ]},
            "priors": {"a_alpha": 5, "b_alpha": 1,
                       "a_theta_C": 2, "b_theta_C": 1, "a_theta_T": 2, "b_theta_T": 1,
                       "M1_C": 15, "M2_C": 60, "M1_T": 15, "M2_T": 60,
                       "mu_bar": [1.0, 1.5],
                       "Sigma0": [[10.0, 0.0], [0.0, 10.0]],
                       "Sigma": [[3.0, 0.0], [0.0, 3.0]]},
            "contrast_times": [1.0, 3.0, 6.0],
        }
        cfg_path = tmp_path / "ddp.json"
        cfg_path.write_text(json.dumps(cfg))
        assert main(["fit", "--config", str(cfg_path), *FAST, "--out", str(out)]) == 0
        header, rows = read_rows(out / "functional_survival.csv")
        assert header == ["group", "t", "mean", "lower", "upper"]
        assert {r[0] for r in rows} == {"C", "T"}
        cheader, crows = read_rows(out / "contrasts.csv")
        assert cheader == ["kind", "time", "lower", "upper", "mean"]
        assert {r[0] for r in crows} == {"survival", "hazard"}
        assert len(crows) == 6
        dheader, drows = read_rows(out / "contrast_draws.csv")
        assert dheader == ["kind", "time", "draw", "value"]
        retained = json.loads((out / "diagnostics.json").read_text())["retained_draws"]
        assert len(drows) == 2 * 3 * retained

    def test_multichain_pools_draws(self, tmp_path):
        out = tmp_path / "mc"
        assert main(["fit", "--preset", "example1", "--iterations", "200", "--thin", "4",
                     "--seed", "4", "--chains", "2", "--out", str(out)]) == 0
        _, rows = read_rows(out / "traces.csv")
        chains = {r[0] for r in rows}
        assert chains == {"0", "1"}
        diag = json.loads((out / "diagnostics.json").read_text())
        assert len(diag["ess_theta"]) == 2


class TestSummarize:
    def test_same_grid_reproduces_fit_tables(self, tmp_path):
        fit = tmp_path / "fit"
        assert main(["fit", "--preset", "example1", *FAST, "--out", str(fit)]) == 0
        out = tmp_path / "sum"
        assert main(["summarize", "--from", str(fit), "--out", str(out)]) == 0
        for kind in ("density", "survival", "hazard"):
            assert (fit / f"functional_{kind}.csv").read_bytes() == \
                (out / f"functional_{kind}.csv").read_bytes()

    def test_new_grid(self, tmp_path):
        fit = tmp_path / "fit"
        assert main(["fit", "--preset", "example1", *FAST, "--out", str(fit)]) == 0
        out = tmp_path / "sum"
        assert main(["summarize", "--from", str(fit), "--grid-max", "30",
                     "--grid-points", "64", "--out", str(out)]) == 0
        _, rows = read_rows(out / "functional_density.csv")
        assert len(rows) == 64
        assert float(rows[-1][0]) == 30.0


class TestPriorSim:
    def test_fig1_outputs(self, tmp_path):
        out = tmp_path / "prior"
        assert main(["prior-sim", "--preset", "fig1", "--seed", "6", "--out", str(out)]) == 0
        header, rows = read_rows(out / "weights.csv")
        assert header == ["setting", "alpha", "realization", "m", "omega"]
        total = {}
        for setting, alpha, real, m, om in rows:
            total[(setting, real)] = total.get((setting, real), 0.0) + float(om)
        assert all(abs(v - 1.0) < 1e-9 for v in total.values())
        assert {r[1] for r in rows} == {"1.0", "10.0", "100.0"}

    def test_missing_settings_is_config_error(self, tmp_path):
        assert main(["prior-sim", "--seed", "1", "--out", str(tmp_path / "x")]) == 2


class TestExitCodes:
    def test_missing_out_dir(self):
        assert main(["fit", "--preset", "example1"]) == 2

    def test_unknown_preset(self, tmp_path):
        assert main(["fit", "--preset", "nope", "--out", str(tmp_path / "x")]) == 2

    def test_missing_model(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"data": {"csv": "nowhere.csv"}}))
        assert main(["fit", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2

    def test_missing_csv_is_data_error(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({
            "model": "dp",
            "data": {"csv": str(tmp_path / "nowhere.csv")},
            "priors": PRESETS["example1"]["priors"],
        }))
        rc = main(["fit", "--config", str(cfg), "--out", str(tmp_path / "x")])
        assert rc == 3

    def test_bad_csv_row_is_data_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("time,status\n-1.0,1\n")
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({
            "model": "dp",
            "data": {"csv": str(bad)},
            "priors": PRESETS["example1"]["priors"],
        }))
        assert main(["fit", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 3

    def test_csv_fit_works(self, tmp_path):
        sim = tmp_path / "sim"
        assert main(["simulate", "--preset", "example1", "--seed", "5", "--out", str(sim)]) == 0
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({
            "model": "dp",
            "data": {"csv": str(sim / "dataset.csv")},
            "priors": PRESETS["example1"]["priors"],
        }))
        out = tmp_path / "fit"
        assert main(["fit", "--config", str(cfg), *FAST, "--out", str(out)]) == 0
        assert not (out / "dataset.csv").exists()  # not generated, not rewritten
