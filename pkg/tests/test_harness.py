import json
import os

import numpy as np
import pytest

from sighedge import cli
from sighedge import fourier
from sighedge import harness
from sighedge import models


def euro_spec(T=0.25, K=1.0):
    return harness.PayoffSpec("european", T, strike=K)


BASE_CFG = {
    "model.name": "heston", "payoff.kind": "european",
    "payoff.strike": 1.0, "payoff.maturity": 1.0 / 12,
    "grid.steps": 8, "paths.train": 200, "paths.oos": 300,
    "seeds.train": 11, "seeds.oos": 12,
    "methods": ["naive_bs"],
}


class TestPayoffSpec:
    def test_unknown_kind(self):
        with pytest.raises(harness.ConfigError, match="payoff.kind"):
            harness.PayoffSpec("digital", 1.0)

    def test_strike_positive(self):
        with pytest.raises(harness.ConfigError, match="payoff.strike"):
            harness.PayoffSpec("european", 1.0, strike=-2.0)
        with pytest.raises(harness.ConfigError, match="payoff.strike"):
            harness.PayoffSpec("geometric_asian", 1.0)

    def test_polynomial_needs_coeffs(self):
        with pytest.raises(harness.ConfigError, match="payoff.coeffs"):
            harness.PayoffSpec("polynomial", 1.0)

    def test_maturity_positive(self):
        with pytest.raises(harness.ConfigError, match="payoff.maturity"):
            harness.PayoffSpec("european", 0.0, strike=1.0)


class TestPayoffEval:
    def test_european_value(self):
        times = np.array([0.0, 0.5, 1.0])
        S = np.array([1.0, 1.1, 1.2])
        np.testing.assert_allclose(
            harness.payoff_eval(harness.PayoffSpec("european", 1.0,
                                                   strike=1.0), times, S),
            0.2)

    def test_lookback_on_monotone_path(self):
        times = np.linspace(0.0, 1.0, 9)
        S = np.linspace(0.8, 1.5, 9)
        spec = harness.PayoffSpec("lookback_floating", 1.0)
        np.testing.assert_allclose(harness.payoff_eval(spec, times, S),
                                   1.5 - 0.8)

    def test_asian_on_constant_path(self):
        times = np.linspace(0.0, 1.0, 5)
        spec = harness.PayoffSpec("geometric_asian", 1.0, strike=0.9)
        np.testing.assert_allclose(
            harness.payoff_eval(spec, times, np.full(5, 1.1)), 0.2,
            rtol=1e-12)

    def test_asian_trapezoid_exact_for_exponential_path(self):
        # log S linear in t makes the trapezoidal log-average exact
        times = np.linspace(0.0, 2.0, 33)
        S = np.exp(0.3 * times)
        spec = harness.PayoffSpec("geometric_asian", 2.0, strike=0.5)
        want = np.exp(0.3 * 1.0) - 0.5
        np.testing.assert_allclose(harness.payoff_eval(spec, times, S),
                                   want, rtol=1e-12)

    def test_polynomial_and_batch_shape(self):
        times = np.array([0.0, 1.0])
        S = np.array([[1.0, 2.0], [1.0, 0.5]])
        spec = harness.PayoffSpec("polynomial", 1.0,
                                  coeffs=[1.0, 0.0, 1.0])
        np.testing.assert_allclose(harness.payoff_eval(spec, times, S),
                                   [5.0, 1.25])

    def test_grid_must_end_at_maturity(self):
        spec = euro_spec(T=1.0)
        with pytest.raises(ValueError, match="maturity"):
            harness.payoff_eval(spec, np.array([0.0, 0.5]),
                                np.array([1.0, 1.0]))


class TestPnl:
    def test_zero_strategy(self):
        S = np.array([1.0, 1.3, 0.9])
        np.testing.assert_allclose(
            harness.pnl(0.5, np.zeros(2), S, 0.2), 0.3)

    def test_two_step_hand_value(self):
        S = np.array([1.0, 1.2, 0.9])
        alphas = np.array([0.5, 0.2])
        want = 0.1 + 0.5 * 0.2 + 0.2 * (-0.3) - 0.05
        np.testing.assert_allclose(harness.pnl(0.1, alphas, S, 0.05), want,
                                   rtol=1e-14)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            harness.pnl(0.0, np.zeros(3), np.array([1.0, 1.0, 1.0]), 0.0)

    def test_batched(self):
        S = np.tile(np.array([1.0, 1.1]), (4, 1))
        out = harness.pnl(0.0, np.ones((4, 1)), S, np.zeros(4))
        np.testing.assert_allclose(out, 0.1)


class TestLookbackClosedForm:
    def test_delta_is_price_derivative(self):
        h = 1e-6
        for m in (0.8, 0.95, 1.0):
            fd = (harness.lookback_floating_price(1.0 + h, m, 0.3, 0.5)
                  - harness.lookback_floating_price(1.0 - h, m, 0.3, 0.5)) \
                / (2 * h)
            np.testing.assert_allclose(
                harness.lookback_floating_delta(1.0, m, 0.3, 0.5), fd,
                rtol=1e-7)

    def test_price_bounds_and_expiry(self):
        assert harness.lookback_floating_price(1.0, 0.9, 0.25, 0.5) > 0.1
        np.testing.assert_allclose(
            harness.lookback_floating_price(1.0, 0.9, 0.25, 0.0), 0.1)
        np.testing.assert_allclose(
            harness.lookback_floating_delta(1.0, 0.9, 0.25, 0.0), 1.0)

    def test_price_against_monte_carlo(self):
        # discrete monitoring biases the sampled minimum high, so the
        # continuous closed form should sit just above the MC value
        rng = np.random.default_rng(0)
        sigma, tau, n, J = 0.25, 0.25, 100000, 512
        dt = tau / J
        z = rng.standard_normal((n, J))
        logS = np.cumsum(-0.5 * sigma ** 2 * dt
                         + sigma * np.sqrt(dt) * z, axis=1)
        S = np.exp(np.concatenate([np.zeros((n, 1)), logS], axis=1))
        payoff = S[:, -1] - S.min(axis=1)
        mc = payoff.mean()
        se = payoff.std() / np.sqrt(n)
        cf = harness.lookback_floating_price(1.0, 1.0, sigma, tau)
        assert mc - 3 * se < cf < mc + 6e-3


class TestNaiveStrategies:
    def test_deep_itm_european_delta(self):
        spec = euro_spec(T=0.25)
        times = np.linspace(0.0, 0.25, 5)
        S = np.full((1, 5), 2.0)
        alphas = harness.naive_bs_strategies(spec, 0.25, times, S)
        assert alphas.min() > 0.999

    def test_asian_running_average_state(self):
        spec = harness.PayoffSpec("geometric_asian", 0.5, strike=1.0)
        rng = np.random.default_rng(1)
        times = np.linspace(0.0, 0.5, 9)
        S = np.exp(0.02 * rng.standard_normal((3, 9)).cumsum(axis=1))
        alphas = harness.naive_bs_strategies(spec, 0.2, times, S)
        j = 5
        running = np.trapezoid(np.log(S[:, :j + 1]), times[:j + 1], axis=1)
        want = fourier.bs_asian_delta(S[:, j], 1.0, 0.2, times[j], 0.5,
                                      running)
        np.testing.assert_allclose(alphas[:, j], want, rtol=1e-12)

    def test_lookback_uses_running_min(self):
        spec = harness.PayoffSpec("lookback_floating", 0.5)
        times = np.linspace(0.0, 0.5, 4)
        S = np.array([[1.0, 0.8, 1.1, 1.2]])
        alphas = harness.naive_bs_strategies(spec, 0.25, times, S)
        want = harness.lookback_floating_delta(1.1, 0.8, 0.25,
                                               0.5 - times[2])
        np.testing.assert_allclose(alphas[0, 2], want, rtol=1e-12)

    def test_polynomial_hedge_is_exact_under_gbm(self):
        model = models.preset("gbm")
        batch = models.simulate(model, 2000, 63, 0.5, seed=3,
                                purpose="naive-poly")
        spec = harness.PayoffSpec("polynomial", 0.5,
                                  coeffs=[0.0, 0.0, 1.0, -0.5])
        xi = harness.payoff_eval(spec, batch.times, batch.S)
        alphas = harness.naive_bs_strategies(spec, model.sigma, batch.times,
                                             batch.S)
        x0 = harness.naive_bs_wealth(spec, model.sigma, model.s0)
        out = harness.pnl(x0, alphas, batch.S, xi)
        assert np.mean(out ** 2) < 0.005 * np.var(xi)
        assert abs(out.mean()) < 3 * out.std() / np.sqrt(len(out))

    def test_wealth_matches_bs_price(self):
        spec = euro_spec(T=0.5)
        np.testing.assert_allclose(
            harness.naive_bs_wealth(spec, 0.25, 1.0),
            fourier.bs_price(1.0, 1.0, 0.25, 0.5), rtol=1e-14)


class TestKde:
    def test_needs_two_samples(self):
        with pytest.raises(ValueError, match="2 samples"):
            harness.kde_density(np.array([1.0]), np.linspace(-1, 1, 5))

    def test_standard_normal_peak_and_mass(self):
        samples = np.random.default_rng(0).standard_normal(20000)
        grid = harness.density_grid(samples, 801)
        dens = harness.kde_density(samples, grid)
        peak = dens[np.argmin(np.abs(grid))]
        assert abs(peak - 0.3989) < 0.05 * 0.3989
        np.testing.assert_allclose(np.trapezoid(dens, grid), 1.0,
                                   atol=1e-3)

    def test_symmetric_samples_symmetric_curve(self):
        rng = np.random.default_rng(1)
        half = rng.standard_normal(3000)
        samples = np.concatenate([half, -half])
        grid = np.linspace(-4, 4, 401)
        dens = harness.kde_density(samples, grid)
        np.testing.assert_allclose(dens, dens[::-1], rtol=1e-10)


class TestConfig:
    def test_parse_types(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("a.int = 3\n"
                        "a.float = 2.5  # trailing comment\n"
                        "a.bool = true\n\n"
                        "# full comment line\n"
                        "a.list = 1, 2.5, x\n"
                        "a.str = heston\n")
        cfg = harness.load_config(path)
        assert cfg["a.int"] == 3 and cfg["a.float"] == 2.5
        assert cfg["a.bool"] is True
        assert cfg["a.list"] == [1, 2.5, "x"]
        assert cfg["a.str"] == "heston"

    def test_parse_error_names_line(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("model.name heston\n")
        with pytest.raises(harness.ConfigError, match=":1"):
            harness.load_config(path)

    def test_missing_key_names_field(self):
        cfg = dict(BASE_CFG)
        del cfg["payoff.strike"]
        with pytest.raises(harness.ConfigError, match="payoff.strike"):
            harness.validate_config(cfg)

    def test_seeds_must_differ(self):
        cfg = dict(BASE_CFG, **{"seeds.oos": BASE_CFG["seeds.train"]})
        with pytest.raises(harness.ConfigError, match="seeds.oos"):
            harness.validate_config(cfg)

    def test_unknown_method(self):
        cfg = dict(BASE_CFG, methods=["naive_bs", "delta_gamma"])
        with pytest.raises(harness.ConfigError, match="delta_gamma"):
            harness.validate_config(cfg)

    def test_fourier_needs_transformable_payoff(self):
        cfg = dict(BASE_CFG, **{"payoff.kind": "lookback_floating",
                                "methods": ["fourier"],
                                "fourier.engine": "heston_cf",
                                "fourier.nodes": 16, "fourier.scale": 0.5,
                                "fourier.steps": 16})
        del cfg["payoff.strike"]
        with pytest.raises(harness.ConfigError, match="Fourier"):
            harness.validate_config(cfg)

    def test_heston_cf_needs_heston(self):
        cfg = dict(BASE_CFG, **{"model.name": "gbm",
                                "methods": ["fourier"],
                                "fourier.engine": "heston_cf",
                                "fourier.nodes": 16, "fourier.scale": 0.5,
                                "fourier.steps": 16})
        with pytest.raises(harness.ConfigError, match="heston_cf"):
            harness.validate_config(cfg)

    def test_snn_needs_order(self):
        cfg = dict(BASE_CFG, methods=["snn"],
                   **{"train.epochs": 1, "train.batch": 64})
        with pytest.raises(harness.ConfigError, match="deep.order"):
            harness.validate_config(cfg)

    def test_type_check(self):
        cfg = dict(BASE_CFG, **{"grid.steps": "many"})
        with pytest.raises(harness.ConfigError, match="grid.steps"):
            harness.validate_config(cfg)


class TestRunExperiment:
    def small_cfg(self, **over):
        cfg = dict(BASE_CFG, methods=["naive_bs", "linear_bcs"],
                   **{"linear.order": 2})
        cfg.update(over)
        return cfg

    def test_dry_run_writes_nothing(self, tmp_path):
        out = tmp_path / "dry"
        res = harness.run_experiment(self.small_cfg(), str(out),
                                     dry_run=True)
        assert res["status"] == "ok"
        assert not out.exists()

    def test_outputs_and_recompute(self, tmp_path):
        out = str(tmp_path / "run")
        summary = harness.run_experiment(self.small_cfg(), out)
        assert "failures" not in summary
        for name in ("pnl.csv", "summary.json", "density.csv",
                     "strategy.csv", "manifest.json"):
            assert os.path.exists(os.path.join(out, name))
        fresh, match = harness.recompute_summary(out)
        assert match
        methods, pnls = harness.read_pnl_csv(os.path.join(out, "pnl.csv"))
        assert set(methods) == {"naive_bs", "linear_bcs"}
        assert len(pnls["naive_bs"]) == BASE_CFG["paths.oos"]
        with open(os.path.join(out, "manifest.json")) as fh:
            manifest = json.load(fh)
        assert manifest["seeds"]["disjoint"]
        assert manifest["config_hash"] == summary["config_hash"]
        assert manifest["versions"]["numpy"] == np.__version__

    def test_deterministic_rerun_identical(self, tmp_path):
        cfg = self.small_cfg(methods=["naive_bs", "vnn"],
                             **{"train.epochs": 2, "train.batch": 64})
        out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
        harness.run_experiment(cfg, out1, deterministic=True)
        harness.run_experiment(cfg, out2, deterministic=True)
        with open(os.path.join(out1, "summary.json")) as fh:
            s1 = fh.read()
        with open(os.path.join(out2, "summary.json")) as fh:
            s2 = fh.read()
        assert s1 == s2

    def test_method_filter(self, tmp_path):
        out = str(tmp_path / "f")
        summary = harness.run_experiment(self.small_cfg(), out,
                                         methods=("naive_bs",))
        assert list(summary["methods"]) == ["naive_bs"]
        with pytest.raises(harness.ConfigError, match="methods"):
            harness.run_experiment(self.small_cfg(), out, methods=("vnn",))

    def test_failures_are_recorded(self, tmp_path):
        # a far-too-coarse damping scale makes the Riccati solve blow up;
        # the other method still completes
        cfg = self.small_cfg(methods=["naive_bs", "fourier"],
                             **{"fourier.engine": "signature",
                                "fourier.order": 4, "fourier.nodes": 16,
                                "fourier.scale": 50.0,
                                "fourier.steps": 32})
        out = str(tmp_path / "fail")
        summary = harness.run_experiment(cfg, out)
        assert "fourier" in summary.get("failures", {})
        assert "naive_bs" in summary["methods"]

    def test_strategy_csv_layout(self, tmp_path):
        out = str(tmp_path / "s")
        harness.run_experiment(self.small_cfg(), out, strategy_samples=2)
        with open(os.path.join(out, "strategy.csv")) as fh:
            header = fh.readline().strip().split(",")
            rows = [l.strip().split(",") for l in fh if l.strip()]
        assert header[:2] == ["t", "sample"]
        assert set(header[2:]) == {"naive_bs", "linear_bcs"}
        assert len(rows) == 2 * BASE_CFG["grid.steps"]


class TestCli:
    def write_cfg(self, tmp_path, cfg):
        lines = []
        for k, v in cfg.items():
            if isinstance(v, list):
                v = ", ".join(str(x) for x in v)
            lines.append(f"{k} = {v}")
        path = tmp_path / "exp.cfg"
        path.write_text("\n".join(lines) + "\n")
        return str(path)

    def test_evaluate_and_report_roundtrip(self, tmp_path, capsys):
        cfg = dict(BASE_CFG, methods=["naive_bs", "linear_bcs"],
                   **{"linear.order": 2})
        path = self.write_cfg(tmp_path, cfg)
        out = str(tmp_path / "out")
        assert cli.main(["evaluate", "--config", path,
                         "--out-dir", out]) == 0
        assert "naive_bs" in capsys.readouterr().out
        assert cli.main(["report", "--out-dir", out]) == 0
        assert "matches" in capsys.readouterr().out

    def test_report_detects_tampering(self, tmp_path, capsys):
        path = self.write_cfg(tmp_path, BASE_CFG)
        out = str(tmp_path / "out")
        assert cli.main(["evaluate", "--config", path,
                         "--out-dir", out]) == 0
        pnl_path = os.path.join(out, "pnl.csv")
        with open(pnl_path) as fh:
            lines = fh.readlines()
        parts = lines[1].split(",")
        parts[1] = "0.5\n"
        lines[1] = ",".join(parts)
        with open(pnl_path, "w") as fh:
            fh.writelines(lines)
        assert cli.main(["report", "--out-dir", out]) == 2

    def test_dry_run_and_config_error(self, tmp_path, capsys):
        path = self.write_cfg(tmp_path, BASE_CFG)
        assert cli.main(["evaluate", "--config", path, "--out-dir",
                         str(tmp_path / "x"), "--dry-run"]) == 0
        bad = dict(BASE_CFG)
        del bad["grid.steps"]
        path2 = self.write_cfg(tmp_path, bad)
        assert cli.main(["evaluate", "--config", path2, "--out-dir",
                         str(tmp_path / "y")]) == 2
        assert "grid.steps" in capsys.readouterr().err

    def test_simulate_writes_paths(self, tmp_path, capsys):
        path = self.write_cfg(tmp_path, BASE_CFG)
        out = str(tmp_path / "sim")
        assert cli.main(["simulate", "--config", path,
                         "--out-dir", out]) == 0
        data = np.load(os.path.join(out, "paths.npz"))
        assert data["S"].shape == (BASE_CFG["paths.train"],
                                   BASE_CFG["grid.steps"] + 1)

    def test_seed_override_changes_draw(self, tmp_path):
        path = self.write_cfg(tmp_path, BASE_CFG)
        out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
        assert cli.main(["simulate", "--config", path, "--out-dir", out1,
                         "--seed", "100"]) == 0
        assert cli.main(["simulate", "--config", path, "--out-dir", out2,
                         "--seed", "101"]) == 0
        a = np.load(os.path.join(out1, "paths.npz"))["S"]
        b = np.load(os.path.join(out2, "paths.npz"))["S"]
        assert not np.allclose(a, b)

    def test_hedge_family_filter(self, tmp_path, capsys):
        cfg = dict(BASE_CFG, methods=["naive_bs", "vnn"],
                   **{"train.epochs": 2, "train.batch": 64})
        path = self.write_cfg(tmp_path, cfg)
        out = str(tmp_path / "deep")
        assert cli.main(["hedge", "deep", "--config", path,
                         "--out-dir", out]) == 0
        with open(os.path.join(out, "summary.json")) as fh:
            summary = json.load(fh)
        assert list(summary["methods"]) == ["vnn"]
        assert cli.main(["hedge", "fourier", "--config", path,
                         "--out-dir", out]) == 2

    def test_calibrate_sigvol(self, tmp_path, capsys):
        cfg = dict(BASE_CFG, **{"model.name": "gbm",
                                "calibrate.order": 1,
                                "calibrate.target_order": 1,
                                "calibrate.iters": 50,
                                "calibrate.starts": 2,
                                "paths.train": 50, "grid.steps": 6})
        path = self.write_cfg(tmp_path, cfg)
        out = str(tmp_path / "cal")
        assert cli.main(["calibrate", "sigvol", "--config", path,
                         "--out-dir", out]) == 0
        with open(os.path.join(out, "sigmahat.json")) as fh:
            rec = json.load(fh)
        np.testing.assert_allclose(rec["coeffs"][0], 0.25, atol=1e-3)
