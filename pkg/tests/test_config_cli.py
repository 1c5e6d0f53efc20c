import json
import sys

import numpy as np
import pytest

from pipscreen import cli
from pipscreen.config import EFFECTIVE_CONFIG_NAME, AnalysisConfig
from pipscreen.errors import ConfigError
from pipscreen.scenarios import lhd

FAST = ["--n-mwg", "100", "--n-mh", "200"]


class TestConfig:
    def test_defaults(self):
        cfg = AnalysisConfig.from_dict()
        assert cfg.seed == 2024 and cfg.threshold == 0.5 and not cfg.calibrate
        assert cfg.kernel.a == 1.9 and cfg.spike.alpha == 100.0
        assert cfg.model_prior.is_constant
        s = cfg.sampler()
        assert (s.n_mwg, s.n_mh, s.mh_scale) == (5000, 10000, None)

    def test_toml_roundtrip(self, tmp_path):
        cfg = AnalysisConfig.from_dict({"seed": 3, "spike": {"alpha": 50.0},
                                        "priors": {"theta_bounds": [[0.0, 2.0]]}})
        path = cfg.write(tmp_path)
        assert path.name == EFFECTIVE_CONFIG_NAME
        back = AnalysisConfig.load(path)
        assert back.raw == cfg.raw
        assert back.prior_spec(calibrate=True).theta_bounds == ((0.0, 2.0),)
        assert back.prior_spec(calibrate=False).theta_bounds == ()

    @pytest.mark.parametrize("doc", [
        {"sede": 1},
        {"sampler": {"n_mh": 0}},
        {"threshold": 1.0},
        {"spike": {"alpha": 0.1}},
        {"priors": {"sigma2_shape": -1.0}},
        {"rdvs": {"T": 1}},
        {"rdvs": {"percentiles": [2.0]}},
        {"screening": {"max_p": 25}},
        {"screening": {"pairs": [[1, 1]]}},
        {"sampler": {"mh_scale": "big"}},
        {"schema": "pipscreen.config/0"},
        {"kernel": 3},
    ])
    def test_rejected(self, doc):
        with pytest.raises(ConfigError):
            AnalysisConfig.from_dict(doc)

    def test_bad_toml(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text("seed = = 1\n")
        with pytest.raises(ConfigError):
            AnalysisConfig.load(path)

    def test_updated(self):
        cfg = AnalysisConfig.from_dict().updated(sampler={"n_mh": 50})
        assert cfg.sampler().n_mh == 50 and cfg.sampler().n_mwg == 5000


def run(argv, capsys=None):
    code = cli.main(argv)
    out = capsys.readouterr() if capsys else None
    return code, out


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert cli.main(["simulate", "--scenario", "s41", "--reps", "1", "--seed", "7", "--out", str(d)]) == 0
    return d / "s41_rep000.csv"


class TestSimulate:
    def test_two_reps_byte_identical(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            code, _ = run(["simulate", "--scenario", "s41", "--reps", "2", "--seed", "7",
                           "--out", str(d)], capsys)
            assert code == 0
        names = sorted(p.name for p in a.iterdir())
        assert names == ["s41_rep000.csv", "s41_rep000.json", "s41_rep001.csv", "s41_rep001.json"]
        for n in names:
            assert (a / n).read_bytes() == (b / n).read_bytes()

    def test_zero_reps(self, tmp_path, capsys):
        code, _ = run(["simulate", "--scenario", "s41", "--reps", "0", "--out", str(tmp_path / "z")], capsys)
        assert code == 2
        assert not (tmp_path / "z").exists()

    def test_unknown_scenario(self, tmp_path, capsys):
        code, out = run(["simulate", "--scenario", "s77", "--out", str(tmp_path)], capsys)
        assert code == 2 and "s77" in out.err

    def test_env_output_dir(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
        code, _ = run(["simulate", "--scenario", "s42_1"], capsys)
        assert code == 0 and (tmp_path / "env" / "s42_1_rep000.csv").exists()


class TestScreen:
    def test_pips_outputs(self, dataset, tmp_path, capsys):
        out = tmp_path / "pips"
        code, res = run(["screen", "pips", "--data", str(dataset), "--out", str(out), *FAST], capsys)
        assert code == 0
        for name in ("screening.json", "screening.csv", "pips_plot.csv", "chain.csv",
                     "metadata.json", EFFECTIVE_CONFIG_NAME):
            assert (out / name).exists(), name
        doc = json.loads((out / "screening.json").read_text())
        assert doc["p"] == 8 and len(doc["model_posteriors"]) == 256
        meta = json.loads((out / "metadata.json").read_text())
        assert meta["output_normalization"]["scale"] > 0
        assert len(meta["input_scaling"]["lo"]) == 8
        eff = AnalysisConfig.load(out / EFFECTIVE_CONFIG_NAME)
        assert eff.sampler().n_mh == 200
        assert "PIP" in res.out

    def test_theta_file_keeps_theta_out_of_chain(self, dataset, tmp_path, capsys):
        tf = tmp_path / "theta.json"
        tf.write_text(json.dumps({"theta": [0.3, 0.4, 0.5, 0.6]}))
        out = tmp_path / "fixed"
        code, _ = run(["screen", "pips", "--data", str(dataset), "--calibrate", "off",
                       "--theta-file", str(tf), "--out", str(out), *FAST], capsys)
        assert code == 0
        header = (out / "chain.csv").read_text().splitlines()[0]
        assert "theta" not in header

    def test_calibrated_chain_has_theta(self, dataset, tmp_path, capsys):
        out = tmp_path / "cal"
        code, _ = run(["screen", "pips", "--data", str(dataset), "--calibrate", "on",
                       "--out", str(out), *FAST], capsys)
        assert code == 0
        assert "theta_4" in (out / "chain.csv").read_text().splitlines()[0]

    def test_reproducible(self, dataset, tmp_path, capsys):
        for d in ("r1", "r2"):
            run(["screen", "pips", "--data", str(dataset), "--seed", "5", "--out",
                 str(tmp_path / d), *FAST], capsys)
        assert (tmp_path / "r1" / "chain.csv").read_bytes() == (tmp_path / "r2" / "chain.csv").read_bytes()

    def test_too_many_inputs(self, tmp_path, capsys):
        X = np.random.default_rng(0).random((30, 21))
        path = tmp_path / "wide.csv"
        np.savetxt(path, np.column_stack([X, X[:, 0]]), delimiter=",", comments="",
                   header=",".join([f"x_{i}" for i in range(1, 22)] + ["y"]))
        code, out = run(["screen", "pips", "--data", str(path), "--model", "none",
                         "--out", str(tmp_path / "o")], capsys)
        assert code == 2 and "capped" in out.err

    def test_missing_file(self, tmp_path, capsys):
        code, _ = run(["screen", "pips", "--data", str(tmp_path / "nope.csv"), "--model", "none",
                       "--out", str(tmp_path / "o")], capsys)
        assert code == 4

    def test_bad_config(self, dataset, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text("[sampler]\nn_mh = -5\n")
        code, _ = run(["screen", "pips", "--data", str(dataset), "--config", str(cfg),
                       "--out", str(tmp_path / "o")], capsys)
        assert code == 2

    def test_rdvs_zero_percentile(self, dataset, tmp_path, capsys):
        out = tmp_path / "rdvs"
        code, _ = run(["screen", "rdvs", "--data", str(dataset), "--T", "2", "--percentile", "0",
                       "--out", str(out), "--n-mwg", "40", "--n-mh", "60"], capsys)
        assert code == 0
        doc = json.loads((out / "rdvs.json").read_text())
        assert not any(doc["percentiles"][0]["active"].values())
        assert len((out / "rdvs.csv").read_text().splitlines()) == 3

    def test_emulator_path(self, tmp_path, capsys):
        rng = np.random.default_rng(1)
        X = rng.random((30, 2))
        y = np.sin(3 * X[:, 0]) + 0.05 * rng.standard_normal(30)
        data = tmp_path / "field.csv"
        np.savetxt(data, np.column_stack([X, y]), delimiter=",", comments="", header="x_1,x_2,y")
        D = lhd(12, 2, 4)
        design = tmp_path / "design.csv"
        np.savetxt(design, np.column_stack([D, D[:, 0] * 0.5]), delimiter=",", comments="",
                   header="x_1,x_2,f")
        out = tmp_path / "em"
        code, _ = run(["screen", "pips", "--data", str(data), "--emulator-design", str(design),
                       "--out", str(out), *FAST], capsys)
        assert code == 0 and (out / "emulator.json").exists()


class TestBenchReport:
    def test_single_replication_indicators(self, tmp_path, capsys):
        out = tmp_path / "bench"
        code, res = run(["bench", "--suite", "table1", "--reps", "1", "--no-rdvs",
                         "--out", str(out), *FAST], capsys)
        assert code == 0
        rows = (out / "proportions.csv").read_text().splitlines()[1:]
        vals = {float(v) for r in rows for v in r.split(",")[4:]}
        assert vals <= {0.0, 1.0}
        code, rep = run(["report", str(out)], capsys)
        assert code == 0 and "table1" in rep.out

    def test_zero_reps(self, tmp_path, capsys):
        code, _ = run(["bench", "--suite", "table1", "--reps", "0", "--out", str(tmp_path)], capsys)
        assert code == 2

    def test_report_empty_dir(self, tmp_path, capsys):
        code, _ = run(["report", str(tmp_path)], capsys)
        assert code == 4

    def test_scenarios42_layout(self):
        from pipscreen.bench import build_tasks
        from pipscreen.mcmc import SamplerConfig
        from pipscreen.priors import PriorSpec
        tasks = build_tasks("scenarios42", 2, 1, SamplerConfig(seed=0), PriorSpec())
        groups = {(t.scenario, t.setting) for t in tasks}
        assert len(groups) == 6 and len(tasks) == 12


def test_module_entry_point(tmp_path):
    import subprocess
    res = subprocess.run([sys.executable, "-m", "pipscreen.cli", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "pipscreen" in res.stdout
