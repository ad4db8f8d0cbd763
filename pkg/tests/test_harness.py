import json

import numpy as np
import pytest

from intrepid.cli import EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from intrepid.errors import ConfigError
from intrepid.harness import (
    CSV_COLUMNS,
    DEFAULT_BETAS,
    CampaignConfig,
    chain_seed,
    check_acceptance,
    load_config,
    read_rows,
    rows_to_csv,
    run_campaign,
    summarize,
)

SMALL = """
[campaign]
target = "gauss-planes"
betas = [0.0, 0.5]
chains = 3
lengths = [200]
burn_in = 50
seed = 11
bins = 20
workers = 1

[reference]
n = 3000
seed = 5
"""


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def small_config(tmp_path, **over):
    data = {"campaign": {"target": "gauss-planes", "betas": [0.0], "chains": 1, "lengths": [100], "burn_in": 10,
                         "seed": 3, "bins": 20, "workers": 1, "output_dir": str(tmp_path)},
            "reference": {"n": 2000, "seed": 1}}
    data["campaign"].update(over)
    return CampaignConfig.from_dict(data)


class TestConfig:
    def test_defaults(self):
        cfg = CampaignConfig("case1")
        assert tuple(cfg.betas) == DEFAULT_BETAS
        assert cfg.burn_in == 10_000 and cfg.chains == 20

    @pytest.mark.parametrize("over", [{"chains": 0}, {"betas": [1.5]}, {"lengths": [0]}, {"burn_in": -1},
                                      {"start": "middle"}])
    def test_invalid(self, over):
        with pytest.raises(ConfigError):
            CampaignConfig("case1", **over)

    def test_line_numbers(self, tmp_path):
        p = write(tmp_path, SMALL.replace("chains = 3", "chains = 0"))
        with pytest.raises(ConfigError, match=r"c\.toml:5:"):
            load_config(p)

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError, match="colour"):
            load_config(write(tmp_path, SMALL.replace("seed = 11", "seed = 11\ncolour = 1")))
        with pytest.raises(ConfigError, match="extras"):
            load_config(write(tmp_path, SMALL + "\n[extras]\na = 1\n"))

    def test_unknown_target(self, tmp_path):
        with pytest.raises(ConfigError, match=r":3:"):
            load_config(write(tmp_path, SMALL.replace('"gauss-planes"', '"nope"')))

    def test_bad_toml(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write(tmp_path, "[campaign\n"))

    def test_round_trip(self, tmp_path):
        cfg = load_config(write(tmp_path, SMALL))
        assert CampaignConfig.from_dict(cfg.to_dict()) == cfg


class TestSeeds:
    def test_pure(self):
        a = np.random.default_rng(chain_seed(1, 2, 0, 3)).random(4)
        b = np.random.default_rng(chain_seed(1, 2, 0, 3)).random(4)
        c = np.random.default_rng(chain_seed(1, 2, 0, 4)).random(4)
        assert np.array_equal(a, b) and not np.array_equal(a, c)

    def test_streams_differ(self):
        a = np.random.default_rng(chain_seed(1, 0, 0, 0, stream=0)).random()
        b = np.random.default_rng(chain_seed(1, 0, 0, 0, stream=1)).random()
        assert a != b


class TestCampaign:
    def test_single_local_chain(self, tmp_path):
        res = run_campaign(small_config(tmp_path))
        assert len(res.rows) == 1
        row = res.rows[0]
        assert row["acceptance_intrepid"] != row["acceptance_intrepid"]  # nan: no Intrepid proposals
        assert row["target_evals"] == 1 + 2 * 110
        text = res.paths["csv"].read_text().splitlines()
        assert text[0] == ",".join(CSV_COLUMNS)

    def test_manifest_rerun_identical(self, tmp_path):
        cfg = load_config(write(tmp_path, SMALL))
        cfg.output_dir = str(tmp_path / "a")
        first = run_campaign(cfg)
        again_cfg = load_config(first.paths["manifest"])
        again_cfg.output_dir = str(tmp_path / "b")
        again = run_campaign(again_cfg)
        assert first.metric_columns() == again.metric_columns()
        strip = lambda p: [",".join(l.split(",")[:-1]) for l in p.read_text().splitlines()]  # noqa: E731
        assert strip(first.paths["csv"]) == strip(again.paths["csv"])

    def test_subset_rerun(self, tmp_path):
        full = run_campaign(small_config(tmp_path, chains=3, betas=[0.0, 0.5]), write=False)
        part = run_campaign(small_config(tmp_path, chains=2, betas=[0.0, 0.5]), write=False)
        by_key = {(r["beta"], r["chain_id"]): r["tvd"] for r in full.rows}
        assert all(by_key[(r["beta"], r["chain_id"])] == r["tvd"] for r in part.rows)

    def test_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("INTREPID_OUTPUT_DIR", str(tmp_path / "env"))
        res = run_campaign(small_config(tmp_path / "ignored"))
        assert res.paths["csv"].parent == tmp_path / "env"

    def test_fixed_start_and_ensemble(self, tmp_path):
        cfg = small_config(tmp_path, chains=4, start=[2.0, 0.0], lengths=[30], ensemble_steps=[0, 20], lags=[1])
        res = run_campaign(cfg, write=False)
        ens = res.ensemble_rows
        assert [e["step"] for e in ens] == [0, 20]
        assert ens[0]["ensemble_tvd"] > 0.5
        assert len(res.lag_summaries) == 1

    def test_reference_reuse(self, tmp_path):
        cfg = small_config(tmp_path)
        cfg.reference_path = str(tmp_path / "ref")
        run_campaign(cfg, write=False)
        assert (tmp_path / "ref.npy").exists()
        run_campaign(cfg, write=False)
        cfg2 = small_config(tmp_path, target="case3")
        cfg2.reference_path = str(tmp_path / "ref")
        with pytest.raises(ConfigError):
            run_campaign(cfg2, write=False)


class TestSummarize:
    def row(self, v, beta=0.1):
        r = {c: 0.0 for c in CSV_COLUMNS}
        r.update(target="t", beta=beta, chain_id=0, length=10, target_evals=0, tvd=v)
        return r

    def test_single(self):
        s = [e for e in summarize([self.row(0.3)]) if e["metric"] == "tvd"][0]
        assert all(s[q] == 0.3 for q in ("min", "q05", "q25", "median", "q75", "q95", "max"))

    def test_two(self):
        s = [e for e in summarize([self.row(0.0), self.row(1.0)]) if e["metric"] == "tvd"][0]
        assert s["median"] == 0.5

    def test_groups(self):
        s = summarize([self.row(0.0), self.row(1.0, beta=0.5)], ["tvd"])
        assert [(e["target"], e["beta"], e["length"]) for e in s] == [("t", 0.1, 10), ("t", 0.5, 10)]

    def test_empty(self):
        with pytest.raises(ValueError):
            summarize([])

    def test_csv_round_trip(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text(rows_to_csv([self.row(0.25)]))
        back = read_rows(p)
        assert back[0]["tvd"] == 0.25 and back[0]["chain_id"] == 0

    def test_acceptance_thresholds(self):
        cfg = CampaignConfig("case1", acceptance={"max_median_tvd": 0.2})
        assert check_acceptance(cfg, [self.row(0.1)]) == []
        assert len(check_acceptance(cfg, [self.row(0.3)])) == 1
        with pytest.raises(ConfigError):
            check_acceptance(CampaignConfig("case1", acceptance={"bogus": 1}), [self.row(0.1)])


class TestCli:
    def test_validate(self, tmp_path, capsys):
        assert main(["validate", str(write(tmp_path, SMALL))]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["campaign"]["chains"] == 3

    def test_config_error(self, tmp_path):
        assert main(["validate", str(write(tmp_path, SMALL.replace("chains = 3", "chains = -2")))]) == EXIT_CONFIG
        assert main(["run", str(tmp_path / "missing.toml")]) == EXIT_CONFIG

    def test_run_and_summarize(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("INTREPID_OUTPUT_DIR", str(tmp_path / "out"))
        assert main(["run", str(write(tmp_path, SMALL))]) == EXIT_OK
        csv_path = tmp_path / "out" / "gauss-planes.csv"
        assert len(read_rows(csv_path)) == 6
        capsys.readouterr()
        assert main(["summarize", str(csv_path)]) == EXIT_OK
        assert capsys.readouterr().out.startswith("target,beta,length,metric,n,min")

    def test_acceptance_exit(self, tmp_path, monkeypatch):
        monkeypatch.setenv("INTREPID_OUTPUT_DIR", str(tmp_path / "out"))
        text = SMALL + "\n[acceptance]\nmax_median_tvd = 0.0\n"
        assert main(["run", str(write(tmp_path, text))]) == EXIT_ACCEPTANCE

    def test_runtime_exit(self, tmp_path):
        assert main(["summarize", str(tmp_path / "nothing.csv")]) == EXIT_RUNTIME

    def test_reference(self, tmp_path, capsys):
        assert main(["reference", "case2", "--n", "500", "--seed", "3", "--out", str(tmp_path / "r")]) == EXIT_OK
        assert np.load(tmp_path / "r.npy").shape == (500, 2)
