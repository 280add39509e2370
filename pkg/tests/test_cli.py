"""Configuration parsing and the command-line front end."""

import json
import subprocess
import sys

import pytest

from conftest import CONFIG_DIR
from tweedie_lab.cli import EXIT_ERROR, EXIT_FAIL, EXIT_OK, main
from tweedie_lab.config import load_config, parse_config
from tweedie_lab.errors import ConfigError

BASE = {
    "model": {"name": "GaussianKnownVariance", "params": {"variance": 1.0}},
    "prior": {"type": "discrete", "atoms": [[-1.0], [1.0]]},
    "grid": {"min": -1.0, "max": 1.0, "count": 5},
}


def _write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return str(path)


class TestConfig:
    def test_minimal(self):
        cfg = parse_config(BASE, "mem")
        assert len(cfg.grid) == 5 and cfg.policy.scheme == "richardson"
        assert cfg.eb["n"] == 100000 and cfg.eb["seed"] == 1

    @pytest.mark.parametrize("name", sorted(p.stem for p in CONFIG_DIR.glob("*.json")))
    def test_shipped_configs_load(self, name):
        cfg = load_config(CONFIG_DIR / f"{name}.json")
        assert cfg.name == name
        cfg.scenario()

    def test_json_error_has_line_and_column(self, tmp_path):
        path = _write(tmp_path, '{\n  "model": {\n    "name": ,\n  }\n}')
        with pytest.raises(ConfigError, match=r"cfg\.json:3:13"):
            load_config(path)

    def test_missing_file_names_path(self, tmp_path):
        with pytest.raises(ConfigError, match="nowhere.json"):
            load_config(tmp_path / "nowhere.json")

    @pytest.mark.parametrize(
        "patch,field",
        [
            ({"model": {"name": "Cauchy"}}, "model.name"),
            ({"grid": {"min": 1.0, "max": 0.0, "count": 3}}, "grid.max"),
            ({"grid": {"min": 0.0, "max": 1.0}}, "grid.step"),
            ({"prior": {"type": "discrete", "atoms": [[1.0, 2.0]]}}, "prior.atoms[0]"),
            ({"prior": {"type": "histogram"}}, "prior.type"),
            ({"fd_policy": {"scheme": "central-9"}}, "fd_policy"),
            ({"u_map": {"type": "spline"}}, "u_map"),
            ({"extra": 1}, "extra"),
            ({"tolerances": {"Variance": -1}}, "tolerances"),
            ({"identities": ["Bogus"]}, "identities[0]"),
        ],
    )
    def test_field_addressed_errors(self, patch, field):
        with pytest.raises(ConfigError, match=rf"field '{__import__('re').escape(field)}'"):
            parse_config({**BASE, **patch}, "mem")

    def test_classical_atoms(self):
        doc = {
            **BASE,
            "model": {"name": "ExponentialRate"},
            "prior": {"type": "discrete", "atoms": [{"rate": 1.0}, {"rate": 3.0}]},
            "grid": {"points": [0.5, 1.0]},
        }
        cfg = parse_config(doc, "mem")
        assert cfg.scenario().prior_measure.atoms[:, 0].tolist() == [1.0, 3.0]

    def test_grid_outside_support(self):
        doc = {**BASE, "model": {"name": "ExponentialRate"}, "prior": {"type": "discrete", "atoms": [[1.0]]}}
        with pytest.raises(ConfigError, match="field 'grid'"):
            parse_config(doc, "mem")

    def test_printed_jacobian_mode_only_for_wishart(self):
        with pytest.raises(ConfigError):
            parse_config(BASE, "mem").scenario(paper_erratum=True)


class TestVerifyCommand:
    def test_gaussian_conjugate_all(self, tmp_path, capsys):
        out = tmp_path / "reports.json"
        code = main(["verify", str(CONFIG_DIR / "gaussian_conjugate.json"), "--identity", "all", "--out", str(out)])
        assert code == EXIT_OK
        reports = json.loads(out.read_text())
        assert len(reports) >= 10 and all(r["pass"] for r in reports)
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == len(reports) and all(line.startswith("PASS") for line in err)

    def test_wishart_printed_jacobian_fails(self, tmp_path):
        code = main(
            [
                "verify",
                str(CONFIG_DIR / "wishart_p1.json"),
                "--identity",
                "JacobianExpFam",
                "--paper-erratum-mode",
                "--out",
                str(tmp_path / "r.json"),
            ]
        )
        assert code == EXIT_FAIL

    def test_wishart_corrected_passes(self, tmp_path):
        code = main(["verify", str(CONFIG_DIR / "wishart_p1.json"), "--identity", "JacobianExpFam", "--out", str(tmp_path / "r.json")])
        assert code == EXIT_OK

    def test_missing_config(self, capsys):
        assert main(["verify", "missing.json"]) == EXIT_ERROR
        assert "missing.json" in capsys.readouterr().err

    def test_csv_and_flags(self, tmp_path):
        out = tmp_path / "r.csv"
        code = main(
            [
                "verify",
                str(CONFIG_DIR / "two_point.json"),
                "--identity",
                "Tweedie",
                "--identity",
                "MomentRecursion(2)",
                "--format",
                "csv",
                "--fd-scheme",
                "central-4",
                "--fd-step",
                "1e-6",
                "--sing-margin",
                "1e-5",
                "--out",
                str(out),
            ]
        )
        assert code == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0].startswith("kind,scenario,point")
        assert {line.split(",")[0] for line in lines[1:]} == {"Tweedie", "MomentRecursion(2)"}

    def test_incompatible_identity_is_error(self, tmp_path):
        code = main(["verify", str(CONFIG_DIR / "wishart_p1.json"), "--identity", "MomentRecursion(1)", "--out", str(tmp_path / "r")])
        assert code == EXIT_ERROR

    def test_byte_identical_across_threads(self, tmp_path, monkeypatch):
        paths = []
        for threads in ("1", "4"):
            monkeypatch.setenv("TWEEDIE_LAB_THREADS", threads)
            out = tmp_path / f"r{threads}.json"
            assert main(["verify", str(CONFIG_DIR / "exp_gamma.json"), "--out", str(out)]) == EXIT_OK
            paths.append(out.read_bytes())
        assert paths[0] == paths[1]


class TestEbCommand:
    def test_benchmark(self, tmp_path):
        out = tmp_path / "eb.json"
        code = main(["eb", str(CONFIG_DIR / "gaussian_conjugate.json"), "--n", "100000", "--seed", "1", "--out", str(out)])
        assert code == EXIT_OK
        report = json.loads(out.read_text())
        assert report["per_ell"][0]["ell"] == 1 and report["per_ell"][0]["mae_kde"] <= 0.05

    def test_too_few_samples(self, capsys):
        assert main(["eb", str(CONFIG_DIR / "gaussian_conjugate.json"), "--n", "1"]) == EXIT_ERROR
        assert "DegenerateSample" in capsys.readouterr().err

    def test_threshold_missed(self, tmp_path):
        doc = json.loads((CONFIG_DIR / "gaussian_conjugate.json").read_text())
        doc["eb"]["thresholds"] = {"mae_kde": {"1": 1e-9}}
        path = _write(tmp_path, doc)
        assert main(["eb", path, "--n", "2000", "--out", str(tmp_path / "e.json")]) == EXIT_FAIL

    def test_same_seed_byte_identical(self, tmp_path):
        outs = []
        for i in range(2):
            out = tmp_path / f"eb{i}.json"
            main(["eb", str(CONFIG_DIR / "two_point.json"), "--n", "20000", "--seed", "5", "--ell-max", "2", "--out", str(out)])
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]


class TestListCommand:
    def test_listing(self, capsys):
        assert main(["list"]) == EXIT_OK
        text = capsys.readouterr().out
        models = text.split("identity kinds:")[0].strip().splitlines()[1:]
        kinds = text.split("identity kinds:")[1].split("default suite:")[0].strip().splitlines()
        assert len(models) >= 5 and len(kinds) >= 14
        assert "outer_power" in text

    def test_stable(self, capsys):
        main(["list"])
        first = capsys.readouterr().out
        main(["list"])
        assert capsys.readouterr().out == first

    def test_console_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "tweedie_lab.cli", "--version"], capture_output=True, text=True)
        assert proc.returncode == 0 and "0.1.0" in proc.stdout
