import argparse
import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from infodemic import __version__
from infodemic.cli import DATA_DIR_ENV, main, resolve_config

SMALL = ["--n-perm", "49", "--countries", "CA,ES,KE,ZA"]


def config_file(tmp_path, paths, **extra):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"data_paths": paths, "sdc_max_lag": 3, **extra}))
    return str(p)


def parse(argv):
    from infodemic.cli import build_parser

    return build_parser().parse_args(argv)


def read_header(path):
    lines = Path(path).read_text().splitlines()
    return [l[2:] for l in lines if l.startswith("# ")]


def test_precedence_flags_over_config_over_defaults(tmp_path, fixture_paths):
    cfg = config_file(tmp_path, fixture_paths, seed=5, alpha=0.05)
    eff = resolve_config(parse(["sdc", "--config", cfg, "--seed", "9"]))
    assert eff.seed == 9  # flag wins
    assert eff.alpha == 0.05  # config wins over default
    assert eff.n_perm == 1000  # default
    assert eff.sdc_max_lag == 3


def test_env_var_supplies_data_dir(tmp_path, fixture_paths, monkeypatch):
    monkeypatch.setenv(DATA_DIR_ENV, str(Path(fixture_paths["who"]).parent))
    eff = resolve_config(parse(["fit"]))
    assert eff.data_paths["who"] == fixture_paths["who"]
    assert eff.data_paths["trends"] == fixture_paths["trends"]


def test_output_dir_not_in_hash(tmp_path, fixture_paths):
    cfg = config_file(tmp_path, fixture_paths)
    a = resolve_config(parse(["fit", "--config", cfg, "--out", "x"]))
    b = resolve_config(parse(["fit", "--config", cfg, "--out", "y"]))
    assert a.config_hash() == b.config_hash()
    c = resolve_config(parse(["fit", "--config", cfg, "--seed", "1"]))
    assert c.config_hash() != a.config_hash()


def test_fit_writes_tables_with_headers(tmp_path, fixture_paths):
    out = tmp_path / "out"
    code = main(["fit", "--config", config_file(tmp_path, fixture_paths), "--out", str(out), "--models", "1a,1b,1c"])
    assert code == 0
    text = (out / "table_documents.txt").read_text()
    assert "(1a)" in text and "(1c)" in text
    head = read_header(out / "table_documents.txt")
    assert head[0] == f"tool: infodemic {__version__}"
    assert head[1].startswith("config_hash: ") and head[2] == "seed: 0"
    assert head[3].startswith("date_range: 2020-06-07..")
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "ok" and man["failures"] == []
    assert man["config"]["models"] == ["1a", "1b", "1c"]
    assert set(man["outputs"]) == {"table_documents.txt", "fits.json"}


def test_every_output_has_header(tmp_path, fixture_paths):
    out = tmp_path / "out"
    assert main(["all", "--config", config_file(tmp_path, fixture_paths), "--out", str(out), *SMALL]) == 0
    files = [p for p in out.iterdir() if p.name != "manifest.json"]
    assert len(files) >= 15
    for p in files:
        keys = [h.split(":")[0] for h in read_header(p)]
        assert keys == ["tool", "config_hash", "seed", "date_range"], p.name
    scatter = pd.read_csv(out / "country_scatter.csv", comment="#")
    assert sorted(scatter["country"]) == ["CA", "ES", "KE", "ZA"]
    sdc = pd.read_csv(out / "sdc_cases_documents.csv", comment="#")
    assert list(sdc.columns) == ["country", "x_start", "y_start", "rho", "significant"]
    assert (abs(sdc["x_start"] - sdc["y_start"]) <= 3).all()


def test_failed_analysis_gives_exit_one(tmp_path, fixture_paths):
    out = tmp_path / "out"
    code = main(["rolling", "--config", config_file(tmp_path, fixture_paths), "--out", str(out),
                 "--dependent", "documents", "--window", "36m"])
    assert code == 1
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "partial"
    assert man["failures"][0]["analysis"] == "rolling:documents"


def test_missing_input_names_source(tmp_path, fixture_paths, capsys):
    paths = dict(fixture_paths, ears=str(tmp_path / "nope.csv"))
    code = main(["fit", "--config", config_file(tmp_path, paths), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "ears" in capsys.readouterr().err


def test_malformed_file_reports_line(tmp_path, fixture_paths, capsys):
    bad = tmp_path / "who.csv"
    lines = Path(fixture_paths["who"]).read_text().splitlines()
    lines[4] = lines[4].replace("2020-01-", "2020-99-", 1)
    bad.write_text("\n".join(lines) + "\n")
    code = main(["ingest", "--who", str(bad), "--out", str(tmp_path / "o")])
    assert code == 2
    assert f"{bad}:5:" in capsys.readouterr().err


def test_unknown_model_rejected(tmp_path, fixture_paths, capsys):
    code = main(["fit", "--config", config_file(tmp_path, fixture_paths), "--models", "9z"])
    assert code == 2


def write_white_noise(directory, n_countries=6, n_days=160, seed=0):
    rng = np.random.default_rng(seed)
    dates = pd.date_range("2021-01-01", periods=n_days).strftime("%Y-%m-%d")
    codes = ["IT", "FR", "ES", "DE", "AT", "BE"][:n_countries]
    who, ears = [], []
    for c in codes:
        cases = rng.poisson(5000, n_days)
        docs = rng.poisson(5000, n_days)
        for d, x, y in zip(dates, cases, docs):
            who.append((d, c, c, "EURO", x, 0, 0, 0))
            ears.append((d, c, y))
    cols = ["Date_reported", "Country_code", "Country", "WHO_region", "New_cases", "Cumulative_cases", "New_deaths", "Cumulative_deaths"]
    pd.DataFrame(who, columns=cols).to_csv(directory / "who.csv", index=False)
    pd.DataFrame(ears, columns=["date", "country", "documents"]).to_csv(directory / "ears.csv", index=False)
    return {"who": str(directory / "who.csv"), "ears": str(directory / "ears.csv")}


def test_sdc_on_white_noise_near_nominal_rate(tmp_path):
    paths = write_white_noise(tmp_path)
    cfg = tmp_path / "wn.json"
    cfg.write_text(json.dumps({"data_paths": paths}))
    out = tmp_path / "out"
    code = main(["sdc", "--config", str(cfg), "--out", str(out), "--pair", "cases:documents", "--n-perm", "200"])
    assert code == 0
    cells = pd.read_csv(out / "sdc_cases_documents.csv", comment="#")
    assert len(cells) > 10000
    # overlapping windows make cells dependent, so allow a wider band than the calibration check
    assert 0.002 <= cells["significant"].mean() <= 0.025
