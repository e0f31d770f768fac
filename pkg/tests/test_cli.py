import json

import pytest

from multiindex_qmc import cli
from multiindex_qmc import index_algebra as ia
from multiindex_qmc.verification import identity_suite


def write_config(path, **sections):
    lines = []
    for name, items in sections.items():
        lines.append(f"[{name}]")
        lines += [f"{k} = {v}" for k, v in items.items()]
        lines.append("")
    path.write_text("\n".join(lines))
    return path


def test_missing_seed_is_a_configuration_error(tmp_path, capsys):
    assert cli.main(["run", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "seed" in capsys.readouterr().err


@pytest.mark.parametrize("body, word", [
    ({"estimator": {"seed": 1, "eps": 0.5}}, "eps"),
    ({"estimator": {"seed": 1, "colour": "red"}}, "colour"),
    ({"extras": {"a": 1}}, "extras"),
    ({"estimator": {"seed": "x"}}, "seed"),
])
def test_bad_config_names_the_key(tmp_path, capsys, body, word):
    cfg = write_config(tmp_path / "c.ini", **body)
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert word in capsys.readouterr().err


def test_screen_mimc_d2_table(tmp_path):
    cfg = write_config(tmp_path / "c.ini", problem={"d": 2},
                       estimator={"driver": "mimc", "seed": 1, "screen_level": 4})
    assert cli.main(["screen", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = (tmp_path / "o" / "screen.csv").read_text().strip().splitlines()
    assert rows[0].split(",") == cli.CSV_COLUMNS
    assert len(rows) - 1 == 15
    assert json.loads((tmp_path / "o" / "screen.jsonl").read_text().splitlines()[-1])["type"] == "rates"


def test_identical_bytes_for_identical_seed(tmp_path):
    outs = []
    for k, threads in enumerate((1, 3)):
        out = tmp_path / f"o{k}"
        argv = ["run", "--driver", "miqmc", "--dim", "2", "--eps", "4e-3", "2e-3", "--seed", "9",
                "--out", str(out), "--threads", str(threads)]
        assert cli.main(argv) == 0
        outs.append(out)
    for name in ("run.jsonl", "levels.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    assert (outs[0] / "timing.json").exists()


def test_sweep_reports_and_verdict(tmp_path):
    out = tmp_path / "o"
    argv = ["run", "--driver", "miqmc", "--dim", "2", "--seed", "3", "--out", str(out),
            "--eps", "4e-3", "2e-3", "1e-3", "5e-4"]
    assert cli.main(argv) == 0
    lines = [json.loads(l) for l in (out / "run.jsonl").read_text().splitlines()]
    reports = [l for l in lines if l["type"] == "report"]
    assert len(reports) == 4
    costs = [r["modeled_cost"] for r in reports]
    assert all(a <= b for a, b in zip(costs, costs[1:]))
    verdict = lines[-1]
    assert verdict["type"] == "verdict" and abs(verdict["measured_slope"]) < 2


def test_mlmc_and_combination_agree_in_1d(tmp_path):
    est = []
    for drv in ("mlmc", "mlmc-comb"):
        out = tmp_path / drv
        assert cli.main(["run", "--driver", drv, "--seed", "4", "--eps", "1e-3",
                         "--out", str(out)]) == 0
        rep = [json.loads(l) for l in (out / "run.jsonl").read_text().splitlines()][1]
        est.append(rep["estimate"])
    assert est[0] == est[1]


def test_missing_lattice_file_without_fallback(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.ini", estimator={"driver": "miqmc", "seed": 1},
                       lattice={"korobov_fallback": "no"})
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    argv = ["run", "--driver", "miqmc", "--seed", "1", "--out", str(tmp_path),
            "--lattice-file", str(tmp_path / "nope.txt")]
    assert cli.main(argv) == cli.EXIT_CONFIG
    assert "nope.txt" in capsys.readouterr().err


def test_estimator_failure_exit_code(tmp_path):
    cfg = write_config(tmp_path / "c.ini", estimator={"seed": 1, "max_level": 3, "eps": 1e-5})
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == cli.EXIT_ESTIMATOR
    lines = [json.loads(l) for l in (out / "run.jsonl").read_text().splitlines()]
    assert lines[-1]["type"] == "failure" and lines[-1]["diagnostics"]["max_level"] == 3


def test_verify_quick_passes(tmp_path):
    assert cli.main(["verify", "--quick", "--out", str(tmp_path)]) == 0
    rows = [json.loads(l) for l in (tmp_path / "verify.jsonl").read_text().splitlines()]
    assert rows and all(r["passed"] for r in rows)


def test_tampered_mixed_difference_is_named(tmp_path, monkeypatch, capsys):
    original = ia.mixed_difference
    monkeypatch.setattr(ia, "mixed_difference", lambda ev, ell: -original(ev, ell))
    assert cli.main(["verify", "--quick", "--out", str(tmp_path)]) == cli.EXIT_VERIFY
    text = capsys.readouterr().out
    assert "FAIL  summation identity" in text


def test_three_dimensional_identities_pass():
    results = identity_suite(dims=(3,), max_component=3)
    assert results and all(r.passed for r in results)


def test_rates_from_saved_table(tmp_path, capsys):
    out = tmp_path / "o"
    cfg = write_config(tmp_path / "c.ini", problem={"d": 2},
                       estimator={"driver": "mimc", "seed": 1})
    assert cli.main(["screen", "--config", str(cfg), "--out", str(out)]) == 0
    capsys.readouterr()
    assert cli.main(["rates", str(out / "screen.csv"), "--driver", "mimc", "--dim", "2"]) == 0
    text = capsys.readouterr().out
    assert "alpha = 1.6" in text and "mimc: beta > gamma" in text
    records = cli.read_csv(out / "screen.csv")
    # default pilot depth in d=2 is |ell|_1 <= 7
    assert len(records) == 36 and all(isinstance(r.key, tuple) for r in records)


def test_full_verify_writes_records(tmp_path):
    assert cli.main(["verify", "--out", str(tmp_path)]) == 0
    rows = [json.loads(l) for l in (tmp_path / "verify.jsonl").read_text().splitlines()]
    assert len(rows) == 24 and all(r["passed"] is True for r in rows)
    assert any("unbiasedness" in r["name"] for r in rows)
