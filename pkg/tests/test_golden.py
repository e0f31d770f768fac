"""The committed sample output in ``golden/`` is reproduced by the CLI."""

import csv
import json
from pathlib import Path

import pytest

from multiindex_qmc import cli

GOLDEN = Path(__file__).resolve().parent.parent / "golden"


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def same_tables(a, b):
    ra, rb = rows(a), rows(b)
    assert len(ra) == len(rb)
    for x, y in zip(ra, rb):
        assert x.keys() == y.keys()
        for k in x:
            if k in ("key", "N", "R"):
                assert x[k] == y[k]
            else:
                assert float(x[k]) == pytest.approx(float(y[k]), rel=1e-9, abs=1e-300)


@pytest.mark.parametrize("command, table", [("screen", "screen.csv"), ("run", "levels.csv")])
def test_golden_sample_reproduces(tmp_path, command, table):
    out = tmp_path / command
    argv = [command, "--config", str(GOLDEN / "config.ini"), "--out", str(out)]
    assert cli.main(argv) == 0
    same_tables(out / table, GOLDEN / command / table)


def test_golden_records_carry_keys_and_config_hash():
    lines = [json.loads(l) for l in (GOLDEN / "run" / "run.jsonl").read_text().splitlines()]
    env = lines[0]
    assert env["type"] == "environment" and len(env["config_hash"]) == 16
    cfg = cli.load_config(GOLDEN / "config.ini")
    assert cfg.config_hash() == env["config_hash"]
    for rep in (l for l in lines if l["type"] == "report"):
        assert all("key" in r for r in rep["levels"])
