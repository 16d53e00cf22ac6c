from pathlib import Path

import pytest

import render

FIXTURES = Path(__file__).parent / "fixtures"

KIND_INPUT = {
    "depth_sweep": "depth_sweep.csv",
    "size_sweep": "sweep.csv",
    "user_bars": "users.csv",
    "delay_bars": "users.csv",
}


@pytest.mark.parametrize("kind", sorted(KIND_INPUT))
def test_renders_and_rerenders_identically(kind, tmp_path):
    src = FIXTURES / KIND_INPUT[kind]
    first = tmp_path / f"{kind}_1.png"
    second = tmp_path / f"{kind}_2.png"
    assert render.main(["--kind", kind, "--in", str(src), "--out", str(first)]) == 0
    assert render.main(["--kind", kind, "--in", str(src), "--out", str(second)]) == 0
    data = first.read_bytes()
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    assert len(data) > 5000
    assert data == second.read_bytes()


def test_missing_column_named(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("capacity,strategy,requests\n2,standard,10\n")
    out = tmp_path / "x.png"
    rc = render.main(["--kind", "size_sweep", "--in", str(bad), "--out", str(out)])
    assert rc == 1
    assert "'hits'" in capsys.readouterr().err
    assert not out.exists()


def test_empty_csv_writes_nothing(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("capacity,strategy,requests,hits,hit_rate\n")
    out = tmp_path / "x.png"
    rc = render.main(["--kind", "size_sweep", "--in", str(empty), "--out", str(out)])
    assert rc == 1
    assert "no data rows" in capsys.readouterr().err
    assert not out.exists()


def test_multiple_inputs_concatenate(tmp_path):
    src = FIXTURES / "sweep.csv"
    half1 = tmp_path / "h1.csv"
    half2 = tmp_path / "h2.csv"
    lines = src.read_text().splitlines()
    half1.write_text("\n".join(lines[:4]) + "\n")
    half2.write_text("\n".join([lines[0]] + lines[4:]) + "\n")
    merged = tmp_path / "merged.png"
    single = tmp_path / "single.png"
    assert render.main(["--kind", "size_sweep", "--in", str(half1), str(half2), "--out", str(merged)]) == 0
    assert render.main(["--kind", "size_sweep", "--in", str(src), "--out", str(single)]) == 0
    assert merged.read_bytes() == single.read_bytes()


def test_series_order_fixed():
    rows = [
        {"strategy": "irm"},
        {"strategy": "prefetch"},
        {"strategy": "standard"},
        {"strategy": "extended"},
        {"strategy": "custom"},
    ]
    assert render.ordered_strategies(rows) == [
        "standard",
        "extended",
        "prefetch",
        "irm",
        "custom",
    ]
