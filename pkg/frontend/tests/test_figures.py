import json

import pytest

from chaoslab_plot.cli import main
from chaoslab_plot.figures import (
    FigureSpec,
    PlotDataError,
    rate_function,
    read_records_csv,
    render,
)

RECORDS_HEADER = "mode,p,d,N,epsilon,M,exceed_count,p_hat,wilson_lo,wilson_hi,a_p,seed"


def records_csv(tmp_path, rows=None, header=RECORDS_HEADER):
    if rows is None:
        rows = []
        for N, (c1, c2) in zip((64, 128, 256), ((120, 30), (40, 8), (6, 0))):
            for eps, c in (("0.05", c1), ("0.1", c2)):
                ph = c / 2000
                rows.append(
                    f"particle,1,1,{N},{eps},2000,{c},{ph:.17g},"
                    f"{max(ph - 0.01, 0):.17g},{ph + 0.01:.17g},{float(eps) ** 2:.17g},7"
                )
    path = tmp_path / "records.csv"
    path.write_text(header + "\n" + "\n".join(rows) + ("\n" if rows else ""))
    return path


def fits_json(tmp_path):
    payload = {
        "fits": [
            {"mode": "particle", "p": 1.0, "d": 1, "epsilon": e, "slope": s,
             "r2": 0.95, "a_p": e**2, "n_cells": 3}
            for e, s in ((0.05, 0.004), (0.1, 0.012), (0.2, 0.05))
        ],
        "skipped": {},
    }
    path = tmp_path / "rate_fits.json"
    path.write_text(json.dumps(payload))
    return path


def sweep_csv(tmp_path, rows=("64,1.2e-3", "128,6.1e-4", "256,2.9e-4", "512,1.6e-4")):
    path = tmp_path / "entropy_sweep.csv"
    path.write_text("N,kl_estimate\n" + "\n".join(rows) + "\n")
    return path


def test_header_mismatch_aborts(tmp_path):
    bad = records_csv(tmp_path, header="mode,p,d,N")
    with pytest.raises(PlotDataError, match="schema mismatch"):
        read_records_csv(bad)


def test_empty_records_error(tmp_path, capsys):
    path = records_csv(tmp_path, rows=[])
    code = main(["--kind", "survival", "--input", str(path),
                 "--output", str(tmp_path / "s.png")])
    assert code == 2
    assert "empty data" in capsys.readouterr().err


def test_all_three_kinds_render(tmp_path):
    outs = []
    for kind, src in (
        ("survival", records_csv(tmp_path)),
        ("rate_vs_ap", fits_json(tmp_path)),
        ("kl_decay", sweep_csv(tmp_path)),
    ):
        out = tmp_path / f"{kind}.png"
        assert main(["--kind", kind, "--input", str(src), "--output", str(out)]) == 0
        assert out.exists() and out.stat().st_size > 0
        outs.append(out)


def test_render_byte_identical_reruns(tmp_path):
    src = records_csv(tmp_path)
    out1 = tmp_path / "a.png"
    out2 = tmp_path / "b.png"
    assert main(["--kind", "survival", "--input", str(src), "--output", str(out1)]) == 0
    assert main(["--kind", "survival", "--input", str(src), "--output", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_no_silent_overwrite(tmp_path, capsys):
    src = sweep_csv(tmp_path)
    out = tmp_path / "kl.png"
    assert main(["--kind", "kl_decay", "--input", str(src), "--output", str(out)]) == 0
    stamp = out.read_bytes()
    assert main(["--kind", "kl_decay", "--input", str(src), "--output", str(out)]) == 2
    assert "exists" in capsys.readouterr().err
    assert out.read_bytes() == stamp
    assert main(["--kind", "kl_decay", "--input", str(src), "--output", str(out),
                 "--force"]) == 0


def test_render_does_not_mutate_input(tmp_path):
    src = records_csv(tmp_path)
    before = src.read_bytes()
    render(FigureSpec(str(src), "survival", str(tmp_path / "x.png")))
    assert src.read_bytes() == before


def test_rate_function_branches():
    assert rate_function(1.0, 1, 0.1) == pytest.approx(0.01)
    assert rate_function(1.0, 3, 0.1) == pytest.approx(1e-3)
    import math

    assert rate_function(1.0, 2, 0.1) == pytest.approx(0.01 / math.log(12) ** 2)


def test_missing_fit_fields(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"fits": [{"mode": "particle"}]}))
    code = main(["--kind", "rate_vs_ap", "--input", str(path),
                 "--output", str(tmp_path / "r.png")])
    assert code == 2


def test_sweep_with_nonpositive_values(tmp_path):
    src = sweep_csv(tmp_path, rows=("64,1.2e-3", "128,-2e-5", "256,2.9e-4"))
    out = tmp_path / "kl2.png"
    assert main(["--kind", "kl_decay", "--input", str(src), "--output", str(out)]) == 0
    assert out.stat().st_size > 0
