import math

import pytest

from slowbeam_figures import FigureInputError, load_csv, render
from slowbeam_figures.cli import main as cli_main

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _write(path, schema, header, rows):
    lines = [f"# schema={schema}", header]
    lines += [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def _pattern_csv(tmp_path):
    rows = []
    for method in ("geb-ideal", "dft"):
        for col in (0, 1):
            for i in range(-40, 41):
                phi = i * 2.0
                gain = math.exp(-((phi - 10 * col) / 8.0) ** 2) + 1e-6
                rows.append((method, col, phi, gain))
    return _write(tmp_path / "pattern.csv", "slowbeam.pattern.v1",
                  "method,column,phi_deg,gain", rows)


def _series_csv(tmp_path):
    rows = []
    for sig in (0.5, 2.0):
        for i in range(-30, 31):
            x = i * 0.5
            rows.append(("spread", f"sigma_e={sig}", x,
                         math.exp(-(x / (2 + sig)) ** 2)))
    return _write(tmp_path / "spread.csv", "slowbeam.series.v1",
                  "figure_id,curve_id,x,y", rows)


def _results_csv(tmp_path):
    header = ("trial,step,group,user,method,alpha,beta,sigma_est_deg,nq,"
              "rank,snr_db,t_len,eval,sinr_db,p_signal,p_sicee,p_isi,"
              "p_mui,p_igi,p_noise,nmse,n_delta_p,n_patch_own,complexity")
    rows = []
    for sig in (0.5, 2.0):
        for method, beta in (("geb", 0.0), ("geb-filtered", 0.9)):
            for trial in range(2):
                for step in range(12):
                    sinr = 25 - sig - (3 if beta == 0 else 0) \
                        + 0.1 * step + 0.2 * trial
                    rows.append((trial, step, 1, 1, method, 0.999, beta,
                                 sig, 2, 2, 30.0, "", "analytic", sinr,
                                 1.0, 0, 0.01, 0, 0.01, 0.001, "", "", "",
                                 100))
    return _write(tmp_path / "results.csv", "slowbeam.results.v1",
                  header, rows)


def _summary_csv(tmp_path):
    header = ("method,alpha,beta,sigma_est_deg,nq,rank,snr_db,group,"
              "mean_sinr_db,mean_sinr_db_linavg,outage_prob,mean_nmse,"
              "mean_n_delta_p,mean_complexity,trials,steps")
    rows = []
    for method in ("wiener", "whitening"):
        for rank in (1, 2):
            for nq in (1, 2, 4):
                sinr = 20 + 2 * rank + nq - (1 if method == "wiener" else 0)
                rows.append((method, 0.99, 0.9, 0.5, nq, rank, 30.0, 1,
                             sinr, sinr + 0.2, 0.05, 0.01, 5.0,
                             (5 + 3) * rank + nq, 20, 100))
    rows.append(("geb", 0.99, 0.0, 0.5, 2, 2, 30.0, 1, 26.0, 26.2, 0.02,
                 0.005, "", 100, 20, 100))
    return _write(tmp_path / "summary.csv", "slowbeam.summary.v1",
                  header, rows)


# --- rendering is deterministic for the four covered presets -------------------

@pytest.mark.parametrize("figure,builder", [
    ("fig2", _pattern_csv),
    ("fig4", _series_csv),
    ("fig5", _results_csv),
    ("fig7", _summary_csv),
])
def test_render_deterministic(tmp_path, figure, builder):
    csv = builder(tmp_path)
    out1 = tmp_path / "a.png"
    out2 = tmp_path / "b.png"
    render(figure, [csv], out1)
    render(figure, [csv], out2)
    data1 = out1.read_bytes()
    assert data1[:8] == PNG_MAGIC
    assert data1 == out2.read_bytes()


def test_render_remaining_presets(tmp_path):
    summary = _summary_csv(tmp_path)
    for figure in ("fig6", "fig8"):
        out = tmp_path / f"{figure}.png"
        render(figure, [summary], out)
        assert out.read_bytes()[:8] == PNG_MAGIC
    out = tmp_path / "fig9.png"
    render("fig9", [summary], out)
    assert out.read_bytes()[:8] == PNG_MAGIC


# --- input validation -----------------------------------------------------------

def test_schema_mismatch_rejected(tmp_path):
    csv = _results_csv(tmp_path)
    with pytest.raises(FigureInputError, match="schema"):
        render("fig2", [csv], tmp_path / "out.png")
    assert not (tmp_path / "out.png").exists()


def test_empty_csv_rejected(tmp_path):
    path = _write(tmp_path / "empty.csv", "slowbeam.pattern.v1",
                  "method,column,phi_deg,gain", [])
    with pytest.raises(FigureInputError, match="no data rows"):
        render("fig2", [path], tmp_path / "out.png")
    assert not (tmp_path / "out.png").exists()


def test_missing_curve_rejected(tmp_path):
    # summary without nmse values cannot support the nMSE preset
    header = ("method,alpha,beta,sigma_est_deg,nq,rank,snr_db,group,"
              "mean_sinr_db,mean_sinr_db_linavg,outage_prob,mean_nmse,"
              "mean_n_delta_p,mean_complexity,trials,steps")
    path = _write(tmp_path / "s.csv", "slowbeam.summary.v1", header,
                  [("geb", 0.9, 0.0, 0.5, 2, 2, 30.0, 1, 25.0, 25.1,
                    0.0, "", "", 100, 5, 10)])
    with pytest.raises(FigureInputError, match="mean_nmse"):
        render("fig9", [path], tmp_path / "out.png")


def test_unknown_figure_rejected(tmp_path):
    csv = _pattern_csv(tmp_path)
    with pytest.raises(FigureInputError, match="unknown figure"):
        render("fig99", [csv], tmp_path / "out.png")


def test_load_csv_reports_found_schema(tmp_path):
    path = _write(tmp_path / "x.csv", "something.else.v9", "a,b",
                  [(1, 2)])
    with pytest.raises(FigureInputError, match="something.else.v9"):
        load_csv(path, "slowbeam.pattern.v1")


# --- CLI -------------------------------------------------------------------------

def test_cli_render_ok(tmp_path):
    csv = _pattern_csv(tmp_path)
    out = tmp_path / "fig2.png"
    rc = cli_main(["render", "--figure", "fig2", "--csv", str(csv),
                   "--out", str(out)])
    assert rc == 0
    assert out.read_bytes()[:8] == PNG_MAGIC


def test_cli_schema_mismatch_exit_code(tmp_path):
    csv = _pattern_csv(tmp_path)
    rc = cli_main(["render", "--figure", "fig5", "--csv", str(csv),
                   "--out", str(tmp_path / "no.png")])
    assert rc == 1
    assert not (tmp_path / "no.png").exists()


def test_cli_missing_file_exit_code(tmp_path):
    rc = cli_main(["render", "--figure", "fig2", "--csv",
                   str(tmp_path / "absent.csv"),
                   "--out", str(tmp_path / "no.png")])
    assert rc == 1
