import numpy as np
import pytest

from stabsim_figures.render import FIGURES, SchemaError, main, read_table, render


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def make_series(out_dir, rounds=12, plateau=0.9):
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for n in range(1, rounds + 1):
        p = 0.5 + (plateau - 0.5) * np.exp(-0.05 * n)
        basis = "Z" if n % 2 else "X"
        rows.append((n, (n + 1) // 2, basis, f"{p:.6f}", f"{1-p:.6f}", f"{p:.6f}",
                     "0.01", 2000))
    write_csv(out_dir / "series.csv",
              ["index", "cycle", "basis", "p1", "p0", "p_correct", "stderr", "shots"],
              rows)


def make_fidelities(out_dir, cycles=(1, 6)):
    rows = [(c, 0.75 - 0.01 * c, 0.8, 0.7, -0.7, 0.02, 2000) for c in cycles]
    write_csv(out_dir / "fidelities.csv",
              ["cycle", "fidelity", "zz", "xx", "yy", "stderr", "shots"], rows)


def make_characterization(out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    header = ["theta", "p_in_plus", "p_in_minus", "p_m1", "p_m0",
              "p_corr_plus1", "p_corr_minus0", "p_anti_plus0", "p_anti_minus1",
              "p_out_1_plus", "p_out_0_minus", "f_nd", "f_qsp", "shots"]
    rows = []
    for theta in np.linspace(0, np.pi, 7):
        p = 0.5 + 0.5 * np.sin(2 * theta)
        rows.append((f"{theta:.4f}", f"{p:.4f}", f"{1-p:.4f}", f"{p:.4f}", f"{1-p:.4f}",
                     f"{0.95*p:.4f}", f"{0.95*(1-p):.4f}", f"{0.05*p:.4f}",
                     f"{0.05*(1-p):.4f}", "0.95", "0.95", "0.97", "0.95", 300))
    write_csv(out_dir / "characterization.csv", header, rows)


def make_correlations(out_dir, empty_category=False):
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [("Z", "none", 4000, 0.93, 0.004),
            ("Z", "C_X", 800, 0.88, 0.01),
            ("Z", "C_Z", 600 if not empty_category else 0,
             0.48 if not empty_category else "nan",
             0.02 if not empty_category else "nan"),
            ("Z", "C_Z+C_X", 0, "nan", "nan")]
    write_csv(out_dir / "correlations.csv",
              ["basis", "category", "n_pairs", "p_equal", "stderr"], rows)


def make_conditional(out_dir, rounds=10):
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [(n, 0.1, 30 if n > 2 else 5, 0.05, 0.08, 1000, 0.01,
             0 if n > 2 else 1) for n in range(1, rounds)]
    write_csv(out_dir / "conditional.csv",
              ["round", "p_fb_given_fb", "n_fb", "err_fb",
               "p_fb_given_nofb", "n_nofb", "err_nofb", "sparse"], rows)


@pytest.fixture
def run_dir(tmp_path):
    d = tmp_path / "run"
    make_series(d)
    make_fidelities(d)
    make_characterization(d)
    make_correlations(d)
    make_conditional(d)
    return d


class TestRender:
    @pytest.mark.parametrize("figure", FIGURES)
    def test_each_family_renders(self, figure, run_dir, tmp_path):
        out = tmp_path / f"{figure}.svg"
        render(figure, [run_dir], out)
        assert out.is_file() and out.stat().st_size > 500
        assert out.read_bytes().lstrip().startswith(b"<?xml")

    def test_idempotent_on_unchanged_inputs(self, run_dir, tmp_path):
        out = tmp_path / "fig.svg"
        render("series", [run_dir], out)
        first = out.read_bytes()
        render("series", [run_dir], out)
        assert out.read_bytes() == first

    def test_png_format(self, run_dir, tmp_path):
        out = tmp_path / "fig.png"
        render("series", [run_dir], out, fmt="png")
        assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_series_overlay_of_two_runs(self, run_dir, tmp_path):
        other = tmp_path / "closed"
        make_series(other, plateau=0.96)
        out = tmp_path / "overlay.svg"
        render("series", [run_dir, other], out)
        text = out.read_text()
        assert "run" in text and "closed" in text

    def test_empty_category_noted_in_legend(self, tmp_path):
        d = tmp_path / "corr"
        make_correlations(d, empty_category=True)
        out = tmp_path / "corr.svg"
        render("correlations", [d], out)
        text = out.read_text()
        assert "omitted empty" in text

    def test_error_bars_can_be_disabled(self, run_dir, tmp_path):
        out = tmp_path / "nobars.svg"
        render("series", [run_dir], out, error_bars=False)
        assert out.is_file()

    def test_unknown_figure_rejected(self, run_dir, tmp_path):
        with pytest.raises(ValueError):
            render("sparkline", [run_dir], tmp_path / "x.svg")


class TestSchema:
    def test_missing_column_named(self, tmp_path):
        d = tmp_path / "bad"
        d.mkdir()
        header = ["index", "cycle", "basis", "p1", "p0", "stderr", "shots"]
        write_csv(d / "series.csv", header, [(1, 1, "Z", 0.5, 0.5, 0.01, 10)])
        with pytest.raises(SchemaError, match="p_correct"):
            read_table(d, "series.csv")

    def test_missing_file_reported(self, tmp_path):
        with pytest.raises(SchemaError, match="not found"):
            read_table(tmp_path, "series.csv")


class TestCli:
    def test_render_command(self, run_dir, tmp_path):
        out = tmp_path / "cli.svg"
        code = main(["render", "--figure", "bell", "--in", str(run_dir),
                     "--out", str(out)])
        assert code == 0 and out.is_file()

    def test_schema_error_exit_code(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        code = main(["render", "--figure", "series", "--in", str(empty),
                     "--out", str(tmp_path / "x.svg")])
        assert code == 2
        assert "not found" in capsys.readouterr().err
