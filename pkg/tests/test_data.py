import numpy as np
import pytest

from hcr.data import (
    DEFAULT_LAMBDA,
    FACTOR_NAMES,
    YieldTable,
    diebold_li_fit,
    factor_loadings,
    load_csv,
    load_yields,
)
from hcr.errors import InvalidInputError

MATURITIES = [3, 6, 12, 24, 36, 60, 84, 120, 240, 360]


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def curve(beta, tau, lam):
    # written out independently of factor_loadings
    tau = np.asarray(tau, dtype=float)
    decay = np.exp(-lam * tau)
    slope = (1 - decay) / (lam * tau)
    return beta[0] + beta[1] * slope + beta[2] * (slope - decay)


class TestLoadCsv:
    def test_three_column_file(self, tmp_path, rng):
        values = rng.normal(size=(6470, 3))
        lines = ["date,b1,b2,b3"] + [f"d{i},{float(a)!r},{float(b)!r},{float(c)!r}" for i, (a, b, c) in enumerate(values)]
        path = write(tmp_path / "betas.csv", "\n".join(lines) + "\n")
        raw = load_csv(path, date_column="date")
        assert raw.names == ("b1", "b2", "b3")
        assert len(raw) == 6470
        np.testing.assert_array_equal(raw.values, values)
        assert raw.times[0] == "d0" and raw.times[-1] == "d6469"

    def test_column_selection(self, tmp_path):
        path = write(tmp_path / "x.csv", "b1,b2,b3\n1,2,3\n4,5,6\n")
        raw = load_csv(path, ["b3", "b1"])
        assert raw.names == ("b3", "b1")
        np.testing.assert_array_equal(raw.values, [[3, 1], [6, 4]])

    def test_header_only(self, tmp_path):
        path = write(tmp_path / "h.csv", "b1,b2\n")
        with pytest.raises(InvalidInputError, match="header only"):
            load_csv(path)

    def test_empty_file(self, tmp_path):
        with pytest.raises(InvalidInputError, match="empty"):
            load_csv(write(tmp_path / "e.csv", ""))

    def test_missing_column(self, tmp_path):
        path = write(tmp_path / "x.csv", "b1,b2\n1,2\n")
        with pytest.raises(InvalidInputError, match="missing column 'b3'"):
            load_csv(path, ["b1", "b3"])

    def test_non_numeric_cell_reports_position(self, tmp_path):
        path = write(tmp_path / "x.csv", "b1,b2\n1,2\n3,oops\n")
        with pytest.raises(InvalidInputError, match=r"row 3, column 'b2'"):
            load_csv(path)

    def test_non_finite(self, tmp_path):
        path = write(tmp_path / "x.csv", "b1\n1\nnan\n")
        with pytest.raises(InvalidInputError, match="non-finite"):
            load_csv(path)

    def test_unreadable(self, tmp_path):
        with pytest.raises(InvalidInputError, match="cannot read"):
            load_csv(tmp_path / "absent.csv")


class TestLoadings:
    def test_default_lambda(self):
        assert DEFAULT_LAMBDA == 0.0609

    def test_values(self):
        lam = 0.0609
        tau = np.array(MATURITIES, dtype=float)
        L = factor_loadings(tau, lam)
        np.testing.assert_array_equal(L[:, 0], 1.0)
        np.testing.assert_allclose(L[:, 1], (1 - np.exp(-lam * tau)) / (lam * tau), rtol=1e-13)
        np.testing.assert_allclose(L[:, 2], L[:, 1] - np.exp(-lam * tau), rtol=1e-12)

    def test_short_maturity_limit(self):
        # slope -> 1, curvature -> 0 as lambda * tau -> 0
        L = factor_loadings([1e-9, 1e-8, 1e-7], 0.0609)
        np.testing.assert_allclose(L[:, 1], 1.0, atol=1e-8)
        np.testing.assert_allclose(L[:, 2], 0.0, atol=1e-8)

    @pytest.mark.parametrize("lam", [0.0, -0.1, float("nan")])
    def test_bad_lambda(self, lam):
        with pytest.raises(InvalidInputError):
            factor_loadings(MATURITIES, lam)


class TestDieboldLi:
    def test_flat_curve(self):
        table = YieldTable(("a", "b"), MATURITIES, np.full((2, len(MATURITIES)), 4.25))
        raw = diebold_li_fit(table)
        assert raw.names == FACTOR_NAMES
        np.testing.assert_allclose(raw.values, [[4.25, 0, 0], [4.25, 0, 0]], atol=1e-12)

    @pytest.mark.parametrize("lam", [DEFAULT_LAMBDA, 0.03, 0.2])
    def test_recovers_synthetic_factors(self, rng, lam):
        betas = np.column_stack([rng.uniform(2, 8, 50), rng.uniform(-4, 2, 50), rng.uniform(-3, 3, 50)])
        yields = np.array([curve(b, MATURITIES, lam) for b in betas])
        raw = diebold_li_fit(YieldTable(tuple(range(50)), MATURITIES, yields), lam)
        np.testing.assert_allclose(raw.values, betas, rtol=0, atol=1e-9)

    def test_rank_deficient(self):
        table = YieldTable((0,), [1e-9, 2e-9, 3e-9], np.ones((1, 3)))
        with pytest.raises(InvalidInputError, match="rank"):
            diebold_li_fit(table)

    def test_table_validation(self):
        with pytest.raises(InvalidInputError):
            YieldTable((0,), [3, 6], np.ones((1, 2)))
        with pytest.raises(InvalidInputError):
            YieldTable((0,), [3, 3, 6], np.ones((1, 3)))
        with pytest.raises(InvalidInputError):
            YieldTable((0,), [0, 3, 6], np.ones((1, 3)))
        with pytest.raises(InvalidInputError):
            YieldTable((0, 1), [3, 6, 9], np.ones((1, 3)))

    def test_load_yields(self, tmp_path):
        lam = DEFAULT_LAMBDA
        beta = (5.0, -1.5, 0.75)
        y = curve(beta, MATURITIES, lam)
        header = "date," + ",".join(str(m) for m in MATURITIES)
        text = f"{header}\n2001-01-02," + ",".join(repr(float(v)) for v in y) + "\n"
        table = load_yields(write(tmp_path / "y.csv", text), date_column="date")
        assert table.dates == ("2001-01-02",)
        np.testing.assert_array_equal(table.maturities, MATURITIES)
        np.testing.assert_allclose(diebold_li_fit(table).values[0], beta, atol=1e-9)

    def test_load_yields_bad_header(self, tmp_path):
        path = write(tmp_path / "y.csv", "a,b,c\n1,2,3\n")
        with pytest.raises(InvalidInputError, match="maturity"):
            load_yields(path)
