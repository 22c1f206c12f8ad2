import csv
import math
from pathlib import Path

import numpy as np
import pytest

from fracsteklov.harness import (
    DEFAULT_S_GRID,
    CheckTable,
    MeshPolicy,
    SweepRecord,
    bbm_limit_table,
    convergence_sweep,
    emit_report,
    extension_bbm_check,
    strip_limit_table,
    trace_constant,
    zero_infimum_demo,
)
from fracsteklov.mesh import strip_cells

DATA = Path(__file__).parent / "data"
TANH_HALF = math.tanh(0.5)


def _fixture_records():
    out = []
    for i, s in enumerate((0.6, 0.8, 0.95)):
        lam = 0.43 + 0.01 * i
        out.append(
            SweepRecord(s, round(1 - s, 12), 2.0, lam, TANH_HALF, abs(lam - TANH_HALF),
                        abs(lam - TANH_HALF) / TANH_HALF, 40 + 10 * i, 16, 0.125)
        )
    return out


class TestMeshPolicy:
    @pytest.mark.parametrize("eps", [0.4, 0.2, 0.1, 0.05])
    def test_strip_resolution(self, eps):
        mesh = MeshPolicy().build(eps)
        strip = strip_cells(mesh, eps)
        assert strip.cells.size >= 16
        assert mesh.cell_lengths[strip.cells].max() <= eps / 8 * (1 + 1e-9)

    def test_refine_halves(self):
        coarse = MeshPolicy().build(0.1)
        fine = MeshPolicy(refine=2).build(0.1)
        assert fine.h == pytest.approx(coarse.h / 2)
        assert fine.n_interior > 1.9 * coarse.n_interior

    def test_without_strip(self):
        mesh = MeshPolicy(h=1 / 16).build(None)
        assert mesh.n_interior == 17

    def test_dof_cap(self):
        with pytest.raises(ValueError, match="cap"):
            MeshPolicy(max_interior_dofs=10).build(0.05)

    @pytest.mark.parametrize("kw", [{"gamma": 0.5}, {"R": 0.0}, {"h": 0.0}, {"refine": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            MeshPolicy(**kw)


class TestBBM:
    def test_examples(self):
        t = bbm_limit_table(lambda x: x, 2.0, [0.5, 0.7, 0.9, 0.99], du=lambda x: np.ones_like(x))
        np.testing.assert_allclose(t.values, [0.5, 0.625, 1 / 1.2, 1 / 1.02], rtol=1e-6)
        assert t.deviations[-1] < 0.02
        assert np.all(np.diff(t.values) > 0)

    def test_constant(self):
        t = bbm_limit_table(lambda x: np.ones_like(x), 2.0, [0.5, 0.9])
        np.testing.assert_allclose(t.values, 0.0, atol=1e-14)
        np.testing.assert_allclose([r.target for r in t.rows], 0.0, atol=1e-14)

    def test_finite_difference_derivative(self):
        t = bbm_limit_table(lambda x: x**2, 2.0, [0.9])
        assert t.rows[0].target == pytest.approx(4 / 3, rel=1e-10)


class TestExtension:
    def test_zero(self):
        t = extension_bbm_check(lambda x: np.zeros_like(x), [0.5, 0.9])
        np.testing.assert_allclose(t.values, 0.0, atol=1e-14)

    def test_linear(self):
        grid = [0.6, 0.8, 0.9, 0.99]
        t = extension_bbm_check(lambda x: x, grid, R=2.0)
        assert abs(t.values[-1] - 1.0) < 0.05
        collar = np.array(t.extra["collar"])
        assert np.all(np.diff(collar) < 0)
        np.testing.assert_allclose(
            np.array(t.extra["inner"]), [1 / (3 - 2 * s) for s in grid], rtol=1e-6
        )


class TestStrip:
    def test_examples(self):
        t = strip_limit_table(lambda x: x, 2.0, [0.2, 0.1, 0.01])
        expected = [1 - e + 2 * e * e / 3 for e in (0.2, 0.1, 0.01)]
        np.testing.assert_allclose(t.values, expected, rtol=0, atol=1e-10)
        assert t.values[1] == pytest.approx(0.9066667, abs=1e-7)
        assert t.values[2] == pytest.approx(0.9900667, abs=1e-7)

    def test_constant(self):
        t = strip_limit_table(lambda x: np.ones_like(x), 3.0, [0.3, 0.1])
        np.testing.assert_allclose(t.values, 2.0, rtol=1e-14)
        np.testing.assert_allclose(t.deviations, 0.0, atol=1e-14)

    def test_bad_eps(self):
        with pytest.raises(ValueError):
            strip_limit_table(lambda x: x, 2.0, [0.0])


class TestZeroInfimum:
    def test_decreasing(self):
        t = zero_infimum_demo(range(2, 21), 0.5, 2.0)
        assert np.all(np.diff(t.values) < 0)
        assert t.values[-1] < 0.1 * t.values[0]
        np.testing.assert_allclose(t.extra["denominator"], 2 / 3)

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            zero_infimum_demo([3, 2], 0.5, 2.0)


class TestTrace:
    def test_domain(self):
        with pytest.raises(ValueError):
            trace_constant(0.4, 2.0)

    def test_linear(self):
        lam = trace_constant(0.95, 2.0)
        assert 0 < lam <= 0.5
        assert abs(lam - TANH_HALF) < 0.1 * TANH_HALF

    def test_general_p_bound(self):
        lam = trace_constant(0.9, 3.0, MeshPolicy(h=1 / 16))
        assert 0 < lam <= 0.5


class TestSweep:
    @pytest.fixture(scope="class")
    @classmethod
    def rows(cls):
        return convergence_sweep(2.0)

    def test_rows(self, rows):
        assert [r.s for r in rows] == list(DEFAULT_S_GRID)
        for r in rows:
            assert r.error is None
            assert r.eps == 1 - r.s
            assert 0 < r.lam <= r.upper_bound == 0.5
            assert r.strip_cells >= 16
            assert r.sign_constant and r.normalized and r.gap > 0
            assert r.residual < 1e-8
        errs = [r.rel_err for r in rows]
        assert all(b < a for a, b in zip(errs, errs[1:]))
        assert errs[-1] < 0.1

    def test_trace_consistency(self, rows):
        lam_t = trace_constant(0.95, 2.0)
        lam_s = rows[-1].lam
        assert abs(lam_t - lam_s) < abs(lam_t - TANH_HALF) + abs(lam_s - TANH_HALF) + 0.05

    def test_threads_order(self, rows):
        again = convergence_sweep(2.0, threads=3)
        assert [r.lam for r in again] == [r.lam for r in rows]

    def test_failing_row_continues(self):
        rows = convergence_sweep(2.0, [0.6, 0.99], MeshPolicy(max_interior_dofs=200), reference=TANH_HALF)
        assert rows[0].error is None
        assert rows[1].error is not None and not rows[1].converged

    def test_validation(self):
        with pytest.raises(ValueError):
            convergence_sweep(2.0, [0.9, 0.8])
        with pytest.raises(ValueError):
            convergence_sweep(2.0, [0.9], MeshPolicy(gamma=1.0))


class TestReport:
    def test_empty(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report([], str(tmp_path / "x"))
        with pytest.raises(ValueError):
            emit_report(CheckTable("t"), str(tmp_path / "x"))

    def test_single_record(self, tmp_path):
        csv_path, svg_path = emit_report(_fixture_records()[:1], str(tmp_path / "one"))
        lines = Path(csv_path).read_text().splitlines()
        assert len(lines) == 2
        assert lines[0] == "s,eps,p,lambda,reference,abs_err,rel_err,dofs,strip_cells,tail_mass"
        assert Path(svg_path).exists()

    def test_check_table(self, tmp_path):
        t = strip_limit_table(lambda x: x, 2.0, [0.2, 0.1])
        csv_path, _ = emit_report(t, str(tmp_path / "strip.csv"))
        rows = list(csv.reader(open(csv_path)))
        assert rows[0] == ["param", "value", "target", "deviation"]
        assert float(rows[1][1]) == t.values[0]

    def test_golden_svg(self, tmp_path):
        _, svg_path = emit_report(_fixture_records(), str(tmp_path / "sweep"), title="sweep")
        assert Path(svg_path).read_bytes() == (DATA / "golden_sweep.svg").read_bytes()
        assert 'viewBox="0 0 800 600"' in Path(svg_path).read_text()

    def test_deterministic(self, tmp_path):
        a = emit_report(_fixture_records(), str(tmp_path / "a"), title="t")
        b = emit_report(_fixture_records(), str(tmp_path / "b"), title="t")
        for x, y in zip(a, b):
            assert Path(x).read_bytes() == Path(y).read_bytes()
