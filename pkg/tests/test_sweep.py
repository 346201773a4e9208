import io
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optocool.dynamics import cooling_point
from optocool.model import ValidationError
from optocool.sweep import (
    Axis,
    SweepResult,
    SweepSpec,
    emit,
    find_peaks,
    get_path,
    grid,
    load_json_result,
    preset,
    run_sweep,
    set_path,
)


def fig5(n=11):
    return preset("fig5", n).resolve({"kappa1": 20.0, "chi_mag": 10.0})


def column_result(values, xs=None):
    xs = np.arange(len(values), dtype=float) if xs is None else xs
    return SweepResult(["x", "y"], [{"x": float(x), "y": v} for x, v in zip(xs, values)],
                       {"axis2": None})


class TestPaths:
    def test_get_set(self):
        p = preset("fig6").base
        assert get_path(p, "Lambda[2]") == 0.08
        q = set_path(p, "Lambda[3]", 0.5)
        assert q.Lambda == (0.1, 0.08, 0.5) and p.Lambda[2] == 0.1
        assert set_path(p, "kappa1", 3.0).kappa1 == 3.0

    @pytest.mark.parametrize("path", ["Lambda[0]", "Lambda[4]", "nope", "kappa1[1]", "1x"])
    def test_bad_paths(self, path):
        with pytest.raises(ValidationError):
            set_path(preset("fig6").base, path, 1.0)

    def test_grid_hits_decimal_points(self):
        g = grid(0.5, 1.5, 101)
        assert 0.8 in g and 0.9 in g and 1.0 in g


class TestPresets:
    def test_fig3(self):
        s = preset("fig3")
        b = s.base
        assert b.gamma == (1e-6, 1e-6) and b.G1 == (0.1, 0.1)
        assert b.phi == pytest.approx(0.5 * math.pi) and b.delta_c == 1.0
        assert b.chi_mag == 0.0 and b.n_th == 1000.0
        assert (s.axis1.path, s.axis2.path) == ("omega[2]", "kappa1")
        assert s.axis1.values.size == 61 and s.axis2.values.size == 61
        assert set(s.required) == {"Lambda[1]", "Lambda[2]"}

    def test_fig6(self):
        s = preset("fig6")
        assert s.base.G1 == (0.3,) * 3 and s.base.omega == (1.0,) * 3
        assert s.base.Lambda[:2] == (0.1, pytest.approx(0.08))
        assert s.axis1.label == "Lambda[3]/Lambda[1]"
        assert s.axis1.values.size == 101

    def test_fig7(self):
        s = preset("fig7")
        assert s.base.Lambda[:3] == (0.2, pytest.approx(0.16), pytest.approx(0.18))
        assert s.base.G1 == (0.1,) * 4
        assert s.axis1.path == "Lambda[4]" and s.axis1.relative_to == "Lambda[1]"

    def test_unknown(self):
        with pytest.raises(ValidationError):
            preset("fig9")
        with pytest.raises(ValidationError):
            preset("fig2")

    def test_unresolved_refused(self):
        with pytest.raises(ValidationError) as info:
            run_sweep(preset("fig5", 5))
        assert info.value.field == "kappa1"

    def test_whole_array_override(self):
        s = preset("fig3", 3).resolve({"Lambda": [0.0, 0.0]})
        assert not s.required and s.base.Lambda == (0.0, 0.0)

    def test_axis_validation(self):
        s = replace(fig5(), axis1=Axis("Lambda[2]", [0.1, 0.1, 0.2], "Lambda[1]"))
        with pytest.raises(ValidationError):
            run_sweep(s)
        s = replace(fig5(), axis1=Axis("Lambda[2]", [], "Lambda[1]"))
        with pytest.raises(ValidationError):
            run_sweep(s)
        with pytest.raises(ValidationError):
            run_sweep(replace(fig5(), outputs=("n", "bogus")))


class TestRunSweep:
    def test_single_point(self):
        s = replace(fig5(), axis1=Axis("Lambda[2]", [0.5], "Lambda[1]"))
        res = run_sweep(s)
        ref = cooling_point(set_path(s.base, "Lambda[2]", 0.05))
        assert len(res.rows) == 1
        row = res.rows[0]
        assert row["n_1"] == pytest.approx(ref.n[0], rel=1e-14)
        assert row["n_2"] == pytest.approx(ref.n[1], rel=1e-14)
        assert row["n_cavity"] == pytest.approx(ref.n_cavity, rel=1e-14)

    def test_row_order_2d(self):
        s = preset("fig3", 3).resolve({"Lambda": [0.0, 0.0]})
        res = run_sweep(s)
        assert len(res.rows) == 9
        keys = [(r["omega[2]"], r["kappa1"]) for r in res.rows]
        assert keys[:3] == [(0.5, 0.1), (1.0, 0.1), (1.5, 0.1)]
        assert keys[3][1] > keys[0][1]

    def test_deterministic_and_schedule_independent(self):
        s = replace(fig5(9), outputs=("n", "n_cavity", "stable", "xi"))
        a = emit(run_sweep(s), "csv")
        b = emit(run_sweep(s), "csv")
        rng = np.random.default_rng(0)
        c = emit(run_sweep(s, order=rng.permutation(9)), "csv")
        d = emit(run_sweep(s, jobs=2), "csv")
        assert a == b == c == d
        assert emit(run_sweep(s), "json") == emit(run_sweep(s, jobs=2), "json")

    def test_bad_order(self):
        with pytest.raises(ValueError):
            run_sweep(fig5(3), order=[0, 0, 1])

    def test_unstable_rows_have_no_phonons(self):
        s = preset("fig5", 3).resolve({"kappa1": 2.0, "chi_mag": 3.0})
        res = run_sweep(s)
        assert res.metadata["n_unstable"] == 3
        for r in res.rows:
            assert r["stable"] is False and r["n_1"] is None and r["n_cavity"] is None

    def test_xi_columns(self):
        res = run_sweep(replace(fig5(11), outputs=("n", "xi")))
        ratio = res.column("Lambda[2]/Lambda[1]")
        xi = res.column("xi_L")
        for x, v in zip(ratio, xi):
            assert v == pytest.approx(0.1 * (1 - x) / 2, abs=1e-15)
        assert res.rows[-1]["dark_pairs"] == "1-2"
        assert res.rows[0]["dark_pairs"] == ""

    def test_metadata(self):
        res = run_sweep(fig5(3))
        m = res.metadata
        assert m["preset"] == "fig5" and "version" in m and "started" not in m
        assert "started" in run_sweep(fig5(3), timestamps=True).metadata

    def test_progress_to_stderr(self, capsys):
        run_sweep(fig5(10), progress=True)
        assert "sweep:" in capsys.readouterr().err


class TestFindPeaks:
    def test_monotone(self):
        assert find_peaks(column_result(list(np.linspace(0, 1, 20))), "y") == []

    def test_spike(self):
        y = list(np.ones(21))
        y[13] = 5.0
        assert find_peaks(column_result(y), "y") == [13.0]

    def test_missing_values_split(self):
        y = [0.0, 1.0, 0.0, None, 0.0, 2.0, 0.0]
        assert find_peaks(column_result(y), "y") == [1.0, 5.0]

    def test_absent_column(self):
        with pytest.raises(KeyError):
            find_peaks(column_result([1.0, 2.0]), "z")

    def test_bad_prominence(self):
        with pytest.raises(ValueError):
            find_peaks(column_result([1.0, 2.0]), "y", prominence=0)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=3, max_size=40),
           st.floats(1e-3, 1e3), st.floats(-1e3, 1e3))
    def test_affine_invariance(self, ys, a, b):
        base = find_peaks(column_result(ys), "y")
        scaled = find_peaks(column_result([a * v + b for v in ys]), "y")
        # rounding in a*v + b can merge near-equal plateaus; compare only when
        # the column is well separated from its own rounding noise
        span = max(ys) - min(ys)
        gaps = np.abs(np.diff(ys))
        if span > 0 and (gaps[gaps > 0].min() if np.any(gaps > 0) else 0) > 1e-6 * span:
            assert base == scaled


class TestEmit:
    def test_header_only(self):
        res = SweepResult(["a", "b"], [])
        assert emit(res, "csv") == "a,b\n"

    def test_csv_precision_and_nulls(self):
        res = SweepResult(["x", "flag", "err"], [{"x": 0.1, "flag": True, "err": None}])
        assert emit(res, "csv") == "x,flag,err\n0.10000000000000001,true,\n"

    def test_json_round_trip(self, tmp_path):
        res = run_sweep(replace(fig5(7), outputs=("n", "n_cavity", "stable", "xi")))
        path = tmp_path / "r.json"
        emit(res, "json", str(path))
        back = load_json_result(str(path))
        assert back.columns == res.columns
        assert back.rows == res.rows
        assert back.metadata == res.metadata
        assert emit(back, "json") == emit(res, "json")

    def test_stream_and_bad_format(self):
        buf = io.StringIO()
        emit(SweepResult(["a"], [{"a": 1.5}]), "csv", buf)
        assert buf.getvalue() == "a\n1.5\n"
        with pytest.raises(ValueError):
            emit(SweepResult(["a"], []), "xml")

    def test_csv_row_count(self):
        res = run_sweep(fig5(5))
        assert len(emit(res, "csv").splitlines()) == 6
