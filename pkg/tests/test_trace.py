import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ferrosim.characterization import extract_pv, run_triangle_sweep
from ferrosim.trace import Trace, read_trace_csv, trace_from_csv, trace_to_csv, write_trace_csv


def test_two_points_three_lines():
    tr = Trace([0.0, 1e-9], {"v(n1)": [0.0, 1.0], "i(vpl)": [1e-12, -2e-12]})
    lines = trace_to_csv(tr).splitlines()
    assert len(lines) == 3
    assert lines[0] == "t,v(n1),i(vpl)"
    assert lines[2].split(",")[1] == "1.00000000e+00"


def test_empty_signals_header_only():
    assert trace_to_csv(Trace(np.zeros(0), {})) == "t\n"


def test_bad_traces():
    with pytest.raises(ValueError):
        Trace([0.0, 0.0], {})
    with pytest.raises(ValueError):
        Trace([0.0, 1.0], {"x": [1.0]})
    with pytest.raises(ValueError):
        trace_from_csv("time,x\n0,1\n")


finite = st.floats(-1e6, 1e6, allow_nan=False).filter(lambda x: x == 0 or abs(x) > 1e-300)


@given(vals=st.lists(finite, min_size=1, max_size=20))
def test_csv_round_trip(vals):
    tr = Trace(np.arange(len(vals)) * 1e-9, {"p(f1)": vals})
    back = trace_from_csv(trace_to_csv(tr))
    assert np.allclose(back["p(f1)"], vals, rtol=1e-8, atol=0)
    assert trace_to_csv(back) == trace_to_csv(tr)


def test_file_round_trip_feeds_extraction(tmp_path, stack_a):
    tr = run_triangle_sweep(stack_a, 5.5, 11e3, 2)
    path = tmp_path / "iv.csv"
    write_trace_csv(tr, path)
    back = read_trace_csv(path)
    back.meta.update(tr.meta)
    assert extract_pv(back, stack_a).pr_plus == pytest.approx(extract_pv(tr, stack_a).pr_plus, rel=1e-6)
    assert path.read_bytes() == trace_to_csv(back).encode()


def test_window_and_interp():
    tr = Trace([0.0, 1.0, 2.0], {"x": [0.0, 2.0, 4.0]})
    assert len(tr.window(0.5, 2.0)) == 2
    assert tr.at("x", 1.5) == 3.0
    assert "x" in tr and "y" not in tr
