from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lossfl import trace

HEADER = "unit_id,packets_received,packets_lost,throughput_mbps\n"


def _write(tmp_path, body, name="t.csv"):
    p = tmp_path / name
    p.write_text(HEADER + body)
    return p


def fixture_path():
    return resources.files("lossfl") / "fixtures" / "fcc_fixture.csv"


def test_rows_of_one_user_are_averaged(tmp_path):
    recs, skipped = trace.ingest(_write(tmp_path, "u1,90,10,3.0\nu1,80,20,5.0\n"))
    assert skipped == 0 and len(recs) == 1
    assert recs[0].loss_ratio == pytest.approx(0.15)
    assert recs[0].throughput_mbps == 4.0


def test_pooled_mode(tmp_path):
    recs, _ = trace.ingest(_write(tmp_path, "u1,90,10,3.0\nu1,10,10,5.0\n"), aggregate="pooled")
    assert recs[0].loss_ratio == pytest.approx(20 / 120)


def test_malformed_rows_skipped(tmp_path):
    recs, skipped = trace.ingest(_write(tmp_path, "u1,0,0,3.0\nu2,x,1,2\nu3,99,1,4\n"))
    assert skipped == 2
    assert [r.user_id for r in recs] == ["u3"]


def test_empty_file_errors(tmp_path):
    with pytest.raises(ValueError):
        trace.ingest(_write(tmp_path, ""))
    blank = tmp_path / "blank.csv"
    blank.write_text("")
    with pytest.raises(ValueError):
        trace.ingest(blank)


def test_custom_columns(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("id,rx,lx,up\na,8,2,1.5\n")
    recs, _ = trace.ingest(p, columns={"user_id": "id", "received": "rx", "lost": "lx", "throughput": "up"})
    assert recs[0].loss_ratio == pytest.approx(0.2)


def test_cdf_examples():
    assert dict(trace.cdf([1, 2, 3, 4]))[2.0] == 0.5
    assert trace.cdf([7, 7, 7]) == [(7.0, 1.0)]
    with pytest.raises(ValueError):
        trace.cdf([])


def test_fixture_statistics():
    recs, skipped = trace.ingest(fixture_path())
    assert skipped == 2 and len(recs) == 100
    assert trace.cdf_at([r.loss_ratio for r in recs], 0.1) == 0.90
    assert trace.eligible_ratio_at(recs, 2.0) == 0.76
    assert trace.eligible_ratio_at(recs, 0.0) == 1.0
    assert trace.eligible_ratio_at(recs, 1e9) == 0.0


@settings(max_examples=60, deadline=None)
@given(vals=st.lists(st.floats(0, 1e3), min_size=1, max_size=80))
def test_cdf_properties(vals):
    pts = trace.cdf(vals)
    xs, fs = zip(*pts)
    assert list(xs) == sorted(set(xs))
    assert all(np.diff(fs) > 0) and fs[-1] == 1.0


@settings(max_examples=40, deadline=None)
@given(speeds=st.lists(st.floats(0.01, 100), min_size=1, max_size=50),
       a=st.floats(0, 120), b=st.floats(0, 120))
def test_eligible_ratio_nonincreasing(speeds, a, b):
    recs = [trace.UserNetRecord(str(i), 1, 0, s, 0.0) for i, s in enumerate(speeds)]
    lo, hi = sorted((a, b))
    assert trace.eligible_ratio_at(recs, lo) >= trace.eligible_ratio_at(recs, hi)


def test_write_cdf_csv(tmp_path):
    p = trace.write_cdf_csv([(0.5, 0.25), (1.0, 1.0)], tmp_path / "c.csv", "loss_ratio")
    assert p.read_text() == "loss_ratio,cumulative_fraction\n0.5,0.250000\n1.0,1.000000\n"
