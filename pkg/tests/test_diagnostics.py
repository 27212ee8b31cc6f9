import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmddp.diagnostics import InsufficientSamplesError, cbm_mcse, diagnose, fixed_width_verdict, write_diagnostics
from mmddp.numerics import make_rng


def ar1(phi, T, rng):
    e = rng.standard_normal(T)
    x = np.empty(T)
    x[0] = e[0] / np.sqrt(1 - phi ** 2)
    for t in range(1, T):
        x[t] = phi * x[t - 1] + e[t]
    return x


def test_constant_trace():
    mcse, a = cbm_mcse(np.full(400, 3.7))
    assert mcse == 0.0 and a == 20
    assert fixed_width_verdict(np.full(400, 3.7), 1e-9)


def test_batch_count_drops_partial():
    # T = 150: b = 12, 12 full batches, 6 trailing draws dropped
    x = np.r_[np.zeros(144), np.full(6, 1e6)]
    mcse, a = cbm_mcse(x)
    assert a == 12 and mcse == 0.0


def test_too_short():
    with pytest.raises(InsufficientSamplesError):
        cbm_mcse(np.zeros(99))


def test_iid_mcse_within_30_percent():
    rng = make_rng(11)
    T = 10_000
    ratios = np.array([cbm_mcse(rng.standard_normal(T))[0] * np.sqrt(T) for _ in range(100)])
    assert np.all(np.abs(ratios - 1) < 0.3), (ratios.min(), ratios.max())


def test_ar1_inflates_mcse():
    rng = make_rng(12)
    T = 10_000
    x = ar1(0.9, T, rng)
    iid = x.std(ddof=1) / np.sqrt(T)
    assert cbm_mcse(x)[0] / iid > 2


def test_epsilon_zero_fails():
    x = make_rng(1).standard_normal(1000)
    assert not fixed_width_verdict(x, 0.0)


def test_iid_passes_at_three_over_root_t():
    rng = make_rng(2)
    T = 10_000
    passes = [fixed_width_verdict(rng.standard_normal(T), 3 / np.sqrt(T)) for _ in range(20)]
    assert all(passes)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(-1e3, 1e3), st.floats(0.01, 100))
def test_shift_and_scale(seed, c, s):
    x = make_rng(seed).standard_normal(500)
    m0 = cbm_mcse(x)[0]
    assert np.isclose(cbm_mcse(x + c)[0], m0, rtol=1e-6, atol=1e-9)
    assert np.isclose(cbm_mcse(s * x)[0], s * m0, rtol=1e-9)


def test_diagnose_table(tmp_path):
    rng = make_rng(3)
    rows = diagnose({"a": rng.standard_normal(2500), "b": np.ones(2500), "c": ar1(0.999, 2500, rng)})
    verdicts = {r["parameter"]: r["verdict"] for r in rows}
    assert verdicts == {"a": "pass", "b": "pass", "c": "fail"}
    p = tmp_path / "d.csv"
    write_diagnostics(rows, p)
    assert p.read_text().splitlines()[0] == "parameter,mean,sd,mcse,verdict"
