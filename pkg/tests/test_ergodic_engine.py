import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ergoshift.ergodic_engine import (
    RUN_RECORD_COLUMNS,
    EvaluationError,
    birkhoff_sum,
    classical_mc,
    geometric_checkpoints,
    lil_statistic,
    pilot_mean,
    rate_estimate,
    write_run_records,
)
from ergoshift.product_space import Law, Observable, bernoulli_system, evaluate, shift_apply

X0 = Observable(lambda w: w[:, 0, 0], 1, "X_0")
H = Observable(lambda w: w[:, 0, 0] * w[:, 1, 0], 2, "X0X1")
COBOUNDARY = Observable(lambda w: w[:, 1, 0] * w[:, 2, 0] - w[:, 0, 0] * w[:, 1, 0], 3)
CONST = Observable(lambda w: np.full(w.shape[0], 2.5), 1)


def test_lil_statistic_values():
    assert lil_statistic(0.0, 100) == 0.0
    assert lil_statistic(math.sqrt(2 * 100 * math.log(math.log(100))), 100) == pytest.approx(1.0, rel=1e-15)
    with pytest.raises(ValueError):
        lil_statistic(1.0, 2)


def test_checkpoints_are_geometric_and_increasing():
    cps = geometric_checkpoints(10_000)
    assert cps[0] == 10 and cps[-1] == 10_000
    assert all(b > a for a, b in zip(cps, cps[1:]))
    assert cps[5] == math.ceil(10 * 1.25**5)


def test_constant_observable_sums_to_zero():
    stats = birkhoff_sum(bernoulli_system(0), CONST, 1000, 2.5)
    assert stats.sum == 0.0
    assert stats.mean_estimate == stats.sum / stats.N


def test_uniform_mean_estimate():
    N = 100_000
    stats = birkhoff_sum(bernoulli_system(1), X0, N, 0.5)
    assert abs(stats.mean_estimate) < 4 / math.sqrt(N)
    assert stats.average == pytest.approx(0.5, abs=4 / math.sqrt(N))


@pytest.mark.parametrize("N", [1, 2, 7, 100, 1000])
@pytest.mark.parametrize("law", [Law.UNIFORM, Law.GAUSSIAN])
def test_coboundary_telescopes(N, law):
    S = bernoulli_system(13, law=law)
    stats = birkhoff_sum(S, COBOUNDARY, N, 0.0, chunk=64)
    h_back = Observable(lambda w: w[:, 1, 0] * w[:, 2, 0], 3)
    expect = evaluate(S, h_back) - evaluate(shift_apply(S, N), H)
    assert stats.sum == pytest.approx(expect, abs=1e-12 * max(1, N))


def test_chunking_does_not_change_sums():
    S = bernoulli_system(3, law=Law.GAUSSIAN)
    a = birkhoff_sum(S, H, 5000, 0.0, chunk=97)
    b = birkhoff_sum(S, H, 5000, 0.0)
    assert a.sum == pytest.approx(b.sum, abs=1e-9)
    assert [n for n, _ in a.lil_trace] == [n for n, _ in b.lil_trace]


def test_same_seed_reproduces_trace():
    a = birkhoff_sum(bernoulli_system(8), H, 20_000, 0.25, lil_window=(1000, 20_000))
    b = birkhoff_sum(bernoulli_system(8), H, 20_000, 0.25, lil_window=(1000, 20_000))
    assert a.lil_trace == b.lil_trace and a.lil_max == b.lil_max


def test_running_max_dominates_checkpoints():
    stats = birkhoff_sum(bernoulli_system(4, law=Law.GAUSSIAN), X0, 50_000, 0.0, lil_window=(1000, 50_000))
    inside = [v for n, v in stats.lil_trace if 1000 <= n <= 50_000]
    assert stats.lil_max >= max(inside) - 1e-15


def test_nonfinite_values_raise_with_step():
    bad = Observable(lambda w: np.where(w[:, 0, 0] > 0.999, np.nan, 0.0), 1)
    with pytest.raises(EvaluationError) as err:
        birkhoff_sum(bernoulli_system(0), bad, 100_000, 0.0)
    assert err.value.step >= 0


def test_rate_for_iid_and_constant():
    iid = rate_estimate(lambda s: bernoulli_system(s), X0, 10_000, 200, mean=0.5, seed=0)
    sd = math.sqrt(1 / 12)
    assert abs(iid.value - sd) <= 0.05 * sd + 3 * iid.stderr
    const = rate_estimate(lambda s: bernoulli_system(s), CONST, 100, 5, mean=2.5)
    assert const.value == 0.0 and const.stderr == 0.0


def test_classical_mc_calibration():
    m, se = classical_mc(X0, 10_000, 0)
    assert abs(m - 0.5) < 3 * se
    assert classical_mc(CONST, 100, 0) == (2.5, 0.0)


def test_pilot_mean_uses_separate_stream():
    m = pilot_mean(H, 50_000, 0)
    assert m == pytest.approx(0.25, abs=0.01)


def test_shift_and_classical_errors_scale_with_their_norms():
    # uniform X0 X1: increment norm sqrt(13/144) against centered norm sqrt(7/144)
    reps, N = 60, 20_000
    shift_err, mc_err = [], []
    for s in range(reps):
        shift_err.append(birkhoff_sum(bernoulli_system(s), H, N - 1, 0.25, checkpoints=[]).sum / N)
        mc_err.append(classical_mc(H, N, 10_000 + s)[0] - 0.25)
    ratio = math.sqrt(np.mean(np.square(shift_err)) / np.mean(np.square(mc_err)))
    assert ratio == pytest.approx(math.sqrt(13 / 7), rel=0.3)


def test_run_records_csv(tmp_path):
    stats = birkhoff_sum(bernoulli_system(2), X0, 2000, 0.5, checkpoints=[100, 2000])
    p = tmp_path / "runs.csv"
    write_run_records(p, [stats], include_time=False)
    lines = p.read_text().split("\n")
    assert lines[0] == ",".join(RUN_RECORD_COLUMNS)
    assert len(lines) == 4 and lines[-1] == ""
    assert lines[2].endswith(",")


@given(st.floats(-1e6, 1e6), st.integers(3, 10**9), st.floats(0.1, 100))
def test_lil_statistic_homogeneous(S, N, c):
    assert lil_statistic(c * S, N) == pytest.approx(c * lil_statistic(S, N), rel=1e-12, abs=1e-300)
