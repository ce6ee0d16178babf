from __future__ import annotations

import dataclasses
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chartrel.executor import Engine
from chartrel.faults import Exponential, FaultTable, load_fault_table
from chartrel.inference import (ConditionNeverObserved, DegenerateSampleError, EmptySampleError,
                                NonFiniteObjectiveError, conditional_lifetime, export_histogram,
                                fit_weibull, sensitivity, summarize_lifetime,
                                weibull_objective_and_grad)
from chartrel.loader import load_model
from chartrel.oracle import weibull_mle
from chartrel.presim import SimOutcome, generate_fault_series, run_batch, run_series
from chartrel.rng import CounterRNG

from conftest import unit_model


@pytest.fixture(scope="module")
def epas_batch(epas, epas_table):
    return run_batch(Engine(epas.composite, epas.library), epas_table, 59813, 10_000)


def _outcome(t, mode="X", replica=0):
    return SimOutcome(replica, t, mode, (), 0)


# --------------------------------------------------------------------------
# summaries

def test_constant_outcomes():
    s = summarize_lifetime([_outcome(5.0, replica=i) for i in range(10)])
    assert (s.n, s.mean_ttf, s.std_error) == (10, 5.0, 0.0)
    assert all(v == 5.0 for v in s.quantiles.values())
    assert s.mode_split == {"X": 1.0}


def test_summary_statistics():
    times = [1.0, 2.0, 3.0, 4.0, 10.0]
    s = summarize_lifetime([_outcome(t, "A" if t < 3 else "B") for t in times])
    assert s.mean_ttf == 4.0
    assert s.std_error == pytest.approx(np.std(times, ddof=1) / math.sqrt(5), rel=1e-14)
    assert s.quantiles[0.5] == 3.0
    assert s.quantiles[0.95] == pytest.approx(np.quantile(times, 0.95))
    assert s.mode_split == {"A": 0.4, "B": 0.6}


def test_empty_summary():
    with pytest.raises(EmptySampleError):
        summarize_lifetime([])


def test_epas_summary(epas_batch):
    s = summarize_lifetime(epas_batch)
    assert s.n == 10_000 and s.survived == 0
    assert abs(sum(s.mode_split.values()) - 1.0) < 1e-12
    assert s.mode_split["LossOfAssist"] > s.mode_split["SelfSteering"]
    assert list(s.quantiles.values()) == sorted(s.quantiles.values())


# --------------------------------------------------------------------------
# Weibull objective and fit

def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    t = rng.weibull(1.5, 500) * 2000.0
    for _ in range(20):
        a, b = math.log(rng.uniform(200, 20_000)), math.log(rng.uniform(0.3, 4.0))
        _, g = weibull_objective_and_grad(t, a, b)
        for k in range(2):
            h = 1e-5 * max(1.0, abs((a, b)[k]))
            up = [a, b]
            dn = [a, b]
            up[k] += h
            dn[k] -= h
            fd = (weibull_objective_and_grad(t, *up)[0] - weibull_objective_and_grad(t, *dn)[0]) / (2 * h)
            assert abs(g[k] - fd) <= 1e-5 * max(abs(fd), 1.0)


def test_objective_is_mean_log_density():
    from scipy import stats
    t = np.array([0.5, 1.0, 4.0])
    obj, _ = weibull_objective_and_grad(t, math.log(2.0), math.log(1.7))
    assert obj == pytest.approx(stats.weibull_min(1.7, scale=2.0).logpdf(t).mean(), rel=1e-13)


def test_fit_matches_mle():
    t = np.random.default_rng(0).weibull(1.5, 10_000) * 2000.0
    fit = fit_weibull(t, n_steps=10_000, learning_rate=0.05)
    mle = weibull_mle(t)
    assert abs(fit.eta / mle.eta - 1) < 0.05 and abs(fit.beta / mle.beta - 1) < 0.05
    assert fit.elbo_trace.shape == (10_000,)
    assert fit.ks_distance < 0.02


def test_exponential_samples_give_unit_shape():
    u = CounterRNG(4).uniforms(np.arange(10_000), [1])[:, 0]
    t = Exponential(1 / 300.0).inverse_survival(u)
    fit = fit_weibull(t, n_steps=3000)
    assert 0.95 <= fit.beta <= 1.05
    assert fit.eta == pytest.approx(300.0, rel=0.05)


def test_fit_with_fresh_draws():
    rng = np.random.default_rng(3)
    fit = fit_weibull(sampler=lambda step, k: rng.weibull(2.0, k) * 10.0, n_steps=4000,
                      learning_rate=0.01, batch_size=256)
    assert fit.beta == pytest.approx(2.0, rel=0.1) and fit.eta == pytest.approx(10.0, rel=0.05)


def test_fit_is_deterministic(epas_batch):
    t = np.array([o.failure_time for o in epas_batch])
    a, b = fit_weibull(t, n_steps=500), fit_weibull(t, n_steps=500)
    assert (a.eta, a.beta) == (b.eta, b.beta)
    np.testing.assert_array_equal(a.elbo_trace, b.elbo_trace)


def test_degenerate_samples():
    with pytest.raises(DegenerateSampleError):
        fit_weibull([7.0] * 100)
    with pytest.raises(NonFiniteObjectiveError):
        fit_weibull([0.0, 0.0, 0.0])
    with pytest.raises(EmptySampleError):
        fit_weibull([])
    with pytest.raises(ValueError):
        fit_weibull([1.0, 2.0], n_steps=0)
    with pytest.raises(ValueError):
        fit_weibull([1.0, 2.0], learning_rate=0.0)


# --------------------------------------------------------------------------
# conditioning

def test_conditioning_equals_subset_mean(engine, epas_table, epas_batch):
    for mode in ("SelfSteering", "LossOfAssist"):
        ws = conditional_lifetime(engine, epas_table, 59813, mode, 10_000, outcomes=epas_batch)
        subset = [o.failure_time for o in epas_batch if o.failure_mode == mode]
        s = ws.summary()
        assert s.mean_ttf == math.fsum(subset) / len(subset)
        assert ws.effective_sample_size == len(subset)
        assert s.mode_split == {mode: 1.0}
        assert s.quantiles[0.5] == float(np.quantile(subset, 0.5))


def test_conditioning_reruns_deterministically(engine, epas_table, epas_batch):
    ws = conditional_lifetime(engine, epas_table, 59813, "SelfSteering", 10_000)
    np.testing.assert_array_equal(ws.weights, conditional_lifetime(
        engine, epas_table, 59813, "SelfSteering", 10_000, outcomes=epas_batch).weights)


def test_self_steering_precedes_loss_of_assist(engine, epas_table, epas_batch):
    ss = conditional_lifetime(engine, epas_table, 0, "SelfSteering", 0, outcomes=epas_batch).summary()
    loa = conditional_lifetime(engine, epas_table, 0, "LossOfAssist", 0, outcomes=epas_batch).summary()
    assert ss.mean_ttf < loa.mean_ttf


def test_single_mode_model(tmp_path):
    m = load_model(unit_model(tmp_path, faults="U*,HW,fail,exp,0.5,,Up,Down\n"))
    eng = Engine(m.composite, m.library)
    table = load_fault_table(m.fault_table_path(), m.composite)
    outcomes = run_batch(eng, table, 1, 500)
    ws = conditional_lifetime(eng, table, 1, "Down", 500)
    assert np.all(ws.weights == 1.0)
    cond, plain = ws.summary(), summarize_lifetime(outcomes)
    assert (cond.mean_ttf, cond.std_error, cond.quantiles) == (plain.mean_ttf, plain.std_error, plain.quantiles)


def test_condition_never_observed(tmp_path):
    m = load_model(unit_model(tmp_path, faults="U*,HW,fail,exp,0.5,,Up,Down\n"))
    eng = Engine(m.composite, m.library)
    table = load_fault_table(m.fault_table_path(), m.composite)
    with pytest.raises(ConditionNeverObserved) as exc:
        conditional_lifetime(eng, table, 1, "Burnt", 200)
    assert exc.value.frequencies == {"Down": 200}
    assert "Down: 200" in str(exc.value)


# --------------------------------------------------------------------------
# sensitivity

def test_symmetric_sensors_have_equal_deltas(engine, epas_table, epas_batch):
    a = sensitivity(engine, epas_table, 59813, "S1A", 1e8, 0, outcomes=epas_batch)
    b = sensitivity(engine, epas_table, 59813, "S1B", 1e8, 0, outcomes=epas_batch)
    se = math.hypot(a.conditioned.std_error, b.conditioned.std_error)
    assert abs(a.delta - b.delta) <= 3 * se
    assert a.unconditioned == b.unconditioned


def test_sensitivity_weights_are_indicators(engine, epas_table, epas_batch):
    r = sensitivity(engine, epas_table, 59813, "UCA", 1e9, 0, outcomes=epas_batch)
    hit = [o for o in epas_batch if any(f.instance == "UCA" and f.time <= 1e9 for f in o.consumed_faults)]
    assert r.samples.effective_sample_size == len(hit)
    assert r.conditioned.mean_ttf == math.fsum(o.failure_time for o in hit) / len(hit)
    assert r.delta == r.conditioned.mean_ttf - r.unconditioned.mean_ttf


def test_early_uc_fault_shortens_life(engine, epas_table):
    """Paired replicas: the same fault series with UCA's shutdown moved to t = 0."""
    rng = CounterRNG(77)
    diffs = []
    for replica in range(4000):
        series = generate_fault_series(epas_table, rng, replica)
        _, t0, _ = run_series(engine, series)
        forced = sorted((dataclasses.replace(f, time=0.0) if f.instance == "UCA" else f for f in series),
                        key=lambda f: f.time)
        _, t1, _ = run_series(engine, forced)
        diffs.append(t1 - t0)
    d = np.array(diffs)
    assert d.mean() + 3 * d.std(ddof=1) / math.sqrt(d.size) < 0


def test_never_failing_target(engine, epas_table, epas_batch):
    rows = tuple(dataclasses.replace(r, distribution=Exponential(1e-300)) if r.instance == "UCA" else r
                 for r in epas_table.rows)
    with pytest.raises(ConditionNeverObserved):
        sensitivity(engine, FaultTable(rows), 59813, "UCA", 1e9, 2000)


def test_sensitivity_preconditions(engine, epas_table):
    with pytest.raises(ValueError, match="no fault annotation"):
        sensitivity(engine, epas_table, 0, "DiagA", 1.0, 10)
    with pytest.raises(ValueError, match="horizon"):
        sensitivity(engine, epas_table, 0, "UCA", 0.0, 10)


# --------------------------------------------------------------------------
# histograms

def test_histogram_counts():
    h = export_histogram([1, 1, 3, 3], bin_count=2, upper=4.0)
    np.testing.assert_array_equal(h.edges, [0, 2, 4])
    np.testing.assert_array_equal(h.mass, [2, 2])
    assert export_histogram([1, 1, 3, 3], bin_width=2.0).mass.tolist() == [2, 2]


def test_zero_weights_contribute_nothing():
    h = export_histogram([1.0, 9.0], weights=[0, 1], bin_count=3)
    assert h.mass.sum() == 1.0 and h.edges[-1] == 9.0 and h.mass[-1] == 1.0


def test_histogram_conserves_mass(epas_batch):
    t = np.array([o.failure_time for o in epas_batch])
    h = export_histogram(t, bin_count=50)
    assert h.mass.sum() == 10_000
    fp = io.StringIO()
    h.write_csv(fp)
    lines = fp.getvalue().splitlines()
    assert lines[0] == "bin_left_h,bin_right_h,mass" and len(lines) == 51


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=50),
       st.lists(st.floats(0, 5), min_size=50, max_size=50), st.integers(1, 20))
def test_histogram_mass_property(times, weights, bins):
    w = np.array(weights[:len(times)])
    if not np.any(w > 0):
        w[0] = 1.0
    h = export_histogram(times, weights=w, bin_count=bins)
    assert h.mass.sum() == pytest.approx(w.sum(), rel=1e-12)


def test_histogram_errors():
    with pytest.raises(EmptySampleError):
        export_histogram([], bin_count=3)
    with pytest.raises(EmptySampleError):
        export_histogram([1.0], weights=[0.0], bin_count=3)
    with pytest.raises(ValueError):
        export_histogram([1.0], bin_count=3, bin_width=1.0)
