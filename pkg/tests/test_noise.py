import math

import numpy as np
import pytest

from ionmem.hyperfine import FieldSensitivity
from ionmem.noise import (
    ConstantOffset,
    FieldTrace,
    GradientTrace,
    LinearDrift,
    NoiseSpec,
    OrnsteinUhlenbeck,
    RandomWalk,
    Sinusoid,
    White,
    merge_statistics,
    ou_phase_variance,
    predict_dephasing_time,
    sample_component,
    sample_field_trace,
    sample_gradient_trace,
    substream,
    trace_statistics,
    write_trace_csv,
)


def test_constant_offset_trace():
    tr = sample_field_trace(NoiseSpec([ConstantOffset(1e-7)]), 1.0, 0.01, 5)
    assert len(tr) == 100
    assert np.all(tr.samples == 1e-7)


def test_linear_drift_last_sample():
    r, T, dt = 2e-9, 10.0, 0.1
    tr = sample_field_trace(NoiseSpec([LinearDrift(r)]), T, dt, 0)
    assert abs(tr.samples[-1] - r * T) <= dt * r


def test_ou_stationary_std():
    spec = NoiseSpec([OrnsteinUhlenbeck(1e-7, 100.0)])
    tr = sample_field_trace(spec, 1e4, 0.01, 11)
    assert len(tr) >= 10**6
    assert np.std(tr.samples) == pytest.approx(1e-7, rel=0.10)


def test_random_walk_variance_linear():
    dt, D, n = 0.01, 1e-14, 100
    rng = substream(2, 0)
    # 10^4 independent realizations of the same component
    ends = np.array([RandomWalk(D).sample(np.arange(n) * dt, dt, rng)[-1] for _ in range(10_000)])
    t_mid = (n - 0.5) * dt
    assert np.var(ends) == pytest.approx(D * t_mid, rel=0.10)


def test_ou_autocorrelation():
    tau, dt = 1.0, 0.1
    comp = OrnsteinUhlenbeck(1.0, tau)
    rng = substream(4, 0)
    k = int(round(tau / dt))
    pairs = np.array([comp.sample(np.arange(k + 1) * dt, dt, rng)[[0, k]] for _ in range(10_000)])
    rho = np.corrcoef(pairs.T)[0, 1]
    assert rho == pytest.approx(math.exp(-1), rel=0.10)


def test_determinism_and_independence():
    spec = NoiseSpec([OrnsteinUhlenbeck(1e-7, 1.0), White(1e-8)])
    a = sample_field_trace(spec, 5.0, 0.01, 42, (3, 1))
    b = sample_field_trace(spec, 5.0, 0.01, 42, (3, 1))
    c = sample_field_trace(spec, 5.0, 0.01, 42, (3, 2))
    assert a.samples.tobytes() == b.samples.tobytes()
    assert not np.array_equal(a.samples, c.samples)


def test_superposition():
    comps = [OrnsteinUhlenbeck(1e-7, 2.0), RandomWalk(1e-16), Sinusoid(1e-8, 3.0, 0.2)]
    spec = NoiseSpec(comps)
    total = sample_field_trace(spec, 4.0, 0.01, 9, 7)
    parts = sum(sample_component(spec, j, 4.0, 0.01, 9, 7) for j in range(len(comps)))
    np.testing.assert_allclose(total.samples, parts, rtol=0, atol=1e-22)


def test_gradient_trace_parts():
    g = sample_gradient_trace(NoiseSpec([OrnsteinUhlenbeck(1e-7, 1.0)]), NoiseSpec([ConstantOffset(3e-9)]),
                              1.0, 0.01, 1)
    assert np.all(g.differential.samples == 3e-9)
    z = sample_gradient_trace(NoiseSpec([OrnsteinUhlenbeck(1e-7, 1.0)]), NoiseSpec(), 1.0, 0.01, 1)
    assert np.all(z.differential.samples == 0)
    with pytest.raises(ValueError):
        GradientTrace(FieldTrace(0, 0.1, [0, 0]), FieldTrace(0, 0.1, [0]))


def test_validation():
    with pytest.raises(ValueError):
        OrnsteinUhlenbeck(1e-7, 0.0)
    with pytest.raises(ValueError):
        White(-1.0)
    with pytest.raises(ValueError):
        ConstantOffset(float("nan"))
    with pytest.raises(ValueError):
        sample_field_trace(NoiseSpec(), 0.001, 0.01, 0)
    with pytest.raises(ValueError):
        FieldTrace(0.0, 0.1, [0.0, float("inf")])


def test_trace_is_immutable():
    tr = FieldTrace(0.0, 0.1, [1.0, 2.0])
    with pytest.raises(ValueError):
        tr.samples[0] = 5.0


def test_statistics():
    s = trace_statistics(FieldTrace(0, 1, np.full(10, 3.0)))
    assert s.mean == 3.0 and s.rms == 0.0
    tr = sample_field_trace(NoiseSpec([Sinusoid(2e-7, 1.0)]), 10.0, 1e-3, 0)
    assert trace_statistics(tr).rms == pytest.approx(2e-7 / math.sqrt(2), rel=0.01)


def test_statistics_merge():
    x = np.random.default_rng(1).normal(size=1001)
    whole = trace_statistics(x)
    merged = merge_statistics(trace_statistics(x[:400]), trace_statistics(x[400:]))
    assert merged.n == whole.n
    for k in ("mean", "rms", "min", "max"):
        assert getattr(merged, k) == pytest.approx(getattr(whole, k), rel=1e-12, abs=1e-15)


def _sens(d1=0.0, d2=0.0):
    return FieldSensitivity(0.0, 1e9, d1, d2, 1e-7)


def test_dephasing_time_examples():
    assert predict_dephasing_time(_sens(d1=21e3 / 1e-6), 0.1e-6, 1.0) == pytest.approx(76e-6, rel=0.05)
    assert predict_dephasing_time(_sens(d2=0.305 / 1e-12), 0.1e-6, 1.0) == pytest.approx(52.0, rel=0.05)
    assert predict_dephasing_time(_sens(d1=1e10, d2=3e11), 0.0) == math.inf
    with pytest.raises(ValueError):
        predict_dephasing_time(_sens(d1=1.0), 1e-7, 0.0)


def test_ou_phase_variance_limits():
    # short times: (2 pi s rms T)^2 ; long times: 2 (2 pi s rms)^2 tau T
    s, rms, tau = 1e10, 1e-7, 1.0
    assert ou_phase_variance(s, rms, tau, 1e-4) == pytest.approx((2 * math.pi * s * rms * 1e-4) ** 2, rel=1e-3)
    assert ou_phase_variance(s, rms, tau, 1e4) == pytest.approx(2 * (2 * math.pi * s * rms) ** 2 * tau * 1e4, rel=1e-3)


def test_trace_csv(tmp_path):
    tr = FieldTrace(0.0, 0.5, [1e-9, 2e-9])
    write_trace_csv(tr, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t_s,delta_B_T"
    assert lines[1] == "0.25,1e-09"
