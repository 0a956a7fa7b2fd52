import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from pcbiso.engine import MeasurementError
from pcbiso.link import (
    BitPattern,
    LinkError,
    check_bits,
    eye_diagram,
    link_metrics,
    nrz_stimulus,
    prbs7,
    propagation_delay,
    simulate_link,
)
from pcbiso.topologies import IsolatorConfig

T = 1e-6
DT = 1e-9


def sampled(bits, shift=0.0, dt=DT, **kw):
    p = BitPattern(bits, **kw)
    t = np.arange(int(round(p.duration / dt)) + 1) * dt
    return p, t, nrz_stimulus(p)(t - shift)


# -- PRBS ------------------------------------------------------------------------------


def test_prbs_empty():
    assert prbs7(1, 0) == []


def test_prbs_zero_seed_rejected():
    with pytest.raises(LinkError):
        prbs7(0, 10)
    with pytest.raises(LinkError):
        prbs7(128, 10)


def test_every_seed_has_period_127():
    for seed in range(1, 128):
        states, back = oracles.lfsr_states(seed)
        assert len(states) == 127 and back == seed
        seq = prbs7(seed, 254)
        period = next(p for p in range(1, 128) if seq[p:p + 127] == seq[:127])
        assert period == 127


def test_one_period_balance():
    for seed in (1, 64, 127):
        seq = prbs7(seed, 127)
        assert sum(seq) == 64 and seq.count(0) == 63


def test_prbs_matches_output_recurrence():
    for seed in range(1, 128):
        assert prbs7(seed, 300) == oracles.prbs_by_polynomial(seed, 300)


# -- NRZ ----------------------------------------------------------------------------------


def test_nrz_single_zero_is_constant():
    s = nrz_stimulus(BitPattern([0]))
    assert s(0.0) == 0.0 and s(0.7e-6) == 0.0 and s(5e-6) == 0.0


def test_nrz_one_then_zero():
    s = nrz_stimulus(BitPattern([1, 0]))
    assert s(0.0) == 5.0 and s(0.999e-6) == 5.0
    assert s(1.0e-6 + 10e-9) == 0.0 and s(2e-6) == 0.0


def test_nrz_prbs_duration():
    p = BitPattern(prbs7(1, 127))
    assert p.duration == pytest.approx(127e-6, rel=1e-12)
    assert nrz_stimulus(p).duration == pytest.approx(127e-6, rel=1e-12)


@pytest.mark.parametrize("kw", [dict(bit_rate=0.0), dict(rise_fall=0.25e-6), dict(rise_fall=0.0)])
def test_pattern_invariants(kw):
    with pytest.raises(LinkError):
        BitPattern([0, 1], **kw)


def test_pattern_rejects_non_binary():
    with pytest.raises(LinkError):
        BitPattern([0, 2])


# -- propagation delay ---------------------------------------------------------------------


BITS = prbs7(5, 40)


def test_synthetic_200ns_shift():
    _, t, x = sampled(BITS)
    _, _, y = sampled(BITS, shift=200e-9)
    d = propagation_delay(t, x, y)
    assert d.mean == pytest.approx(200e-9, abs=DT)
    assert d.rise.max == pytest.approx(200e-9, abs=DT)
    assert d.lost_edges == 0


def test_identity_has_zero_delay():
    _, t, x = sampled(BITS)
    d = propagation_delay(t, x, x)
    assert d.mean == pytest.approx(0.0, abs=1e-15)


def test_inverted_output_polarity():
    _, t, x = sampled(BITS)
    _, _, y = sampled(BITS, shift=150e-9)
    d = propagation_delay(t, x, 5.0 - y, output_inverted=True)
    assert d.mean == pytest.approx(150e-9, abs=DT)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 400e-9), st.floats(0, 400e-9))
def test_delay_shift_equivariance(a, b):
    _, t, x = sampled(BITS)
    da = propagation_delay(t, x, sampled(BITS, shift=a)[2])
    db = propagation_delay(t, x, sampled(BITS, shift=b)[2])
    assert db.rise.mean - da.rise.mean == pytest.approx(b - a, abs=1e-12)
    assert db.fall.mean - da.fall.mean == pytest.approx(b - a, abs=1e-12)


def test_missing_output_edges_are_counted():
    _, t, x = sampled(BITS)
    y = x.copy()
    y[t > 20e-6] = y[t <= 20e-6][-1]
    d = propagation_delay(t, x, y)
    n_edges = sum(a != b for a, b in zip(BITS, BITS[1:]))
    late = sum(a != b for k, (a, b) in enumerate(zip(BITS, BITS[1:])) if k + 1 >= 20)
    assert d.lost_edges == late
    assert d.rise.count + d.fall.count == n_edges - late


def test_no_input_edges_is_an_error():
    t = np.arange(100) * DT
    with pytest.raises(MeasurementError):
        propagation_delay(t, np.zeros(100), np.zeros(100))


# -- eye ---------------------------------------------------------------------------------


def square_nrz(bits, spu=100):
    t = np.arange(len(bits) * spu) * (T / spu)
    return t, np.repeat(np.asarray(bits, float) * 5.0, spu)


def test_ideal_square_eye():
    t, y = square_nrz(prbs7(3, 40))
    eye = eye_diagram(t, y, T)
    assert eye.height == pytest.approx(5.0)
    assert eye.width == pytest.approx(T)


def test_constant_trace_has_no_eye():
    t = np.arange(30_000) * DT
    with pytest.raises(MeasurementError, match="no transitions; eye undefined"):
        eye_diagram(t, np.full_like(t, 5.0), T)


def test_eye_needs_twenty_intervals():
    t, y = square_nrz(prbs7(3, 10))
    with pytest.raises(MeasurementError, match="20"):
        eye_diagram(t, y, T)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 2.0), st.floats(0, 2.0))
def test_eye_height_monotone_in_ramp_noise(a1, a2):
    lo, hi = sorted((a1, a2))
    t, y = square_nrz(prbs7(9, 40))
    ramp = t / t[-1]
    h_lo = eye_diagram(t, y + lo * ramp, T).height
    h_hi = eye_diagram(t, y + hi * ramp, T).height
    assert h_hi <= h_lo + 1e-12


def test_eye_csv_columns():
    t, y = square_nrz(prbs7(3, 25), spu=10)
    eye = eye_diagram(t, y, T)
    buf = io.StringIO()
    eye.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "phase_s,voltage_v,bit_class"
    assert len(lines) == 1 + eye.folded.size


# -- bit checking ---------------------------------------------------------------------------


def test_clean_inverted_copy_has_no_errors():
    p, t, x = sampled(prbs7(11, 60))
    r = check_bits(t, 5.0 - x, p, output_inverted=True)
    assert r.errors == 0 and r.checked == 60 and r.latency_bits == 0


def test_one_flipped_bit_is_one_error():
    bits = prbs7(11, 60)
    p, t, x = sampled(bits)
    flipped = list(bits)
    flipped[17] ^= 1
    _, _, y = sampled(flipped)
    r = check_bits(t, y, p)
    assert r.errors == 1 and r.error_positions == (17,)


def test_latency_is_resolved():
    bits = prbs7(2, 80)
    p, t, x = sampled(bits)
    _, _, y = sampled(bits, shift=3 * T)
    t_long = np.arange(int(round(83 * T / DT)) + 1) * DT
    y_long = nrz_stimulus(p)(t_long - 3 * T)
    r = check_bits(t_long, y_long, p)
    assert r.latency_bits == 3 and r.errors == 0


def test_loopback_all_seeds_error_free():
    for seed in range(1, 128):
        p, t, x = sampled(prbs7(seed, 127), dt=10e-9)
        r = check_bits(t, x, p)
        assert r.errors == 0 and r.checked == 127, seed


def test_periodic_pattern_is_ambiguous():
    p, t, x = sampled([0, 1] * 20)
    with pytest.raises(LinkError, match="ambiguous"):
        check_bits(t, x, p)


def test_sample_offset_must_lie_in_period():
    p, t, x = sampled(prbs7(1, 30))
    with pytest.raises(LinkError):
        check_bits(t, x, p, sample_offset=T)


# -- simulated isolator (one PRBS period) ---------------------------------------------------


@pytest.fixture(scope="module")
def link127():
    pat = BitPattern(prbs7(127, 127))
    return link_metrics(simulate_link(IsolatorConfig(), pat), pat)


def test_simulated_delay_in_band(link127):
    assert 100e-9 <= link127.prop_delay_mean <= 400e-9
    assert link127.lost_edges == 0


def test_simulated_eye_open(link127):
    assert 2.5 <= link127.eye_height <= 5.0
    assert 0.5e-6 <= link127.eye_width <= 1e-6


def test_simulated_bits_error_free(link127):
    assert link127.bit_errors == 0 and link127.bits_checked == 127
