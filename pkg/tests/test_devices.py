import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pcbiso.devices import (
    V_THERMAL,
    BjtParams,
    DiodeParams,
    MosfetParams,
    bjt_base_eval,
    bjt_collector_eval,
    bjt_ic,
    bjt_storage_step,
    diode_eval,
    diode_i,
    effective_tank_capacitance,
    lc_frequency,
    mosfet_eval,
    mosfet_ids,
    simulate_release_delay,
    storage_release_delay,
)

MOS = MosfetParams()
BJT = BjtParams()


# -- MOSFET -------------------------------------------------------------------------


def test_mosfet_cutoff():
    # channel off; only the body diode's reverse leakage remains
    assert mosfet_ids(MOS, 0.0, 5.0) == pytest.approx(MOS.body_diode.i_s, rel=1e-9)


def test_mosfet_saturation_value():
    assert mosfet_ids(MOS, 4.1, 5.0) == pytest.approx(0.5 * 0.08 * 2.0**2 * 1.05, rel=1e-12)
    assert mosfet_ids(MOS, 4.1, 5.0) == pytest.approx(0.168, rel=1e-12)


def test_body_diode_conducts_for_negative_vds():
    i = mosfet_ids(MOS, 0.0, -0.7)
    assert i < 0
    assert i == pytest.approx(-diode_i(MOS.body_diode, 0.7), rel=1e-9)


def _eval(vgs, vds):
    bd = MOS.body_diode
    return mosfet_eval(MOS.vth, MOS.kn, MOS.lambda_, bd.i_s, bd.n_ideality, vgs, vds)


def test_mosfet_continuity_dense_sweep():
    # a jump shows up as a step far larger than the local slope allows
    vds = np.linspace(-1.0, 6.0, 7001)
    for vgs in (0.0, 2.0, 2.1, 2.5, 3.5, 5.0):
        ev = np.array([_eval(vgs, v) for v in vds])
        bound = 1.5 * np.maximum(np.abs(ev[:-1, 2]), np.abs(ev[1:, 2])) * np.diff(vds) + 1e-12
        assert np.all(np.abs(np.diff(ev[:, 0])) <= bound)
    vgs = np.linspace(0, 6, 6001)
    for v in (-0.4, 0.05, 1.0, 5.0):
        ev = np.array([_eval(g, v) for g in vgs])
        bound = 1.5 * np.maximum(np.abs(ev[:-1, 1]), np.abs(ev[1:, 1])) * np.diff(vgs) + 1e-12
        assert np.all(np.abs(np.diff(ev[:, 0])) <= bound)


def test_bjt_collector_continuity():
    vce = np.linspace(-0.5, 5, 5501)
    ic = np.array([bjt_collector_eval(BJT.beta_f, BJT.vce_sat, 1e-5, v)[0] for v in vce])
    assert np.max(np.abs(np.diff(ic))) < BJT.beta_f * 1e-5 / (0.5 * BJT.vce_sat) * (vce[1] - vce[0]) * 1.01


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 12))
def test_mosfet_monotone_in_vgs(g1, g2, vds):
    lo, hi = sorted((g1, g2))
    assert mosfet_ids(MOS, hi, vds) >= mosfet_ids(MOS, lo, vds)


@pytest.mark.parametrize("vgs, vds", [(3.0, 0.3), (3.0, 2.0), (4.5, 6.0), (0.0, -0.6), (3.0, -0.2)])
def test_mosfet_derivatives_match_finite_difference(vgs, vds):
    f = _eval
    _, gm, gds = f(vgs, vds)
    h = 1e-6
    assert gm == pytest.approx((f(vgs + h, vds)[0] - f(vgs - h, vds)[0]) / (2 * h), rel=1e-4, abs=1e-9)
    assert gds == pytest.approx((f(vgs, vds + h)[0] - f(vgs, vds - h)[0]) / (2 * h), rel=1e-4, abs=1e-9)


# -- diode ------------------------------------------------------------------------------


def test_diode_values():
    p = DiodeParams()
    assert diode_i(p, 0.0) == 0.0
    assert diode_i(p, 0.7) == pytest.approx(1e-12 * (math.exp(0.7 / (1.5 * V_THERMAL)) - 1), rel=1e-12)
    assert diode_i(p, 0.7) == pytest.approx(6.9e-5, rel=0.02)
    assert diode_i(p, -5.0) == pytest.approx(-1e-12, rel=1e-9)


def test_diode_linearized_above_one_volt():
    p = DiodeParams()
    i1, g1 = diode_eval(p.i_s, p.n_ideality, 1.0)
    assert diode_i(p, 1.5) == pytest.approx(i1 + g1 * 0.5, rel=1e-9)


@given(st.floats(-20, 20))
def test_diode_leakage_passivity(v):
    p = DiodeParams()
    assert diode_i(p, v) + diode_i(p, -v) >= -2 * p.i_s


@given(st.floats(-5, 3), st.floats(-5, 3))
def test_diode_monotone(a, b):
    lo, hi = sorted((a, b))
    assert diode_i(DiodeParams(), hi) >= diode_i(DiodeParams(), lo)


@pytest.mark.parametrize("kw", [dict(i_s=0.0), dict(n_ideality=0.9), dict(c_junction=-1e-12)])
def test_diode_param_invariants(kw):
    with pytest.raises(ValueError):
        DiodeParams(**kw)


# -- BJT --------------------------------------------------------------------------------


def test_bjt_off():
    assert bjt_ic(BJT, 0.0, 5.0).ic < 1e-12


def test_bjt_forward_active():
    ref = 6.7e-15 * math.exp(0.65 / 0.02585)
    assert ref == pytest.approx(0.56e-3, rel=0.02)
    assert bjt_ic(BJT, 0.65, 5.0).ic == pytest.approx(ref, rel=1e-3)


def test_bjt_saturation_flag_and_clamp():
    op = bjt_ic(BJT, 0.7, 0.05)
    assert op.saturated
    assert op.ic < bjt_ic(BJT, 0.7, 5.0).ic
    assert op.ic <= BJT.beta_f * op.ib * (1 + 1e-12)


@pytest.mark.parametrize("vbe, vce", [(0.6, 3.0), (0.7, 0.03), (0.95, 0.2)])
def test_bjt_derivatives_match_finite_difference(vbe, vce):
    ib, dib = bjt_base_eval(BJT.i_s, BJT.beta_f, BJT.v_t, vbe)
    h = 1e-7
    num = (bjt_base_eval(BJT.i_s, BJT.beta_f, BJT.v_t, vbe + h)[0] - bjt_base_eval(BJT.i_s, BJT.beta_f, BJT.v_t, vbe - h)[0]) / (2 * h)
    assert dib == pytest.approx(num, rel=1e-4)
    ic, d_drive, d_vce = bjt_collector_eval(BJT.beta_f, BJT.vce_sat, 1e-5, vce)
    num_v = (bjt_collector_eval(BJT.beta_f, BJT.vce_sat, 1e-5, vce + h)[0]
             - bjt_collector_eval(BJT.beta_f, BJT.vce_sat, 1e-5, vce - h)[0]) / (2 * h)
    assert d_vce == pytest.approx(num_v, rel=1e-4, abs=1e-12)
    assert d_drive == pytest.approx(ic / 1e-5, rel=1e-9)


def test_storage_no_charge_stays_zero():
    assert bjt_storage_step(0.0, 0.0, 1e-9, BJT) == 0.0


def test_storage_release_at_1ma_forced_beta_10():
    d = storage_release_delay(BJT, ib_on=0.1e-3, ic_load=1e-3)
    assert 70e-9 <= d <= 130e-9
    assert d == pytest.approx(100e-9, rel=1e-9)
    # brute force stepping of the charge equation agrees
    assert simulate_release_delay(BJT, 0.1e-3, 1e-3) == pytest.approx(d, rel=1e-3)


def test_doubling_tau_doubles_release_delay():
    p2 = BjtParams(storage_tau=2 * BJT.storage_tau)
    d1 = simulate_release_delay(BJT, 0.1e-3, 1e-3)
    d2 = simulate_release_delay(p2, 0.1e-3, 1e-3)
    assert d2 == pytest.approx(2 * d1, rel=1e-3)


def test_storage_step_requires_positive_dt():
    with pytest.raises(ValueError):
        bjt_storage_step(0.0, 1e-4, 0.0, BJT)


# -- tank capacitance -------------------------------------------------------------


def test_zero_capacitances():
    assert effective_tank_capacitance(MosfetParams(cgs=0, cgd=0, cds=0)) == 0.0


def test_documented_composition():
    p = MosfetParams(cds=10e-12, cgs=25e-12, cgd=5e-12)
    assert effective_tank_capacitance(p) == pytest.approx(55e-12, rel=1e-12)


def test_default_within_band_and_frequency_targets():
    c = effective_tank_capacitance(MOS)
    assert 45e-12 <= c <= 100e-12
    assert 13e6 <= lc_frequency(1.6e-6, c) <= 17e6
    assert 26e6 <= lc_frequency(0.4e-6, c) <= 34e6
    assert lc_frequency(0.4e-6, c) >= 25e6


def test_capacitance_scaling():
    p4 = MosfetParams(cgs=4 * MOS.cgs, cgd=4 * MOS.cgd, cds=4 * MOS.cds)
    c1, c4 = effective_tank_capacitance(MOS), effective_tank_capacitance(p4)
    assert c4 == pytest.approx(4 * c1, rel=1e-12)
    assert lc_frequency(1.6e-6, c4) == pytest.approx(0.5 * lc_frequency(1.6e-6, c1), rel=1e-12)


def test_unknown_topology_rejected():
    with pytest.raises(ValueError):
        effective_tank_capacitance(MOS, "common_source")
