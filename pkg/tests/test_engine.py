import io
import math

import numpy as np
import pytest

import oracles
from pcbiso.engine import (
    Capacitor,
    Circuit,
    CircuitError,
    CoupledInductors,
    Diode,
    Inductor,
    Resistor,
    SimOptions,
    SimulationError,
    Stimulus,
    Trace,
    VoltageSource,
    assemble,
    default_dt_max,
    measure_frequency,
    transient,
)
from pcbiso.devices import DiodeParams
from pcbiso.magnetics import TransformerModel
from pcbiso.topologies import IsolatorConfig, build_isolator

# -- Stimulus -------------------------------------------------------------------------


def test_stimulus_interpolates_and_holds():
    s = Stimulus(((0.0, 0.0), (1e-6, 1.0), (2e-6, 1.0)))
    assert s(0.5e-6) == pytest.approx(0.5)
    assert s(5e-6) == 1.0
    assert s.duration == 2e-6


@pytest.mark.parametrize("pts", [(), ((0.0, 0.0), (0.0, 1.0)), ((1.0, 0.0), (0.5, 1.0)), ((0.0, math.nan),)])
def test_stimulus_invariants(pts):
    with pytest.raises(CircuitError):
        Stimulus(pts)


def test_sim_options_invariants():
    with pytest.raises(CircuitError):
        SimOptions(t_stop=1e-6, dt_max=2e-6)
    with pytest.raises(CircuitError):
        SimOptions(t_stop=1e-6, dt_max=1e-9, dt_min=2e-9)
    assert SimOptions(t_stop=1e-6, dt_max=1e-9).dt_min == pytest.approx(1e-9 / 4096)


def test_default_dt_max():
    assert default_dt_max(1e-6, 20e6) == pytest.approx(0.5e-9)
    assert default_dt_max(None, 20e6) == pytest.approx(1.25e-9)
    with pytest.raises(ValueError):
        default_dt_max()


# -- assembly -------------------------------------------------------------------------


def divider():
    return Circuit([
        VoltageSource("V1", "in", "0", Stimulus.constant(5.0)),
        Resistor("R1", "in", "mid", 1e3),
        Resistor("R2", "mid", "0", 1e3),
    ])


def test_divider_has_one_free_node():
    assert assemble(divider()).free_nodes == ["mid"]


def test_isolator_unknowns_include_inductor_currents_and_charges():
    s = assemble(build_isolator(IsolatorConfig(), Stimulus.constant(0.0)))
    assert sum(u.startswith("i(XT.") for u in s.unknowns) == 2
    assert sum(u.startswith("q(") for u in s.unknowns) == 2


def test_passivity_guard():
    tm = TransformerModel(1e-6, 1e-6, 1.2e-6)
    c = Circuit([
        VoltageSource("V1", "a", "0", Stimulus.constant(1.0)),
        Resistor("R1", "a", "p", 10.0),
        CoupledInductors("X1", "p", "0", "s", "0", tm),
        Resistor("R2", "s", "0", 10.0),
    ])
    with pytest.raises(CircuitError, match="X1"):
        assemble(c)


def test_floating_subcircuit_names_the_node():
    c = Circuit([
        VoltageSource("V1", "a", "0", Stimulus.constant(1.0)),
        Resistor("R1", "a", "0", 1e3),
        Capacitor("C1", "x", "y", 1e-9),
        Resistor("R2", "x", "y", 1e3),
    ])
    with pytest.raises(CircuitError, match="'x'|'y'"):
        assemble(c)


def test_duplicate_names_rejected():
    with pytest.raises(CircuitError):
        Circuit([Resistor("R1", "a", "0", 1.0), Resistor("R1", "a", "0", 2.0)])


def test_needs_a_source_or_initial_condition():
    c = Circuit([Resistor("R1", "a", "0", 1.0), Capacitor("C1", "a", "0", 1e-9)])
    with pytest.raises(CircuitError):
        transient(c, SimOptions(t_stop=1e-6, dt_max=1e-8))


# -- analytic oracles -----------------------------------------------------------------


def test_rc_step_oracle():
    c = Circuit([
        VoltageSource("V1", "in", "0", Stimulus(((0.0, 1.0),))),
        Resistor("R1", "in", "out", 1e3),
        Capacitor("C1", "out", "0", 1e-9),
    ])
    tr = transient(c, SimOptions(t_stop=2e-6, dt_max=1e-9))
    v = float(np.interp(1e-6, tr.time, tr["out"]))
    assert v == pytest.approx(oracles.rc_step(1e-6, 1e3, 1e-9), abs=1e-3)
    assert v == pytest.approx(0.6321, abs=1e-3)


def lc_tank(r_parallel=None):
    els = [Inductor("L1", "t", "0", 1.6e-6), Capacitor("C1", "t", "0", 70e-12)]
    if r_parallel:
        els.append(Resistor("RP", "t", "0", r_parallel))
    return Circuit(els)


def test_lc_ringing_frequency():
    tr = transient(lc_tank(), SimOptions(t_stop=2e-6, dt_max=0.5e-9), initial={"i(L1)": 1e-3})
    f = measure_frequency(tr.time, tr["t"])
    assert f.mean == pytest.approx(oracles.lc_frequency(1.6e-6, 70e-12), rel=0.01)
    assert f.mean == pytest.approx(15.04e6, rel=0.01)


def _energy(tr):
    return 0.5 * 1.6e-6 * tr["i(L1)"] ** 2 + 0.5 * 70e-12 * tr["t"] ** 2


@pytest.mark.parametrize("r", [None, 2e3])
def test_source_free_energy_non_increasing_per_cycle(r):
    tr = transient(lc_tank(r), SimOptions(t_stop=2e-6, dt_max=0.5e-9), initial={"i(L1)": 1e-3})
    e = _energy(tr)
    per = int(round(1 / 15.04e6 / tr.dt))
    assert np.all(e[per:] <= e[:-per] * 1.01)
    if r is None:
        assert e[-1] == pytest.approx(e[0], rel=0.01)
    else:
        assert e[-1] < 0.5 * e[0]


def test_divider_midpoint_constant():
    tr = transient(divider(), SimOptions(t_stop=1e-6, dt_max=1e-8))
    assert np.allclose(tr["mid"], 2.5, atol=1e-9)
    assert np.allclose(tr["i(V1)"], 2.5e-3, rtol=1e-9)


def test_start_is_consistent_for_algebraic_nodes_only():
    # the resistive input node follows the source at t=0, the capacitor does not
    c = Circuit([
        VoltageSource("V1", "in", "0", Stimulus.constant(1.0)),
        Resistor("R0", "in", "buf", 1e3),
        Resistor("R0b", "buf", "0", 1e3),
        Resistor("R1", "buf", "out", 1e3),
        Capacitor("C1", "out", "0", 1e-9),
    ])
    tr = transient(c, SimOptions(t_stop=1e-7, dt_max=1e-9))
    assert tr["out"][0] == 0.0
    assert tr["buf"][0] == pytest.approx(1 / 3, rel=1e-6)


def test_coupled_inductor_energy_nonnegative():
    tm = TransformerModel.from_coupling(1.44e-6, 1.44e-6, 0.56)
    c = Circuit([
        VoltageSource("V1", "a", "0", Stimulus(((0.0, 0.0), (1e-8, 1.0), (3e-7, 1.0), (3.1e-7, -1.0)))),
        Resistor("R1", "a", "p", 50.0),
        CoupledInductors("X1", "p", "0", "s", "0", tm),
        Resistor("R2", "s", "0", 100.0),
        Capacitor("C2", "s", "0", 20e-12),
    ])
    tr = transient(c, SimOptions(t_stop=1e-6, dt_max=0.5e-9))
    i1, i2 = tr["i(X1.1)"], tr["i(X1.2)"]
    e = 0.5 * (tm.l_primary * i1**2 + 2 * tm.mutual * i1 * i2 + tm.l_secondary * i2**2)
    assert np.all(e >= -1e-24)
    assert np.max(np.abs(i2)) > 0  # energy actually transferred


def test_diode_rectifier_blocks_reverse():
    c = Circuit([
        VoltageSource("V1", "a", "0", Stimulus(((0.0, 0.0), (1e-7, 5.0), (2e-7, -5.0)))),
        Diode("D1", "a", "k"),
        Resistor("RL", "k", "0", 1e3),
    ])
    tr = transient(c, SimOptions(t_stop=4e-7, dt_max=1e-9))
    assert tr["k"].max() > 3.5
    assert tr["k"][-1] > -1e-3


# -- engine properties -----------------------------------------------------------------


def test_determinism_bit_identical():
    c = build_isolator(IsolatorConfig(), Stimulus.step(5.0))
    opts = SimOptions(t_stop=1e-6, dt_max=1.25e-9)
    a, b = transient(c, opts), transient(c, opts)
    assert a.channels.keys() == b.channels.keys()
    for k in a.channels:
        assert np.array_equal(a[k], b[k])


def test_kcl_residual_bound():
    c = build_isolator(IsolatorConfig(), Stimulus.step(5.0))
    tr = transient(c, SimOptions(t_stop=1e-6, dt_max=1.25e-9, check_residual=True, probes=("DY",)))
    assert tr.metadata["max_kcl_residual"] < 1e-9  # newton_tol * 1e-3 amps


def test_kick_recorded_and_isolator_has_no_floating_nodes():
    tr = transient(build_isolator(IsolatorConfig(), Stimulus.step(5.0)),
                   SimOptions(t_stop=1e-7, dt_max=1.25e-9, probes=("DY",)))
    assert tr.metadata["kick"]["amps"] == 1e-6
    assert tr.metadata["floating_node_caps"] == []


def test_node_between_capless_diodes_gets_filler_cap():
    bare = DiodeParams(c_junction=0.0)
    c = Circuit([
        VoltageSource("V1", "a", "0", Stimulus.step(1.0)),
        Diode("D1", "a", "x", bare),
        Diode("D2", "x", "0", bare),
    ])
    s = assemble(c)
    assert s.floating_caps == ["x"]
    i = s.index("x")
    assert s.C[i, i] == pytest.approx(1e-12)


def test_non_convergence_reports_time_and_unknown():
    c = build_isolator(IsolatorConfig(), Stimulus.step(5.0))
    with pytest.raises(SimulationError) as err:
        transient(c, SimOptions(t_stop=2e-6, dt_max=1.25e-9, dt_min=1e-10, newton_max_iter=2))
    assert err.value.time is not None and err.value.time > 0
    assert err.value.unknown


def test_probes_restrict_channels_but_keep_sources():
    tr = transient(divider(), SimOptions(t_stop=1e-7, dt_max=1e-8, probes=("mid",)))
    assert set(tr.channels) == {"mid", "i(V1)", "v(V1)"}
    assert np.allclose(tr["i(V1)"], 2.5e-3)
    with pytest.raises(CircuitError):
        transient(divider(), SimOptions(t_stop=1e-7, dt_max=1e-8, probes=("nope",)))


def test_uniform_output_grid_and_decimation():
    tr = transient(divider(), SimOptions(t_stop=1e-6, dt_max=1e-8, output_decimation=5))
    assert tr.dt == pytest.approx(5e-8)
    assert np.allclose(np.diff(tr.time), 5e-8)
    assert len(tr.time) == 21


# -- Trace I/O -------------------------------------------------------------------------


def test_trace_csv_roundtrip(tmp_path):
    tr = transient(divider(), SimOptions(t_stop=1e-7, dt_max=1e-8))
    p = tmp_path / "t.csv"
    tr.to_csv(p)
    back = Trace.from_csv(p)
    assert np.array_equal(back.time, tr.time)
    for k in tr.channels:
        assert np.array_equal(back[k], tr[k])
    buf = io.StringIO()
    tr.to_csv(buf, ["mid"])
    assert buf.getvalue().splitlines()[0] == "time_s,mid"


def test_trace_length_invariant():
    with pytest.raises(ValueError):
        Trace(np.arange(3.0), {"a": np.arange(2.0)})
