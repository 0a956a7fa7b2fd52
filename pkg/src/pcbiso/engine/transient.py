"""Modified nodal analysis assembly and transient driver."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernel
from .circuit import (
    Bjt,
    Capacitor,
    Circuit,
    CircuitError,
    CoupledInductors,
    Diode,
    Inductor,
    Mosfet,
    Resistor,
    SimulationError,
    Trace,
    VoltageSource,
    terminals,
)

GMIN = 1e-12  # siemens, every node to ground
C_FLOAT = 1e-12  # farads, added to floating nodes (no capacitor and no linear branch)
KICK_AMPS = 1e-6


@dataclass(frozen=True)
class SimOptions:
    t_stop: float
    dt_max: float
    dt_min: float | None = None
    newton_tol: float = 1e-6
    newton_max_iter: int = 50
    output_decimation: int = 1
    probes: tuple[str, ...] | None = None
    reltol: float = 1e-6
    v_limit: float = 1.0
    check_residual: bool = False

    def __post_init__(self):
        if self.dt_min is None:
            object.__setattr__(self, "dt_min", self.dt_max / 4096)
        if not 0 < self.dt_min <= self.dt_max < self.t_stop:
            raise CircuitError("need 0 < dt_min <= dt_max < t_stop")
        if self.output_decimation < 1:
            raise CircuitError("output_decimation must be >= 1")

    @property
    def dt_out(self) -> float:
        return self.dt_max * self.output_decimation


def default_dt_max(bit_period: float | None = None, f_osc: float | None = None) -> float:
    """Smaller of bit_period/2000 and one fortieth of an oscillation period."""
    cands = []
    if bit_period:
        cands.append(bit_period / 2000)
    if f_osc:
        cands.append(1.0 / (40 * f_osc))
    if not cands:
        raise ValueError("need a bit period or an oscillation frequency")
    return min(cands)


@dataclass
class System:
    """Assembled MNA system ``G x + f(x) - b(t) + C dx/dt = 0``."""

    circuit: Circuit
    unknowns: list[str]
    nodes: list[str]
    G: np.ndarray
    C: np.ndarray
    src_names: list[str]
    src_row: np.ndarray
    src_start: np.ndarray
    src_len: np.ndarray
    pwl_t: np.ndarray
    pwl_v: np.ndarray
    mos_nodes: np.ndarray
    mos_par: np.ndarray
    bjt_names: list[str]
    bjt_nodes: np.ndarray
    bjt_q: np.ndarray
    bjt_par: np.ndarray
    dio_nodes: np.ndarray
    dio_par: np.ndarray
    breakpoints: np.ndarray
    floating_caps: list[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.unknowns)

    def index(self, name: str) -> int:
        return self.unknowns.index(name)

    @property
    def free_nodes(self) -> list[str]:
        """Nodes not pinned to ground by a voltage source."""
        pinned = {
            e.p
            for e in self.circuit.of_type(VoltageSource)
            if e.m == self.circuit.ground
        } | {
            e.m
            for e in self.circuit.of_type(VoltageSource)
            if e.p == self.circuit.ground
        }
        return [n for n in self.nodes if n not in pinned]

    def _arrays(self):
        return (
            self.G, self.C, self.src_row, self.src_start, self.src_len, self.pwl_t, self.pwl_v,
            self.mos_nodes, self.mos_par, self.bjt_nodes, self.bjt_q, self.bjt_par,
            self.dio_nodes, self.dio_par,
        )

    def evaluate(self, x, t, alpha=0.0, x_prev=None, xdot_prev=None):
        """Residual and Jacobian at ``x``.

        With ``alpha = 0`` the reactive terms vanish and this is the DC
        residual; otherwise ``dx/dt = alpha (x - x_prev) - xdot_prev``.
        """
        x = np.asarray(x, dtype=float)
        x_prev = x if x_prev is None else np.asarray(x_prev, dtype=float)
        xdot_prev = np.zeros_like(x) if xdot_prev is None else np.asarray(xdot_prev, dtype=float)
        return kernel.residual_jacobian(
            x, float(t), float(alpha), 1.0, x_prev, xdot_prev, np.zeros_like(x), *self._arrays()
        )


def _check_dc_paths(circuit: Circuit, nodes: list[str]) -> None:
    parent = {n: n for n in nodes}
    parent[circuit.ground] = circuit.ground

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        parent[find(a)] = find(b)

    for e in circuit.elements:
        if isinstance(e, (Resistor, Inductor, VoltageSource)):
            union(e.a if not isinstance(e, VoltageSource) else e.p,
                  e.b if not isinstance(e, VoltageSource) else e.m)
        elif isinstance(e, CoupledInductors):
            union(e.a1, e.b1)
            union(e.a2, e.b2)
        elif isinstance(e, Diode):
            union(e.a, e.k)
        elif isinstance(e, Mosfet):
            union(e.d, e.s)
        elif isinstance(e, Bjt):
            union(e.b, e.e)
            union(e.c, e.e)
    g = find(circuit.ground)
    for n in nodes:
        if find(n) != g:
            raise CircuitError(f"node {n!r} has no DC path to ground ({circuit.ground!r})")


def assemble(circuit: Circuit) -> System:
    """Build the MNA matrices and device tables for ``circuit``."""
    nodes = circuit.nodes()
    gnd = circuit.ground
    if not nodes:
        raise CircuitError("circuit has no nodes besides ground")
    _check_dc_paths(circuit, nodes)

    unknowns = list(nodes)
    branch_of: dict[str, int] = {}
    for e in circuit.elements:
        if isinstance(e, Inductor):
            branch_of[e.name] = len(unknowns)
            unknowns.append(f"i({e.name})")
        elif isinstance(e, CoupledInductors):
            tm = e.transformer
            if tm.mutual**2 >= tm.l_primary * tm.l_secondary:
                raise CircuitError(
                    f"{e.name}: coupling k={tm.coupling_k:.4g} must be < 1 (passivity)"
                )
            branch_of[e.name] = len(unknowns)
            unknowns += [f"i({e.name}.1)", f"i({e.name}.2)"]
    for e in circuit.of_type(VoltageSource):
        branch_of[e.name] = len(unknowns)
        unknowns.append(f"i({e.name})")
    bjts = circuit.of_type(Bjt)
    for e in bjts:
        branch_of[e.name] = len(unknowns)
        unknowns.append(f"q({e.name})")

    n = len(unknowns)
    idx = {name: i for i, name in enumerate(nodes)}
    idx[gnd] = -1
    G = np.zeros((n, n))
    C = np.zeros((n, n))

    def stamp2(M, a, b, val):
        ia, ib = idx[a], idx[b]
        if ia >= 0:
            M[ia, ia] += val
        if ib >= 0:
            M[ib, ib] += val
        if ia >= 0 and ib >= 0:
            M[ia, ib] -= val
            M[ib, ia] -= val

    def incidence(a, b, col):
        # branch current ``col`` leaves node a and enters node b
        ia, ib = idx[a], idx[b]
        if ia >= 0:
            G[ia, col] += 1.0
            G[col, ia] += 1.0
        if ib >= 0:
            G[ib, col] -= 1.0
            G[col, ib] -= 1.0

    has_cap = set()

    def cap(a, b, val):
        if val > 0:
            stamp2(C, a, b, val)
            has_cap.update((a, b))

    for i in range(len(nodes)):
        G[i, i] += GMIN

    src_names, src_row, pwl_t, pwl_v, src_start, src_len = [], [], [], [], [], []
    mos_nodes, mos_par, bjt_nodes, bjt_q, bjt_par, dio_nodes, dio_par = [], [], [], [], [], [], []
    breakpoints = set()
    for e in circuit.elements:
        if isinstance(e, Resistor):
            if not e.ohms > 0:
                raise CircuitError(f"{e.name}: resistance must be > 0")
            stamp2(G, e.a, e.b, 1.0 / e.ohms)
        elif isinstance(e, Capacitor):
            if e.farads < 0:
                raise CircuitError(f"{e.name}: capacitance must be >= 0")
            cap(e.a, e.b, e.farads)
        elif isinstance(e, Inductor):
            if not e.henries > 0:
                raise CircuitError(f"{e.name}: inductance must be > 0")
            k = branch_of[e.name]
            incidence(e.a, e.b, k)
            G[k, k] -= e.r_series
            C[k, k] -= e.henries
        elif isinstance(e, CoupledInductors):
            tm = e.transformer
            k1 = branch_of[e.name]
            k2 = k1 + 1
            incidence(e.a1, e.b1, k1)
            incidence(e.a2, e.b2, k2)
            G[k1, k1] -= tm.r_series_primary
            G[k2, k2] -= tm.r_series_secondary
            C[k1, k1] -= tm.l_primary
            C[k2, k2] -= tm.l_secondary
            C[k1, k2] -= tm.mutual
            C[k2, k1] -= tm.mutual
        elif isinstance(e, VoltageSource):
            k = branch_of[e.name]
            incidence(e.p, e.m, k)
            src_names.append(e.name)
            src_row.append(k)
            src_start.append(len(pwl_t))
            src_len.append(len(e.stimulus.points))
            for t, v in e.stimulus.points:
                pwl_t.append(t)
                pwl_v.append(v)
                if t > 0:
                    breakpoints.add(t)
        elif isinstance(e, Mosfet):
            p = e.params
            mos_nodes.append((idx[e.d], idx[e.g], idx[e.s]))
            mos_par.append((p.vth, p.kn, p.lambda_, p.body_diode.i_s, p.body_diode.n_ideality))
            cap(e.g, e.s, p.cgs)
            cap(e.g, e.d, p.cgd)
            cap(e.d, e.s, p.cds)
        elif isinstance(e, Bjt):
            p = e.params
            k = branch_of[e.name]
            bjt_nodes.append((idx[e.c], idx[e.b], idx[e.e]))
            bjt_q.append(k)
            bjt_par.append((p.i_s, p.beta_f, p.v_t, p.vce_sat, p.storage_tau))
            G[k, k] += 1.0
            C[k, k] += p.storage_tau
            cap(e.b, e.e, p.c_junction)
            cap(e.b, e.c, p.c_junction)
        elif isinstance(e, Diode):
            p = e.params
            dio_nodes.append((idx[e.a], idx[e.k]))
            dio_par.append((p.i_s, p.n_ideality))
            cap(e.a, e.k, p.c_junction)
        else:  # pragma: no cover - terminals() already rejects unknown types
            raise CircuitError(f"unsupported element {e!r}")

    # nodes touched only by device terminals (gates, bases) have no branch that
    # fixes their voltage algebraically; a small capacitor makes them states
    linked = set()
    for e in circuit.elements:
        if isinstance(e, (Resistor, Inductor, CoupledInductors, VoltageSource)):
            linked.update(terminals(e))
    floating = [nd for nd in nodes if nd not in has_cap and nd not in linked]
    for nd in floating:
        C[idx[nd], idx[nd]] += C_FLOAT

    def arr(rows, width, dtype):
        a = np.array(rows, dtype=dtype)
        return a.reshape(len(rows), width)

    return System(
        circuit=circuit,
        unknowns=unknowns,
        nodes=nodes,
        G=G,
        C=C,
        src_names=src_names,
        src_row=np.array(src_row, dtype=np.int64),
        src_start=np.array(src_start, dtype=np.int64),
        src_len=np.array(src_len, dtype=np.int64),
        pwl_t=np.array(pwl_t, dtype=float),
        pwl_v=np.array(pwl_v, dtype=float),
        mos_nodes=arr(mos_nodes, 3, np.int64),
        mos_par=arr(mos_par, 5, float),
        bjt_names=[b.name for b in bjts],
        bjt_nodes=arr(bjt_nodes, 3, np.int64),
        bjt_q=np.array(bjt_q, dtype=np.int64),
        bjt_par=arr(bjt_par, 5, float),
        dio_nodes=arr(dio_nodes, 2, np.int64),
        dio_par=arr(dio_par, 2, float),
        breakpoints=np.array(sorted(breakpoints), dtype=float),
        floating_caps=floating,
    )


def _probe_indices(system: System, probes) -> list[int]:
    if probes is None:
        return list(range(system.size))
    out = []
    for p in probes:
        if p in system.unknowns:
            out.append(system.index(p))
        else:
            raise CircuitError(f"unknown probe {p!r}")
    # source currents always recorded for power measurement
    for name in system.src_names:
        i = system.index(f"i({name})")
        if i not in out:
            out.append(i)
    return out


def consistent_start(system: System, x0: np.ndarray, opts: SimOptions) -> np.ndarray:
    """Solve the purely algebraic unknowns at t = 0 with every state held at ``x0``.

    Unknowns with no entry in the reactive matrix (resistive nodes, source
    currents) carry no history, so their starting value follows from the
    stored energy and the sources at t = 0. Source terminals take the source
    value. Other capacitor voltages, inductor currents and stored charges are
    left untouched.
    """
    free = ~(np.any(system.C != 0, axis=0) | np.any(system.C != 0, axis=1))
    # source terminals follow the source, so their constraint rows stay square
    for e in system.circuit.of_type(VoltageSource):
        free[system.index(f"i({e.name})")] = True
        for nd in (e.p, e.m):
            if nd != system.circuit.ground:
                free[system.index(nd)] = True
    alg = np.flatnonzero(free)
    if alg.size == 0:
        return x0
    x = x0.copy()
    n_volt = len(system.nodes)
    zeros = np.zeros_like(x)
    for _ in range(opts.newton_max_iter):
        r, J = kernel.residual_jacobian(x, 0.0, 0.0, 1.0, x, zeros, zeros, *system._arrays())
        dx = np.linalg.solve(J[np.ix_(alg, alg)], -r[alg])
        is_v = alg < n_volt
        big = np.max(np.abs(dx[is_v]), initial=0.0)
        if big > opts.v_limit:
            dx *= opts.v_limit / big
        x[alg] += dx
        if np.all(np.abs(dx[is_v]) <= opts.newton_tol) and big <= opts.v_limit:
            return x
    raise SimulationError("initial algebraic solve did not converge", time=0.0,
                          unknown=system.unknowns[int(alg[np.argmax(np.abs(dx))])])


def transient(
    circuit: Circuit | System, opts: SimOptions, initial: dict[str, float] | None = None
) -> Trace:
    """Run a transient analysis from the all-zero state (plus ``initial``).

    States (capacitor voltages, inductor currents, stored charge) start at
    zero unless given; algebraic unknowns start consistent with them.

    Returns a uniformly sampled :class:`Trace`. Node channels are named by
    node; source channels ``i(V)`` carry the current the source delivers and
    ``v(V)`` its terminal voltage; BJT channels ``q(Q)`` carry stored charge.
    """
    system = circuit if isinstance(circuit, System) else assemble(circuit)
    circuit = system.circuit
    n = system.size
    x0 = np.zeros(n)
    for name, val in (initial or {}).items():
        if name not in system.unknowns:
            raise CircuitError(f"initial condition for unknown {name!r}")
        x0[system.index(name)] = val
    if not system.src_names and not np.any(x0) and circuit.kick is None:
        raise CircuitError("circuit has no source, kick or nonzero initial condition")
    x0 = consistent_start(system, x0, opts)

    kick_b = np.zeros(n)
    if circuit.kick is not None:
        node, amps = circuit.kick
        kick_b[system.index(node)] += amps

    n_volt = len(system.nodes)
    abstol = np.empty(n)
    abstol[:n_volt] = opts.newton_tol
    abstol[n_volt:] = opts.newton_tol * 1e-3  # amps, for ~kilohm impedance levels
    probe_idx = np.array(_probe_indices(system, opts.probes), dtype=np.int64)
    dt_out = opts.dt_out
    n_out = int(math.floor(opts.t_stop / dt_out * (1 + 1e-12))) + 1

    out, status, t_fail, worst, n_steps, n_newton, n_rej, max_res = kernel.run(
        x0, float(opts.t_stop), float(opts.dt_max), float(opts.dt_min), float(dt_out), n_out,
        probe_idx, system.breakpoints, abstol, float(opts.reltol), int(opts.newton_max_iter),
        n_volt, float(opts.v_limit), kick_b, bool(opts.check_residual), *system._arrays(),
    )
    if status != kernel.STATUS_OK:
        what = system.unknowns[worst]
        kind = "non-finite value" if status == kernel.STATUS_NONFINITE else "Newton non-convergence"
        raise SimulationError(
            f"{kind} at t={t_fail:.6e} s (dt below dt_min={opts.dt_min:.3e}); worst unknown {what!r}",
            time=t_fail,
            unknown=what,
        )
    if not np.all(np.isfinite(out)):
        raise SimulationError("non-finite samples in trace")

    time = np.arange(out.shape[0]) * dt_out
    channels: dict[str, np.ndarray] = {}
    for j, p in enumerate(probe_idx):
        name = system.unknowns[p]
        col = out[:, j]
        if name.startswith("i(") and name[2:-1] in system.src_names:
            col = -col  # report delivered current
        elif name.startswith("q("):
            bj = system.bjt_names.index(name[2:-1])
            col = col * system.bjt_par[bj, 4]
        channels[name] = col
    for k, name in enumerate(system.src_names):
        channels[f"v({name})"] = circuit.element(name).stimulus(time)
    meta = {
        "circuit": circuit.name,
        "steps": int(n_steps),
        "newton_iterations": int(n_newton),
        "rejected_steps": int(n_rej),
        "dt_max": opts.dt_max,
        "dt_out": dt_out,
        "floating_node_caps": list(system.floating_caps),
    }
    if circuit.kick is not None:
        meta["kick"] = {"node": circuit.kick[0], "amps": circuit.kick[1], "duration": "first step"}
    if opts.check_residual:
        meta["max_kcl_residual"] = float(max_res)
    return Trace(time, channels, meta)
