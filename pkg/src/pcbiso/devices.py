"""Behavioral large-signal device models.

Three roles are covered: a small-signal N-MOSFET with body diode (2N7002
class), a general-purpose NPN with charge-controlled saturation storage
(MMBT3904 class) and a Shockley junction diode. Defaults are
datasheet-typical and overridable from the run config.

The scalar ``*_eval`` helpers return value plus partial derivatives and are
compiled with numba so the transient kernel can call them directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba

V_THERMAL = 0.02585  # 300 K
DIODE_V_LINEAR = 1.0  # exponent is linearized above this junction voltage
BJT_V_LINEAR = 0.9
VCE_SAT = 0.1


@dataclass(frozen=True)
class DiodeParams:
    i_s: float = 1e-12
    n_ideality: float = 1.5
    c_junction: float = 10e-12

    def __post_init__(self):
        if not self.i_s > 0:
            raise ValueError("diode i_s must be > 0")
        if not self.n_ideality >= 1:
            raise ValueError("diode n_ideality must be >= 1")
        if self.c_junction < 0:
            raise ValueError("diode c_junction must be >= 0")


@dataclass(frozen=True)
class MosfetParams:
    vth: float = 2.1
    kn: float = 0.08
    lambda_: float = 0.01
    # low-Vds values; capacitances at the 25 V datasheet bias are roughly half
    cgs: float = 35e-12
    cgd: float = 7e-12
    cds: float = 14e-12
    body_diode: DiodeParams = field(default_factory=DiodeParams)

    def __post_init__(self):
        if not self.vth > 0:
            raise ValueError("mosfet vth must be > 0")
        if not self.kn > 0:
            raise ValueError("mosfet kn must be > 0")
        if min(self.cgs, self.cgd, self.cds) < 0:
            raise ValueError("mosfet capacitances must be >= 0")


def _default_storage_tau() -> float:
    # storage time = tau * ln(overdrive); datasheet forced-beta-10 condition
    # at 1 mA collector gives overdrive = beta_f / 10
    return 100e-9 / math.log(200 / 10)


@dataclass(frozen=True)
class BjtParams:
    i_s: float = 6.7e-15
    beta_f: float = 200.0
    v_t: float = V_THERMAL
    storage_tau: float = field(default_factory=_default_storage_tau)
    c_junction: float = 4e-12
    vce_sat: float = VCE_SAT

    def __post_init__(self):
        if not self.i_s > 0:
            raise ValueError("bjt i_s must be > 0")
        if not self.beta_f > 1:
            raise ValueError("bjt beta_f must be > 1")
        if not self.storage_tau > 0:
            raise ValueError("bjt storage_tau must be > 0")
        if not self.vce_sat > 0:
            raise ValueError("bjt vce_sat must be > 0")


@numba.njit(cache=True)
def limexp(x, x_lin):
    """exp(x) continued linearly (value and slope matched) above ``x_lin``."""
    if x <= x_lin:
        e = math.exp(x)
        return e, e
    e = math.exp(x_lin)
    return e * (1.0 + x - x_lin), e


@numba.njit(cache=True)
def diode_eval(i_s, n, v):
    """Diode current and conductance."""
    nvt = n * V_THERMAL
    e, de = limexp(v / nvt, DIODE_V_LINEAR / nvt)
    return i_s * (e - 1.0), i_s * de / nvt


@numba.njit(cache=True)
def _channel(vth, kn, lam, vgs, vds):
    # forward channel (vds >= 0): current and partials wrt vgs, vds
    vov = vgs - vth
    if vov <= 0.0:
        return 0.0, 0.0, 0.0
    clm = 1.0 + lam * vds
    if vds < vov:
        core = vov * vds - 0.5 * vds * vds
        return kn * core * clm, kn * vds * clm, kn * ((vov - vds) * clm + core * lam)
    core = 0.5 * vov * vov
    return kn * core * clm, kn * vov * clm, kn * core * lam


@numba.njit(cache=True)
def mosfet_eval(vth, kn, lam, dio_is, dio_n, vgs, vds):
    """Drain current (into drain) and partials wrt vgs and vds.

    The channel is symmetric: for vds < 0 source and drain swap roles. The
    source-to-drain body diode is always present.
    """
    if vds >= 0.0:
        i, gm, gds = _channel(vth, kn, lam, vgs, vds)
    else:
        # reversed: gate-to-"source" is now vgd = vgs - vds
        ir, gmr, gdsr = _channel(vth, kn, lam, vgs - vds, -vds)
        i = -ir
        gm = -gmr
        gds = gmr + gdsr
    idio, gdio = diode_eval(dio_is, dio_n, -vds)
    return i - idio, gm, gds + gdio


@numba.njit(cache=True)
def bjt_base_eval(i_s, beta, vt, vbe):
    """Base-emitter junction (base) current and conductance."""
    e, de = limexp(vbe / vt, BJT_V_LINEAR / vt)
    return i_s / beta * (e - 1.0), i_s / beta * de / vt


@numba.njit(cache=True)
def bjt_collector_eval(beta, vce_sat, drive, vce):
    """Charge-controlled collector current.

    ``drive`` is the stored base charge divided by the storage time
    constant (amps). Collector current capability is ``beta * drive``,
    pinched off smoothly as vce falls below ``vce_sat``.

    Returns:
        (ic, d ic / d drive, d ic / d vce)
    """
    vk = 0.5 * vce_sat
    t = math.tanh(vce / vk)
    return beta * drive * t, beta * t, beta * drive * (1.0 - t * t) / vk


# -- public scalar API --------------------------------------------------------


def diode_i(p: DiodeParams, v: float) -> float:
    """Shockley diode current, exponent linearized above 1 V."""
    return float(diode_eval(p.i_s, p.n_ideality, float(v))[0])


def mosfet_ids(p: MosfetParams, vgs: float, vds: float) -> float:
    """Level-1 square-law drain current including the body diode."""
    bd = p.body_diode
    return float(
        mosfet_eval(p.vth, p.kn, p.lambda_, bd.i_s, bd.n_ideality, float(vgs), float(vds))[0]
    )


@dataclass(frozen=True)
class BjtOperatingPoint:
    ic: float
    ib: float
    saturated: bool


def bjt_ic(p: BjtParams, vbe: float, vce: float) -> BjtOperatingPoint:
    """Quasi-static collector current.

    In steady state the stored charge settles to ``storage_tau * ib`` so the
    collector capability equals ``beta_f * ib = i_s * (exp(vbe/v_t) - 1)``;
    below ``vce_sat`` the collector is pinched to the saturation clamp and
    Ic never exceeds ``beta_f * ib``.
    """
    ib = float(bjt_base_eval(p.i_s, p.beta_f, p.v_t, float(vbe))[0])
    ic = float(bjt_collector_eval(p.beta_f, p.vce_sat, ib, float(vce))[0])
    return BjtOperatingPoint(ic=ic, ib=ib, saturated=vce < p.vce_sat and ib > 0)


def bjt_storage_step(q: float, ib: float, dt: float, p: BjtParams) -> float:
    """Advance the excess base charge by one explicit step."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    return q + dt * (ib - q / p.storage_tau)


def collector_capability(p: BjtParams, q: float) -> float:
    """Collector current the stored charge ``q`` can sustain."""
    return p.beta_f * q / p.storage_tau


def storage_release_delay(p: BjtParams, ib_on: float, ic_load: float) -> float:
    """Time from base-drive removal until the collector leaves saturation.

    Closed form for the single-pole charge model: the charge starts at
    ``tau * ib_on`` and decays with ``tau``; release is when
    ``beta * q / tau`` drops to ``ic_load``.
    """
    overdrive = p.beta_f * ib_on / ic_load
    if overdrive <= 1:
        return 0.0
    return p.storage_tau * math.log(overdrive)


def simulate_release_delay(
    p: BjtParams, ib_on: float, ic_load: float, dt: float = 1e-11, t_max: float = 2e-6
) -> float:
    """Brute-force the release delay by stepping ``bjt_storage_step``."""
    q = p.storage_tau * ib_on
    t = 0.0
    while collector_capability(p, q) > ic_load:
        q = bjt_storage_step(q, 0.0, dt, p)
        t += dt
        if t > t_max:
            raise RuntimeError("collector never released")
    return t


def effective_tank_capacitance(p: MosfetParams, topology: str = "cross_coupled_pair") -> float:
    """Tank capacitance a cross-coupled pair presents across its inductor.

    ``cds + cgs + 4 * cgd``: each drain carries its own cds and the partner
    gate's cgs, while the two gate-drain capacitances are Miller-doubled by
    the antiphase swing of the opposite drain.
    """
    if topology != "cross_coupled_pair":
        raise ValueError(f"unsupported topology {topology!r}")
    return p.cds + p.cgs + 4 * p.cgd


def lc_frequency(inductance: float, capacitance: float) -> float:
    return 1.0 / (2 * math.pi * math.sqrt(inductance * capacitance))
