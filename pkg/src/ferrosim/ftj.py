"""Behavioral compact model of a double-layer ferroelectric tunneling junction.

The device is a ferroelectric (HZO) layer in series with a thin dielectric
tunnel barrier (Al2O3).  Four pieces make up the terminal current:

* background (non-ferroelectric) capacitance of the two layers in series,
* nucleation-limited switching of an ensemble of independent domains,
  each with a Merz-type waiting time ``tau0 * exp((Ea / |E|) ** n)``,
* a polarization-weighted tunneling current mixing an ON and an OFF branch,
* the bookkeeping that turns a voltage step into ``i = area * (C0 dv/dt +
  dP/dt + J)``.

Units follow device-physics convention: lengths in cm, fields in V/cm,
charge densities in C/cm^2, current densities in A/cm^2.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtri

EPS0 = 8.854e-14  # F/cm
T_KELVIN = 300.0


class DomainError(ValueError):
    """An argument lies outside the domain of a physical formula."""


@dataclass(frozen=True)
class NlsParams:
    """Nucleation-limited switching parameters.

    ``ea_sigma`` may be a scalar or a ``(positive, negative)`` pair giving a
    different activation-field spread for each switching polarity.
    """

    n_domains: int = 64
    tau0: float = 1e-8
    ea_mean: float = 1.2e7
    ea_sigma: float | tuple[float, float] = 6e5
    merz_exp: float = 1.0

    def __post_init__(self):
        sig = self.ea_sigma
        if isinstance(sig, (list, tuple)):
            if len(sig) != 2:
                raise ValueError("ea_sigma pair must have two entries (pos, neg)")
            sig = (float(sig[0]), float(sig[1]))
        else:
            sig = (float(sig), float(sig))
        object.__setattr__(self, "ea_sigma", sig)
        object.__setattr__(self, "n_domains", int(self.n_domains))
        if self.n_domains < 1:
            raise ValueError("n_domains must be >= 1")
        if not self.tau0 > 0:
            raise ValueError("tau0 must be > 0")
        if not self.ea_mean > 0:
            raise ValueError("ea_mean must be > 0")
        if min(sig) < 0:
            raise ValueError("ea_sigma must be >= 0")
        if not self.merz_exp > 0:
            raise ValueError("merz_exp must be > 0")

    @property
    def sigma_pos(self) -> float:
        return self.ea_sigma[0]

    @property
    def sigma_neg(self) -> float:
        return self.ea_sigma[1]


@dataclass(frozen=True)
class TunnelParams:
    j_on_amp: float = 8.2e-7
    j_off_amp: float = 8.2e-8
    v_shape_pos: float = 1.0
    v_shape_neg: float = 1.0

    def __post_init__(self):
        if not (self.j_off_amp > 0 and self.j_on_amp >= self.j_off_amp):
            raise ValueError("need j_on_amp >= j_off_amp > 0")
        if not (self.v_shape_pos > 0 and self.v_shape_neg > 0):
            raise ValueError("shape voltages must be > 0")

    @property
    def ter(self) -> float:
        return self.j_on_amp / self.j_off_amp


@dataclass(frozen=True)
class FtjStack:
    """Static description of one FTJ.

    ``p_coupling`` is the fraction of the polarization bound charge left
    unscreened when partitioning the applied voltage between the layers
    (0 = fully compensated interface, 1 = bare depolarization field).
    """

    d_fe: float = 10e-7
    k_fe: float = 30.0
    d_de: float = 2e-7
    k_de: float = 9.0
    area: float = 1.141e-3
    pr: float = 20e-6
    phi_top: float = 4.5
    phi_bottom: float = 4.5
    nls: NlsParams = field(default_factory=NlsParams)
    tun: TunnelParams = field(default_factory=TunnelParams)
    p_coupling: float = 0.0

    def __post_init__(self):
        if not self.d_fe > 0:
            raise ValueError("d_fe must be > 0")
        if not self.d_de >= 0:
            raise ValueError("d_de must be >= 0")
        if not (self.k_fe > 1 and self.k_de > 1):
            raise ValueError("relative permittivities must be > 1")
        if not self.area > 0:
            raise ValueError("area must be > 0")
        if not self.pr > 0:
            raise ValueError("pr must be > 0")
        if not math.isfinite(self.phi_bottom - self.phi_top):
            raise ValueError("workfunctions must be finite")
        if not 0.0 <= self.p_coupling <= 1.0:
            raise ValueError("p_coupling must lie in [0, 1]")

    @property
    def c0(self) -> float:
        return background_capacitance_per_area(self)

    @property
    def v_bi(self) -> float:
        return built_in_voltage(self)


_STACK_KEYS = {f.name for f in dataclasses.fields(FtjStack)} - {"nls", "tun"}
_NLS_KEYS = {f.name for f in dataclasses.fields(NlsParams)}
_TUN_KEYS = {f.name for f in dataclasses.fields(TunnelParams)}
FLAT_KEYS = frozenset(_STACK_KEYS | _NLS_KEYS | _TUN_KEYS)


def flatten_stack(stack: FtjStack) -> dict:
    """Flat ``{field: value}`` view used by presets, netlists and configs."""
    out = {k: getattr(stack, k) for k in sorted(_STACK_KEYS)}
    for k in sorted(_NLS_KEYS):
        v = getattr(stack.nls, k)
        out[k] = list(v) if isinstance(v, tuple) else v
    for k in sorted(_TUN_KEYS):
        out[k] = getattr(stack.tun, k)
    return out


def replace_flat(stack: FtjStack, overrides: Mapping[str, object]) -> FtjStack:
    """Return ``stack`` with flat-named fields replaced.  Unknown keys raise KeyError."""
    unknown = [k for k in overrides if k not in FLAT_KEYS]
    if unknown:
        raise KeyError(unknown[0])
    nls_kw = {k: v for k, v in overrides.items() if k in _NLS_KEYS}
    tun_kw = {k: v for k, v in overrides.items() if k in _TUN_KEYS}
    top_kw = {k: v for k, v in overrides.items() if k in _STACK_KEYS}
    if "ea_sigma" in nls_kw and isinstance(nls_kw["ea_sigma"], list):
        nls_kw["ea_sigma"] = tuple(nls_kw["ea_sigma"])
    nls = dataclasses.replace(stack.nls, **nls_kw) if nls_kw else stack.nls
    tun = dataclasses.replace(stack.tun, **tun_kw) if tun_kw else stack.tun
    return dataclasses.replace(stack, nls=nls, tun=tun, **top_kw)


# ---------------------------------------------------------------------------
# electrostatics

def background_capacitance_per_area(stack: FtjStack) -> float:
    """Series capacitance of the ferroelectric and dielectric layers (F/cm^2)."""
    if stack.d_de == 0:
        return EPS0 * stack.k_fe / stack.d_fe
    return EPS0 / (stack.d_fe / stack.k_fe + stack.d_de / stack.k_de)


def built_in_voltage(stack: FtjStack) -> float:
    """Workfunction difference between bottom and top electrode, in volts."""
    return stack.phi_bottom - stack.phi_top


def partition_fields(stack: FtjStack, v_applied, P=0.0):
    """Split ``v_applied - v_bi`` between the two layers.

    Solves displacement continuity ``eps0*k_fe*E_fe + P = eps0*k_de*E_de``
    together with ``E_fe*d_fe + E_de*d_de = v_applied - v_bi``.
    Broadcasts over array inputs.
    """
    v = np.asarray(v_applied, dtype=float) - built_in_voltage(stack)
    P = np.asarray(P, dtype=float)
    if stack.d_de == 0:
        e_fe = v / stack.d_fe
        e_de = np.zeros_like(e_fe)
    else:
        a = EPS0 * stack.k_fe
        b = EPS0 * stack.k_de
        # eliminate E_de = (a E_fe + P) / b
        e_fe = (v - stack.d_de * P / b) / (stack.d_fe + stack.d_de * a / b)
        e_de = (a * e_fe + P) / b
    if e_fe.ndim == 0:
        return float(e_fe), float(e_de)
    return e_fe, e_de


def effective_thickness(stack: FtjStack) -> float:
    """Voltage-to-ferroelectric-field divisor at zero polarization (cm)."""
    if stack.d_de == 0:
        return stack.d_fe
    return stack.d_fe + stack.d_de * stack.k_fe / stack.k_de


# ---------------------------------------------------------------------------
# switching kinetics

def nls_tau(e_fe, ea_i, nls: NlsParams):
    """Merz-type waiting time; +inf at zero field."""
    e = np.abs(np.asarray(e_fe, dtype=float))
    ea = np.asarray(ea_i, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        tau = nls.tau0 * np.exp((ea / e) ** nls.merz_exp)
    tau = np.where(e == 0, np.inf, tau)
    if tau.ndim == 0:
        return float(tau)
    return tau


@lru_cache(maxsize=256)
def _domain_fields(nls: NlsParams) -> tuple[np.ndarray, np.ndarray]:
    n = nls.n_domains
    z = ndtri((np.arange(n) + 0.5) / n)
    floor = 0.01 * nls.ea_mean
    up = np.maximum(nls.ea_mean + nls.sigma_pos * z, floor)
    down = np.maximum(nls.ea_mean + nls.sigma_neg * z, floor)
    up.setflags(write=False)
    down.setflags(write=False)
    return up, down


def domain_activation_fields(nls: NlsParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-domain activation fields for up- and down-switching.

    Gaussian quantiles at ``(i + 1/2) / n``; deterministic, no RNG.
    """
    return _domain_fields(nls)


@dataclass(frozen=True, eq=False)
class FtjState:
    """Domain signs ``s`` (+1/-1) and switching-progress accumulators ``u``."""

    s: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        if self.s.shape != self.u.shape:
            raise ValueError("s and u must have equal length")

    @property
    def p(self) -> float:
        return float(self.s.sum()) / self.s.size

    @property
    def n_domains(self) -> int:
        return self.s.size

    @classmethod
    def uniform(cls, n_domains: int, sign: int = -1) -> "FtjState":
        return cls(np.full(n_domains, float(np.sign(sign) or -1)), np.zeros(n_domains))

    @classmethod
    def from_p(cls, p: float, nls: NlsParams) -> "FtjState":
        """State with normalized polarization closest to ``p``.

        Starting from all-down, the domains that switch up most easily are
        flipped first, mimicking a partial set pulse.
        """
        if not -1.0 <= p <= 1.0:
            raise ValueError("p must lie in [-1, 1]")
        n = nls.n_domains
        k = int(round((p + 1.0) / 2.0 * n))
        up, _ = domain_activation_fields(nls)
        s = np.full(n, -1.0)
        s[np.argsort(up, kind="stable")[:k]] = 1.0
        return cls(s, np.zeros(n))

    def copy(self) -> "FtjState":
        return FtjState(self.s.copy(), self.u.copy())

    def digest(self) -> bytes:
        return self.s.tobytes() + self.u.tobytes()

    def __eq__(self, other):
        if not isinstance(other, FtjState):
            return NotImplemented
        return np.array_equal(self.s, other.s) and np.array_equal(self.u, other.u)


def switching_candidates(state: FtjState, e_fe: float, dt: float, stack: FtjStack):
    """Accumulator values after ``dt`` and the mask of domains that would flip."""
    if e_fe == 0.0:
        return state.u, np.zeros(state.s.size, dtype=bool), 0.0
    sign = 1.0 if e_fe > 0 else -1.0
    up, down = domain_activation_fields(stack.nls)
    ea = up if sign > 0 else down
    opposing = state.s != sign
    u = state.u.copy()
    if opposing.any():
        tau = nls_tau(e_fe, ea[opposing], stack.nls)
        u[opposing] += dt / tau
    return u, opposing & (u >= 1.0), sign


def apply_switching(state: FtjState, u: np.ndarray, flips: np.ndarray, sign: float) -> FtjState:
    s = state.s.copy()
    u = u.copy()
    if flips.any():
        s[flips] = sign
        u[flips] = 0.0
    return FtjState(s, u)


def step_polarization(state: FtjState, e_fe: float, dt: float, stack: FtjStack):
    """Advance every domain by ``dt`` at ferroelectric field ``e_fe``.

    Domains opposing the field accumulate ``dt / tau``; on reaching 1 they
    flip and reset.  Aligned domains hold their accumulator.
    Returns ``(new_state, dP)`` with ``dP`` in C/cm^2.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if e_fe == 0.0:
        return state.copy(), 0.0
    u, flips, sign = switching_candidates(state, e_fe, dt, stack)
    new = apply_switching(state, u, flips, sign)
    return new, stack.pr * (new.p - state.p)


# ---------------------------------------------------------------------------
# read path

def _branch(v, amp, vp, vn):
    v = np.asarray(v, dtype=float)
    pos = amp * np.expm1(np.maximum(v, 0.0) / vp)
    neg = -amp * np.expm1(np.maximum(-v, 0.0) / vn)
    return np.where(v >= 0, pos, neg)


def tunneling_current_density(stack: FtjStack, v_applied, p):
    """Polarization-weighted diode-like tunneling current density (A/cm^2).

    ``p`` is the normalized polarization (scalar or array broadcasting with
    ``v_applied``); ``p = +1`` is the low-resistance state.
    """
    p = np.asarray(p, dtype=float)
    if np.any(np.abs(p) > 1.0 + 1e-12):
        raise ValueError("p must lie in [-1, 1]")
    t = stack.tun
    f = 0.5 * (1.0 + p)
    j = (f * _branch(v_applied, t.j_on_amp, t.v_shape_pos, t.v_shape_neg)
         + (1.0 - f) * _branch(v_applied, t.j_off_amp, t.v_shape_pos, t.v_shape_neg))
    if j.ndim == 0:
        return float(j)
    return j


def terminal_current_step(stack: FtjStack, state: FtjState, v: float, dv_dt: float, dt: float):
    """Total device current over one step ending at voltage ``v``.

    Returns ``(i_total, new_state)``.  Switching is driven by the
    ferroelectric field at ``v`` computed with the entering polarization.
    """
    e_fe, _ = partition_fields(stack, v, stack.p_coupling * stack.pr * state.p)
    new, dP = step_polarization(state, e_fe, dt, stack)
    j = stack.c0 * dv_dt + dP / dt + tunneling_current_density(stack, v, new.p)
    return stack.area * j, new


def read_time(dv: float, c0: float, j: float) -> float:
    """Time for a current density ``j`` to charge ``c0`` by ``dv``."""
    if not j > 0:
        raise DomainError("current density must be > 0")
    if not c0 > 0:
        raise DomainError("capacitance must be > 0")
    if dv < 0:
        raise DomainError("voltage difference must be >= 0")
    return dv * c0 / j


def ensemble_p(states: Sequence[FtjState]) -> np.ndarray:
    return np.array([s.p for s in states])
