"""Voltage-biased tunnel-junction phonon injector.

Quasiparticle current of a symmetric SIS junction with a Dynes-broadened BCS
density of states, and the phonons released when the injected quasiparticles
relax to the gap edge and recombine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numba import njit
from scipy.integrate import trapezoid
from scipy.special import expit

from .rng import stream_key_nb, uniform_at
from .units import ELECTRONS_PER_US_PER_NA, KB_UEV_PER_MK, UEV_PER_MV


@dataclass(frozen=True)
class InjectorParams:
    gap: float = 270.0  # µeV
    normal_resistance: float = 115.0  # kΩ
    dynes: float = 3e-5
    temperature: float = 20.0  # mK
    recombination_prob: float = 1.0

    def __post_init__(self):
        if not self.gap > 0:
            raise ValueError("gap must be positive")
        if not self.normal_resistance > 0:
            raise ValueError("normal resistance must be positive")
        if not 0 < self.dynes < 0.1:
            raise ValueError("Dynes parameter must be small and positive")
        if not 0 <= self.recombination_prob <= 1:
            raise ValueError("recombination_prob must lie in [0, 1]")


@dataclass(frozen=True)
class Constant:
    v_bias: float  # mV


@dataclass(frozen=True)
class Pulse:
    amplitude: float  # mV
    duration: float  # µs
    delay_grid: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("pulse duration must be positive")
        object.__setattr__(self, "delay_grid", tuple(float(d) for d in self.delay_grid))


BiasProgram = Union[Constant, Pulse]


def dynes_dos(energy, gap, dynes):
    """Normalized Dynes density of states ``|Re[z / sqrt(z^2 - gap^2)]|``, ``z = E + i*dynes*gap``."""
    z = np.asarray(energy, dtype=complex) + 1j * dynes * gap
    return np.abs(np.real(z / np.sqrt(z * z - gap * gap)))


def _energy_grid(ev, gap, dynes, kt):
    """Integration grid over the thermal window, clustered at the four gap edges."""
    lo, hi = -ev - 40 * kt, 40 * kt
    width = dynes * gap
    offsets = np.geomspace(width / 20, max(hi - lo, 10 * gap), 400)
    offsets = np.concatenate([[0.0], offsets])
    pts = [np.linspace(lo, hi, 2001)]
    for edge in (-gap, gap, -ev - gap, -ev + gap):
        pts.append(edge + offsets)
        pts.append(edge - offsets)
    grid = np.unique(np.concatenate(pts))
    return grid[(grid >= lo) & (grid <= hi)]


def _current_magnitude(p: InjectorParams, v_abs: float) -> float:
    if v_abs == 0.0:
        return 0.0
    ev = v_abs * UEV_PER_MV
    kt = KB_UEV_PER_MK * p.temperature
    e = _energy_grid(ev, p.gap, p.dynes, kt)
    occ = expit(-e / kt) - expit(-(e + ev) / kt)
    integrand = dynes_dos(e, p.gap, p.dynes) * dynes_dos(e + ev, p.gap, p.dynes) * occ
    # µeV / kΩ -> nA
    return float(trapezoid(integrand, e)) / p.normal_resistance


def iv_current(params: InjectorParams, v_bias) -> Union[float, np.ndarray]:
    """Quasiparticle current in nA at bias ``v_bias`` (mV).

    ``I(V) = 1/(e R_n) * int N(E) N(E+eV) [f(E) - f(E+eV)] dE``, evaluated for
    ``|V|`` and signed afterwards so that ``I(-V) = -I(V)`` holds exactly.
    """
    v = np.asarray(v_bias, dtype=float)
    out = np.array([math.copysign(_current_magnitude(params, abs(x)), x) for x in v.ravel()])
    out = out.reshape(v.shape)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# phonon emission


@njit(cache=True, nogil=True)
def sample_pair(key, ctr, ev, gap, p_rec, min_phonon, out):
    """Phonons released by one tunnelling event at bias energy ``ev``.

    The pair energy ``ev`` is split uniformly between the two quasiparticles
    (each at least ``gap``). Each relaxes to the gap edge by repeated
    emission of a phonon uniform in (0, E - gap]; once the remaining excess
    falls below ``min_phonon`` it is emitted as one last phonon. The relaxed
    pair then recombines into a single ``2*gap`` phonon with probability
    ``p_rec``. Returns the number of phonons written to ``out`` and the
    advanced counter.
    """
    n = 0
    cap = out.shape[0]
    u = uniform_at(key, ctr)
    ctr += 1
    e_hot = gap + u * (ev - 2.0 * gap)
    energies = (e_hot, ev - e_hot)
    for qp in energies:
        rem = qp - gap
        while rem > min_phonon and n < cap - 3:
            e = (1.0 - uniform_at(key, ctr)) * rem
            ctr += 1
            out[n] = e
            n += 1
            rem -= e
        if rem > 0.0:
            out[n] = rem
            n += 1
    if uniform_at(key, ctr) < p_rec:
        out[n] = 2.0 * gap
        n += 1
    ctr += 1
    return n, ctr


@njit(cache=True, nogil=True)
def _sample_many(seed, first, count, ev, gap, p_rec, min_phonon):
    buf = np.empty(256)
    energies = np.empty(count * 24)
    offsets = np.empty(count + 1, dtype=np.int64)
    offsets[0] = 0
    total = 0
    for i in range(count):
        key = stream_key_nb(seed, first + i)
        n, _ = sample_pair(key, 0, ev, gap, p_rec, min_phonon, buf)
        if total + n > energies.shape[0]:
            grown = np.empty(2 * energies.shape[0] + n)
            grown[:total] = energies[:total]
            energies = grown
        energies[total : total + n] = buf[:n]
        total += n
        offsets[i + 1] = total
    return energies[:total], offsets


@dataclass(frozen=True)
class PhononSource:
    """Phonon emission of the injector at a fixed bias.

    ``pair_rate`` is the number of tunnelling events per µs; each event
    deposits ``pair_energy`` = eV, which the sampler turns into relaxation
    and recombination phonons.
    """

    v_bias: float  # mV
    gap: float  # µeV
    current: float  # nA
    recombination_prob: float = 1.0
    min_phonon: float = 1.0  # µeV

    @property
    def empty(self) -> bool:
        return abs(self.v_bias) * UEV_PER_MV < 2.0 * self.gap or self.current == 0.0

    @property
    def pair_energy(self) -> float:
        return abs(self.v_bias) * UEV_PER_MV

    @property
    def pair_rate(self) -> float:
        return 0.0 if self.empty else abs(self.current) * ELECTRONS_PER_US_PER_NA

    @property
    def electrical_power(self) -> float:
        """I*V in µeV/µs."""
        return 0.0 if self.empty else self.pair_rate * self.pair_energy

    @property
    def emitted_power(self) -> float:
        """Mean phonon power in µeV/µs (I*V less unrecombined pairs)."""
        lost = (1.0 - self.recombination_prob) * 2.0 * self.gap
        return 0.0 if self.empty else self.pair_rate * (self.pair_energy - lost)

    @property
    def max_relaxation_energy(self) -> float:
        """Upper bound of relaxation phonon energies, eV - gap."""
        return 0.0 if self.empty else self.pair_energy - self.gap

    @property
    def recombination_energy(self) -> float:
        return 2.0 * self.gap

    def sample_pairs(self, n: int, seed: int = 0, first: int = 0):
        """Phonon energies of ``n`` events as a flat array plus offsets per event."""
        if self.empty or n == 0:
            return np.empty(0), np.zeros(n + 1, dtype=np.int64)
        return _sample_many(
            np.uint64(seed), first, n, self.pair_energy, self.gap,
            self.recombination_prob, self.min_phonon,
        )


def emission_spectrum(
    params: InjectorParams, v_bias: float, current: float | None = None
) -> PhononSource:
    """Phonon source for a constant bias; sub-gap biases give an empty source."""
    if current is None:
        current = iv_current(params, v_bias)
    return PhononSource(
        v_bias=float(v_bias),
        gap=params.gap,
        current=float(current),
        recombination_prob=params.recombination_prob,
    )
