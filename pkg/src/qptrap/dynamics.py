"""Quasiparticle rate equations and the qubit observables they drive.

The lumped density x_qp of one qubit obeys

    dx/dt = g(t) - x / tau_ss - r * x**2,

with generation ``g = kappa * P`` from the pair-breaking power ``P`` the
cascade delivers to that qubit. Loss and excitation follow from
``Gamma_1 = D * x_qp``. Times are in µs, rates in 1/µs, and ``D`` is kept in
1/ns as it is usually quoted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

PER_NS_TO_PER_US = 1000.0


class StepSizeError(RuntimeError):
    """The fixed integration step is too coarse for the decay rate."""


@dataclass(frozen=True)
class QpModel:
    tau_ss: float  # µs, may be math.inf
    r: float  # 1/µs per unit x_qp
    kappa: float  # x_qp/µs per (µeV/µs)
    D: float  # 1/ns
    gamma_baseline: float  # 1/µs
    upconvert_fraction: float = 1.0
    residual_pe: float = 0.0  # excited population with the injector off

    def __post_init__(self):
        if not self.tau_ss > 0:
            raise ValueError("tau_ss must be positive")
        if self.r < 0:
            raise ValueError("r must be >= 0")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not self.D > 0:
            raise ValueError("D must be positive")
        if self.gamma_baseline < 0:
            raise ValueError("gamma_baseline must be >= 0")
        if not 0 <= self.upconvert_fraction <= 1:
            raise ValueError("upconvert_fraction must lie in [0, 1]")
        if not 0 <= self.residual_pe < 0.5:
            raise ValueError("residual_pe must lie in [0, 0.5)")

    @property
    def background_up(self) -> float:
        """Excitation rate (1/µs) that sets the residual population at zero bias."""
        p = self.residual_pe
        return self.gamma_baseline * p / (1.0 - p)

    def generation(self, power: float) -> float:
        """Generation rate g (1/µs) for pair-breaking power in µeV/µs."""
        return self.kappa * power


@dataclass(frozen=True)
class StepGeneration:
    """Piecewise-constant g(t): ``values[i]`` on ``[edges[i], edges[i+1])``.

    The last value holds indefinitely; g is zero before ``edges[0]``.
    """

    edges: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        values = tuple(float(v) for v in self.values)
        if len(edges) != len(values) or not edges:
            raise ValueError("edges and values must be non-empty and of equal length")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("edges must be strictly increasing")
        if any(v < 0 for v in values):
            raise ValueError("generation must be non-negative")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, g: float) -> "StepGeneration":
        return cls((-math.inf,), (g,))

    @classmethod
    def pulse(cls, g: float, start: float, duration: float) -> "StepGeneration":
        return cls((start, start + duration), (g, 0.0))

    def __call__(self, t: float) -> float:
        i = int(np.searchsorted(self.edges, t, side="right")) - 1
        return 0.0 if i < 0 else self.values[i]


@dataclass
class QpTrace:
    times: np.ndarray  # µs
    xqp: np.ndarray
    gamma1: np.ndarray  # 1/µs

    def rows(self):
        return zip(self.times, self.xqp, self.gamma1)


def steady_state_xqp(model: QpModel, g: float) -> float:
    """Positive root of ``g - x/tau - r x^2 = 0``."""
    if g < 0:
        raise ValueError("generation must be non-negative")
    inv_tau = 0.0 if math.isinf(model.tau_ss) else 1.0 / model.tau_ss
    if g == 0:
        return 0.0
    if model.r == 0:
        return math.inf if inv_tau == 0 else g * model.tau_ss
    # rationalized form, no cancellation for small r
    return 2.0 * g / (inv_tau + math.sqrt(inv_tau * inv_tau + 4.0 * model.r * g))


def _rhs(x, g, inv_tau, r):
    return g - x * inv_tau - r * x * x


def evolve_xqp(
    model: QpModel,
    generation: StepGeneration,
    t_grid: Sequence[float],
    x0: float = 0.0,
    max_step: float | None = None,
) -> QpTrace:
    """Integrate the rate equation with fixed-step RK4 and sample it on ``t_grid``.

    Steps never straddle a generation edge, and the default step is at most
    ``tau_ss/50`` (or 1/50 of the recombination time at the largest density
    the run can reach). :class:`StepSizeError` is raised when a step would
    change x by more than 10% through decay, which only happens when
    ``max_step`` is forced too large.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("t_grid must be a non-empty 1-D sequence")
    if np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    if x0 < 0:
        raise ValueError("x0 must be >= 0")
    inv_tau = 0.0 if math.isinf(model.tau_ss) else 1.0 / model.tau_ss
    r = model.r

    if max_step is None:
        scales = []
        if inv_tau > 0:
            scales.append(model.tau_ss)
        if r > 0:
            x_ref = max([x0] + [steady_state_xqp(model, g) for g in generation.values])
            if not math.isfinite(x_ref):
                x_ref = x0 + max(generation.values) * (t[-1] - t[0])
            if x_ref > 0:
                scales.append(1.0 / (r * x_ref))
        h_max = min(scales) / 50.0 if scales else math.inf
    else:
        h_max = float(max_step)

    stops = set(t.tolist())
    stops.update(e for e in generation.edges if t[0] < e < t[-1])
    stops = sorted(stops)

    out = np.empty_like(t)
    out[0] = x0
    x = float(x0)
    k = 1
    for a, b in zip(stops, stops[1:]):
        g = generation(a)
        n = max(1, math.ceil((b - a) / h_max)) if math.isfinite(h_max) else 1
        h = (b - a) / n
        for _ in range(n):
            if h * (inv_tau + 2.0 * r * x) > 0.1:
                raise StepSizeError(
                    f"step {h:.3g} µs changes x_qp by more than 10% per step; reduce max_step"
                )
            k1 = _rhs(x, g, inv_tau, r)
            k2 = _rhs(x + 0.5 * h * k1, g, inv_tau, r)
            k3 = _rhs(x + 0.5 * h * k2, g, inv_tau, r)
            k4 = _rhs(x + h * k3, g, inv_tau, r)
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if k < t.size and b == t[k]:
            out[k] = x
            k += 1
    return QpTrace(times=t, xqp=out, gamma1=gamma1_from_xqp(model, out))


def gamma1_from_xqp(model: QpModel, xqp):
    """Quasiparticle loss rate D * x_qp in 1/µs."""
    out = model.D * PER_NS_TO_PER_US * np.asarray(xqp, dtype=float)
    return float(out) if out.ndim == 0 else out


def added_gamma1(t1_biased, t1_baseline):
    """Loss rate above the injector-off baseline, 1/T1(V) - 1/T1(0), in 1/µs."""
    a = np.asarray(t1_biased, dtype=float)
    b = np.asarray(t1_baseline, dtype=float)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("T1 values must be positive")
    out = 1.0 / a - 1.0 / b
    return float(out) if out.ndim == 0 else out


def populations(model: QpModel, xqp):
    """Two-level ground and excited populations ``(P_g, P_e)``.

    Decay is the baseline plus ``D x``; excitation is ``a D x`` plus the
    background rate reproducing ``residual_pe`` at zero density.
    """
    x = np.asarray(xqp, dtype=float)
    if np.any(x < 0):
        raise ValueError("x_qp must be non-negative")
    gq = model.D * PER_NS_TO_PER_US * x
    down = model.gamma_baseline + gq
    up = model.upconvert_fraction * gq + model.background_up
    total = up + down
    with np.errstate(invalid="ignore", divide="ignore"):
        pe = np.where(total > 0, up / np.where(total > 0, total, 1.0), 0.0)
    if np.any(np.isinf(x)):
        a = model.upconvert_fraction
        pe = np.where(np.isinf(x), a / (1.0 + a), pe)
    pe = pe if pe.ndim else float(pe)
    pg = 1.0 - pe
    return pg, pe


def rabi_amplitude(p_g, p_e, reference=(0.93, 0.07)):
    """Rabi amplitude ``|P_g - P_e|`` normalized to its value at ``reference``."""
    ref = abs(reference[0] - reference[1])
    if ref == 0:
        raise ValueError("reference amplitude is zero; normalization undefined")
    pg = np.asarray(p_g, dtype=float)
    pe = np.asarray(p_e, dtype=float)
    if np.any((pg < 0) | (pg > 1) | (pe < 0) | (pe > 1)):
        raise ValueError("populations must lie in [0, 1]")
    out = np.abs(pg - pe) / ref
    return float(out) if out.ndim == 0 else out


def synth_rabi_trace(amplitude, decay, f_rabi, t_grid, phase=0.0, offset=0.0):
    """``A exp(-t/decay) cos(2 pi f t + phase) + offset`` on ``t_grid``."""
    t = np.asarray(t_grid, dtype=float)
    return amplitude * np.exp(-t / decay) * np.cos(2 * np.pi * f_rabi * t + phase) + offset


def synth_histogram(p_g: float, readout, n_shots: int, seed: int = 0) -> np.ndarray:
    """Single-shot readout values: a two-Gaussian mixture with ground weight ``p_g``."""
    mu_g, mu_e, sigma = readout
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    if not 0 <= p_g <= 1:
        raise ValueError("p_g must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    ground = rng.random(n_shots) < p_g
    centers = np.where(ground, mu_g, mu_e)
    return centers + sigma * rng.standard_normal(n_shots)
