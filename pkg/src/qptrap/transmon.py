"""Transmon spectra for cosine, multi-channel and resonant Andreev junctions.

All energies are in GHz·h. The Hamiltonian ``4 Ec (n - ng)^2 + V(phi)`` is
diagonalized in the charge basis.

For the resonant Andreev model the potential is a 2x2 matrix in which
``cos(phi/2)`` and ``sin(phi/2)`` move the island charge by half a Cooper
pair. On the half-integer charge lattice the two internal states can be
rotated so that the Hamiltonian becomes a real tridiagonal chain with
alternating hoppings ``eff_gap*(1 +- sqrt(1-T))/2``; the chain is restricted
to the sector that is invariant under a 2pi phase winding, which keeps the
spectrum 1-periodic in ``ng``. Offset charge is measured from the symmetry
point of that sector (a quarter-charge shift of the raw chain), so that
``ng -> -ng`` is a symmetry for every junction model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.linalg import eigh, eigh_tridiagonal

from .fitkit import DegenerateFitError, FitError, levenberg_marquardt
from .units import ueV_to_GHz

DEFAULT_NCUT = 30
CONVERGENCE_TOL_GHZ = 1e-6
_PHI_GRID = 2**12
# Offset between the raw half-integer chain and the symmetric charge origin.
_ABS_CHARGE_SHIFT = 0.25
# lower bound on T in dispersion fits; T -> 0 at fixed eff_gap*T is the cosine limit
MIN_FIT_TRANSMISSION = 0.05


class ConvergenceError(RuntimeError):
    """Charge basis too small for the requested accuracy."""


@dataclass(frozen=True)
class Cosine:
    ej: float

    def __post_init__(self):
        if not self.ej >= 0:
            raise ValueError("EJ must be non-negative")


@dataclass(frozen=True)
class MultiChannel:
    channels: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple((float(d), float(t)) for d, t in self.channels))
        if not self.channels:
            raise ValueError("at least one channel required")
        for gap, tr in self.channels:
            if not gap > 0 or not 0 < tr <= 1:
                raise ValueError(f"invalid channel (gap={gap}, T={tr})")


@dataclass(frozen=True)
class ResonantABS:
    eff_gap: float
    transmission: float

    def __post_init__(self):
        if not self.eff_gap > 0:
            raise ValueError("effective gap must be positive")
        if not 0 < self.transmission <= 1:
            raise ValueError("transmission must lie in (0, 1]")


JunctionModel = Union[Cosine, MultiChannel, ResonantABS]


@dataclass(frozen=True)
class TransmonParams:
    ec: float
    junction: JunctionModel
    lead_gap: float = 270.0  # µeV

    def __post_init__(self):
        if not self.ec > 0:
            raise ValueError("Ec must be positive")
        if not self.lead_gap > 0:
            raise ValueError("lead gap must be positive")


@dataclass
class SpectrumResult:
    ng: float
    levels: np.ndarray
    f01: float
    f02_half: float


def effective_EJ(junction: JunctionModel) -> float:
    """Josephson energy of the small-phase expansion of the junction."""
    if isinstance(junction, Cosine):
        return junction.ej
    if isinstance(junction, ResonantABS):
        return junction.eff_gap * junction.transmission / 4.0
    if isinstance(junction, MultiChannel):
        return sum(g * t / 4.0 for g, t in junction.channels)
    raise TypeError(f"unknown junction model {junction!r}")


def _multichannel_fourier(channels, kmax):
    phi = 2 * np.pi * np.arange(_PHI_GRID) / _PHI_GRID
    v = np.zeros_like(phi)
    for gap, tr in channels:
        v -= gap * np.sqrt(1.0 - tr * np.sin(phi / 2) ** 2)
    coef = np.fft.rfft(v).real / _PHI_GRID
    return coef[: kmax + 1]


def hamiltonian(params: TransmonParams, ng: float, ncut: int = DEFAULT_NCUT) -> np.ndarray:
    """Dense charge-basis Hamiltonian (useful for inspection and tests)."""
    d, off = _tridiagonal(params, ng, ncut) if not isinstance(
        params.junction, MultiChannel
    ) else (None, None)
    if d is not None:
        return np.diag(d) + np.diag(off, 1) + np.diag(off, -1)
    return _multichannel_matrix(params, ng, ncut)


def _tridiagonal(params, ng, ncut):
    j = params.junction
    if isinstance(j, Cosine):
        n = np.arange(-ncut, ncut + 1)
        diag = 4.0 * params.ec * (n - ng) ** 2
        off = np.full(2 * ncut, -j.ej / 2.0)
        return diag, off
    # half-integer chain, k = 2n
    k = np.arange(-2 * ncut, 2 * ncut + 1)
    diag = 4.0 * params.ec * (k / 2.0 - (ng + _ABS_CHARGE_SHIFT)) ** 2
    r = math.sqrt(1.0 - j.transmission)
    even = (k[:-1] % 2) == 0
    off = np.where(even, j.eff_gap * (1 + r) / 2.0, j.eff_gap * (1 - r) / 2.0)
    return diag, off


def _multichannel_matrix(params, ng, ncut):
    n = np.arange(-ncut, ncut + 1)
    coef = _multichannel_fourier(params.junction.channels, 2 * ncut)
    idx = np.abs(n[:, None] - n[None, :])
    return np.diag(4.0 * params.ec * (n - ng) ** 2) + coef[idx]


def _levels(params, ng, ncut, n_levels):
    if isinstance(params.junction, MultiChannel):
        return eigh(
            _multichannel_matrix(params, ng, ncut),
            eigvals_only=True,
            subset_by_index=[0, n_levels - 1],
        )
    diag, off = _tridiagonal(params, ng, ncut)
    return eigh_tridiagonal(diag, off, eigvals_only=True, select="i", select_range=(0, n_levels - 1))


def diagonalize(
    params: TransmonParams,
    ng: float = 0.0,
    n_levels: int = 3,
    ncut: int = DEFAULT_NCUT,
    check: bool = True,
) -> SpectrumResult:
    """Lowest eigen-energies of the transmon at offset charge ``ng``.

    Parameters
    ----------
    params
        Charging energy and junction model.
    ng
        Offset charge in Cooper pairs.
    n_levels
        Number of levels to return (at least 2; f02/2 needs 3).
    ncut
        Charge cutoff; states ``-ncut..ncut`` (doubled for the Andreev model).
    check
        Re-diagonalize with a 25% larger basis and raise
        :class:`ConvergenceError` if any level moves by more than 1e-6 GHz.
    """
    if n_levels < 2:
        raise ValueError("n_levels must be at least 2")
    m = max(n_levels, 3)
    levels = _levels(params, ng, ncut, m)
    if check:
        bigger = _levels(params, ng, int(math.ceil(1.25 * ncut)), m)
        shift = float(np.max(np.abs(bigger - levels)))
        if shift > CONVERGENCE_TOL_GHZ:
            raise ConvergenceError(
                f"levels moved by {shift:.3g} GHz when enlarging ncut={ncut}; increase ncut"
            )
    return SpectrumResult(
        ng=float(ng),
        levels=levels[:n_levels],
        f01=float(levels[1] - levels[0]),
        f02_half=float((levels[2] - levels[0]) / 2.0),
    )


def transition(params: TransmonParams, ng: float, pair=(0, 1), ncut: int = DEFAULT_NCUT) -> float:
    i, j = pair
    lv = _levels(params, ng, ncut, max(i, j) + 1)
    return float(lv[j] - lv[i])


def spectrum_vs_ng(params: TransmonParams, ngs, ncut: int = DEFAULT_NCUT):
    """Arrays ``(f01, f02_half)`` over the offset charges ``ngs``."""
    f01 = np.empty(len(ngs))
    f02h = np.empty(len(ngs))
    for i, ng in enumerate(ngs):
        lv = _levels(params, ng, ncut, 3)
        f01[i] = lv[1] - lv[0]
        f02h[i] = (lv[2] - lv[0]) / 2.0
    return f01, f02h


def _golden_max(fun, a, b, tol):
    invphi = (math.sqrt(5) - 1) / 2
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    x = 0.5 * (a + b)
    return x, fun(x)


def charge_dispersion(
    params: TransmonParams,
    level_pair=(0, 1),
    n_grid: int = 21,
    ncut: int = DEFAULT_NCUT,
    tol: float = 1e-4,
) -> float:
    """Peak-to-peak variation of a transition frequency over one charge period.

    The extremes of a uniform ``ng`` grid on [0, 1] are refined by
    golden-section search within one grid step on either side.
    """
    ngs = np.linspace(0.0, 1.0, n_grid)
    f = np.array([transition(params, ng, level_pair, ncut) for ng in ngs])
    step = ngs[1] - ngs[0]

    def refine(i, sign):
        lo, hi = ngs[i] - step, ngs[i] + step
        _, val = _golden_max(lambda x: sign * transition(params, x, level_pair, ncut), lo, hi, tol)
        return max(sign * f[i], val) * sign

    fmax = refine(int(np.argmax(f)), 1.0)
    fmin = refine(int(np.argmin(f)), -1.0)
    return float(fmax - fmin)


def qp_sensitivity_D(params: TransmonParams, f01: float) -> float:
    """Quasiparticle loss per unit x_qp in ns^-1 (Gamma_1 = D * x_qp).

    Evaluated as ``(16 EJ / pi) sqrt(Ec / 8EJ) sqrt(Delta / (2 h f01))`` with
    all energies expressed as ordinary frequencies (E/h), i.e. with Planck's
    constant h rather than hbar in the prefactor; the hbar form is larger by
    2*pi. ``EJ`` is the effective Josephson energy and ``Delta`` the lead gap.
    """
    if not f01 > 0:
        raise ValueError("f01 must be positive")
    ej = effective_EJ(params.junction)
    if ej <= 0:
        return 0.0
    gap = ueV_to_GHz(params.lead_gap)
    return 16.0 * ej / math.pi * math.sqrt(params.ec / (8.0 * ej)) * math.sqrt(gap / (2.0 * f01))


def abs_params_for_f01(
    ec: float, ej_eff: float, f01_target: float, lead_gap: float = 270.0, ng: float = 0.0
) -> TransmonParams:
    """Resonant-Andreev parameters with a given E_J^eff that reproduce ``f01_target``.

    Only ``ej_eff`` and ``Ec`` are fixed, so the transmission is solved for
    with ``eff_gap = 4 ej_eff / T``.
    """
    from scipy.optimize import brentq

    def f(tr):
        p = TransmonParams(ec, ResonantABS(4 * ej_eff / tr, tr), lead_gap)
        return transition(p, ng) - f01_target

    lo, hi = 0.05, 1.0
    if f(lo) * f(hi) > 0:
        raise ValueError(f"f01 = {f01_target} GHz is not reachable for T in [{lo}, {hi}]")
    tr = brentq(f, lo, hi, xtol=1e-12)
    return TransmonParams(ec, ResonantABS(4 * ej_eff / tr, tr), lead_gap)


@dataclass
class DispersionFit:
    params: TransmonParams
    covariance: np.ndarray
    stderr: dict[str, float]
    residual_norm: float
    n_iter: int
    converged: bool


def fit_dispersion(
    ng: Sequence[float],
    f01: Sequence[float],
    f02_half: Sequence[float],
    init: TransmonParams,
    ncut: int = DEFAULT_NCUT,
    max_iter: int = 100,
) -> DispersionFit:
    """Least-squares fit of (Ec, eff_gap, T) of the resonant Andreev model.

    Residuals are the measured minus model ``f01`` and ``f02/2`` at every
    offset charge, unweighted. The transmission is kept in [0.05, 1]; data
    from a cosine junction drive it to the lower bound.

    Raises
    ------
    DegenerateFitError
        When the data do not constrain all three parameters; widen the
        offset-charge span.
    FitError
        On non-convergence.
    """
    ng = np.asarray(ng, dtype=float)
    f01 = np.asarray(f01, dtype=float)
    f02_half = np.asarray(f02_half, dtype=float)
    if ng.size < 8:
        raise ValueError("need at least 8 offset-charge points")
    frac = np.mod(ng, 1.0)
    span = min(np.ptp(frac), np.ptp(np.mod(ng + 0.5, 1.0)))
    if span < 0.5 - 1e-9:
        raise ValueError("offset charges must span at least half a period")
    if not isinstance(init.junction, ResonantABS):
        raise TypeError("fit_dispersion fits the resonant Andreev model")
    lead_gap = init.lead_gap
    data = np.concatenate([f01, f02_half])

    def resid(p):
        ec, gap, tr = p
        prm = TransmonParams(ec, ResonantABS(gap, tr), lead_gap)
        a, b = spectrum_vs_ng(prm, ng, ncut)
        return np.concatenate([a, b]) - data

    j = init.junction
    try:
        res = levenberg_marquardt(
            resid,
            [init.ec, j.eff_gap, j.transmission],
            ["ec", "eff_gap", "transmission"],
            lower=[1e-6, 1e-6, MIN_FIT_TRANSMISSION],
            upper=[np.inf, np.inf, 1.0],
            max_iter=max_iter,
            xtol=1e-10,
            ftol=1e-14,
        )
    except DegenerateFitError as exc:
        raise DegenerateFitError(f"{exc}; widen the offset-charge span of the data") from exc
    if not res.converged:
        raise FitError(f"dispersion fit did not converge in {max_iter} iterations")
    p = res.params
    return DispersionFit(
        params=TransmonParams(p["ec"], ResonantABS(p["eff_gap"], p["transmission"]), lead_gap),
        covariance=res.covariance,
        stderr=res.stderr,
        residual_norm=res.residual_norm,
        n_iter=res.n_iter,
        converged=res.converged,
    )
