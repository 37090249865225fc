"""Nonlinear least-squares kernels for the measurement analysis pipeline.

All fitters share one damped Gauss-Newton (Levenberg-Marquardt) engine with
central-difference Jacobians; each model only supplies an initializer.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import ndtr
from scipy.stats import f as f_dist


class FitError(RuntimeError):
    """A fit could not be performed or did not converge."""


class DegenerateFitError(FitError):
    """The data do not constrain the model (singular Jacobian)."""


class GridMismatchError(ValueError):
    pass


@dataclass
class FitResult:
    params: dict[str, float]
    stderr: dict[str, float]
    residual_norm: float
    converged: bool
    n_iter: int
    covariance: np.ndarray | None = None
    cost_history: list[float] = field(default_factory=list)
    flags: dict[str, bool] = field(default_factory=dict)

    def __getitem__(self, name):
        return self.params[name]


def _jacobian(fun, p, r0, rel_step, lower, upper):
    m, n = r0.size, p.size
    jac = np.empty((m, n))
    for j in range(n):
        h = rel_step * max(abs(p[j]), 1e-3)
        hi = min(p[j] + h, upper[j])
        lo = max(p[j] - h, lower[j])
        if hi == lo:
            jac[:, j] = 0.0
            continue
        pp, pm = p.copy(), p.copy()
        pp[j], pm[j] = hi, lo
        jac[:, j] = (fun(pp) - fun(pm)) / (hi - lo)
    return jac


def levenberg_marquardt(
    fun: Callable[[np.ndarray], np.ndarray],
    p0: Sequence[float],
    names: Sequence[str],
    lower: Sequence[float] | None = None,
    upper: Sequence[float] | None = None,
    max_iter: int = 200,
    xtol: float = 1e-13,
    ftol: float = 1e-15,
    rel_step: float = 1e-6,
) -> FitResult:
    """Minimize ``sum(fun(p)**2)`` with a damped Gauss-Newton iteration.

    Steps that do not lower the cost are rejected and the damping raised, so
    the recorded cost history is non-increasing. Box bounds are enforced by
    projecting trial points.

    Raises
    ------
    DegenerateFitError
        If the Jacobian at the starting point is rank deficient.
    """
    p = np.asarray(p0, dtype=float).copy()
    n = p.size
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    p = np.clip(p, lower, upper)

    r = np.asarray(fun(p), dtype=float)
    if r.size < n:
        raise DegenerateFitError(f"{r.size} residuals cannot determine {n} parameters")
    if not np.all(np.isfinite(r)):
        raise FitError("model is not finite at the starting point")
    cost = float(r @ r)
    history = [cost]
    jac = _jacobian(fun, p, r, rel_step, lower, upper)
    sv = np.linalg.svd(jac, compute_uv=False)
    if sv[-1] <= sv[0] * 1e-13 or sv[0] == 0.0:
        raise DegenerateFitError(
            "singular Jacobian: parameters "
            + ", ".join(names)
            + " are not all constrained by the data"
        )

    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        jtj = jac.T @ jac
        grad = jac.T @ r
        if np.max(np.abs(grad)) <= 1e-300 or cost == 0.0:
            converged = True
            break
        scale = np.diag(jtj).copy()
        scale[scale == 0] = 1.0
        # parameters held at a bound by the gradient stay fixed this iteration
        free = ~(((p <= lower) & (grad > 0)) | ((p >= upper) & (grad < 0)))
        if not free.any():
            converged = True
            break
        sub = np.ix_(free, free)
        accepted = False
        while lam < 1e16:
            step = np.zeros(n)
            try:
                step[free] = np.linalg.solve(jtj[sub] + lam * np.diag(scale[free]), -grad[free])
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = np.clip(p + step, lower, upper)
            r_trial = np.asarray(fun(trial), dtype=float)
            c_trial = float(r_trial @ r_trial) if np.all(np.isfinite(r_trial)) else math.inf
            if c_trial < cost:
                accepted = True
                break
            lam *= 4.0
        if not accepted:
            # no descent direction left at machine precision
            converged = True
            break
        dp = trial - p
        drop = cost - c_trial
        p, r, cost = trial, r_trial, c_trial
        history.append(cost)
        lam = max(lam / 5.0, 1e-12)
        if np.all(np.abs(dp) <= xtol * (np.abs(p) + xtol)) or drop <= ftol * cost:
            converged = True
            break
        jac = _jacobian(fun, p, r, rel_step, lower, upper)

    jac = _jacobian(fun, p, r, rel_step, lower, upper)
    dof = r.size - n
    try:
        cov = np.linalg.pinv(jac.T @ jac)
        cov = cov * (cost / dof if dof > 0 else 0.0)
    except np.linalg.LinAlgError:
        cov = np.full((n, n), np.nan)
    stderr = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return FitResult(
        params=dict(zip(names, map(float, p))),
        stderr=dict(zip(names, map(float, stderr))),
        residual_norm=math.sqrt(cost),
        converged=converged,
        n_iter=it,
        covariance=cov,
        cost_history=history,
    )


def _sorted_xy(t, y):
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("t and y must be 1-D arrays of equal length")
    order = np.argsort(t, kind="stable")
    return t[order], y[order]


def _require_converged(res: FitResult, what: str) -> FitResult:
    if not res.converged:
        raise FitError(f"{what} fit did not converge after {res.n_iter} iterations")
    return res


# ---------------------------------------------------------------------------
# exponential decay


def exp_decay(t, A, tau, offset):
    return A * np.exp(-np.asarray(t) / tau) + offset


def fit_exp_decay(t, y) -> FitResult:
    """Fit ``A*exp(-t/tau) + offset``.

    The offset starting guess sits just beyond the extreme tail value; the
    amplitude and time constant come from a log-linear regression on the
    offset-subtracted data.
    """
    t, y = _sorted_xy(t, y)
    if t.size < 4:
        raise ValueError("need at least 4 points")
    span = np.ptp(y)
    if span == 0.0 or span <= 1e-14 * np.max(np.abs(y)):
        raise DegenerateFitError("all y values are equal; decay is undefined")
    sign = 1.0 if y[0] >= y[-1] else -1.0
    ys = sign * y
    c0 = ys.min() - 0.05 * span
    slope, icpt = np.polyfit(t - t[0], np.log(ys - c0), 1)
    tau0 = -1.0 / slope if slope < 0 else np.ptp(t)
    A0 = sign * math.exp(icpt) * math.exp(t[0] / tau0)
    p0 = [A0, tau0, sign * c0]

    def resid(p):
        return exp_decay(t, *p) - y

    res = levenberg_marquardt(
        resid, p0, ["A", "tau", "offset"], lower=[-np.inf, 1e-12 * tau0, -np.inf]
    )
    return _require_converged(res, "exponential decay")


# ---------------------------------------------------------------------------
# exponentially decaying cosine


def decaying_cosine(t, A, f, phase, tau, offset):
    t = np.asarray(t)
    return A * np.exp(-t / tau) * np.cos(2 * np.pi * f * t + phase) + offset


def _periodogram_peak(t, y, oversample=10):
    span = t[-1] - t[0]
    dt = np.median(np.diff(t))
    f_max = 0.5 / dt
    df = 1.0 / (span * oversample)
    freqs = np.arange(df, f_max, df)
    yc = y - y.mean()
    ph = np.exp(-2j * np.pi * np.outer(freqs, t))
    power = np.abs(ph @ yc) ** 2
    return freqs, power


def fit_decaying_cosine(t, y, noise_floor_ratio: float = 20.0) -> FitResult:
    """Fit ``A*exp(-t/tau)*cos(2*pi*f*t + phase) + offset``.

    The frequency starts at the peak of an oversampled periodogram; phase,
    amplitude and offset then follow from linear least squares on a short
    grid of trial decay times.
    """
    t, y = _sorted_xy(t, y)
    if t.size < 10:
        raise ValueError("need at least 10 points")
    freqs, power = _periodogram_peak(t, y)
    k = int(np.argmax(power))
    floor = float(np.median(power))
    if power[k] <= 0.0 or power[k] < noise_floor_ratio * floor:
        raise FitError("no spectral peak above the noise floor")
    f0 = float(freqs[k])
    span = t[-1] - t[0]
    if f0 * span < 2.0:
        raise FitError("data span fewer than two oscillation periods")

    best = None
    for tau0 in span * np.array([0.1, 0.2, 0.4, 0.8, 1.6, 3.2, 10.0]):
        env = np.exp(-t / tau0)
        basis = np.column_stack(
            [env * np.cos(2 * np.pi * f0 * t), env * np.sin(2 * np.pi * f0 * t), np.ones_like(t)]
        )
        coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
        ssr = float(np.sum((basis @ coef - y) ** 2))
        if best is None or ssr < best[0]:
            best = (ssr, tau0, coef)
    _, tau0, (a, b, c) = best
    A0 = math.hypot(a, b)
    phase0 = math.atan2(-b, a)

    def resid(p):
        return decaying_cosine(t, *p) - y

    res = levenberg_marquardt(
        resid,
        [A0, f0, phase0, tau0, c],
        ["A", "f", "phase", "tau", "offset"],
        lower=[-np.inf, 0.0, -np.inf, 1e-9 * span, -np.inf],
    )
    res = _require_converged(res, "decaying cosine")
    if res.params["A"] < 0:
        res.params["A"] = -res.params["A"]
        res.params["phase"] += math.pi
    res.params["phase"] = math.remainder(res.params["phase"], 2 * math.pi)
    return res


# ---------------------------------------------------------------------------
# recovery after an injection pulse


def recovery_exponential(tau_delay, gamma0, tau):
    return gamma0 * np.exp(-np.asarray(tau_delay) / tau)


def recovery_recombination(tau_delay, gamma0, rho):
    return gamma0 / (1.0 + gamma0 * rho * np.asarray(tau_delay))


@dataclass
class RecoveryFit:
    model_choice: str
    exponential: FitResult | None
    recombination: FitResult | None
    errors: dict[str, str] = field(default_factory=dict)

    @property
    def selected(self) -> FitResult:
        return self.exponential if self.model_choice == "exponential" else self.recombination


def fit_recovery(tau_delays, added_gamma) -> RecoveryFit:
    """Fit relaxation-limited and recombination-limited recovery curves.

    Both ``gamma0*exp(-t/tau)`` and ``gamma0/(1 + gamma0*rho*t)`` are fitted;
    the branch with the lower residual norm is selected. A branch that fails
    is reported in ``errors`` instead of raising, unless both fail.
    """
    t, g = _sorted_xy(tau_delays, added_gamma)
    if t.size < 5:
        raise ValueError("need at least 5 delays")
    pos = g > 0
    if pos.sum() < 2:
        raise DegenerateFitError("recovery curve has fewer than two positive points")
    errors: dict[str, str] = {}

    exp_res = rec_res = None
    try:
        slope, icpt = np.polyfit(t[pos], np.log(g[pos]), 1)
        tau0 = -1.0 / slope if slope < 0 else np.ptp(t)
        exp_res = levenberg_marquardt(
            lambda p: recovery_exponential(t, *p) - g,
            [math.exp(icpt), tau0],
            ["gamma0", "tau"],
            lower=[0.0, 1e-12 * max(tau0, 1e-300)],
        )
        if not exp_res.converged:
            errors["exponential"] = "did not converge"
    except FitError as exc:
        errors["exponential"] = str(exc)
        exp_res = None

    try:
        slope, icpt = np.polyfit(t[pos], 1.0 / g[pos], 1)
        gamma0 = 1.0 / icpt if icpt > 0 else float(g[pos][0])
        rho0 = max(slope, 1e-12)
        rec_res = levenberg_marquardt(
            lambda p: recovery_recombination(t, *p) - g,
            [gamma0, rho0],
            ["gamma0", "rho"],
            lower=[0.0, 0.0],
        )
        if not rec_res.converged:
            errors["recombination"] = "did not converge"
    except FitError as exc:
        errors["recombination"] = str(exc)
        rec_res = None

    candidates = [
        (res.residual_norm, name)
        for name, res in (("exponential", exp_res), ("recombination", rec_res))
        if res is not None and name not in errors
    ]
    if not candidates:
        raise FitError(f"both recovery models failed: {errors}")
    choice = min(candidates)[1]
    return RecoveryFit(choice, exp_res, rec_res, errors)


# ---------------------------------------------------------------------------
# single-shot readout histograms


def double_gaussian(x, p_g, mu_g, mu_e, sigma):
    x = np.asarray(x)
    norm = 1.0 / (sigma * math.sqrt(2 * math.pi))
    return norm * (
        p_g * np.exp(-0.5 * ((x - mu_g) / sigma) ** 2)
        + (1 - p_g) * np.exp(-0.5 * ((x - mu_e) / sigma) ** 2)
    )


def _em_two_gaussians(x, n_iter=50):
    lo, hi = np.percentile(x, [5, 95])
    mu = np.array([lo, hi])
    sigma = max(np.std(x) / 2, 1e-12)
    w = np.array([0.5, 0.5])
    for _ in range(n_iter):
        d = (x[:, None] - mu[None, :]) / sigma
        lik = w * np.exp(-0.5 * d**2)
        tot = lik.sum(axis=1, keepdims=True)
        tot[tot == 0] = 1e-300
        resp = lik / tot
        nk = resp.sum(axis=0)
        if np.any(nk < 1e-9):
            break
        w = nk / x.size
        mu = (resp * x[:, None]).sum(axis=0) / nk
        sigma = math.sqrt(float((resp * (x[:, None] - mu) ** 2).sum()) / x.size)
        sigma = max(sigma, 1e-12)
    return w, mu, sigma


def binned_double_gaussian(edges, n_total, p_g, mu_g, mu_e, sigma):
    """Expected counts per bin of ``n_total`` shots from the two-Gaussian mixture."""
    edges = np.asarray(edges, dtype=float)
    cg = ndtr((edges - mu_g) / sigma)
    ce = ndtr((edges - mu_e) / sigma)
    return n_total * (p_g * np.diff(cg) + (1.0 - p_g) * np.diff(ce))


def fit_double_gaussian(
    shots, ground_hint: float | None = None, single_mode_p: float = 1e-3
) -> FitResult:
    """Fit a shared-width two-Gaussian mixture to single-shot outcomes.

    Shots are histogrammed with Freedman-Diaconis bins and passed to
    :func:`fit_binned_double_gaussian`, which starts from an EM estimate
    of the raw shots.
    """
    x = np.asarray(shots, dtype=float).ravel()
    if x.size < 1000:
        raise ValueError("need at least 1000 shots")
    counts, edges = np.histogram(x, bins=np.histogram_bin_edges(x, bins="fd"))
    w, mu, sigma = _em_two_gaussians(x)
    return fit_binned_double_gaussian(
        edges, counts, ground_hint, single_mode_p, em_start=[w[0], mu[0], mu[1], sigma]
    )


def fit_binned_double_gaussian(
    edges,
    counts,
    ground_hint: float | None = None,
    single_mode_p: float = 1e-3,
    em_start=None,
) -> FitResult:
    """Fit bin-integrated mixture counts with Poisson weights.

    The component nearest ``ground_hint`` is labelled ground; without a
    hint the lower-mean component is. When an F-test finds the second
    component insignificant at level ``single_mode_p``, the single-Gaussian
    solution is returned with ``p_g = 1``. ``flags['unresolved']`` is set
    when the two centers are closer than one width.
    """
    edges = np.asarray(edges, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if edges.size != counts.size + 1 or np.any(np.diff(edges) <= 0):
        raise ValueError("edges must be increasing with one more entry than counts")
    n_total = float(counts.sum())
    centers = 0.5 * (edges[1:] + edges[:-1])
    # Poisson weights so that sparse tails count as much as the main peak
    wts = 1.0 / np.sqrt(np.maximum(counts, 1.0))
    mean = float(np.sum(counts * centers) / n_total)
    sd = float(np.sqrt(np.sum(counts * (centers - mean) ** 2) / n_total))
    cdf = np.cumsum(counts) / n_total
    q = np.interp([0.005, 0.5, 0.995], cdf, centers)
    starts = [] if em_start is None else [list(em_start)]
    starts += [
        [0.5, q[1] - sd, q[1] + sd, 0.7 * sd],
        # small minority component in either tail
        [0.98, q[1], q[2], 0.7 * sd],
        [0.02, q[0], q[1], 0.7 * sd],
    ]

    def resid(p):
        return (binned_double_gaussian(edges, n_total, *p) - counts) * wts

    res = None
    for p0 in starts:
        try:
            cand = levenberg_marquardt(
                resid,
                p0,
                ["p_g", "mu_g", "mu_e", "sigma"],
                lower=[0.0, -np.inf, -np.inf, 1e-12],
                upper=[1.0, np.inf, np.inf, np.inf],
            )
        except DegenerateFitError:
            continue
        if res is None or cand.residual_norm < res.residual_norm:
            res = cand

    # nested comparison with a single Gaussian: keep the second component
    # only if it lowers the residual significantly
    one = levenberg_marquardt(
        lambda p: (binned_double_gaussian(edges, n_total, 1.0, p[0], p[0], p[1]) - counts) * wts,
        [mean, sd],
        ["mu", "sigma"],
        lower=[-np.inf, 1e-12],
    )
    dof = counts.size - 4
    if res is not None and dof > 0 and res.residual_norm > 0:
        f_stat = (one.residual_norm**2 - res.residual_norm**2) / 2 / (res.residual_norm**2 / dof)
        significant = f_dist.sf(f_stat, 2, dof) < single_mode_p
    else:
        significant = res is not None and res.residual_norm < one.residual_norm
    if not significant:
        m, s = one["mu"], one["sigma"]
        res = FitResult(
            params={"p_g": 1.0, "mu_g": m, "mu_e": m, "sigma": s},
            stderr={"p_g": 0.0, "mu_g": one.stderr["mu"], "mu_e": one.stderr["mu"], "sigma": one.stderr["sigma"]},
            residual_norm=one.residual_norm,
            converged=one.converged,
            n_iter=one.n_iter,
            cost_history=one.cost_history,
        )

    prm = res.params
    swap = (
        abs(prm["mu_e"] - ground_hint) < abs(prm["mu_g"] - ground_hint)
        if ground_hint is not None
        else prm["mu_e"] < prm["mu_g"]
    )
    if swap:
        prm["mu_g"], prm["mu_e"] = prm["mu_e"], prm["mu_g"]
        prm["p_g"] = 1.0 - prm["p_g"]
        res.stderr["mu_g"], res.stderr["mu_e"] = res.stderr["mu_e"], res.stderr["mu_g"]
    res.flags["unresolved"] = abs(prm["mu_g"] - prm["mu_e"]) < prm["sigma"]
    return res


# ---------------------------------------------------------------------------
# loss-rate comparisons


@dataclass
class RatioTable:
    bias: np.ndarray
    ratios: dict[tuple[str, str], np.ndarray]

    def as_rows(self):
        keys = list(self.ratios)
        for i, v in enumerate(self.bias):
            yield [float(v)] + [float(self.ratios[k][i]) for k in keys]


@dataclass
class DeltaStats:
    bias: np.ndarray
    delta: np.ndarray
    mean: float


def _common_grid(curves: Mapping[str, tuple[np.ndarray, np.ndarray]]):
    grid = None
    for label, (bias, values) in curves.items():
        bias = np.asarray(bias, dtype=float)
        if np.asarray(values).shape != bias.shape:
            raise GridMismatchError(f"{label}: values and bias differ in length")
        if grid is None:
            grid = bias
        elif bias.shape != grid.shape or not np.allclose(bias, grid, rtol=0, atol=1e-12):
            raise GridMismatchError(f"{label} does not share the bias grid")
    return grid


def loss_ratios(
    curves: Mapping[str, tuple[Sequence[float], Sequence[float]]], noise_floor: float = 0.0
) -> RatioTable:
    """All pairwise ratios ``curves[a] / curves[b]`` for ``a`` listed before ``b``.

    Ratios whose denominator is at or below ``noise_floor`` are NaN.
    """
    grid = _common_grid(curves)
    vals = {k: np.asarray(v[1], dtype=float) for k, v in curves.items()}
    out = {}
    for a, b in itertools.combinations(vals, 2):
        den = vals[b]
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(np.abs(den) > noise_floor, vals[a] / den, np.nan)
        out[(a, b)] = r
    return RatioTable(grid, out)


def delta_gamma(reference, other) -> DeltaStats:
    """Differences ``other - reference`` at equal bias and their mean.

    Both arguments are ``(bias, gamma)`` pairs.
    """
    grid = _common_grid({"reference": reference, "other": other})
    d = np.asarray(other[1], dtype=float) - np.asarray(reference[1], dtype=float)
    return DeltaStats(grid, d, float(np.mean(d)))
