"""Weighted least-squares fits for the spectroscopy line shapes.

Levenberg-Marquardt (scipy.optimize.curve_fit) with a Nelder-Mead
fallback when LM fails to converge. Weighting uses y_err when present,
otherwise fits are unweighted.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit, minimize
from scipy.signal import find_peaks

from .errors import (
    BadInput,
    DegenerateComponents,
    FitDiverged,
    InsufficientPoints,
    ZeroVariance,
)


@dataclass(frozen=True)
class Curve1D:
    """One measured curve: x strictly increasing, optional 1-sigma y errors."""

    x: np.ndarray
    y: np.ndarray
    y_err: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if x.ndim != 1 or x.shape != y.shape:
            raise BadInput("x and y must be 1-D arrays of equal length")
        if x.size >= 2 and np.any(np.diff(x) <= 0):
            raise BadInput("x must be strictly increasing")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise BadInput("x and y must be finite")
        if self.y_err is not None:
            e = np.asarray(self.y_err, dtype=np.float64)
            object.__setattr__(self, "y_err", e)
            if e.shape != y.shape or np.any(e <= 0):
                raise BadInput("y_err must match y in length and be > 0")


@dataclass
class LineFitResult:
    """Fitted parameters with covariance-derived 1-sigma errors."""

    model: str
    params: dict
    covariance: np.ndarray
    param_errors: dict
    r_squared: float
    fwhm: float | None = None
    flags: dict = field(default_factory=dict)

    def evaluate(self, x) -> np.ndarray:
        """Evaluate the fitted model on new x values."""
        fn, names = _MODELS[self.model]
        return fn(np.asarray(x, dtype=np.float64), *[self.params[n] for n in names])


# -- model shapes ----------------------------------------------------------

def lorentzian(x, amplitude, fwhm, center, background):
    """A * (G/2)^2 / ((x - x0)^2 + (G/2)^2) + bg."""
    hw = 0.5 * fwhm
    return amplitude * hw**2 / ((x - center) ** 2 + hw**2) + background


def double_lorentzian(x, amp_1, fwhm_1, center_1, amp_2, fwhm_2, center_2, background):
    """Two Lorentzians sharing one background level."""
    return (
        lorentzian(x, amp_1, fwhm_1, center_1, 0.0)
        + lorentzian(x, amp_2, fwhm_2, center_2, 0.0)
        + background
    )


def gaussian_dip(x, amplitude, sigma, center, background):
    """Inverted Gaussian: bg - A * exp(-(x - c)^2 / (2 sigma^2))."""
    return background - amplitude * np.exp(-((x - center) ** 2) / (2.0 * sigma**2))


def exponential_decay(t, amplitude, tau, background):
    """A * exp(-t / tau) + bg."""
    return amplitude * np.exp(-t / tau) + background


def saturation_curve(p, f_sat, p_sat):
    """F_sat * P / (P_sat + P) + 0.5, with the 0.5 kc/s dark-count offset fixed."""
    return f_sat * p / (p_sat + p) + 0.5


def g2_model(tau, p, c, tau_a, tau_b, offset):
    """Antibunching dip with a bunching shoulder; g2(offset) = 1 - p^2."""
    d = np.abs(tau - offset)
    return 1.0 + p**2 * (c * np.exp(-d / tau_b) - (1.0 + c) * np.exp(-d / tau_a))


_MODELS = {
    "lorentzian": (lorentzian, ("amplitude", "fwhm", "center", "background")),
    "double_lorentzian": (
        double_lorentzian,
        ("amp_1", "fwhm_1", "center_1", "amp_2", "fwhm_2", "center_2", "background"),
    ),
    "gaussian_dip": (gaussian_dip, ("amplitude", "sigma", "center", "background")),
    "exponential": (exponential_decay, ("amplitude", "tau", "background")),
    "saturation": (saturation_curve, ("f_sat", "p_sat")),
    "g2": (g2_model, ("p", "c", "tau_a", "tau_b", "offset")),
}


# -- fitting machinery -----------------------------------------------------

def r_squared(data: Curve1D, model_values) -> float:
    """1 - SS_res / SS_tot with SS_tot about the mean of y."""
    model_values = np.asarray(model_values, dtype=np.float64)
    if model_values.shape != data.y.shape:
        raise BadInput("model_values must match data length")
    resid = data.y - model_values
    ss_tot = float(np.sum((data.y - np.mean(data.y)) ** 2))
    if ss_tot == 0.0:
        raise ZeroVariance("all y values are equal; R^2 is undefined")
    return 1.0 - float(np.sum(resid**2)) / ss_tot


def _numerical_jacobian(fn, x, popt):
    n, p = x.size, len(popt)
    jac = np.empty((n, p))
    f0 = fn(x, *popt)
    for j in range(p):
        h = 1e-6 * max(abs(popt[j]), 1e-12)
        q = list(popt)
        q[j] += h
        jac[:, j] = (fn(x, *q) - f0) / h
    return jac


def _fit(fn, data: Curve1D, p0, max_nfev=20000):
    """LM first, simplex fallback; returns (popt, pcov, fallback_used)."""
    sigma = data.y_err
    try:
        with warnings.catch_warnings():
            # exact synthetic data leaves zero residuals; the resulting
            # singular covariance is handled via nan param_errors
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, pcov = curve_fit(
                fn, data.x, data.y, p0=p0, sigma=sigma, maxfev=max_nfev
            )
        if np.all(np.isfinite(popt)):
            return popt, pcov, False
    except (RuntimeError, ValueError, TypeError):
        pass

    w = 1.0 / sigma if sigma is not None else np.ones_like(data.y)

    def sse(q):
        try:
            r = (data.y - fn(data.x, *q)) * w
        except (FloatingPointError, OverflowError):
            return 1e300
        r = np.nan_to_num(r, nan=1e150, posinf=1e150, neginf=-1e150)
        return float(np.dot(r, r))

    res = minimize(sse, p0, method="Nelder-Mead", options={"maxiter": 5000, "xatol": 1e-10, "fatol": 1e-14})
    popt = res.x
    if not np.all(np.isfinite(popt)):
        raise FitDiverged("optimizer produced non-finite parameters")
    dof = max(data.x.size - len(popt), 1)
    s2 = sse(popt) / dof
    jac = _numerical_jacobian(fn, data.x, popt)
    try:
        pcov = s2 * np.linalg.inv(jac.T @ jac)
    except np.linalg.LinAlgError:
        pcov = np.full((len(popt), len(popt)), np.nan)
    return popt, pcov, True


def _result(model, data, popt, pcov, fwhm=None, flags=None) -> LineFitResult:
    fn, names = _MODELS[model]
    params = {n: float(v) for n, v in zip(names, popt)}
    errs = {}
    for i, n in enumerate(names):
        v = pcov[i, i]
        errs[n] = float(np.sqrt(v)) if np.isfinite(v) and v >= 0 else math.nan
    values = fn(data.x, *popt)
    try:
        r2 = r_squared(data, values)
    except ZeroVariance:
        r2 = math.nan
    out = LineFitResult(
        model=model,
        params=params,
        covariance=np.asarray(pcov),
        param_errors=errs,
        r_squared=r2,
        fwhm=fwhm,
        flags=dict(flags or {}),
    )
    if np.isfinite(r2) and r2 < 0.2:
        out.flags["low_r_squared"] = True
    return out


def _require_points(data: Curve1D, n: int, what: str):
    if data.x.size < n:
        raise InsufficientPoints(f"{what} needs at least {n} points, got {data.x.size}")


# -- public fits -----------------------------------------------------------

def fit_lorentzian(data: Curve1D) -> LineFitResult:
    """Single Lorentzian peak or dip; returns the FWHM in x units."""
    _require_points(data, 5, "fit_lorentzian")
    y = data.y
    med = float(np.median(y))
    if float(np.max(y)) - med >= med - float(np.min(y)):
        bg0 = float(np.min(y))
        a0 = float(np.max(y)) - bg0
        c0 = _vertex_refine(data.x, y, int(np.argmax(y)))
        g0 = _halfmax_width(data.x, y, bg0 + 0.5 * a0)
    else:
        bg0 = float(np.max(y))
        a0 = float(np.min(y)) - bg0
        c0 = _vertex_refine(data.x, y, int(np.argmin(y)))
        g0 = _halfmax_width(data.x, -y, -(bg0 + 0.5 * a0))
    if a0 == 0:
        raise FitDiverged("data has no peak or dip relative to its background")
    popt, pcov, fb = _fit(lorentzian, data, [a0, g0, c0, bg0])
    popt[1] = abs(popt[1])
    if popt[1] <= 0 or not np.isfinite(popt[1]):
        raise FitDiverged("fitted FWHM is not positive")
    return _result(
        "lorentzian", data, popt, pcov, fwhm=float(popt[1]),
        flags={"fallback_minimizer": fb} if fb else None,
    )


def _halfmax_width(x, y, level) -> float:
    above = np.nonzero(y >= level)[0]
    if above.size >= 2:
        w = float(x[above[-1]] - x[above[0]])
        if w > 0:
            return w
    return float((x[-1] - x[0]) / 4.0) or 1.0


def _vertex_refine(x, y, idx) -> float:
    """Sub-sample apex position from a parabola through three samples.

    A center seeded from a raw grid sample can land exactly on 0.0, where
    the LM jacobian's relative step degenerates to zero and the parameter
    never moves; the refined vertex avoids that and is a better start
    anyway. Falls back to the sample position if the parabola is flat or
    the vertex escapes the bracketing samples.
    """
    if idx <= 0 or idx >= x.size - 1:
        return float(x[idx])
    x0, x1, x2 = float(x[idx - 1]), float(x[idx]), float(x[idx + 1])
    y0, y1, y2 = float(y[idx - 1]), float(y[idx]), float(y[idx + 1])
    denom = (y0 - y1) * (x1 - x2) - (y1 - y2) * (x0 - x1)
    if denom == 0 or not math.isfinite(denom):
        return x1
    num = (y0 - y1) * (x1 * x1 - x2 * x2) - (y1 - y2) * (x0 * x0 - x1 * x1)
    vertex = 0.5 * num / denom
    if not math.isfinite(vertex) or not (x0 <= vertex <= x2):
        return x1
    return vertex


def _two_peak_guess(x, y):
    """Two most prominent local maxima; fall back to split-range maxima."""
    span = x[-1] - x[0]
    peaks, props = find_peaks(y, prominence=0.05 * (np.max(y) - np.min(y)))
    if peaks.size >= 2:
        order = np.argsort(props["prominences"])[::-1]
        i1, i2 = sorted(peaks[order[:2]])
        return i1, i2
    i1 = int(np.argmax(y))
    far = np.abs(x - x[i1]) > span / 4.0
    if not np.any(far):
        return i1, i1
    i2 = int(np.nonzero(far)[0][np.argmax(y[far])])
    return tuple(sorted((i1, i2)))


def fit_double_lorentzian(data: Curve1D, on_degenerate: str = "raise") -> LineFitResult:
    """Two Lorentzians with a shared background.

    fwhm is the mean of the two component widths (the components are
    analyzed separately and averaged). If the two centers collapse to
    within 1% of the mean FWHM: raise DegenerateComponents when
    ``on_degenerate="raise"`` (default), or return the single-Lorentzian
    fit flagged with ``degenerate_fallback`` when "fallback".
    """
    _require_points(data, 9, "fit_double_lorentzian")
    if on_degenerate not in ("raise", "fallback"):
        raise BadInput("on_degenerate must be 'raise' or 'fallback'")
    y = data.y
    bg0 = float(np.min(y))
    i1, i2 = _two_peak_guess(data.x, y)
    g0 = max(float(data.x[-1] - data.x[0]) / 10.0, 1e-12)
    p0 = [
        y[i1] - bg0, g0, _vertex_refine(data.x, y, i1),
        y[i2] - bg0, g0, _vertex_refine(data.x, y, i2),
        bg0,
    ]
    popt, pcov, fb = _fit(double_lorentzian, data, p0)
    popt[1] = abs(popt[1])
    popt[4] = abs(popt[4])
    mean_fwhm = 0.5 * (popt[1] + popt[4])
    if mean_fwhm <= 0 or not np.isfinite(mean_fwhm):
        raise FitDiverged("fitted widths are not positive")
    sep = abs(popt[2] - popt[5])
    if sep < 0.01 * mean_fwhm:
        if on_degenerate == "raise":
            raise DegenerateComponents(
                f"centers separated by {sep:.4g}, under 1% of mean FWHM {mean_fwhm:.4g}"
            )
        single = fit_lorentzian(data)
        single.flags["degenerate_fallback"] = True
        return single
    flags = {"fallback_minimizer": fb} if fb else {}
    amps = (abs(popt[0]), abs(popt[3]))
    big = max(amps)
    for comp, a in enumerate(amps, start=1):
        var = pcov[3 * (comp - 1), 3 * (comp - 1)]
        err = math.sqrt(var) if np.isfinite(var) and var >= 0 else math.inf
        # a vanished amplitude, or an amplitude drowned by its own error
        # bar, means this component carries no information; a non-finite
        # error alone does not (exact data gives singular covariance)
        if big > 0 and a < 1e-3 * big:
            flags["unconstrained_component"] = comp
        elif math.isfinite(err) and a > 0 and err > 10.0 * a:
            flags["unconstrained_component"] = comp
    return _result("double_lorentzian", data, popt, pcov, fwhm=float(mean_fwhm), flags=flags)


def fit_gaussian_prefit(data: Curve1D) -> float:
    """Center of a dip from an inverted-Gaussian pre-fit.

    Used only for aligning spectra; returns the fitted center.
    """
    _require_points(data, 5, "fit_gaussian_prefit")
    y = data.y
    imin = int(np.argmin(y))
    if imin == 0 or imin == y.size - 1:
        raise FitDiverged("no interior dip: minimum sits on the range edge")
    bg0 = float(np.max(y))
    a0 = bg0 - float(y[imin])
    if a0 <= 0:
        raise FitDiverged("data has no dip below its maximum")
    c0 = float(data.x[imin])
    half = bg0 - 0.5 * a0
    below = np.nonzero(y <= half)[0]
    if below.size >= 2:
        s0 = max(float(data.x[below[-1]] - data.x[below[0]]) / 2.355, 1e-12)
    else:
        s0 = float(data.x[-1] - data.x[0]) / 8.0
    popt, _, _ = _fit(gaussian_dip, data, [a0, s0, c0, bg0])
    center = float(popt[2])
    if not np.isfinite(center) or not (data.x[0] <= center <= data.x[-1]):
        raise FitDiverged("fitted dip center fell outside the data range")
    return center


def fit_exponential_lifetime(data: Curve1D) -> LineFitResult:
    """A * exp(-t/tau) + bg on a decaying tail; tau is the lifetime."""
    _require_points(data, 4, "fit_exponential_lifetime")
    if np.any(data.y <= 0):
        raise BadInput("exponential lifetime fit expects positive count data")
    span = float(data.x[-1] - data.x[0])
    bg0 = float(data.y[-1])
    a0 = float(data.y[0]) - bg0
    if a0 <= 0:
        raise FitDiverged("data does not decay from its first point")
    drop = np.nonzero(data.y - bg0 < a0 / math.e)[0]
    tau0 = float(data.x[drop[0]] - data.x[0]) if drop.size else span / 3.0
    tau0 = max(tau0, span * 1e-3)
    popt, pcov, fb = _fit(exponential_decay, data, [a0, tau0, bg0])
    tau = float(popt[1])
    if not np.isfinite(tau) or tau <= 0 or tau > 100.0 * span:
        raise FitDiverged(f"decay time unresolved on this window (tau = {tau:.3g})")
    return _result(
        "exponential", data, popt, pcov,
        flags={"fallback_minimizer": fb} if fb else None,
    )


def fit_saturation(data: Curve1D) -> LineFitResult:
    """F_sat * P / (P_sat + P) + 0.5 on power vs count rate in kc/s.

    The 0.5 kc/s dark-count background is fixed, not fitted.
    """
    if np.unique(data.x).size < 3:
        raise InsufficientPoints("fit_saturation needs at least 3 distinct powers")
    f0 = 2.0 * (float(np.max(data.y)) - 0.5)
    if f0 <= 0:
        raise FitDiverged("count rates never exceed the fixed 0.5 kc/s background")
    p0 = float(np.median(data.x))
    popt, pcov, fb = _fit(saturation_curve, data, [f0, max(p0, 1e-30)])
    if not np.isfinite(popt).all() or popt[0] <= 0 or popt[1] <= 0:
        raise FitDiverged("saturation fit produced non-physical parameters")
    return _result(
        "saturation", data, popt, pcov,
        flags={"fallback_minimizer": fb} if fb else None,
    )


def fit_g2(data: Curve1D) -> LineFitResult:
    """Second-order autocorrelation fit.

    g2(tau) = 1 + p^2 [c e^{-|tau-o|/tau_b} - (1+c) e^{-|tau-o|/tau_a}];
    the fitted dip value g2(o) = 1 - p^2 is reported in params.
    """
    _require_points(data, 7, "fit_g2")
    y = data.y
    imin = int(np.argmin(y))
    o0 = float(data.x[imin])
    p0 = math.sqrt(min(max(1.0 - float(y[imin]), 1e-4), 1.0))
    bunch = float(np.max(y)) - 1.0
    c0 = max(bunch / max(p0**2, 1e-6), 0.05)
    half = 1.0 - 0.5 * p0**2
    below = np.nonzero(y <= half)[0]
    if below.size >= 2:
        ta0 = max(float(data.x[below[-1]] - data.x[below[0]]) / 2.0, 1e-12)
    else:
        ta0 = float(data.x[-1] - data.x[0]) / 20.0
    tb0 = 10.0 * ta0
    popt, pcov, fb = _fit(g2_model, data, [p0, c0, ta0, tb0, o0])
    if not np.isfinite(popt).all() or popt[2] <= 0 or popt[3] <= 0:
        raise FitDiverged("g2 fit produced non-physical time constants")
    res = _result(
        "g2", data, popt, pcov,
        flags={"fallback_minimizer": fb} if fb else None,
    )
    res.params["g2_at_offset"] = 1.0 - res.params["p"] ** 2
    return res
