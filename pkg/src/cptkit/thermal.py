"""Temperature-dependent linewidth analysis with model selection.

Three phenomenological families describe linewidth vs temperature:
linear a*T + b, cubic a*T^3 + b, and an anchored cubic a*T^3 + y0 whose
offset y0 is pinned to the intercept of the linear fit on the same point
subset. Incremental in-sample R^2 over growing prefixes of the series
locates the linear-to-cubic cutoff temperature.
"""

from dataclasses import dataclass
import csv
import math

import numpy as np

from .errors import BadInput, InsufficientPoints
from .lineshapes import _MODELS, Curve1D, LineFitResult, r_squared

FAMILY_KINDS = ("linear", "cubic", "cubic_anchored")


def _linear_model(x, a, b):
    return a * x + b


def _cubic_model(x, a, b):
    return a * x**3 + b


def _cubic_anchored_model(x, a, y0):
    return a * x**3 + y0


# register so LineFitResult.evaluate works for these fits too
_MODELS["thermal_linear"] = (_linear_model, ("a", "b"))
_MODELS["thermal_cubic"] = (_cubic_model, ("a", "b"))
_MODELS["thermal_cubic_anchored"] = (_cubic_anchored_model, ("a", "y0"))


@dataclass(frozen=True)
class ThermalSeries:
    """Linewidth (Hz) vs temperature (K), with optional 1-sigma errors."""

    temperatures: np.ndarray
    linewidths: np.ndarray
    linewidth_errors: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.temperatures, dtype=np.float64)
        w = np.asarray(self.linewidths, dtype=np.float64)
        object.__setattr__(self, "temperatures", t)
        object.__setattr__(self, "linewidths", w)
        if t.ndim != 1 or t.shape != w.shape:
            raise BadInput("temperatures and linewidths must be 1-D and equal length")
        if t.size >= 2 and np.any(np.diff(t) <= 0):
            raise BadInput("temperatures must be strictly ascending")
        if np.any(w <= 0):
            raise BadInput("linewidths must be positive")
        if self.linewidth_errors is not None:
            e = np.asarray(self.linewidth_errors, dtype=np.float64)
            object.__setattr__(self, "linewidth_errors", e)
            if e.shape != w.shape or np.any(e <= 0):
                raise BadInput("linewidth_errors must match length and be positive")

    def __len__(self):
        return self.temperatures.size


@dataclass(frozen=True)
class ModelFamily:
    """One of the three fitting strategies.

    For kind="cubic_anchored", y0 may be given explicitly; when left
    None it is taken from the linear fit's intercept on the same point
    subset during fitting (the default analysis procedure).
    """

    kind: str
    y0: float | None = None

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise BadInput(f"kind must be one of {FAMILY_KINDS}")
        if self.y0 is not None and self.kind != "cubic_anchored":
            raise BadInput("y0 only applies to the cubic_anchored family")


def load_thermal_csv(path) -> ThermalSeries:
    """Read a series from CSV columns temperature_K, linewidth_MHz, error_MHz."""
    temps, widths, errs = [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.lstrip().startswith("#"))
        required = {"temperature_K", "linewidth_MHz"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise BadInput(
                f"{path}: line 1: header must contain temperature_K, linewidth_MHz"
            )
        has_err = "error_MHz" in reader.fieldnames
        for i, row in enumerate(reader, start=2):
            try:
                temps.append(float(row["temperature_K"]))
                widths.append(float(row["linewidth_MHz"]) * 1e6)
                if has_err:
                    errs.append(float(row["error_MHz"]) * 1e6)
            except (TypeError, ValueError) as exc:
                raise BadInput(f"{path}: line {i}: {exc}") from exc
    return ThermalSeries(
        temperatures=np.array(temps),
        linewidths=np.array(widths),
        linewidth_errors=np.array(errs) if has_err and errs else None,
    )


def _lstsq_fit(x_cols: np.ndarray, y: np.ndarray):
    """Ordinary least squares with covariance; x_cols is the design matrix."""
    beta, *_ = np.linalg.lstsq(x_cols, y, rcond=None)
    resid = y - x_cols @ beta
    n, p = x_cols.shape
    dof = max(n - p, 1)
    s2 = float(resid @ resid) / dof
    try:
        cov = s2 * np.linalg.inv(x_cols.T @ x_cols)
    except np.linalg.LinAlgError:
        cov = np.full((p, p), np.nan)
    return beta, cov


def fit_thermal_model(
    series: ThermalSeries, family: ModelFamily, n_points: int
) -> LineFitResult:
    """Unweighted least-squares fit of one family to the first n_points.

    Error bars are carried for reporting only; the fits themselves are
    ordinary least squares. R^2 is computed in-sample on the fitted
    subset.
    """
    n = int(n_points)
    if n < 2:
        raise InsufficientPoints(f"need at least 2 points, got {n}")
    if n > len(series):
        raise InsufficientPoints(
            f"requested {n} points but series has only {len(series)}"
        )
    t = series.temperatures[:n]
    y = series.linewidths[:n]
    ones = np.ones_like(t)

    if family.kind == "linear":
        beta, cov = _lstsq_fit(np.column_stack([t, ones]), y)
        model, names = "thermal_linear", ("a", "b")
    elif family.kind == "cubic":
        beta, cov = _lstsq_fit(np.column_stack([t**3, ones]), y)
        model, names = "thermal_cubic", ("a", "b")
    else:
        if family.y0 is not None:
            y0 = float(family.y0)
        else:
            lin, _ = _lstsq_fit(np.column_stack([t, ones]), y)
            y0 = float(lin[1])
        a_beta, a_cov = _lstsq_fit((t**3)[:, None], y - y0)
        beta = np.array([a_beta[0], y0])
        cov = np.zeros((2, 2))
        cov[0, 0] = a_cov[0, 0]
        model, names = "thermal_cubic_anchored", ("a", "y0")

    params = {k: float(v) for k, v in zip(names, beta)}
    fn = _MODELS[model][0]
    values = fn(t, *beta)
    try:
        r2 = r_squared(Curve1D(t, y), values)
    except Exception:
        r2 = math.nan
    errs = {
        k: float(np.sqrt(cov[i, i])) if np.isfinite(cov[i, i]) and cov[i, i] >= 0 else math.nan
        for i, k in enumerate(names)
    }
    return LineFitResult(
        model=model,
        params=params,
        covariance=cov,
        param_errors=errs,
        r_squared=r2,
        flags={"n_points": n},
    )


def incremental_r2(series: ThermalSeries, family: ModelFamily) -> np.ndarray:
    """In-sample R^2 for fits on the first n points, n = 3..N.

    Entry k corresponds to n_points = k + 3; the temperature of the last
    included point is series.temperatures[k + 2].
    """
    if len(series) < 3:
        raise InsufficientPoints("incremental R^2 needs at least 3 points")
    out = np.empty(len(series) - 2)
    for k in range(out.size):
        out[k] = fit_thermal_model(series, family, k + 3).r_squared
    return out


def detect_cutoff(r2_sequence, temperatures):
    """Temperature of the first interior local maximum of an R^2 sequence.

    ``temperatures`` must be aligned with the sequence (one temperature
    per entry: the last point included in that fit). A local maximum at
    k means r2[k] > r2[k-1] and r2[k] >= r2[k+1]; ties therefore resolve
    toward lower temperature. Returns None when no interior local
    maximum exists (a reportable outcome, not an error).
    """
    r2 = np.asarray(r2_sequence, dtype=np.float64)
    temps = np.asarray(temperatures, dtype=np.float64)
    if r2.ndim != 1 or r2.size < 3:
        raise BadInput("r2_sequence must have at least 3 entries")
    if temps.shape != r2.shape:
        raise BadInput("temperatures must align one-to-one with r2_sequence")
    for k in range(1, r2.size - 1):
        if r2[k] > r2[k - 1] and r2[k] >= r2[k + 1]:
            return float(temps[k])
    return None


def cutoff_temperatures(series: ThermalSeries) -> np.ndarray:
    """Temperatures aligned with incremental_r2 output (last fitted point)."""
    return series.temperatures[2:]


def total_abs_error(series: ThermalSeries, fit: LineFitResult, index_range) -> float:
    """Sum of |measured - model| linewidth over the given point indices."""
    idx = np.asarray(list(index_range), dtype=np.intp)
    if idx.size == 0:
        return 0.0
    if np.any(idx < 0) or np.any(idx >= len(series)):
        raise BadInput("index_range out of bounds")
    t = series.temperatures[idx]
    y = series.linewidths[idx]
    return float(np.sum(np.abs(y - fit.evaluate(t))))
