"""CPT dip simulation, fitting, and uncertainty procedures.

The model is the three-level Lindblad engine with the C laser on
resonance (delta_c = 0) and the D laser scanned. Three parameters are
free in a fit: omega_c, omega_d and gamma_minus; gamma_plus is always
derived from gamma_minus through the Boltzmann factor, and the optical
decays are fixed from the lifetime and branching ratio.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .constants import (
    DEFAULT_BRANCH_RATIO,
    DEFAULT_DELTA_12_HZ,
    DEFAULT_TEMPERATURE_K,
    H_PLANCK,
    K_BOLTZMANN,
    TWO_PI,
    branching_rates,
)
from .errors import (
    BadInput,
    FitDiverged,
    ModelAssumptionViolated,
    NumericalInstability,
    UnboundedSensitivity,
)
from .quantum import GROUND_1, SystemRates, build_hamiltonian, build_jump_operators
from .quantum import DriveConfig, evolve_to_steady_state

_SPECTRUM_KINDS = ("population", "fluorescence")

# log-uniform multistart window for gamma_minus: T- between 100 ps and 5 ps
_GAMMA_MINUS_START_LO = 1.0 / 100e-12
_GAMMA_MINUS_START_HI = 1.0 / 5e-12

_SOLVE_RESIDUAL_TOL = 1e-8


def boltzmann_gamma_plus(gamma_minus: float, delta_12: float, temperature: float) -> float:
    """Upward phononic rate fixed by detailed balance.

    gamma_plus = gamma_minus * exp(-h * delta_12 / (k_B * T)).
    """
    if not (math.isfinite(gamma_minus) and gamma_minus >= 0):
        raise BadInput("gamma_minus must be a finite rate >= 0")
    if not delta_12 > 0:
        raise BadInput("delta_12 must be > 0")
    if not temperature > 0:
        raise BadInput("temperature must be > 0")
    return gamma_minus * math.exp(-H_PLANCK * delta_12 / (K_BOLTZMANN * temperature))


@dataclass(frozen=True)
class FixedRates:
    """Optical decay rates held fixed during CPT fitting (1/s)."""

    gamma_c: float
    gamma_d_opt: float

    def __post_init__(self):
        if not (self.gamma_c >= 0 and self.gamma_d_opt >= 0):
            raise BadInput("optical decay rates must be >= 0")

    @classmethod
    def from_lifetime(
        cls, tau_se: float, branch_ratio: float = DEFAULT_BRANCH_RATIO
    ) -> "FixedRates":
        """Split 1/tau_se into C and D decay with the given C:D ratio."""
        if not tau_se > 0:
            raise BadInput("tau_se must be > 0")
        if not branch_ratio > 0:
            raise BadInput("branch_ratio must be > 0")
        gc, gd = branching_rates(tau_se, branch_ratio)
        return cls(gamma_c=gc, gamma_d_opt=gd)


@dataclass(frozen=True)
class CptFitParams:
    """Free CPT parameters plus the fixed thermal context.

    omega_c, omega_d in rad/s; gamma_minus, gamma_deph in 1/s.
    gamma_plus is never stored: it is derived via the Boltzmann factor.
    """

    omega_c: float
    omega_d: float
    gamma_minus: float
    gamma_deph: float = 0.0
    delta_12: float = DEFAULT_DELTA_12_HZ
    temperature: float = DEFAULT_TEMPERATURE_K

    def __post_init__(self):
        if not (self.omega_c >= 0 and self.omega_d >= 0):
            raise BadInput("Rabi frequencies must be >= 0")
        if not (self.gamma_minus >= 0 and self.gamma_deph >= 0):
            raise BadInput("rates must be >= 0")
        if not (self.delta_12 > 0 and self.temperature > 0):
            raise BadInput("delta_12 and temperature must be > 0")

    @property
    def gamma_plus(self) -> float:
        return boltzmann_gamma_plus(self.gamma_minus, self.delta_12, self.temperature)

    def replace(self, **kw) -> "CptFitParams":
        d = {
            "omega_c": self.omega_c,
            "omega_d": self.omega_d,
            "gamma_minus": self.gamma_minus,
            "gamma_deph": self.gamma_deph,
            "delta_12": self.delta_12,
            "temperature": self.temperature,
        }
        d.update(kw)
        return CptFitParams(**d)


@dataclass(frozen=True)
class CptSpectrum:
    """A CPT dip: excited-state population (or fluorescence) vs D detuning."""

    detunings_d: np.ndarray  # Hz, strictly increasing
    values: np.ndarray
    kind: str = "population"

    def __post_init__(self):
        det = np.asarray(self.detunings_d, dtype=np.float64)
        val = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "detunings_d", det)
        object.__setattr__(self, "values", val)
        if det.ndim != 1 or det.shape != val.shape:
            raise BadInput("detunings and values must be 1-D arrays of equal length")
        if det.size >= 2 and np.any(np.diff(det) <= 0):
            raise BadInput("detunings must be strictly increasing")
        if not np.all(np.isfinite(val)) or np.any(val < 0):
            raise BadInput("spectrum values must be finite and >= 0")
        if self.kind not in _SPECTRUM_KINDS:
            raise BadInput(f"kind must be one of {_SPECTRUM_KINDS}")


@dataclass
class CptFitReport:
    """Result of a CPT fit plus derived lifetimes and uncertainties."""

    params: CptFitParams
    fixed: FixedRates
    t_plus: float
    t_minus: float
    residual: float
    dip_population: float
    detunings_d: np.ndarray
    uncertainties: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)


def _rho33_direct(params: CptFitParams, fixed: FixedRates, detunings_hz) -> np.ndarray:
    """Model rho_33 on a detuning grid via the direct steady-state solve."""
    det = np.ascontiguousarray(np.asarray(detunings_hz, dtype=np.float64) * TWO_PI)
    values, worst = _kernels.cpt_rho33_direct(
        params.omega_c,
        params.omega_d,
        params.gamma_plus,
        params.gamma_minus,
        fixed.gamma_c,
        fixed.gamma_d_opt,
        params.gamma_deph,
        0.0,
        det,
    )
    if not np.isfinite(worst) or worst > _SOLVE_RESIDUAL_TOL:
        raise NumericalInstability(
            f"steady-state solve residual {worst:.3e} exceeds {_SOLVE_RESIDUAL_TOL:.0e}"
        )
    return np.maximum(np.asarray(values), 0.0)


def _dip_value(params: CptFitParams, fixed: FixedRates) -> float:
    """Model rho_33 at exact two-photon resonance (delta_d = delta_c = 0)."""
    return float(_rho33_direct(params, fixed, np.array([0.0]))[0])


def _system_rates(params: CptFitParams, fixed: FixedRates) -> SystemRates:
    return SystemRates(
        gamma_c=fixed.gamma_c,
        gamma_d_opt=fixed.gamma_d_opt,
        gamma_plus=params.gamma_plus,
        gamma_minus=params.gamma_minus,
        gamma_deph=params.gamma_deph,
        delta_12=params.delta_12,
        temperature=params.temperature,
    )


def simulate_cpt_spectrum(
    params: CptFitParams,
    rates_fixed: FixedRates,
    grid,
    *,
    method: str = "evolve",
    t_final: float = 1e-6,
    rtol: float = 1e-9,
    atol: float = 1e-12,
) -> CptSpectrum:
    """Steady-state dip spectrum over a D-detuning grid (Hz), C on resonance.

    ``method="evolve"`` integrates the master equation to t_final for each
    grid point (the reference route); ``method="direct"`` uses the
    algebraic null-space solve (much faster, numerically equivalent).
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 1:
        raise BadInput("grid must be a non-empty 1-D array of detunings in Hz")
    if grid.size >= 2 and np.any(np.diff(grid) <= 0):
        raise BadInput("grid must be strictly increasing")
    if method == "direct":
        values = _rho33_direct(params, rates_fixed, grid)
    elif method == "evolve":
        jumps = build_jump_operators(_system_rates(params, rates_fixed))
        values = np.empty(grid.size)
        for i, det in enumerate(grid):
            drive = DriveConfig(
                omega_c=params.omega_c,
                omega_d=params.omega_d,
                delta_c=0.0,
                delta_d=TWO_PI * det,
            )
            rho = evolve_to_steady_state(
                GROUND_1, build_hamiltonian(drive), jumps, t_final, rtol=rtol, atol=atol
            )
            values[i] = max(rho[2, 2].real, 0.0)
    else:
        raise BadInput(f"unknown method {method!r}")
    return CptSpectrum(detunings_d=grid, values=values, kind="population")


def estimate_dip_fwhm(params: CptFitParams, fixed: FixedRates) -> float:
    """Numeric FWHM (Hz) of the CPT dip, from half-depth bisection."""
    dip = _dip_value(params, fixed)
    far = 50.0 * max(params.omega_d, params.gamma_minus, params.omega_c) / TWO_PI
    tail = float(_rho33_direct(params, fixed, np.array([far]))[0])
    depth = tail - dip
    if depth <= 0 or tail <= 0 or depth < 1e-9 * tail:
        raise BadInput("spectrum has no resolvable dip for these parameters")
    half = dip + 0.5 * depth
    lo, hi = 0.0, far
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        v = float(_rho33_direct(params, fixed, np.array([mid]))[0])
        if v < half:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-4 * max(hi, 1.0):
            break
    return 2.0 * 0.5 * (lo + hi)


def default_detuning_grid(
    params: CptFitParams,
    fixed: FixedRates,
    n_points: int = 201,
    span_fwhm: float = 6.0,
) -> np.ndarray:
    """Symmetric grid (Hz) spanning +-span_fwhm dip widths, 0 included."""
    if n_points < 3:
        raise BadInput("n_points must be >= 3")
    fwhm = estimate_dip_fwhm(params, fixed)
    return np.linspace(-span_fwhm * fwhm, span_fwhm * fwhm, int(n_points))


def _quadratic_at_zero(x: np.ndarray, y: np.ndarray) -> float:
    """Value at 0 of the quadratic through three (x, y) points."""
    coeffs = np.polyfit(x, y, 2)
    return float(np.polyval(coeffs, 0.0))


def _dip_from_grid(values: np.ndarray, detunings_hz: np.ndarray) -> float:
    """Model dip at two-photon resonance from the grid point nearest 0,
    with local quadratic interpolation."""
    idx = int(np.argmin(np.abs(detunings_hz)))
    lo = min(max(idx - 1, 0), len(detunings_hz) - 3)
    sl = slice(lo, lo + 3)
    return _quadratic_at_zero(detunings_hz[sl], values[sl])


def _tail_level(values: np.ndarray) -> float:
    """Mean of the outer 10% of samples on each side."""
    n = len(values)
    k = max(1, n // 10)
    return float(np.mean(np.concatenate([values[:k], values[-k:]])))


def fit_cpt(
    spectrum: CptSpectrum,
    fixed: FixedRates,
    init: CptFitParams,
    *,
    n_starts: int = 20,
    seed: int = 0,
    xatol: float = 1e-6,
    maxiter: int = 2000,
) -> CptFitReport:
    """Least-squares CPT fit over (omega_c, omega_d, gamma_minus).

    Derivative-free simplex minimization in log-parameter space with a
    multistart schedule: the user guess first, then ``n_starts - 1``
    seeded random restarts with gamma_minus log-uniform in
    [1/(100 ps), 1/(5 ps)] and the Rabi frequencies within a factor 10 of
    the guess. gamma_plus tracks gamma_minus through the Boltzmann factor
    at every evaluation.
    """
    if spectrum.kind != "population":
        raise BadInput("fit_cpt requires a population-scaled spectrum")
    if spectrum.detunings_d.size < 10:
        raise BadInput("spectrum must have at least 10 points")
    if not (init.omega_c > 0 and init.omega_d > 0 and init.gamma_minus > 0):
        raise BadInput("initial guess must have positive omega_c, omega_d, gamma_minus")

    x_exp = spectrum.values
    grid = spectrum.detunings_d
    tail = _tail_level(x_exp)
    depth = tail - float(np.min(x_exp))
    if tail <= 0 or depth <= 1e-3 * tail:
        raise FitDiverged("spectrum shows no dip; CPT parameters are unidentifiable")

    ss_data = float(np.dot(x_exp, x_exp))
    sse_floor = 1e-14 * max(ss_data, 1e-300)

    def make_params(theta) -> CptFitParams:
        oc, od, gm = np.exp(theta)
        return init.replace(omega_c=oc, omega_d=od, gamma_minus=gm)

    def objective(theta) -> float:
        try:
            model = _rho33_direct(make_params(theta), fixed, grid)
        except (NumericalInstability, np.linalg.LinAlgError, OverflowError):
            return 1e30
        r = x_exp - model
        return float(np.dot(r, r))

    theta_init = np.log([init.omega_c, init.omega_d, init.gamma_minus])
    sse_init = objective(theta_init)

    rng = np.random.default_rng(seed)
    starts = [theta_init]
    for _ in range(max(0, n_starts - 1)):
        gm = math.exp(
            rng.uniform(math.log(_GAMMA_MINUS_START_LO), math.log(_GAMMA_MINUS_START_HI))
        )
        oc = init.omega_c * 10.0 ** rng.uniform(-1.0, 1.0)
        od = init.omega_d * 10.0 ** rng.uniform(-1.0, 1.0)
        starts.append(np.log([oc, od, gm]))

    fatol = max(1e-300, 1e-16 * ss_data)
    best_theta = theta_init
    best_sse = sse_init
    n_used = 0
    early = sse_init <= sse_floor
    if not early:
        for theta0 in starts:
            res = minimize(
                objective,
                theta0,
                method="Nelder-Mead",
                options={"xatol": xatol, "fatol": fatol, "maxiter": maxiter},
            )
            n_used += 1
            if np.isfinite(res.fun) and res.fun < best_sse:
                best_sse = float(res.fun)
                best_theta = np.asarray(res.x)
            if best_sse <= sse_floor:
                early = True
                break

    if not np.isfinite(best_sse) or best_sse > sse_init:
        raise FitDiverged(
            f"minimizer failed to improve on the initial guess (SSE {best_sse:.3e} "
            f"vs initial {sse_init:.3e})"
        )

    params = make_params(best_theta)
    model = _rho33_direct(params, fixed, grid)
    gp = params.gamma_plus
    report = CptFitReport(
        params=params,
        fixed=fixed,
        t_plus=math.inf if gp == 0 else 1.0 / gp,
        t_minus=math.inf if params.gamma_minus == 0 else 1.0 / params.gamma_minus,
        residual=best_sse,
        dip_population=_dip_from_grid(model, grid),
        detunings_d=grid.copy(),
        flags={"n_starts_used": n_used, "early_stop": early, "sse_init": sse_init},
    )
    return report


_SENSITIVITY_PARAMS = ("omega_c", "omega_d", "gamma_minus")


def sensitivity(
    report: CptFitReport,
    fraction: float = 0.05,
    *,
    step: float = 1.05,
    max_decades: float = 3.0,
    strict: bool = True,
) -> dict:
    """Per-parameter uncertainty from the dip-change criterion.

    Each fitted parameter is scaled away from the optimum in 5% (factor
    ``step``) multiplicative increments, in both directions, until the
    model dip population at two-photon resonance changes by more than
    ``fraction`` relative. The larger excursion of the two directions is
    the uncertainty. If neither direction triggers within ``max_decades``
    decades the parameter is unbounded: strict mode raises
    UnboundedSensitivity, otherwise the value is +inf and flagged.

    Also derives t_minus / t_plus uncertainties from the gamma_minus
    stopping points. Results are stored on ``report.uncertainties``.
    """
    if not fraction > 0:
        raise BadInput("fraction must be > 0")
    if not step > 1:
        raise BadInput("step must be > 1")
    params = report.params
    fixed = report.fixed
    base = _dip_value(params, fixed)
    denom = max(abs(base), 1e-300)
    k_max = int(math.ceil(max_decades / math.log10(step)))

    out: dict[str, float] = {}
    one_sided: list[str] = []
    unbounded: list[str] = []
    gm_stops: dict[int, float] = {}

    for name in _SENSITIVITY_PARAMS:
        p0 = getattr(params, name)
        excursions = []
        for direction in (+1, -1):
            stop = None
            for k in range(1, k_max + 1):
                pk = p0 * step ** (direction * k)
                trial = params.replace(**{name: pk})
                dip = _dip_value(trial, fixed)
                if abs(dip - base) / denom > fraction:
                    stop = pk
                    break
            if stop is not None:
                excursions.append(abs(stop - p0))
                if name == "gamma_minus":
                    gm_stops[direction] = stop
        if not excursions:
            if strict:
                raise UnboundedSensitivity(
                    f"dip changed by less than {fraction:.3g} over +-{max_decades} "
                    f"decades of {name}"
                )
            unbounded.append(name)
            out[name] = math.inf
        else:
            if len(excursions) == 1:
                one_sided.append(name)
            out[name] = max(excursions)

    gm = params.gamma_minus
    if math.isinf(out["gamma_minus"]):
        out["t_minus"] = math.inf
        out["t_plus"] = math.inf
    else:
        t_exc = [abs(1.0 / s - 1.0 / gm) for s in gm_stops.values()]
        out["t_minus"] = max(t_exc)
        ratio = params.gamma_plus / gm
        tp_exc = [abs(1.0 / (s * ratio) - 1.0 / (gm * ratio)) for s in gm_stops.values()]
        out["t_plus"] = max(tp_exc)

    report.uncertainties = dict(out)
    report.flags["sensitivity"] = {
        "fraction": fraction,
        "step": step,
        "one_sided": one_sided,
        "unbounded": unbounded,
    }
    return out


def _visibility(params: CptFitParams, fixed: FixedRates, tail_detuning: float) -> float:
    dip = _dip_value(params, fixed)
    tail = float(_rho33_direct(params, fixed, np.array([tail_detuning]))[0])
    if tail <= 0:
        raise ModelAssumptionViolated("tail population is zero; visibility undefined")
    return 1.0 - dip / tail


def dephasing_upper_bound(
    report: CptFitReport,
    visibility_drop: float = 0.05,
    *,
    rel_tol: float = 1e-3,
) -> float:
    """Upper bound on the dephasing time 1/gamma_deph.

    Starting from the converged fit (which must have gamma_deph = 0),
    gamma_deph is increased until the dip visibility at two-photon
    resonance drops by ``visibility_drop`` relative to its baseline; the
    smallest such rate is located by bisection to ``rel_tol`` relative
    and its inverse returned. Raises ModelAssumptionViolated if
    visibility is not monotone non-increasing in gamma_deph.
    """
    if report.params.gamma_deph != 0:
        raise BadInput("dephasing_upper_bound requires a fit with gamma_deph = 0")
    if not 0 < visibility_drop < 1:
        raise BadInput("visibility_drop must be in (0, 1)")
    params = report.params
    fixed = report.fixed
    det = np.asarray(report.detunings_d, dtype=np.float64)
    tail_det = float(np.max(np.abs(det))) if det.size else 10e9
    v0 = _visibility(params, fixed, tail_det)
    if v0 <= 0:
        raise ModelAssumptionViolated("baseline visibility is not positive")
    target = v0 * (1.0 - visibility_drop)

    lo = 0.0
    v_prev = v0
    gamma = 1e-6 * params.gamma_minus
    crossing = None
    for _ in range(80):
        v = _visibility(params.replace(gamma_deph=gamma), fixed, tail_det)
        if v > v_prev + 1e-9 * max(v0, 1.0):
            raise ModelAssumptionViolated(
                "dip visibility increased with dephasing; bisection premise failed"
            )
        if v < target:
            crossing = gamma
            break
        lo = gamma
        v_prev = v
        gamma *= 2.0
    if crossing is None:
        raise ModelAssumptionViolated(
            "visibility never dropped by the requested fraction within the probed range"
        )
    hi = crossing
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        v = _visibility(params.replace(gamma_deph=mid), fixed, tail_det)
        if v < target:
            hi = mid
        else:
            lo = mid
    gamma_star = 0.5 * (lo + hi)
    report.flags["dephasing_bound"] = {
        "gamma_deph": gamma_star,
        "baseline_visibility": v0,
        "visibility_drop": visibility_drop,
    }
    return 1.0 / gamma_star
